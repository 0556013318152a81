//! On-disk cache of solved fiducial profiles.
//!
//! Each profile is a JSON document holding a header and the `(r, h)` table.
//! Writes go to a temporary file in the same directory and are renamed into
//! place, so concurrent writers never leave a torn file (last writer wins).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::fiducial::{fiducial_profile_with, FiducialOptions, FiducialProfile, ODE_FINGERPRINT, POLE_COEFFICIENT};
use crate::error::{Error, Result};

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "HITCHIN_CACHE_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileHeader {
    pub t: f64,
    pub tolerance: f64,
    pub pole_coefficient: f64,
    pub ode_fingerprint: String,
    pub r_max: f64,
    pub s0: f64,
    pub ds: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub header: ProfileHeader,
    /// `(r, h)` at the solver nodes.
    pub table: Vec<(f64, f64)>,
}

impl ProfileDocument {
    pub fn from_profile(profile: &FiducialProfile, r_max: f64) -> Self {
        Self {
            header: ProfileHeader {
                t: crate::models::RadialProfile::t(profile),
                tolerance: profile.tolerance(),
                pole_coefficient: profile.pole_coefficient(),
                ode_fingerprint: ODE_FINGERPRINT.to_string(),
                r_max,
                s0: profile.s0(),
                ds: profile.ds(),
                nodes: profile.values().len(),
            },
            table: profile.table(),
        }
    }

    pub fn into_profile(self) -> Result<FiducialProfile> {
        let h = &self.header;
        if h.ode_fingerprint != ODE_FINGERPRINT || h.pole_coefficient != POLE_COEFFICIENT {
            return Err(Error::Serde("cached profile was produced by a different equation".into()));
        }
        if self.table.len() != h.nodes {
            return Err(Error::Serde("cached profile table length does not match header".into()));
        }
        FiducialProfile::from_table(h.t, h.s0, h.ds, self.table.into_iter().map(|(_, v)| v).collect(), h.tolerance)
    }
}

#[derive(Clone, Debug)]
pub struct ProfileCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ProfileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Uses `$HITCHIN_CACHE_DIR` if set, else `fallback`.
    pub fn from_env(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, t: f64, r_max: f64, options: &FiducialOptions) -> PathBuf {
        let step = options.step.map(|s| format!("_step{s:.6e}")).unwrap_or_default();
        self.dir.join(format!("fiducial_t{t:.12e}_rmax{r_max:.6e}_tol{:.3e}{step}.json", options.tolerance))
    }

    pub fn load(&self, t: f64, r_max: f64, options: &FiducialOptions) -> Result<Option<FiducialProfile>> {
        let path = self.path_for(t, r_max, options);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let doc: ProfileDocument = serde_json::from_str(&text)?;
        if doc.header.t != t || doc.header.tolerance != options.tolerance || doc.header.r_max != r_max {
            return Ok(None);
        }
        doc.into_profile().map(Some)
    }

    pub fn store(&self, profile: &FiducialProfile, r_max: f64, options: &FiducialOptions) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let t = crate::models::RadialProfile::t(profile);
        let path = self.path_for(t, r_max, options);
        let doc = ProfileDocument::from_profile(profile, r_max);
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("profile"),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, serde_json::to_vec(&doc)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Returns the cached profile, solving and storing it on a miss. A
    /// corrupt cache entry is replaced.
    pub fn get_or_solve(&self, t: f64, r_max: f64, options: FiducialOptions) -> Result<FiducialProfile> {
        if let Ok(Some(p)) = self.load(t, r_max, &options) {
            return Ok(p);
        }
        let profile = fiducial_profile_with(t, r_max, options)?;
        self.store(&profile, r_max, &options)?;
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RadialProfile;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ProfileCache::new(dir.path());
        let opts = FiducialOptions { tolerance: 1e-6, ..Default::default() };
        let solved = cache.get_or_solve(2.0, 1.0, opts).unwrap();
        let loaded = cache.load(2.0, 1.0, &opts).unwrap().unwrap();
        assert_eq!(solved.values(), loaded.values());
        for s in [-3.0, -1.0, 0.0] {
            assert_eq!(solved.eval(s), loaded.eval(s));
        }
        assert!(cache.load(3.0, 1.0, &opts).unwrap().is_none());
    }

    #[test]
    fn corrupt_entries_are_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ProfileCache::new(dir.path());
        let opts = FiducialOptions { tolerance: 1e-6, ..Default::default() };
        fs::write(cache.path_for(1.0, 1.0, &opts), "{not json").unwrap();
        assert!(cache.load(1.0, 1.0, &opts).is_err());
        let p = cache.get_or_solve(1.0, 1.0, opts).unwrap();
        assert_eq!(cache.load(1.0, 1.0, &opts).unwrap().unwrap().values(), p.values());
    }

    #[test]
    fn concurrent_writers_leave_a_valid_file() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ProfileCache::new(dir.path());
        let opts = FiducialOptions { tolerance: 1e-4, ..Default::default() };
        let profile = fiducial_profile_with(1.5, 1.0, opts).unwrap();
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| cache.store(&profile, 1.0, &opts).unwrap());
            }
        });
        let loaded = cache.load(1.5, 1.0, &opts).unwrap().unwrap();
        assert_eq!(loaded.values(), profile.values());
        let leftovers = fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp")).count();
        assert_eq!(leftovers, 0);
    }
}
