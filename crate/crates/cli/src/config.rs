//! Config files (TOML, one section per subcommand) merged with flags.
//! Flags win; unknown sections or keys are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Complex parameter, `{re, im}` in files and `RE` or `RE,IM` on the
/// command line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexArg {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl ComplexArg {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl FromStr for ComplexArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("bad number {x:?}: {e}"));
        match s.split_once(',') {
            Some((re, im)) => Ok(Self { re: parse(re)?, im: parse(im)? }),
            None => Ok(Self { re: parse(s)?, im: 0.0 }),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    pub residual: Option<Value>,
    pub model: Option<Value>,
    pub fiducial: Option<Value>,
    pub glue: Option<Value>,
    pub cohomology: Option<Value>,
    pub metric: Option<Value>,
    pub spectrum: Option<Value>,
    pub graphcont: Option<Value>,
    pub divergence: Option<Value>,
    pub tolerances: Option<Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn section(&self, name: &str) -> Option<&Value> {
        match name {
            "residual" => self.residual.as_ref(),
            "model" => self.model.as_ref(),
            "fiducial" => self.fiducial.as_ref(),
            "glue" => self.glue.as_ref(),
            "cohomology" => self.cohomology.as_ref(),
            "metric" => self.metric.as_ref(),
            "spectrum" => self.spectrum.as_ref(),
            "graphcont" => self.graphcont.as_ref(),
            "divergence" => self.divergence.as_ref(),
            "tolerances" => self.tolerances.as_ref(),
            _ => None,
        }
    }
}

/// Overlays the keys set in `flags` on the file section and validates the
/// result against `T`.
pub fn merge<T: Serialize + DeserializeOwned>(section: &str, file: Option<&Value>, flags: &T) -> CliResult<T> {
    let mut base = match file {
        None => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(CliError::Config(format!("[{section}] must be a table"))),
    };
    if let Value::Object(over) = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))? {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| CliError::Config(format!("[{section}] {e}")))
}

/// `[run]` values with flags taking precedence.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub out: PathBuf,
    pub seed: u64,
    pub cache_dir: PathBuf,
}

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_OUT: &str = "runs";

impl RunSettings {
    pub fn resolve(file: &RunSection, out: Option<PathBuf>, seed: Option<u64>, cache_dir: Option<PathBuf>) -> Self {
        let out = out.or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let cache_dir = match cache_dir.or_else(|| file.cache_dir.clone()) {
            Some(d) => d,
            None => std::env::var_os(hitchin_core::models::CACHE_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| out.join("cache")),
        };
        Self { seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED), out, cache_dir }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<ComplexArg>,
    }

    #[test]
    fn flags_win_and_unknown_keys_fail() {
        let file = FileConfig::parse("[fiducial]\na = 1.0\nb = [1, 2]\nc = { re = 0.5, im = 1 }\n").unwrap();
        let merged: P = merge("fiducial", file.section("fiducial"), &P { a: Some(2.0), ..Default::default() }).unwrap();
        assert_eq!(merged, P { a: Some(2.0), b: Some(vec![1.0, 2.0]), c: Some(ComplexArg { re: 0.5, im: 1.0 }) });
        let bad = FileConfig::parse("[fiducial]\nzzz = 1\n").unwrap();
        assert!(merge::<P>("fiducial", bad.section("fiducial"), &P::default()).is_err());
        assert!(FileConfig::parse("[nonsense]\nx = 1\n").is_err());
        assert!(FileConfig::parse("[run]\nseed = 1\nwhat = 2\n").is_err());
    }

    #[test]
    fn complex_flags() {
        assert_eq!("1".parse::<ComplexArg>().unwrap(), ComplexArg { re: 1.0, im: 0.0 });
        assert_eq!("0.5, -2".parse::<ComplexArg>().unwrap(), ComplexArg { re: 0.5, im: -2.0 });
        assert!("x".parse::<ComplexArg>().is_err());
    }

    #[test]
    fn run_settings_precedence() {
        let file = RunSection { out: Some("a".into()), seed: Some(3), cache_dir: Some("c".into()) };
        let r = RunSettings::resolve(&file, Some("b".into()), None, None);
        assert_eq!((r.out, r.seed, r.cache_dir), (PathBuf::from("b"), 3, PathBuf::from("c")));
    }
}
