//! JSON documents for surfaces, quadratic differentials and fields. Field
//! names follow `schema/surface.schema.json` and `schema/field.schema.json`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{HiggsField, UnitaryConnection};
use crate::grid::{CartesianGrid, PolarGrid};
use crate::linalg::M2;
use crate::surface::{build_plumbing, AnnulusChart, Frame, PlumbingSurface, QdChart, QdFrame, QuadraticDifferential, Side};

pub const SURFACE_SCHEMA: &str = include_str!("../schema/surface.schema.json");
pub const FIELD_SCHEMA: &str = include_str!("../schema/field.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexDoc {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexDoc {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ComplexDoc> for Complex64 {
    fn from(z: ComplexDoc) -> Self {
        Complex64::new(z.re, z.im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub r_inner: f64,
    pub r_outer: f64,
    pub n_radial: usize,
    pub n_theta: usize,
    pub ghost: usize,
}

impl From<&PolarGrid> for GridDoc {
    fn from(g: &PolarGrid) -> Self {
        Self { r_inner: g.r_inner(), r_outer: g.r_outer(), n_radial: g.n_radial(), n_theta: g.n_theta(), ghost: g.ghost() }
    }
}

impl GridDoc {
    pub fn to_grid(&self) -> Result<PolarGrid> {
        PolarGrid::new(self.r_inner, self.r_outer, self.n_radial, self.n_theta, self.ghost)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartDoc {
    pub side: Side,
    pub rho: f64,
    pub grid: GridDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QdChartDoc {
    Disk { half_width: f64, n: usize },
    Neck { grid: GridDoc },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QdDoc {
    pub frame: QdFrame,
    pub chart: QdChartDoc,
    pub samples: Vec<ComplexDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceDocument {
    pub genus: u32,
    pub nodes: Vec<ComplexDoc>,
    pub charts: Vec<ChartDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<QdDoc>,
}

pub struct SurfaceParts {
    pub surface: PlumbingSurface,
    pub charts: Vec<AnnulusChart>,
    pub q: Option<QuadraticDifferential>,
}

impl SurfaceDocument {
    pub fn new(surface: &PlumbingSurface, charts: &[AnnulusChart], q: Option<&QuadraticDifferential>) -> Self {
        Self {
            genus: surface.genus(),
            nodes: surface.nodes().iter().map(|n| n.t().into()).collect(),
            charts: charts.iter().map(|c| ChartDoc { side: c.side, rho: c.inner_radius, grid: (&c.grid).into() }).collect(),
            q: q.map(|q| QdDoc {
                frame: q.frame,
                chart: match &q.chart {
                    QdChart::Disk(g) => QdChartDoc::Disk { half_width: g.half_width, n: g.n },
                    QdChart::Neck(g) => QdChartDoc::Neck { grid: g.into() },
                },
                samples: q.values.iter().map(|&v| v.into()).collect(),
            }),
        }
    }

    /// Rebuilds validated domain objects.
    pub fn into_parts(self) -> Result<SurfaceParts> {
        let nodes: Vec<Complex64> = self.nodes.into_iter().map(Into::into).collect();
        let surface = build_plumbing(self.genus as i64, &nodes)?;
        let charts = self
            .charts
            .into_iter()
            .map(|c| {
                let grid = c.grid.to_grid()?;
                if (grid.r_inner() - c.rho).abs() > 1e-15 * c.rho.max(1.0) {
                    return Err(Error::Serde(format!("chart rho {} disagrees with grid inner radius {}", c.rho, grid.r_inner())));
                }
                AnnulusChart::with_grid(c.side, grid)
            })
            .collect::<Result<Vec<_>>>()?;
        let q = match self.q {
            None => None,
            Some(d) => {
                let chart = match d.chart {
                    QdChartDoc::Disk { half_width, n } => QdChart::Disk(CartesianGrid::new(half_width, n)?),
                    QdChartDoc::Neck { grid } => QdChart::Neck(grid.to_grid()?),
                };
                let q = QuadraticDifferential { frame: d.frame, chart, values: d.samples.into_iter().map(Into::into).collect() };
                if q.values.len() != q.lattice().points.len() {
                    return Err(Error::GridMismatch(format!("{} samples for {} lattice points", q.values.len(), q.lattice().points.len())));
                }
                Some(q)
            }
        };
        Ok(SurfaceParts { surface, charts, q })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Connection,
    Higgs,
}

/// A matrix-valued coefficient on a polar grid. Each sample is a 2×2 matrix
/// in row-major order; samples run over all rows of the grid (ghosts
/// included), θ fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDocument {
    pub kind: FieldKind,
    pub frame: Frame,
    pub grid: GridDoc,
    pub samples: Vec<[ComplexDoc; 4]>,
}

fn to_row_major(m: &M2) -> [ComplexDoc; 4] {
    [m[(0, 0)].into(), m[(0, 1)].into(), m[(1, 0)].into(), m[(1, 1)].into()]
}

fn from_row_major(s: &[ComplexDoc; 4]) -> M2 {
    M2::new(s[0].into(), s[1].into(), s[2].into(), s[3].into())
}

impl FieldDocument {
    pub fn connection(a: &UnitaryConnection) -> Self {
        Self { kind: FieldKind::Connection, frame: a.frame(), grid: a.grid().into(), samples: a.coefficient().iter().map(to_row_major).collect() }
    }

    pub fn higgs(phi: &HiggsField) -> Self {
        Self { kind: FieldKind::Higgs, frame: phi.frame(), grid: phi.grid().into(), samples: phi.coefficient().iter().map(to_row_major).collect() }
    }

    fn expect(&self, kind: FieldKind) -> Result<(PolarGrid, Vec<M2>)> {
        if self.kind != kind {
            return Err(Error::Serde(format!("expected a {kind:?} document, found {:?}", self.kind)));
        }
        Ok((self.grid.to_grid()?, self.samples.iter().map(from_row_major).collect()))
    }

    pub fn into_connection(&self) -> Result<UnitaryConnection> {
        let (grid, a) = self.expect(FieldKind::Connection)?;
        UnitaryConnection::new(grid, self.frame, a)
    }

    pub fn into_higgs(&self) -> Result<HiggsField> {
        let (grid, phi) = self.expect(FieldKind::Higgs)?;
        HiggsField::new(grid, self.frame, phi)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model_pair, ModelParameters};

    use serde_json::Value;

    // Covers the keywords the shipped schemas use.
    fn conforms(root: &Value, schema: &Value, doc: &Value) -> bool {
        if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
            let name = r.trim_start_matches("#/$defs/");
            return conforms(root, &root["$defs"][name], doc);
        }
        if let Some(options) = schema.get("oneOf").and_then(Value::as_array) {
            return options.iter().filter(|o| conforms(root, o, doc)).count() == 1;
        }
        if let Some(c) = schema.get("const") {
            return c == doc;
        }
        if let Some(e) = schema.get("enum").and_then(Value::as_array) {
            return e.contains(doc);
        }
        let num = |k: &str| schema.get(k).and_then(Value::as_f64);
        match schema.get("type").and_then(Value::as_str) {
            Some("object") => {
                let Some(obj) = doc.as_object() else { return false };
                let props = schema["properties"].as_object().unwrap();
                let required = schema.get("required").and_then(Value::as_array).cloned().unwrap_or_default();
                required.iter().all(|k| obj.contains_key(k.as_str().unwrap()))
                    && obj.iter().all(|(k, v)| props.get(k).is_some_and(|p| conforms(root, p, v)))
            }
            Some("array") => {
                let Some(items) = doc.as_array() else { return false };
                num("minItems").is_none_or(|m| items.len() as f64 >= m)
                    && num("maxItems").is_none_or(|m| items.len() as f64 <= m)
                    && items.iter().all(|v| conforms(root, &schema["items"], v))
            }
            Some(t @ ("number" | "integer")) => {
                let Some(x) = doc.as_f64() else { return false };
                (t == "number" || doc.is_u64() || doc.is_i64())
                    && num("minimum").is_none_or(|m| x >= m)
                    && num("exclusiveMinimum").is_none_or(|m| x > m)
                    && num("exclusiveMaximum").is_none_or(|m| x < m)
            }
            _ => true,
        }
    }

    fn validate(schema: &str, doc: &Value) -> bool {
        let schema: Value = serde_json::from_str(schema).unwrap();
        conforms(&schema, &schema, doc)
    }

    fn sample_surface() -> SurfaceDocument {
        let surface = build_plumbing(2, &[Complex64::new(0.1, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        let charts = surface.neck_charts(0, 32, 16, 3.0).unwrap();
        let q = QuadraticDifferential::from_fn(QdFrame::Dz2, QdChart::Disk(CartesianGrid::new(1.0, 17).unwrap()), |z| -z);
        SurfaceDocument::new(&surface, &[charts.0, charts.1], Some(&q))
    }

    #[test]
    fn surface_round_trip_and_schema() {
        let doc = sample_surface();
        let json = doc.to_json().unwrap();
        assert!(validate(SURFACE_SCHEMA, &serde_json::from_str(&json).unwrap()));
        let back = SurfaceDocument::from_json(&json).unwrap();
        assert_eq!(back, doc);
        let parts = back.into_parts().unwrap();
        assert_eq!(parts.surface.r(), 0.010000000000000002);
        assert_eq!(parts.charts.len(), 2);
        assert_eq!(parts.q.unwrap().values.len(), 17 * 17);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sample_surface().to_json().unwrap()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(!validate(SURFACE_SCHEMA, &v));
        assert!(SurfaceDocument::from_json(&v.to_string()).is_err());
        let mut doc = sample_surface();
        doc.genus = 1;
        assert!(matches!(doc.into_parts(), Err(Error::InvalidGenus(1))));
        let mut doc = sample_surface();
        doc.q.as_mut().unwrap().samples.pop();
        assert!(matches!(doc.into_parts(), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn field_round_trip_and_schema() {
        let params = ModelParameters::new(0.3, Complex64::new(0.5, -0.2)).unwrap();
        let chart = AnnulusChart::new(Side::Plus, 0.1, 32, 16).unwrap();
        let pair = model_pair(params, &chart).unwrap();
        for doc in [FieldDocument::connection(&pair.connection), FieldDocument::higgs(&pair.higgs)] {
            let json = doc.to_json().unwrap();
            assert!(validate(FIELD_SCHEMA, &serde_json::from_str(&json).unwrap()));
            assert_eq!(FieldDocument::from_json(&json).unwrap(), doc);
        }
        let a = FieldDocument::connection(&pair.connection).into_connection().unwrap();
        assert_eq!(a.coefficient(), pair.connection.coefficient());
        assert_eq!(a.frame(), Frame::DzOverZ);
        let phi = FieldDocument::higgs(&pair.higgs).into_higgs().unwrap();
        assert_eq!(phi.coefficient(), pair.higgs.coefficient());
        assert!(FieldDocument::higgs(&pair.higgs).into_connection().is_err());
    }
}
