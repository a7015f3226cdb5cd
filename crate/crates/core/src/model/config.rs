use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{benchmark, AffineFamily, Constants, ControlFamily, ProblemSpec};
use crate::error::{Error, Result};
use crate::geometry::Vector;

/// Problem document, accepted as JSON or TOML.
///
/// Either `benchmark` names a registered problem (with optional `x0` / `T`
/// overrides) or the affine family is given in full: `b` is `M` vectors of
/// length `dim`, `A` is `M` row-major `dim × dim` matrices, and members are
/// `f_i(x) = b_i + A_i (x − anchor)` with `anchor` defaulting to `x0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    /// Full config echoing an affine problem; `None` for code-registered
    /// nonlinear families.
    pub fn from_problem(p: &ProblemSpec) -> Option<Self> {
        let fam = p.family.affine_payload()?;
        let c = p.family.constants();
        let d = fam.dim();
        Some(Self {
            benchmark: None,
            label: Some(p.label().to_string()),
            dim: Some(d),
            m: Some(fam.m()),
            b: Some(fam.b.clone()),
            a: Some(
                fam.a
                    .iter()
                    .map(|a| (0..d).map(|r| (0..d).map(|c| a[(r, c)]).collect()).collect())
                    .collect(),
            ),
            anchor: Some(fam.anchor.clone()),
            x0: Some(p.x0.coords().to_vec()),
            horizon: Some(p.horizon),
            k: Some(c.k),
            l: Some(c.l),
            s: Some(c.s),
        })
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        if let Some(name) = &self.benchmark {
            let mut p = benchmark(name)?;
            let x0 = match &self.x0 {
                Some(x) => Vector::new(x.clone())?,
                None => p.x0.clone(),
            };
            let t = self.horizon.unwrap_or(p.horizon);
            p = ProblemSpec::new(p.family, x0, t)?;
            return Ok(p);
        }
        let missing = |f: &str| Error::Config(format!("missing field `{f}` (or name a `benchmark`)"));
        let d = self.dim.ok_or_else(|| missing("dim"))?;
        let m = self.m.ok_or_else(|| missing("M"))?;
        if d < 1 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        if m < 1 {
            return Err(Error::Config("M must be >= 1".into()));
        }
        let b = self.b.clone().ok_or_else(|| missing("b"))?;
        let a_rows = self.a.as_ref().ok_or_else(|| missing("A"))?;
        if b.len() != m || a_rows.len() != m {
            return Err(Error::Config(format!(
                "M = {m} but got {} vectors b and {} matrices A",
                b.len(),
                a_rows.len()
            )));
        }
        let mut a = Vec::with_capacity(m);
        for (i, rows) in a_rows.iter().enumerate() {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("A[{i}] is not a {d}x{d} matrix")));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            a.push(DMatrix::from_row_slice(d, d, &flat));
        }
        let x0 = Vector::new(self.x0.clone().ok_or_else(|| missing("x0"))?)
            .map_err(|e| Error::Config(format!("x0: {e}")))?;
        if x0.dim() != d {
            return Err(Error::Config(format!("x0 has length {}, expected {d}", x0.dim())));
        }
        let anchor = self.anchor.clone().unwrap_or_else(|| x0.coords().to_vec());
        let fam = AffineFamily::new(b, a, anchor)?;
        let constants = Constants::new(
            self.k.ok_or_else(|| missing("K"))?,
            self.l.ok_or_else(|| missing("L"))?,
            self.s.unwrap_or(0.0),
        )?;
        let label = self.label.clone().unwrap_or_else(|| "affine".to_string());
        let family = ControlFamily::affine_with_s(label, fam, constants)?;
        ProblemSpec::new(family, x0, self.horizon.ok_or_else(|| missing("T"))?)
    }
}

/// Parse a JSON or TOML problem document.
pub fn load_problem(text: &str) -> Result<ProblemSpec> {
    ProblemConfig::parse(text)?.build()
}
