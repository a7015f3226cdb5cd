//! Finite set-valued right-hand sides `F(x) = {f_1(x), …, f_M(x)}`.
//!
//! A [`ControlFamily`] carries its members, their Jacobians, and the declared
//! constants `K` (velocity bound), `L` (Jacobian / Hausdorff-Lipschitz bound)
//! and `S` (second-order Taylor constant). The constants are supplied, not
//! derived; [`validate_constants`] audits them by deterministic sampling.

mod audit;
mod config;
mod registry;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use audit::{validate_constants, ConstantsReport, Violation};
pub use config::{load_problem, ProblemConfig};
pub use registry::{benchmark, BENCHMARKS};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vector};

/// A smooth map R^d → R^d with its Jacobian.
pub trait VectorField: Send + Sync {
    fn eval(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// `f(x) = b + A(x − anchor)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineField {
    pub b: Vec<f64>,
    pub a: DMatrix<f64>,
    pub anchor: Vec<f64>,
}

impl VectorField for AffineField {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.b.len();
        for r in 0..d {
            let mut acc = self.b[r];
            for c in 0..d {
                acc += self.a[(r, c)] * (x[c] - self.anchor[c]);
            }
            out[r] = acc;
        }
    }

    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// A field given by closures.
pub struct FnField<E, J> {
    eval: E,
    jac: J,
}

impl<E, J> FnField<E, J>
where
    E: Fn(&[f64], &mut [f64]) + Send + Sync,
    J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    pub fn new(eval: E, jac: J) -> Self {
        Self { eval, jac }
    }
}

impl<E, J> VectorField for FnField<E, J>
where
    E: Fn(&[f64], &mut [f64]) + Send + Sync,
    J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.jac)(x)
    }
}

/// Declared bounds: `|f_i| ≤ K`, `|f_i'| ≤ L`, Taylor defect `≤ S|x − z|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

impl Constants {
    pub fn new(k: f64, l: f64, s: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidArgument(format!("K must be positive, got {k}")));
        }
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::InvalidArgument(format!("L must be nonnegative, got {l}")));
        }
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("S must be nonnegative, got {s}")));
        }
        Ok(Self { k, l, s })
    }
}

/// Payload for a family of affine members `f_i(x) = b_i + A_i(x − x_0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFamily {
    pub b: Vec<Vec<f64>>,
    pub a: Vec<DMatrix<f64>>,
    pub anchor: Vec<f64>,
}

impl AffineFamily {
    pub fn new(b: Vec<Vec<f64>>, a: Vec<DMatrix<f64>>, anchor: Vec<f64>) -> Result<Self> {
        let m = b.len();
        if m < 1 {
            return Err(Error::Config("family needs M >= 1 members".into()));
        }
        let d = anchor.len();
        if d < 1 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        if a.len() != m {
            return Err(Error::Config(format!("{m} vectors b but {} matrices A", a.len())));
        }
        for (i, (bi, ai)) in b.iter().zip(&a).enumerate() {
            if bi.len() != d {
                return Err(Error::Config(format!("b[{i}] has length {}, expected {d}", bi.len())));
            }
            if ai.nrows() != d || ai.ncols() != d {
                return Err(Error::Config(format!(
                    "A[{i}] is {}x{}, expected {d}x{d}",
                    ai.nrows(),
                    ai.ncols()
                )));
            }
            if bi.iter().chain(ai.iter()).chain(anchor.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("member {i} has non-finite entries")));
            }
        }
        Ok(Self { b, a, anchor })
    }

    /// Constant fields `f_i ≡ b_i`.
    pub fn constant(b: Vec<Vec<f64>>) -> Result<Self> {
        let d = b.first().map(Vec::len).unwrap_or(0);
        let a = vec![DMatrix::zeros(d, d); b.len()];
        Self::new(b, a, vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }
}

/// The set-valued map `F(x) = {f_1(x), …, f_M(x)}` with certified constants.
#[derive(Clone)]
pub struct ControlFamily {
    label: String,
    dim: usize,
    members: Vec<Arc<dyn VectorField>>,
    constants: Constants,
    affine: Option<AffineFamily>,
}

impl fmt::Debug for ControlFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlFamily")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("m", &self.members.len())
            .field("constants", &self.constants)
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

impl ControlFamily {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        members: Vec<Arc<dyn VectorField>>,
        constants: Constants,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if members.is_empty() {
            return Err(Error::InvalidArgument("family needs M >= 1 members".into()));
        }
        Ok(Self {
            label: label.into(),
            dim,
            members,
            constants,
            affine: None,
        })
    }

    /// Affine family; `S` is exactly zero.
    pub fn affine(label: impl Into<String>, fam: AffineFamily, k: f64, l: f64) -> Result<Self> {
        Self::affine_with_s(label, fam, Constants::new(k, l, 0.0)?)
    }

    pub(crate) fn affine_with_s(label: impl Into<String>, fam: AffineFamily, constants: Constants) -> Result<Self> {
        let members = fam
            .b
            .iter()
            .zip(&fam.a)
            .map(|(b, a)| {
                Arc::new(AffineField {
                    b: b.clone(),
                    a: a.clone(),
                    anchor: fam.anchor.clone(),
                }) as Arc<dyn VectorField>
            })
            .collect();
        let mut out = Self::new(label, fam.dim(), members, constants)?;
        out.affine = Some(fam);
        Ok(out)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    pub fn k(&self) -> f64 {
        self.constants.k
    }

    pub fn l(&self) -> f64 {
        self.constants.l
    }

    pub fn s(&self) -> f64 {
        self.constants.s
    }

    pub fn affine_payload(&self) -> Option<&AffineFamily> {
        self.affine.as_ref()
    }

    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = constants;
        self
    }

    /// `f_i(x)` written into `out`.
    pub fn eval_member(&self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let f = self.members.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            m: self.m(),
        })?;
        f.eval(x, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteMember {
                label: self.label.clone(),
                index: i,
            });
        }
        Ok(())
    }

    pub fn jacobian(&self, i: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let f = self.members.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            m: self.m(),
        })?;
        Ok(f.jacobian(x))
    }
}

/// `{f_1(x), …, f_M(x)}` in member order.
pub fn eval_family(fam: &ControlFamily, x: &[f64]) -> Result<PointCloud> {
    crate::geometry::check_dims(fam.dim(), x.len())?;
    let d = fam.dim();
    let mut data = vec![0.0; d * fam.m()];
    for (i, out) in data.chunks_exact_mut(d).enumerate() {
        fam.eval_member(i, x, out)?;
    }
    PointCloud::from_flat(d, data)
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    /// The cube `[-r, r]^d`.
    pub fn centered_cube(d: usize, r: f64) -> Self {
        Self {
            lo: vec![-r; d],
            hi: vec![r; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Smallest half-width over axes, measured from the origin.
    pub fn inner_radius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (-l).min(*h))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A differential inclusion `x' ∈ F(x)`, `x(0) = x0` on `[0, T]`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub family: ControlFamily,
    pub x0: Vector,
    pub horizon: f64,
    pub validation_box: BoxRegion,
}

impl ProblemSpec {
    /// Builds the problem with the cube of half-width `|x0| + K·T`, which
    /// contains every solution.
    pub fn new(family: ControlFamily, x0: Vector, horizon: f64) -> Result<Self> {
        crate::geometry::check_dims(family.dim(), x0.dim())?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon T must be positive, got {horizon}")));
        }
        let r = x0.norm() + family.k() * horizon;
        let validation_box = BoxRegion::centered_cube(family.dim(), r);
        Ok(Self {
            family,
            x0,
            horizon,
            validation_box,
        })
    }

    pub fn with_box(mut self, b: BoxRegion) -> Result<Self> {
        crate::geometry::check_dims(self.family.dim(), b.dim())?;
        let need = self.x0.norm() + self.family.k() * self.horizon;
        if b.inner_radius() < need {
            return Err(Error::InvalidArgument(format!(
                "validation box must contain the ball of radius |x0| + K T = {need}"
            )));
        }
        self.validation_box = b;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn label(&self) -> &str {
        self.family.label()
    }
}
