//! Closed-form error constants for the set-valued Forward Euler scheme.
//!
//! Each function evaluates one bound verbatim. `L = 0` is accepted (with
//! `e^{LT} = 1`) everywhere except [`bound_controls_path`], whose smoothness
//! term divides by `L`.

use serde::Serialize;

use crate::error::{Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be >= {min}, got {v}")))
    }
}

/// Reachable-set error `max_n H(C_n, D_n) ≤ (K e^{LT}(K d(d+1) + LT) + 2Kd) Δt`.
pub fn bound_reach_sets(k: f64, l: f64, t: f64, d: usize, dt: f64) -> Result<f64> {
    positive("K", k)?;
    nonnegative("L", l)?;
    positive("T", t)?;
    positive("dt", dt)?;
    at_least("d", d, 1)?;
    let d = d as f64;
    let lt = l * t;
    Ok((k * lt.exp() * (k * d * (d + 1.0) + lt) + 2.0 * k * d) * dt)
}

/// Convex-case path error `K L T e^{LT} Δt`.
pub fn bound_convex_path(k: f64, l: f64, t: f64, dt: f64) -> Result<f64> {
    positive("K", k)?;
    nonnegative("L", l)?;
    positive("T", t)?;
    positive("dt", dt)?;
    let lt = l * t;
    Ok(k * lt * lt.exp() * dt)
}

/// Nonconvex path error `K (e^{LT} d(d+1) + 2d + LT e^{LT}) Δt`.
pub fn bound_nonconvex_path(k: f64, l: f64, t: f64, d: usize, dt: f64) -> Result<f64> {
    positive("K", k)?;
    nonnegative("L", l)?;
    positive("T", t)?;
    positive("dt", dt)?;
    at_least("d", d, 1)?;
    let d = d as f64;
    let lt = l * t;
    let e = lt.exp();
    Ok(k * (e * d * (d + 1.0) + 2.0 * d + lt * e) * dt)
}

/// Path error with `M` smooth members, split into its `Δt` and `Δt²` groups:
///
/// ```text
/// (e^{LT}(KLT + K(8M−10)) + 2K(M−1)) Δt
/// + e^{LT}(KL(M−1)(M−2) + 2KL((M−1)³−(M−1))/3 (1+LΔt)^{M−3}
///          + 2SK² M(M−1)(2M−1)/(3L)) Δt²
/// ```
pub fn bound_controls_path(k: f64, l: f64, s: f64, t: f64, m: usize, dt: f64) -> Result<(f64, f64)> {
    positive("K", k)?;
    positive("T", t)?;
    positive("dt", dt)?;
    nonnegative("S", s)?;
    at_least("M", m, 2)?;
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "this bound divides by L; need L > 0, got {l}"
        )));
    }
    let mf = m as f64;
    let e = (l * t).exp();
    let first = (e * (k * l * t + k * (8.0 * mf - 10.0)) + 2.0 * k * (mf - 1.0)) * dt;
    let cubic = (mf - 1.0).powi(3) - (mf - 1.0);
    let second = e
        * (k * l * (mf - 1.0) * (mf - 2.0)
            + 2.0 * k * l * cubic / 3.0 * (1.0 + l * dt).powi(m as i32 - 3)
            + 2.0 * s * k * k * mf * (mf - 1.0) * (2.0 * mf - 1.0) / (3.0 * l))
        * dt
        * dt;
    Ok((first, second))
}

/// Radius `R` in `co(φ^M(x0)) ⊂ ∪_{x ∈ φ(x0)} co(φ^{M−1}(x)) + R B`:
///
/// ```text
/// (8M−10) K L Δt² + (2 K L² ((M−1)³−(M−1))/3 (1+LΔt)^{M−3} + S K² M(M−1)(2M−1)/3) Δt³
/// ```
pub fn coco_radius(k: f64, l: f64, s: f64, m: usize, dt: f64) -> Result<f64> {
    positive("K", k)?;
    nonnegative("L", l)?;
    nonnegative("S", s)?;
    nonnegative("dt", dt)?;
    at_least("M", m, 2)?;
    let mf = m as f64;
    let cubic = (mf - 1.0).powi(3) - (mf - 1.0);
    Ok((8.0 * mf - 10.0) * k * l * dt * dt
        + (2.0 * k * l * l * cubic / 3.0 * (1.0 + l * dt).powi(m as i32 - 3)
            + s * k * k * mf * (mf - 1.0) * (2.0 * mf - 1.0) / 3.0)
            * dt
            * dt
            * dt)
}

/// Radius in `ψ(co(φ^{M−1}(z))) ⊂ co(φ^M(z)) + r B`: `S K² M(M−1)(2M−1)/3 Δt³`.
pub fn psi_hull_radius(k: f64, s: f64, m: usize, dt: f64) -> Result<f64> {
    positive("K", k)?;
    nonnegative("S", s)?;
    nonnegative("dt", dt)?;
    at_least("M", m, 1)?;
    let mf = m as f64;
    Ok(s * k * k * mf * (mf - 1.0) * (2.0 * mf - 1.0) / 3.0 * dt * dt * dt)
}

/// Parameters a [`BoundSheet`] is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
}

/// Every bound evaluated at one parameter set. Entries whose formula is
/// undefined there (e.g. `L = 0` for the few-controls bound, `M = 1` for the
/// hull radius) are `None`. `s_terms_quadratic_in_k` lists the entries that
/// are not degree one in `K`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundSheet {
    pub inputs: BoundInputs,
    pub reach_sets: f64,
    pub convex_path: f64,
    pub nonconvex_path: f64,
    pub controls_path_dt: Option<f64>,
    pub controls_path_dt2: Option<f64>,
    pub coco_radius: Option<f64>,
    pub psi_hull_radius: f64,
    pub s_terms_quadratic_in_k: Vec<&'static str>,
}

impl BoundSheet {
    /// `dt = T / N`.
    pub fn evaluate(k: f64, l: f64, s: f64, t: f64, d: usize, m: usize, n: usize) -> Result<Self> {
        at_least("N", n, 1)?;
        let dt = t / n as f64;
        let controls = if m >= 2 && l > 0.0 {
            Some(bound_controls_path(k, l, s, t, m, dt)?)
        } else {
            None
        };
        let coco = if m >= 2 { Some(coco_radius(k, l, s, m, dt)?) } else { None };
        Ok(Self {
            inputs: BoundInputs {
                k,
                l,
                s,
                t,
                d,
                m,
                n,
                dt,
            },
            reach_sets: bound_reach_sets(k, l, t, d, dt)?,
            convex_path: bound_convex_path(k, l, t, dt)?,
            nonconvex_path: bound_nonconvex_path(k, l, t, d, dt)?,
            controls_path_dt: controls.map(|c| c.0),
            controls_path_dt2: controls.map(|c| c.1),
            coco_radius: coco,
            psi_hull_radius: psi_hull_radius(k, s, m, dt)?,
            s_terms_quadratic_in_k: vec!["reach_sets", "controls_path_dt2", "coco_radius", "psi_hull_radius"],
        })
    }
}
