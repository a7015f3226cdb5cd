use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{eval_family, BoxRegion, Constants, ControlFamily};
use crate::error::{Error, Result};
use crate::geometry::{check_dims, dist, hausdorff_finite, norm};

const SLACK: f64 = 1e-9;
const POWER_ITERATIONS: usize = 50;
const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub constant: &'static str,
    pub observed: f64,
    pub declared: f64,
}

/// Outcome of a sampled audit of `K`, `L`, `S`.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantsReport {
    pub label: String,
    pub samples: usize,
    pub declared: Constants,
    pub max_velocity: f64,
    pub max_jacobian_norm: f64,
    pub max_taylor_ratio: f64,
    pub max_hausdorff_lipschitz_ratio: f64,
    pub violations: Vec<Violation>,
}

impl ConstantsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Radical inverse of `index` in `base` (van der Corput).
fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base as u64) as f64 * inv;
        index /= base as u64;
        inv /= b;
    }
    out
}

fn halton_in_box(index: u64, first_base: usize, bx: &BoxRegion) -> Vec<f64> {
    bx.lo
        .iter()
        .zip(&bx.hi)
        .enumerate()
        .map(|(j, (lo, hi))| lo + (hi - lo) * radical_inverse(index, PRIMES[first_base + j]))
        .collect()
}

/// Largest singular value by power iteration on `JᵀJ`.
fn operator_norm(j: &DMatrix<f64>) -> f64 {
    let n = j.ncols();
    let mut v = DVector::from_fn(n, |i, _| 1.0 / (i + 1) as f64);
    v /= v.norm();
    let jtj = j.transpose() * j;
    for _ in 0..POWER_ITERATIONS {
        let w = &jtj * &v;
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
    }
    (j * v).norm()
}

/// Audit the declared constants of `fam` on `samples` deterministic Halton
/// points (and point pairs at dyadic scales) inside `bx`.
///
/// Checks `|f_i| ≤ K`, `|f_i'| ≤ L`, the Taylor defect
/// `|f_i(x) − f_i(z) − f_i'(z)(x − z)| ≤ S|x − z|²`, and the set-valued
/// Lipschitz property `H(F(x), F(z)) ≤ L|x − z|`. Affine families have an
/// identically zero Taylor defect, which is reported as such.
pub fn validate_constants(fam: &ControlFamily, bx: &BoxRegion, samples: usize) -> Result<ConstantsReport> {
    check_dims(fam.dim(), bx.dim())?;
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {samples}")));
    }
    let d = fam.dim();
    if 2 * d > PRIMES.len() {
        return Err(Error::InvalidArgument(format!("audit supports d <= {}", PRIMES.len() / 2)));
    }
    let affine = fam.affine_payload().is_some();
    let mut max_velocity = 0.0f64;
    let mut max_jac = 0.0f64;
    let mut max_taylor = 0.0f64;
    let mut max_lip = 0.0f64;
    let mut fx = vec![0.0; d];
    let mut fz = vec![0.0; d];

    for k in 1..=samples as u64 {
        let xs = halton_in_box(k, 0, bx);
        let z = halton_in_box(k, d, bx);
        // shrink the pair toward z to probe small separations as well
        let shrink = 0.5f64.powi((k % 12) as i32);
        let x: Vec<f64> = xs.iter().zip(&z).map(|(a, b)| b + (a - b) * shrink).collect();
        let sep = dist(&x, &z);

        for i in 0..fam.m() {
            fam.eval_member(i, &xs, &mut fx)?;
            max_velocity = max_velocity.max(norm(&fx));
            max_jac = max_jac.max(operator_norm(&fam.jacobian(i, &xs)?));

            if !affine && sep > 0.0 {
                fam.eval_member(i, &x, &mut fx)?;
                fam.eval_member(i, &z, &mut fz)?;
                let jz = fam.jacobian(i, &z)?;
                let h = DVector::from_fn(d, |r, _| x[r] - z[r]);
                let lin = jz * h;
                let defect: f64 = (0..d)
                    .map(|r| {
                        let e = fx[r] - fz[r] - lin[r];
                        e * e
                    })
                    .sum::<f64>()
                    .sqrt();
                max_taylor = max_taylor.max(defect / (sep * sep));
            }
        }
        if sep > 0.0 {
            let h = hausdorff_finite(&eval_family(fam, &x)?, &eval_family(fam, &z)?)?;
            max_lip = max_lip.max(h / sep);
        }
    }

    let c = fam.constants();
    let mut violations = Vec::new();
    for (name, observed, declared) in [
        ("K", max_velocity, c.k),
        ("L", max_jac, c.l),
        ("S", max_taylor, c.s),
        ("L (Hausdorff)", max_lip, c.l),
    ] {
        if observed > declared + SLACK {
            violations.push(Violation {
                constant: name,
                observed,
                declared,
            });
        }
    }
    Ok(ConstantsReport {
        label: fam.label().to_string(),
        samples,
        declared: c,
        max_velocity,
        max_jacobian_norm: max_jac,
        max_taylor_ratio: max_taylor,
        max_hausdorff_lipschitz_ratio: max_lip,
        violations,
    })
}
