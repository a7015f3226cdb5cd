use std::sync::Arc;

use nalgebra::DMatrix;

use super::{AffineFamily, Constants, ControlFamily, FnField, ProblemSpec, VectorField};
use crate::error::{Error, Result};
use crate::geometry::Vector;

/// Names accepted by [`benchmark`].
pub const BENCHMARKS: &[&str] = &["signs1d", "rotation2d", "affine2d"];

/// Code-registered benchmark problems, all on `[0, 1]`.
///
/// * `signs1d`: `F(x) = {−1, +1}` in 1D from `x0 = 0`; `K = 1`, `L = S = 0`.
/// * `rotation2d`: `f_1(x) = (−x_2, x_1)/(1 + |x|)`, `f_2 = −f_1`, from
///   `x0 = (1, 0)`; `K = 1`, `L = 1`, `S = 2`.
/// * `affine2d`: three affine members in 2D (so `M = d + 1`), from the origin;
///   `K = 3.5`, `L = 0.5`, `S = 0`. `K` covers the validation cube of
///   half-width `K·T`, corners included.
pub fn benchmark(name: &str) -> Result<ProblemSpec> {
    match name {
        "signs1d" => signs1d(),
        "rotation2d" => rotation2d(),
        "affine2d" => affine2d(),
        _ => Err(Error::UnknownBenchmark {
            name: name.to_string(),
            available: BENCHMARKS.join(", "),
        }),
    }
}

fn signs1d() -> Result<ProblemSpec> {
    let fam = AffineFamily::constant(vec![vec![-1.0], vec![1.0]])?;
    let family = ControlFamily::affine("signs1d", fam, 1.0, 0.0)?;
    ProblemSpec::new(family, Vector::new(vec![0.0])?, 1.0)
}

fn rotation_field(sign: f64) -> Arc<dyn VectorField> {
    Arc::new(FnField::new(
        move |x: &[f64], out: &mut [f64]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let s = sign / (1.0 + r);
            out[0] = -x[1] * s;
            out[1] = x[0] * s;
        },
        move |x: &[f64]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
            let mut jac = &rot / (1.0 + r);
            if r > 0.0 {
                // − (R x) xᵀ / (r (1 + r)²)
                let rx = [-x[1], x[0]];
                let c = 1.0 / (r * (1.0 + r) * (1.0 + r));
                for i in 0..2 {
                    for j in 0..2 {
                        jac[(i, j)] -= c * rx[i] * x[j];
                    }
                }
            }
            jac * sign
        },
    ))
}

fn rotation2d() -> Result<ProblemSpec> {
    let family = ControlFamily::new(
        "rotation2d",
        2,
        vec![rotation_field(1.0), rotation_field(-1.0)],
        Constants::new(1.0, 1.0, 2.0)?,
    )?;
    ProblemSpec::new(family, Vector::new(vec![1.0, 0.0])?, 1.0)
}

fn affine2d() -> Result<ProblemSpec> {
    let b = vec![vec![1.0, 0.0], vec![-0.5, 0.8], vec![-0.5, -0.8]];
    let a = vec![
        DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]),
        DMatrix::from_row_slice(2, 2, &[-0.4, 0.0, 0.0, 0.3]),
        DMatrix::from_row_slice(2, 2, &[0.15, 0.35, 0.0, -0.25]),
    ];
    let fam = AffineFamily::new(b, a, vec![0.0, 0.0])?;
    let family = ControlFamily::affine("affine2d", fam, 3.5, 0.5)?;
    ProblemSpec::new(family, Vector::new(vec![0.0, 0.0])?, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signs1d_constants() {
        let p = benchmark("signs1d").unwrap();
        assert_eq!((p.dim(), p.family.m()), (1, 2));
        let c = p.family.constants();
        assert_eq!((c.k, c.l, c.s), (1.0, 0.0, 0.0));
    }

    #[test]
    fn unknown_benchmark_lists_names() {
        let err = benchmark("foo").unwrap_err().to_string();
        for n in BENCHMARKS {
            assert!(err.contains(n), "{err}");
        }
    }

    #[test]
    fn affine2d_has_enough_members() {
        let p = benchmark("affine2d").unwrap();
        assert!(p.family.m() >= p.dim() + 1);
        let fam = p.family.affine_payload().unwrap();
        for a in &fam.a {
            assert!(a.clone().svd(false, false).singular_values.max() <= p.family.l() + 1e-12);
        }
    }

    #[test]
    fn rotation_jacobian_matches_finite_differences() {
        let p = benchmark("rotation2d").unwrap();
        let h = 1e-6;
        for x in [[0.3, -0.7], [1.2, 0.4], [-0.05, 0.02]] {
            let jac = p.family.jacobian(0, &x).unwrap();
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let (mut fp, mut fm) = ([0.0; 2], [0.0; 2]);
                p.family.eval_member(0, &xp, &mut fp).unwrap();
                p.family.eval_member(0, &xm, &mut fm).unwrap();
                for i in 0..2 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((fd - jac[(i, j)]).abs() < 1e-7, "x={x:?} ({i},{j})");
                }
            }
        }
    }
}
