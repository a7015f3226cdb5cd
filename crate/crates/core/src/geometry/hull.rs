//! Distance from a point to the convex hull of a finite set.
//!
//! Wolfe's minimum-norm-point method on the translated generators
//! `v_j − p`. Each major step adds the generator minimizing `⟨x, v_j − p⟩`
//! (the one most aligned with the residual `p − x`); minor steps move to the
//! affine minimizer of the active set, dropping generators whose weight would
//! turn negative. The stopping rule certifies the answer: with
//! `lb = min_j ⟨x, v_j − p⟩ / |x|` every hull point is at distance `≥ lb`,
//! and we stop once `|x| − lb ≤ tol`.

use nalgebra::{DMatrix, DVector};

use super::{check_dims, dot, norm, PointCloud};
use crate::error::{Error, Result};

pub const DEFAULT_HULL_TOL: f64 = 1e-9;

const WEIGHT_EPS: f64 = 1e-14;

/// Nearest point of `co(support)` to a query, with the convex weights that
/// realize it.
#[derive(Clone, Debug)]
pub struct HullProjection {
    pub distance: f64,
    pub nearest: Vec<f64>,
    /// `(support index, weight)`, weights positive and summing to one.
    pub weights: Vec<(usize, f64)>,
    /// Certified lower bound on the true distance.
    pub lower_bound: f64,
    pub iterations: usize,
}

pub fn dist_point_to_hull(p: &[f64], support: &PointCloud, tol: f64) -> Result<f64> {
    dist_point_to_hull_with(p, support, tol).map(|h| h.distance)
}

pub fn dist_point_to_hull_with(p: &[f64], support: &PointCloud, tol: f64) -> Result<HullProjection> {
    check_dims(support.dim(), p.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("hull tolerance must be positive, got {tol}")));
    }
    let d = support.dim();
    let n = support.len();
    let shifted: Vec<f64> = support
        .iter()
        .flat_map(|v| v.iter().zip(p).map(|(a, b)| a - b))
        .collect();
    let pt = |j: usize| &shifted[j * d..(j + 1) * d];

    let cap = 10 * (d + 2) * (d + 2);
    let j0 = (0..n)
        .min_by(|&a, &b| norm(pt(a)).total_cmp(&norm(pt(b))))
        .expect("non-empty cloud");
    let mut active = vec![j0];
    let mut w = vec![1.0];
    let mut x = pt(j0).to_vec();

    let mut iterations = 0;
    loop {
        let xnorm = norm(&x);
        let (j, score) = (0..n)
            .map(|j| (j, dot(&x, pt(j))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty cloud");
        let lower_bound = if xnorm > 0.0 { (score / xnorm).max(0.0) } else { 0.0 };
        if xnorm <= tol || xnorm - lower_bound <= tol {
            let nearest = x.iter().zip(p).map(|(a, b)| a + b).collect();
            return Ok(HullProjection {
                distance: xnorm,
                nearest,
                weights: active.into_iter().zip(w).collect(),
                lower_bound,
                iterations,
            });
        }
        iterations += 1;
        if iterations > cap {
            return Err(Error::NoConvergence {
                iterations: cap,
                best: xnorm,
            });
        }

        if active.contains(&j) {
            // Affine solve stalled numerically: fall back to an exact line
            // search from x toward the most aligned generator.
            let dir: Vec<f64> = pt(j).iter().zip(&x).map(|(a, b)| a - b).collect();
            let dd = dot(&dir, &dir);
            if dd == 0.0 {
                return Err(Error::NoConvergence {
                    iterations,
                    best: xnorm,
                });
            }
            let gamma = (-dot(&x, &dir) / dd).clamp(0.0, 1.0);
            for wi in w.iter_mut() {
                *wi *= 1.0 - gamma;
            }
            let pos = active.iter().position(|&a| a == j).unwrap();
            w[pos] += gamma;
            x = combine(&active, &w, &pt, d);
            continue;
        }

        active.push(j);
        w.push(0.0);
        // minor cycles
        loop {
            let alpha = affine_minimizer(&active, &pt, d);
            if alpha.iter().all(|&a| a > WEIGHT_EPS) {
                w = alpha;
                x = combine(&active, &w, &pt, d);
                break;
            }
            let mut theta = f64::INFINITY;
            let mut drop_at = 0;
            for (i, (&a, &wi)) in alpha.iter().zip(&w).enumerate() {
                if a <= WEIGHT_EPS {
                    let t = if wi - a > 0.0 { wi / (wi - a) } else { 0.0 };
                    if t < theta {
                        theta = t;
                        drop_at = i;
                    }
                }
            }
            let theta = theta.min(1.0);
            for (wi, a) in w.iter_mut().zip(&alpha) {
                *wi = theta * a + (1.0 - theta) * *wi;
            }
            w[drop_at] = 0.0;
            let mut keep_active = Vec::with_capacity(active.len());
            let mut keep_w = Vec::with_capacity(w.len());
            for (&a, &wi) in active.iter().zip(&w) {
                if wi > WEIGHT_EPS {
                    keep_active.push(a);
                    keep_w.push(wi);
                }
            }
            let total: f64 = keep_w.iter().sum();
            keep_w.iter_mut().for_each(|wi| *wi /= total);
            active = keep_active;
            w = keep_w;
            x = combine(&active, &w, &pt, d);
            if active.len() == 1 {
                break;
            }
        }
    }
}

fn combine<'a>(active: &[usize], w: &[f64], pt: &impl Fn(usize) -> &'a [f64], d: usize) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for (&j, &wj) in active.iter().zip(w) {
        for (xi, v) in x.iter_mut().zip(pt(j)) {
            *xi += wj * v;
        }
    }
    x
}

/// Affine weights of the minimum-norm point of `aff{P_j : j ∈ active}`.
fn affine_minimizer<'a>(active: &[usize], pt: &impl Fn(usize) -> &'a [f64], d: usize) -> Vec<f64> {
    let k = active.len();
    if k == 1 {
        return vec![1.0];
    }
    let base = pt(active[0]);
    let diffs = DMatrix::from_fn(d, k - 1, |r, c| pt(active[c + 1])[r] - base[r]);
    let rhs = -DVector::from_column_slice(base);
    let scale = diffs.amax().max(f64::MIN_POSITIVE);
    let svd = diffs.svd(true, true);
    let beta = svd
        .solve(&rhs, 1e-12 * scale)
        .expect("both factors were requested");
    let mut alpha = Vec::with_capacity(k);
    alpha.push(1.0 - beta.sum());
    alpha.extend(beta.iter().copied());
    alpha
}

/// `max_{a ∈ a} dist(a, co(b))`, which equals the directed Hausdorff distance
/// from `co(a)` to `co(b)` since the distance to a convex set is convex.
pub fn directed_hausdorff_hull(a: &PointCloud, b: &PointCloud, tol: f64) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let mut worst = 0.0f64;
    for p in a.iter() {
        worst = worst.max(dist_point_to_hull(p, b, tol)?);
    }
    Ok(worst)
}

/// Hausdorff distance between `co(a)` and `co(b)` within `tol`.
pub fn hausdorff_hulls(a: &PointCloud, b: &PointCloud, tol: f64) -> Result<f64> {
    Ok(directed_hausdorff_hull(a, b, tol)?.max(directed_hausdorff_hull(b, a, tol)?))
}
