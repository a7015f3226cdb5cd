//! Convex geometry on finite point sets in R^d.
//!
//! Sets are carried as [`PointCloud`]s. A fattened set `C + λB` (B the closed
//! Euclidean unit ball) is never materialized; inclusion tests against it are
//! phrased as "directed distance ≤ λ + tol".

mod caratheodory;
mod cloud;
mod hull;

pub use caratheodory::{caratheodory_reduce, HullRepresentation};
pub use cloud::{PointCloud, Vector};
pub use hull::{
    directed_hausdorff_hull, dist_point_to_hull, dist_point_to_hull_with, hausdorff_hulls,
    HullProjection, DEFAULT_HULL_TOL,
};

use crate::error::{Error, Result};

/// Tolerance used to merge coincident points after Minkowski sums.
pub const DEDUP_TOL: f64 = 1e-12;

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `{a + b : a ∈ c1, b ∈ c2}`, merged at [`DEDUP_TOL`].
pub fn minkowski_sum(c1: &PointCloud, c2: &PointCloud) -> Result<PointCloud> {
    check_dims(c1.dim(), c2.dim())?;
    let d = c1.dim();
    let mut data = Vec::with_capacity(c1.len() * c2.len() * d);
    for a in c1.iter() {
        for b in c2.iter() {
            data.extend(a.iter().zip(b).map(|(x, y)| x + y));
        }
    }
    Ok(PointCloud::from_flat(d, data)?.dedup(DEDUP_TOL))
}

/// `{λc : c ∈ cloud}` for λ > 0.
pub fn scale_cloud(lambda: f64, c: &PointCloud) -> Result<PointCloud> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive and finite, got {lambda}"
        )));
    }
    c.map_points(|p, out| {
        for (o, x) in out.iter_mut().zip(p) {
            *o = lambda * x;
        }
    })
}

/// `max_{a ∈ a} min_{b ∈ b} |a − b|`.
pub fn directed_hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let mut worst = 0.0f64;
    for p in a.iter() {
        let mut best = f64::INFINITY;
        for q in b.iter() {
            let dd = dist(p, q);
            if dd < best {
                best = dd;
                if best <= worst {
                    // cannot raise the running max any more
                    break;
                }
            }
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

/// Hausdorff distance between two finite sets by full pairwise scan.
pub fn hausdorff_finite(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}
