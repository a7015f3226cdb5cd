use nalgebra::DMatrix;
use serde::Serialize;

use super::{check_dims, dist, PointCloud, Vector};
use crate::error::{Error, Result};

const SIMPLEX_SUM_TOL: f64 = 1e-12;
const RECONSTRUCTION_TOL: f64 = 1e-9;

/// A subset of generators of a convex hull, optionally with convex weights
/// selecting one point of it.
#[derive(Clone, Debug, Serialize)]
pub struct HullRepresentation {
    pub support: PointCloud,
    pub weights: Option<Vec<f64>>,
}

impl HullRepresentation {
    /// `Σ λ_i v_i`, if weights are present.
    pub fn point(&self) -> Option<Vec<f64>> {
        let w = self.weights.as_ref()?;
        let mut y = vec![0.0; self.support.dim()];
        for (p, wi) in self.support.iter().zip(w) {
            for (yi, pi) in y.iter_mut().zip(p) {
                *yi += wi * pi;
            }
        }
        Some(y)
    }
}

/// Rewrite a convex combination using at most `d + 1` of its generators.
///
/// While more than `d + 1` generators carry weight, an affine dependence
/// `Σ μ_i v_i = 0`, `Σ μ_i = 0` among `d + 2` of them is found and the
/// weights are shifted along it until one reaches zero.
pub fn caratheodory_reduce(target: &Vector, support: &PointCloud, weights: &[f64]) -> Result<HullRepresentation> {
    let d = support.dim();
    check_dims(d, target.dim())?;
    if weights.len() != support.len() {
        return Err(Error::NotSimplex(format!(
            "{} weights for {} support points",
            weights.len(),
            support.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::NotSimplex(format!("negative or non-finite weight {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
        return Err(Error::NotSimplex(format!("weights sum to {sum}")));
    }
    let initial = HullRepresentation {
        support: support.clone(),
        weights: Some(weights.to_vec()),
    };
    let err = dist(&initial.point().unwrap(), target);
    if err > RECONSTRUCTION_TOL {
        return Err(Error::InvalidArgument(format!(
            "weights reconstruct a point {err:e} away from the target"
        )));
    }
    if support.len() <= d + 1 {
        return Ok(initial);
    }

    let mut active: Vec<usize> = (0..support.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut w: Vec<f64> = weights.to_vec();
    while active.len() > d + 1 {
        let group = &active[..d + 2];
        let mu = affine_dependence(support, group);
        // step t = min_{μ_i > 0} w_i / μ_i, zeroing the arg-min weight
        let (pos, t) = group
            .iter()
            .enumerate()
            .filter(|(k, _)| mu[*k] > 0.0)
            .map(|(k, &i)| (k, w[i] / mu[k]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("a nonzero vector summing to zero has a positive entry");
        for (k, &i) in group.iter().enumerate() {
            w[i] = (w[i] - t * mu[k]).max(0.0);
        }
        w[group[pos]] = 0.0;
        active.retain(|&i| w[i] > 0.0);
    }

    let total: f64 = active.iter().map(|&i| w[i]).sum();
    let out_w: Vec<f64> = active.iter().map(|&i| w[i] / total).collect();
    let out_support = PointCloud::from_points(d, active.iter().map(|&i| support.point(i)))?;
    Ok(HullRepresentation {
        support: out_support,
        weights: Some(out_w),
    })
}

/// Nonzero `μ` with `Σ μ_k v_{group[k]} = 0` and `Σ μ_k = 0`, normalized to
/// unit length. Exists because `group` has `d + 2` points.
fn affine_dependence(support: &PointCloud, group: &[usize]) -> Vec<f64> {
    let d = support.dim();
    let k = group.len();
    // (d+1) x (d+2) system padded with a zero row so the SVD is square and
    // yields a full right basis.
    let m = DMatrix::from_fn(k, k, |r, c| {
        if r < d {
            support.point(group[c])[r]
        } else if r == d {
            1.0
        } else {
            0.0
        }
    });
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    v_t.row(idx).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_support_unchanged() {
        let s = PointCloud::from_flat(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let t = Vector::new(vec![0.25, 0.25]).unwrap();
        let r = caratheodory_reduce(&t, &s, &[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(r.support, s);
        assert_eq!(r.weights.unwrap(), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn square_uniform_weights() {
        let s = PointCloud::from_flat(2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let t = Vector::new(vec![0.5, 0.5]).unwrap();
        let r = caratheodory_reduce(&t, &s, &[0.25; 4]).unwrap();
        assert!(r.support.len() <= 3);
        let y = r.point().unwrap();
        assert!(dist(&y, &t) <= 1e-9);
        let w = r.weights.unwrap();
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn collinear_1d() {
        let s = PointCloud::from_flat(1, vec![0.0, 0.5, 1.0]).unwrap();
        let t = Vector::new(vec![0.5]).unwrap();
        let r = caratheodory_reduce(&t, &s, &[0.25, 0.5, 0.25]).unwrap();
        assert!(r.support.len() <= 2);
        assert!((r.point().unwrap()[0] - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn rejects_non_simplex_weights() {
        let s = PointCloud::from_flat(1, vec![0.0, 1.0]).unwrap();
        let t = Vector::new(vec![0.5]).unwrap();
        assert!(matches!(caratheodory_reduce(&t, &s, &[0.6, 0.6]), Err(Error::NotSimplex(_))));
        assert!(matches!(caratheodory_reduce(&t, &s, &[1.5, -0.5]), Err(Error::NotSimplex(_))));
        assert!(matches!(caratheodory_reduce(&t, &s, &[1.0]), Err(Error::NotSimplex(_))));
        // right simplex, wrong target
        assert!(caratheodory_reduce(&t, &s, &[1.0, 0.0]).is_err());
    }
}
