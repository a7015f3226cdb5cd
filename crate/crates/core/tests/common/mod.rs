//! Oracles shared by the integration tests and the acceptance binary.
#![allow(dead_code)]

use diffincl::euler::{phi_step, StepMaps};
use diffincl::geometry::{
    caratheodory_reduce, directed_hausdorff, dist, dist_point_to_hull_with, hausdorff_finite, hausdorff_hulls,
    scale_cloud, PointCloud, Vector, DEFAULT_HULL_TOL,
};
use diffincl::tracking::ReferencePath;
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- bounds

pub mod exact {
    use super::*;

    pub fn q(x: f64) -> BigRational {
        BigRational::from_float(x).expect("finite")
    }

    pub fn int(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    /// `e^x` for `0 ≤ x ≤ 10` by Taylor series, truncated once terms drop
    /// below 1e-40 relative.
    pub fn exp(x: &BigRational) -> BigRational {
        assert!(!x.is_negative());
        let mut sum = BigRational::one();
        let mut term = BigRational::one();
        let eps = BigRational::new(BigInt::one(), BigInt::from(10).pow(40));
        for k in 1..400 {
            term = term * x / int(k);
            sum += &term;
            if term < &eps * &sum {
                break;
            }
        }
        sum
    }

    fn pow(x: &BigRational, e: i32) -> BigRational {
        if e >= 0 {
            num_traits::pow(x.clone(), e as usize)
        } else {
            num_traits::pow(x.recip(), (-e) as usize)
        }
    }

    pub fn f(x: &BigRational) -> f64 {
        x.to_f64().expect("representable")
    }

    pub fn reach_sets(k: f64, l: f64, t: f64, d: usize, dt: f64) -> f64 {
        let (k, lt, d) = (q(k), q(l) * q(t), int(d as i64));
        let v = (&k * exp(&lt) * (&k * &d * (&d + int(1)) + &lt) + int(2) * &k * &d) * q(dt);
        f(&v)
    }

    pub fn convex_path(k: f64, l: f64, t: f64, dt: f64) -> f64 {
        let lt = q(l) * q(t);
        f(&(q(k) * &lt * exp(&lt) * q(dt)))
    }

    pub fn nonconvex_path(k: f64, l: f64, t: f64, d: usize, dt: f64) -> f64 {
        let (lt, d) = (q(l) * q(t), int(d as i64));
        let e = exp(&lt);
        f(&(q(k) * (&e * &d * (&d + int(1)) + int(2) * &d + &lt * &e) * q(dt)))
    }

    pub fn controls_path(k: f64, l: f64, s: f64, t: f64, m: usize, dt: f64) -> (f64, f64) {
        let (k, l, s, dt, mm) = (q(k), q(l), q(s), q(dt), int(m as i64));
        let e = exp(&(&l * q(t)));
        let first = (&e * (&k * &l * q(t) + &k * (int(8) * &mm - int(10))) + int(2) * &k * (&mm - int(1))) * &dt;
        let m1 = &mm - int(1);
        let cubic = &m1 * &m1 * &m1 - &m1;
        let second = &e
            * (&k * &l * &m1 * (&mm - int(2))
                + int(2) * &k * &l * &cubic / int(3) * pow(&(int(1) + &l * &dt), m as i32 - 3)
                + int(2) * &s * &k * &k * &mm * &m1 * (int(2) * &mm - int(1)) / (int(3) * &l))
            * &dt
            * &dt;
        (f(&first), f(&second))
    }

    pub fn coco_radius(k: f64, l: f64, s: f64, m: usize, dt: f64) -> f64 {
        let (k, l, s, dt, mm) = (q(k), q(l), q(s), q(dt), int(m as i64));
        let m1 = &mm - int(1);
        let cubic = &m1 * &m1 * &m1 - &m1;
        let v = (int(8) * &mm - int(10)) * &k * &l * &dt * &dt
            + (int(2) * &k * &l * &l * &cubic / int(3) * pow(&(int(1) + &l * &dt), m as i32 - 3)
                + &s * &k * &k * &mm * &m1 * (int(2) * &mm - int(1)) / int(3))
                * &dt
                * &dt
                * &dt;
        f(&v)
    }

    pub fn psi_hull_radius(k: f64, s: f64, m: usize, dt: f64) -> f64 {
        let (k, s, dt, mm) = (q(k), q(s), q(dt), int(m as i64));
        f(&(&s * &k * &k * &mm * (&mm - int(1)) * (int(2) * &mm - int(1)) / int(3) * &dt * &dt * &dt))
    }
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs() || a == b
}

/// Parameter set for the bound grid.
#[derive(Clone, Copy, Debug)]
pub struct BoundParams {
    pub k: f64,
    pub l: f64,
    pub s: f64,
    pub t: f64,
    pub d: usize,
    pub m: usize,
    pub dt: f64,
}

pub fn bound_grid(rng: &mut ChaCha8Rng, count: usize) -> Vec<BoundParams> {
    (0..count)
        .map(|i| BoundParams {
            k: rng.random_range(0.1..4.0),
            // every fifth point has L = 0 (skipped by the few-controls bound)
            l: if i % 5 == 4 { 0.0 } else { rng.random_range(0.01..2.0) },
            s: if i % 7 == 3 { 0.0 } else { rng.random_range(0.0..3.0) },
            t: rng.random_range(0.25..2.5),
            d: rng.random_range(1..=5),
            m: rng.random_range(2..=7),
            dt: rng.random_range(0.001..0.25),
        })
        .collect()
}

/// Compares every bound at `p` with the rational evaluation; returns the
/// mismatches.
pub fn bound_mismatches(p: &BoundParams, rel: f64) -> Vec<String> {
    use diffincl::bounds::*;
    let mut bad = Vec::new();
    let mut cmp = |name: &str, got: f64, want: f64| {
        if !rel_close(got, want, rel) {
            bad.push(format!("{name} at {p:?}: {got} vs {want}"));
        }
    };
    cmp("reach_sets", bound_reach_sets(p.k, p.l, p.t, p.d, p.dt).unwrap(), exact::reach_sets(p.k, p.l, p.t, p.d, p.dt));
    cmp("convex_path", bound_convex_path(p.k, p.l, p.t, p.dt).unwrap(), exact::convex_path(p.k, p.l, p.t, p.dt));
    cmp(
        "nonconvex_path",
        bound_nonconvex_path(p.k, p.l, p.t, p.d, p.dt).unwrap(),
        exact::nonconvex_path(p.k, p.l, p.t, p.d, p.dt),
    );
    if p.l > 0.0 {
        let (a, b) = bound_controls_path(p.k, p.l, p.s, p.t, p.m, p.dt).unwrap();
        let (ea, eb) = exact::controls_path(p.k, p.l, p.s, p.t, p.m, p.dt);
        cmp("controls_path_dt", a, ea);
        cmp("controls_path_dt2", b, eb);
    }
    cmp("coco_radius", coco_radius(p.k, p.l, p.s, p.m, p.dt).unwrap(), exact::coco_radius(p.k, p.l, p.s, p.m, p.dt));
    cmp("psi_hull_radius", psi_hull_radius(p.k, p.s, p.m, p.dt).unwrap(), exact::psi_hull_radius(p.k, p.s, p.m, p.dt));
    bad
}

// ---------------------------------------------------------------- paths

/// Minimal `max_n |ξ_n − ref_n|` over all member sequences, by depth-first
/// search with branch-and-bound. Returns the value and one optimal sequence.
pub fn dp_min_deviation(maps: &StepMaps, reference: &ReferencePath) -> (f64, Vec<usize>) {
    fn rec(
        maps: &StepMaps,
        r: &ReferencePath,
        n: usize,
        x: &[f64],
        worst: f64,
        seq: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if worst >= best.0 {
            return;
        }
        if n == r.steps() {
            *best = (worst, seq.clone());
            return;
        }
        for i in 0..maps.m() {
            let y = phi_step(maps, x, i).unwrap();
            let w = worst.max(dist(&y, &r.states[n + 1]));
            seq.push(i);
            rec(maps, r, n + 1, &y, w, seq, best);
            seq.pop();
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    let x0 = reference.states[0].coords().to_vec();
    rec(maps, reference, 0, &x0, 0.0, &mut Vec::new(), &mut best);
    best
}

// ---------------------------------------------------------------- geometry

pub fn random_cloud(rng: &mut ChaCha8Rng, d: usize, n: usize, scale: f64) -> PointCloud {
    let data: Vec<f64> = (0..d * n).map(|_| rng.random_range(-scale..scale)).collect();
    PointCloud::from_flat(d, data).unwrap()
}

/// Exact distance to a hull of a few points: the minimum over all affinely
/// independent subsets whose affine projection has nonnegative barycentric
/// coordinates.
pub fn brute_hull_distance(p: &[f64], c: &PointCloud) -> f64 {
    let n = c.len();
    let d = c.dim();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if idx.len() > d + 1 {
            continue;
        }
        let v0 = c.point(idx[0]);
        let k = idx.len() - 1;
        let mut lam = vec![1.0];
        let mut proj = v0.to_vec();
        if k > 0 {
            let e = DMatrix::from_fn(d, k, |r, j| c.point(idx[j + 1])[r] - v0[r]);
            let rhs = DVector::from_fn(d, |r, _| p[r] - v0[r]);
            let g = e.transpose() * &e;
            if g.determinant().abs() < 1e-10 * (1.0 + g.norm()).powi(k as i32) {
                continue;
            }
            let Some(mu) = g.clone().lu().solve(&(e.transpose() * rhs)) else { continue };
            let s: f64 = mu.iter().sum();
            lam = std::iter::once(1.0 - s).chain(mu.iter().copied()).collect();
            let off = &e * &mu;
            for r in 0..d {
                proj[r] += off[r];
            }
        }
        if lam.iter().all(|&w| w >= -1e-12) {
            best = best.min(dist(p, &proj));
        }
    }
    best
}

/// Minimum over a barycentric grid with step `1/res` on three generators.
pub fn grid_hull_distance3(p: &[f64], c: &PointCloud, res: usize) -> f64 {
    assert_eq!(c.len(), 3);
    let d = c.dim();
    let mut best = f64::INFINITY;
    let mut y = vec![0.0; d];
    for a in 0..=res {
        for b in 0..=res - a {
            let (wa, wb) = (a as f64 / res as f64, b as f64 / res as f64);
            let wc = 1.0 - wa - wb;
            for r in 0..d {
                y[r] = wa * c.point(0)[r] + wb * c.point(1)[r] + wc * c.point(2)[r];
            }
            best = best.min(dist(p, &y));
        }
    }
    best
}

const EPS: f64 = 1e-9;

pub fn check_metric_axioms(a: &PointCloud, b: &PointCloud, c: &PointCloud) -> Result<(), String> {
    let ab = hausdorff_finite(a, b).unwrap();
    let ba = hausdorff_finite(b, a).unwrap();
    let bc = hausdorff_finite(b, c).unwrap();
    let ac = hausdorff_finite(a, c).unwrap();
    if hausdorff_finite(a, a).unwrap() != 0.0 {
        return Err("H(A, A) != 0".into());
    }
    if ab != ba {
        return Err(format!("asymmetric {ab} {ba}"));
    }
    if ac > ab + bc + EPS {
        return Err(format!("triangle {ac} > {ab} + {bc}"));
    }
    if ab < 0.0 || directed_hausdorff(a, b).unwrap() > ab {
        return Err("directed exceeds symmetric".into());
    }
    Ok(())
}

pub fn check_translation_scaling(a: &PointCloud, b: &PointCloud, v: &[f64], lambda: f64) -> Result<(), String> {
    let h = hausdorff_finite(a, b).unwrap();
    let ht = hausdorff_finite(&a.translate(v).unwrap(), &b.translate(v).unwrap()).unwrap();
    if (h - ht).abs() > EPS * (1.0 + h) {
        return Err(format!("translation {h} vs {ht}"));
    }
    let hs = hausdorff_finite(&scale_cloud(lambda, a).unwrap(), &scale_cloud(lambda, b).unwrap()).unwrap();
    if (hs - lambda * h).abs() > EPS * (1.0 + lambda * h) {
        return Err(format!("scaling {hs} vs {}", lambda * h));
    }
    Ok(())
}

/// `H(co A, co B) ≤ H(A, B)`.
pub fn check_hull_contraction(a: &PointCloud, b: &PointCloud) -> Result<(), String> {
    let hc = hausdorff_hulls(a, b, DEFAULT_HULL_TOL).unwrap();
    let h = hausdorff_finite(a, b).unwrap();
    if hc > h + 2.0 * DEFAULT_HULL_TOL {
        return Err(format!("hull distance {hc} > {h}"));
    }
    Ok(())
}

pub fn check_caratheodory(c: &PointCloud, weights: &[f64]) -> Result<(), String> {
    let d = c.dim();
    let mut target = vec![0.0; d];
    for (p, w) in c.iter().zip(weights) {
        for r in 0..d {
            target[r] += w * p[r];
        }
    }
    let rep = caratheodory_reduce(&Vector::new(target.clone()).unwrap(), c, weights).map_err(|e| e.to_string())?;
    if rep.support.len() > d + 1 {
        return Err(format!("{} support points in R^{d}", rep.support.len()));
    }
    let w = rep.weights.as_ref().ok_or("no weights")?;
    if w.iter().any(|&x| x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(format!("weights off the simplex: {w:?}"));
    }
    let back = rep.point().ok_or("no point")?;
    if dist(&back, &target) > 1e-9 {
        return Err(format!("reconstruction error {}", dist(&back, &target)));
    }
    Ok(())
}

/// MNP against the exact subset oracle (within `2·tol`) and, for three
/// generators, against a barycentric grid of step 1e-3, which it must not
/// exceed by more than `2·tol`.
pub fn check_mnp(p: &[f64], c: &PointCloud) -> Result<(), String> {
    let tol = DEFAULT_HULL_TOL;
    let proj = dist_point_to_hull_with(p, c, tol).map_err(|e| e.to_string())?;
    let exact = brute_hull_distance(p, c);
    if (proj.distance - exact).abs() > 2.0 * tol {
        return Err(format!("mnp {} vs exact {exact}", proj.distance));
    }
    if proj.lower_bound > exact + 2.0 * tol {
        return Err(format!("lower bound {} above exact {exact}", proj.lower_bound));
    }
    if c.len() == 3 {
        let g = grid_hull_distance3(p, c, 1000);
        if proj.distance > g + 2.0 * tol {
            return Err(format!("mnp {} above grid {g}", proj.distance));
        }
    }
    Ok(())
}

/// Runs every geometry property on `count` seeded random instances; returns
/// (instances checked, failures).
pub fn geometry_suite(rng: &mut ChaCha8Rng, count: usize) -> (usize, Vec<String>) {
    let mut fails = Vec::new();
    let mut checked = 0;
    for i in 0..count {
        let d = 1 + i % 4;
        let n_a = rng.random_range(1..12);
        let a = random_cloud(rng, d, n_a, 2.0);
        let n_b = rng.random_range(1..12);
        let b = random_cloud(rng, d, n_b, 2.0);
        let n_c = rng.random_range(1..12);
        let c = random_cloud(rng, d, n_c, 2.0);
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lambda = rng.random_range(0.05..4.0);
        let n_gen = rng.random_range(1..=(d + 4).min(8));
        let gen = random_cloud(rng, d, n_gen, 1.0);
        let raw: Vec<f64> = (0..n_gen).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tri = random_cloud(rng, 2, 3, 1.0);
        let q: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
        let results = [
            ("metric", check_metric_axioms(&a, &b, &c)),
            ("translate/scale", check_translation_scaling(&a, &b, &v, lambda)),
            ("hull contraction", check_hull_contraction(&a, &b)),
            ("caratheodory", check_caratheodory(&gen, &weights)),
            ("mnp", check_mnp(&p, &gen)),
            ("mnp grid", if i % 10 == 0 { check_mnp(&q, &tri) } else { Ok(()) }),
        ];
        for (name, r) in results {
            checked += 1;
            if let Err(e) = r {
                fails.push(format!("instance {i} {name}: {e}"));
            }
        }
    }
    (checked, fails)
}
