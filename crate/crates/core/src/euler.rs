//! The set-valued Forward Euler scheme.
//!
//! `φ(x) = x + Δt F(x)` takes one member per step; `ψ(x) = x + Δt co F(x)`
//! is its relaxation, sampled on a simplex grid of weights. Reachable sets
//! `D_n` are evolved as point clouds, optionally snapped to a grid to keep
//! their size bounded; a refined run stands in for the continuous sets `C_n`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::bound_reach_sets;
use crate::error::{Error, Result};
use crate::geometry::{check_dims, PointCloud, Vector, DEDUP_TOL};
use crate::model::{ControlFamily, ProblemSpec};

/// Default bound on enumerated or evolved cloud sizes.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// Default reference refinement factor.
pub const DEFAULT_REFINE: usize = 32;

const PAR_THRESHOLD: usize = 4096;

/// `Δt² K L / 4`.
pub fn default_prune_cell(dt: f64, k: f64, l: f64) -> f64 {
    dt * dt * k * l / 4.0
}

/// The maps `φ` and `ψ` for one family at step `dt`, over `steps` steps.
#[derive(Clone, Debug)]
pub struct StepMaps {
    family: ControlFamily,
    dt: f64,
    steps: usize,
}

impl StepMaps {
    /// `Δt = T / N`.
    pub fn new(family: ControlFamily, horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("need N >= 1 steps".into()));
        }
        Ok(Self {
            family,
            dt: horizon / steps as f64,
            steps,
        })
    }

    /// Explicit step size; `dt = 0` gives the identity maps.
    pub fn from_step(family: ControlFamily, dt: f64, steps: usize) -> Result<Self> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be nonnegative, got {dt}")));
        }
        Ok(Self { family, dt, steps })
    }

    pub fn for_problem(problem: &ProblemSpec, steps: usize) -> Result<Self> {
        Self::new(problem.family.clone(), problem.horizon, steps)
    }

    pub fn family(&self) -> &ControlFamily {
        &self.family
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn m(&self) -> usize {
        self.family.m()
    }

    /// `x + Δt f_i(x)` into `out`; `out` doubles as scratch for `f_i(x)`.
    #[inline]
    pub(crate) fn phi_into(&self, x: &[f64], i: usize, out: &mut [f64]) -> Result<()> {
        self.family.eval_member(i, x, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + self.dt * *o;
        }
        Ok(())
    }

    /// `{f_1(x), …, f_M(x)}` as a flat buffer.
    pub(crate) fn velocities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut v = vec![0.0; d * self.m()];
        for (i, out) in v.chunks_exact_mut(d).enumerate() {
            self.family.eval_member(i, x, out)?;
        }
        Ok(v)
    }

    /// `x + Δt Σ λ_i f_i(x)`.
    pub fn relaxed_step(&self, x: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.m(), weights.len())?;
        let v = self.velocities(x)?;
        Ok(combine_velocities(x, self.dt, &v, weights))
    }
}

fn combine_velocities(x: &[f64], dt: f64, v: &[f64], weights: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut y = x.to_vec();
    for (vi, w) in v.chunks_exact(d).zip(weights) {
        if *w != 0.0 {
            for (yr, vr) in y.iter_mut().zip(vi) {
                *yr += dt * w * vr;
            }
        }
    }
    y
}

/// `φ(x, i) = x + Δt f_i(x)`, members indexed from zero.
pub fn phi_step(maps: &StepMaps, x: &[f64], i: usize) -> Result<Vector> {
    check_dims(maps.dim(), x.len())?;
    if i >= maps.m() {
        return Err(Error::IndexOutOfRange { index: i, m: maps.m() });
    }
    let mut out = vec![0.0; x.len()];
    maps.phi_into(x, i, &mut out)?;
    Vector::new(out)
}

/// All weight vectors `k / grid_res` with `Σ k_i = grid_res`, in
/// lexicographic order of the weight vector.
pub fn simplex_grid(m: usize, grid_res: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == m {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(m, left - k, prefix, out);
            prefix.pop();
        }
    }
    assert!(m >= 1 && grid_res >= 1);
    let mut counts = Vec::new();
    rec(m, grid_res, &mut Vec::with_capacity(m), &mut counts);
    counts
        .into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / grid_res as f64).collect())
        .collect()
}

/// Samples of `ψ(x)` paired with the weight vectors that produced them.
#[derive(Clone, Debug)]
pub struct PsiSample {
    pub cloud: PointCloud,
    pub weights: Vec<Vec<f64>>,
}

/// `{x + Δt Σ λ_i f_i(x)}` over the simplex grid of resolution `grid_res`,
/// with weights. Pure members are included; order follows [`simplex_grid`].
pub fn psi_sample_weighted(maps: &StepMaps, x: &[f64], grid_res: usize) -> Result<PsiSample> {
    check_dims(maps.dim(), x.len())?;
    if grid_res < 1 {
        return Err(Error::InvalidArgument("grid_res must be >= 1".into()));
    }
    let v = maps.velocities(x)?;
    let weights = simplex_grid(maps.m(), grid_res);
    let mut data = Vec::with_capacity(weights.len() * x.len());
    for w in &weights {
        data.extend(combine_velocities(x, maps.dt, &v, w));
    }
    Ok(PsiSample {
        cloud: PointCloud::from_flat(x.len(), data)?,
        weights,
    })
}

/// Sampled relaxed step `ψ(x)`; see [`psi_sample_weighted`].
pub fn psi_sample(maps: &StepMaps, x: &[f64], grid_res: usize) -> Result<PointCloud> {
    psi_sample_weighted(maps, x, grid_res).map(|s| s.cloud)
}

/// `ψ` applied pointwise to a cloud, merged at the dedup tolerance.
pub fn psi_sample_cloud(maps: &StepMaps, c: &PointCloud, grid_res: usize) -> Result<PointCloud> {
    let parts = c
        .iter()
        .map(|p| psi_sample(maps, p, grid_res))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud::concat(&parts)?.dedup(DEDUP_TOL))
}

/// Iterated images `φ^k(x)` with the control sequences producing them.
#[derive(Clone, Debug)]
pub struct Enumeration {
    pub cloud: PointCloud,
    pub sequences: Vec<Vec<usize>>,
}

/// All `M^k` points of `φ^k(x)` (with multiplicity), lexicographic in the
/// control sequence `(i_1, …, i_k)` where `i_1` is applied first.
pub fn phi_enumerate(maps: &StepMaps, x: &[f64], k: usize) -> Result<Enumeration> {
    phi_enumerate_capped(maps, x, k, ENUMERATION_CAP)
}

pub fn phi_enumerate_capped(maps: &StepMaps, x: &[f64], k: usize, cap: usize) -> Result<Enumeration> {
    check_dims(maps.dim(), x.len())?;
    let count = (maps.m() as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::EnumerationCap { requested: count, cap });
    }
    let d = x.len();
    let mut data = Vec::with_capacity(count as usize * d);
    let mut sequences = Vec::with_capacity(count as usize);
    let mut seq = Vec::with_capacity(k);

    fn rec(
        maps: &StepMaps,
        x: &[f64],
        depth: usize,
        seq: &mut Vec<usize>,
        data: &mut Vec<f64>,
        sequences: &mut Vec<Vec<usize>>,
    ) -> Result<()> {
        if depth == 0 {
            data.extend_from_slice(x);
            sequences.push(seq.clone());
            return Ok(());
        }
        let mut y = vec![0.0; x.len()];
        for i in 0..maps.m() {
            maps.phi_into(x, i, &mut y)?;
            seq.push(i);
            rec(maps, &y, depth - 1, seq, data, sequences)?;
            seq.pop();
        }
        Ok(())
    }

    rec(maps, x, k, &mut seq, &mut data, &mut sequences)?;
    Ok(Enumeration {
        cloud: PointCloud::from_flat(d, data)?,
        sequences,
    })
}

/// `φ` applied to every point with every member; point-major order.
pub fn phi_image(maps: &StepMaps, c: &PointCloud) -> Result<PointCloud> {
    let d = c.dim();
    let m = maps.m();
    let image_of = |p: &[f64]| -> Result<Vec<f64>> {
        let mut out = vec![0.0; m * d];
        for (i, o) in out.chunks_exact_mut(d).enumerate() {
            maps.phi_into(p, i, o)?;
        }
        Ok(out)
    };
    let data: Vec<f64> = if c.len() >= PAR_THRESHOLD {
        let chunks = c
            .as_flat()
            .par_chunks(d * 256)
            .map(|block| {
                let mut acc = Vec::with_capacity(block.len() * m);
                for p in block.chunks_exact(d) {
                    acc.extend(image_of(p)?);
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        chunks.concat()
    } else {
        let mut acc = Vec::with_capacity(c.len() * m * d);
        for p in c.iter() {
            acc.extend(image_of(p)?);
        }
        acc
    };
    PointCloud::from_flat(d, data)
}

/// Sampled reachable sets `D_0, …, D_N`.
#[derive(Clone, Debug)]
pub struct ReachTube {
    pub clouds: Vec<PointCloud>,
    pub dt: f64,
    pub prune_cell: f64,
    /// Pruning displacement allowed per step of the tube: `cell·√d` per
    /// underlying Euler step when snapping, `cell` when merging.
    pub prune_error_per_step: f64,
    /// `N · prune_error_per_step`.
    pub accumulated_prune_error: f64,
}

/// Sidecar written next to a tube CSV.
#[derive(Clone, Debug, Serialize)]
pub struct TubeMetadata {
    pub dt: f64,
    pub steps: usize,
    pub dim: usize,
    pub prune_cell: f64,
    pub accumulated_prune_error: f64,
    pub sizes: Vec<usize>,
}

impl ReachTube {
    pub fn steps(&self) -> usize {
        self.clouds.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].dim()
    }

    /// Pruning displacement accrued by step `n`, before any amplification by
    /// the dynamics.
    pub fn prune_error_at(&self, n: usize) -> f64 {
        n as f64 * self.prune_error_per_step
    }

    pub fn metadata(&self) -> TubeMetadata {
        TubeMetadata {
            dt: self.dt,
            steps: self.steps(),
            dim: self.dim(),
            prune_cell: self.prune_cell,
            accumulated_prune_error: self.accumulated_prune_error,
            sizes: self.clouds.iter().map(PointCloud::len).collect(),
        }
    }

    /// CSV with columns `n, point_index, x_1..x_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["n".to_string(), "point_index".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("x_{j}")));
        wr.write_record(&header)?;
        for (n, c) in self.clouds.iter().enumerate() {
            for (i, p) in c.iter().enumerate() {
                let mut row = vec![n.to_string(), i.to_string()];
                row.extend(p.iter().map(|x| x.to_string()));
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json` into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let meta = serde_json::to_string_pretty(&self.metadata())?;
        std::fs::write(dir.join(format!("{stem}.meta.json")), meta + "\n")?;
        Ok(())
    }
}

fn prune(c: PointCloud, cell: f64) -> PointCloud {
    if cell > 0.0 {
        c.snap(cell)
    } else {
        c.dedup(DEDUP_TOL)
    }
}

fn validate_cell(prune_cell: f64) -> Result<()> {
    if !(prune_cell >= 0.0) || !prune_cell.is_finite() {
        return Err(Error::InvalidArgument(format!("prune_cell must be >= 0, got {prune_cell}")));
    }
    Ok(())
}

/// Evolve `{x0}` under `φ` for `maps.steps()` steps, snapping to a grid of
/// cell `prune_cell` after each step (exact merging at the dedup tolerance
/// when the cell is zero).
pub fn evolve_reach(maps: &StepMaps, x0: &[f64], prune_cell: f64) -> Result<ReachTube> {
    evolve_reach_capped(maps, x0, prune_cell, ENUMERATION_CAP)
}

pub fn evolve_reach_capped(maps: &StepMaps, x0: &[f64], prune_cell: f64, cap: usize) -> Result<ReachTube> {
    check_dims(maps.dim(), x0.len())?;
    validate_cell(prune_cell)?;
    let mut clouds = Vec::with_capacity(maps.steps() + 1);
    clouds.push(PointCloud::from_flat(x0.len(), x0.to_vec())?);
    evolve_strided(maps, x0, |c| prune(c, prune_cell), cap, 1, |c| clouds.push(c))?;
    let per_step = prune_cell * (x0.len() as f64).sqrt();
    Ok(ReachTube {
        dt: maps.dt(),
        prune_cell,
        prune_error_per_step: per_step,
        accumulated_prune_error: maps.steps() as f64 * per_step,
        clouds,
    })
}

/// Refined-step stand-in for the continuous reachable sets.
#[derive(Clone, Debug)]
pub struct ReferenceTube {
    /// Clouds at the coarse times `nΔt`.
    pub tube: ReachTube,
    pub refine: usize,
    pub fine_dt: f64,
    pub fine_prune_cell: f64,
    /// Reachable-set bound evaluated at the fine step.
    pub fine_reach_bound: f64,
    /// `e^{LT}`, the worst-case amplification of pruning displacements.
    pub amplification: f64,
}

impl ReferenceTube {
    /// Guaranteed `H(tube.clouds[n], C_n)`: fine-step reachable-set bound
    /// plus amplified pruning error.
    pub fn budget_at(&self, n: usize) -> f64 {
        self.fine_reach_bound + self.amplification * self.tube.prune_error_at(n)
    }
}

/// Evolve with step `Δt/refine`, merging points closer than
/// `prune_cell/refine²`, then subsample at the coarse times `nΔt`,
/// `Δt = T / coarse_n`.
pub fn reference_tube(problem: &ProblemSpec, refine: usize, coarse_n: usize, prune_cell: f64) -> Result<ReferenceTube> {
    if refine < 2 {
        return Err(Error::InvalidArgument(format!("refine must be >= 2, got {refine}")));
    }
    validate_cell(prune_cell)?;
    let fam = &problem.family;
    let x0 = problem.x0.coords();
    let d = x0.len();
    if coarse_n == 0 {
        return Ok(ReferenceTube {
            tube: ReachTube {
                clouds: vec![PointCloud::singleton(&problem.x0)],
                dt: 0.0,
                prune_cell: 0.0,
                prune_error_per_step: 0.0,
                accumulated_prune_error: 0.0,
            },
            refine,
            fine_dt: 0.0,
            fine_prune_cell: 0.0,
            fine_reach_bound: 0.0,
            amplification: 1.0,
        });
    }
    let fine = StepMaps::new(fam.clone(), problem.horizon, coarse_n * refine)?;
    let fine_cell = prune_cell / (refine * refine) as f64;
    let mut clouds = Vec::with_capacity(coarse_n + 1);
    clouds.push(PointCloud::singleton(&problem.x0));
    // Radius merging instead of grid snapping: each step moves a point by at
    // most the cell, and clusters of roundoff-separated copies collapse.
    let merge = |c: PointCloud| c.dedup(fine_cell.max(DEDUP_TOL));
    evolve_strided(&fine, x0, merge, ENUMERATION_CAP, refine, |c| clouds.push(c))?;
    let per_coarse_step = refine as f64 * fine_cell;
    Ok(ReferenceTube {
        tube: ReachTube {
            clouds,
            dt: problem.horizon / coarse_n as f64,
            prune_cell: fine_cell,
            prune_error_per_step: per_coarse_step,
            accumulated_prune_error: coarse_n as f64 * per_coarse_step,
        },
        refine,
        fine_dt: fine.dt(),
        fine_prune_cell: fine_cell,
        fine_reach_bound: bound_reach_sets(fam.k(), fam.l(), problem.horizon, d, fine.dt())?,
        amplification: (fam.l() * problem.horizon).exp(),
    })
}

/// Pruned evolution from `x0`; calls `emit` with every `stride`-th cloud
/// after the initial one.
fn evolve_strided(
    maps: &StepMaps,
    x0: &[f64],
    prune: impl Fn(PointCloud) -> PointCloud,
    cap: usize,
    stride: usize,
    mut emit: impl FnMut(PointCloud),
) -> Result<()> {
    let mut current = PointCloud::from_flat(x0.len(), x0.to_vec())?;
    for step in 1..=maps.steps() {
        current = prune(phi_image(maps, &current)?);
        if current.len() > cap {
            return Err(Error::CloudCap {
                size: current.len(),
                step,
                cap,
            });
        }
        if step % stride == 0 {
            emit(current.clone());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{directed_hausdorff, hausdorff_finite};
    use crate::model::{benchmark, AffineFamily};
    use nalgebra::DMatrix;

    fn signs(dt: f64, steps: usize) -> StepMaps {
        StepMaps::from_step(benchmark("signs1d").unwrap().family, dt, steps).unwrap()
    }

    fn sorted_1d(c: &PointCloud) -> Vec<f64> {
        let mut v: Vec<f64> = c.iter().map(|p| p[0]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn phi_step_examples() {
        let m = signs(0.1, 1);
        assert_eq!(phi_step(&m, &[0.0], 1).unwrap().coords(), &[0.1]);
        assert_eq!(phi_step(&m, &[0.0], 0).unwrap().coords(), &[-0.1]);
        assert!(matches!(phi_step(&m, &[0.0], 2), Err(Error::IndexOutOfRange { .. })));

        let zero = AffineFamily::constant(vec![vec![0.0, 0.0]]).unwrap();
        let zm = StepMaps::from_step(ControlFamily::affine("z", zero, 1.0, 0.0).unwrap(), 0.3, 1).unwrap();
        assert_eq!(phi_step(&zm, &[2.0, -1.0], 0).unwrap().coords(), &[2.0, -1.0]);

        let fam = AffineFamily::new(vec![vec![1.0, 0.0]], vec![DMatrix::identity(2, 2)], vec![0.0, 0.0]).unwrap();
        let am = StepMaps::from_step(ControlFamily::affine("a", fam, 10.0, 1.0).unwrap(), 0.1, 1).unwrap();
        let y = phi_step(&am, &[1.0, 1.0], 0).unwrap();
        assert!((y[0] - 1.2).abs() < 1e-15 && (y[1] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn simplex_grid_is_lexicographic_and_complete() {
        let g = simplex_grid(3, 2);
        let expect = [
            [0.0, 0.0, 1.0],
            [0.0, 0.5, 0.5],
            [0.0, 1.0, 0.0],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
            [1.0, 0.0, 0.0],
        ];
        assert_eq!(g.len(), expect.len());
        for (a, b) in g.iter().zip(expect) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
        // C(r + M − 1, M − 1)
        assert_eq!(simplex_grid(4, 5).len(), 56);
    }

    #[test]
    fn psi_sample_examples() {
        let m = signs(0.1, 1);
        let one = psi_sample(&m, &[0.0], 1).unwrap();
        assert_eq!(sorted_1d(&one), vec![-0.1, 0.1]);
        let two = psi_sample(&m, &[0.0], 2).unwrap();
        assert_eq!(sorted_1d(&two), vec![-0.1, 0.0, 0.1]);

        let single = AffineFamily::constant(vec![vec![0.5, -2.0]]).unwrap();
        let sm = StepMaps::from_step(ControlFamily::affine("one", single, 3.0, 0.0).unwrap(), 0.1, 1).unwrap();
        let s = psi_sample(&sm, &[1.0, 1.0], 7).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.as_flat(), &[1.05, 0.8]);
    }

    #[test]
    fn psi_vertices_are_phi_images() {
        let p = benchmark("affine2d").unwrap();
        let m = StepMaps::for_problem(&p, 10).unwrap();
        let x = [0.3, -0.2];
        let psi = psi_sample_weighted(&m, &x, 4).unwrap();
        for i in 0..3 {
            let phi = phi_step(&m, &x, i).unwrap();
            let pos = psi.weights.iter().position(|w| w[i] == 1.0).unwrap();
            assert_eq!(psi.cloud.point(pos), phi.coords());
        }
    }

    #[test]
    fn enumeration_examples() {
        let m = signs(0.1, 2);
        let e0 = phi_enumerate(&m, &[0.0], 0).unwrap();
        assert_eq!(e0.cloud.as_flat(), &[0.0]);
        assert_eq!(e0.sequences, vec![Vec::<usize>::new()]);

        let e2 = phi_enumerate(&m, &[0.0], 2).unwrap();
        assert_eq!(e2.cloud.as_flat(), &[-0.2, 0.0, 0.0, 0.2]);
        assert_eq!(e2.sequences, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        let p = benchmark("rotation2d").unwrap();
        let rm = StepMaps::for_problem(&p, 10).unwrap();
        let e1 = phi_enumerate(&rm, &[1.0, 0.0], 1).unwrap();
        let f = crate::model::eval_family(&p.family, &[1.0, 0.0]).unwrap();
        let shifted = scale_and_shift(&f, rm.dt(), &[1.0, 0.0]);
        assert_eq!(e1.cloud, shifted);

        let err = phi_enumerate_capped(&m, &[0.0], 10, 1000).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { requested: 1024, .. }));
    }

    fn scale_and_shift(c: &PointCloud, dt: f64, x: &[f64]) -> PointCloud {
        c.map_points(|p, out| {
            for ((o, v), xi) in out.iter_mut().zip(p).zip(x) {
                *o = xi + dt * v;
            }
        })
        .unwrap()
    }

    #[test]
    fn evolve_examples() {
        let m0 = signs(0.1, 0);
        let t0 = evolve_reach(&m0, &[0.0], 0.0).unwrap();
        assert_eq!(t0.clouds.len(), 1);
        assert_eq!(t0.clouds[0].as_flat(), &[0.0]);

        let m = signs(0.1, 2);
        let t = evolve_reach(&m, &[0.0], 0.0).unwrap();
        assert_eq!(sorted_1d(&t.clouds[2]), vec![-0.2, 0.0, 0.2]);
        assert_eq!(t.accumulated_prune_error, 0.0);
    }

    #[test]
    fn evolve_matches_enumeration_on_rotation() {
        let p = benchmark("rotation2d").unwrap();
        let m = StepMaps::for_problem(&p, 10).unwrap();
        let tube = evolve_reach(&m, p.x0.coords(), 0.0).unwrap();
        let e = phi_enumerate(&m, p.x0.coords(), 3).unwrap().cloud.dedup(DEDUP_TOL);
        assert_eq!(tube.clouds[3].len(), e.len());
        assert!(hausdorff_finite(&tube.clouds[3], &e).unwrap() <= DEDUP_TOL);
    }

    #[test]
    fn speed_limit_holds_for_pruned_tubes() {
        for name in ["signs1d", "rotation2d", "affine2d"] {
            let p = benchmark(name).unwrap();
            let m = StepMaps::for_problem(&p, 8).unwrap();
            let cell = 0.01;
            let tube = evolve_reach(&m, p.x0.coords(), cell).unwrap();
            let limit = m.dt() * p.family.k() + cell * (p.dim() as f64).sqrt() + 1e-9;
            for w in tube.clouds.windows(2) {
                assert!(directed_hausdorff(&w[1], &w[0]).unwrap() <= limit, "{name}");
            }
        }
    }

    #[test]
    fn cloud_cap_is_enforced() {
        let p = benchmark("affine2d").unwrap();
        let m = StepMaps::for_problem(&p, 8).unwrap();
        let err = evolve_reach_capped(&m, p.x0.coords(), 0.0, 100).unwrap_err();
        assert!(matches!(err, Error::CloudCap { step: 5, .. }), "{err:?}");
    }

    #[test]
    fn reference_with_constant_fields_spans_exact_interval() {
        let fam = AffineFamily::constant(vec![vec![-1.0], vec![2.0]]).unwrap();
        let f = ControlFamily::affine("lr", fam, 2.0, 0.0).unwrap();
        let p = ProblemSpec::new(f, Vector::new(vec![0.5]).unwrap(), 1.0).unwrap();
        let r = reference_tube(&p, 4, 5, 0.0).unwrap();
        assert_eq!(r.tube.clouds.len(), 6);
        for (n, c) in r.tube.clouds.iter().enumerate() {
            let t = n as f64 * 0.2;
            let xs = sorted_1d(c);
            assert!((xs[0] - (0.5 - t)).abs() <= 1e-12);
            assert!((xs[xs.len() - 1] - (0.5 + 2.0 * t)).abs() <= 1e-12);
        }
    }

    #[test]
    fn reference_refinements_agree_within_budgets() {
        let p = benchmark("signs1d").unwrap();
        let r2 = reference_tube(&p, 2, 10, 0.0).unwrap();
        let r4 = reference_tube(&p, 4, 10, 0.0).unwrap();
        for n in 0..=10 {
            let h = hausdorff_finite(&r2.tube.clouds[n], &r4.tube.clouds[n]).unwrap();
            assert!(h <= r2.budget_at(n) + r4.budget_at(n), "n={n} h={h}");
        }
        let z = reference_tube(&p, 8, 0, 0.0).unwrap();
        assert_eq!(z.tube.clouds.len(), 1);
        assert!(reference_tube(&p, 1, 10, 0.0).is_err());
    }
}
