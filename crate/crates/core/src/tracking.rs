//! Constructive path approximation.
//!
//! Given a reference trajectory of the relaxed inclusion, build a discrete
//! Euler path that stays close to it and report the deviation next to the
//! corresponding a priori bound. The trackers are greedy (optionally beam)
//! searches; any feasible path under the bound witnesses the estimate.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{bound_controls_path, bound_convex_path, bound_nonconvex_path};
use crate::error::{Error, Result};
use crate::euler::{phi_enumerate, psi_sample_cloud, psi_sample_weighted, StepMaps};
use crate::geometry::{check_dims, dist, dist_point_to_hull, PointCloud, Vector, DEFAULT_HULL_TOL};
use crate::model::ProblemSpec;

const SIMPLEX_TOL: f64 = 1e-12;
const STEP_SLACK: f64 = 1e-9;

/// Piecewise-constant weights on the fine grid of a reference run.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSchedule {
    /// Member `i` throughout.
    Pure(usize),
    /// `period` fine steps on `a`, then `period` on `b`, repeating.
    Chatter { a: usize, b: usize, period: usize },
    /// `(1 − s) e_a + s e_b` with `s = (1 − cos(πt/T))/2`.
    Blend { a: usize, b: usize },
    Constant(Vec<f64>),
}

impl WeightSchedule {
    /// Weights on fine step `j` (time `t`) of a run over `[0, horizon]`.
    pub fn weights(&self, m: usize, j: usize, t: f64, horizon: f64) -> Result<Vec<f64>> {
        let unit = |i: usize| -> Result<Vec<f64>> {
            if i >= m {
                return Err(Error::IndexOutOfRange { index: i, m });
            }
            let mut w = vec![0.0; m];
            w[i] = 1.0;
            Ok(w)
        };
        match self {
            WeightSchedule::Pure(i) => unit(*i),
            WeightSchedule::Chatter { a, b, period } => {
                if *period == 0 {
                    return Err(Error::InvalidArgument("chatter period must be >= 1".into()));
                }
                unit(if (j / period) % 2 == 0 { *a } else { *b })
            }
            WeightSchedule::Blend { a, b } => {
                let s = (1.0 - (std::f64::consts::PI * t / horizon).cos()) / 2.0;
                unit(*b)?;
                let mut w = unit(*a)?;
                w[*a] = 1.0 - s;
                w[*b] += s;
                Ok(w)
            }
            WeightSchedule::Constant(w) => {
                check_simplex(w, m)?;
                Ok(w.clone())
            }
        }
    }
}

impl fmt::Display for WeightSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSchedule::Pure(i) => write!(f, "pure member {i}"),
            WeightSchedule::Chatter { a, b, period } => write!(f, "chatter {a}/{b} every {period} fine steps"),
            WeightSchedule::Blend { a, b } => write!(f, "cosine blend {a}->{b}"),
            WeightSchedule::Constant(w) => write!(f, "constant weights {w:?}"),
        }
    }
}

fn check_simplex(w: &[f64], m: usize) -> Result<()> {
    if w.len() != m {
        return Err(Error::NotSimplex(format!("{} weights for M = {m}", w.len())));
    }
    if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotSimplex(format!("{w:?}")));
    }
    Ok(())
}

/// A solution sampled at `nΔt`, `n = 0..=N`.
#[derive(Clone, Debug, Serialize)]
pub struct ReferencePath {
    pub dt: f64,
    pub states: Vec<Vector>,
    pub provenance: String,
    /// Fine steps per coarse step when manufactured by [`make_reference`].
    pub refine: Option<usize>,
}

impl ReferencePath {
    /// Checks the speed limit `|x_{n+1} − x_n| ≤ KΔt`.
    pub fn new(dt: f64, states: Vec<Vector>, k: f64, provenance: impl Into<String>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidArgument("reference needs at least two states".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let d = states[0].dim();
        for (n, w) in states.windows(2).enumerate() {
            check_dims(d, w[1].dim())?;
            let step = dist(&w[0], &w[1]);
            if step > k * dt + STEP_SLACK {
                return Err(Error::InvalidArgument(format!(
                    "reference moves {step} between steps {n} and {}, above KΔt = {}",
                    n + 1,
                    k * dt
                )));
            }
        }
        Ok(Self {
            dt,
            states,
            provenance: provenance.into(),
            refine: None,
        })
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }
}

/// Integrate `x' = Σ λ_i(t) f_i(x)` with `N·refine` Euler steps and keep
/// every `refine`-th state.
pub fn make_reference(problem: &ProblemSpec, n: usize, schedule: &WeightSchedule, refine: usize) -> Result<ReferencePath> {
    if refine < 8 {
        return Err(Error::InvalidArgument(format!("refine must be >= 8, got {refine}")));
    }
    let fine = StepMaps::for_problem(problem, n * refine)?;
    let m = fine.m();
    let mut x = problem.x0.coords().to_vec();
    let mut states = vec![problem.x0.clone()];
    for j in 0..fine.steps() {
        let w = schedule.weights(m, j, j as f64 * fine.dt(), problem.horizon)?;
        check_simplex(&w, m)?;
        x = fine.relaxed_step(&x, &w)?;
        if (j + 1) % refine == 0 {
            states.push(Vector::new(x.clone())?);
        }
    }
    let mut r = ReferencePath::new(
        problem.horizon / n as f64,
        states,
        problem.family.k(),
        format!("fine relaxed Euler, refine={refine}, schedule: {schedule}"),
    )?;
    r.refine = Some(refine);
    Ok(r)
}

/// Member index for `φ`, or weights for `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Control {
    Index(usize),
    Weights(Vec<f64>),
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Control::Index(i) => write!(f, "{i}"),
            Control::Weights(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(";"))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscretePath {
    pub states: Vec<Vector>,
    pub controls: Vec<Control>,
}

impl DiscretePath {
    /// Largest `|ξ_{n+1} − step(ξ_n, control_n)|` when replayed under `maps`.
    pub fn replay_defect(&self, maps: &StepMaps) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (n, c) in self.controls.iter().enumerate() {
            let x = &self.states[n];
            let y = match c {
                Control::Index(i) => crate::euler::phi_step(maps, x, *i)?.into_inner(),
                Control::Weights(w) => maps.relaxed_step(x, w)?,
            };
            worst = worst.max(dist(&y, &self.states[n + 1]));
        }
        Ok(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Relaxed,
    Nonconvex,
    Controls,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackReport {
    pub kind: TrackKind,
    pub dt: f64,
    pub steps: usize,
    pub max_deviation: f64,
    pub theoretical_bound: f64,
    /// Sampling and reference-oracle allowance, kept apart from the bound.
    pub sampling_slack: f64,
    pub lookahead_depth: usize,
    pub beam_width: usize,
    pub grid_res: usize,
}

impl TrackReport {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.theoretical_bound + self.sampling_slack
    }
}

/// `max_n |ref_n − ξ_n|`.
pub fn path_error(reference: &ReferencePath, path: &DiscretePath) -> Result<f64> {
    if reference.states.len() != path.states.len() {
        return Err(Error::InvalidArgument(format!(
            "reference has {} states, path has {}",
            reference.states.len(),
            path.states.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (a, b) in reference.states.iter().zip(&path.states) {
        check_dims(a.dim(), b.dim())?;
        worst = worst.max(dist(a, b));
    }
    Ok(worst)
}

fn check_compatible(maps: &StepMaps, reference: &ReferencePath) -> Result<()> {
    check_dims(maps.dim(), reference.dim())?;
    if reference.steps() != maps.steps() {
        return Err(Error::InvalidArgument(format!(
            "reference has {} steps, maps expect {}",
            reference.steps(),
            maps.steps()
        )));
    }
    if (reference.dt - maps.dt()).abs() > 1e-12 * maps.dt().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "reference spacing {} differs from Δt = {}",
            reference.dt,
            maps.dt()
        )));
    }
    Ok(())
}

fn check_grid(grid_res: usize) -> Result<()> {
    if grid_res == 0 {
        return Err(Error::InvalidArgument("grid_res must be >= 1".into()));
    }
    Ok(())
}

/// Allowance for tracking with grid-sampled `ψ`: each step may miss the
/// averaged weights by `max(2, M/2)·KΔt/grid_res` (the L1 error of rounding
/// to the grid is at most `M/(2·grid_res)`), amplified over `N` steps by at
/// most `e^{LT}`.
pub fn relaxed_sampling_slack(maps: &StepMaps, grid_res: usize) -> f64 {
    let fam = maps.family();
    let c = (maps.m() as f64 / 2.0).max(2.0);
    let per_step = c * fam.k() * maps.dt() / grid_res as f64;
    (fam.l() * maps.horizon()).exp() * maps.steps() as f64 * per_step
}

/// Gap between a fine-Euler reference and a true solution, `KLTe^{LT}Δt/refine`.
fn oracle_budget(maps: &StepMaps, reference: &ReferencePath) -> Result<f64> {
    match reference.refine {
        Some(r) => {
            let fam = maps.family();
            Ok(bound_convex_path(fam.k(), fam.l(), maps.horizon(), maps.dt())? / r as f64)
        }
        None => Ok(0.0),
    }
}

/// Greedy relaxed tracking: `η_{n+1}` is the sample of `ψ(η_n)` nearest to
/// `ref_{n+1}`; ties go to the lexicographically smallest weights.
pub fn track_relaxed(maps: &StepMaps, reference: &ReferencePath, grid_res: usize) -> Result<(DiscretePath, TrackReport)> {
    check_compatible(maps, reference)?;
    check_grid(grid_res)?;
    let mut states = vec![reference.states[0].clone()];
    let mut controls = Vec::with_capacity(maps.steps());
    for n in 0..maps.steps() {
        let sample = psi_sample_weighted(maps, &states[n], grid_res)?;
        let target = &reference.states[n + 1];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, p) in sample.cloud.iter().enumerate() {
            let dj = dist(p, target);
            if dj < best_d {
                best = j;
                best_d = dj;
            }
        }
        states.push(Vector::new(sample.cloud.point(best).to_vec())?);
        controls.push(Control::Weights(sample.weights[best].clone()));
    }
    let path = DiscretePath { states, controls };
    let fam = maps.family();
    let report = TrackReport {
        kind: TrackKind::Relaxed,
        dt: maps.dt(),
        steps: maps.steps(),
        max_deviation: path_error(reference, &path)?,
        theoretical_bound: bound_convex_path(fam.k(), fam.l(), maps.horizon(), maps.dt())?,
        sampling_slack: relaxed_sampling_slack(maps, grid_res),
        lookahead_depth: 0,
        beam_width: 1,
        grid_res,
    };
    Ok((path, report))
}

#[derive(Clone)]
struct Partial {
    states: Vec<Vec<f64>>,
    controls: Vec<usize>,
}

/// Beam search over member sequences. Each candidate `φ(ξ_n, i)` is scored
/// by `score(candidate, n + 1 + k, k)` with window `k = min(depth, N − n − 1)`,
/// so the window shrinks near the horizon. Scores within the hull tolerance
/// count as zero and are ranked by distance to `η_{n+1}`.
fn beam_search<S>(maps: &StepMaps, reference: &ReferencePath, eta: &[Vector], depth: usize, beam: usize, score: S) -> Result<DiscretePath>
where
    S: Fn(&[f64], usize, usize) -> Result<f64> + Sync,
{
    let n_steps = maps.steps();
    let m = maps.m();
    let mut paths = vec![Partial {
        states: vec![reference.states[0].coords().to_vec()],
        controls: Vec::new(),
    }];
    for n in 0..n_steps {
        let window = depth.min(n_steps - n - 1);
        let target = n + 1 + window;
        let jobs: Vec<(usize, usize)> = (0..paths.len()).flat_map(|r| (0..m).map(move |i| (r, i))).collect();
        let scored = jobs
            .par_iter()
            .map(|&(r, i)| {
                let cand = crate::euler::phi_step(maps, &paths[r].states[n], i)?.into_inner();
                let mut s = score(&cand, target, window)?;
                if s <= DEFAULT_HULL_TOL {
                    s = 0.0;
                }
                let near = dist(&cand, &eta[n + 1]);
                Ok((s, near, r, i, cand))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, na, ..) = &scored[a];
            let (sb, nb, ..) = &scored[b];
            sa.total_cmp(sb).then(na.total_cmp(nb)).then(a.cmp(&b))
        });
        order.truncate(beam);
        paths = order
            .into_iter()
            .map(|k| {
                let (_, _, r, i, ref cand) = scored[k];
                let mut p = paths[r].clone();
                p.states.push(cand.clone());
                p.controls.push(i);
                p
            })
            .collect();
    }
    let mut best: Option<(f64, DiscretePath)> = None;
    for p in paths {
        let path = DiscretePath {
            states: p.states.into_iter().map(Vector::new).collect::<Result<_>>()?,
            controls: p.controls.into_iter().map(Control::Index).collect(),
        };
        let e = path_error(reference, &path)?;
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, path));
        }
    }
    Ok(best.expect("beam is non-empty").1)
}

/// Best result over beam widths `1..=beam`, so widening never hurts.
fn best_over_widths<S>(maps: &StepMaps, reference: &ReferencePath, eta: &[Vector], depth: usize, beam: usize, score: S) -> Result<(DiscretePath, f64)>
where
    S: Fn(&[f64], usize, usize) -> Result<f64> + Sync,
{
    if beam == 0 {
        return Err(Error::InvalidArgument("beam must be >= 1".into()));
    }
    let mut best: Option<(DiscretePath, f64)> = None;
    for w in 1..=beam {
        let path = beam_search(maps, reference, eta, depth, w, &score)?;
        let e = path_error(reference, &path)?;
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((path, e));
        }
    }
    Ok(best.expect("beam >= 1"))
}

/// Nonconvex tracking. Runs [`track_relaxed`] for `η`, then picks
/// `ξ_{n+1} ∈ φ(ξ_n)` minimizing `dist(η_{n+1+ℓ}, co ψ^ℓ(ξ_{n+1}))` with
/// `ψ^ℓ` sampled on the simplex grid. `lookahead = None` uses `ℓ = d`.
pub fn track_nonconvex(
    maps: &StepMaps,
    reference: &ReferencePath,
    lookahead: Option<usize>,
    beam: usize,
    grid_res: usize,
) -> Result<(DiscretePath, TrackReport)> {
    let (relaxed, relaxed_report) = track_relaxed(maps, reference, grid_res)?;
    let depth = lookahead.unwrap_or(maps.dim());
    let eta = &relaxed.states;
    let score = |cand: &[f64], target: usize, window: usize| -> Result<f64> {
        let mut set = PointCloud::from_flat(cand.len(), cand.to_vec())?;
        for _ in 0..window {
            set = psi_sample_cloud(maps, &set, grid_res)?;
        }
        dist_point_to_hull(&eta[target], &set, DEFAULT_HULL_TOL)
    };
    let (path, dev) = best_over_widths(maps, reference, eta, depth, beam, score)?;
    let fam = maps.family();
    let report = TrackReport {
        kind: TrackKind::Nonconvex,
        dt: maps.dt(),
        steps: maps.steps(),
        max_deviation: dev,
        theoretical_bound: bound_nonconvex_path(fam.k(), fam.l(), maps.horizon(), maps.dim(), maps.dt())?,
        sampling_slack: relaxed_report.sampling_slack + oracle_budget(maps, reference)?,
        lookahead_depth: depth,
        beam_width: beam,
        grid_res,
    };
    Ok((path, report))
}

/// Few-controls bound, both groups summed. With `L = 0` and `S = 0` the
/// `L → 0` limit is taken.
fn controls_bound(maps: &StepMaps) -> Result<f64> {
    let fam = maps.family();
    let l = if fam.l() == 0.0 && fam.s() == 0.0 { f64::MIN_POSITIVE } else { fam.l() };
    let (a, b) = bound_controls_path(fam.k(), l, fam.s(), maps.horizon(), maps.m(), maps.dt())?;
    Ok(a + b)
}

/// Few-controls tracking (`M ≥ d + 1`): as [`track_nonconvex`] with the
/// score `dist(η_{n+M}, co φ^{M−1}(ξ_{n+1}))`, the hull enumerated exactly.
pub fn track_controls(
    maps: &StepMaps,
    reference: &ReferencePath,
    beam: usize,
    grid_res: usize,
) -> Result<(DiscretePath, TrackReport)> {
    let (m, d) = (maps.m(), maps.dim());
    if m < d + 1 {
        return Err(Error::TooFewMembers { m, d });
    }
    let (relaxed, relaxed_report) = track_relaxed(maps, reference, grid_res)?;
    let eta = &relaxed.states;
    let depth = m - 1;
    let score = |cand: &[f64], target: usize, window: usize| -> Result<f64> {
        let set = phi_enumerate(maps, cand, window)?.cloud;
        dist_point_to_hull(&eta[target], &set, DEFAULT_HULL_TOL)
    };
    let (path, dev) = best_over_widths(maps, reference, eta, depth, beam, score)?;
    let report = TrackReport {
        kind: TrackKind::Controls,
        dt: maps.dt(),
        steps: maps.steps(),
        max_deviation: dev,
        theoretical_bound: controls_bound(maps)?,
        sampling_slack: relaxed_report.sampling_slack + oracle_budget(maps, reference)?,
        lookahead_depth: depth,
        beam_width: beam,
        grid_res,
    };
    Ok((path, report))
}

/// CSV with columns `n, control, x_1..x_d, ref_x_1..ref_x_d, deviation`;
/// the last row has an empty control.
pub fn write_path_csv<W: Write>(reference: &ReferencePath, path: &DiscretePath, w: W) -> Result<()> {
    path_error(reference, path)?;
    let d = reference.dim();
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["n".to_string(), "control".to_string()];
    header.extend((1..=d).map(|j| format!("x_{j}")));
    header.extend((1..=d).map(|j| format!("ref_x_{j}")));
    header.push("deviation".into());
    wr.write_record(&header)?;
    for (n, (x, r)) in path.states.iter().zip(&reference.states).enumerate() {
        let mut row = vec![n.to_string(), path.controls.get(n).map(|c| c.to_string()).unwrap_or_default()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.extend(r.iter().map(|v| v.to_string()));
        row.push(dist(x, r).to_string());
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` (path) and `<stem>.json` (report) into `dir`.
pub fn export_track(dir: &Path, stem: &str, reference: &ReferencePath, path: &DiscretePath, report: &TrackReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_path_csv(reference, path, std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}
