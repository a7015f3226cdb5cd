//! Experiment harness: convergence studies, sampled inclusion checks and
//! report emission.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::bounds::{bound_reach_sets, coco_radius, psi_hull_radius};
use crate::error::{Error, Result};
use crate::euler::{default_prune_cell, evolve_reach, phi_enumerate, psi_sample, reference_tube, StepMaps};
use crate::geometry::{dist_point_to_hull, hausdorff_finite, hausdorff_hulls, PointCloud, Vector, DEFAULT_HULL_TOL};
use crate::model::{ConstantsReport, ProblemSpec};
use crate::tracking::TrackReport;

/// Excess allowed on top of the inclusion radius.
pub const INCLUSION_TOL: f64 = 1e-6 + DEFAULT_HULL_TOL;

/// Default seed for sampled checks.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Errors at or below this count as exact and are left out of order fits.
const ZERO_ERROR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// How the coarse prune cell is chosen for each `Δt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    /// `Δt² K L / 4`.
    Default,
    Fixed(f64),
}

impl PruneRule {
    pub fn cell(&self, dt: f64, k: f64, l: f64) -> f64 {
        match *self {
            PruneRule::Default => default_prune_cell(dt, k, l),
            PruneRule::Fixed(c) => c,
        }
    }
}

/// One step size of a [`ConvergenceStudy`].
#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub dt: f64,
    pub steps: usize,
    pub prune_cell: f64,
    /// `H(D_n, reference_n)` for `n = 0..=N`.
    pub errors: Vec<f64>,
    pub final_error: f64,
    pub max_error: f64,
    pub bound: f64,
    /// Allowance at `n`: coarse pruning amplified by `e^{LT}` plus the
    /// reference budget.
    pub slack: Vec<f64>,
    pub max_slack: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub label: String,
    pub refine: usize,
    pub prune_rule: PruneRule,
    pub rows: Vec<StudyRow>,
    /// Slope over the finest half of the grid; `None` when the errors there
    /// vanish.
    pub fitted_order: Option<f64>,
    pub verdict: Verdict,
}

fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step sizes must be positive, got {dt}")));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!("Δt = {dt} does not divide T = {horizon}")));
    }
    Ok(n as usize)
}

/// Measure `H(D_n, C_n)` against a refined reference for every `Δt` and
/// compare with the reachable-set bound plus explicit slack.
pub fn run_convergence_study(problem: &ProblemSpec, dt_list: &[f64], refine: usize, prune: PruneRule) -> Result<ConvergenceStudy> {
    if dt_list.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 step sizes, got {}", dt_list.len())));
    }
    if dt_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("dt_list must be strictly decreasing".into()));
    }
    let steps = dt_list
        .iter()
        .map(|&dt| steps_for(problem.horizon, dt))
        .collect::<Result<Vec<_>>>()?;
    let fam = &problem.family;
    let (k, l, t, d) = (fam.k(), fam.l(), problem.horizon, problem.dim());
    let amplification = (l * t).exp();

    let rows = steps
        .par_iter()
        .map(|&n| -> Result<StudyRow> {
            let maps = StepMaps::for_problem(problem, n)?;
            let dt = maps.dt();
            let cell = prune.cell(dt, k, l);
            let coarse = evolve_reach(&maps, problem.x0.coords(), cell)?;
            let reference = reference_tube(problem, refine, n, cell)?;
            let bound = bound_reach_sets(k, l, t, d, dt)?;
            let mut errors = Vec::with_capacity(n + 1);
            let mut slack = Vec::with_capacity(n + 1);
            let mut ok = true;
            for (j, (a, b)) in coarse.clouds.iter().zip(&reference.tube.clouds).enumerate() {
                let e = hausdorff_finite(a, b)?;
                let s = amplification * coarse.prune_error_at(j) + reference.budget_at(j);
                ok &= e.is_finite() && e <= bound + s;
                errors.push(e);
                slack.push(s);
            }
            Ok(StudyRow {
                dt,
                steps: n,
                prune_cell: cell,
                final_error: *errors.last().expect("N >= 1"),
                max_error: errors.iter().copied().fold(0.0, f64::max),
                bound,
                max_slack: slack.iter().copied().fold(0.0, f64::max),
                errors,
                slack,
                verdict: Verdict::of(ok),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let finest = &rows[rows.len() / 2..];
    let pairs: Vec<(f64, f64)> = finest.iter().map(|r| (r.dt, r.max_error)).collect();
    let fitted_order = if pairs.iter().filter(|p| p.1 > ZERO_ERROR).count() >= 2 {
        Some(estimate_order(&pairs)?)
    } else {
        None
    };
    let verdict = Verdict::of(rows.iter().all(|r| r.verdict.passed()));
    Ok(ConvergenceStudy {
        label: problem.label().to_string(),
        refine,
        prune_rule: prune,
        rows,
        fitted_order,
        verdict,
    })
}

/// Least-squares slope of `log error` against `log Δt`. Pairs with a
/// non-positive error (at or below 1e-12) are dropped.
pub fn estimate_order(pairs: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(dt, e)| *dt > 0.0 && *e > ZERO_ERROR && e.is_finite())
        .map(|(dt, e)| (dt.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 positive (dt, error) pairs, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all step sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionTag {
    Coco,
    PsiHull,
}

#[derive(Clone, Debug, Serialize)]
pub struct InclusionCheck {
    pub tag: InclusionTag,
    pub label: String,
    pub dt: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    /// Random combinations drawn.
    pub sample_count: usize,
    /// Generators checked in addition to the random samples.
    pub generator_count: usize,
    pub radius: f64,
    /// Largest `dist(sample, RHS hull) − radius`.
    pub max_excess: f64,
    pub tolerance: f64,
    /// Two-sided hull distance, checked for `S = 0` families only.
    pub two_sided_distance: Option<f64>,
    pub two_sided_tolerance: Option<f64>,
    pub verdict: Verdict,
}

impl InclusionCheck {
    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

/// Draws `count` convex combinations, each of at most `d + 1` distinct
/// generators with Dirichlet(1) weights.
fn random_combinations(gen: &PointCloud, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = gen.dim();
    let k = (d + 1).min(gen.len());
    (0..count)
        .map(|_| {
            let idx = sample_indices(rng, gen.len(), k);
            let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = raw.iter().sum();
            let mut z = vec![0.0; d];
            for (j, w) in idx.iter().zip(&raw) {
                let w = if total > 0.0 { w / total } else { 1.0 / k as f64 };
                for (zr, g) in z.iter_mut().zip(gen.point(j)) {
                    *zr += w * g;
                }
            }
            z
        })
        .collect()
}

/// Sampled check of `co φ^M(x0) ⊂ ∪_{x ∈ φ(x0)} co φ^{M−1}(x) + R B`.
///
/// Every generator of the left side is checked, plus `samples` random
/// combinations. The right-hand hulls are the blocks of `φ^M(x0)` sharing
/// a first control.
pub fn check_coco_inclusion(problem: &ProblemSpec, dt: f64, samples: usize, seed: u64) -> Result<InclusionCheck> {
    let fam = &problem.family;
    let (m, d) = (fam.m(), problem.dim());
    if m < d + 1 {
        return Err(Error::TooFewMembers { m, d });
    }
    let maps = StepMaps::from_step(fam.clone(), dt, m)?;
    let x0 = problem.x0.coords();
    let lhs = phi_enumerate(&maps, x0, m)?.cloud;
    let block = lhs.len() / m;
    let rhs: Vec<PointCloud> = (0..m)
        .map(|i| PointCloud::from_flat(d, lhs.as_flat()[i * block * d..(i + 1) * block * d].to_vec()))
        .collect::<Result<_>>()?;
    let radius = coco_radius(fam.k(), fam.l(), fam.s(), m, dt)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = lhs.iter().map(<[f64]>::to_vec).collect();
    points.extend(random_combinations(&lhs, samples, &mut rng));
    let excesses = points
        .par_iter()
        .map(|z| -> Result<f64> {
            let mut best = f64::INFINITY;
            for hull in &rhs {
                best = best.min(dist_point_to_hull(z, hull, DEFAULT_HULL_TOL)?);
            }
            Ok(best - radius)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_excess = excesses.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(InclusionCheck {
        tag: InclusionTag::Coco,
        label: problem.label().to_string(),
        dt,
        m,
        seed,
        sample_count: samples,
        generator_count: lhs.len(),
        radius,
        max_excess,
        tolerance: INCLUSION_TOL,
        two_sided_distance: None,
        two_sided_tolerance: None,
        verdict: Verdict::of(max_excess <= INCLUSION_TOL),
    })
}

/// Sampled check of `ψ(co φ^{M−1}(z)) ⊂ co φ^M(z) + r B`.
///
/// Left-side points are grid samples of `ψ` at every generator of
/// `φ^{M−1}(z)` and at `samples` random combinations of them. For `S = 0`
/// the two sets coincide, and the two-sided hull distance is also checked
/// against `2KΔt/grid_res`.
pub fn check_psi_hull_inclusion(
    problem: &ProblemSpec,
    z: &Vector,
    dt: f64,
    grid_res: usize,
    samples: usize,
    seed: u64,
) -> Result<InclusionCheck> {
    let fam = &problem.family;
    let m = fam.m();
    let maps = StepMaps::from_step(fam.clone(), dt, m)?;
    let inner = phi_enumerate(&maps, z, m - 1)?.cloud;
    let rhs = phi_enumerate(&maps, z, m)?.cloud;
    let radius = psi_hull_radius(fam.k(), fam.s(), m, dt)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bases: Vec<Vec<f64>> = inner.iter().map(<[f64]>::to_vec).collect();
    bases.extend(random_combinations(&inner, samples, &mut rng));
    let images = bases
        .par_iter()
        .map(|y| psi_sample(&maps, y, grid_res))
        .collect::<Result<Vec<_>>>()?;
    let lhs = PointCloud::concat(&images)?;
    let excesses = lhs
        .as_flat()
        .par_chunks(lhs.dim())
        .map(|p| dist_point_to_hull(p, &rhs, DEFAULT_HULL_TOL).map(|e| e - radius))
        .collect::<Result<Vec<_>>>()?;
    let max_excess = excesses.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let mut ok = max_excess <= INCLUSION_TOL;

    let (two_sided_distance, two_sided_tolerance) = if fam.s() == 0.0 {
        let h = hausdorff_hulls(&lhs, &rhs, DEFAULT_HULL_TOL)?;
        let tol = 2.0 * fam.k() * dt / grid_res as f64 + INCLUSION_TOL;
        ok &= h <= tol;
        (Some(h), Some(tol))
    } else {
        (None, None)
    };
    Ok(InclusionCheck {
        tag: InclusionTag::PsiHull,
        label: problem.label().to_string(),
        dt,
        m,
        seed,
        sample_count: samples,
        generator_count: inner.len(),
        radius,
        max_excess,
        tolerance: INCLUSION_TOL,
        two_sided_distance,
        two_sided_tolerance,
        verdict: Verdict::of(ok),
    })
}

/// Anything [`emit_report`] can write.
#[derive(Clone, Debug)]
pub enum Report {
    Convergence(ConvergenceStudy),
    Inclusion(InclusionCheck),
    Tracking(TrackReport),
    Constants(ConstantsReport),
}

impl Report {
    pub fn passed(&self) -> bool {
        match self {
            Report::Convergence(s) => s.verdict.passed(),
            Report::Inclusion(c) => c.passed(),
            Report::Tracking(t) => t.passed(),
            Report::Constants(c) => c.passed(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Report::Convergence(_) => "convergence",
            Report::Inclusion(_) => "inclusion",
            Report::Tracking(_) => "tracking",
            Report::Constants(_) => "constants",
        }
    }

    fn to_json(&self) -> Result<Value> {
        let body = match self {
            Report::Convergence(s) => serde_json::to_value(s)?,
            Report::Inclusion(c) => serde_json::to_value(c)?,
            Report::Tracking(t) => serde_json::to_value(t)?,
            Report::Constants(c) => serde_json::to_value(c)?,
        };
        let mut obj = Map::new();
        obj.insert("kind".into(), Value::from(self.kind()));
        obj.insert("verdict".into(), serde_json::to_value(Verdict::of(self.passed()))?);
        if let Value::Object(fields) = body {
            for (k, v) in fields {
                obj.entry(k).or_insert(v);
            }
        }
        Ok(Value::Object(obj))
    }
}

/// One CSV table of a report set.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    /// File name, e.g. `convergence.csv`.
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl ReportTable {
    pub fn write<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `{verdict, reports: [...]}`, each entry tagged with its `kind` and
/// `verdict`.
pub fn report_document(reports: &[Report]) -> Result<Value> {
    let entries = reports.iter().map(Report::to_json).collect::<Result<Vec<_>>>()?;
    let all = reports.iter().all(Report::passed);
    Ok(serde_json::json!({
        "verdict": Verdict::of(all),
        "reports": entries,
    }))
}

/// One table per report kind present: `convergence.csv` (one row per `Δt`),
/// `inclusions.csv`, `tracking.csv`, `constants.csv`.
pub fn report_tables(reports: &[Report]) -> Result<Vec<ReportTable>> {
    let (mut conv, mut incl, mut track, mut consts) = (vec![], vec![], vec![], vec![]);
    for r in reports {
        let v = if r.passed() { "pass" } else { "fail" }.to_string();
        match r {
            Report::Convergence(s) => {
                for row in &s.rows {
                    conv.push(vec![
                        s.label.clone(),
                        row.dt.to_string(),
                        row.steps.to_string(),
                        row.prune_cell.to_string(),
                        row.final_error.to_string(),
                        row.max_error.to_string(),
                        row.bound.to_string(),
                        row.max_slack.to_string(),
                        opt(s.fitted_order),
                        if row.verdict.passed() { "pass" } else { "fail" }.to_string(),
                    ]);
                }
            }
            Report::Inclusion(c) => incl.push(vec![
                serde_json::to_value(c.tag)?.as_str().unwrap_or_default().to_string(),
                c.label.clone(),
                c.dt.to_string(),
                c.m.to_string(),
                c.sample_count.to_string(),
                c.radius.to_string(),
                c.max_excess.to_string(),
                c.tolerance.to_string(),
                opt(c.two_sided_distance),
                opt(c.two_sided_tolerance),
                v,
            ]),
            Report::Tracking(t) => track.push(vec![
                serde_json::to_value(t.kind)?.as_str().unwrap_or_default().to_string(),
                t.dt.to_string(),
                t.steps.to_string(),
                t.max_deviation.to_string(),
                t.theoretical_bound.to_string(),
                t.sampling_slack.to_string(),
                t.lookahead_depth.to_string(),
                t.beam_width.to_string(),
                v,
            ]),
            Report::Constants(c) => consts.push(vec![
                c.label.clone(),
                c.samples.to_string(),
                c.declared.k.to_string(),
                c.declared.l.to_string(),
                c.declared.s.to_string(),
                c.max_velocity.to_string(),
                c.max_jacobian_norm.to_string(),
                c.max_taylor_ratio.to_string(),
                v,
            ]),
        }
    }
    let tables = [
        (
            "convergence.csv",
            vec!["label", "dt", "steps", "prune_cell", "final_error", "max_error", "bound", "slack", "fitted_order", "verdict"],
            conv,
        ),
        (
            "inclusions.csv",
            vec!["tag", "label", "dt", "M", "samples", "radius", "max_excess", "tolerance", "two_sided", "two_sided_tolerance", "verdict"],
            incl,
        ),
        (
            "tracking.csv",
            vec!["kind", "dt", "steps", "max_deviation", "bound", "slack", "lookahead", "beam", "verdict"],
            track,
        ),
        (
            "constants.csv",
            vec!["label", "samples", "K", "L", "S", "max_velocity", "max_jacobian_norm", "max_taylor_ratio", "verdict"],
            consts,
        ),
    ];
    Ok(tables
        .into_iter()
        .filter(|t| !t.2.is_empty())
        .map(|(name, header, rows)| ReportTable { name, header, rows })
        .collect())
}

/// Writes `report.json` (all entries, in order) plus the tables of
/// [`report_tables`]. Returns whether every verdict passed.
pub fn emit_report(reports: &[Report], dir: &Path) -> Result<bool> {
    if reports.is_empty() {
        return Err(Error::NothingToReport);
    }
    std::fs::create_dir_all(dir)?;
    let doc = report_document(reports)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    for t in report_tables(reports)? {
        t.write(std::fs::File::create(dir.join(t.name))?)?;
    }
    Ok(reports.iter().all(Report::passed))
}
