use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use diffincl::bounds::BoundSheet;
use diffincl::euler::{default_prune_cell, evolve_reach, reference_tube, StepMaps, DEFAULT_REFINE};
use diffincl::geometry::{directed_hausdorff, Vector};
use diffincl::model::{benchmark, load_problem, validate_constants, ProblemSpec};
use diffincl::tracking::{export_track, make_reference, track_controls, track_nonconvex, track_relaxed, WeightSchedule};
use diffincl::verify::{
    check_coco_inclusion, check_psi_hull_inclusion, emit_report, report_document, report_tables, run_convergence_study,
    PruneRule, Report, DEFAULT_SEED,
};

/// Set-valued Forward Euler for differential inclusions x' ∈ {f_1(x), …, f_M(x)}.
#[derive(Parser)]
#[command(name = "diffincl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the sampled reachable sets and export the tube.
    Reach {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        /// Snapping cell; defaults to Δt²KL/4.
        #[arg(long)]
        prune_cell: Option<f64>,
        /// Also export a reference tube refined by this factor.
        #[arg(long)]
        refine: Option<usize>,
    },
    /// Convergence study of the reachable sets against a refined reference.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125,0.00625")]
        dt_list: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_REFINE)]
        refine: usize,
        /// Fixed snapping cell for every Δt; defaults to Δt²KL/4 per Δt.
        #[arg(long)]
        prune_cell: Option<f64>,
    },
    /// Track a manufactured reference solution with an Euler path.
    Track {
        mode: TrackMode,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value_t = DEFAULT_REFINE)]
        refine: usize,
        #[arg(long, default_value_t = 8)]
        grid_res: usize,
        /// Lookahead depth for nonconvex tracking; defaults to the dimension.
        #[arg(long)]
        lookahead: Option<usize>,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// Reference weights: uniform, pure:I, chatter:A,B[,PERIOD], blend:A,B or weights:W1,W2,...
        #[arg(long, default_value = "uniform")]
        schedule: String,
    },
    /// Sampled checks of the hull inclusions.
    VerifyInclusions {
        mode: InclusionMode,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 8)]
        grid_res: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Base point for psi-hull; defaults to x0.
        #[arg(long, value_delimiter = ',')]
        point: Option<Vec<f64>>,
    },
    /// Evaluate every error bound for the problem's constants.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
    },
    /// Audit the declared constants K, L, S on the validation box.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Benchmark name or path to a JSON/TOML problem file.
    #[arg(long)]
    problem: Option<String>,
    /// Directory for report.json, CSV tables and exports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrackMode {
    Relaxed,
    Nonconvex,
    Controls,
}

#[derive(Clone, Copy, ValueEnum)]
enum InclusionMode {
    Coco,
    PsiHull,
}

fn load(spec: Option<&str>, fallback: &str) -> Result<ProblemSpec> {
    let spec = spec.unwrap_or(fallback);
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return load_problem(&text).with_context(|| format!("loading {spec}"));
    }
    Ok(benchmark(spec)?)
}

fn steps(problem: &ProblemSpec, dt: f64) -> Result<usize> {
    let n = (problem.horizon / dt).round();
    if !(dt > 0.0) || n < 1.0 || (n * dt - problem.horizon).abs() > 1e-9 * problem.horizon {
        bail!("--dt {dt} must divide T = {}", problem.horizon);
    }
    Ok(n as usize)
}

fn parse_schedule(text: &str, m: usize) -> Result<WeightSchedule> {
    let (kind, args) = text.split_once(':').unwrap_or((text, ""));
    let nums = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .filter(|p| !p.is_empty())
            .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number `{p}` in --schedule")))
            .collect()
    };
    let idx = |s: &str| -> Result<Vec<usize>> {
        s.split(',')
            .filter(|p| !p.is_empty())
            .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad index `{p}` in --schedule")))
            .collect()
    };
    Ok(match (kind, idx(args).ok().as_deref()) {
        ("uniform", _) => WeightSchedule::Constant(vec![1.0 / m as f64; m]),
        ("pure", Some(&[i])) => WeightSchedule::Pure(i),
        ("chatter", Some(&[a, b])) => WeightSchedule::Chatter { a, b, period: 1 },
        ("chatter", Some(&[a, b, period])) => WeightSchedule::Chatter { a, b, period },
        ("blend", Some(&[a, b])) => WeightSchedule::Blend { a, b },
        ("weights", _) => WeightSchedule::Constant(nums(args)?),
        _ => bail!("unrecognised --schedule `{text}`"),
    })
}

/// Prints the reports, writes them under `out` if given, and returns the
/// overall verdict.
fn finish(reports: &[Report], common: &Common) -> Result<bool> {
    let passed = match &common.out {
        Some(dir) => emit_report(reports, dir).with_context(|| format!("writing {}", dir.display()))?,
        None => reports.iter().all(Report::passed),
    };
    let mut stdout = std::io::stdout().lock();
    match common.format {
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&report_document(reports)?)?)?,
        Format::Csv => {
            for (i, t) in report_tables(reports)?.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout)?;
                }
                t.write(&mut stdout)?;
            }
        }
    }
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Reach {
            common,
            dt,
            prune_cell,
            refine,
        } => {
            let p = load(common.problem.as_deref(), "signs1d")?;
            let n = steps(&p, dt)?;
            let maps = StepMaps::for_problem(&p, n)?;
            let cell = prune_cell.unwrap_or_else(|| default_prune_cell(dt, p.family.k(), p.family.l()));
            let tube = evolve_reach(&maps, p.x0.coords(), cell)?;
            let allowance = dt * p.family.k() + tube.prune_error_per_step + 1e-9;
            let mut worst: f64 = 0.0;
            for w in tube.clouds.windows(2) {
                worst = worst.max(directed_hausdorff(&w[1], &w[0])?);
            }
            let passed = worst <= allowance;
            let reference = refine.map(|r| reference_tube(&p, r, n, cell)).transpose()?;
            if let Some(dir) = &common.out {
                tube.export(dir, "tube")?;
                if let Some(r) = &reference {
                    r.tube.export(dir, "reference")?;
                }
            }
            let mut stdout = std::io::stdout().lock();
            match common.format {
                Format::Json => {
                    let doc = serde_json::json!({
                        "verdict": if passed { "pass" } else { "fail" },
                        "label": p.label(),
                        "tube": tube.metadata(),
                        "max_step_distance": worst,
                        "step_allowance": allowance,
                        "reference_budget": reference.as_ref().map(|r| r.budget_at(n)),
                    });
                    writeln!(stdout, "{}", serde_json::to_string_pretty(&doc)?)?;
                }
                Format::Csv => tube.write_csv(&mut stdout)?,
            }
            Ok(passed)
        }
        Command::Converge {
            common,
            dt_list,
            refine,
            prune_cell,
        } => {
            let p = load(common.problem.as_deref(), "signs1d")?;
            let rule = prune_cell.map_or(PruneRule::Default, PruneRule::Fixed);
            let study = run_convergence_study(&p, &dt_list, refine, rule)?;
            finish(&[Report::Convergence(study)], &common)
        }
        Command::Track {
            mode,
            common,
            dt,
            refine,
            grid_res,
            lookahead,
            beam,
            schedule,
        } => {
            let fallback = if matches!(mode, TrackMode::Controls) { "affine2d" } else { "signs1d" };
            let p = load(common.problem.as_deref(), fallback)?;
            let n = steps(&p, dt)?;
            let maps = StepMaps::for_problem(&p, n)?;
            let schedule = parse_schedule(&schedule, p.family.m())?;
            let reference = make_reference(&p, n, &schedule, refine)?;
            let (path, report) = match mode {
                TrackMode::Relaxed => track_relaxed(&maps, &reference, grid_res)?,
                TrackMode::Nonconvex => track_nonconvex(&maps, &reference, lookahead, beam, grid_res)?,
                TrackMode::Controls => track_controls(&maps, &reference, beam, grid_res)?,
            };
            if let Some(dir) = &common.out {
                export_track(dir, "path", &reference, &path, &report)?;
            }
            finish(&[Report::Tracking(report)], &common)
        }
        Command::VerifyInclusions {
            mode,
            common,
            dt,
            grid_res,
            samples,
            seed,
            point,
        } => {
            let p = load(common.problem.as_deref(), "affine2d")?;
            let check = match mode {
                InclusionMode::Coco => check_coco_inclusion(&p, dt, samples, seed)?,
                InclusionMode::PsiHull => {
                    let z = match point {
                        Some(z) => Vector::new(z)?,
                        None => p.x0.clone(),
                    };
                    check_psi_hull_inclusion(&p, &z, dt, grid_res, samples, seed)?
                }
            };
            finish(&[Report::Inclusion(check)], &common)
        }
        Command::Bounds { common, dt } => {
            let p = load(common.problem.as_deref(), "signs1d")?;
            let n = steps(&p, dt)?;
            let c = p.family.constants();
            let sheet = BoundSheet::evaluate(c.k, c.l, c.s, p.horizon, p.dim(), p.family.m(), n)?;
            let json = serde_json::to_string_pretty(&sheet)?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("bounds.json"), json.clone() + "\n")?;
            }
            let mut stdout = std::io::stdout().lock();
            match common.format {
                Format::Json => writeln!(stdout, "{json}")?,
                Format::Csv => {
                    let mut wr = csv::Writer::from_writer(&mut stdout);
                    wr.write_record(["bound", "value"])?;
                    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                    for (name, v) in [
                        ("reach_sets", sheet.reach_sets.to_string()),
                        ("convex_path", sheet.convex_path.to_string()),
                        ("nonconvex_path", sheet.nonconvex_path.to_string()),
                        ("controls_path_dt", opt(sheet.controls_path_dt)),
                        ("controls_path_dt2", opt(sheet.controls_path_dt2)),
                        ("coco_radius", opt(sheet.coco_radius)),
                        ("psi_hull_radius", sheet.psi_hull_radius.to_string()),
                    ] {
                        wr.write_record([name, v.as_str()])?;
                    }
                    wr.flush()?;
                }
            }
            Ok(true)
        }
        Command::Validate { common, samples } => {
            let p = load(common.problem.as_deref(), "signs1d")?;
            let report = validate_constants(&p.family, &p.validation_box, samples)?;
            finish(&[Report::Constants(report)], &common)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
