use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use geosweep::lab::{certify, diagnose_scenario, run_rate_study, CertifyOptions, DiagnoseOptions, Reference, Verdict};
use geosweep::scenario::{write_csv, write_metadata, TrajectoryMetadata};
use geosweep::{catching_up, Scenario};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "geosweep",
    version,
    about = "Perturbed sweeping processes on Riemannian manifolds"
)]
struct Cli {
    /// Report errors as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Exit with status 1 when the outcome is a warning.
    #[arg(long, global = true)]
    strict: bool,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,

    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario and write the trajectory CSV and a metadata sidecar.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Step size; defaults to the scenario step.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Convergence study over successively halved steps.
    Rates {
        #[command(flatten)]
        common: Common,
        /// Coarsest step; defaults to T/16.
        #[arg(long)]
        h: Option<f64>,
        /// Number of step levels.
        #[arg(long, default_value_t = 7)]
        levels: usize,
    },
    /// Prox-regularity diagnostics around the trajectory.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
    /// Pass/warn/fail certification of a run.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Step size; defaults to the scenario step.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Load and validate a scenario; optionally write its normalized form.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    invariant: Option<&'a str>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Warn) if cli.strict => ExitCode::from(1),
        Ok(Verdict::Warn) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(2),
        Err(e) => {
            report_error(&e, cli.json_errors);
            ExitCode::from(2)
        }
    }
}

fn report_error(e: &anyhow::Error, json: bool) {
    if !json {
        eprintln!("error: {e:#}");
        return;
    }
    let core = e.chain().find_map(|c| c.downcast_ref::<geosweep::Error>());
    let report = ErrorReport {
        kind: core.map_or("io", |c| c.kind()),
        message: format!("{e:#}"),
        invariant: core.and_then(|c| match c {
            geosweep::Error::Validation { invariant, .. } => Some(invariant.as_str()),
            _ => None,
        }),
    };
    eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
}

fn load(path: &Path) -> anyhow::Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading {}", path.display()))
}

fn open_out(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `traj.csv` → `traj.meta.json`.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn run(cli: &Cli) -> anyhow::Result<Verdict> {
    match &cli.command {
        Command::Simulate { common, h } => simulate(common, *h),
        Command::Rates { common, h, levels } => rates(common, *h, *levels),
        Command::Diagnose { common } => {
            let scenario = load(&common.scenario)?;
            let report = diagnose_scenario(&scenario, &DiagnoseOptions::default());
            write_json(&report, common.out.as_deref())?;
            let clean = report.errors.is_empty() && report.regions.iter().all(|r| r.errors.is_empty());
            Ok(if clean { Verdict::Pass } else { Verdict::Warn })
        }
        Command::Certify { common, h } => {
            let scenario = load(&common.scenario)?;
            let h = match h {
                Some(h) => *h,
                None => scenario.step()?,
            };
            let mut report = certify(&scenario.problem, h, scenario.spec.seed, &CertifyOptions::default());
            report.scenario = scenario.spec.name.clone();
            report.scenario_hash = scenario.hash().to_string();
            write_json(&report, common.out.as_deref())?;
            for reason in &report.reasons {
                log::warn!("{reason}");
            }
            Ok(report.verdict)
        }
        Command::Validate { common } => {
            let scenario = load(&common.scenario)?;
            match &common.out {
                Some(p) => scenario.save(p)?,
                None => eprintln!("{}: valid (hash {})", scenario.spec.name, scenario.hash()),
            }
            Ok(Verdict::Pass)
        }
    }
}

fn simulate(common: &Common, h: Option<f64>) -> anyhow::Result<Verdict> {
    let scenario = load(&common.scenario)?;
    let h = match h {
        Some(h) => h,
        None => scenario.step()?,
    };
    let (traj, failure) = match catching_up(&scenario.problem, h) {
        Ok(t) => (t, None),
        Err(e) => {
            let step = e.step;
            (*e.partial, Some((step, e.source)))
        }
    };
    write_csv(&traj, open_out(common.out.as_deref())?)?;
    if let Some(out) = &common.out {
        let meta = TrajectoryMetadata::new(&scenario, &traj);
        let path = sidecar(out, "meta.json");
        write_metadata(
            &meta,
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        )?;
    }
    if let Some((step, source)) = failure {
        return Err(anyhow::Error::new(source).context(format!("integration stopped at step {step}")));
    }
    let stats = &traj.stats;
    Ok(if !stats.velocity_bound_ok {
        log::warn!(
            "discrete velocity {} exceeds the bound {}",
            stats.max_velocity,
            stats.velocity_bound
        );
        Verdict::Fail
    } else if !stats.certified {
        log::warn!("run not certified: {} flagged steps", stats.flagged_steps);
        Verdict::Warn
    } else {
        Verdict::Pass
    })
}

fn rates(common: &Common, h: Option<f64>, levels: usize) -> anyhow::Result<Verdict> {
    let scenario = load(&common.scenario)?;
    let h0 = h.unwrap_or(scenario.problem.horizon / 16.0);
    let steps: Vec<f64> = (0..levels).map(|k| h0 * 0.5f64.powi(k as i32)).collect();
    let reference = Reference::for_scenario(&scenario).unwrap_or(Reference::Finest);
    let mut study = run_rate_study(&scenario.problem, &steps, &reference)?;
    study.scenario_hash = Some(scenario.hash().to_string());
    write_json(&study, common.out.as_deref())?;
    match &common.out {
        Some(out) => {
            std::fs::write(sidecar(out, "txt"), study.table())?;
            std::fs::write(sidecar(out, "dat"), study.gnuplot())?;
        }
        None => eprint!("{}", study.table()),
    }
    Ok(if study.monotone { Verdict::Pass } else { Verdict::Warn })
}
