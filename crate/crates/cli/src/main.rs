use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use coopstream::bound::{bound_region, solve_slotted, SolveLimits};
use coopstream::harness::{self, write_summary_csv, ExperimentReport, HarnessError, ScenarioConfig};
use coopstream::traces::{load_capacity_csv, load_mobility_csv, NetworkTrace};

#[derive(Parser)]
#[command(name = "coopstream", version, about = "Cooperative video streaming experiments")]
struct Cli {
    /// Print the default scenario configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured scheduler, cooperative and not, on shared traces.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write per-run download records.
        #[arg(long)]
        records: bool,
    },
    /// Repeat the experiment for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve the slotted bound on the scenario's down-scoped prefix.
    Bound {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Segment halvings for the upper estimate.
        #[arg(long, default_value_t = 2)]
        refine: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check that a capacity and a mobility CSV form a consistent trace.
    ValidateTraces { capacity: PathBuf, mobility: PathBuf },
}

/// Failure tagged with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self { code: if e.is_config_error() { 1 } else { 2 }, err: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Self { code: 2, err }
    }
}

fn config_failure(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, err: err.into() }
}

fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_reports(out: &Path, reports: &[ExperimentReport]) -> anyhow::Result<()> {
    write_summary_csv(reports, File::create(out.join("summary.csv"))?)?;
    let json = BufWriter::new(File::create(out.join("report.json"))?);
    if let [single] = reports {
        serde_json::to_writer_pretty(json, single)?;
    } else {
        serde_json::to_writer_pretty(json, reports)?;
    }
    Ok(())
}

fn print_summary(reports: &[ExperimentReport]) {
    for r in reports {
        for s in &r.schedulers {
            let gain = s.welfare_gain.map(|g| format!("{:+.1}%", 100.0 * g.mean)).unwrap_or_else(|| "n/a".into());
            println!("{:<28} {:<18} welfare {:>10.3}  vs non-coop {gain}", r.scenario, s.scheduler, s.social_welfare.mean);
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.print_config {
        print!("{}", ScenarioConfig::default().to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(config_failure(anyhow::anyhow!("no command given; try --help")));
    };
    match command {
        Command::Run { config, seed, out, records } => {
            let cfg = load(config.as_deref(), seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let report = harness::run_experiment_with_records(&cfg, records.then_some(out.as_path()))?;
            let reports = [report];
            write_reports(&out, &reports)?;
            print_summary(&reports);
        }
        Command::Sweep { config, axis, values, seed, out } => {
            let cfg = load(config.as_deref(), seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let reports = harness::sweep(&cfg, &axis, &values)?;
            write_reports(&out, &reports)?;
            print_summary(&reports);
        }
        Command::Bound { config, refine, seed, out } => {
            let mut cfg = load(config.as_deref(), seed)?;
            cfg.bound.refine = refine;
            cfg.bound.enabled = true;
            cfg.validate()?;
            let rep_seed = harness::repetition_seed(&cfg, 0);
            let trace = harness::build_trace(&cfg, rep_seed)?;
            let profiles = harness::build_profiles(&cfg, rep_seed)?;
            let Some((_, _, inst)) = harness::micro_instance(&cfg, &trace, &profiles)? else {
                return Err(config_failure(anyhow::anyhow!("scenario too short for a bound")));
            };
            let limits = SolveLimits { max_states: cfg.bound.max_states };
            let plan = solve_slotted(&inst, limits).map_err(HarnessError::from)?;
            let region = bound_region(&inst, refine, limits).map_err(HarnessError::from)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            plan.plan.write_csv(File::create(out.join("plan.csv")).context("writing plan.csv")?).context("writing plan.csv")?;
            serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("region.json")).context("writing region.json")?), &region).context("writing region.json")?;
            println!("micro-instance: {} users, {} slots", inst.num_users(), inst.slots());
            for e in &region.entries {
                println!("  beta/{:<3} welfare {:.6}{}", 1u32 << e.k, e.welfare, if e.exact { "" } else { "  (budget hit, not optimal)" });
            }
            if !region.exact {
                return Err(Failure { code: 2, err: anyhow::anyhow!("solver budget exhausted; raise bound.max_states or shrink the instance") });
            }
        }
        Command::ValidateTraces { capacity, mobility } => {
            let cap = load_capacity_csv(&capacity).with_context(|| capacity.display().to_string()).map_err(config_failure)?;
            let mob = load_mobility_csv(&mobility).with_context(|| mobility.display().to_string()).map_err(config_failure)?;
            let trace = NetworkTrace::new(cap, mob).map_err(config_failure)?;
            println!("ok: {} users, horizon {} s, {} hotspots", trace.num_users(), trace.horizon(), trace.mobility.hotspots());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
