use airfl::experiments::{
    parse_values, run_oracle, run_sweep, write_csv, ConfigError, ExperimentError, OracleKind, RunConfig, SweepAxis,
    SweepSpec,
};
use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// IRS-assisted over-the-air aggregation uplink simulator.
#[derive(Debug, Parser)]
#[command(name = "airfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured number of trials at one operating point.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one scenario parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `Nr`, `M` or `irs_bs_distance`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `2,4,6,8`.
        #[arg(long)]
        values: String,
        /// Overrides `trials` from the config.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare solver output against brute-force references.
    Oracle {
        /// `grid_phase`, `grid_power` or `mse_mc`.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a config and print the derived constants in linear units.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => Failure::Config(c.to_string()),
            ExperimentError::OracleCap(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<(), Failure> {
    w.flush().map_err(|e| Failure::Runtime(e.to_string()))
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let trials = cfg.trials;
    let spec = SweepSpec::new(SweepAxis::None, vec![0.0], trials, cfg)?;
    let rows = run_sweep(&spec)?;
    let mut w = create(out)?;
    write_csv(&rows, &mut w)?;
    finish(w)?;
    let feasible = rows.iter().filter(|r| r.feasible).count();
    eprintln!("{} trials, {feasible} feasible, written to {}", rows.len(), out.display());
    Ok(())
}

fn sweep(config: &Path, axis: &str, values: &str, trials: Option<usize>, out: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let axis: SweepAxis = axis.parse()?;
    if axis == SweepAxis::None {
        return Err(Failure::Config("sweep needs an axis other than none".into()));
    }
    let values = parse_values(values)?;
    let trials = trials.unwrap_or(cfg.trials);
    let spec = SweepSpec::new(axis, values, trials, cfg)?;
    let rows = run_sweep(&spec)?;
    let mut w = create(out)?;
    write_csv(&rows, &mut w)?;
    finish(w)?;
    eprintln!("{} rows written to {}", rows.len(), out.display());
    Ok(())
}

fn oracle(kind: &str, config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let kind: OracleKind = kind.parse().map_err(|e: ExperimentError| Failure::Config(e.to_string()))?;
    let mut w = create(out)?;
    let report = run_oracle(kind, &cfg, &mut w)?;
    finish(w)?;
    let passed = report.rows.iter().filter(|r| r.pass).count();
    eprintln!(
        "{kind}: {passed}/{} rows within tolerance, {} instances skipped",
        report.rows.len(),
        report.skipped
    );
    Ok(())
}

fn check(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let sp = cfg.system_params()?;
    let s = &cfg.scenario;
    let irs = s.resolved_irs_pos();
    println!("K            = {}", s.k);
    println!("Nr           = {}", s.nr);
    println!("M            = {}", s.effective_m());
    println!("irs_pos      = [{}, {}, {}]", irs[0], irs[1], irs[2]);
    println!("sigma2_w     = {:e}", sp.sigma2);
    println!("p_max_w      = {:e}", sp.p_max);
    println!("p_gap_w      = {:e}", sp.p_gap);
    println!("bandwidth_hz = {:e}", sp.bandwidth_hz);
    println!("r_min_bps    = {:e}", cfg.system.r_min_bps);
    println!("gamma_min    = {:.6}", sp.gamma_min);
    println!("seed         = {}", cfg.seed);
    println!("trials       = {}", cfg.trials);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match &cli.command {
        Command::Simulate { config, seed, out } => simulate(config, *seed, out),
        Command::Sweep {
            config,
            axis,
            values,
            trials,
            out,
        } => sweep(config, axis, values, *trials, out),
        Command::Oracle { kind, config, out } => oracle(kind, config, out),
        Command::Check { config } => check(config),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
