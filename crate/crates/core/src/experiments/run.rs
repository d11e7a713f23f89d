//! Trials, sweeps and the result table.

use super::config::{ConfigError, RunConfig};
use crate::ao::{alternate, initial_candidates, AoError, AoOutcome, Initial};
use crate::channel::{effective_hbar, sample_channels, sample_geometry, ChannelError, ChannelSet};
use crate::metrics::{check_feasibility, mse, rates};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

pub const CSV_HEADER: &str =
    "sweep_axis,sweep_value,irs_enabled,trial,seed,K,Nr,M,final_mse,min_rate_bps,rate_dev1,rate_dev2,rate_dev3,feasible,outer_iters,wall_ms";

/// Number of per-device rate columns in the table.
pub const RATE_COLUMNS: usize = 3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad result table: {0}")]
    Table(String),
    #[error("{0}")]
    OracleCap(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "Nr")]
    Nr,
    #[serde(rename = "M")]
    M,
    #[serde(rename = "irs_bs_distance")]
    IrsBsDistance,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::Nr => "Nr",
            SweepAxis::M => "M",
            SweepAxis::IrsBsDistance => "irs_bs_distance",
        }
    }

    /// Sweeps along `Nr` also run the IRS-free baseline.
    pub fn includes_irs_off(self) -> bool {
        matches!(self, SweepAxis::Nr)
    }

    /// Applies one sweep value to a configuration.
    pub fn apply(self, cfg: &mut RunConfig, value: f64) -> Result<(), ConfigError> {
        let count = |v: f64| -> Result<usize, ConfigError> {
            if v >= 0.0 && v.fract() == 0.0 && v <= 1e6 {
                Ok(v as usize)
            } else {
                Err(ConfigError::Invalid(format!("{} value {v} is not a count", self.name())))
            }
        };
        match self {
            SweepAxis::None => {}
            SweepAxis::Nr => cfg.scenario.nr = count(value)?,
            SweepAxis::M => cfg.scenario.m = count(value)?,
            SweepAxis::IrsBsDistance => cfg.scenario.irs_bs_distance = Some(value),
        }
        cfg.validate()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(SweepAxis::None),
            "Nr" | "nr" => Ok(SweepAxis::Nr),
            "M" | "m" => Ok(SweepAxis::M),
            "irs_bs_distance" => Ok(SweepAxis::IrsBsDistance),
            _ => Err(ConfigError::Invalid(format!(
                "unknown sweep axis {s:?} (expected Nr, M or irs_bs_distance)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>, trials: usize, base: RunConfig) -> Result<Self, ConfigError> {
        if values.is_empty() {
            return Err(ConfigError::Invalid("sweep needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::Invalid("sweep values must be finite".into()));
        }
        if trials == 0 {
            return Err(ConfigError::Invalid("sweep needs at least one trial".into()));
        }
        let mut probe = base.clone();
        for &v in &values {
            axis.apply(&mut probe, v)?;
        }
        Ok(Self {
            axis,
            values,
            trials,
            base,
        })
    }

    /// Rows the sweep produces.
    pub fn cardinality(&self) -> usize {
        let arms = if self.axis.includes_irs_off() { 2 } else { 1 };
        self.values.len() * self.trials * arms
    }
}

/// Parses `"2,4,6,8"`.
pub fn parse_values(s: &str) -> Result<Vec<f64>, ConfigError> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| f64::from_str(t).map_err(|_| ConfigError::Invalid(format!("bad sweep value {t:?}"))))
        .collect::<Result<Vec<f64>, _>>()?;
    if values.is_empty() {
        return Err(ConfigError::Invalid("sweep needs at least one value".into()));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub sweep_axis: SweepAxis,
    pub sweep_value: f64,
    pub irs_enabled: bool,
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    pub nr: usize,
    pub m: usize,
    /// Absent when no feasible starting point was found.
    pub final_mse: Option<f64>,
    pub min_rate_bps: Option<f64>,
    /// Rates in decoding order.
    pub rates_bps: Vec<f64>,
    pub feasible: bool,
    pub outer_iters: usize,
    pub wall_ms: Option<f64>,
}

/// Per-trial seed; trials of one configuration share geometry and fading
/// across sweep points.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ trial as u64
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const GEOMETRY_STREAM: u64 = 1;
pub(crate) const SOLVER_STREAM: u64 = 2;

/// Channel realization of one trial.
pub fn trial_channels(cfg: &RunConfig, seed: u64) -> Result<ChannelSet, ExperimentError> {
    let s = &cfg.scenario;
    let mut geo_rng = rng_for(seed, GEOMETRY_STREAM);
    let geom = sample_geometry(s.k, s.area_side, s.bs_pos, s.resolved_irs_pos(), &mut geo_rng);
    Ok(sample_channels(&geom, &cfg.fading, s.nr, s.effective_m(), seed)?)
}

/// Full solver output of one trial, kept for tests and oracles.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub seed: u64,
    pub channels: ChannelSet,
    pub init: Result<Initial, AoError>,
    pub outcome: Option<AoOutcome>,
}

fn final_mse(o: &AoOutcome) -> f64 {
    o.trace.last().map_or(f64::INFINITY, |r| r.mse)
}

fn full_power(start: &Initial) -> bool {
    let p = &start.solution.p;
    p.iter().all(|&x| x == p[0])
}

/// Final point of the same trial with QoS enabled, as a start.
fn qos_seed(cfg: &RunConfig, trial: usize) -> Result<Option<Initial>, ExperimentError> {
    if cfg.system.qos_enabled || cfg.system.r_min_bps <= 0.0 || !cfg.solver.ao.seed_from_qos {
        return Ok(None);
    }
    let mut on = cfg.clone();
    on.system.qos_enabled = true;
    let run = solve_trial(&on, trial)?;
    Ok(match (run.init, run.outcome) {
        (Ok(init), Some(out)) => Some(Initial {
            solution: out.solution,
            ..init
        }),
        _ => None,
    })
}

/// Runs the loop from every feasible start and keeps the lowest final MSE.
/// Power-ladder starts are used only when no gain-ladder start exists.
pub fn solve_trial(cfg: &RunConfig, trial: usize) -> Result<TrialRun, ExperimentError> {
    let sp = cfg.system_params()?;
    let seed = trial_seed(cfg.seed, trial);
    let channels = trial_channels(cfg, seed)?;
    let mut rng = rng_for(seed, SOLVER_STREAM);
    let solver = &cfg.solver;
    let seeded = qos_seed(cfg, trial)?;
    let starts = match (
        initial_candidates(&channels, &sp, &solver.ao, &solver.beamforming, &solver.tolerances, &mut rng),
        seeded,
    ) {
        (Ok(mut s), extra) => {
            if s.iter().any(full_power) {
                s.retain(full_power);
            }
            s.extend(extra);
            Ok(s)
        }
        (Err(_), Some(extra)) => Ok(vec![extra]),
        (Err(e), None) => Err(e),
    };
    let (init, outcome) = match starts {
        Ok(starts) => {
            let mut best: Option<(Initial, AoOutcome)> = None;
            for start in starts {
                match alternate(&start.channels, &start.solution, &sp, &solver.ao, &solver.steps(), &solver.tolerances, &mut rng) {
                    Ok(o) => {
                        if best.as_ref().is_none_or(|(_, b)| final_mse(&o) < final_mse(b)) {
                            best = Some((start, o));
                        }
                    }
                    Err(e) => log::warn!("trial {trial}: alternating optimization failed: {e}"),
                }
            }
            match best {
                Some((i, o)) => (Ok(i), Some(o)),
                None => (Err(AoError::NoFeasiblePoint(0)), None),
            }
        }
        Err(e) => {
            log::warn!("trial {trial}: {e}");
            (Err(e), None)
        }
    };
    Ok(TrialRun {
        seed,
        channels,
        init,
        outcome,
    })
}

pub fn run_trial(cfg: &RunConfig, trial: usize) -> Result<TrialResult, ExperimentError> {
    run_trial_at(cfg, trial, SweepAxis::None, 0.0)
}

fn run_trial_at(cfg: &RunConfig, trial: usize, axis: SweepAxis, value: f64) -> Result<TrialResult, ExperimentError> {
    let started = Instant::now();
    let sp = cfg.system_params()?;
    let run = solve_trial(cfg, trial)?;
    let s = &cfg.scenario;
    let mut row = TrialResult {
        sweep_axis: axis,
        sweep_value: value,
        irs_enabled: s.irs_enabled,
        trial,
        seed: run.seed,
        k: s.k,
        nr: s.nr,
        m: s.effective_m(),
        final_mse: None,
        min_rate_bps: None,
        rates_bps: Vec::new(),
        feasible: false,
        outer_iters: 0,
        wall_ms: None,
    };
    if let (Ok(init), Some(out)) = (&run.init, &run.outcome) {
        let sol = &out.solution;
        let hbar = effective_hbar(&init.channels, &sol.v)?;
        let r = rates(&sol.b, &hbar, &sol.p, sp.sigma2, sp.bandwidth_hz);
        row.final_mse = Some(mse(&sol.b, &hbar, &sol.p, sp.sigma2));
        row.min_rate_bps = r.iter().copied().reduce(f64::min);
        row.rates_bps = r;
        row.feasible = check_feasibility(sol, &hbar, &sp, &cfg.solver.tolerances).feasible;
        row.outer_iters = out.trace.len() - 1;
    }
    if cfg.output.record_wall_time {
        row.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(row)
}

/// Runs every (value, IRS arm, trial) job and returns rows sorted by
/// `(sweep_value, irs_enabled, trial)`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<TrialResult>, ExperimentError> {
    let arms: Vec<bool> = if spec.axis.includes_irs_off() {
        vec![false, true]
    } else {
        vec![spec.base.scenario.irs_enabled]
    };
    let mut jobs = Vec::with_capacity(spec.cardinality());
    for (vi, &value) in spec.values.iter().enumerate() {
        for &irs in &arms {
            for trial in 0..spec.trials {
                jobs.push((vi, value, irs, trial));
            }
        }
    }
    let mut rows = jobs
        .into_par_iter()
        .map(|(vi, value, irs, trial)| {
            let mut cfg = spec.base.clone();
            cfg.scenario.irs_enabled = irs;
            spec.axis.apply(&mut cfg, value)?;
            run_trial_at(&cfg, trial, spec.axis, value).map(|r| (vi, r))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    rows.sort_by(|(va, a), (vb, b)| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(va.cmp(vb))
            .then(a.irs_enabled.cmp(&b.irs_enabled))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[TrialResult], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        let mut rec = vec![
            r.sweep_axis.name().to_string(),
            r.sweep_value.to_string(),
            r.irs_enabled.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.k.to_string(),
            r.nr.to_string(),
            r.m.to_string(),
            opt(r.final_mse),
            opt(r.min_rate_bps),
        ];
        for i in 0..RATE_COLUMNS {
            rec.push(opt(r.rates_bps.get(i).copied()));
        }
        rec.push(r.feasible.to_string());
        rec.push(r.outer_iters.to_string());
        rec.push(opt(r.wall_ms));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TrialResult>, ExperimentError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(ExperimentError::Table(format!("unexpected header {:?}", header.join(","))));
    }
    let bad = |field: &str, v: &str| ExperimentError::Table(format!("bad {field} value {v:?}"));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<Option<f64>, ExperimentError> {
            let v = get(i);
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad(&header[i], v))
            }
        };
        let int = |i: usize| -> Result<usize, ExperimentError> { get(i).parse().map_err(|_| bad(&header[i], get(i))) };
        let boolean = |i: usize| -> Result<bool, ExperimentError> { get(i).parse().map_err(|_| bad(&header[i], get(i))) };
        let mut rates_bps = Vec::new();
        for i in 0..RATE_COLUMNS {
            if let Some(r) = num(10 + i)? {
                rates_bps.push(r);
            }
        }
        rows.push(TrialResult {
            sweep_axis: get(0).parse().map_err(|_| bad("sweep_axis", get(0)))?,
            sweep_value: num(1)?.ok_or_else(|| bad("sweep_value", ""))?,
            irs_enabled: boolean(2)?,
            trial: int(3)?,
            seed: get(4).parse().map_err(|_| bad("seed", get(4)))?,
            k: int(5)?,
            nr: int(6)?,
            m: int(7)?,
            final_mse: num(8)?,
            min_rate_bps: num(9)?,
            rates_bps,
            feasible: boolean(13)?,
            outer_iters: int(14)?,
            wall_ms: num(15)?,
        });
    }
    Ok(rows)
}
