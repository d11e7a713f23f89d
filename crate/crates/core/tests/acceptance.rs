//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any of them fails.

use airfl::ao::random_phases;
use airfl::beamforming::{build_quadforms, mmse_step, DualState};
use airfl::channel::ChannelSet;
use airfl::conic::{
    project_cone, smat, solve_conic, svec, svec_index, svec_len, ConeSpec, ConicProgram, ConicSettings, ConicStatus,
    ProgramBuilder,
};
use airfl::experiments::{
    run_oracle, run_sweep, solve_trial, trial_channels, write_csv, OracleKind, RunConfig, SweepAxis,
    SweepSpec,
};
use airfl::linalg::{CVector, RMatrix};
use airfl::metrics::{check_feasibility, mse, SystemParams};
use airfl::phase::{build_lifted, lift, lifted_form};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::process::ExitCode;
use std::time::Instant;

const TRIALS: usize = 20;
const NR_VALUES: [usize; 4] = [2, 4, 6, 8];
const M_VALUES: [usize; 4] = [10, 20, 30, 40];
const IRS_DISTANCES: [f64; 3] = [30.0, 45.0, 60.0];

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// `h_k + Gᴴ diag(v) g_k`, written out entrywise.
fn hbar_direct(ch: &ChannelSet, v: &CVector) -> Vec<CVector> {
    (0..ch.k())
        .map(|k| {
            CVector::from_fn(ch.nr(), |n, _| {
                let mut z = ch.h[k][n];
                for m in 0..ch.m() {
                    z += ch.irs_bs[(m, n)].conj() * v[m] * ch.g[k][m];
                }
                z
            })
        })
        .collect()
}

/// Received powers, SIC rates and gap residuals from first principles.
fn sic_report(b: &CVector, hbar: &[CVector], p: &[f64], sp: &SystemParams) -> (Vec<f64>, Vec<f64>) {
    let k = hbar.len();
    let rx: Vec<f64> = (0..k).map(|i| b.dotc(&hbar[i]).norm_sqr() * p[i]).collect();
    let noise = b.norm_squared() * sp.sigma2;
    let tail = |i: usize| rx[i + 1..].iter().sum::<f64>();
    let rates = (0..k).map(|i| sp.bandwidth_hz * (1.0 + rx[i] / (tail(i) + noise)).log2()).collect();
    let gaps = (0..k.saturating_sub(1)).map(|i| rx[i] - tail(i) - sp.p_gap).collect();
    (rates, gaps)
}

fn instance(seed: u64, k: usize) -> (ChannelSet, SystemParams, ChaCha8Rng) {
    let mut cfg = RunConfig::default();
    cfg.scenario.k = k;
    let ch = trial_channels(&cfg, seed).unwrap();
    (ch, cfg.system_params().unwrap(), ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000)))
}

fn mse_oracle() -> Check {
    let mut cfg = RunConfig::default();
    cfg.trials = 100;
    let r = run_oracle(OracleKind::MseMc, &cfg, std::io::sink()).unwrap();
    let worst = r.rows.iter().map(|x| x.gap.abs()).fold(0.0, f64::max);
    let ok = r.rows.len() == 100 && r.rows.iter().all(|x| x.gap.abs() <= 4.0);
    check(ok, format!("{} instances at 1e5 samples, max |z| = {worst:.2} (limit 4)", r.rows.len()))
}

fn mmse_stationarity() -> Check {
    let mut worst_grad: f64 = 0.0;
    let mut beaten = 0usize;
    let mut total = 0usize;
    for seed in 0..100u64 {
        let (ch, sp, mut rng) = instance(seed, 3);
        let v = random_phases(ch.m(), &mut rng);
        let hbar = hbar_direct(&ch, &v);
        let p: Vec<f64> = (0..ch.k()).map(|_| sp.p_max * rng.random_range(0.1..=1.0)).collect();
        let qf = build_quadforms(&hbar, &p, &sp).unwrap();
        let b = mmse_step(&qf, &DualState::zeros(ch.k()), &hbar, &p, sp.sigma2, 0.0).unwrap();
        let f = |x: &CVector| mse(x, &hbar, &p, sp.sigma2);
        let f0 = f(&b);
        // ∂f/∂b̄ = ½(∂f/∂Re b + j ∂f/∂Im b), central differences
        let step = 1e-3 * b.norm() / (b.len() as f64).sqrt();
        let mut grad = CVector::zeros(b.len());
        for i in 0..b.len() {
            let mut parts = [0.0; 2];
            for (j, dir) in [Complex64::new(step, 0.0), Complex64::new(0.0, step)].into_iter().enumerate() {
                let mut plus = b.clone();
                let mut minus = b.clone();
                plus[i] += dir;
                minus[i] -= dir;
                parts[j] = (f(&plus) - f(&minus)) / (2.0 * step);
            }
            grad[i] = Complex64::new(parts[0], parts[1]) * 0.5;
        }
        worst_grad = worst_grad.max(grad.norm());
        let scale = b.norm() / (b.len() as f64).sqrt();
        for t in 0..1000 {
            let other = if t % 2 == 0 {
                CVector::from_fn(b.len(), |_, _| cn(&mut rng) * scale)
            } else {
                CVector::from_fn(b.len(), |i, _| b[i] + cn(&mut rng) * scale * 0.01)
            };
            total += 1;
            if f(&other) >= f0 {
                beaten += 1;
            }
        }
    }
    check(
        worst_grad <= 1e-8 && beaten == total,
        format!("max Wirtinger gradient {worst_grad:.2e} (limit 1e-8), beats {beaten}/{total} random receivers"),
    )
}

fn lifted_identity() -> Check {
    let (ch, sp, mut rng) = instance(7, 3);
    let v0 = random_phases(ch.m(), &mut rng);
    let hbar0 = hbar_direct(&ch, &v0);
    let p: Vec<f64> = (0..ch.k()).map(|_| sp.p_max * rng.random_range(0.1..=1.0)).collect();
    let qf = build_quadforms(&hbar0, &p, &sp).unwrap();
    let b = mmse_step(&qf, &DualState::zeros(ch.k()), &hbar0, &p, sp.sigma2, 0.0).unwrap();
    let ld = build_lifted(&b, &p, &ch, &sp);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = random_phases(ch.m(), &mut rng);
        let direct = mse(&b, &hbar_direct(&ch, &v), &p, sp.sigma2);
        worst = worst.max((lifted_form(&ld.f0, &lift(&v)) + ld.constant - direct).abs());
    }
    check(worst <= 1e-8, format!("100 phase vectors, max |lifted − direct| = {worst:.2e} (limit 1e-8)"))
}

fn sdr_lower_bound() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for m in [2usize, 3] {
        let mut cfg = RunConfig::default();
        cfg.trials = 50;
        cfg.scenario.m = m;
        let r = run_oracle(OracleKind::GridPhase, &cfg, std::io::sink()).unwrap();
        let bounds: Vec<_> = r.metric("sdr_bound").collect();
        let worst = bounds.iter().map(|x| x.gap).fold(f64::NEG_INFINITY, f64::max);
        let rec: Vec<_> = r.metric("recovered").collect();
        let within = rec.iter().filter(|x| x.gap <= 0.05).count();
        let frac = within as f64 / rec.len().max(1) as f64;
        ok &= !bounds.is_empty() && worst <= 1e-4 && frac >= 0.9;
        details.push(format!(
            "M={m}: bound − grid ≤ {worst:.1e} on {} instances, recovered within 5% on {within}/{} ({} skipped)",
            bounds.len(),
            rec.len(),
            r.skipped
        ));
    }
    check(ok, details.join("; "))
}

fn power_oracle() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for k in [1usize, 2] {
        let mut cfg = RunConfig::default();
        cfg.trials = 50;
        cfg.scenario.k = k;
        let r = run_oracle(OracleKind::GridPower, &cfg, std::io::sink()).unwrap();
        let grid: Vec<_> = r.metric("grid").collect();
        let worst = grid.iter().map(|x| x.gap).fold(f64::NEG_INFINITY, f64::max);
        ok &= !grid.is_empty() && worst <= 1e-4;
        let mut line = format!("K={k}: solver − grid ≤ {worst:.1e} on {} instances", grid.len());
        if k == 1 {
            let cf: Vec<_> = r.metric("closed_form").collect();
            let worst_cf = cf.iter().map(|x| x.gap).fold(0.0, f64::max);
            ok &= cf.len() == grid.len() && worst_cf <= 1e-6;
            line.push_str(&format!(", |solver − closed form| ≤ {worst_cf:.1e}"));
        }
        details.push(line);
    }
    check(ok, details.join("; "))
}

fn unit_diag_sdp(c: &RMatrix) -> ConicProgram {
    let n = c.nrows();
    let d = svec_len(n);
    let mut pb = ProgramBuilder::new(d);
    for (j, v) in svec(c).iter().enumerate() {
        pb.add_cost(j, *v);
    }
    for i in 0..n {
        pb.eq(vec![(svec_index(n, i, i), 1.0)], 1.0);
    }
    pb.psd(n, (0..d).map(|j| (vec![(j, 1.0)], 0.0)).collect());
    pb.build()
}

/// `(‖Ax+s−b‖∞, ‖Aᵀy+c‖∞, |cᵀx+bᵀy|)`, each over `1 + scale`, from the dense matrix.
fn kkt_dense(prog: &ConicProgram, x: &[f64], s: &[f64], y: &[f64]) -> [f64; 3] {
    let a = prog.a.to_dense();
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let ax: Vec<f64> = a.iter().map(|row| row.iter().zip(x).map(|(r, z)| r * z).sum()).collect();
    let aty: Vec<f64> = (0..x.len()).map(|j| a.iter().zip(y).map(|(row, yi)| row[j] * yi).sum()).collect();
    let pr: Vec<f64> = (0..ax.len()).map(|i| ax[i] + s[i] - prog.b[i]).collect();
    let du: Vec<f64> = aty.iter().zip(&prog.c).map(|(a, c)| a + c).collect();
    let pobj: f64 = prog.c.iter().zip(x).map(|(c, z)| c * z).sum();
    let dobj: f64 = -prog.b.iter().zip(y).map(|(b, z)| b * z).sum::<f64>();
    [
        inf(&pr) / (1.0 + inf(&ax).max(inf(s)).max(inf(&prog.b))),
        inf(&du) / (1.0 + inf(&aty).max(inf(&prog.c))),
        (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
    ]
}

fn conic_suite() -> Check {
    let settings = ConicSettings::default();
    let c = RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let sol = solve_conic(&unit_diag_sdp(&c), &settings).unwrap();
    let x = smat(&sol.x, 2);
    let value = (&c * &x).trace();
    let sdp_ok = sol.status == ConicStatus::Optimal && (value + 2.0).abs() <= 1e-5;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut proj_err: f64 = 0.0;
    let mut expansion: f64 = f64::NEG_INFINITY;
    for _ in 0..500 {
        let cones = ConeSpec {
            zero: rng.random_range(0..3),
            nonneg: rng.random_range(0..4),
            soc: vec![rng.random_range(2..6)],
            psd: vec![rng.random_range(1..5)],
            hpsd: vec![rng.random_range(1..5)],
        };
        let d = cones.dim();
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let pu = project_cone(&u, &cones);
        let ppu = project_cone(&pu, &cones);
        let pw = project_cone(&w, &cones);
        proj_err = proj_err.max(pu.iter().zip(&ppu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        expansion = expansion.max(dist(&pu, &pw) - dist(&u, &w));
    }
    let proj_ok = proj_err <= 1e-10 && expansion <= 1e-10;

    let mut kkt_gap: f64 = 0.0;
    for _ in 0..10 {
        let g = RMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let prog = unit_diag_sdp(&(&g + g.transpose()));
        let s = solve_conic(&prog, &settings).unwrap();
        let mine = kkt_dense(&prog, &s.x, &s.s, &s.y);
        let rep = [s.residuals.primal, s.residuals.dual, s.residuals.gap];
        kkt_gap = kkt_gap.max(mine.iter().zip(&rep).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    check(
        sdp_ok && proj_ok && kkt_gap <= 1e-9,
        format!(
            "2x2 SDP value {value:.7}; projection idempotence error {proj_err:.1e}, max expansion {expansion:.1e}; \
             KKT discrepancy {kkt_gap:.1e} (limit 1e-9)"
        ),
    )
}

/// Everything the trend, feasibility and monotonicity checks need from one trial.
#[derive(Clone)]
struct Record {
    nr: usize,
    m: usize,
    irs: bool,
    qos: bool,
    distance: Option<f64>,
    marked_feasible: bool,
    final_mse: Option<f64>,
    rates: Vec<f64>,
    gaps: Vec<f64>,
    trace: Vec<f64>,
}

fn simulate(cfg: &RunConfig, trial: usize) -> Record {
    let sp = cfg.system_params().unwrap();
    let run = solve_trial(cfg, trial).unwrap();
    let mut rec = Record {
        nr: cfg.scenario.nr,
        m: cfg.scenario.effective_m(),
        irs: cfg.scenario.irs_enabled,
        qos: cfg.system.qos_enabled,
        distance: cfg.scenario.irs_bs_distance,
        marked_feasible: false,
        final_mse: None,
        rates: Vec::new(),
        gaps: Vec::new(),
        trace: Vec::new(),
    };
    if let (Ok(init), Some(out)) = (&run.init, &run.outcome) {
        let sol = &out.solution;
        let hbar = hbar_direct(&init.channels, &sol.v);
        let (rates, gaps) = sic_report(&sol.b, &hbar, &sol.p, &sp);
        rec.marked_feasible = check_feasibility(sol, &hbar, &sp, &cfg.solver.tolerances).feasible;
        rec.final_mse = Some(mse(&sol.b, &hbar, &sol.p, sp.sigma2));
        rec.rates = rates;
        rec.gaps = gaps;
        rec.trace = out.trace.iter().map(|t| t.mse).collect();
    }
    rec
}

struct Campaign {
    fig2: Vec<Record>,
    fig4: Vec<Record>,
}

impl Campaign {
    fn all(&self) -> impl Iterator<Item = &Record> {
        self.fig2.iter().chain(&self.fig4)
    }
}

fn run_campaign() -> Campaign {
    let started = Instant::now();
    let mut fig2 = Vec::new();
    for qos in [true, false] {
        for &nr in &NR_VALUES {
            for irs in [false, true] {
                let mut cfg = RunConfig::default();
                cfg.system.qos_enabled = qos;
                cfg.scenario.irs_enabled = irs;
                SweepAxis::Nr.apply(&mut cfg, nr as f64).unwrap();
                fig2.extend((0..TRIALS).map(|t| simulate(&cfg, t)));
            }
        }
    }
    eprintln!("  Nr campaign done in {:.0?}", started.elapsed());
    let mut fig4 = Vec::new();
    for &d in &IRS_DISTANCES {
        for &m in &M_VALUES {
            let mut cfg = RunConfig::default();
            cfg.scenario.nr = 4;
            cfg.scenario.irs_bs_distance = Some(d);
            SweepAxis::M.apply(&mut cfg, m as f64).unwrap();
            fig4.extend((0..TRIALS).map(|t| simulate(&cfg, t)));
        }
    }
    eprintln!("  M campaign done in {:.0?}", started.elapsed());
    Campaign { fig2, fig4 }
}

fn median_mse<'a>(rows: impl Iterator<Item = &'a Record>) -> (f64, usize) {
    let v: Vec<f64> = rows.filter(|r| r.marked_feasible).filter_map(|r| r.final_mse).collect();
    let n = v.len();
    (median(v), n)
}

fn feasibility(c: &Campaign) -> Check {
    let r_min = RunConfig::default().system.r_min_bps;
    let marked: Vec<&Record> = c.all().filter(|r| r.marked_feasible).collect();
    let bad = marked
        .iter()
        .filter(|r| {
            let qos_bad = r.qos && r.rates.iter().any(|&x| x < r_min - 1e-3);
            qos_bad || r.gaps.iter().any(|&g| g < -1e-6)
        })
        .count();
    let total = c.all().count();
    check(
        bad == 0 && !marked.is_empty(),
        format!("{}/{total} trials marked feasible, {bad} violate the rate or gap limits", marked.len()),
    )
}

fn monotone(c: &Campaign) -> Check {
    let traced: Vec<&Record> = c.all().filter(|r| !r.trace.is_empty()).collect();
    let rising = traced.iter().filter(|r| r.trace.windows(2).any(|w| w[1] > w[0] + 1e-9)).count();
    let worse = traced.iter().filter(|r| r.trace.last() > r.trace.first()).count();
    check(
        rising == 0 && worse == 0,
        format!("{} traces: {rising} rise by more than 1e-9, {worse} end above their start", traced.len()),
    )
}

fn fig2(c: &Campaign) -> Check {
    let med = |nr: usize, irs: bool, qos: bool| {
        median_mse(c.fig2.iter().filter(|r| r.nr == nr && r.irs == irs && r.qos == qos)).0
    };
    let on: Vec<f64> = NR_VALUES.iter().map(|&n| med(n, true, true)).collect();
    let off: Vec<f64> = NR_VALUES.iter().map(|&n| med(n, false, true)).collect();
    let decreasing = on.windows(2).all(|w| w[1] < w[0]) && off.windows(2).all(|w| w[1] < w[0]);
    let irs_helps = on.iter().zip(&off).all(|(a, b)| a < b);
    let mut qos_cost = true;
    for &n in &NR_VALUES {
        for irs in [false, true] {
            qos_cost &= med(n, irs, true) >= med(n, irs, false);
        }
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    let noqos: Vec<f64> = NR_VALUES.iter().map(|&n| med(n, true, false)).collect();
    check(
        decreasing && irs_helps && qos_cost,
        format!(
            "median MSE over Nr 2,4,6,8: IRS on [{}], IRS off [{}], IRS on without QoS [{}]; \
             decreasing {decreasing}, IRS below no-IRS {irs_helps}, QoS not below no-QoS {qos_cost}",
            fmt(&on),
            fmt(&off),
            fmt(&noqos)
        ),
    )
}

fn fig3(c: &Campaign) -> Check {
    let rows: Vec<&Record> = c
        .fig2
        .iter()
        .filter(|r| r.nr == 4 && r.irs && r.qos && r.marked_feasible)
        .collect();
    let k = rows.first().map_or(0, |r| r.rates.len());
    let med: Vec<f64> = (0..k).map(|i| median(rows.iter().map(|r| r.rates[i]).collect())).collect();
    let ok = k >= 2
        && (0..k - 1).all(|i| med[k - 1] > med[i])
        && (1..k).all(|i| med[0] < med[i]);
    let shown = med.iter().map(|x| format!("{:.4}", x / 1e6)).collect::<Vec<_>>().join(", ");
    check(ok, format!("median rates in decoding order [{shown}] Mbps over {} trials", rows.len()))
}

fn fig4(c: &Campaign) -> Check {
    let med = |m: usize, d: f64| median_mse(c.fig4.iter().filter(|r| r.m == m && r.distance == Some(d))).0;
    let table: Vec<Vec<f64>> = IRS_DISTANCES.iter().map(|&d| M_VALUES.iter().map(|&m| med(m, d)).collect()).collect();
    let along_m = table.iter().all(|row| row.windows(2).all(|w| w[1] < w[0]));
    let along_d = (0..M_VALUES.len()).all(|j| (1..IRS_DISTANCES.len()).all(|i| table[i][j] >= table[i - 1][j]));
    let rows = IRS_DISTANCES
        .iter()
        .zip(&table)
        .map(|(d, row)| format!("d={d}: [{}]", row.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join(" ");
    check(
        along_m && along_d,
        format!("median MSE over M 10,20,30,40 {rows}; decreasing in M {along_m}, non-decreasing in distance {along_d}"),
    )
}

fn determinism() -> Check {
    let mut cfg = RunConfig::default();
    cfg.scenario.m = 8;
    let spec = SweepSpec::new(SweepAxis::Nr, vec![2.0, 4.0], 3, cfg).unwrap();
    let render = || {
        let mut buf = Vec::new();
        write_csv(&run_sweep(&spec).unwrap(), &mut buf).unwrap();
        buf
    };
    let a = render();
    let b = render();
    check(a == b && !a.is_empty(), format!("two runs of a 12-row sweep, {} bytes, identical {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, started: Instant, c: Check| {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1?}]", c.detail, started.elapsed());
        if !c.pass {
            failed += 1;
        }
    };
    let t = Instant::now();
    report("mse_oracle_equivalence", t, mse_oracle());
    let t = Instant::now();
    report("mmse_stationarity", t, mmse_stationarity());
    let t = Instant::now();
    report("lifted_objective_identity", t, lifted_identity());
    let t = Instant::now();
    report("sdr_lower_bound", t, sdr_lower_bound());
    let t = Instant::now();
    report("power_step_oracle", t, power_oracle());
    let t = Instant::now();
    report("conic_unit_suite", t, conic_suite());
    let t = Instant::now();
    let campaign = run_campaign();
    report("feasibility_guarantee", t, feasibility(&campaign));
    let t = Instant::now();
    report("ao_monotone_trace", t, monotone(&campaign));
    report("fig2_trend", t, fig2(&campaign));
    report("fig3_trend", t, fig3(&campaign));
    report("fig4_trend", t, fig4(&campaign));
    let t = Instant::now();
    report("determinism", t, determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
