use airfl::channel::distance;
use airfl::experiments::{
    parse_power, parse_values, read_csv, run_oracle, run_sweep, run_trial, write_csv, ConfigError, DbReference,
    ExperimentError, OracleKind, RunConfig, SweepAxis, SweepSpec, CSV_HEADER, ORACLE_HEADER,
};
use std::io::Write;

fn quick() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.nr = 2;
    cfg.scenario.m = 4;
    cfg.solver.ao.t0_max = 3;
    cfg
}

#[test]
fn nr_sweep_cardinality() {
    let spec = SweepSpec::new(SweepAxis::Nr, vec![2.0, 4.0, 6.0, 8.0], 20, RunConfig::default()).unwrap();
    assert_eq!(spec.cardinality(), 160);
    let spec = SweepSpec::new(SweepAxis::M, vec![10.0, 20.0], 5, RunConfig::default()).unwrap();
    assert_eq!(spec.cardinality(), 10);
}

#[test]
fn bad_sweeps_rejected() {
    assert!(parse_values("").is_err());
    assert!(parse_values("2,x").is_err());
    assert_eq!(parse_values("2, 4,6").unwrap(), vec![2.0, 4.0, 6.0]);
    let cfg = RunConfig::default();
    assert!(SweepSpec::new(SweepAxis::Nr, vec![], 3, cfg.clone()).is_err());
    assert!(SweepSpec::new(SweepAxis::Nr, vec![2.5], 3, cfg.clone()).is_err());
    assert!(SweepSpec::new(SweepAxis::Nr, vec![2.0], 0, cfg.clone()).is_err());
    assert!("diameter".parse::<SweepAxis>().is_err());
    assert_eq!("Nr".parse::<SweepAxis>().unwrap(), SweepAxis::Nr);
}

#[test]
fn sweep_rows_are_ordered_and_round_trip() {
    let spec = SweepSpec::new(SweepAxis::Nr, vec![4.0, 2.0], 2, quick()).unwrap();
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), spec.cardinality());
    let keys: Vec<(f64, bool, usize)> = rows.iter().map(|r| (r.sweep_value, r.irs_enabled, r.trial)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(keys, sorted);
    for r in &rows {
        assert_eq!(r.m, if r.irs_enabled { 4 } else { 0 });
        assert!(r.wall_ms.is_none());
        if r.feasible {
            assert_eq!(r.rates_bps.len(), 3);
            assert!(r.final_mse.unwrap() >= 0.0);
        }
    }

    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);

    let again = run_sweep(&spec).unwrap();
    let mut buf2 = Vec::new();
    write_csv(&again, &mut buf2).unwrap();
    assert_eq!(buf, buf2);
}

#[test]
fn wrong_header_rejected() {
    let err = read_csv("a,b,c\n1,2,3\n".as_bytes()).unwrap_err();
    assert!(matches!(err, ExperimentError::Table(_)));
}

#[test]
fn seed_changes_the_trial() {
    let mut a = quick();
    a.scenario.irs_enabled = false;
    let mut b = a.clone();
    b.seed = 99;
    assert_ne!(run_trial(&a, 0).unwrap().seed, run_trial(&b, 0).unwrap().seed);
}

#[test]
fn power_units_in_config() {
    let r = DbReference::DbW;
    assert!((parse_power("10 dBm", r).unwrap() - 0.01).abs() < 1e-15);
    assert!((parse_power("-80 dBm", r).unwrap() - 1e-11).abs() < 1e-24);
    assert_eq!(parse_power("0 dB", r).unwrap(), 1.0);
    assert!((parse_power("0 dB", DbReference::DbM).unwrap() - 1e-3).abs() < 1e-18);
    let sp = RunConfig::default().system_params().unwrap();
    assert!((sp.sigma2 - 1e-11).abs() < 1e-24);
    assert!((sp.p_gap - 0.01).abs() < 1e-15);
    assert!((sp.gamma_min - 0.189207).abs() < 1e-6);
}

#[test]
fn config_file_loading() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "seed = 5\n[scenario]\nnr = 6\n[system]\np_max = \"1 mW\"\nqos_enabled = false").unwrap();
    let cfg = RunConfig::load(f.path()).unwrap();
    assert_eq!((cfg.seed, cfg.scenario.nr, cfg.scenario.k), (5, 6, 3));
    let sp = cfg.system_params().unwrap();
    assert_eq!(sp.gamma_min, 0.0);
    assert!((sp.p_max - 1e-3).abs() < 1e-18);

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "[scenario]\nantennas = 4").unwrap();
    assert!(matches!(RunConfig::load(bad.path()), Err(ConfigError::Parse(_))));
    assert!(matches!(RunConfig::load(std::path::Path::new("/nonexistent/x.toml")), Err(ConfigError::Io { .. })));
    assert!("[scenario]\nk = 0".parse::<RunConfig>().is_err());
}

#[test]
fn irs_distance_places_the_surface() {
    let mut cfg = RunConfig::default();
    cfg.scenario.irs_bs_distance = Some(45.0);
    let irs = cfg.scenario.resolved_irs_pos();
    assert!((distance(&irs, &cfg.scenario.bs_pos) - 45.0).abs() < 1e-9);
    assert_eq!(irs[2], cfg.scenario.irs_pos[2]);
}

#[test]
fn oracle_tables() {
    let mut cfg = RunConfig::default();
    cfg.scenario.k = 2;
    cfg.scenario.nr = 2;
    cfg.scenario.m = 2;
    cfg.trials = 3;
    let mut buf = Vec::new();
    let report = run_oracle(OracleKind::MseMc, &cfg, &mut buf).unwrap();
    assert!(report.all_pass());
    assert_eq!(String::from_utf8(buf).unwrap().lines().next().unwrap(), ORACLE_HEADER);
    assert_eq!(report.metric("z_score").count(), 3);

    let report = run_oracle(OracleKind::GridPower, &cfg, Vec::new()).unwrap();
    assert!(report.all_pass());

    cfg.scenario.k = 3;
    assert!(matches!(run_oracle(OracleKind::GridPower, &cfg, Vec::new()), Err(ExperimentError::OracleCap(_))));
    cfg.scenario.m = 5;
    assert!(matches!(run_oracle(OracleKind::GridPhase, &cfg, Vec::new()), Err(ExperimentError::OracleCap(_))));
    assert_eq!("grid_phase".parse::<OracleKind>().unwrap(), OracleKind::GridPhase);
}
