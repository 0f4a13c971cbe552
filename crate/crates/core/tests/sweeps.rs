use qcr_core::config::{Grid, RunConfig};
use qcr_core::reflection::{write_manifest, FitParam, ManifestEntry};
use qcr_core::sweep::{compute_sweep, config_hash, fit_manifest, fit_table, run_sweep, synthesize_traces, SweepKind};
use qcr_core::units::{ghz_to_angular, mhz_to_angular};
use qcr_core::Error;

fn small(threads: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.sweep.bias_mv = Grid::Range { start: 0.0, stop: 0.25, points: 6 };
    cfg.sweep.power = Grid::List(vec![-100.0, -84.4]);
    cfg.output.threads = threads;
    cfg
}

#[test]
fn tables_do_not_depend_on_thread_count() {
    for kind in [SweepKind::Damping, SweepKind::Temperature, SweepKind::Matsubara] {
        let (one, _) = compute_sweep(&small(1), kind).unwrap();
        let (many, _) = compute_sweep(&small(4), kind).unwrap();
        assert_eq!(one, many, "{}", kind.name());
        assert_eq!(one.failed_rows(), 0);
    }
}

#[test]
fn rows_follow_power_major_grid_order() {
    let (t, _) = compute_sweep(&small(0), SweepKind::Damping).unwrap();
    assert_eq!(t.rows.len(), 12);
    assert_eq!(t.header.last(), Some(&"status"));
    let bias: Vec<f64> = t.rows[..6].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(bias.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn empty_power_grid_is_a_config_error() {
    let mut cfg = small(0);
    cfg.sweep.power = Grid::List(vec![]);
    assert!(matches!(compute_sweep(&cfg, SweepKind::Damping), Err(Error::Config { .. })));
}

#[test]
fn config_hash_ignores_output_section() {
    let a = small(1);
    let mut b = small(7);
    b.output.directory = "elsewhere".into();
    assert_eq!(config_hash(&a), config_hash(&b));
    let mut c = small(1);
    c.junction.dynes = 5e-4;
    assert_ne!(config_hash(&a), config_hash(&c));
}

#[test]
fn run_sweep_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(0);
    cfg.output.directory = dir.path().to_path_buf();
    let out = run_sweep(&cfg, SweepKind::Matsubara).unwrap();
    assert_eq!(out.failed, 0);
    let text = std::fs::read_to_string(&out.manifest).unwrap();
    assert!(text.contains(&config_hash(&cfg)));
    let lines = std::fs::read_to_string(&out.table).unwrap().lines().count();
    assert_eq!(lines, out.rows + 1);
}

#[test]
fn noiseless_synthesis_fits_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(0);
    cfg.sweep.bias_mv = Grid::List(vec![0.0, 0.2]);
    cfg.synthesis.noise_sigma = 0.0;
    cfg.output.directory = dir.path().to_path_buf();
    let out = synthesize_traces(&cfg).unwrap();
    assert_eq!(out.traces, 4);
    let truth: Vec<Vec<String>> = csv::Reader::from_path(&out.truth)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    let fits = fit_manifest(&out.manifest).unwrap();
    for ((_, fit), t) in fits.iter().zip(&truth) {
        let p = fit.as_ref().unwrap().params;
        let f: Vec<f64> = t[3..7].iter().map(|s| s.parse().unwrap()).collect();
        let expected = [ghz_to_angular(f[0]), mhz_to_angular(f[1]), mhz_to_angular(f[2]), f[3]];
        for (q, e) in FitParam::ALL.into_iter().zip(expected) {
            let scale = if e == 0.0 { 1.0 } else { e.abs() };
            let err = (p.get(q) - e).abs() / scale;
            assert!(err <= 1e-9, "{} {err:e}", q.name());
        }
    }
}

#[test]
fn one_bad_trace_does_not_sink_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(0);
    cfg.sweep.bias_mv = Grid::List(vec![0.0, 0.1]);
    cfg.sweep.power = Grid::List(vec![-100.0]);
    cfg.output.directory = dir.path().to_path_buf();
    let out = synthesize_traces(&cfg).unwrap();
    let mut entries = vec![ManifestEntry { file: "missing.csv".into(), v_mv: 0.05, p_s_dbm: -100.0 }];
    entries.extend(
        ["trace_0000.csv", "trace_0001.csv"]
            .iter()
            .map(|f| ManifestEntry { file: (*f).into(), v_mv: 0.0, p_s_dbm: -100.0 }),
    );
    write_manifest(&out.manifest, &entries).unwrap();
    let t = fit_table(&fit_manifest(&out.manifest).unwrap());
    assert_eq!(t.rows.len(), 3);
    assert_eq!(t.failed_rows(), 1);
    assert_ne!(t.rows[0].last().unwrap(), "ok");
}
