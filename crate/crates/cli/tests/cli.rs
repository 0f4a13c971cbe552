use std::process::Command;

fn qcr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qcr"))
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let out = qcr().args(["-c", "/nonexistent/qcr.toml", "sweep-damping"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[sweep]\npower = []\n").unwrap();
    let out = qcr().arg("-c").arg(&path).arg("sweep-damping").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.power"));

    std::fs::write(&path, "[junction]\ngap = 1.0\n").unwrap();
    let out = qcr().arg("-c").arg(&path).arg("sweep-damping").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn printed_defaults_load_back() {
    let out = qcr().arg("print-default-config").output().unwrap();
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("defaults.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = qcr().arg("-c").arg(&path).arg("print-default-config").output().unwrap();
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn selftest_passes() {
    let out = qcr().arg("selftest").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn synthesize_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "[sweep]\nbias_mv = [0.0, 0.2]\npower = [-100.0]\n").unwrap();
    let st = qcr().arg("-c").arg(&cfg).arg("-o").arg(dir.path()).args(["--seed", "7", "synthesize"]).status().unwrap();
    assert!(st.success());
    let st = qcr().arg("fit").arg(dir.path().join("manifest.csv")).status().unwrap();
    assert!(st.success());
    let fits = std::fs::read_to_string(dir.path().join("fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 3);
    assert!(fits.lines().skip(1).all(|l| l.ends_with(",ok")));
}

#[test]
fn sweep_output_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let st = qcr().arg("-o").arg(&out).args(["--threads", threads, "matsubara"]).status().unwrap();
        assert!(st.success());
        std::fs::read(out.join("matsubara.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("3", "b"));
}
