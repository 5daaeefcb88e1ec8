use std::path::Path;
use std::process::{Command, Output};

fn gbpn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbpn"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn scene(dir: &Path) {
    let out = gbpn(dir, &["synth", "--height", "24", "--width", "30", "--seed", "2", "--out-guide", "g.pfm", "--out-depth", "d.pfm"]);
    assert!(out.status.success());
    let out = gbpn(dir, &["sample", "--gt", "d.pfm", "--points", "60", "--seed", "2", "--out", "s.csv"]);
    assert!(out.status.success());
}

#[test]
fn echoed_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    let first = gbpn(
        d,
        &["complete", "--guide", "g.pfm", "--sparse", "s.csv", "--out-mu", "a.pfm", "--out-lambda", "al.pfm",
          "--iterations", "4", "--lambda-smooth", "0.3", "--k-nonlocal", "1", "--echo-config", "run.cfg"],
    );
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let text = std::fs::read_to_string(d.join("run.cfg")).unwrap();
    assert!(text.contains("iterations = 4"));
    assert!(text.contains("lambda_smooth = 0.3"));
    let second = gbpn(
        d,
        &["complete", "--guide", "g.pfm", "--sparse", "s.csv", "--out-mu", "b.pfm", "--out-lambda", "bl.pfm", "--config", "run.cfg"],
    );
    assert!(second.status.success());
    assert_eq!(std::fs::read(d.join("a.pfm")).unwrap(), std::fs::read(d.join("b.pfm")).unwrap());
    assert_eq!(std::fs::read(d.join("al.pfm")).unwrap(), std::fs::read(d.join("bl.pfm")).unwrap());
}

#[test]
fn config_echo_defaults_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    let out = gbpn(d, &["complete", "--guide", "g.pfm", "--sparse", "s.csv", "--out-mu", "a.pfm", "--out-lambda", "b.pfm"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta_const = 0.3"));
}

#[test]
fn trace_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    let out = gbpn(
        d,
        &["complete", "--guide", "g.pfm", "--sparse", "s.csv", "--out-mu", "a.pfm", "--out-lambda", "b.pfm",
          "--iterations", "6", "--record-trace", "true"],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("iteration\t"));
    assert!(lines[6].starts_with("6\t"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    let code = |args: &[&str]| gbpn(d, args).status.code().unwrap();
    let base = ["complete", "--guide", "g.pfm", "--sparse", "s.csv", "--out-mu", "a.pfm", "--out-lambda", "b.pfm"];
    assert_eq!(code(&base), 0);
    assert_eq!(code(&[&base[..], &["--beta-const", "1.0"]].concat()), 1);
    assert_eq!(code(&[&base[..], &["--connectivity", "six"]].concat()), 1);
    assert_eq!(code(&["complete", "--guide", "g.pfm"]), 1);
    assert_eq!(code(&["complete", "--guide", "missing.pfm", "--sparse", "s.csv", "--out-mu", "a.pfm", "--out-lambda", "b.pfm"]), 2);
    std::fs::write(d.join("bad.csv"), "0,0,1\n99,99,2\n").unwrap();
    assert_eq!(code(&["complete", "--guide", "g.pfm", "--sparse", "bad.csv", "--out-mu", "a.pfm", "--out-lambda", "b.pfm"]), 2);
    assert_eq!(code(&["sample", "--gt", "d.pfm", "--points", "100000", "--out", "x.csv"]), 2);

    // no measurements: the system has no anchor
    std::fs::write(d.join("empty.csv"), "").unwrap();
    assert_eq!(code(&["oracle", "--guide", "g.pfm", "--sparse", "empty.csv", "--out-mu", "o.pfm"]), 3);
}

#[test]
fn eval_json_and_oracle_agree_with_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    assert!(gbpn(d, &["oracle", "--guide", "g.pfm", "--sparse", "s.csv", "--out-mu", "o.pfm"]).status.success());
    let out = gbpn(d, &["eval", "--pred-mu", "o.pfm", "--gt", "d.pfm", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rmse = v["rmse"].as_f64().unwrap();

    let guide = gbpn::io::read_pfm::<f64>(d.join("g.pfm")).unwrap();
    let gt = gbpn::io::read_pfm::<f64>(d.join("d.pfm")).unwrap();
    let sparse = gbpn::io::read_sparse_csv::<f64>(d.join("s.csv"), 24, 30).unwrap();
    let exact = gbpn::pipeline::complete_exact(&guide, &sparse, &gbpn::config::RunConfig::default(), 1e-10).unwrap();
    let report = gbpn::metrics::evaluate(&exact.cast::<f32>().cast::<f64>(), None, &gt, &gbpn::metrics::DEFAULT_THETAS, 0.5).unwrap();
    assert_eq!(rmse, report.rmse);
    assert_eq!(v["n_valid"].as_f64().unwrap(), 720.0);
}

#[test]
fn sweep_density_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    let out = gbpn(d, &["sweep-density", "--gt", "d.pfm", "--guide", "g.pfm", "--points", "20,80", "--seeds", "2", "--iterations", "3"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = stdout.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][..2], ["points", "seeds"]);
    assert!(rows[0].contains(&"nn_rmse"));
    assert!(rows.iter().all(|r| r.len() == rows[0].len()));
    assert_eq!(rows[2][0], "80");
}
