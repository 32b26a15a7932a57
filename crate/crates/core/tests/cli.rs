use std::path::Path;
use std::process::{Command, Output};

fn ldpfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldpfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn theta_prints_threshold() {
    let o = ldpfair(&["theta", "--epsilon", "1"]);
    assert!(o.status.success());
    let theta: f64 = stdout(&o).trim().parse().unwrap();
    assert!(theta > 0.5 && theta < 1.0);
    assert_eq!(theta, ldpfair::mechanisms::optimize_theta(1.0).unwrap());
}

#[test]
fn theta_rejects_bad_epsilon() {
    let o = ldpfair(&["theta", "--epsilon", "-1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn validate_bundled_configs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    for name in ["quick.toml", "synthetic.toml", "synthetic_dynamic.toml"] {
        let cfg = root.join("configs").join(name);
        let o = ldpfair(&["validate", "--config", cfg.to_str().unwrap()]);
        assert!(
            o.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).contains("gender (k=2, sensitive, protected)"));
    }
}

#[test]
fn synth_then_run_then_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = ldpfair(&[
        "synth",
        "--out",
        d.to_str().unwrap(),
        "--rows",
        "600",
        "--seed",
        "5",
    ]);
    assert!(o.status.success());
    std::fs::write(
        d.join("exp.toml"),
        "dataset = \"synthetic.csv\"\nschema = \"synthetic_schema.toml\"\n\
         mechanisms = [\"SS\"]\nallocations = [\"uniform\"]\nepsilons = [1, 4]\nruns = 2\n\
         [classifier]\nepochs = 20\n",
    )
    .unwrap();
    let cfg = d.join("exp.toml");
    let out = d.join("results");
    let o = ldpfair(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
        "--plot-data",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 3);
    assert!(out.join("summary.csv").exists());
    assert!(out.join("plot_DI.csv").exists());

    std::fs::write(
        d.join("bad.toml"),
        "dataset = \"synthetic.csv\"\nschema = \"synthetic_schema.toml\"\nepsilons = [0]\n",
    )
    .unwrap();
    let o = ldpfair(&["run", "--config", d.join("bad.toml").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));

    let o = ldpfair(&[
        "validate",
        "--config",
        d.join("missing.toml").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}
