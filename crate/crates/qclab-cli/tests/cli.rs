use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn qclab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qclab"))
        .args(args)
        .env("QCLAB_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn record(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn heisenberg_axis_distance() {
    let dir = tempfile::tempdir().unwrap();
    let o = qclab(dir.path(), &["distance", "--space", "heis", "--from", "0,0,0", "--to", "1,0,0", "--method", "direct", "-q"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = record(&dir.path().join("distance.json"));
    assert_eq!(r["schema"], "qclab/1");
    let v = r["result"]["results"][0]["value"].as_f64().unwrap();
    assert!((v - 1.0).abs() <= 0.02, "{v}");
    assert!(r["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn contacto_check_meets_pullback_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = qclab(dir.path(), &["contacto-check", "--samples", "10000", "--pairs", "0", "-q"]);
    assert!(o.status.success());
    let r = record(&dir.path().join("contacto-check.json"));
    assert!(r["result"]["max_pullback_error"].as_f64().unwrap() <= 1e-10);
    assert!(r["result"]["max_horizontality_defect"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = qclab(dir.path(), &["distance", "--to", "1,0,0", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qclab(dir.path(), &["teleport"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qclab(dir.path(), &["distance", "--to", "1,0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_configs_name_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "command = \"obstruction\"\n[obstruction]\nN = 4.0\nQ = 4.0\n").unwrap();
    let o = qclab(dir.path(), &["check-config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("N < Q required") && err.contains("`N` = 4"), "{err}");

    std::fs::write(&bad, "command = \"distance\"\n[params]\nto = [1.0, 0.0, 0.0]\nh = -0.5\n").unwrap();
    let o = qclab(dir.path(), &["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`h` = -0.5"));
}

#[test]
fn minimal_config_is_filled_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.toml");
    std::fs::write(&cfg, "command = \"obstruction\"\n").unwrap();
    let o = qclab(dir.path(), &["check-config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("max_index = 32.0") && text.contains("h_rt = 0.5"), "{text}");
}

#[test]
fn identical_seed_gives_identical_payload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "command = \"contacto-check\"\nseed = 11\n[params]\nsamples = 500\npairs = 2\n").unwrap();
    let mut payloads = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let o = qclab(&out, &["run", cfg.to_str().unwrap(), "-q"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut r = record(&out.join("contacto-check.json"));
        r.as_object_mut().unwrap().remove("wall_time_s");
        payloads.push(serde_json::to_string(&r).unwrap());
    }
    assert_eq!(payloads[0], payloads[1]);
    assert!(payloads[0].contains("\"seed\":11"));
}

#[test]
fn csv_output_has_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = qclab(dir.path(), &["planar", "--example", "exp-strip", "--z", "0,1", "--radii", "0.01,0.001", "--format", "csv", "-q"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("planar.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("example,x,y,radius,estimate"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn environment_overrides_output_dir() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = qclab(
        env_dir.path(),
        &["planar", "--example", "exp-strip", "--output-dir", flag_dir.path().to_str().unwrap(), "-q"],
    );
    assert!(o.status.success());
    assert!(env_dir.path().join("planar.json").exists());
    assert!(!flag_dir.path().join("planar.json").exists());
}

#[test]
fn oversized_graph_is_a_resource_cap() {
    let dir = tempfile::tempdir().unwrap();
    let o = qclab(dir.path(), &["ball-volume", "--space", "heis", "--radii", "1", "--cells", "2000"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
