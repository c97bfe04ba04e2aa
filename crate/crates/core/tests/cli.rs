use std::fs;
use std::path::Path;

use mlcb::cli::run;

const SMALL: &str = r#"
sigma = 1e-4
[topology]
preset = "square"
width = 3
height = 2
[layers]
kind = "preset"
config = "closed_squares"
[sweep]
n_models = 2
n_circuits = 2
depth = 10
weights = [2]
"#;

fn mlcb(dir: &Path, args: &[&str]) -> i32 {
    let config = dir.join("small.toml");
    let out = dir.join("out");
    let mut full = vec!["mlcb".to_string(), "--config".into(), config.display().to_string(), "--out".into(), out.display().to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    run(full)
}

fn read(dir: &Path, rel: &str) -> String {
    fs::read_to_string(dir.join("out").join(rel)).unwrap()
}

#[test]
fn commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();

    assert_eq!(mlcb(dir.path(), &["generate-model"]), 0);
    let first = read(dir.path(), "models/0001/B.json");
    assert_eq!(mlcb(dir.path(), &["generate-model"]), 0);
    assert_eq!(read(dir.path(), "models/0001/B.json"), first);
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["kind"], "spl_model");

    assert_eq!(mlcb(dir.path(), &["learnability"]), 0);
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "learnability.json")).unwrap();
    assert_eq!(v["data"]["mlcb_recovered"], v["data"]["expected_recovered"]);

    assert_eq!(mlcb(dir.path(), &["characterize"]), 0);
    assert!(dir.path().join("out/records/0000.json").exists());

    assert_eq!(mlcb(dir.path(), &["fit"]), 0);
    let metrics = read(dir.path(), "metrics.csv");
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    assert_eq!(metrics.lines().filter(|l| !l.starts_with('#')).count(), 3);

    assert_eq!(mlcb(dir.path(), &["pec"]), 0);
    assert_eq!(read(dir.path(), "pec.csv").lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn bad_input_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), "sigma = -1.0").unwrap();
    assert_eq!(mlcb(dir.path(), &["fit"]), 2);
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    assert_eq!(mlcb(dir.path(), &["fit", "--no-such-flag"]), 2);
    fs::write(dir.path().join("small.toml"), SMALL.replace("weights = [2]", "weights = [7]")).unwrap();
    assert_eq!(mlcb(dir.path(), &["pec"]), 2);
    assert_eq!(run(["mlcb", "--config", "/nonexistent/x.toml", "fit"]), 2);
}
