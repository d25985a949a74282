use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ginx_cli::artifacts::CurveArtifact;
use ginx_cli::plotdata::parse_plotdata;

const TINY: &str = r#"
explainers = ["truth", "inverse", "random"]
[dataset]
preset = "ba_2motifs"
num_graphs = 100
[train]
max_epochs = 12
patience = 5
[evaluation]
thresholds = [0.3, 0.6]
seeds = [0, 1]
"#;

fn ginx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ginx"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("GINX_OUT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ginx(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tiny(dir: &Path) {
    fs::write(dir.join("run.toml"), TINY).unwrap();
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ginx(dir.path(), &["report", "--out", "empty"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nothing to report"), "{}", stderr(&out));
}

#[test]
fn missing_upstream_artifact_names_the_command() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let out = ginx(dir.path(), &["train", "--config", "run.toml", "--out", "o"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ginx gen-data"), "{}", stderr(&out));
    ok(dir.path(), &["gen-data", "--config", "run.toml", "--out", "o"]);
    let out = ginx(dir.path(), &["ginx-eval", "--config", "run.toml", "--out", "o"]);
    assert!(stderr(&out).contains("ginx train"), "{}", stderr(&out));
}

#[test]
fn config_errors_name_the_field_and_fail() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[evaluation]\nseeds = []\n").unwrap();
    let out = ginx(dir.path(), &["gen-data", "--config", "bad.toml"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("evaluation.seeds"), "{}", stderr(&out));
    fs::write(dir.path().join("bad.toml"), "[model]\nhidden = \"wide\"\n").unwrap();
    let out = ginx(dir.path(), &["gen-data", "--config", "bad.toml"]);
    assert!(stderr(&out).contains("model.hidden"), "{}", stderr(&out));
}

#[test]
fn config_command_materializes_defaults_and_honors_env_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ginx"))
        .args(["config", "--seed-offset", "3"])
        .env("GINX_OUT", "from-env")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["output_dir = \"from-env\"", "hidden = 32", "patience = 30", "seeds = [3, 4, 5, 6, 7]", "gnnex_epochs = 100"] {
        assert!(text.contains(key), "{key} missing:\n{text}");
    }
}

#[test]
fn full_pipeline_writes_every_artifact_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny(p);
    let out = ok(p, &["run", "--config", "run.toml", "--out", "o", "--workers", "1"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("edgerank"));
    let o = p.join("o");
    for f in ["config.toml", "dataset.txt", "dataset.json", "model.ckpt", "train.json", "results.csv", "summary.json", "report.tsv"] {
        assert!(o.join(f).is_file(), "{f} missing");
    }
    for id in ["truth", "inverse", "random"] {
        assert!(o.join("masks").join(format!("{id}.txt")).is_file());
        assert!(o.join("fidelity").join(format!("{id}-hard.json")).is_file());
        let curve: CurveArtifact = serde_json::from_slice(&fs::read(o.join("curves").join(format!("{id}-hard.json"))).unwrap()).unwrap();
        assert_eq!(curve.curve.thresholds, vec![0.0, 0.3, 0.6]);
        assert_eq!(curve.curve.cells.len(), 6);
        assert!(curve.edgerank.is_none(), "grid lacks 0.1..0.9");
        assert!(o.join("plot").join("curves").join(format!("{id}-hard.tsv")).is_file());
    }
    let csv = fs::read_to_string(o.join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "dataset,explainer,mode,t,seed,test_accuracy,ginx");
    assert_eq!(csv.lines().count(), 1 + 3 * 6);
    let plot = parse_plotdata(&fs::read_to_string(o.join("plot").join("ba-2motifs-hard.tsv")).unwrap()).unwrap();
    assert_eq!(plot.columns, ["inverse", "random", "truth"]);
    assert_eq!(plot.rows.len(), 3);

    ok(p, &["ginx-eval", "--config", "run.toml", "--out", "o", "--workers", "2"]);
    assert_eq!(fs::read_to_string(o.join("results.csv")).unwrap(), csv);
}

#[test]
fn stepwise_commands_match_run_and_frozen_mode_is_separate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny(p);
    ok(p, &["run", "--config", "run.toml", "--out", "a"]);
    for cmd in ["gen-data", "train", "explain", "ginx-eval", "fidelity", "report"] {
        ok(p, &[cmd, "--config", "run.toml", "--out", "b"]);
    }
    for f in ["results.csv", "summary.json", "report.tsv", "masks/random.txt", "fidelity/truth-hard.json"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap(), "{f} differs");
    }
    ok(p, &["ginx-eval", "--config", "run.toml", "--out", "b", "--no-finetune"]);
    let frozen = fs::read_to_string(p.join("b").join("results_frozen.csv")).unwrap();
    assert_eq!(frozen.lines().count(), 1 + 3 * 6);
    assert!(p.join("b").join("curves").join("inverse-hard-frozen.json").is_file());
    assert_eq!(fs::read(p.join("a").join("results.csv")).unwrap(), fs::read(p.join("b").join("results.csv")).unwrap());
    ok(p, &["report", "--config", "run.toml", "--out", "b"]);
    assert!(p.join("b").join("plot").join("ba-2motifs-hard-frozen.tsv").is_file());
}

#[test]
fn seed_offset_shifts_result_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny(p);
    for cmd in ["gen-data", "train", "explain"] {
        ok(p, &[cmd, "--config", "run.toml", "--out", "o"]);
    }
    ok(p, &["ginx-eval", "--config", "run.toml", "--out", "o", "--seed-offset", "10", "--no-finetune"]);
    let csv = fs::read_to_string(p.join("o").join("results_frozen.csv")).unwrap();
    let seeds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert!(seeds.iter().all(|s| *s == "10" || *s == "11"), "{seeds:?}");
}

#[test]
fn report_refuses_mixed_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny(p);
    ok(p, &["run", "--config", "run.toml", "--out", "o"]);
    let path = p.join("o").join("curves").join("random-hard.json");
    let mut curve: CurveArtifact = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    curve.stamp.dataset_hash = "0000000000000000".into();
    fs::write(&path, serde_json::to_string(&curve).unwrap()).unwrap();
    let out = ginx(p, &["report", "--config", "run.toml", "--out", "o"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("random-hard.json"), "{}", stderr(&out));
}

#[test]
fn regenerating_a_different_dataset_invalidates_downstream_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny(p);
    for cmd in ["gen-data", "train"] {
        ok(p, &[cmd, "--config", "run.toml", "--out", "o"]);
    }
    fs::write(p.join("other.toml"), TINY.replace("num_graphs = 100", "num_graphs = 100\ngen_seed = 5")).unwrap();
    ok(p, &["gen-data", "--config", "other.toml", "--out", "o"]);
    let out = ginx(p, &["explain", "--config", "other.toml", "--out", "o"]);
    assert!(out.status.success(), "truth/inverse/random need no model: {}", stderr(&out));
    fs::write(p.join("model.toml"), TINY.replace("\"random\"]", "\"random\", \"saliency\"]").replace("num_graphs = 100", "num_graphs = 100\ngen_seed = 5")).unwrap();
    let out = ginx(p, &["explain", "--config", "model.toml", "--out", "o"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("train.json"), "{}", stderr(&out));
}
