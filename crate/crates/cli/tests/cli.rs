//! End-to-end checks of the command-line driver on a deliberately tiny
//! configuration.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
pretrain_scenes = 2
pretrain_views_per_scene = 1
validation_scenes = 1
probe_scenes = 1
views_per_scene = 2
eval_scenes = 1
eval_views_per_scene = 1
pretrain.max_epochs = 2
select.n = 2
select.surrogate_max_steps = 2
finetune.epochs = 1
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tacstereo"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.cfg");
    if !cfg.exists() {
        std::fs::write(&cfg, TINY).unwrap();
    }
    bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn staged_run_with_random_strategy_reports_a_random_row() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["gen-data", "pretrain"] {
        ok(&run(dir.path(), &[stage]));
    }
    for stage in ["select", "probe", "finetune"] {
        ok(&run(dir.path(), &[stage, "--strategy", "random"]));
    }
    let out = ok(&run(dir.path(), &["eval", "--strategy", "random"]));
    assert!(out.lines().any(|l| l.starts_with("random ")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("pretrained ")), "{out}");
    let root = dir.path().join("out");
    for sub in ["data", "models", "touches", "reports"] {
        assert!(root.join(sub).is_dir(), "missing {sub}");
    }
    assert!(root.join("reports/eval_random.csv").is_file());

    // Manifest hashes match the files on disk.
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(root.join("manifests/manifest_finetune_random.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["profile"], "desk");
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("models/finetuned_random.model"));
    for (rel, hash) in outputs {
        let bytes = std::fs::read(root.join(rel)).unwrap();
        use sha2::Digest;
        assert_eq!(hex::encode(sha2::Sha256::digest(&bytes)), hash.as_str().unwrap(), "{rel}");
    }
    assert!(manifest["inputs"].as_object().unwrap().contains_key("touches/random_probes.csv"));
}

#[test]
fn missing_upstream_artifact_exits_3_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["pretrain"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gen-data"));

    ok(&run(dir.path(), &["gen-data"]));
    let o = run(dir.path(), &["select"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`pretrain`"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen-data", "--set", "select.c1=1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["gen-data", "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
    let o = run(dir.path(), &["gen-data", "--set", "profile=paper", "--profile", "desk"]);
    assert_eq!(o.status.code(), Some(2));

    // Data generated for one seed is not silently reused for another.
    ok(&run(dir.path(), &["gen-data", "--seed", "1"]));
    let o = run(dir.path(), &["pretrain", "--seed", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn full_run_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    ok(&run(&a, &["full-run", "--seed", "3"]));
    ok(&run(&b, &["full-run", "--seed", "3"]));
    for f in ["eval_utility.csv", "eval_utility.txt", "eval_utility.json"] {
        let x = std::fs::read(a.join("out/reports").join(f)).unwrap();
        let y = std::fs::read(b.join("out/reports").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn ablate_writes_mean_std_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&run(dir.path(), &["ablate", "--seeds", "2"]));
    assert!(out.contains("mean±std over 2 seeds"), "{out}");
    let runs: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/reports/ablate_runs.json")).unwrap()).unwrap();
    let runs = runs.as_array().unwrap();
    assert_eq!(runs.len(), 2);
    // Four strategy rows per seed.
    let strategy_cells: usize = runs
        .iter()
        .map(|r| {
            ["utility", "random", "confidence", "oracle_center"]
                .iter()
                .filter(|s| r["reports"].get(**s).is_some())
                .count()
        })
        .sum();
    assert_eq!(strategy_cells, 8);
    for stem in ["ablate_strategies", "ablate_tactile", "ablate_regularization"] {
        for ext in ["csv", "txt", "json"] {
            assert!(dir.path().join(format!("out/reports/{stem}.{ext}")).is_file(), "{stem}.{ext}");
        }
    }
}
