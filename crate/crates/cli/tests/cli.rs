use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transdist"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed with {:?}:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

/// 8x8 images, 8 identities in 2 classes, a 4-unit model trained briefly.
const SMALL: &str = r#"{
    "data": { "synthetic": { "image_size": 8, "n_identities": 8, "n_classes": 2 } },
    "preprocess": { "lcn": { "kernel_size": 3 } },
    "features": { "kind": "pixel", "kinds": ["pca"], "sizes": [8] },
    "fgrbm": { "hidden": 4, "hidden_grid": [4], "train": { "epochs": 5, "batch_size": 50 } },
    "distance": { "iterations": 5 },
    "eval": {
        "modes": ["regular", "transforming"],
        "k_grid": [1, 3, 5],
        "missing_rates": [0.0, 0.5],
        "augment": { "factor": 10, "chain_iters": 5 }
    }
}"#;

fn small_pipeline(dir: &Path) -> (PathBuf, String) {
    let cfg = dir.join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.join("out");
    let c = cfg.to_str().unwrap().to_string();
    for cmd in ["gen", "preprocess", "train-fgrbm"] {
        ok(&out, &[cmd, "--config", &c]);
    }
    (out, c)
}

fn pgm_size(path: &Path) -> (usize, usize) {
    let bytes = fs::read(path).unwrap();
    let header: Vec<String> = String::from_utf8_lossy(&bytes[..20])
        .split_whitespace()
        .take(3)
        .map(str::to_string)
        .collect();
    assert_eq!(header[0], "P5");
    (header[1].parse().unwrap(), header[2].parse().unwrap())
}

#[test]
fn gen_writes_the_default_540_image_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen"]);
    let manifest = lines(&dir.path().join("data/raw/manifest.csv"));
    assert_eq!(manifest.len(), 1 + 540);
    assert!(manifest[0].starts_with("filename,"));
    let logs: Vec<_> = fs::read_dir(dir.path().join("logs")).unwrap().collect();
    assert_eq!(logs.len(), 1);
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(logs[0].as_ref().unwrap().path()).unwrap()).unwrap();
    assert_eq!(log["command"], "gen");
    assert!(log["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(log["input_hash"].as_str().unwrap().len(), 64);
    assert_eq!(log["config"]["data"]["synthetic"]["n_identities"], 60);
}

#[test]
fn transforming_eval_without_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen"]);
    ok(dir.path(), &["preprocess"]);
    let o = run(dir.path(), &["eval", "--mode", "transforming"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    let expected = dir.path().join("fgrbm");
    assert!(err.contains(expected.to_str().unwrap()), "{err}");
    assert!(err.contains("fgrbm-m32-") && err.contains(".fgrb"), "{err}");
}

#[test]
fn missing_inputs_and_bad_config_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["preprocess"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("data/raw/manifest.csv"));

    for bad in ["fgrbm.hidden=0", "nosuch.key=1", "eval.k_grid=[]", "distance.lambda=-1"] {
        let o = run(dir.path(), &["gen", "--set", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    let o = run(dir.path(), &["gen", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweeps_write_one_row_per_mode_value_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (out, c) = small_pipeline(dir.path());
    ok(&out, &["sweep", "--axis", "k", "--config", &c]);
    let k = lines(&out.join("eval/sweep-k.csv"));
    assert_eq!(k[0], "mode,k,missing_rate,accuracy,seed");
    assert_eq!(k.len(), 1 + 2 * 3);

    ok(&out, &["sweep", "--axis", "missing_rate", "--config", &c]);
    let miss = lines(&out.join("eval/sweep-missing_rate.csv"));
    assert_eq!(miss.len(), 1 + 2 * 2);
    assert!(miss[1..].iter().all(|r| r.split(',').nth(1) == Some("1")));

    // The 0% row is the plain evaluation.
    ok(&out, &["eval", "--config", &c]);
    let summary = lines(&out.join("eval/summary.csv"));
    for mode in ["regular", "transforming"] {
        let plain = summary.iter().find(|r| r.starts_with(&format!("{mode},1,0,"))).unwrap();
        assert!(miss.contains(plain), "{plain} not in {miss:?}");
    }

    // Appending keeps a single header.
    ok(&out, &["sweep", "--axis", "k", "--config", &c, "--set", "eval.seeds=[0,1]"]);
    let k = lines(&out.join("eval/sweep-k.csv"));
    assert_eq!(k.len(), 1 + 6 + 12);
    assert_eq!(k.iter().filter(|r| r.starts_with("mode,")).count(), 1);
}

#[test]
fn crossval_with_one_cell_per_grid_chooses_it() {
    let dir = tempfile::tempdir().unwrap();
    let (out, c) = small_pipeline(dir.path());
    ok(&out, &["crossval", "--config", &c]);
    let rows = lines(&out.join("eval/crossval.csv"));
    assert_eq!(rows[0], "stage,kind,size,hidden,accuracy,chosen");
    assert_eq!(rows.len(), 1 + 2);
    assert!(rows[1].starts_with("features,pca,8,0,") && rows[1].ends_with(",true"));
    assert!(rows[2].starts_with("fgrbm,pixel,64,4,") && rows[2].ends_with(",true"));
}

#[test]
fn crossval_rows_cover_both_grids() {
    let dir = tempfile::tempdir().unwrap();
    let (out, c) = small_pipeline(dir.path());
    ok(
        &out,
        &[
            "crossval",
            "--config",
            &c,
            "--set",
            "features.kinds=[\"pca\",\"cae\"]",
            "--set",
            "features.sizes=[4,8,16]",
            "--set",
            "features.train.epochs=2",
            "--set",
            "fgrbm.hidden_grid=[2,4]",
        ],
    );
    let rows = lines(&out.join("eval/crossval.csv"));
    assert_eq!(rows.len(), 1 + 6 + 2);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",true")).count(), 2);
}

#[test]
fn strip_width_is_panel_count_times_image_width() {
    let dir = tempfile::tempdir().unwrap();
    let (out, c) = small_pipeline(dir.path());
    let strip = |extra: &[&str]| -> (usize, usize) {
        let mut args = vec!["viz-strip", "--config", &c, "--source", "3", "--target", "5"];
        args.extend_from_slice(extra);
        ok(&out, &args);
        pgm_size(&out.join("eval/strip-3-5.pgm"))
    };
    // source | 4 intermediates | best | target
    assert_eq!(strip(&[]), (7 * 8, 8));
    // source | initial transform | target
    assert_eq!(strip(&["--set", "distance.iterations=0"]), (3 * 8, 8));
    let table = lines(&out.join("eval/strip-3-5.csv"));
    assert_eq!(table.len(), 1 + 3);
    assert!(table[2].starts_with("1,best,0,"));
}

#[test]
fn augment_writes_a_tenfold_database() {
    let dir = tempfile::tempdir().unwrap();
    let (out, c) = small_pipeline(dir.path());
    let lcn = lines(&out.join("data/lcn/manifest.csv"));
    let db = lcn.iter().filter(|r| r.ends_with(",knn_train")).count();
    ok(&out, &["augment", "--config", &c]);
    assert_eq!(lines(&out.join("data/augmented/manifest.csv")).len(), 1 + 10 * db);
    assert_eq!(lines(&out.join("data/augmented/sources.csv")).len(), 1 + 10 * db);
}

#[test]
fn seeded_pipeline_is_reproducible() {
    let run_all = |dir: &Path| -> (Vec<u8>, Vec<String>, Vec<String>) {
        let (out, c) = small_pipeline(dir);
        ok(&out, &["eval", "--config", &c, "--set", "eval.modes=[\"regular\",\"transforming\",\"augmented\"]"]);
        ok(&out, &["sweep", "--axis", "missing_rate", "--config", &c]);
        let ckpt = fs::read_dir(out.join("fgrbm"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.extension().is_some_and(|e| e == "fgrb"))
            .unwrap();
        (
            fs::read(ckpt).unwrap(),
            lines(&out.join("eval/summary.csv")),
            lines(&out.join("eval/sweep-missing_rate.csv")),
        )
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_all(a.path()), run_all(b.path()));
}

#[test]
fn seed_flag_changes_the_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["gen", "--seed", "1"]);
    ok(b.path(), &["gen", "--seed", "2"]);
    let first = lines(&a.path().join("data/raw/manifest.csv"))[1].clone();
    let img = format!("data/raw/{}", first.split(',').next().unwrap());
    assert_ne!(fs::read(a.path().join(&img)).unwrap(), fs::read(b.path().join(&img)).unwrap());
}

/// After training on the default benchmark, the optimized transform of the
/// default strip pair is closer to the target than the initial transform.
#[test]
fn trained_strip_ends_closer_than_it_starts() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen", "preprocess", "train-fgrbm", "viz-strip"] {
        ok(dir.path(), &[cmd]);
    }
    let eval = dir.path().join("eval");
    let table = fs::read_dir(&eval)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let rows = lines(&table);
    let l2 = |role: &str, it: Option<&str>| -> f64 {
        rows.iter()
            .map(|r| r.split(',').collect::<Vec<_>>())
            .find(|f| f[1] == role && it.is_none_or(|i| f[2] == i))
            .unwrap()[3]
            .parse()
            .unwrap()
    };
    let initial = l2("intermediate", Some("0"));
    let best = l2("best", None);
    assert!(best < initial, "best panel L2 {best} vs initial {initial}");
}
