use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exafs_ga_cli::config::GridSettings;
use exafs_ga_cli::load_data;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/five_path")
}

fn exe(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_exafs-ga"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("EXAFS_GA_WORKERS", w),
        None => cmd.env_remove("EXAFS_GA_WORKERS"),
    };
    cmd.output().unwrap()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.ini");
    let fixture = fixture_dir();
    let text = body.replace("@FIXTURE@", &fixture.display().to_string());
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL_FIT: &str = "[run]\ndata_file = @FIXTURE@/data.chi\npath_manifest = @FIXTURE@/paths.txt\nseed = 3\n\
[ga]\npopulation_size = 60\nmax_generations = 8\n\
[cutoff]\npercents = 1, 10\nrepeats = 2\n\
[error]\nruns = 3\npopulation_min = 30\npopulation_max = 50\ngenerations_min = 3\ngenerations_max = 5\n";

#[test]
fn fit_writes_every_artifact_within_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fit");
    let cfg = fixture_dir().join("fit.ini");
    let o = exe(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = read_dir(&out);
    for name in ["summary.txt", "model_k.csv", "model_r.csv", "fitness_trace.csv", "attribution.csv", "manifest.json"] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let summary = String::from_utf8(files["summary.txt"].clone()).unwrap();
    let params: Vec<(String, f64)> = summary
        .lines()
        .skip_while(|l| *l != "parameters:")
        .skip(1)
        .map(|l| {
            let mut it = l.split_whitespace();
            (it.next().unwrap().to_string(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(params.len(), 16);
    for (name, v) in params {
        let (lo, hi) = match name.split('[').next().unwrap() {
            "delta_e0" => (-5.0, 5.0),
            "s02" => (0.0, 1.0),
            "sigma2" => (0.0, 0.02),
            "delta_r" => (-0.1, 0.1),
            other => panic!("unexpected parameter {other}"),
        };
        assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "{name} = {v}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&files["manifest.json"]).unwrap();
    assert_eq!(manifest["mode"], "fit");
    assert!(!files.keys().any(|k| k.ends_with(".tmp")));
}

#[test]
fn identical_runs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_FIT);
    let run = |sub: &str, workers: Option<&str>| {
        let out = tmp.path().join(format!("{sub}-{}", workers.unwrap_or("1")));
        let o = exe(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], workers);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_dir(&out)
    };
    for sub in ["fit", "cutoff-sweep", "error-analysis"] {
        let first = run(sub, None);
        assert_eq!(first, run(sub, None), "{sub} differs between runs");
        assert_eq!(first, run(sub, Some("3")), "{sub} depends on the worker count");
    }
}

#[test]
fn seed_flag_changes_the_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_FIT);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = exe(&["fit", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()], None);
        assert!(o.status.success());
    }
    assert_ne!(read_dir(&a)["fitness_trace.csv"], read_dir(&b)["fitness_trace.csv"]);
}

#[test]
fn synth_output_reproduces_fixture_and_feeds_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_out = tmp.path().join("synth");
    let cfg = fixture_dir().join("synth.ini");
    let o = exe(&["synth", "--config", cfg.to_str().unwrap(), "--out", synth_out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let generated = std::fs::read(synth_out.join("synth.chi")).unwrap();
    assert_eq!(generated, std::fs::read(fixture_dir().join("data.chi")).unwrap());

    let body = SMALL_FIT.replace("@FIXTURE@/data.chi", &synth_out.join("synth.chi").display().to_string());
    let fit_cfg = write_config(tmp.path(), &body);
    let fit_out = tmp.path().join("fit");
    let o = exe(&["fit", "--config", fit_cfg.to_str().unwrap(), "--out", fit_out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fit_out.join("model_k.csv").exists());
}

#[test]
fn config_errors_exit_with_status_two_and_a_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[run]\nseed = 1\n[ga]\nmutation = sideways\n");
    let o = exe(&["fit", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.ini:4"), "{err}");

    let cfg = write_config(tmp.path(), "[run]\ndata_file = missing.chi\npath_manifest = @FIXTURE@/paths.txt\n");
    let o = exe(&["fit", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_status_one_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("descending.chi");
    std::fs::write(&data, "# k chi\n3.0 0.1\n2.0 0.2\n1.0 0.3\n").unwrap();
    let body = SMALL_FIT.replace("@FIXTURE@/data.chi", &data.display().to_string());
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("never");
    let o = exe(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("spectra") && err.contains("line 3"), "{err}");
    assert!(!out.exists());
}

#[test]
fn bad_worker_count_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_FIT);
    let o = exe(&["fit", "--config", cfg.to_str().unwrap()], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn benchmark_emits_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[benchmark]\nn_paths = 2, 4\npopulation = 20\ngenerations = 2\nrepeats = 1\n");
    let out = tmp.path().join("bench");
    let o = exe(&["benchmark", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "n_paths,seconds_per_generation");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("2,") && rows[2].starts_with("4,"));
}

#[test]
fn load_data_handles_comments_and_delimiters() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = tmp.path().join("ws.chi");
    let csv = tmp.path().join("csv.chi");
    let mut a = String::from("# header\n");
    let mut b = String::from("# k,chi\n");
    for i in 0..=40 {
        let k = 1.0 + 0.1 * i as f64;
        a.push_str(&format!("{k}  {}   # trailing\n", (2.0 * k).sin()));
        b.push_str(&format!("{k},{}\n", (2.0 * k).sin()));
    }
    std::fs::write(&ws, a).unwrap();
    std::fs::write(&csv, b).unwrap();
    let grid = GridSettings {
        k_min: None,
        k_max: None,
        delta_k: 0.05,
    };
    let x = load_data(&ws, &grid).unwrap();
    let y = load_data(&csv, &grid).unwrap();
    assert_eq!(x, y);
    assert!((x.grid().k_min() - 1.0).abs() < 1e-12 && (x.grid().k_max() - 5.0).abs() < 1e-9);
    assert_eq!(x.grid().n_points(), 81);

    let bad = tmp.path().join("bad.chi");
    std::fs::write(&bad, "1.0 0.0\n1.5 0.1\n1.2 0.2\n").unwrap();
    let err = load_data(&bad, &grid).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}
