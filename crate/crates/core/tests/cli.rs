//! End-to-end checks of the `trimap` binary: wiring, file outputs,
//! manifests, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use trimap::io::{save_matrix_csv, RunManifest};
use trimap::Dataset;

fn trimap_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trimap"))
}

fn run(args: &[&str]) -> Output {
    trimap_bin().args(args).output().expect("binary runs")
}

fn write_blobs(dir: &Path, name: &str, with_labels: bool) -> (String, Option<String>) {
    let data = Dataset::gaussian_blobs(3, 30, 10, 15.0, 9).unwrap();
    let csv = dir.join(format!("{name}.csv"));
    save_matrix_csv(data.points(), &csv).unwrap();
    let labels = if with_labels {
        let path = dir.join(format!("{name}_labels.txt"));
        let text: String = data
            .labels()
            .unwrap()
            .iter()
            .map(|l| format!("{l}\n"))
            .collect();
        std::fs::write(&path, text).unwrap();
        Some(path.to_str().unwrap().to_string())
    } else {
        None
    };
    (csv.to_str().unwrap().to_string(), labels)
}

#[test]
fn embed_eval_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (input, labels) = write_blobs(dir.path(), "x", true);
    let labels = labels.unwrap();
    let output = dir.path().join("y.csv");
    let trace = dir.path().join("trace.csv");
    let dump = dir.path().join("triplets.csv");

    let out = run(&[
        "embed",
        "--input", &input,
        "--labels", &labels,
        "--output", output.to_str().unwrap(),
        "--trace", trace.to_str().unwrap(),
        "--dump-triplets", dump.to_str().unwrap(),
        "--m", "8",
        "--m-prime", "3",
        "--s", "3",
        "--iters", "60",
        "--seed", "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Embedding CSV: 90 rows, 2 columns.
    let coords = trimap::io::load_matrix_csv(&output, ',').unwrap();
    assert_eq!(coords.dim(), (90, 2));

    // Trace CSV has a header plus one row per recorded iteration, with the
    // loss column non-increasing.
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = trace_text.lines();
    assert_eq!(lines.next().unwrap(), "iteration,loss,learning_rate");
    let losses: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(losses.len() >= 2);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "trace loss increased");
    }

    // Triplet dump: header plus the sampled counts (90 * (8*3 + 3)).
    let dump_text = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(dump_text.lines().next().unwrap(), "i,j,k,weight");
    assert_eq!(dump_text.lines().count() - 1, 90 * (8 * 3 + 3));

    // Manifest sits next to the primary output and replays the config.
    let manifest = RunManifest::read(&dir.path().join("y.csv.manifest.json")).unwrap();
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.config.m, 8);
    assert_eq!(manifest.config.iterations, 60);
    assert!(manifest.command.contains("embed"));
    assert!(manifest.finished_unix_ms >= manifest.started_unix_ms);

    // eval of the identity embedding hits the analytic optimum.
    let pr = dir.path().join("pr.json");
    let out = run(&[
        "eval",
        "--high", &input,
        "--low", &input,
        "--relevant-k", "20",
        "--k-max", "60",
        "--output", pr.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("AUC"), "stdout: {stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&pr).unwrap()).unwrap();
    assert_eq!(json["relevant_k"], 20);
    assert_eq!(json["k_max"], 60);
    let curve = json["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 60);
    for entry in curve.iter().take(20) {
        let precision = entry[1].as_f64().unwrap();
        assert!((precision - 1.0).abs() < 1e-12, "identity precision {precision}");
    }
    assert!((json["auc"].as_f64().unwrap() - 0.95).abs() < 1e-12);

    // eval of the real embedding scores better than a shuffled one.
    let pr2 = dir.path().join("pr_emb.json");
    let out = run(&[
        "eval",
        "--high", &input,
        "--low", output.to_str().unwrap(),
        "--relevant-k", "10",
        "--k-max", "40",
        "--output", pr2.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // plot with labels: legend carries the three classes.
    let svg_path = dir.path().join("y.svg");
    let out = run(&[
        "plot",
        "--input", output.to_str().unwrap(),
        "--labels", &labels,
        "--output", svg_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("legend-entry").count(), 3);
    assert!(RunManifest::read(&dir.path().join("y.svg.manifest.json")).is_ok());
}

#[test]
fn stress_suite_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (input, labels) = write_blobs(dir.path(), "x", true);
    let outdir = dir.path().join("stress");

    let out = run(&[
        "test",
        "--input", &input,
        "--labels", labels.as_deref().unwrap(),
        "--outdir", outdir.to_str().unwrap(),
        "--tests", "subset_random,outlier,multiple_scales",
        "--subset-fraction", "0.5",
        "--m", "8",
        "--m-prime", "3",
        "--s", "3",
        "--iters", "50",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(outdir.join("stress.json")).unwrap())
            .unwrap();
    let reports = json.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0]["test"], "subset_random");
    assert!(reports[0]["verdict_metrics"]["procrustes_residual"].is_f64());
    assert_eq!(reports[1]["test"], "outlier");
    assert!(reports[1]["verdict_metrics"]["nn_distance_ratio"].is_f64());
    assert_eq!(reports[2]["test"], "multiple_scales");
    assert!(reports[2]["verdict_metrics"]["copy_agreement"].is_f64());

    assert!(outdir.join("baseline.svg").exists());
    for name in [
        "subset_random_transformed.svg",
        "outlier_transformed.svg",
        "multiple_scales_transformed.svg",
    ] {
        assert!(outdir.join(name).exists(), "missing {name}");
    }
    assert!(RunManifest::read(&outdir.join("run_manifest.json")).is_ok());
}

#[test]
fn normalize_minmax_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = write_blobs(dir.path(), "x", false);
    let raw = dir.path().join("raw.csv");
    let scaled = dir.path().join("scaled.csv");
    for (path, normalize) in [(&raw, "none"), (&scaled, "minmax")] {
        let out = run(&[
            "embed",
            "--input", &input,
            "--output", path.to_str().unwrap(),
            "--m", "5",
            "--m-prime", "2",
            "--s", "2",
            "--iters", "30",
            "--normalize", normalize,
        ]);
        assert!(out.status.success());
    }
    assert_ne!(
        std::fs::read(&raw).unwrap(),
        std::fs::read(&scaled).unwrap(),
        "normalization had no effect"
    );
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = write_blobs(dir.path(), "x", false);
    let out_csv = dir.path().join("y.csv");

    // Missing input file.
    let out = run(&[
        "embed",
        "--input", dir.path().join("nope.csv").to_str().unwrap(),
        "--output", out_csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    // Invalid parameter range.
    let out = run(&[
        "embed",
        "--input", &input,
        "--output", out_csv.to_str().unwrap(),
        "--t-prime", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag (clap usage error).
    let out = run(&["embed", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown stress test name.
    let out = run(&[
        "test",
        "--input", &input,
        "--outdir", dir.path().join("s").to_str().unwrap(),
        "--tests", "bogus",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // eval with mismatched point counts.
    let short = dir.path().join("short.csv");
    let small = Dataset::gaussian_blobs(2, 5, 4, 5.0, 0).unwrap();
    save_matrix_csv(small.points(), &short).unwrap();
    let pr = dir.path().join("pr.json");
    let out = run(&[
        "eval",
        "--high", &input,
        "--low", short.to_str().unwrap(),
        "--output", pr.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_emits_cells_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (input, labels) = write_blobs(dir.path(), "x", true);
    let outdir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        "--input", &input,
        "--labels", labels.as_deref().unwrap(),
        "--outdir", outdir.to_str().unwrap(),
        "--t", "1,2",
        "--t-prime", "2",
        "--m", "8",
        "--m-prime", "3",
        "--s", "3",
        "--iters", "40",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for stem in ["sweep_t1_tp2", "sweep_t2_tp2"] {
        assert!(outdir.join(format!("{stem}.csv")).exists());
        let svg = std::fs::read_to_string(outdir.join(format!("{stem}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    let grid = std::fs::read_to_string(outdir.join("sweep_grid.svg")).unwrap();
    assert!(grid.matches("t=").count() >= 2);
    assert!(RunManifest::read(&outdir.join("run_manifest.json")).is_ok());
}
