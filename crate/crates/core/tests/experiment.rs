use std::fs;

use morph_core::data::{load_csv, Split};
use morph_core::experiment::{
    collect, generate, run_experiment, seed_dir, summarize_dir, sweep_transition, write_report,
    ExperimentSpec, METRICS_FILE, SAFE_SET_FILE, SUMMARY_FILE,
};
use morph_core::safe_set::parse_index_list;
use morph_core::trainer::parse_metrics_csv;

fn spec(out: &std::path::Path, kv: &[(&str, &str)]) -> ExperimentSpec {
    let mut s = ExperimentSpec::default();
    s.set("out", out.to_str().unwrap()).unwrap();
    for (k, v) in kv {
        s.set(k, v).unwrap();
    }
    s
}

#[test]
fn generated_flip_count_near_expected() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        &[
            ("k", "10"),
            ("n_train", "10000"),
            ("n_test", "100"),
            ("noise_type", "symmetric"),
            ("tau", "0.4"),
            ("repeat", "3"),
        ],
    );
    let counts: Vec<usize> = generate(&s).unwrap().iter().map(|m| m.flip_count).collect();
    for c in &counts {
        assert!(
            (*c as f64 / 10000.0 - 0.4).abs() <= 0.01,
            "flip counts {counts:?}"
        );
    }
}

#[test]
fn generate_writes_manifest_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        &[("noise_type", "symmetric"), ("tau", "0.4"), ("repeat", "3")],
    );
    let manifests = generate(&s).unwrap();
    assert_eq!(manifests.len(), 3);
    for m in &manifests {
        assert_eq!(m.n_train, 3000);
        assert!((m.flip_fraction - m.flip_count as f64 / 3000.0).abs() < 1e-15);
        let t = m.transition_matrix.as_ref().unwrap();
        assert!((t[0][0] - 0.6).abs() < 1e-12 && (t[0][1] - 0.2).abs() < 1e-12);
        let sd = seed_dir(dir.path(), m.seed);
        let train = load_csv(sd.join("train.csv"), 3, Split::Train).unwrap();
        assert_eq!(train.flipped_count(), m.flip_count);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(sd.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["flip_count"], m.flip_count);
        assert_eq!(manifest["noise_type"], "symmetric");
    }

    let again = tempfile::tempdir().unwrap();
    let mut s2 = s.clone();
    s2.out = again.path().to_path_buf();
    generate(&s2).unwrap();
    for file in ["train.csv", "test.csv"] {
        let a = fs::read(seed_dir(dir.path(), 1).join(file)).unwrap();
        let b = fs::read(seed_dir(again.path(), 1).join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn clean_generation_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &[("n_train", "300"), ("n_test", "50")]);
    let m = &generate(&s).unwrap()[0];
    assert_eq!(m.flip_count, 0);
    assert!(m.transition_matrix.is_none());
    let train = load_csv(seed_dir(dir.path(), 0).join("train.csv"), 3, Split::Train).unwrap();
    assert_eq!(train.noisy_labels(), train.true_labels());
}

#[test]
fn generate_into_unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let s = spec(&blocker.join("sub"), &[("n_train", "30"), ("n_test", "9")]);
    assert!(matches!(generate(&s), Err(morph_core::Error::Io(_))));
}

#[test]
fn train_writes_per_seed_outputs_and_consistent_summary() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        &[
            ("noise_type", "symmetric"),
            ("tau", "0.4"),
            ("n_train", "900"),
            ("n_test", "300"),
            ("epochs", "12"),
            ("repeat", "3"),
            ("seed", "5"),
        ],
    );
    let summary = run_experiment(&s).unwrap();
    assert_eq!(summary.seeds, vec![5, 6, 7]);
    let mut minima = Vec::new();
    for seed in 5..8 {
        let sd = seed_dir(dir.path(), seed);
        let rows = parse_metrics_csv(&fs::read_to_string(sd.join(METRICS_FILE)).unwrap()).unwrap();
        assert_eq!(rows.len(), 12);
        minima.push(rows.iter().map(|r| r.test_error).fold(f64::INFINITY, f64::min));
        assert!(sd.join(SUMMARY_FILE).is_file());
        if let Ok(text) = fs::read_to_string(sd.join(SAFE_SET_FILE)) {
            let idx = parse_index_list(&text).unwrap();
            assert_eq!(idx.len(), rows.last().unwrap().safe_size);
        }
    }
    let mean = minima.iter().sum::<f64>() / 3.0;
    assert_eq!(summary.best_test_error.mean, mean);
    assert_eq!(summarize_dir(&s).unwrap(), summary);

    let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["best_test_error"]["mean"].as_f64().unwrap(), mean);
    let spec_text = fs::read_to_string(dir.path().join("spec.txt")).unwrap();
    let mut back = ExperimentSpec::default();
    back.apply_config_text(&spec_text).unwrap();
    assert_eq!(back.to_config_string(), spec_text);
}

#[test]
fn report_merges_and_flags_corrupt_runs() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        &[
            ("method", "default"),
            ("noise_type", "symmetric"),
            ("tau", "0.4"),
            ("n_train", "300"),
            ("n_test", "90"),
            ("epochs", "7"),
            ("repeat", "2"),
        ],
    );
    run_experiment(&s).unwrap();
    let report = collect(&[dir.path().to_path_buf()]);
    assert!(!report.is_partial());
    let merged = report.merged_csv();
    let mut lines = merged.lines();
    assert!(lines.next().unwrap().starts_with("run,epoch,phase,"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 7);
    for row in &rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_ne!(f[5], "NA");
        assert_ne!(f[6], "NA");
        assert_eq!(&f[7..10], &["NA", "NA", "NA"]);
    }

    fs::write(seed_dir(dir.path(), 1).join(METRICS_FILE), "epoch,broken\n1,2\n").unwrap();
    let missing = dir.path().join("nope");
    let report = collect(&[dir.path().to_path_buf(), missing]);
    assert!(report.is_partial());
    assert_eq!(report.skipped.len(), 2);
    assert_eq!(report.runs.len(), 1);
    let out = dir.path().join("report");
    write_report(&report, &out).unwrap();
    assert_eq!(
        fs::read_to_string(out.join("merged.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 7
    );
    assert_eq!(
        fs::read_to_string(out.join("comparison.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn single_zero_offset_sweep_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let kv = [
        ("noise_type", "asymmetric"),
        ("tau", "0.3"),
        ("n_train", "600"),
        ("n_test", "90"),
        ("epochs", "10"),
    ];
    let sweep_root = dir.path().join("sweep");
    let points = sweep_transition(&spec(&sweep_root, &kv), &[0.0]).unwrap();
    let train_root = dir.path().join("train");
    let summary = run_experiment(&spec(&train_root, &kv)).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].summary, summary);
    let a = fs::read(seed_dir(&points[0].dir, 0).join(METRICS_FILE)).unwrap();
    let b = fs::read(seed_dir(&train_root, 0).join(METRICS_FILE)).unwrap();
    assert_eq!(a, b);
    let table = fs::read_to_string(sweep_root.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn sweep_rejects_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &[("method", "default")]);
    assert!(matches!(
        sweep_transition(&s, &[0.0]),
        Err(morph_core::Error::Config(_))
    ));
}
