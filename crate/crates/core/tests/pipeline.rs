use fairlabel::config::{Config, LambdaChoice, SignConvention};
use fairlabel::dataset::{ImageRecord, Manifest};
use fairlabel::error::{Error, Stage};
use fairlabel::labeler::{run_on_records, run_pipeline, PipelineRun};
use fairlabel::output;
use fairlabel::planted::{self, PlantedData, PlantedSpec};

fn small_spec(seed: u64) -> PlantedSpec {
    PlantedSpec {
        n_real: 24,
        n_synthetic: 12,
        n_synthetic_positive: 6,
        width: 16,
        height: 16,
        seed,
        ..PlantedSpec::default()
    }
}

fn run(data: &PlantedData, config: &Config) -> PipelineRun {
    run_on_records(&data.manifest, &data.records, config).unwrap()
}

fn assigned(run: &PipelineRun) -> Vec<Option<String>> {
    run.report.entries.iter().map(|e| e.assigned_class.clone()).collect()
}

#[test]
fn flipping_labels_and_names_keeps_assignments() {
    let config = Config::default();
    let data = planted::generate(&small_spec(1), config.coding()).unwrap();
    let base = run(&data, &config);

    let mut flipped = data.clone();
    for e in &mut flipped.manifest.real_entries {
        e.label = 1 - e.label;
    }
    std::mem::swap(
        &mut flipped.manifest.coding.positive_class_name,
        &mut flipped.manifest.coding.reference_class_name,
    );
    for r in flipped.records.iter_mut().filter(|r| r.label.is_some()) {
        r.label = r.label.map(|l| 1 - l);
    }
    let mut flipped_config = config.clone();
    std::mem::swap(&mut flipped_config.positive_class, &mut flipped_config.reference_class);
    let other = run(&flipped, &flipped_config);

    assert_eq!(assigned(&base), assigned(&other));
    assert!((base.fit.lambda - other.fit.lambda).abs() < 1e-12 * base.fit.lambda.max(1.0));
    for (a, b) in base.fit.coefficients.iter().zip(&other.fit.coefficients) {
        assert!((a + b).abs() < 1e-6);
    }
    assert!((base.roc.auc - other.roc.auc).abs() < 1e-12);
}

#[test]
fn permuting_synthetics_permutes_coefficients() {
    let config = Config {
        lambda: LambdaChoice::Fixed(0.05),
        ..Config::default()
    };
    let data = planted::generate(&small_spec(2), config.coding()).unwrap();
    let base = run(&data, &config);

    let n = data.manifest.n_real();
    let order: Vec<usize> = (0..data.manifest.n_synthetic()).rev().collect();
    let mut permuted = data.clone();
    permuted.manifest.synthetic_entries = order.iter().map(|&j| data.manifest.synthetic_entries[j].clone()).collect();
    let synth: Vec<ImageRecord> = order.iter().map(|&j| data.records[n + j].clone()).collect();
    permuted.records.truncate(n);
    permuted.records.extend(synth);
    let other = run(&permuted, &config);

    for (k, &j) in order.iter().enumerate() {
        assert!((other.fit.coefficients[k] - base.fit.coefficients[j]).abs() < 1e-8);
        assert_eq!(other.report.entries[k].synthetic_id, base.report.entries[j].synthetic_id);
    }
}

#[test]
fn conventions_mirror_each_other() {
    let config = Config::default();
    let data = planted::generate(&small_spec(3), config.coding()).unwrap();
    let a = run(&data, &config);
    let b = run(
        &data,
        &Config {
            sign_convention: SignConvention::NegativeReference,
            ..config.clone()
        },
    );
    assert_eq!(a.report.reference_count(), b.report.positive_count());
    assert_eq!(a.report.positive_count(), b.report.reference_count());
}

#[test]
fn repeated_runs_produce_identical_reports() {
    let config = Config::default();
    let data = planted::generate(&small_spec(4), config.coding()).unwrap();
    let a = run(&data, &config);
    let b = run(&data, &config);
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(output::audit_json(&a), output::audit_json(&b));
    assert_eq!(output::fit_json(&a), output::fit_json(&b));
}

#[test]
fn cv_choice_is_the_grid_minimum() {
    let config = Config {
        grid_size: 12,
        ..Config::default()
    };
    let data = planted::generate(&small_spec(5), config.coding()).unwrap();
    let r = run(&data, &config);
    let path = r.path.expect("auto lambda");
    assert_eq!(path.grid.len(), 12);
    assert!(path.grid.windows(2).all(|w| w[0] > w[1]));
    let best = path.cv_scores.iter().map(|s| s.mean).fold(f64::INFINITY, f64::min);
    let chosen = path.cv_scores.iter().find(|s| s.lambda == path.chosen).unwrap();
    assert_eq!(chosen.mean, best);
    assert_eq!(r.fit.lambda, path.chosen);
}

#[test]
fn pipeline_reads_images_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        output_dir: dir.path().join("out"),
        ..Config::default()
    };
    let data = planted::write_to_dir(&small_spec(6), config.coding(), &dir.path().join("data")).unwrap();
    let manifest = fairlabel::dataset::load_manifest(
        &dir.path().join("data/real.csv"),
        &dir.path().join("data/synthetic.csv"),
        config.coding(),
    )
    .unwrap();
    let from_disk = run_pipeline(&manifest, &config).unwrap();
    let in_memory = run(&data, &config);
    assert_eq!(from_disk.report.to_csv(), in_memory.report.to_csv());
    let written = output::write_reports(&from_disk, &config).unwrap();
    assert_eq!(written.len(), 6);
    assert!(written.iter().all(|p| p.exists()));
}

#[test]
fn missing_image_fails_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = planted::write_to_dir(&small_spec(7), Config::default().coding(), dir.path()).unwrap();
    std::fs::remove_file(dir.path().join(&data.manifest.synthetic_entries[0])).unwrap();
    data.manifest.real_root = dir.path().into();
    let err = run_pipeline(&data.manifest, &Config::default()).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: Stage::Load, .. }), "{err}");
}

#[test]
fn single_image_class_is_rejected() {
    let config = Config::default();
    let data = planted::generate(&small_spec(8), config.coding()).unwrap();
    let keep_one = data.manifest.real_entries.iter().position(|e| e.label == 1).unwrap();
    let keep: Vec<usize> = (0..data.manifest.n_real())
        .filter(|&i| data.manifest.real_entries[i].label == 0 || i == keep_one)
        .collect();
    let n = data.manifest.n_real();
    let manifest = Manifest::new(
        keep.iter().map(|&i| data.manifest.real_entries[i].clone()).collect(),
        data.manifest.synthetic_entries.clone(),
        config.coding(),
        ".",
        ".",
    )
    .unwrap();
    let mut records: Vec<ImageRecord> = keep.iter().map(|&i| data.records[i].clone()).collect();
    records.extend(data.records[n..].iter().cloned());
    let err = run_on_records(&manifest, &records, &config).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: Stage::CrossValidation, .. }), "{err}");
}
