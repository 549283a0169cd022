use std::fs;
use std::path::Path;

use serde_json::json;
use skelrig::synth::{synth_corpus, SynthManifest, SynthSpec};
use skelrig::Category;
use skelrig_cli::runlog::RunLog;
use skelrig_cli::{run_pipeline, CliError, PipelineConfig, Stage};

fn tiny_toy(steps: usize) -> serde_json::Value {
    json!({
        "model": { "width": 32, "layers": 1, "heads": 2, "context": 192, "positions": 192 },
        "train": { "steps": steps, "batch_size": 8, "lr": 3e-3 },
        "encoder": { "width": 32, "hidden": 16, "points": 256 },
        "max_gen_len": 64
    })
}

fn setup(dir: &Path, steps: usize) -> (PipelineConfig, SynthManifest) {
    let spec = SynthSpec {
        joints: (5, 20),
        ..SynthSpec::clean(50)
    };
    let manifest = synth_corpus(&dir.join("corpus"), &spec, 11).unwrap();
    fs::write(dir.join("toy.json"), tiny_toy(steps).to_string()).unwrap();
    let cfg = PipelineConfig {
        model_config: Some("toy.json".into()),
        test_fraction: 0.2,
        seed: 4,
        ..Default::default()
    };
    (cfg, manifest)
}

#[test]
fn smoke_run_then_fully_cached_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = setup(dir.path(), 20);
    let log = RunLog::open(&dir.path().join("log.jsonl"), "pipeline").unwrap();
    let first = run_pipeline(&cfg, dir.path(), &log).unwrap();
    assert_eq!(first.executed, Stage::ALL);
    assert!(first.report.exists());
    let split: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/split/split.json")).unwrap()).unwrap();
    let tests = split["test"].as_array().unwrap().len();
    assert!(tests >= 5, "{tests}");
    let e = &first.eval;
    assert_eq!(e.pairs.len() + e.missing.len() + e.failures.len(), tests);
    assert!(e.pairs.windows(2).all(|w| w[0].id < w[1].id));

    let second = run_pipeline(&cfg, dir.path(), &log).unwrap();
    assert!(second.executed.is_empty(), "{:?}", second.executed);
    assert_eq!(second.skipped, Stage::ALL);
    assert_eq!(second.eval, first.eval);

    // New training settings only invalidate training and what follows.
    fs::write(dir.path().join("toy.json"), tiny_toy(25).to_string()).unwrap();
    let third = run_pipeline(&cfg, dir.path(), &log).unwrap();
    assert_eq!(third.skipped, [Stage::Curate, Stage::Split, Stage::Tokenize]);
    assert_eq!(third.executed[0], Stage::Train);

    // A tampered output forces its stage to run again.
    fs::write(dir.path().join("run/curate/curation.json"), "{}").unwrap();
    let fourth = run_pipeline(&cfg, dir.path(), &log).unwrap();
    assert_eq!(fourth.executed, [Stage::Curate]);

    let log_text = fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    assert!(log_text.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn missing_humanoid_labels_halt_tokenize() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, manifest) = setup(dir.path(), 5);
    let victim = manifest.items.iter().find(|i| i.category == Category::Humanoid).unwrap();
    fs::remove_file(dir.path().join(format!("corpus/{}.labels.json", victim.id))).unwrap();
    let err = run_pipeline(&cfg, dir.path(), &RunLog::disabled()).unwrap_err();
    match err.stage() {
        Some((Stage::Tokenize, CliError::MissingLabel { id, category })) => {
            assert_eq!(id, &victim.id);
            assert_eq!(*category, Category::Humanoid);
        }
        _ => panic!("{err}"),
    }
    assert!(err.to_string().contains("tokenize") && err.to_string().contains("MissingLabel"));
    assert!(!dir.path().join("run/manifests/tokenize.json").exists());
}

#[test]
fn missing_inputs_abort_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, _) = setup(dir.path(), 5);
    cfg.density_params = Some("absent.json".into());
    let err = run_pipeline(&cfg, dir.path(), &RunLog::disabled()).unwrap_err();
    assert!(matches!(err, CliError::MissingPath(_)), "{err}");
    assert!(!dir.path().join("run").exists());
}
