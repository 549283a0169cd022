use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use skelrig::curation::{filter_corpus, stratified_split, CurationReport, SplitResult, SplitSpec};
use skelrig::density::DensityBinner;
use skelrig::metrics::EvalConfig;
use skelrig::tokenizer::{decode, has_quantization_collision, Diagnostic, TokenSequence, Vocabulary};
use skelrig_armodel::{generate, load_checkpoint, save_checkpoint, GenerationNote, ShapeEncoder, TrainExample};

use crate::cache::{list_files, ContentHash, StageManifest};
use crate::commands::{corpus_examples, train_model};
use crate::config::{PipelineConfig, ToyConfig};
use crate::error::{CliError, Result, Stage};
use crate::eval::{evaluate_dirs, CorpusEval};
use crate::rigs::skeleton_path;
use crate::runlog::RunLog;

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
    pub report: PathBuf,
    pub eval: CorpusEval,
}

impl PipelineOutcome {
    pub fn summary(&self) -> String {
        let names = |v: &[Stage]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
        format!(
            "executed [{}], cached [{}]\n{}\nreport: {}",
            names(&self.executed),
            names(&self.skipped),
            self.eval.summary(),
            self.report.display()
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSummary {
    steps: usize,
    loss: f64,
    accuracy: f64,
}

struct Runner<'a> {
    out: PathBuf,
    log: &'a RunLog,
    executed: Vec<Stage>,
    skipped: Vec<Stage>,
}

impl Runner<'_> {
    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.out.join("manifests").join(format!("{stage}.json"))
    }

    /// Runs `body` in a fresh `out/<stage>` directory unless the stored
    /// manifest shows identical inputs and untouched outputs.
    fn stage(
        &mut self,
        stage: Stage,
        input_hash: String,
        body: impl FnOnce(&Path) -> Result<Vec<PathBuf>>,
    ) -> Result<StageManifest> {
        let wrap = |cause: CliError| CliError::Stage {
            stage,
            cause: Box::new(cause),
        };
        let mpath = self.manifest_path(stage);
        if let Ok(m) = skelrig::json::read::<StageManifest>(&mpath) {
            if m.is_current(&input_hash, &self.out) {
                self.log.info("stage-cached", json!({ "stage": stage }));
                self.skipped.push(stage);
                return Ok(m);
            }
        }
        self.log.info("stage-start", json!({ "stage": stage, "input_hash": input_hash }));
        let dir = self.out.join(stage.name());
        let run = || -> Result<StageManifest> {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            }
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            let outputs = body(&dir)?;
            let m = StageManifest::record(stage.name(), input_hash, &self.out, &outputs)?;
            fs::create_dir_all(mpath.parent().unwrap()).map_err(|e| CliError::io(&mpath, e))?;
            skelrig::json::write(&mpath, &m)?;
            Ok(m)
        };
        let m = run().map_err(|e| {
            self.log.error("stage-failed", json!({ "stage": stage, "error": e.to_string() }));
            wrap(e)
        })?;
        self.executed.push(stage);
        Ok(m)
    }
}

fn hash_for(stage: Stage, params: serde_json::Value, upstream: &[&StageManifest]) -> ContentHash {
    let mut h = ContentHash::new(stage.name());
    h.json(&params);
    for m in upstream {
        h.json(&m.outputs);
    }
    h
}

fn write_json<T: Serialize>(path: PathBuf, value: &T, outputs: &mut Vec<PathBuf>) -> Result<()> {
    skelrig::json::write(&path, value)?;
    outputs.push(path);
    Ok(())
}

fn subdir(dir: &Path, name: &str) -> Result<PathBuf> {
    let d = dir.join(name);
    fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
    Ok(d)
}

/// Runs every stage in order under `cfg.out`. Paths resolve against `workdir`
/// and are all checked before any stage starts.
pub fn run_pipeline(cfg: &PipelineConfig, workdir: &Path, log: &RunLog) -> Result<PipelineOutcome> {
    let cfg = cfg.resolve(workdir)?;
    let toy = match &cfg.model_config {
        Some(p) => ToyConfig::load(p)?,
        None => ToyConfig::default(),
    };
    let mut toy = toy;
    toy.model.vocab_size = cfg.resolution as usize + 4;
    toy.model.validate()?;
    let width = toy.model.width;
    let binner0 = match &cfg.density_params {
        Some(p) => DensityBinner::load(p)?,
        None => DensityBinner::default_levels(width, &mut ChaCha8Rng::seed_from_u64(cfg.seed)),
    };
    if binner0.width() != width {
        return Err(CliError::Config(format!(
            "density embeddings are {} wide but the model is {width}",
            binner0.width()
        )));
    }
    let enc_cfg = toy.encoder_config();
    let vocab = Vocabulary::new(cfg.resolution);
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;

    let mut r = Runner {
        out: cfg.out.clone(),
        log,
        executed: Vec::new(),
        skipped: Vec::new(),
    };

    let mut corpus_hash = ContentHash::new("corpus");
    corpus_hash.dir(&cfg.corpus)?;
    let corpus_hash = corpus_hash.finish();

    let mut h = hash_for(Stage::Curate, json!({ "rules": cfg.curation }), &[]);
    h.str(&corpus_hash);
    let curate = r.stage(Stage::Curate, h.finish(), |dir| {
        let report = filter_corpus(&cfg.corpus, &cfg.curation)?;
        for w in &report.warnings {
            log.warn("curation", json!({ "warning": w }));
        }
        for rej in &report.rejections {
            log.info("rejected", json!({ "id": rej.id, "reasons": rej.all_reasons }));
        }
        let mut outs = Vec::new();
        write_json(dir.join("curation.json"), &report, &mut outs)?;
        Ok(outs)
    })?;

    let split_params = json!({ "seed": cfg.seed, "test_fraction": cfg.test_fraction });
    let split = r.stage(Stage::Split, hash_for(Stage::Split, split_params, &[&curate]).finish(), |dir| {
        let report: CurationReport = skelrig::json::read(&cfg.out.join("curate/curation.json"))?;
        let spec = SplitSpec {
            test_fraction: cfg.test_fraction,
            ..SplitSpec::by_category_and_size(cfg.seed)
        };
        let result = stratified_split(&report.items, &spec)?;
        let mut outs = Vec::new();
        write_json(dir.join("split.json"), &result, &mut outs)?;
        Ok(outs)
    })?;

    let tok_params = json!({
        "resolution": cfg.resolution,
        "encoder": enc_cfg,
        "density": binner0.params(),
        "seed": cfg.seed,
    });
    let mut h = hash_for(Stage::Tokenize, tok_params, &[&split]);
    h.str(&corpus_hash);
    let tokenize = r.stage(Stage::Tokenize, h.finish(), |dir| {
        let split: SplitResult = skelrig::json::read(&cfg.out.join("split/split.json"))?;
        let encoder = ShapeEncoder::new(enc_cfg);
        let (tokens, gt) = (subdir(dir, "tokens")?, subdir(dir, "gt")?);
        let mut outs = Vec::new();
        let mut sets: BTreeMap<&str, Vec<TrainExample>> = BTreeMap::new();
        for (name, ids) in [("train", &split.train), ("test", &split.test)] {
            let prepared = corpus_examples(&cfg.corpus, ids, &encoder, &binner0, vocab, cfg.seed)?;
            for (id, p) in ids.iter().zip(prepared) {
                if has_quantization_collision(&p.skeleton, cfg.resolution)? {
                    log.warn("collision", json!({ "id": id, "resolution": cfg.resolution }));
                }
                let mut seq = p.sequence.clone();
                seq.provenance = Some(id.clone());
                let tp = tokens.join(format!("{id}.tok"));
                seq.save(&tp)?;
                outs.push(tp);
                if name == "test" {
                    let gp = skeleton_path(&gt, id);
                    p.skeleton.save(&gp)?;
                    outs.push(gp);
                }
                sets.entry(name).or_default().push(p.example);
            }
        }
        for name in ["train", "test"] {
            let set = sets.remove(name).unwrap_or_default();
            write_json(dir.join(format!("{name}.json")), &set, &mut outs)?;
        }
        write_json(dir.join("density.json"), &binner0.params(), &mut outs)?;
        Ok(outs)
    })?;

    let train_params = json!({ "toy": toy, "seed": cfg.seed });
    let train = r.stage(Stage::Train, hash_for(Stage::Train, train_params, &[&tokenize]).finish(), |dir| {
        let examples: Vec<TrainExample> = skelrig::json::read(&cfg.out.join("tokenize/train.json"))?;
        if examples.is_empty() {
            return Err(CliError::Config("no training examples after split".into()));
        }
        let binner = DensityBinner::load(&cfg.out.join("tokenize/density.json"))?;
        let (model, binner, loss, accuracy) = train_model(&toy, &examples, binner, cfg.seed, log)?;
        let ckpt = dir.join("model.ckpt");
        save_checkpoint(&ckpt, &model, &enc_cfg, Some(&binner.params()))?;
        let mut outs = vec![ckpt];
        let summary = TrainSummary {
            steps: toy.train.steps,
            loss,
            accuracy,
        };
        write_json(dir.join("summary.json"), &summary, &mut outs)?;
        Ok(outs)
    })?;

    let gen_cfg = toy.generate_config();
    let gen_params = json!({ "generate": gen_cfg });
    let gen = r.stage(
        Stage::Generate,
        hash_for(Stage::Generate, gen_params, &[&tokenize, &train]).finish(),
        |dir| {
            let ckpt = load_checkpoint(&cfg.out.join("train/model.ckpt"))?;
            let binner = DensityBinner::from_params(
                ckpt.density
                    .ok_or_else(|| CliError::Config("checkpoint carries no density binner".into()))?,
            )?;
            let split: SplitResult = skelrig::json::read(&cfg.out.join("split/split.json"))?;
            let test: Vec<TrainExample> = skelrig::json::read(&cfg.out.join("tokenize/test.json"))?;
            let mut outs = Vec::new();
            let mut notes: BTreeMap<String, Vec<GenerationNote>> = BTreeMap::new();
            for (id, ex) in split.test.iter().zip(&test) {
                let mut bundle = ex.bundle.clone();
                if let Some(n) = ex.bone_count {
                    bundle.density = binner.density_vector(n, false);
                }
                let mut g = generate(&ckpt.model, &bundle, &gen_cfg)?;
                g.sequence.provenance = Some(id.clone());
                let p = dir.join(format!("{id}.tok"));
                g.sequence.save(&p)?;
                outs.push(p);
                if !g.notes.is_empty() {
                    notes.insert(id.clone(), g.notes);
                }
            }
            write_json(dir.join("notes.json"), &notes, &mut outs)?;
            Ok(outs)
        },
    )?;

    let detok = r.stage(Stage::Detokenize, hash_for(Stage::Detokenize, json!({}), &[&gen]).finish(), |dir| {
        let pred = subdir(dir, "pred")?;
        let mut outs = Vec::new();
        let mut diags: BTreeMap<String, Vec<Diagnostic>> = BTreeMap::new();
        let mut failures: BTreeMap<String, String> = BTreeMap::new();
        for path in list_files(&cfg.out.join("generate"))? {
            if path.extension().is_none_or(|e| e != "tok") {
                continue;
            }
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            match decode(&TokenSequence::load(&path)?) {
                Ok(d) => {
                    let p = skeleton_path(&pred, &id);
                    d.skeleton.save(&p)?;
                    outs.push(p);
                    if !d.diagnostics.is_empty() {
                        diags.insert(id, d.diagnostics);
                    }
                }
                Err(e) => {
                    log.warn("decode-failed", json!({ "id": id, "error": e.to_string() }));
                    failures.insert(id, e.to_string());
                }
            }
        }
        write_json(dir.join("diagnostics.json"), &json!({ "diagnostics": diags, "failures": failures }), &mut outs)?;
        Ok(outs)
    })?;

    let eval_cfg = EvalConfig {
        tau_match: cfg.tau_match,
        ..Default::default()
    };
    r.stage(
        Stage::Eval,
        hash_for(Stage::Eval, json!({ "eval": eval_cfg }), &[&tokenize, &detok]).finish(),
        |dir| {
            let report = evaluate_dirs(&cfg.out.join("detokenize/pred"), &cfg.out.join("tokenize/gt"), &eval_cfg)?;
            let mut outs = Vec::new();
            write_json(dir.join("report.json"), &report, &mut outs)?;
            Ok(outs)
        },
    )?;

    let report = cfg.out.join("eval/report.json");
    let eval = skelrig::json::read(&report)?;
    Ok(PipelineOutcome {
        executed: r.executed,
        skipped: r.skipped,
        report,
        eval,
    })
}
