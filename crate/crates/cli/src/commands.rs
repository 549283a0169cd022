use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use skelrig::curation::{filter_corpus, list_skeleton_ids, stratified_split, CurationReport, CurationRules, SplitSpec};
use skelrig::density::DensityBinner;
use skelrig::groups::{plan_groups, GroupPlan, Taxonomy};
use skelrig::metrics::EvalConfig;
use skelrig::synth::{synth_corpus, DefectRates, SynthSpec};
use skelrig::tokenizer::{decode, encode, TokenSequence, Vocabulary};
use skelrig::viz::export_viz;
use skelrig::{sample_mesh, Category, NormalizationTransform, Skeleton, TriMesh};
use skelrig_armodel::{
    example_from_rig, generate, load_checkpoint, save_checkpoint, ClsKind, ConditionBundle, Model, ShapeEncoder,
    Trainer, TrainExample,
};

use crate::config::{PipelineConfig, ToyConfig};
use crate::error::{CliError, Result};
use crate::eval::evaluate_dirs;
use crate::pipeline::run_pipeline;
use crate::rigs::{attach_labels, id_of, load_rig};
use crate::runlog::RunLog;

#[derive(Debug, Parser)]
#[command(name = "skelrig", version, about = "Skeleton rigging toolkit: curation, token codec, toy generator and metrics")]
pub struct Cli {
    /// Directory every relative path is resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON-lines diagnostics log, relative to the workdir.
    #[arg(long, global = true, default_value = "skelrig.log.jsonl")]
    pub log: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of skeletons, meshes and label files.
    Synth(SynthArgs),
    /// Validate every skeleton in a corpus directory and write a report.
    Curate(CurateArgs),
    /// Split the accepted items of a curation report into train and test.
    Split(SplitArgs),
    /// Attach a labels file to a skeleton and print its group plan.
    Label(LabelArgs),
    /// Normalize and encode a skeleton as a token file.
    Tokenize(TokenizeArgs),
    /// Decode a token file back to a skeleton.
    Detokenize(DetokenizeArgs),
    /// Print the cutpoints, bin probabilities and level for a bone count.
    DensityInfo(DensityInfoArgs),
    /// Train the toy generator on a corpus directory.
    TrainToy(TrainToyArgs),
    /// Generate a token sequence for a mesh from a checkpoint.
    Generate(GenerateArgs),
    /// Score predicted skeletons against ground truth, paired by id.
    Eval(EvalArgs),
    /// Export a skeleton (and optionally its mesh) as an OBJ for viewing.
    Viz(VizArgs),
    /// Run curate, split, tokenize, train, generate, detokenize and eval with caching.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Comma-separated list of humanoid, tetrapod, other.
    #[arg(long, value_delimiter = ',', default_value = "humanoid,tetrapod,other", value_parser = parse_category)]
    pub categories: Vec<Category>,
    #[arg(long, default_value_t = 5)]
    pub min_joints: usize,
    #[arg(long, default_value_t = 60)]
    pub max_joints: usize,
    /// Share of rigs given a cycle.
    #[arg(long, default_value_t = 0.0)]
    pub cycle: f64,
    /// Share of rigs split into several trees.
    #[arg(long, default_value_t = 0.0)]
    pub forest: f64,
    /// Share of rigs cut below five joints.
    #[arg(long, default_value_t = 0.0)]
    pub too_few: f64,
    /// Share of rigs with a leaf moved off the mesh.
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Corpus directory of `<id>.skel.json` and `<id>.obj` files.
    pub dir: PathBuf,
    #[arg(long, default_value_t = skelrig::curation::DEFAULT_MIN_JOINTS)]
    pub min_joints: usize,
    /// Leaf containment margin as a fraction of the mesh box diagonal.
    #[arg(long, default_value_t = skelrig::curation::DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long, default_value = "curation.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Curation report produced by `curate`.
    #[arg(long, default_value = "curation.json")]
    pub report: PathBuf,
    /// Split spec JSON; strata by category and size when absent. Its seed is replaced by `--seed`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's default test fraction.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, short, default_value = "split.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    pub skeleton: PathBuf,
    /// JSON map of joint id to fine label id.
    #[arg(long)]
    pub labels: PathBuf,
    /// Taxonomy JSON; the built-in table for the category when absent.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Labeled skeleton output.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    pub skeleton: PathBuf,
    /// Labels file; required for humanoid and tetrapod skeletons that carry no labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Normalize by this mesh's bounding box instead of the skeleton's own.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value_t = skelrig::DEFAULT_RESOLUTION)]
    pub resolution: u32,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetokenizeArgs {
    pub tokens: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Print every repair the decoder made.
    #[arg(long)]
    pub diagnostics: bool,
    /// Map the result back into this mesh's frame.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DensityInfoArgs {
    /// Binner parameters JSON; default levels when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Bone count to bin.
    #[arg(long)]
    pub n: f64,
    /// Embedding width for default levels.
    #[arg(long, default_value_t = 8)]
    pub width: usize,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Toy model config JSON; defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split file; only its train ids are used when given.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, short, default_value = "model.ckpt")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "model.ckpt")]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    /// humanoid-main, humanoid-aux or non-humanoid.
    #[arg(long)]
    pub cls: ClsKind,
    /// Density level index.
    #[arg(long)]
    pub density_level: usize,
    /// Skeleton whose Main block is forced at the start, in the mesh's frame.
    #[arg(long)]
    pub main_bones: Option<PathBuf>,
    /// Sample from the k most likely tokens instead of greedy decoding.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1024)]
    pub max_len: usize,
    /// Points sampled from the mesh; the checkpoint's setting when absent.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = skelrig::metrics::DEFAULT_TAU_MATCH)]
    pub tau: f64,
    #[arg(long, default_value_t = skelrig::metrics::DEFAULT_B2B_SPACING)]
    pub spacing: f64,
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    pub skeleton: PathBuf,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value = "pipeline.json")]
    pub config: PathBuf,
}

fn parse_category(s: &str) -> std::result::Result<Category, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown category {s:?}; expected humanoid, tetrapod or other"))
}

/// Resolved paths, seed and log shared by every subcommand.
pub struct Ctx {
    pub workdir: PathBuf,
    pub seed: u64,
    pub log: RunLog,
}

impl Ctx {
    pub fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    fn existing(&self, p: &Path) -> Result<PathBuf> {
        let full = self.path(p);
        if full.exists() {
            Ok(full)
        } else {
            Err(CliError::MissingPath(full))
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => fs::create_dir_all(d).map_err(|e| CliError::io(d, e)),
        None => Ok(()),
    }
}

pub fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Curate(_) => "curate",
        Command::Split(_) => "split",
        Command::Label(_) => "label",
        Command::Tokenize(_) => "tokenize",
        Command::Detokenize(_) => "detokenize",
        Command::DensityInfo(_) => "density-info",
        Command::TrainToy(_) => "train-toy",
        Command::Generate(_) => "generate",
        Command::Eval(_) => "eval",
        Command::Viz(_) => "viz",
        Command::Pipeline(_) => "pipeline",
    }
}

/// Runs a parsed command line and returns the human summary.
pub fn run(cli: Cli) -> Result<String> {
    let name = command_name(&cli.command);
    let log = RunLog::open(&cli.workdir.join(&cli.log), name)?;
    let ctx = Ctx {
        workdir: cli.workdir,
        seed: cli.seed,
        log,
    };
    ctx.log.info("start", json!({ "seed": ctx.seed }));
    let out = dispatch(&ctx, cli.command);
    match &out {
        Ok(_) => ctx.log.info("done", json!({})),
        Err(e) => ctx.log.error("failed", json!({ "error": e.to_string() })),
    }
    out
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<String> {
    match command {
        Command::Synth(a) => synth(ctx, a),
        Command::Curate(a) => curate(ctx, a),
        Command::Split(a) => split(ctx, a),
        Command::Label(a) => label(ctx, a),
        Command::Tokenize(a) => tokenize(ctx, a),
        Command::Detokenize(a) => detokenize(ctx, a),
        Command::DensityInfo(a) => density_info(ctx, a),
        Command::TrainToy(a) => train_toy(ctx, a),
        Command::Generate(a) => generate_cmd(ctx, a),
        Command::Eval(a) => eval(ctx, a),
        Command::Viz(a) => viz(ctx, a),
        Command::Pipeline(a) => pipeline(ctx, a),
    }
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<String> {
    let spec = SynthSpec {
        count: a.count,
        categories: a.categories,
        joints: (a.min_joints, a.max_joints),
        defects: DefectRates {
            cycle: a.cycle,
            forest: a.forest,
            too_few_joints: a.too_few,
            drift: a.drift,
        },
    };
    let dir = ctx.path(&a.out);
    let manifest = synth_corpus(&dir, &spec, ctx.seed)?;
    let planted = manifest.items.iter().filter(|i| i.defect.is_some()).count();
    ctx.log.info("synth", json!({ "count": manifest.items.len(), "planted": planted }));
    Ok(format!("wrote {} rigs ({planted} with planted defects) to {}", manifest.items.len(), dir.display()))
}

pub fn curation_summary(r: &CurationReport) -> String {
    let mut s = format!("{} of {} accepted", r.accepted, r.total);
    for rej in &r.rejections {
        let _ = write!(s, "\n  rejected {}: {:?} {}", rej.id, rej.reason, rej.detail);
    }
    s
}

fn curate(ctx: &Ctx, a: CurateArgs) -> Result<String> {
    let rules = CurationRules {
        min_joints: a.min_joints,
        margin: a.margin,
    };
    let report = filter_corpus(&ctx.existing(&a.dir)?, &rules)?;
    for w in &report.warnings {
        ctx.log.warn("curation", json!({ "warning": w }));
    }
    for r in &report.rejections {
        ctx.log.info("rejected", json!({ "id": r.id, "reasons": r.all_reasons, "detail": r.detail }));
    }
    let out = ctx.path(&a.report);
    ensure_parent(&out)?;
    skelrig::json::write(&out, &report)?;
    Ok(curation_summary(&report))
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<String> {
    let report: CurationReport = skelrig::json::read(&ctx.existing(&a.report)?)?;
    let mut spec = match &a.spec {
        Some(p) => skelrig::json::read(&ctx.existing(p)?)?,
        None => SplitSpec::by_category_and_size(ctx.seed),
    };
    spec.seed = ctx.seed;
    if let Some(f) = a.test_fraction {
        spec.test_fraction = f;
    }
    let result = stratified_split(&report.items, &spec)?;
    for s in &result.empty_strata {
        ctx.log.warn("empty-stratum", json!({ "stratum": s }));
    }
    let out = ctx.path(&a.out);
    ensure_parent(&out)?;
    skelrig::json::write(&out, &result)?;
    Ok(format!("{} train, {} test", result.train.len(), result.test.len()))
}

fn load_taxonomy(ctx: &Ctx, p: Option<&PathBuf>) -> Result<Option<Taxonomy>> {
    p.map(|p| Ok(Taxonomy::load(&ctx.existing(p)?)?)).transpose()
}

pub fn plan_summary(plan: &GroupPlan) -> String {
    let parts: Vec<String> = plan
        .groups
        .iter()
        .map(|g| format!("{} ({} joints)", g.coarse.name(), g.members.len()))
        .collect();
    format!("{} groups: {}", plan.groups.len(), parts.join(", "))
}

fn label(ctx: &Ctx, a: LabelArgs) -> Result<String> {
    let path = ctx.existing(&a.skeleton)?;
    let skel = Skeleton::load(&path)?;
    let tax = load_taxonomy(ctx, a.taxonomy.as_ref())?;
    let labels = ctx.existing(&a.labels)?;
    let labeled = attach_labels(skel, Some(&labels), tax.as_ref(), &id_of(&path))?;
    let plan = plan_groups(&labeled)?;
    let out = ctx.path(&a.out);
    ensure_parent(&out)?;
    labeled.save(&out)?;
    Ok(plan_summary(&plan))
}

fn tokenize(ctx: &Ctx, a: TokenizeArgs) -> Result<String> {
    let path = ctx.existing(&a.skeleton)?;
    let id = id_of(&path);
    let skel = Skeleton::load(&path)?;
    let tax = load_taxonomy(ctx, a.taxonomy.as_ref())?;
    let labels = a.labels.as_ref().map(|p| ctx.existing(p)).transpose()?;
    let skel = attach_labels(skel, labels.as_deref(), tax.as_ref(), &id)?;
    let transform = match &a.mesh {
        Some(m) => NormalizationTransform::fit(&TriMesh::load(&ctx.existing(m)?)?.vertices)?,
        None => NormalizationTransform::fit(&skel.positions())?,
    };
    let normalized = transform.apply_skeleton(&skel);
    let plan = plan_groups(&normalized)?;
    let vocab = Vocabulary::new(a.resolution);
    if skelrig::tokenizer::has_quantization_collision(&normalized, a.resolution)? {
        ctx.log.warn("collision", json!({ "id": id, "resolution": a.resolution }));
    }
    let mut seq = encode(&normalized, &plan, vocab)?;
    seq.provenance = Some(id);
    let out = ctx.path(&a.out);
    ensure_parent(&out)?;
    seq.save(&out)?;
    Ok(format!("{} tokens; {}", seq.len(), plan_summary(&plan)))
}

fn detokenize(ctx: &Ctx, a: DetokenizeArgs) -> Result<String> {
    let seq = TokenSequence::load(&ctx.existing(&a.tokens)?)?;
    let decoded = decode(&seq)?;
    let skel = match &a.mesh {
        Some(m) => NormalizationTransform::fit(&TriMesh::load(&ctx.existing(m)?)?.vertices)?.invert_skeleton(&decoded.skeleton),
        None => decoded.skeleton.clone(),
    };
    for d in &decoded.diagnostics {
        ctx.log.warn("diagnostic", json!(d));
    }
    let out = ctx.path(&a.out);
    ensure_parent(&out)?;
    skel.save(&out)?;
    let mut s = format!("{} joints, {} diagnostics", skel.len(), decoded.diagnostics.len());
    if a.diagnostics {
        for d in &decoded.diagnostics {
            let _ = write!(s, "\n  {}", serde_json::to_string(d).expect("diagnostic serializes"));
        }
    }
    Ok(s)
}

fn density_info(ctx: &Ctx, a: DensityInfoArgs) -> Result<String> {
    let binner = match &a.params {
        Some(p) => DensityBinner::load(&ctx.existing(p)?)?,
        None => DensityBinner::default_levels(a.width, &mut ChaCha8Rng::seed_from_u64(ctx.seed)),
    };
    let probs = binner.soft_probs(a.n);
    let cut: Vec<String> = binner.cutpoints().iter().map(|c| format!("{c:.4}")).collect();
    let p: Vec<String> = probs.iter().map(|x| format!("{x:.6}")).collect();
    Ok(format!(
        "cutpoints [{}] tau {}\nn = {}: probs [{}] level {}",
        cut.join(", "),
        binner.tau(),
        a.n,
        p.join(", "),
        binner.level(a.n)
    ))
}

/// Prepares a training example per id from a corpus directory.
pub fn corpus_examples(
    dir: &Path,
    ids: &[String],
    encoder: &ShapeEncoder,
    binner: &DensityBinner,
    vocab: Vocabulary,
    seed: u64,
) -> Result<Vec<skelrig_armodel::PreparedRig>> {
    ids.iter()
        .map(|id| {
            let (skel, mesh) = load_rig(dir, id)?;
            Ok(example_from_rig(&skel, &mesh, encoder, binner, vocab, seed, id)?)
        })
        .collect()
}

/// Trains a fresh model with a fresh binner; returns both trained.
pub fn train_model(
    cfg: &ToyConfig,
    examples: &[TrainExample],
    binner: DensityBinner,
    seed: u64,
    log: &RunLog,
) -> Result<(Model, DensityBinner, f64, f64)> {
    let mut train_cfg = cfg.train;
    train_cfg.seed = seed;
    let model = Model::new(cfg.model, seed)?;
    let mut trainer = Trainer::new(model, Some(binner), train_cfg)?;
    let every = (train_cfg.steps / 20).max(1);
    let reports = trainer.fit(examples, train_cfg.steps, |r| {
        if r.step % every == 0 {
            log.info("train-step", json!(r));
        }
        true
    })?;
    let last = reports.last().map_or((f64::NAN, 0.0), |r| (r.loss, r.accuracy));
    let (model, binner) = trainer.into_parts();
    Ok((model, binner.expect("binner attached"), last.0, last.1))
}

fn train_toy(ctx: &Ctx, a: TrainToyArgs) -> Result<String> {
    let cfg = match &a.config {
        Some(p) => ToyConfig::load(&ctx.existing(p)?)?,
        None => ToyConfig::default(),
    };
    let dir = ctx.existing(&a.corpus)?;
    let ids = match &a.split {
        Some(p) => skelrig::json::read::<skelrig::curation::SplitResult>(&ctx.existing(p)?)?.train,
        None => list_skeleton_ids(&dir)?,
    };
    let enc_cfg = cfg.encoder_config();
    let encoder = ShapeEncoder::new(enc_cfg);
    let binner = DensityBinner::default_levels(cfg.model.width, &mut ChaCha8Rng::seed_from_u64(ctx.seed));
    let vocab = Vocabulary::new((cfg.model.vocab_size - 4) as u32);
    let prepared = corpus_examples(&dir, &ids, &encoder, &binner, vocab, ctx.seed)?;
    let examples: Vec<TrainExample> = prepared.into_iter().map(|p| p.example).collect();
    let (model, binner, loss, acc) = train_model(&cfg, &examples, binner, ctx.seed, &ctx.log)?;
    let out = ctx.path(&a.out);
    ensure_parent(&out)?;
    save_checkpoint(&out, &model, &enc_cfg, Some(&binner.params()))?;
    Ok(format!(
        "trained on {} sequences for {} steps: loss {loss:.4}, accuracy {acc:.4}\nwrote {}",
        examples.len(),
        cfg.train.steps,
        out.display()
    ))
}

fn generate_cmd(ctx: &Ctx, a: GenerateArgs) -> Result<String> {
    let ckpt = load_checkpoint(&ctx.existing(&a.checkpoint)?)?;
    let params = ckpt
        .density
        .ok_or_else(|| CliError::Config("checkpoint carries no density binner".into()))?;
    let binner = DensityBinner::from_params(params)?;
    if a.density_level >= binner.bins() {
        return Err(CliError::Config(format!(
            "density level {} out of range; the binner has {} levels",
            a.density_level,
            binner.bins()
        )));
    }
    let mut enc_cfg = ckpt.shape_encoder;
    if let Some(p) = a.points {
        enc_cfg.points = p;
    }
    let encoder = ShapeEncoder::new(enc_cfg);
    let mesh_file = ctx.existing(&a.mesh)?;
    let mesh = TriMesh::load(&mesh_file)?;
    let transform = NormalizationTransform::fit(&mesh.vertices)?;
    let id = id_of(&mesh_file);
    let sample = transform.apply_mesh(&sample_mesh(&mesh, enc_cfg.points, ctx.seed, &id)?);
    let model = ckpt.model;
    let vocab = model.vocab();
    let mut bundle = ConditionBundle::new(
        encoder.encode_for(&sample, model.config().width)?,
        a.cls,
        binner.level_embedding(a.density_level).to_vec(),
    );
    if let Some(p) = &a.main_bones {
        let main = transform.apply_skeleton(&Skeleton::load(&ctx.existing(p)?)?);
        let main = if main.is_labeled() { main } else { main.with_category(Category::Other) };
        let seq = encode(&main, &plan_groups(&main)?, vocab)?;
        bundle = bundle.with_prefix(seq.first_block().expect("encoded skeleton has a block"), vocab)?;
    }
    let mut gen_cfg = skelrig_armodel::GenerateConfig {
        max_len: a.max_len,
        ..Default::default()
    };
    if let Some(k) = a.top_k {
        gen_cfg.sampling = skelrig_armodel::Sampling::TopK {
            k,
            temperature: a.temperature,
            seed: ctx.seed,
        };
    }
    let mut g = generate(&model, &bundle, &gen_cfg)?;
    for n in &g.notes {
        ctx.log.warn("generation", json!(n));
    }
    g.sequence.provenance = Some(id);
    let out = ctx.path(&a.out);
    ensure_parent(&out)?;
    g.sequence.save(&out)?;
    Ok(format!("{} tokens ({} forced), {} notes", g.sequence.len(), g.forced, g.notes.len()))
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<String> {
    let cfg = EvalConfig {
        tau_match: a.tau,
        b2b_spacing: a.spacing,
    };
    let r = evaluate_dirs(&ctx.existing(&a.pred)?, &ctx.existing(&a.gt)?, &cfg)?;
    for f in &r.failures {
        ctx.log.warn("eval-failure", json!(f));
    }
    let out = ctx.path(&a.report);
    ensure_parent(&out)?;
    skelrig::json::write(&out, &r)?;
    Ok(r.summary())
}

fn viz(ctx: &Ctx, a: VizArgs) -> Result<String> {
    let skel = Skeleton::load(&ctx.existing(&a.skeleton)?)?;
    let mesh = a.mesh.as_ref().map(|m| ctx.existing(m).and_then(|p| Ok(TriMesh::load(&p)?))).transpose()?;
    let out = ctx.path(&a.out);
    ensure_parent(&out)?;
    fs::write(&out, export_viz(&skel, mesh.as_ref())).map_err(|e| CliError::io(&out, e))?;
    Ok(format!("wrote {}", out.display()))
}

fn pipeline(ctx: &Ctx, a: PipelineArgs) -> Result<String> {
    let cfg = PipelineConfig::load(&ctx.existing(&a.config)?)?;
    let outcome = run_pipeline(&cfg, &ctx.workdir, &ctx.log)?;
    Ok(outcome.summary())
}
