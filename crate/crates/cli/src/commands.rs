use std::path::{Path, PathBuf};

use captiongan::checks::{gradient_suite, GradSuiteConfig, GRAD_CHECK_TOLERANCE};
use captiongan::corpus::{generate_corpus, save_dataset};
use captiongan::evaluator::Evaluator;
use captiongan::generator::Generator;
use captiongan::harness::{
    decode_captions, diversity_probe, human_system, mutation_pairs, run_metric_table, similarity_probe, Decoding,
    RankingCriterion,
};
use captiongan::trainer::{pretrain_evaluator, pretrain_mle, train_adversarial, train_e_ngan, TrainReport};
use captiongan::{Error, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::TrainFlags;
use crate::emit::{emit_both, emit_report, DiversityTable, Envelope, Format, MetricTable, SimilarityTable};
use crate::manifest::{manifest_path, RunManifest};
use crate::ops;
use crate::pipeline::{self, ReproArgs};
use crate::store::{self, Dataset, SplitChoice};

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic scene corpus.
    GenCorpus(GenCorpusArgs),
    /// MLE-pretrain a generator.
    PretrainG(PretrainGArgs),
    /// Pretrain an evaluator against a fixed generator.
    PretrainE(PretrainEArgs),
    /// Alternate generator and evaluator updates.
    TrainGan(TrainGanArgs),
    /// Train an evaluator against a generator that is never updated.
    TrainEngan(TrainEnganArgs),
    /// Decode captions for a split.
    Sample(SampleArgs),
    /// Metric table over caption files.
    Metrics(MetricsArgs),
    /// Caption-to-image retrieval recall.
    Retrieve(RetrieveArgs),
    /// Distinct greedy captions per scene over noise draws.
    ProbeDiversity(ProbeDiversityArgs),
    /// Identical outputs on scene pairs that differ in one attribute.
    ProbeSimilarity(ProbeSimilarityArgs),
    /// Finite-difference check of every analytic gradient.
    GradCheck(GradCheckArgs),
    /// Full pipeline: corpus, pretraining, adversarial training, tables and probes.
    ReproAll(ReproArgs),
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::PretrainG(a) => pretrain_g(a),
        Command::PretrainE(a) => pretrain_e(a),
        Command::TrainGan(a) => train_gan(a),
        Command::TrainEngan(a) => train_engan(a),
        Command::Sample(a) => sample(a),
        Command::Metrics(a) => metrics(a),
        Command::Retrieve(a) => retrieve(a),
        Command::ProbeDiversity(a) => probe_diversity(a),
        Command::ProbeSimilarity(a) => probe_similarity(a),
        Command::GradCheck(a) => grad_check(a),
        Command::ReproAll(a) => pipeline::repro_all(a),
    }
}

/// `<dir>/<stem><suffix>` for a sibling of `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes `<stem>-train.jsonl` and `<stem>-train.csv` next to `primary`.
pub fn save_train_report(report: &TrainReport, primary: &Path, manifest: &mut RunManifest) -> Result<()> {
    let stem = sibling(primary, "-train");
    report.save(&stem)?;
    manifest.output(&stem.with_extension("jsonl"))?;
    manifest.output(&stem.with_extension("csv"))
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub scenes: usize,
    #[arg(long, default_value_t = 5)]
    pub refs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let out = store::out_path(a.out, &format!("corpus-seed{}.jsonl", a.seed))?;
    let cfg = json!({ "scenes": a.scenes, "refs": a.refs });
    let mut manifest = RunManifest::begin("gen-corpus", a.seed, cfg, &[])?;
    let records = generate_corpus(a.seed, a.scenes, a.refs)?;
    save_dataset(&out, &records)?;
    manifest.output(&out)?;
    println!("wrote {} scenes to {}", records.len(), out.display());
    manifest.finish(&manifest_path(&out))
}

#[derive(Args, Debug)]
pub struct PretrainGArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

fn pretrain_g(a: PretrainGArgs) -> Result<()> {
    let cfg = a.train.resolve()?;
    let ds = Dataset::load(&a.dataset)?;
    let out = store::out_path(a.out, &format!("g-mle-seed{}.ckpt", cfg.seed))?;
    let mut manifest = RunManifest::begin("pretrain-g", cfg.seed, json!({ "train": cfg }), &[&a.dataset])?;
    let mut g = Generator::new(&store::generator_config(&ds.vocab, &cfg), cfg.seed)?;
    let train = ds.encoded(SplitChoice::Train, cfg.t_max);
    let val = ds.encoded(SplitChoice::Val, cfg.t_max);
    let report = pretrain_mle(&mut g, &train, &val, &cfg)?;
    let sha = store::save_generator(&out, &g, &cfg, &ds.vocab, &manifest.id)?;
    manifest.checkpoint("generator", &out, sha);
    save_train_report(&report, &out, &mut manifest)?;
    if let Some(nll) = report.records.last().and_then(|r| r.val_nll) {
        println!("validation nll {nll}");
    }
    manifest.finish(&manifest_path(&out))
}

#[derive(Args, Debug)]
pub struct PretrainEArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub generator: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

fn pretrain_e(a: PretrainEArgs) -> Result<()> {
    let cfg = a.train.resolve()?;
    let ds = Dataset::load(&a.dataset)?;
    let (g, _) = store::load_generator(&a.generator, Some(&ds.vocab))?;
    let out = store::out_path(a.out, &format!("e-pre-seed{}.ckpt", cfg.seed))?;
    let inputs: [&Path; 2] = [&a.dataset, &a.generator];
    let mut manifest = RunManifest::begin("pretrain-e", cfg.seed, json!({ "train": cfg }), &inputs)?;
    let mut e = Evaluator::new(&store::evaluator_config(&ds.vocab), cfg.seed)?;
    let report = pretrain_evaluator(&mut e, &g, &ds.encoded(SplitChoice::Train, cfg.t_max), &cfg)?;
    let sha = store::save_evaluator(&out, &e, &cfg, &ds.vocab, &manifest.id)?;
    manifest.checkpoint("evaluator", &out, sha);
    save_train_report(&report, &out, &mut manifest)?;
    manifest.finish(&manifest_path(&out))
}

#[derive(Args, Debug)]
pub struct TrainGanArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Pretrained generator.
    #[arg(long)]
    pub generator: PathBuf,
    /// Pretrained evaluator.
    #[arg(long)]
    pub evaluator: PathBuf,
    /// Generator output checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluator output checkpoint; defaults to `<out stem>-evaluator.ckpt`.
    #[arg(long)]
    pub evaluator_out: Option<PathBuf>,
    /// Also checkpoint both networks every k iterations.
    #[arg(long, value_name = "K")]
    pub checkpoint_every: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
}

fn train_gan(a: TrainGanArgs) -> Result<()> {
    let cfg = a.train.resolve()?;
    let ds = Dataset::load(&a.dataset)?;
    let (mut g, _) = store::load_generator(&a.generator, Some(&ds.vocab))?;
    let (mut e, _) = store::load_evaluator(&a.evaluator, Some(&ds.vocab))?;
    let out = store::out_path(a.out, &format!("g-gan-seed{}.ckpt", cfg.seed))?;
    let e_out = a.evaluator_out.unwrap_or_else(|| sibling(&out, "-evaluator.ckpt"));
    let inputs: [&Path; 3] = [&a.dataset, &a.generator, &a.evaluator];
    let mut manifest = RunManifest::begin("train-gan", cfg.seed, json!({ "train": cfg }), &inputs)?;
    let train = ds.encoded(SplitChoice::Train, cfg.t_max);
    let every = a.checkpoint_every.unwrap_or(0);
    let mut saved = Vec::new();
    let mut hook = |iter: usize, g: &Generator, e: &Evaluator| -> Result<()> {
        if every > 0 && iter.is_multiple_of(every) {
            let gp = sibling(&out, &format!("-iter{iter}.ckpt"));
            let ep = sibling(&e_out, &format!("-iter{iter}.ckpt"));
            saved.push((format!("generator-iter{iter}"), gp.clone(), store::save_generator(&gp, g, &cfg, &ds.vocab, &manifest.id)?));
            saved.push((format!("evaluator-iter{iter}"), ep.clone(), store::save_evaluator(&ep, e, &cfg, &ds.vocab, &manifest.id)?));
        }
        Ok(())
    };
    let report = train_adversarial(&mut g, &mut e, &train, &cfg, &mut hook)?;
    for (name, path, sha) in saved {
        manifest.checkpoint(&name, &path, sha);
    }
    let sha = store::save_generator(&out, &g, &cfg, &ds.vocab, &manifest.id)?;
    manifest.checkpoint("generator", &out, sha);
    let sha = store::save_evaluator(&e_out, &e, &cfg, &ds.vocab, &manifest.id)?;
    manifest.checkpoint("evaluator", &e_out, sha);
    save_train_report(&report, &out, &mut manifest)?;
    manifest.finish(&manifest_path(&out))
}

#[derive(Args, Debug)]
pub struct TrainEnganArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Generator held fixed throughout.
    #[arg(long)]
    pub generator: PathBuf,
    /// Starting evaluator.
    #[arg(long)]
    pub evaluator: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

fn train_engan(a: TrainEnganArgs) -> Result<()> {
    let cfg = a.train.resolve()?;
    let ds = Dataset::load(&a.dataset)?;
    let (g, _) = store::load_generator(&a.generator, Some(&ds.vocab))?;
    let (mut e, _) = store::load_evaluator(&a.evaluator, Some(&ds.vocab))?;
    let out = store::out_path(a.out, &format!("e-ngan-seed{}.ckpt", cfg.seed))?;
    let inputs: [&Path; 3] = [&a.dataset, &a.generator, &a.evaluator];
    let mut manifest = RunManifest::begin("train-engan", cfg.seed, json!({ "train": cfg }), &inputs)?;
    let train = ds.encoded(SplitChoice::Train, cfg.t_max);
    let report = train_e_ngan(&mut e, &g, &train, &cfg, &mut |_, _, _| Ok(()))?;
    let sha = store::save_evaluator(&out, &e, &cfg, &ds.vocab, &manifest.id)?;
    manifest.checkpoint("evaluator", &out, sha);
    save_train_report(&report, &out, &mut manifest)?;
    manifest.finish(&manifest_path(&out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecodingChoice {
    Greedy,
    Sample,
    Beam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScorerChoice {
    /// Rerank finished beams by evaluator score.
    Egan,
    /// Rerank finished beams by log-likelihood.
    Loglik,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub generator: PathBuf,
    /// Evaluator for `--scorer egan`.
    #[arg(long)]
    pub evaluator: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Only the first N records of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_enum, default_value_t = DecodingChoice::Greedy)]
    pub decoding: DecodingChoice,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, value_enum, default_value_t = ScorerChoice::Loglik)]
    pub scorer: ScorerChoice,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Standard deviation of z.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 16)]
    pub t_max: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn sample(a: SampleArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let (g, _) = store::load_generator(&a.generator, Some(&ds.vocab))?;
    let out = store::out_path(a.out.clone(), &format!("captions-seed{}.jsonl", a.seed))?;
    let evaluator = match (a.decoding, a.scorer) {
        (DecodingChoice::Beam, ScorerChoice::Egan) => {
            let path = a
                .evaluator
                .as_ref()
                .ok_or_else(|| Error::Config("--scorer egan needs --evaluator".into()))?;
            Some(store::load_evaluator(path, Some(&ds.vocab))?.0)
        }
        _ => None,
    };
    let decoding = match a.decoding {
        DecodingChoice::Greedy => Decoding::Greedy,
        DecodingChoice::Sample => Decoding::Sample {
            temperature: a.temperature,
        },
        DecodingChoice::Beam => Decoding::Beam {
            width: a.beam,
            scorer: evaluator.as_ref(),
        },
    };
    let mut records = ds.encoded(a.split, a.t_max);
    records.truncate(a.limit.unwrap_or(usize::MAX));
    let mut inputs: Vec<&Path> = vec![&a.dataset, &a.generator];
    inputs.extend(a.evaluator.as_deref());
    let cfg = json!({
        "split": format!("{:?}", a.split).to_lowercase(),
        "limit": a.limit,
        "decoding": format!("{:?}", a.decoding).to_lowercase(),
        "beam": a.beam,
        "scorer": format!("{:?}", a.scorer).to_lowercase(),
        "temperature": a.temperature,
        "sigma": a.sigma,
        "t_max": a.t_max,
    });
    let mut manifest = RunManifest::begin("sample", a.seed, cfg, &inputs)?;
    let captions = decode_captions(&g, &records, decoding, a.sigma, a.t_max, a.seed)?;
    std::fs::write(&out, store::captions_jsonl(&records, &captions, &ds.vocab)?)?;
    manifest.output(&out)?;
    println!("wrote {} captions to {}", captions.len(), out.display());
    manifest.finish(&manifest_path(&out))
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Caption file as `NAME=PATH` or `PATH` (named by its file stem). A
    /// system named `human` must copy one reference per image; that
    /// reference is then held out.
    #[arg(long, required = true)]
    pub candidates: Vec<String>,
    /// Add a human system sampled from the references.
    #[arg(long)]
    pub human: bool,
    #[arg(long)]
    pub e_gan: Option<PathBuf>,
    #[arg(long)]
    pub e_ngan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    #[arg(long, default_value_t = 16)]
    pub t_max: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// JSON report; the CSV goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn named(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (name, path)
        }
    }
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let out = store::out_path(a.out, &format!("metrics-seed{}.json", a.seed))?;
    let records = ds.encoded(a.split, a.t_max);
    let files: Vec<(String, PathBuf)> = a.candidates.iter().map(|s| named(s)).collect();
    let mut inputs: Vec<&Path> = vec![&a.dataset];
    inputs.extend(files.iter().map(|(_, p)| p.as_path()));
    inputs.extend(a.e_gan.as_deref());
    inputs.extend(a.e_ngan.as_deref());
    let systems: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    let cfg = json!({ "systems": systems, "human": a.human, "split": format!("{:?}", a.split).to_lowercase(), "t_max": a.t_max });
    let mut manifest = RunManifest::begin("metrics", a.seed, cfg, &inputs)?;
    let mut table = Vec::new();
    if a.human {
        table.push(human_system(&records, a.seed)?);
    }
    for (name, path) in &files {
        let lines = store::read_captions(path)?;
        let captions = store::align_captions(&records, &lines, &ds.vocab, a.t_max, &path.display().to_string())?;
        table.push(if name == "human" {
            ops::human_from_captions(&records, captions)?
        } else {
            ops::system(name, captions)
        });
    }
    let e_gan = a.e_gan.as_deref().map(|p| store::load_evaluator(p, Some(&ds.vocab))).transpose()?;
    let e_ngan = a.e_ngan.as_deref().map(|p| store::load_evaluator(p, Some(&ds.vocab))).transpose()?;
    let reports = run_metric_table(&records, &table, e_gan.as_ref().map(|e| &e.0), e_ngan.as_ref().map(|e| &e.0))?;
    let env = Envelope {
        manifest: manifest.id.clone(),
        kind: "metrics".into(),
        report: MetricTable(reports),
    };
    emit_report(&env, Format::Json, &out)?;
    let csv = out.with_extension("csv");
    emit_report(&env, Format::Csv, &csv)?;
    manifest.output(&out)?;
    manifest.output(&csv)?;
    for r in &env.report.0 {
        println!("{} bleu3 {} bleu4 {} rouge_l {} cider {}", r.system, r.bleu3, r.bleu4, r.rouge_l, r.cider);
    }
    manifest.finish(&manifest_path(&out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CriterionChoice {
    /// Evaluator score.
    Similarity,
    /// Generator log-likelihood with `z = 0`.
    LogLikelihood,
}

impl From<CriterionChoice> for RankingCriterion {
    fn from(c: CriterionChoice) -> Self {
        match c {
            CriterionChoice::Similarity => RankingCriterion::Similarity,
            CriterionChoice::LogLikelihood => RankingCriterion::LogLikelihood,
        }
    }
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// One caption per image.
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long, value_enum, default_value_t = CriterionChoice::Similarity)]
    pub criterion: CriterionChoice,
    /// Scorer for `similarity`.
    #[arg(long)]
    pub evaluator: Option<PathBuf>,
    /// Scorer for `log-likelihood`.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Number of test images ranked (M).
    #[arg(long, default_value_t = 100)]
    pub images: usize,
    #[arg(long, default_value_t = 16)]
    pub t_max: usize,
    /// JSON report; the CSV goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn retrieve(a: RetrieveArgs) -> Result<()> {
    let criterion = RankingCriterion::from(a.criterion);
    let ds = Dataset::load(&a.dataset)?;
    let records = ds.encoded(SplitChoice::Test, a.t_max);
    let lines = store::read_captions(&a.captions)?;
    let n = a.images.min(records.len());
    let captions = store::align_captions(&records[..n], &lines, &ds.vocab, a.t_max, &a.captions.display().to_string())?;
    let model = match criterion {
        RankingCriterion::Similarity => a.evaluator.clone(),
        RankingCriterion::LogLikelihood => a.generator.clone(),
    }
    .ok_or_else(|| Error::Config("similarity needs --evaluator, log-likelihood needs --generator".into()))?;
    let name = format!(
        "retrieval-{}-{}",
        serde_json::to_value(criterion)?.as_str().unwrap_or("criterion"),
        store::file_digest(&model)?
    );
    let out = store::out_path(a.out, &format!("{name}.json"))?;
    let inputs: [&Path; 3] = [&a.dataset, &a.captions, &model];
    let cfg = json!({ "criterion": criterion, "images": a.images, "t_max": a.t_max });
    let mut manifest = RunManifest::begin("retrieve", 0, cfg, &inputs)?;
    let result = match criterion {
        RankingCriterion::Similarity => {
            let (e, _) = store::load_evaluator(&model, Some(&ds.vocab))?;
            ops::similarity_retrieval(&e, &records, &captions, a.images)?
        }
        RankingCriterion::LogLikelihood => {
            let (g, _) = store::load_generator(&model, Some(&ds.vocab))?;
            ops::loglik_retrieval(&g, &records, &captions, a.images)?
        }
    };
    for (k, r) in result.ks.iter().zip(&result.recall) {
        println!("recall@{k} {r}");
    }
    let env = Envelope {
        manifest: manifest.id.clone(),
        kind: "retrieval".into(),
        report: result,
    };
    emit_report(&env, Format::Json, &out)?;
    let csv = out.with_extension("csv");
    emit_report(&env, Format::Csv, &csv)?;
    manifest.output(&out)?;
    manifest.output(&csv)?;
    manifest.finish(&manifest_path(&out))
}

#[derive(Args, Debug)]
pub struct ProbeDiversityArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub generator: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub z_draws: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
    pub sigmas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub t_max: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn probe_diversity(a: ProbeDiversityArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let (g, _) = store::load_generator(&a.generator, Some(&ds.vocab))?;
    let mut records = ds.encoded(a.split, a.t_max);
    records.truncate(a.limit.unwrap_or(usize::MAX));
    let dir = a.out_dir.unwrap_or_else(store::default_out_dir);
    std::fs::create_dir_all(&dir)?;
    let stem = format!("diversity-{}-seed{}", store::file_digest(&a.generator)?, a.seed);
    let inputs: [&Path; 2] = [&a.dataset, &a.generator];
    let cfg = json!({ "z_draws": a.z_draws, "sigmas": a.sigmas, "limit": a.limit, "t_max": a.t_max });
    let mut manifest = RunManifest::begin("probe-diversity", a.seed, cfg, &inputs)?;
    let probe = diversity_probe(&g, &records, a.z_draws, &a.sigmas, a.t_max, a.seed)?;
    let table = DiversityTable::new(probe, &a.sigmas);
    for s in &table.summary {
        println!(
            "sigma {} scenes {} at least 3 distinct {} max {}",
            s.sigma, s.scenes, s.fraction_at_least_3, s.max_distinct
        );
    }
    let env = Envelope {
        manifest: manifest.id.clone(),
        kind: "diversity".into(),
        report: table,
    };
    for p in emit_both(&env, &dir, &stem)? {
        manifest.output(&p)?;
    }
    manifest.finish(&dir.join(format!("{stem}.manifest.json")))
}

#[derive(Args, Debug)]
pub struct ProbeSimilarityArgs {
    /// Generator as `NAME=PATH`; repeatable.
    #[arg(long = "system", required = true)]
    pub systems: Vec<String>,
    /// Standard deviation of z per system, in `--system` order; missing
    /// entries are 0.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 60)]
    pub pairs: usize,
    #[arg(long, default_value_t = 16)]
    pub t_max: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Dataset whose vocabulary the checkpoints must match.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn probe_similarity(a: ProbeSimilarityArgs) -> Result<()> {
    let vocab = a.dataset.as_deref().map(Dataset::load).transpose()?.map(|d| d.vocab);
    let systems: Vec<(String, PathBuf)> = a.systems.iter().map(|s| named(s)).collect();
    let gens = systems
        .iter()
        .map(|(_, p)| Ok(store::load_generator(p, vocab.as_ref())?.0))
        .collect::<Result<Vec<_>>>()?;
    let dim = gens.first().map(|g| g.config().feature_dim).unwrap_or_default();
    let dir = a.out_dir.unwrap_or_else(store::default_out_dir);
    std::fs::create_dir_all(&dir)?;
    let digests = systems
        .iter()
        .map(|(_, p)| store::file_digest(p))
        .collect::<Result<Vec<_>>>()?;
    let stem = format!("similarity-{}-seed{}", digests.join("-"), a.seed);
    let inputs: Vec<&Path> = systems.iter().map(|(_, p)| p.as_path()).collect();
    let names: Vec<&str> = systems.iter().map(|(n, _)| n.as_str()).collect();
    let cfg = json!({ "systems": names, "sigmas": a.sigmas, "pairs": a.pairs, "t_max": a.t_max });
    let mut manifest = RunManifest::begin("probe-similarity", a.seed, cfg, &inputs)?;
    let pairs = mutation_pairs(a.pairs, dim, a.seed)?;
    let reports = systems
        .iter()
        .zip(&gens)
        .enumerate()
        .map(|(i, ((name, _), g))| {
            let sigma = a.sigmas.get(i).copied().unwrap_or(0.0);
            similarity_probe(name, g, &pairs, sigma, a.t_max, a.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        println!("{} identical {}/{}", r.system, r.identical, r.pairs);
    }
    let env = Envelope {
        manifest: manifest.id.clone(),
        kind: "similarity".into(),
        report: SimilarityTable(reports),
    };
    for p in emit_both(&env, &dir, &stem)? {
        manifest.output(&p)?;
    }
    manifest.finish(&dir.join(format!("{stem}.manifest.json")))
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per objective.
    #[arg(long)]
    pub instances: Option<usize>,
    /// LSTM hidden size of the check networks.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// JSON report; the CSV goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn grad_check(a: GradCheckArgs) -> Result<()> {
    let defaults = GradSuiteConfig::default();
    let config = GradSuiteConfig {
        instances: a.instances.unwrap_or(defaults.instances),
        hidden_dim: a.hidden.unwrap_or(defaults.hidden_dim),
        ..defaults
    };
    let report = gradient_suite(a.seed, &config)?;
    println!("max relative error {:e}", report.max_relative_error);
    if let Some(out) = a.out {
        let out = store::out_path(Some(out), "")?;
        let mut manifest = RunManifest::begin("grad-check", a.seed, serde_json::to_value(config)?, &[])?;
        let env = Envelope {
            manifest: manifest.id.clone(),
            kind: "grad-check".into(),
            report: report.clone(),
        };
        emit_report(&env, Format::Json, &out)?;
        let csv = out.with_extension("csv");
        emit_report(&env, Format::Csv, &csv)?;
        manifest.output(&out)?;
        manifest.output(&csv)?;
        manifest.finish(&manifest_path(&out))?;
    }
    if !report.passed() {
        return Err(Error::Invariant(format!(
            "gradient check: max relative error {:e} exceeds {:e}",
            report.max_relative_error, GRAD_CHECK_TOLERANCE
        )));
    }
    Ok(())
}
