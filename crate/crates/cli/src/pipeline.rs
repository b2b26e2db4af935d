//! `repro-all`: every stage of the experiment in one deterministic run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use captiongan::corpus::{generate_corpus, save_dataset, EncodedRecord, Sentence};
use captiongan::evaluator::Evaluator;
use captiongan::generator::Generator;
use captiongan::harness::{
    decode_captions, diversity_probe, human_system, mutation_pairs, run_metric_table, similarity_probe, Decoding,
};
use captiongan::trainer::{pretrain_evaluator, pretrain_mle, train_adversarial, train_e_ngan, TrainConfig};
use captiongan::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::commands::save_train_report;
use crate::config::{merge, read_toml, Preset};
use crate::emit::{emit_both, DiversityTable, Envelope, MetricTable, SimilarityTable, Summary};
use crate::manifest::RunManifest;
use crate::ops;
use crate::store::{self, Dataset, SplitChoice};

#[derive(Args, Debug)]
pub struct ReproArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// TOML file with pipeline fields and a `[train]` table.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub adversarial_iters: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproConfig {
    pub scenes: usize,
    pub refs: usize,
    pub beam_width: usize,
    /// z spread for G-GAN decoding and the similarity probe.
    pub gan_sigma: f64,
    pub retrieval_images: usize,
    pub z_draws: usize,
    pub diversity_sigmas: Vec<f64>,
    pub similarity_pairs: usize,
    pub train: TrainConfig,
}

impl ReproConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            scenes: 2000,
            refs: 5,
            beam_width: 5,
            gan_sigma: 1.0,
            retrieval_images: 100,
            z_draws: 10,
            diversity_sigmas: vec![0.0, 1.0],
            similarity_pairs: 60,
            train: preset.train_config(),
        };
        match preset {
            Preset::Smoke => Self {
                scenes: 200,
                beam_width: 2,
                retrieval_images: 10,
                z_draws: 3,
                similarity_pairs: 5,
                ..base
            },
            _ => base,
        }
    }
}

impl Default for ReproConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

fn resolve(a: &ReproArgs) -> Result<ReproConfig> {
    let mut value = serde_json::to_value(ReproConfig::preset(a.preset))?;
    if let Some(path) = &a.config {
        merge(&mut value, read_toml(path)?);
    }
    let mut cfg: ReproConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    cfg.train.seed = a.seed;
    if let Some(n) = a.scenes {
        cfg.scenes = n;
    }
    if let Some(n) = a.adversarial_iters {
        cfg.train.adversarial_iters = n;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

struct Run<'a> {
    dir: &'a Path,
    manifest: RunManifest,
    cfg: &'a ReproConfig,
    ds: &'a Dataset,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn save_g(&mut self, name: &str, g: &Generator) -> Result<()> {
        let path = self.path(&format!("{name}.ckpt"));
        let sha = store::save_generator(&path, g, &self.cfg.train, &self.ds.vocab, &self.manifest.id)?;
        self.manifest.checkpoint(name, &path, sha);
        Ok(())
    }

    fn save_e(&mut self, name: &str, e: &Evaluator) -> Result<()> {
        let path = self.path(&format!("{name}.ckpt"));
        let sha = store::save_evaluator(&path, e, &self.cfg.train, &self.ds.vocab, &self.manifest.id)?;
        self.manifest.checkpoint(name, &path, sha);
        Ok(())
    }

    fn train_report(&mut self, name: &str, report: &captiongan::trainer::TrainReport) -> Result<()> {
        let primary = self.path(&format!("{name}.ckpt"));
        save_train_report(report, &primary, &mut self.manifest)
    }

    fn captions(&mut self, name: &str, records: &[EncodedRecord], captions: &[Sentence]) -> Result<()> {
        let path = self.path(&format!("captions-{name}.jsonl"));
        std::fs::write(&path, store::captions_jsonl(records, captions, &self.ds.vocab)?)?;
        self.manifest.output(&path)
    }

    fn report<T: Serialize + crate::emit::Tabular>(&mut self, kind: &str, stem: &str, report: T) -> Result<()> {
        let env = Envelope {
            manifest: self.manifest.id.clone(),
            kind: kind.to_string(),
            report,
        };
        for p in emit_both(&env, self.dir, stem)? {
            self.manifest.output(&p)?;
        }
        Ok(())
    }
}

fn mean_score(e: &Evaluator, records: &[EncodedRecord], captions: &[Sentence]) -> Result<f64> {
    let mut total = 0.0;
    for (r, c) in records.iter().zip(captions) {
        total += e.score(&r.feature, c)?.score;
    }
    Ok(total / records.len().max(1) as f64)
}

pub fn repro_all(a: ReproArgs) -> Result<()> {
    let cfg = resolve(&a)?;
    let dir = a.out_dir.clone().unwrap_or_else(store::default_out_dir);
    std::fs::create_dir_all(&dir)?;
    let train_cfg = &cfg.train;
    let seed = train_cfg.seed;
    let t_max = train_cfg.t_max;
    let log = |msg: &str| eprintln!("[repro-all] {msg}");

    let manifest = RunManifest::begin("repro-all", seed, serde_json::to_value(&cfg)?, &[])?;
    let records = generate_corpus(seed, cfg.scenes, cfg.refs)?;
    let corpus_path = dir.join("corpus.jsonl");
    save_dataset(&corpus_path, &records)?;
    let ds = Dataset::from_records(records)?;
    let mut run = Run {
        dir: &dir,
        manifest,
        cfg: &cfg,
        ds: &ds,
    };
    run.manifest.output(&corpus_path)?;
    let vocab_path = run.path("vocab.txt");
    ds.vocab.save(&vocab_path)?;
    run.manifest.output(&vocab_path)?;
    let train = ds.encoded(SplitChoice::Train, t_max);
    let val = ds.encoded(SplitChoice::Val, t_max);
    let test = ds.encoded(SplitChoice::Test, t_max);
    log(&format!(
        "corpus: {} train, {} val, {} test, vocabulary {}",
        train.len(),
        val.len(),
        test.len(),
        ds.vocab.len()
    ));
    let mut summary = Summary::default();

    log("pretraining the generator");
    let clock = Instant::now();
    let mut g = Generator::new(&store::generator_config(&ds.vocab, train_cfg), seed)?;
    let report = pretrain_mle(&mut g, &train, &val, train_cfg)?;
    run.save_g("g-mle", &g)?;
    run.train_report("g-mle", &report)?;
    let uniform = (ds.vocab.ext_size() as f64).ln();
    let val_nll = report.records.last().and_then(|r| r.val_nll).unwrap_or(f64::INFINITY);
    summary.push("mle_val_nll", val_nll);
    summary.push("uniform_nll", uniform);
    log(&format!("validation nll {val_nll:.4} against uniform {uniform:.4}"));
    let g_mle = g.clone();
    run.manifest.stage("pretrain-g", clock);

    log("pretraining the evaluator");
    let clock = Instant::now();
    let mut e_pre = Evaluator::new(&store::evaluator_config(&ds.vocab), seed)?;
    let report = pretrain_evaluator(&mut e_pre, &g_mle, &train, train_cfg)?;
    run.save_e("e-pre", &e_pre)?;
    run.train_report("e-pre", &report)?;
    run.manifest.stage("pretrain-e", clock);

    log("training E-NGAN");
    let clock = Instant::now();
    let mut e_ngan = e_pre.clone();
    let report = train_e_ngan(&mut e_ngan, &g_mle, &train, train_cfg, &mut |_, _, _| Ok(()))?;
    run.save_e("e-ngan", &e_ngan)?;
    run.train_report("e-ngan", &report)?;
    run.manifest.stage("train-engan", clock);

    log(&format!("adversarial training, {} iterations", train_cfg.adversarial_iters));
    let clock = Instant::now();
    let mut e_gan = e_pre;
    let mut progress = |iter: usize, _: &Generator, _: &Evaluator| {
        if iter.is_multiple_of(20) {
            log(&format!("iteration {iter}"));
        }
        Ok(())
    };
    let report = train_adversarial(&mut g, &mut e_gan, &train, train_cfg, &mut progress)?;
    let g_gan = g;
    run.save_g("g-gan", &g_gan)?;
    run.save_e("e-gan", &e_gan)?;
    run.train_report("gan", &report)?;
    run.manifest.stage("train-gan", clock);

    log("decoding the test split");
    let clock = Instant::now();
    let sample = Decoding::Sample {
        temperature: train_cfg.temperature,
    };
    let beam = Decoding::Beam {
        width: cfg.beam_width,
        scorer: Some(&e_gan),
    };
    let human = human_system(&test, seed)?;
    let systems = [
        ("g-mle", decode_captions(&g_mle, &test, Decoding::Greedy, 0.0, t_max, seed)?),
        ("g-gan", decode_captions(&g_gan, &test, beam, cfg.gan_sigma, t_max, seed)?),
        ("g-gan-sample", decode_captions(&g_gan, &test, sample, cfg.gan_sigma, t_max, seed)?),
        ("g-mle-sample", decode_captions(&g_mle, &test, sample, cfg.gan_sigma, t_max, seed)?),
    ];
    run.captions("human", &test, &human.captions)?;
    let mut table = vec![human];
    for (name, captions) in systems {
        run.captions(name, &test, &captions)?;
        table.push(ops::system(name, captions));
    }
    let metrics = run_metric_table(&test, &table, Some(&e_gan), Some(&e_ngan))?;
    for m in &metrics {
        summary.push(format!("bleu3_{}", m.system), m.bleu3);
        summary.push(format!("e_gan_{}", m.system), m.e_gan.unwrap_or(f64::NAN));
        summary.push(format!("e_ngan_{}", m.system), m.e_ngan.unwrap_or(f64::NAN));
    }
    run.report("metrics", "metrics", MetricTable(metrics))?;

    run.manifest.stage("metrics", clock);

    log("retrieval");
    let clock = Instant::now();
    let gan_captions = &table[2].captions;
    let images = cfg.retrieval_images;
    let sim = ops::similarity_retrieval(&e_gan, &test, gan_captions, images)?;
    let ll = ops::loglik_retrieval(&g_gan, &test, gan_captions, images)?;
    for (k, r) in sim.ks.iter().zip(&sim.recall) {
        summary.push(format!("recall{k}_similarity"), *r);
    }
    for (k, r) in ll.ks.iter().zip(&ll.recall) {
        summary.push(format!("recall{k}_loglik"), *r);
    }
    run.report("retrieval", "retrieval-similarity", sim)?;
    run.report("retrieval", "retrieval-loglik", ll)?;

    run.manifest.stage("retrieval", clock);

    log("diversity and similarity probes");
    let clock = Instant::now();
    let sigmas = &cfg.diversity_sigmas;
    let gan_div = DiversityTable::new(diversity_probe(&g_gan, &test, cfg.z_draws, sigmas, t_max, seed)?, sigmas);
    let mle_div = DiversityTable::new(diversity_probe(&g_mle, &test, cfg.z_draws, &[0.0], t_max, seed)?, &[0.0]);
    for s in &gan_div.summary {
        summary.push(format!("diversity_g_gan_sigma{}_at_least_3", s.sigma), s.fraction_at_least_3);
        summary.push(format!("diversity_g_gan_sigma{}_max", s.sigma), s.max_distinct as f64);
    }
    summary.push("diversity_g_mle_max", mle_div.summary[0].max_distinct as f64);
    run.report("diversity", "diversity-g-gan", gan_div)?;
    run.report("diversity", "diversity-g-mle", mle_div)?;
    let pairs = mutation_pairs(cfg.similarity_pairs, g_gan.config().feature_dim, seed)?;
    let similar = vec![
        similarity_probe("g-mle", &g_mle, &pairs, 0.0, t_max, seed)?,
        similarity_probe("g-gan", &g_gan, &pairs, cfg.gan_sigma, t_max, seed)?,
    ];
    for r in &similar {
        summary.push(format!("similarity_{}", r.system), r.fraction);
    }
    run.report("similarity", "similarity", SimilarityTable(similar))?;
    run.manifest.stage("probes", clock);

    let reward_mle = mean_score(&e_ngan, &test, &table[4].captions)?;
    let reward_gan = mean_score(&e_ngan, &test, &table[3].captions)?;
    summary.push("e_ngan_reward_initial", reward_mle);
    summary.push("e_ngan_reward_final", reward_gan);
    for (name, value) in &summary.0 {
        println!("{name} {value}");
    }
    run.report("summary", "summary", summary)?;
    let Run { manifest, .. } = run;
    manifest.finish(&dir.join("repro-all.manifest.json"))
}
