//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of the outcome unless `ACCEPTANCE_STRICT=1` is set.
//! The two full pipeline runs take roughly half an hour on one core.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use captiongan::checks::{gradient_suite, GradSuiteConfig};
use captiongan::corpus::Sentence;
use captiongan::generator::{Generator, NoiseVector};
use captiongan::harness::{retrieval_recall, RankingCriterion, DEFAULT_KS};
use captiongan::math::grad_check;
use captiongan::math::rng::seeded;
use captiongan::metrics::{cider, corpus_bleu, modified_precision, rouge_l, sentence_bleu};
use captiongan::trainer::{exact_future_reward, expected_future_reward, policy_gradient, RolloutMode, TrainConfig};
use serde_json::Value;
use support::metric_oracle::*;
use support::policy_oracle::*;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(started: Instant, budget: Duration) -> std::result::Result<(), String> {
    let took = started.elapsed();
    ensure(took < budget, format!("took {:.1}s, budget {}s", took.as_secs_f64(), budget.as_secs()))
}

fn gradients() -> Check {
    let start = Instant::now();
    let cfg = GradSuiteConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let r = gradient_suite(seed, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_relative_error);
        ensure(r.passed(), format!("seed {seed}: max relative error {:e}", r.max_relative_error))?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("5 seeds, hidden {}, max relative error {worst:.2e}", cfg.hidden_dim))
}

fn policy_gradient_oracle() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (vocab, t_max) in [(2usize, 1usize), (3, 2), (2, 2), (3, 1)] {
        for seed in 0..3 {
            let g = tiny_generator(vocab, 2, 300 + seed, 1.0);
            let e = tiny_evaluator(vocab, 400 + seed, 2.0);
            let f = [0.7, -0.4, 0.2];
            let z = NoiseVector(vec![-0.3, 0.9]);
            let with_grads = estimator_expectation(&g, &e, &f, &z, t_max);
            let cfg = g.config().clone();
            let report = grad_check(&with_grads.params, 1e-5, |p| {
                let probe = Generator::from_params(&cfg, p.clone()).unwrap();
                enumerate(&probe, &f, &z, t_max)
                    .iter()
                    .map(|(s, q)| q * e.score(&f, s).unwrap().score)
                    .sum()
            })
            .map_err(|e| e.to_string())?;
            worst = worst.max(report.max_relative_error);
            ensure(
                report.max_relative_error < 1e-3,
                format!("vocab {vocab} t_max {t_max}: {:e}", report.max_relative_error),
            )?;
        }
    }
    let mut largest = 0.0f64;
    for seed in 0..5 {
        let g = tiny_generator(3, 2, seed, 1.0);
        let mut e = tiny_evaluator(3, seed + 50, 1.0);
        e.tensor_mut("sentence.weight").unwrap().fill(0.0);
        let feats: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64, 0.3, -0.2]).collect();
        let refs: Vec<&[f64]> = feats.iter().map(|v| v.as_slice()).collect();
        let cfg = TrainConfig {
            t_max: 2,
            noise_dim: 2,
            ..TrainConfig::default()
        };
        let frozen = g.snapshot();
        for mode in [RolloutMode::MonteCarlo(4), RolloutMode::Exhaustive] {
            let (grads, _) = policy_gradient(&g, &frozen, &e, &refs, &cfg, mode, &[seed]).map_err(|e| e.to_string())?;
            largest = largest.max(grads.max_abs());
        }
    }
    ensure(largest < 1e-12, format!("constant reward gradient {largest:e}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("max relative error {worst:.2e}, constant-reward gradient {largest:.1e}"))
}

fn rollouts() -> Check {
    let start = Instant::now();
    let mut z_scores = Vec::new();
    for (vocab, t_max, prefix) in [(3usize, 2usize, vec![]), (3, 2, vec![2]), (3, 3, vec![1])] {
        let g = tiny_generator(vocab, 2, 10 + t_max as u64, 1.5);
        let e = tiny_evaluator(vocab, 20, 2.0);
        let f = [0.4, -0.3, 0.8];
        let z = NoiseVector(vec![0.5, 0.2]);
        let oracle = enumerated_value(&g, &e, &f, &z, &prefix, t_max);
        let exact = exact_future_reward(&f, &z, &prefix, &g, &e, t_max).map_err(|e| e.to_string())?;
        ensure((exact - oracle).abs() < 1e-12, format!("exhaustive value {exact} vs {oracle}"))?;
        let n = 100_000;
        let est = expected_future_reward(&f, &z, &prefix, &g, &e, n, t_max, &mut seeded(7)).map_err(|e| e.to_string())?;
        let se = est.std_dev / (n as f64).sqrt();
        let zs = (est.value - oracle).abs() / se;
        z_scores.push(zs);
        ensure(zs < 3.0, format!("estimate {} vs {oracle}, {zs:.2} standard errors", est.value))?;
    }
    let g = tiny_generator(4, 2, 1, 1.0);
    let e = tiny_evaluator(4, 2, 1.0);
    let f = [0.2, 0.5, -0.1];
    let z = NoiseVector(vec![0.3, -0.7]);
    let ended = Sentence::from_body(vec![2, 3], false);
    let truncated = Sentence::from_body(vec![1, 2, 3], true);
    for (s, prefix) in [(&ended, ended.ids()), (&truncated, truncated.body())] {
        let v = expected_future_reward(&f, &z, prefix, &g, &e, 16, 3, &mut seeded(0)).map_err(|e| e.to_string())?;
        let r = e.score(&f, s).map_err(|e| e.to_string())?.score;
        ensure(v.value == r, format!("complete sentence value {} vs score {r}", v.value))?;
    }
    within(start, Duration::from_secs(120))?;
    let shown: Vec<String> = z_scores.iter().map(|z| format!("{z:.2}")).collect();
    Ok(format!("errors in standard errors: {}", shown.join(", ")))
}

fn metric_oracles() -> Check {
    let start = Instant::now();
    let (clipped, total) = modified_precision(&[0usize, 0, 0], &[&[0]], 1);
    ensure((clipped, total) == (1, 3), format!("\"a a a\" vs \"a\": {clipped}/{total}"))?;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let case = random_case(seed);
        let (c, r) = case.views();
        for max_n in [3, 4] {
            let got = corpus_bleu(&c, &r, max_n).map_err(|e| e.to_string())?;
            worst = worst.max((got - oracle_corpus_bleu(&case, max_n)).abs());
            for (cand, refs) in case.cands.iter().zip(&case.refs) {
                let rv: Vec<&[Tok]> = refs.iter().map(|x| x.as_slice()).collect();
                let (cl, tot): (Vec<_>, Vec<_>) = (1..=max_n).map(|n| oracle_precision(cand, refs, n)).unzip();
                let want = oracle_bleu(&cl, &tot, cand.len(), oracle_closest(cand.len(), refs));
                worst = worst.max((sentence_bleu(cand, &rv, max_n) - want).abs());
            }
        }
        for (cand, refs) in case.cands.iter().zip(&case.refs) {
            let rv: Vec<&[Tok]> = refs.iter().map(|x| x.as_slice()).collect();
            worst = worst.max((rouge_l(cand, &rv) - oracle_rouge(cand, refs)).abs());
        }
        let got = cider(&c, &r).map_err(|e| e.to_string())?;
        for (a, b) in got.per_image.iter().zip(oracle_cider(&case)) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-9, format!("largest deviation {worst:e}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("50 cases, largest deviation {worst:.1e}"))
}

struct PipelineRun {
    dir: PathBuf,
    elapsed: Duration,
    summary: BTreeMap<String, Option<f64>>,
    manifest: Value,
}

impl PipelineRun {
    fn start(dir: &Path) -> Result<Self, String> {
        let start = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_captiongan"))
            .args(["--threads", "1", "repro-all", "--seed", "7", "--out-dir"])
            .arg(dir)
            .output()
            .map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        if !out.status.success() {
            return Err(format!("repro-all failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        let summary = read_json(&dir.join("summary.json"))?["report"]
            .as_array()
            .ok_or("summary has no rows")?
            .iter()
            .map(|row| (row[0].as_str().unwrap_or_default().to_string(), row[1].as_f64()))
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            elapsed,
            summary,
            manifest: read_json(&dir.join("repro-all.manifest.json"))?,
        })
    }

    fn get(&self, key: &str) -> Result<f64, String> {
        self.summary
            .get(key)
            .copied()
            .flatten()
            .ok_or_else(|| format!("summary has no value for {key}"))
    }

    fn stage_secs(&self, name: &str) -> Result<f64, String> {
        self.manifest["stages"]
            .as_array()
            .and_then(|s| s.iter().find(|s| s["name"] == name))
            .and_then(|s| s["millis"].as_f64())
            .map(|ms| ms / 1000.0)
            .ok_or_else(|| format!("manifest has no {name} stage"))
    }

    fn report(&self, stem: &str) -> Result<Value, String> {
        Ok(read_json(&self.dir.join(format!("{stem}.json")))?["report"].clone())
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn mle(a: &PipelineRun, b: &PipelineRun) -> Check {
    let nll = a.get("mle_val_nll")?;
    let uniform = a.get("uniform_nll")?;
    let epochs = std::fs::read_to_string(a.dir.join("g-mle-train.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .filter_map(|l| serde_json::from_str::<Value>(l).ok()?["iteration"].as_u64())
        .max()
        .unwrap_or(0);
    let secs = a.stage_secs("pretrain-g")?;
    ensure(epochs == 20, format!("{epochs} epochs"))?;
    ensure(nll < 0.5 * uniform, format!("validation nll {nll:.4} against uniform {uniform:.4}"))?;
    let same = ["g-mle-train.jsonl", "g-mle.ckpt"]
        .iter()
        .all(|f| std::fs::read(a.dir.join(f)).ok() == std::fs::read(b.dir.join(f)).ok());
    ensure(same, "pretraining trajectory differs between runs")?;
    ensure(secs < 600.0, format!("pretraining took {secs:.0}s"))?;
    Ok(format!("nll {nll:.4} ({:.1}% of uniform {uniform:.4}), {secs:.0}s", 100.0 * nll / uniform))
}

fn ordering(a: &PipelineRun) -> Check {
    let human = a.get("e_gan_human")?;
    let gan = a.get("e_gan_g-gan")?;
    let mle = a.get("e_gan_g-mle")?;
    let bleu_mle = a.get("bleu3_g-mle")?;
    let bleu_gan = a.get("bleu3_g-gan")?;
    let detail = format!(
        "E-GAN human {human:.3} g-gan {gan:.3} g-mle {mle:.3}; BLEU-3 g-mle {bleu_mle:.3} g-gan {bleu_gan:.3}; {:.0}s",
        a.elapsed.as_secs_f64()
    );
    ensure(human >= gan && gan > mle, format!("score ordering: {detail}"))?;
    ensure(bleu_mle >= bleu_gan, format!("BLEU ordering: {detail}"))?;
    ensure(a.elapsed <= Duration::from_secs(30 * 60), format!("runtime: {detail}"))?;
    Ok(detail)
}

fn diversity(a: &PipelineRun) -> Check {
    let frac = a.get("diversity_g_gan_sigma1_at_least_3")?;
    let frozen = a.get("diversity_g_gan_sigma0_max")?;
    let mle = a.get("diversity_g_mle_max")?;
    let detail = format!("sigma 1: {:.1}% of scenes with >= 3; sigma 0 max {frozen}; G-MLE max {mle}", 100.0 * frac);
    ensure(frozen == 1.0 && mle == 1.0, detail.clone())?;
    ensure(frac >= 0.6, detail.clone())?;
    Ok(detail)
}

fn retrieval(a: &PipelineRun) -> Check {
    let report = a.report("retrieval-similarity")?;
    let images = report["images"].as_u64().unwrap_or(0) as usize;
    let recall: Vec<f64> = report["recall"]
        .as_array()
        .map(|r| r.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    let shown: Vec<String> = DEFAULT_KS.iter().zip(&recall).map(|(k, r)| format!("R@{k} {r:.2}")).collect();
    let detail = format!("M = {images}: {}", shown.join(", "));
    ensure(images == 100 && recall.len() == DEFAULT_KS.len(), detail.clone())?;
    ensure(recall[0] >= 0.10, detail.clone())?;
    ensure(recall.windows(2).all(|w| w[0] <= w[1]), detail.clone())?;
    let ids: Vec<String> = (0..images).map(|i| format!("s{i}")).collect();
    let flat = retrieval_recall(&ids, images, &DEFAULT_KS, RankingCriterion::Similarity, |_, _| Ok(0.5))
        .map_err(|e| e.to_string())?;
    for (k, r) in flat.ks.iter().zip(&flat.recall) {
        ensure(*r == *k as f64 / images as f64, format!("constant scorer recall@{k} = {r}"))?;
    }
    Ok(detail)
}

fn repetition(a: &PipelineRun) -> Check {
    let rows = a.report("similarity")?;
    let find = |name: &str| {
        rows.as_array()
            .and_then(|r| r.iter().find(|r| r["system"] == name))
            .cloned()
            .ok_or_else(|| format!("no {name} row"))
    };
    let mle = find("g-mle")?;
    let gan = find("g-gan")?;
    let pairs = mle["pairs"].as_u64().unwrap_or(0);
    let (fm, fg) = (mle["fraction"].as_f64().unwrap_or(0.0), gan["fraction"].as_f64().unwrap_or(1.0));
    let detail = format!("{pairs} pairs: G-MLE {fm:.3}, G-GAN {fg:.3}");
    ensure(pairs >= 50 && gan["pairs"].as_u64() == Some(pairs), detail.clone())?;
    ensure(fm >= fg, detail.clone())?;
    Ok(detail)
}

fn listing(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if !name.ends_with(".manifest.json") {
            out.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn determinism(a: &PipelineRun, b: &PipelineRun) -> Check {
    let (x, y) = (listing(&a.dir)?, listing(&b.dir)?);
    ensure(x.keys().eq(y.keys()), "runs wrote different files")?;
    let differing: Vec<&String> = x.iter().filter(|(k, v)| y[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), format!("differing files: {differing:?}"))?;
    let ids = (&a.manifest["id"], &b.manifest["id"]);
    ensure(ids.0 == ids.1, "manifest ids differ")?;
    Ok(format!("{} files identical", x.len()))
}

fn main() {
    let mut results: Vec<(&str, Check)> = Vec::new();
    let mut report = |name, check: Check| {
        match &check {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => println!("FAIL {name}: {d}"),
        }
        results.push((name, check));
    };
    report("1 gradient check", gradients());
    report("2 policy-gradient oracle", policy_gradient_oracle());
    report("3 rollout estimator", rollouts());
    report("4 metric oracles", metric_oracles());

    let root = tempfile::tempdir().expect("temporary directory");
    let runs = PipelineRun::start(&root.path().join("a"))
        .and_then(|a| PipelineRun::start(&root.path().join("b")).map(|b| (a, b)));
    match &runs {
        Ok((a, b)) => {
            report("5 MLE pretraining", mle(a, b));
            report("6 score and BLEU ordering", ordering(a));
            report("7 diversity", diversity(a));
            report("8 retrieval", retrieval(a));
            report("9 repetition probe", repetition(a));
            report("10 determinism", determinism(a, b));
            let (before, after) = (a.get("e_ngan_reward_initial"), a.get("e_ngan_reward_final"));
            if let (Ok(x), Ok(y)) = (before, after) {
                println!("info E-NGAN reward of sampled captions: G-MLE {x:.4}, G-GAN {y:.4}");
            }
        }
        Err(e) => {
            for name in [
                "5 MLE pretraining",
                "6 score and BLEU ordering",
                "7 diversity",
                "8 retrieval",
                "9 repetition probe",
                "10 determinism",
            ] {
                report(name, Err(e.clone()));
            }
        }
    }

    let failed = results.iter().filter(|(_, c)| c.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
