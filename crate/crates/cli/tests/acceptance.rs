//! Acceptance checks, run in sequence so their wall-clock limits are
//! meaningful. Each writes one PASS/FAIL line straight to stderr (visible
//! without `--nocapture`).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textcast::corpus::{preprocess, Stopwords, VocabFilter, Vocabulary};
use textcast::encode::fit_tfidf;
use textcast::forest::{fit_forest, rank_descending, ForestParams};
use textcast::interpret::{cosine_distance, lasso_word_effects, EmbeddingMatrix};
use textcast::linmod::{fit_lasso, lambda_max, soft_threshold, LassoConfig};
use textcast::neural::{gradient_check, train, GruArch, GruModel, MlpArch, MlpModel, Network, TrainConfig};
use textcast::pipeline::{
    aggregate, compute_mape_guarded, compute_metrics, rmse, run_experiment, select_features, ExperimentConfig,
    ExperimentData, ExperimentReport, FamilyGrid, FittedModel, ForestGrid, GruGrid, LassoGrid, MapeMode,
    SelectionConfig,
};
use textcast::synth::{generate, Presence, SynthBundle, SynthSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn check(n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    let took = t.elapsed();
    let in_time = took <= limit;
    let pass = o.pass && in_time;
    let line = format!(
        "criterion {n:>2} {}: {name}: {} [{:.1}s / limit {}s{}]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", too slow" }
    );
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    pass
}

fn tokens(b: &SynthBundle) -> Vec<(NaiveDate, Vec<String>)> {
    let sw = Stopwords::english();
    b.documents.iter().map(|d| (d.date, preprocess(&d.text, &sw))).collect()
}

fn tfidf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let pool: Vec<String> = (0..rng.random_range(1..=50)).map(|i| format!("w{i}")).collect();
        let n_docs = rng.random_range(1..=10);
        let mut docs: Vec<Vec<String>> = (0..n_docs)
            .map(|_| (0..rng.random_range(0..15)).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
            .collect();
        docs[0].push(pool[0].clone());
        let vocab = Vocabulary::build(
            &docs,
            VocabFilter {
                min_count: 1,
                max_doc_frac: 1.0,
            },
        )
        .unwrap();
        let tf = fit_tfidf(&docs, &vocab).unwrap();

        let n = docs.len() as f64;
        let brute = |doc: &[String]| -> Vec<f64> {
            let in_vocab: Vec<&String> = doc.iter().filter(|t| vocab.id(t).is_some()).collect();
            vocab
                .words()
                .iter()
                .map(|w| {
                    let count = in_vocab.iter().filter(|t| **t == w).count() as f64;
                    if in_vocab.is_empty() {
                        return 0.0;
                    }
                    let df = docs.iter().filter(|d| d.contains(w)).count() as f64;
                    count / in_vocab.len() as f64 * (n / (df + 1.0)).ln()
                })
                .collect()
        };
        for (d, row) in docs.iter().zip(&tf.rows) {
            for (a, b) in row.iter().zip(brute(d)) {
                worst = worst.max((a - b).abs());
            }
        }
        let mut fresh: Vec<String> = (0..rng.random_range(0..12)).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
        fresh.push("unseen".into());
        for (a, b) in tf.transform(&fresh, &vocab).iter().zip(brute(&fresh)) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max abs deviation {worst:.2e} over 200 corpora"))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut guarded_exact = true;
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..120.0)).collect();
        let nf = n as f64;
        let mape = 100.0 * y.iter().zip(&p).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / nf;
        let sse: f64 = y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        let mae = y.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() / nf;
        let mean = y.iter().sum::<f64>() / nf;
        let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
        let m = compute_metrics(&y, &p).unwrap();
        for (got, want) in [(m.mape, mape), (m.rmse, (sse / nf).sqrt()), (m.mae, mae), (m.r2, 1.0 - sse / sst)] {
            worst = worst.max((got - want).abs());
        }

        let q = rng.random_range(0.0..0.9);
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = sorted[((q * nf).ceil() as usize).clamp(1, n) - 1];
        let (ys, ps): (Vec<f64>, Vec<f64>) = y.iter().zip(&p).filter(|(a, _)| **a > cut).map(|(a, b)| (*a, *b)).unzip();
        let got = compute_mape_guarded(&y, &p, q);
        if ys.is_empty() {
            guarded_exact &= got.is_err();
        } else {
            let want = 100.0 * ys.iter().zip(&ps).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / ys.len() as f64;
            guarded_exact &= got.ok() == Some(want);
        }
    }
    outcome(
        worst <= 1e-12 && guarded_exact,
        format!("max abs deviation {worst:.2e}, guarded MAPE exact: {guarded_exact}"),
    )
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        x[r] = (b[r] - (r + 1..n).map(|k| a[r][k] * x[k]).sum::<f64>()) / a[r][r];
    }
    x
}

fn lasso_checks() -> Outcome {
    // Sylvester-Hadamard columns other than the constant one: zero mean,
    // unit population variance, mutually orthogonal
    let n = 16;
    let h = |i: usize, j: usize| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    let p = 8;
    let x: Vec<Vec<f64>> = (0..n).map(|i| (1..=p).map(|j| h(i, j)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<f64> = (0..n).map(|i| 2.0 * x[i][0] - 1.5 * x[i][3] + 0.3 * x[i][5] + rng.random_range(-1.0..1.0)).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let ols: Vec<f64> = (0..p).map(|j| (0..n).map(|i| x[i][j] * (y[i] - ybar)).sum::<f64>() / n as f64).collect();
    let lmax = lambda_max(&x, &y).unwrap();
    let mut worst = 0.0f64;
    for g in 0..20 {
        let lambda = lmax * 1.1 * g as f64 / 19.0;
        let m = fit_lasso(&x, &y, &LassoConfig::with_lambda(lambda)).unwrap();
        for j in 0..p {
            worst = worst.max((m.beta[j] - soft_threshold(ols[j], lambda)).abs());
        }
    }
    let zero_at_max = [1.0, 1.5, 10.0].iter().all(|&s| {
        fit_lasso(&x, &y, &LassoConfig::with_lambda(lmax * s))
            .unwrap()
            .beta
            .iter()
            .all(|&b| b == 0.0)
    });

    // square system [1, X] with an unpenalized intercept
    let (rows, cols) = (6, 5);
    let xs: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<Vec<f64>> = xs.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let exact = solve(a, ys.clone());
    let cfg = LassoConfig {
        lambda: 0.0,
        tol: 1e-13,
        max_iter: 2_000_000,
    };
    let m = fit_lasso(&xs, &ys, &cfg).unwrap();
    let ols_gap = m
        .beta
        .iter()
        .zip(&exact[1..])
        .map(|(a, b)| (a - b).abs())
        .fold((m.intercept - exact[0]).abs(), f64::max);
    outcome(
        worst <= 1e-6 && zero_at_max && ols_gap <= 1e-6,
        format!("soft-threshold gap {worst:.1e} over 20 penalties, all-zero beyond max: {zero_at_max}, square OLS gap {ols_gap:.1e}"),
    )
}

fn toy_gru(seed: u64) -> GruModel {
    GruModel::new(
        GruArch {
            vocab_size: 10,
            embed_dim: 4,
            hidden: 5,
            dense: vec![6],
        },
        seed,
    )
}

fn toy_batch() -> (Vec<Vec<u32>>, Vec<f64>) {
    (
        vec![
            vec![1, 2, 3, 0, 0, 0],
            vec![4, 4, 5, 6, 7, 0],
            vec![2, 8, 10, 0, 0, 0],
            vec![3, 6, 9, 1, 5, 2],
            vec![7, 7, 0, 0, 0, 0],
        ],
        vec![0.9, 0.1, 0.6, 0.3, 0.5],
    )
}

fn gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mlp = MlpModel::new(MlpArch { input: 6, hidden: vec![8, 5] }, 1);
    let x: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..8).map(|_| rng.random()).collect();
    let a = gradient_check(&mlp, &x, &y, 1e-5);
    let (batch, targets) = toy_batch();
    let b = gradient_check(&toy_gru(2), &batch, &targets, 1e-5);
    outcome(
        a.max_relative_error < 1e-4 && b.max_relative_error < 1e-4,
        format!(
            "MLP {:.1e} over {} params, embedding-GRU {:.1e} over {} params",
            a.max_relative_error, a.n_params, b.max_relative_error, b.n_params
        ),
    )
}

fn padding_invariance() -> Outcome {
    let (batch, y) = toy_batch();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 2,
        ..Default::default()
    };
    let model = train(toy_gru(3), (&batch, &y), None, &cfg).unwrap().model;
    let longer: Vec<Vec<u32>> = batch
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.resize(12, 0);
            r
        })
        .collect();
    let a = model.predict(&batch.iter().collect::<Vec<_>>()).unwrap();
    let b = model.predict(&longer.iter().collect::<Vec<_>>()).unwrap();
    let gap = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    outcome(gap == 0.0, format!("max prediction change {gap:e} going from length 6 to 12"))
}

fn forest_sanity() -> Outcome {
    let spec = SynthSpec::default();
    let planted = spec.words_with(Presence::Winter);
    let mut hits = 0;
    let mut unused_zero = true;
    let mut worst_rank = 0;
    for seed in 0..10u64 {
        let b = generate(&spec, seed).unwrap();
        let docs: Vec<Vec<String>> = tokens(&b).into_iter().map(|d| d.1).collect();
        let vocab = Vocabulary::build(&docs, VocabFilter::default()).unwrap();
        let mut x = fit_tfidf(&docs, &vocab).unwrap().rows;
        x.iter_mut().for_each(|r| r.push(0.0));
        let y = b.series.values();
        let f = fit_forest(&x, y, &ForestParams::default(), seed).unwrap();
        let imp = f.oob_importance(&x, y, seed + 100).unwrap();
        let order = rank_descending(&imp.normalized);
        let ranks: Vec<usize> = planted
            .iter()
            .map(|w| order.iter().position(|&c| c + 1 == vocab.id(w).unwrap() as usize).unwrap() + 1)
            .collect();
        worst_rank = worst_rank.max(*ranks.iter().max().unwrap());
        if ranks.iter().all(|&r| r <= 10) {
            hits += 1;
        }
        unused_zero &= imp.raw[vocab.len()] == 0.0;
    }
    outcome(
        hits >= 9 && unused_zero,
        format!("planted words all in top 10 for {hits}/10 seeds (worst rank {worst_rank}), constant column importance exactly 0: {unused_zero}"),
    )
}

fn selection_recovery() -> Outcome {
    let spec = SynthSpec::default();
    let b = generate(&spec, 0).unwrap();
    let docs: Vec<Vec<String>> = tokens(&b).into_iter().map(|d| d.1).collect();
    let vocab = Vocabulary::build(&docs, VocabFilter::default()).unwrap();
    let x = fit_tfidf(&docs, &vocab).unwrap().rows;
    let cfg = SelectionConfig {
        repetitions: 10,
        scan_cap: 40,
        forest: ForestParams::default(),
        seed: 5,
    };
    let sel = select_features(&x, b.series.values(), vocab.words(), &cfg).unwrap();
    let best = sel.median_r2.iter().copied().fold(f64::MIN, f64::max);
    let at10 = sel.median_r2[9];
    let mut season = spec.words_with(Presence::Winter);
    season.extend(spec.words_with(Presence::Summer));
    let covered = sel
        .repetition_rankings
        .iter()
        .filter(|r| season.iter().all(|w| r[..sel.v_star].contains(w)))
        .count();
    outcome(
        at10 >= 0.95 * best && covered >= 9,
        format!(
            "median R2 {at10:.3} at k=10 vs max {best:.3} ({:.1}%), v*={}, season words inside top v* in {covered}/10 repetitions",
            100.0 * at10 / best,
            sel.v_star
        ),
    )
}

fn experiment_config(spec: &SynthSpec, models: Vec<FamilyGrid>, runs: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        split: spec.suggested_split(),
        detrend: false,
        mape: MapeMode::Plain,
        vocab_filter: VocabFilter::default(),
        selection: None,
        models,
        runs,
        seed,
        aggregate: true,
    }
}

fn forecasting_floor(report: &ExperimentReport) -> Outcome {
    let r2 = |f: &str| report.family(f).map_or(f64::NAN, |r| r.summary.mean.r2);
    let (rf, gru, lasso) = (r2("random_forest"), r2("gru"), r2("lasso"));
    outcome(
        rf >= 0.75 && gru >= 0.75 && lasso >= 0.70,
        format!("mean test R2 over 10 runs: forest {rf:.3}, gru {gru:.3}, lasso {lasso:.3}"),
    )
}

fn lasso_signs() -> Outcome {
    let mut good = 0;
    let mut notes = vec![];
    for seed in 0..10u64 {
        let spec = SynthSpec::default();
        let b = generate(&spec, 100 + seed).unwrap();
        let docs = tokens(&b);
        let data = ExperimentData {
            series: &b.series,
            documents: &docs,
        };
        let cfg = experiment_config(&spec, vec![FamilyGrid::Lasso(LassoGrid::default())], 1, seed);
        let rep = run_experiment(&data, &cfg).unwrap();
        let FittedModel::Lasso(m) = &rep.family("lasso").unwrap().models[0] else { unreachable!() };
        let words = rep.vocabulary.words();
        let fx = lasso_word_effects(m, words, words.len()).unwrap();
        let pos: Vec<&str> = fx.positive.iter().map(|r| r.word.as_str()).collect();
        let neg: Vec<&str> = fx.negative.iter().map(|r| r.word.as_str()).collect();
        let ok = spec.words_with(Presence::Winter).iter().all(|w| pos.contains(&w.as_str()))
            && spec.words_with(Presence::Summer).iter().all(|w| neg.contains(&w.as_str()));
        if ok {
            good += 1;
        } else {
            notes.push(seed);
        }
    }
    outcome(good >= 9, format!("planted signs recovered in {good}/10 independent bundles (misses: {notes:?})"))
}

fn embedding_geometry(report: &ExperimentReport, spec: &SynthSpec) -> Outcome {
    let gru = report.family("gru").unwrap();
    let up = spec.words_with(Presence::Winter);
    let down = spec.words_with(Presence::Summer);
    let truth = spec.ground_truth();
    let mut good = 0;
    let (mut signal_norm, mut noise_norm) = (vec![], vec![]);
    for m in &gru.models {
        let FittedModel::Gru(g) = m else { unreachable!() };
        let e = EmbeddingMatrix::from_model(g, &report.vocabulary).unwrap();
        let v = |w: &String| e.vector(w).unwrap();
        let mut within = vec![];
        for (i, a) in up.iter().enumerate() {
            for b in &up[i + 1..] {
                within.push(cosine_distance(v(a), v(b)).unwrap());
            }
        }
        let cross: Vec<f64> = up.iter().flat_map(|a| down.iter().map(move |b| (a, b))).map(|(a, b)| cosine_distance(v(a), v(b)).unwrap()).collect();
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        if mean(&within) < mean(&cross) {
            good += 1;
        }
        for (w, vec) in e.words.iter().zip(&e.vectors) {
            let norm = vec.iter().map(|x| x * x).sum::<f64>().sqrt();
            if truth.effect(w) != 0.0 {
                signal_norm.push(norm);
            } else {
                noise_norm.push(norm);
            }
        }
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (s, n) = (mean(&signal_norm), mean(&noise_norm));
    outcome(
        good >= 9 && s > n,
        format!("within-cluster closer than cross-cluster in {good}/{} runs, mean norm informative {s:.3} vs noise {n:.3}", gru.models.len()),
    )
}

fn aggregation_convexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let c = aggregate(&a, &b).unwrap();
        if rmse(&y, &c).unwrap() > rmse(&y, &a).unwrap().max(rmse(&y, &b).unwrap()) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 1000 random pairs"))
}

fn run_binary(config: &Path, out: &Path, extra: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_textcast"))
        .args(["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synth-quick.toml");
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !run_binary(&config, &a, &[]) || !run_binary(&config, &b, &["--jobs", "2"]) {
        return outcome(false, "run command failed");
    }
    let tables = ["metrics.csv", "metrics_summary.csv", "predictions_lasso.csv", "predictions_random_forest.csv"];
    let same: Vec<bool> = tables
        .iter()
        .map(|t| {
            let x = std::fs::read(a.join(t)).unwrap();
            !x.is_empty() && x == std::fs::read(b.join(t)).unwrap()
        })
        .collect();
    let all = same.iter().all(|&s| s);
    outcome(all, format!("byte-identical tables across two runs: {:?}", tables.iter().zip(&same).collect::<HashMap<_, _>>()))
}

#[test]
fn acceptance_criteria() {
    let mut failed = vec![];
    let mut record = |n: usize, pass: bool| {
        if !pass {
            failed.push(n)
        }
    };
    let secs = Duration::from_secs;
    record(1, check(1, "tf-idf matches brute force", secs(5), tfidf_oracle));
    record(2, check(2, "metrics match formula oracles", secs(5), metric_oracle));
    record(3, check(3, "lasso closed forms", secs(10), lasso_checks));
    record(4, check(4, "gradient fidelity", secs(30), gradient_fidelity));
    record(5, check(5, "padding invariance", secs(5), padding_invariance));
    record(6, check(6, "forest sanity", secs(120), forest_sanity));
    record(7, check(7, "feature-selection recovery", secs(600), selection_recovery));

    let spec = SynthSpec::default();
    let bundle = generate(&spec, 0).unwrap();
    let docs = tokens(&bundle);
    let mut report = None;
    record(
        8,
        check(8, "end-to-end forecasting floor", secs(900), || {
            let models = vec![
                FamilyGrid::Lasso(LassoGrid::default()),
                FamilyGrid::RandomForest(ForestGrid::default()),
                FamilyGrid::Gru(GruGrid::default()),
            ];
            let data = ExperimentData {
                series: &bundle.series,
                documents: &docs,
            };
            let r = run_experiment(&data, &experiment_config(&spec, models, 10, 0)).unwrap();
            let o = forecasting_floor(&r);
            report = Some(r);
            o
        }),
    );
    record(9, check(9, "interpretability signs", secs(300), lasso_signs));
    let report = report.unwrap();
    record(10, check(10, "embedding geometry", secs(60), || embedding_geometry(&report, &spec)));
    record(11, check(11, "aggregation never worse than the worse input", secs(5), aggregation_convexity));
    record(12, check(12, "determinism of the run command", secs(120), determinism));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
