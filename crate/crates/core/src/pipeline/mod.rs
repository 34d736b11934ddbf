//! Evaluation and experiment orchestration: error metrics, random-forest
//! feature selection, grid search, repeated runs, forecast averaging, the
//! numeric benchmark and residual diagnostics.

mod experiment;

pub use experiment::{
    embedding_analysis, run_experiment, AggregateReport, EmbeddingAnalysis, EmbeddingAnalysisConfig, ExperimentConfig, ExperimentData, ExperimentReport, FamilyGrid,
    FamilyReport, FittedModel, ForestGrid, GruGrid, LassoGrid, MlpGrid, ModelSpec, OptimizerKind,
    TargetTransform, TrainGrid,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestParams};
use crate::par;
use crate::series::CalendarFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percent.
    pub mape: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Spec("metrics need at least one point".into()));
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

fn mape_unchecked(y: &[f64], yhat: &[f64]) -> f64 {
    let total: f64 = y.iter().zip(yhat).map(|(a, p)| ((a - p) / a).abs()).sum();
    100.0 * total / y.len() as f64
}

/// `1 − SSE/SST` with the mean of `y`. A constant `y` has SST = 0 and gets
/// R² = 0.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst == 0.0 {
        return Ok(0.0);
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok(1.0 - sse / sst)
}

/// MAPE (percent), RMSE, MAE and R². Fails on a zero actual value; use
/// [`compute_mape_guarded`] for series that touch zero.
pub fn compute_metrics(y: &[f64], yhat: &[f64]) -> Result<Metrics> {
    check_pair(y, yhat)?;
    if let Some(i) = y.iter().position(|&a| a == 0.0) {
        return Err(Error::ZeroDivision(i));
    }
    let n = y.len() as f64;
    let mae = y.iter().zip(yhat).map(|(a, p)| (a - p).abs()).sum::<f64>() / n;
    Ok(Metrics {
        mape: mape_unchecked(y, yhat),
        rmse: rmse(y, yhat)?,
        mae,
        r2: r2(y, yhat)?,
    })
}

/// Nearest-rank empirical quantile: the `⌈q·n⌉`-th smallest value (the
/// smallest for `q = 0`).
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// MAPE over the points whose actual value is strictly above the
/// `quantile`-quantile of `y`. When every actual value ties, all points are
/// kept.
pub fn compute_mape_guarded(y: &[f64], yhat: &[f64], quantile: f64) -> Result<f64> {
    check_pair(y, yhat)?;
    let first = y[0];
    let (ys, ps): (Vec<f64>, Vec<f64>) = if y.iter().all(|&v| v == first) {
        (y.to_vec(), yhat.to_vec())
    } else {
        let q = nearest_rank_quantile(y, quantile);
        y.iter().zip(yhat).filter(|(a, _)| **a > q).map(|(a, p)| (*a, *p)).unzip()
    };
    if ys.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(i) = ys.iter().position(|&a| a == 0.0) {
        return Err(Error::ZeroDivision(i));
    }
    Ok(mape_unchecked(&ys, &ps))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapeMode {
    #[default]
    Plain,
    /// Only actual values above this quantile count.
    Guarded { quantile: f64 },
}

/// [`compute_metrics`] with the MAPE computed per `mode`.
pub fn evaluate(y: &[f64], yhat: &[f64], mode: MapeMode) -> Result<Metrics> {
    match mode {
        MapeMode::Plain => compute_metrics(y, yhat),
        MapeMode::Guarded { quantile } => {
            check_pair(y, yhat)?;
            let n = y.len() as f64;
            Ok(Metrics {
                mape: compute_mape_guarded(y, yhat, quantile)?,
                rmse: rmse(y, yhat)?,
                mae: y.iter().zip(yhat).map(|(a, p)| (a - p).abs()).sum::<f64>() / n,
                r2: r2(y, yhat)?,
            })
        }
    }
}

/// Mean (or median) of a non-empty slice.
fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Mean and sample standard deviation, computed on offsets from the first
/// value so that identical inputs give that value and exactly zero spread.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let x0 = v[0];
    let d: Vec<f64> = v.iter().map(|x| x - x0).collect();
    let md = mean(&d);
    if v.len() < 2 {
        return (x0 + md, 0.0);
    }
    let var = d.iter().map(|x| (x - md) * (x - md)).sum::<f64>() / (v.len() - 1) as f64;
    (x0 + md, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Repetitions `B` with different seeds.
    pub repetitions: usize,
    /// Largest number of top words tried.
    pub scan_cap: usize,
    pub forest: ForestParams,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            repetitions: 10,
            scan_cap: 300,
            forest: ForestParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectionResult {
    /// Words by decreasing mean normalized importance over the repetitions.
    pub ranked_words: Vec<String>,
    pub importance_mean: Vec<f64>,
    pub importance_std: Vec<f64>,
    /// `r2_curve[k - 1]` holds the OOB R² of every repetition with the top
    /// `k` words of that repetition's ranking.
    pub r2_curve: Vec<Vec<f64>>,
    pub median_r2: Vec<f64>,
    pub v_star: usize,
    /// Each repetition's own word ranking.
    pub repetition_rankings: Vec<Vec<String>>,
}

impl FeatureSelectionResult {
    pub fn selected(&self) -> &[String] {
        &self.ranked_words[..self.v_star]
    }

    pub fn write_curve<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let b = self.r2_curve.first().map_or(0, Vec::len);
        let mut header = vec!["k".to_string(), "median_r2".to_string()];
        header.extend((0..b).map(|r| format!("run{r}")));
        w.write_record(&header)?;
        for (k, (runs, med)) in self.r2_curve.iter().zip(&self.median_r2).enumerate() {
            let mut rec = vec![(k + 1).to_string(), med.to_string()];
            rec.extend(runs.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<selection curve>", e))?;
        Ok(())
    }
}

/// Order of `words` by the key `(score desc, word asc)`.
fn rank_by_score(scores: &[f64], words: &[&str]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| words[a].cmp(words[b])));
    idx
}

/// Random-forest OOB feature selection. Each repetition fits a forest on
/// every column, ranks the columns by OOB permutation importance, then refits
/// on the top `k` columns for `k = 1..=min(V, scan_cap)` and records the OOB
/// R². `v_star` maximizes the median R² over repetitions (smallest `k` on
/// ties).
///
/// Columns are processed in lexicographic word order, so reordering the
/// columns of `x` together with `words` leaves the result unchanged.
pub fn select_features(
    x: &[Vec<f64>],
    y: &[f64],
    words: &[String],
    cfg: &SelectionConfig,
) -> Result<FeatureSelectionResult> {
    let p = words.len();
    if p == 0 || cfg.repetitions == 0 {
        return Err(Error::Spec("selection needs at least one word and one repetition".into()));
    }
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(Error::Shape {
            expected: p,
            got: r.len(),
        });
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| words[a].cmp(&words[b]));
    let names: Vec<&str> = order.iter().map(|&c| words[c].as_str()).collect();
    let canon: Vec<Vec<f64>> = x
        .iter()
        .map(|r| order.iter().map(|&c| r[c]).collect())
        .collect();
    let k_max = p.min(cfg.scan_cap.max(1));

    let runs: Vec<Result<(Vec<f64>, Vec<f64>, Vec<usize>)>> = par::map_indexed(cfg.repetitions, |rep| {
        let seed = par::derive_seed(cfg.seed, rep as u64);
        let forest = fit_forest(&canon, y, &cfg.forest, seed)?;
        let imp = forest.oob_importance(&canon, y, par::derive_seed(seed, 1))?;
        let ranking = rank_by_score(&imp.normalized, &names);
        let mut curve = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let cols = &ranking[..k];
            let sub: Vec<Vec<f64>> = canon
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect();
            let f = fit_forest(&sub, y, &cfg.forest, par::derive_seed(seed, 1 + k as u64))?;
            curve.push(f.oob_r2(&sub, y)?.r2);
        }
        Ok((imp.normalized, curve, ranking))
    });
    let runs: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)> = runs.into_iter().collect::<Result<_>>()?;

    let stats: Vec<(f64, f64)> = (0..p)
        .map(|c| mean_std(&runs.iter().map(|r| r.0[c]).collect::<Vec<_>>()))
        .collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let ranking = rank_by_score(&means, &names);
    let r2_curve: Vec<Vec<f64>> = (0..k_max)
        .map(|k| runs.iter().map(|r| r.1[k]).collect())
        .collect();
    let median_r2: Vec<f64> = r2_curve.iter().map(|v| median(v)).collect();
    let mut v_star = 1;
    for (k, &m) in median_r2.iter().enumerate() {
        if m > median_r2[v_star - 1] {
            v_star = k + 1;
        }
    }
    Ok(FeatureSelectionResult {
        ranked_words: ranking.iter().map(|&c| names[c].to_string()).collect(),
        importance_mean: ranking.iter().map(|&c| stats[c].0).collect(),
        importance_std: ranking.iter().map(|&c| stats[c].1).collect(),
        r2_curve,
        median_r2,
        v_star,
        repetition_rankings: runs
            .iter()
            .map(|r| r.2.iter().map(|&c| names[c].to_string()).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow<C> {
    /// Position in the grid.
    pub cell: usize,
    pub config: C,
    /// Validation RMSE, `None` when the cell failed.
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult<C> {
    pub best: usize,
    pub leaderboard: Vec<LeaderboardRow<C>>,
}

impl<C> GridResult<C> {
    pub fn best_row(&self) -> &LeaderboardRow<C> {
        &self.leaderboard[self.best]
    }
}

/// Evaluates every cell and keeps the lowest validation RMSE, ties going to
/// the earlier cell. Failing cells are logged and excluded.
pub fn grid_search<C, F>(cells: &[C], evaluate_cell: F) -> Result<GridResult<C>>
where
    C: Clone + Sync + Send + std::fmt::Debug,
    F: Fn(&C) -> Result<f64> + Sync + Send,
{
    grid_search_with(cells, |c| evaluate_cell(c).map(|v| (v, ()))).map(|(g, _)| g)
}

/// [`grid_search`] where each cell also returns a payload, handed back per
/// cell (`None` for failed cells).
pub fn grid_search_with<C, T, F>(cells: &[C], evaluate_cell: F) -> Result<(GridResult<C>, Vec<Option<T>>)>
where
    C: Clone + Sync + Send + std::fmt::Debug,
    T: Send,
    F: Fn(&C) -> Result<(f64, T)> + Sync + Send,
{
    if cells.is_empty() {
        return Err(Error::Spec("empty hyperparameter grid".into()));
    }
    let scores = par::map_indexed(cells.len(), |i| evaluate_cell(&cells[i]));
    let mut payloads = Vec::with_capacity(cells.len());
    let mut leaderboard = Vec::with_capacity(cells.len());
    for (i, s) in scores.into_iter().enumerate() {
        let s = s.and_then(|(v, t)| {
            if v.is_finite() {
                Ok((v, t))
            } else {
                Err(Error::Spec("non-finite validation RMSE".into()))
            }
        });
        let (rmse, error) = match s {
            Ok((v, t)) => {
                payloads.push(Some(t));
                (Some(v), None)
            }
            Err(e) => {
                log::warn!("grid cell {i} ({:?}) failed: {e}", cells[i]);
                payloads.push(None);
                (None, Some(e.to_string()))
            }
        };
        leaderboard.push(LeaderboardRow {
            cell: i,
            config: cells[i].clone(),
            rmse,
            error,
        });
    }
    let mut best: Option<usize> = None;
    for row in &leaderboard {
        if let Some(v) = row.rmse {
            if best.is_none_or(|b| v < leaderboard[b].rmse.expect("scored")) {
                best = Some(row.cell);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Spec("every grid cell failed".into()))?;
    Ok((GridResult { best, leaderboard }, payloads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub seed: u64,
    pub predictions: Vec<f64>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: Vec<RunOutput>,
    pub mean: Metrics,
    /// Sample standard deviation over the runs (0 for a single run).
    pub std: Metrics,
}

impl RunSummary {
    pub fn from_runs(runs: Vec<RunOutput>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Spec("at least one run is required".into()));
        }
        let col = |f: fn(&Metrics) -> f64| mean_std(&runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        let (mape, rmse, mae, r2) = (col(|m| m.mape), col(|m| m.rmse), col(|m| m.mae), col(|m| m.r2));
        Ok(RunSummary {
            mean: Metrics {
                mape: mape.0,
                rmse: rmse.0,
                mae: mae.0,
                r2: r2.0,
            },
            std: Metrics {
                mape: mape.1,
                rmse: rmse.1,
                mae: mae.1,
                r2: r2.1,
            },
            runs,
        })
    }

    pub fn b(&self) -> usize {
        self.runs.len()
    }
}

/// `b` runs with seeds `base_seed + 0 .. base_seed + b − 1`; `run` returns
/// predictions and their metrics for a seed.
pub fn multi_run<F>(b: usize, base_seed: u64, run: F) -> Result<RunSummary>
where
    F: Fn(u64) -> Result<(Vec<f64>, Metrics)> + Sync + Send,
{
    if b == 0 {
        return Err(Error::Spec("B must be at least 1".into()));
    }
    let outs = par::map_indexed(b, |r| {
        let seed = base_seed.wrapping_add(r as u64);
        run(seed).map(|(predictions, metrics)| RunOutput {
            seed,
            predictions,
            metrics,
        })
    });
    RunSummary::from_runs(outs.into_iter().collect::<Result<_>>()?)
}

/// Elementwise average of two aligned forecasts.
pub fn aggregate(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect())
}

/// Covariates of the numeric benchmark, aligned with `y`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NumericData {
    pub dates: Vec<NaiveDate>,
    pub temperature: Option<Vec<f64>>,
    pub wind: Option<Vec<f64>>,
    pub y: Vec<f64>,
}

impl NumericData {
    /// Rows `[time_of_year, day_of_week, temperature, wind]`.
    pub fn rows(&self) -> Result<Vec<Vec<f64>>> {
        let missing = |name: &str| Error::Spec(format!("numeric benchmark needs the `{name}` covariate"));
        let t = self.temperature.as_ref().ok_or_else(|| missing("temperature"))?;
        let w = self.wind.as_ref().ok_or_else(|| missing("wind"))?;
        let n = self.dates.len();
        for len in [t.len(), w.len(), self.y.len()] {
            if len != n {
                return Err(Error::Shape { expected: n, got: len });
            }
        }
        Ok((0..n)
            .map(|i| {
                let c = CalendarFeatures::of(self.dates[i]);
                vec![c.time_of_year, f64::from(c.day_of_week), t[i], w[i]]
            })
            .collect())
    }
}

/// Random forest on calendar position, weekday, temperature and wind,
/// fitted on `train` and scored on `test`.
pub fn benchmark_numeric(
    train: &NumericData,
    test: &NumericData,
    params: &ForestParams,
    seed: u64,
    mape: MapeMode,
) -> Result<(crate::forest::ForestModel, Metrics)> {
    let xtr = train.rows()?;
    let xte = test.rows()?;
    let forest = fit_forest(&xtr, &train.y, params, seed)?;
    let pred = forest.predict_rows(&xte)?;
    let metrics = evaluate(&test.y, &pred, mape)?;
    Ok((forest, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDiagnostics {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub ks_statistic: f64,
    /// Asymptotic p-value; `None` for constant residuals.
    pub ks_p_value: Option<f64>,
    /// Normality rejected at the 5% level (always set for constant residuals).
    pub ks_reject_5pct: bool,
    pub degenerate: bool,
    pub lag1_autocorr: f64,
    /// `(theoretical, empirical)` quantile pairs of the fitted normal.
    pub qq_points: Vec<(f64, f64)>,
}

/// Kolmogorov distribution tail `P(K > λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // the alternating series converges slowly here and the tail is 1 to
        // double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic `sup |F_n − F|` of `sorted` against `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Pearson correlation between `e[t]` and `e[t + 1]`.
pub fn lag1_autocorr(e: &[f64]) -> f64 {
    if e.len() < 3 {
        return f64::NAN;
    }
    let a = &e[..e.len() - 1];
    let b = &e[1..];
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// Residual checks on `ε = y − ŷ`: a KS test against the normal with the
/// residuals' mean and standard deviation, lag-1 autocorrelation and QQ
/// pairs.
pub fn residual_diagnostics(y: &[f64], yhat: &[f64]) -> Result<ResidualDiagnostics> {
    check_pair(y, yhat)?;
    if y.len() < 8 {
        return Err(Error::Spec(format!("residual diagnostics need at least 8 points, got {}", y.len())));
    }
    let e: Vec<f64> = y.iter().zip(yhat).map(|(a, p)| a - p).collect();
    let (m, s) = mean_std(&e);
    let mut sorted = e.clone();
    sorted.sort_by(f64::total_cmp);
    let n = e.len();
    let plotting = |i: usize| (i as f64 + 0.5) / n as f64;

    if s == 0.0 || !s.is_finite() {
        log::warn!("constant residuals: normality test is degenerate");
        let c = sorted[0];
        // the empirical CDF is the step 1{x >= c} itself
        let ks = 0.0;
        return Ok(ResidualDiagnostics {
            n,
            mean: m,
            std: 0.0,
            ks_statistic: ks,
            ks_p_value: None,
            ks_reject_5pct: true,
            degenerate: true,
            lag1_autocorr: lag1_autocorr(&e),
            qq_points: sorted.iter().map(|&v| (c, v)).collect(),
        });
    }
    let normal = Normal::new(m, s).map_err(|e| Error::Spec(e.to_string()))?;
    let ks = ks_statistic(&sorted, |x| normal.cdf(x));
    let p = kolmogorov_tail((n as f64).sqrt() * ks);
    Ok(ResidualDiagnostics {
        n,
        mean: m,
        std: s,
        ks_statistic: ks,
        ks_p_value: Some(p),
        ks_reject_5pct: p < 0.05,
        degenerate: false,
        lag1_autocorr: lag1_autocorr(&e),
        qq_points: sorted
            .iter()
            .enumerate()
            .map(|(i, &v)| (normal.inverse_cdf(plotting(i)), v))
            .collect(),
    })
}
