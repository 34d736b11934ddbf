//! The end-to-end protocol for one target series: split, target transforms,
//! optional feature selection, per-family grid search on the validation
//! segment, retraining on training + validation, `B` seeded test runs,
//! averaging of the two best families and residual diagnostics.

use std::collections::{HashMap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    aggregate, evaluate, grid_search_with, residual_diagnostics, rmse, select_features, FeatureSelectionResult,
    GridResult, MapeMode, ResidualDiagnostics, RunOutput, RunSummary, SelectionConfig,
};
use crate::corpus::{pad_batch, to_ids, IdMode, VocabFilter, Vocabulary};
use crate::encode::fit_tfidf;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestModel, ForestParams, Mtry};
use crate::linmod::{fit_lasso, LassoConfig, LassoModel};
use crate::neural::{self, EpochLoss, GruArch, GruModel, MlpArch, MlpModel, Network, Optimizer, TrainConfig};
use crate::par;
use crate::series::{detrend, fit_linear_trend, retrend, split, ScalingParams, SplitSpec, TimeSeries, TrendModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

impl OptimizerKind {
    fn optimizer(self) -> Optimizer {
        match self {
            OptimizerKind::SgdMomentum => Optimizer::sgd_momentum(),
            OptimizerKind::Adam => Optimizer::adam(),
        }
    }
}

/// One fully specified model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Lasso {
        lambda: f64,
    },
    RandomForest {
        params: ForestParams,
    },
    Mlp {
        hidden: Vec<usize>,
        train: TrainConfig,
    },
    Gru {
        embed_dim: usize,
        hidden: usize,
        dense: Vec<usize>,
        train: TrainConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoGrid {
    pub lambda: Vec<f64>,
}

impl Default for LassoGrid {
    fn default() -> Self {
        LassoGrid {
            lambda: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestGrid {
    pub n_trees: Vec<usize>,
    /// 0 grows trees without a depth limit.
    pub max_depth: Vec<usize>,
    pub min_leaf: Vec<usize>,
    pub mtry: Vec<Mtry>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            n_trees: vec![100],
            max_depth: vec![0],
            min_leaf: vec![1, 5],
            mtry: vec![Mtry::Third],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainGrid {
    pub dropout: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub optimizer: Vec<OptimizerKind>,
    pub batch_size: Vec<usize>,
    pub epochs: usize,
}

impl Default for TrainGrid {
    fn default() -> Self {
        TrainGrid {
            dropout: vec![0.25],
            learning_rate: vec![1e-3],
            optimizer: vec![OptimizerKind::Adam],
            batch_size: vec![32],
            epochs: 100,
        }
    }
}

impl TrainGrid {
    fn configs(&self) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &optimizer in &self.optimizer {
            for &learning_rate in &self.learning_rate {
                for &batch_size in &self.batch_size {
                    for &dropout in &self.dropout {
                        out.push(TrainConfig {
                            optimizer: optimizer.optimizer(),
                            learning_rate,
                            batch_size,
                            epochs: self.epochs,
                            dropout,
                            seed: 0,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpGrid {
    pub hidden: Vec<Vec<usize>>,
    #[serde(flatten)]
    pub train: TrainGrid,
}

impl Default for MlpGrid {
    fn default() -> Self {
        MlpGrid {
            hidden: vec![vec![64, 32]],
            train: TrainGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GruGrid {
    pub embed_dim: Vec<usize>,
    pub hidden: Vec<usize>,
    pub dense: Vec<Vec<usize>>,
    #[serde(flatten)]
    pub train: TrainGrid,
}

impl Default for GruGrid {
    fn default() -> Self {
        GruGrid {
            embed_dim: vec![20],
            hidden: vec![16],
            dense: vec![vec![16]],
            train: TrainGrid::default(),
        }
    }
}

/// Hyperparameter lists of one model family; the grid is their cartesian
/// product in field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyGrid {
    Lasso(LassoGrid),
    RandomForest(ForestGrid),
    Mlp(MlpGrid),
    Gru(GruGrid),
}

impl FamilyGrid {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyGrid::Lasso(_) => "lasso",
            FamilyGrid::RandomForest(_) => "random_forest",
            FamilyGrid::Mlp(_) => "mlp",
            FamilyGrid::Gru(_) => "gru",
        }
    }

    pub fn cells(&self) -> Vec<ModelSpec> {
        match self {
            FamilyGrid::Lasso(g) => g.lambda.iter().map(|&lambda| ModelSpec::Lasso { lambda }).collect(),
            FamilyGrid::RandomForest(g) => {
                let mut out = Vec::new();
                for &n_trees in &g.n_trees {
                    for &depth in &g.max_depth {
                        for &min_leaf in &g.min_leaf {
                            for &mtry in &g.mtry {
                                out.push(ModelSpec::RandomForest {
                                    params: ForestParams {
                                        n_trees,
                                        max_depth: (depth > 0).then_some(depth),
                                        min_leaf,
                                        mtry,
                                        bootstrap: true,
                                    },
                                });
                            }
                        }
                    }
                }
                out
            }
            FamilyGrid::Mlp(g) => {
                let mut out = Vec::new();
                for hidden in &g.hidden {
                    for train in g.train.configs() {
                        out.push(ModelSpec::Mlp {
                            hidden: hidden.clone(),
                            train,
                        });
                    }
                }
                out
            }
            FamilyGrid::Gru(g) => {
                let mut out = Vec::new();
                for &embed_dim in &g.embed_dim {
                    for &hidden in &g.hidden {
                        for dense in &g.dense {
                            for train in g.train.configs() {
                                out.push(ModelSpec::Gru {
                                    embed_dim,
                                    hidden,
                                    dense: dense.clone(),
                                    train,
                                });
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedModel {
    Lasso(LassoModel),
    RandomForest(ForestModel),
    Mlp(MlpModel),
    Gru(GruModel),
}

/// Inputs of every family for one segment.
struct Encoded {
    tfidf: Vec<Vec<f64>>,
    ids: Vec<Vec<u32>>,
}

impl FittedModel {
    fn predict(&self, enc: &Encoded) -> Result<Vec<f64>> {
        match self {
            FittedModel::Lasso(m) => m.predict_rows(&enc.tfidf),
            FittedModel::RandomForest(m) => m.predict_rows(&enc.tfidf),
            FittedModel::Mlp(m) => m.predict(&enc.tfidf.iter().collect::<Vec<_>>()),
            FittedModel::Gru(m) => m.predict(&enc.ids.iter().collect::<Vec<_>>()),
        }
    }
}

struct Fit {
    model: FittedModel,
    best_epoch: Option<usize>,
    curve: Vec<EpochLoss>,
}

/// Fits `spec`; neural families keep their best validation epoch when a
/// validation segment is given and otherwise train for `epochs`.
fn fit_spec(
    spec: &ModelSpec,
    train: (&Encoded, &[f64]),
    validation: Option<(&Encoded, &[f64])>,
    vocab_size: usize,
    seed: u64,
    epochs: Option<usize>,
) -> Result<Fit> {
    let (enc, y) = train;
    let neural_fit = |mut cfg: TrainConfig| {
        cfg.seed = seed;
        if let Some(e) = epochs {
            cfg.epochs = e;
        }
        cfg
    };
    Ok(match spec {
        ModelSpec::Lasso { lambda } => Fit {
            model: FittedModel::Lasso(fit_lasso(&enc.tfidf, y, &LassoConfig::with_lambda(*lambda))?),
            best_epoch: None,
            curve: vec![],
        },
        ModelSpec::RandomForest { params } => Fit {
            model: FittedModel::RandomForest(fit_forest(&enc.tfidf, y, params, seed)?),
            best_epoch: None,
            curve: vec![],
        },
        ModelSpec::Mlp { hidden, train } => {
            let model = MlpModel::new(
                MlpArch {
                    input: vocab_size,
                    hidden: hidden.clone(),
                },
                par::derive_seed(seed, 1),
            );
            let t = neural::train(model, (&enc.tfidf, y), validation.map(|(e, v)| (&e.tfidf[..], v)), &neural_fit(*train))?;
            Fit {
                model: FittedModel::Mlp(t.model),
                best_epoch: Some(t.best_epoch),
                curve: t.curve,
            }
        }
        ModelSpec::Gru {
            embed_dim,
            hidden,
            dense,
            train,
        } => {
            let model = GruModel::new(
                GruArch {
                    vocab_size,
                    embed_dim: *embed_dim,
                    hidden: *hidden,
                    dense: dense.clone(),
                },
                par::derive_seed(seed, 1),
            );
            let t = neural::train(model, (&enc.ids, y), validation.map(|(e, v)| (&e.ids[..], v)), &neural_fit(*train))?;
            Fit {
                model: FittedModel::Gru(t.model),
                best_epoch: Some(t.best_epoch),
                curve: t.curve,
            }
        }
    })
}

/// Optional linear trend, then min–max scaling, both fitted on one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub trend: Option<TrendModel>,
    pub scaling: ScalingParams,
}

impl TargetTransform {
    fn fit(seg: &TimeSeries, with_trend: bool) -> Result<Self> {
        let trend = with_trend.then(|| fit_linear_trend(seg)).transpose()?;
        let base = trend.as_ref().map_or_else(|| seg.clone(), |t| detrend(seg, t));
        Ok(TargetTransform {
            trend,
            scaling: ScalingParams::fit(base.values())?,
        })
    }

    fn forward(&self, seg: &TimeSeries) -> Vec<f64> {
        let base = self.trend.as_ref().map_or_else(|| seg.clone(), |t| detrend(seg, t));
        base.values().iter().map(|&v| self.scaling.scale(v)).collect()
    }

    fn inverse(&self, seg: &TimeSeries, scaled: &[f64]) -> Result<Vec<f64>> {
        let unscaled = seg.with_values(scaled.iter().map(|&s| self.scaling.unscale(s)).collect())?;
        Ok(match &self.trend {
            Some(t) => retrend(&unscaled, t).values().to_vec(),
            None => unscaled.values().to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub split: SplitSpec,
    pub detrend: bool,
    pub mape: MapeMode,
    pub vocab_filter: VocabFilter,
    /// Feature selection on training + validation; the selected words are
    /// used by every family.
    pub selection: Option<SelectionConfig>,
    pub models: Vec<FamilyGrid>,
    /// Seeded test runs `B`.
    pub runs: usize,
    pub seed: u64,
    /// Average the test forecasts of the two families with the lowest
    /// validation RMSE.
    pub aggregate: bool,
}

/// A target series with the tokenized document of each date. Dates without
/// a document get an empty one.
pub struct ExperimentData<'a> {
    pub series: &'a TimeSeries,
    pub documents: &'a [(NaiveDate, Vec<String>)],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: String,
    pub grid: GridResult<ModelSpec>,
    pub best: ModelSpec,
    pub validation_rmse: f64,
    /// Epoch count used for the final neural fits.
    pub epochs: Option<usize>,
    pub summary: RunSummary,
    /// Residual checks of the first run.
    pub diagnostics: Option<ResidualDiagnostics>,
    /// Loss curves of the final fits, one per run (neural families only).
    pub loss_curves: Vec<Vec<EpochLoss>>,
    /// Normalized OOB importances per run, forests only, on the final
    /// vocabulary.
    pub importances: Vec<Vec<f64>>,
    pub models: Vec<FittedModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub members: (String, String),
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub split_lengths: (usize, usize, usize),
    pub selection: Option<FeatureSelectionResult>,
    /// Vocabulary of the final fits (training + validation documents).
    pub vocabulary: Vocabulary,
    pub transform: TargetTransform,
    pub test_dates: Vec<NaiveDate>,
    pub test_actual: Vec<f64>,
    pub families: Vec<FamilyReport>,
    pub aggregate: Option<AggregateReport>,
}

impl ExperimentReport {
    pub fn family(&self, name: &str) -> Option<&FamilyReport> {
        self.families.iter().find(|f| f.family == name)
    }
}

fn encode(docs: &[Vec<String>], vocab: &Vocabulary, fit_on: &[Vec<String>], seq_len: usize, mode: IdMode) -> Result<Encoded> {
    let tf = fit_tfidf(fit_on, vocab)?;
    let tfidf = docs.iter().map(|d| tf.transform(d, vocab)).collect();
    let ids: Vec<Vec<u32>> = docs.iter().map(|d| to_ids(d, vocab, mode)).collect();
    Ok(Encoded {
        tfidf,
        ids: pad_batch(&ids, seq_len).rows,
    })
}

/// Keeps the words of `vocab` that are in `keep`, in vocabulary order.
fn restrict_to(vocab: &Vocabulary, keep: Option<&HashSet<&str>>) -> Result<Vocabulary> {
    match keep {
        None => Ok(vocab.clone()),
        Some(k) => {
            let words: Vec<&String> = vocab.words().iter().filter(|w| k.contains(w.as_str())).collect();
            if words.is_empty() {
                return Err(Error::EmptyVocab);
            }
            vocab.restrict(&words)
        }
    }
}

fn max_seq_len(docs: &[Vec<String>], vocab: &Vocabulary) -> usize {
    docs.iter()
        .map(|d| to_ids(d, vocab, IdMode::Training).len())
        .max()
        .unwrap_or(0)
        .max(1)
}

pub fn run_experiment(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.models.is_empty() {
        return Err(Error::Spec("no model family configured".into()));
    }
    if cfg.runs == 0 {
        return Err(Error::Spec("runs must be at least 1".into()));
    }
    let segments = split(data.series, &cfg.split)?;
    let (n_tr, n_va, n_te) = (segments.train.len(), segments.validation.len(), segments.test.len());
    let by_date: HashMap<NaiveDate, &Vec<String>> = data.documents.iter().map(|(d, t)| (*d, t)).collect();
    let missing = data.series.dates().iter().filter(|d| !by_date.contains_key(d)).count();
    if missing > 0 {
        log::warn!("{missing} series dates have no document; using empty documents");
    }
    let docs: Vec<Vec<String>> = data
        .series
        .dates()
        .iter()
        .map(|d| by_date.get(d).map(|t| (*t).clone()).unwrap_or_default())
        .collect();
    let (train_docs, rest) = docs.split_at(n_tr);
    let (val_docs, test_docs) = rest.split_at(n_va);
    let tv_docs = &docs[..n_tr + n_va];
    let tv_series = segments.train_validation();

    // final-phase target and vocabulary, also used by feature selection
    let final_target = TargetTransform::fit(&tv_series, cfg.detrend)?;
    let y_tv = final_target.forward(&tv_series);
    let vocab_full = Vocabulary::build(tv_docs, cfg.vocab_filter)?;

    let selection = match &cfg.selection {
        Some(sc) => {
            let tf = fit_tfidf(tv_docs, &vocab_full)?;
            let sc = SelectionConfig {
                seed: par::derive_seed(cfg.seed, 0x5e1),
                ..*sc
            };
            Some(select_features(&tf.rows, &y_tv, vocab_full.words(), &sc)?)
        }
        None => None,
    };
    let keep: Option<HashSet<&str>> = selection
        .as_ref()
        .map(|s| s.selected().iter().map(String::as_str).collect());

    // tuning phase: fitted on the training segment, scored on validation
    let tune_target = TargetTransform::fit(&segments.train, cfg.detrend)?;
    let y_tr = tune_target.forward(&segments.train);
    let y_va = tune_target.forward(&segments.validation);
    let vocab_tune = restrict_to(&Vocabulary::build(train_docs, cfg.vocab_filter)?, keep.as_ref())?;
    let s_tune = max_seq_len(train_docs, &vocab_tune);
    let enc_tr = encode(train_docs, &vocab_tune, train_docs, s_tune, IdMode::Training)?;
    let enc_va = encode(val_docs, &vocab_tune, train_docs, s_tune, IdMode::Inference)?;

    // final phase
    let vocab = restrict_to(&vocab_full, keep.as_ref())?;
    let s_final = max_seq_len(tv_docs, &vocab);
    let enc_tv = encode(tv_docs, &vocab, tv_docs, s_final, IdMode::Training)?;
    let enc_te = encode(test_docs, &vocab, tv_docs, s_final, IdMode::Inference)?;
    let test_actual = segments.test.values().to_vec();

    let mut families = Vec::with_capacity(cfg.models.len());
    for grid in &cfg.models {
        let cells = grid.cells();
        let tune_seed = par::derive_seed(cfg.seed, 0x7e57);
        let (result, epochs) = grid_search_with(&cells, |spec| {
            let fit = fit_spec(spec, (&enc_tr, &y_tr), Some((&enc_va, &y_va)), vocab_tune.len(), tune_seed, None)?;
            let pred = fit.model.predict(&enc_va)?;
            Ok((rmse(&y_va, &pred)?, fit.best_epoch))
        })?;
        let best = cells[result.best].clone();
        let epochs = epochs[result.best].flatten().map(|e| e + 1);

        let outs = par::map_indexed(cfg.runs, |r| -> Result<(RunOutput, FittedModel, Vec<EpochLoss>, Option<Vec<f64>>)> {
            let seed = cfg.seed.wrapping_add(r as u64);
            let fit = fit_spec(&best, (&enc_tv, &y_tv), None, vocab.len(), seed, epochs)?;
            let importance = match &fit.model {
                FittedModel::RandomForest(f) if f.params.bootstrap => {
                    Some(f.oob_importance(&enc_tv.tfidf, &y_tv, par::derive_seed(seed, 0x1a))?.normalized)
                }
                _ => None,
            };
            let scaled = fit.model.predict(&enc_te)?;
            let predictions = final_target.inverse(&segments.test, &scaled)?;
            let metrics = evaluate(&test_actual, &predictions, cfg.mape)?;
            Ok((
                RunOutput {
                    seed,
                    predictions,
                    metrics,
                },
                fit.model,
                fit.curve,
                importance,
            ))
        });
        let mut runs = Vec::with_capacity(cfg.runs);
        let mut models = Vec::with_capacity(cfg.runs);
        let mut loss_curves = Vec::new();
        let mut importances = Vec::new();
        for o in outs {
            let (run, model, curve, importance) = o?;
            importances.extend(importance);
            runs.push(run);
            models.push(model);
            if !curve.is_empty() {
                loss_curves.push(curve);
            }
        }
        let diagnostics = (n_te >= 8)
            .then(|| residual_diagnostics(&test_actual, &runs[0].predictions))
            .transpose()?;
        families.push(FamilyReport {
            family: grid.name().to_string(),
            validation_rmse: result.best_row().rmse.expect("winning cell has a score"),
            best,
            grid: result,
            epochs,
            summary: RunSummary::from_runs(runs)?,
            diagnostics,
            loss_curves,
            importances,
            models,
        });
    }

    let aggregate_report = if cfg.aggregate && families.len() >= 2 {
        let mut order: Vec<usize> = (0..families.len()).collect();
        order.sort_by(|&a, &b| families[a].validation_rmse.total_cmp(&families[b].validation_rmse));
        let (a, b) = (&families[order[0]], &families[order[1]]);
        let runs = a
            .summary
            .runs
            .iter()
            .zip(&b.summary.runs)
            .map(|(ra, rb)| {
                let predictions = aggregate(&ra.predictions, &rb.predictions)?;
                let metrics = evaluate(&test_actual, &predictions, cfg.mape)?;
                Ok(RunOutput {
                    seed: ra.seed,
                    predictions,
                    metrics,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(AggregateReport {
            members: (a.family.clone(), b.family.clone()),
            summary: RunSummary::from_runs(runs)?,
        })
    } else {
        None
    };

    Ok(ExperimentReport {
        split_lengths: (n_tr, n_va, n_te),
        selection,
        vocabulary: vocab,
        transform: final_target,
        test_dates: segments.test.dates().to_vec(),
        test_actual,
        families,
        aggregate: aggregate_report,
    })
}

/// Settings of the `embedding-analysis` preset: recurrent models retrained
/// on every available day with a larger vocabulary, kept only for their
/// word vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingAnalysisConfig {
    /// Most frequent words kept after filtering.
    pub vocab_size: usize,
    pub vocab_filter: VocabFilter,
    pub detrend: bool,
    pub embed_dim: usize,
    pub hidden: usize,
    pub dense: Vec<usize>,
    pub train: TrainConfig,
    pub runs: usize,
    pub seed: u64,
}

impl Default for EmbeddingAnalysisConfig {
    fn default() -> Self {
        EmbeddingAnalysisConfig {
            vocab_size: 300,
            vocab_filter: VocabFilter::default(),
            detrend: false,
            embed_dim: 20,
            hidden: 16,
            dense: vec![16],
            train: TrainConfig {
                epochs: 100,
                ..Default::default()
            },
            runs: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingAnalysis {
    pub vocabulary: Vocabulary,
    pub models: Vec<GruModel>,
    pub loss_curves: Vec<Vec<EpochLoss>>,
}

/// Trains `runs` recurrent models (seeds `seed + r`) on the whole series.
pub fn embedding_analysis(data: &ExperimentData, cfg: &EmbeddingAnalysisConfig) -> Result<EmbeddingAnalysis> {
    if cfg.runs == 0 {
        return Err(Error::Spec("runs must be at least 1".into()));
    }
    let by_date: HashMap<NaiveDate, &Vec<String>> = data.documents.iter().map(|(d, t)| (*d, t)).collect();
    let docs: Vec<Vec<String>> = data
        .series
        .dates()
        .iter()
        .map(|d| by_date.get(d).map(|t| (*t).clone()).unwrap_or_default())
        .collect();
    let y = TargetTransform::fit(data.series, cfg.detrend)?.forward(data.series);
    let filtered = Vocabulary::build(&docs, cfg.vocab_filter)?;
    let keep = cfg.vocab_size.min(filtered.len());
    if keep == 0 {
        return Err(Error::EmptyVocab);
    }
    let vocabulary = filtered.restrict(&filtered.words()[..keep])?;
    let ids: Vec<Vec<u32>> = docs.iter().map(|d| to_ids(d, &vocabulary, IdMode::Training)).collect();
    let ids = pad_batch(&ids, max_seq_len(&docs, &vocabulary)).rows;
    let arch = GruArch {
        vocab_size: vocabulary.len(),
        embed_dim: cfg.embed_dim,
        hidden: cfg.hidden,
        dense: cfg.dense.clone(),
    };
    let trained = par::map_indexed(cfg.runs, |r| {
        let seed = cfg.seed.wrapping_add(r as u64);
        let model = GruModel::new(arch.clone(), par::derive_seed(seed, 1));
        neural::train(model, (&ids, &y), None, &TrainConfig { seed, ..cfg.train })
    });
    let mut models = Vec::with_capacity(cfg.runs);
    let mut loss_curves = Vec::with_capacity(cfg.runs);
    for t in trained {
        let t = t?;
        models.push(t.model);
        loss_curves.push(t.curve);
    }
    Ok(EmbeddingAnalysis {
        vocabulary,
        models,
        loss_curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{preprocess, Stopwords};
    use crate::synth::{generate, SynthSpec};

    fn bundle(n_days: usize) -> (TimeSeries, Vec<(NaiveDate, Vec<String>)>, SplitSpec) {
        let spec = SynthSpec {
            n_days,
            ..Default::default()
        };
        let b = generate(&spec, 1).unwrap();
        let sw = Stopwords::english();
        let docs = b.documents.iter().map(|d| (d.date, preprocess(&d.text, &sw))).collect();
        (b.series, docs, spec.suggested_split())
    }

    fn config(split: SplitSpec) -> ExperimentConfig {
        ExperimentConfig {
            split,
            detrend: false,
            mape: MapeMode::Plain,
            vocab_filter: VocabFilter::default(),
            selection: None,
            models: vec![
                FamilyGrid::Lasso(LassoGrid { lambda: vec![1e-3, 1e-2] }),
                FamilyGrid::RandomForest(ForestGrid {
                    n_trees: vec![30],
                    ..Default::default()
                }),
            ],
            runs: 2,
            seed: 3,
            aggregate: true,
        }
    }

    #[test]
    fn lasso_and_forest_run_end_to_end() {
        let (series, docs, split) = bundle(600);
        let data = ExperimentData { series: &series, documents: &docs };
        let rep = run_experiment(&data, &config(split)).unwrap();
        assert_eq!(rep.split_lengths, (360, 120, 120));
        let lasso = rep.family("lasso").unwrap();
        assert!(lasso.std_is_zero());
        assert!(lasso.summary.mean.r2 > 0.5, "{:?}", lasso.summary.mean);
        let agg = rep.aggregate.as_ref().unwrap();
        assert_eq!(agg.summary.runs.len(), 2);
        assert_eq!(lasso.grid.leaderboard.len(), 2);
        assert!(rep.family("random_forest").unwrap().grid.leaderboard.len() == 2);
    }

    #[test]
    fn rerun_is_identical() {
        let (series, docs, split) = bundle(500);
        let data = ExperimentData { series: &series, documents: &docs };
        let mut cfg = config(split);
        cfg.selection = Some(SelectionConfig {
            repetitions: 2,
            scan_cap: 5,
            forest: ForestParams {
                n_trees: 20,
                ..Default::default()
            },
            seed: 0,
        });
        let a = run_experiment(&data, &cfg).unwrap();
        let b = run_experiment(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.vocabulary.len() <= 5);
    }

    #[test]
    fn embedding_preset_caps_vocabulary() {
        let (series, docs, _) = bundle(200);
        let data = ExperimentData { series: &series, documents: &docs };
        let cfg = EmbeddingAnalysisConfig {
            vocab_size: 30,
            embed_dim: 3,
            hidden: 3,
            dense: vec![],
            train: TrainConfig {
                epochs: 2,
                ..Default::default()
            },
            runs: 2,
            ..Default::default()
        };
        let a = embedding_analysis(&data, &cfg).unwrap();
        assert_eq!(a.vocabulary.len(), 30);
        assert_eq!(a.models.len(), 2);
        assert_ne!(a.models[0].params, a.models[1].params);
        assert!(a.loss_curves.iter().all(|c| c.len() == 2));
    }

    #[test]
    fn neural_families_retrain_for_tuned_epochs() {
        let (series, docs, split) = bundle(300);
        let data = ExperimentData { series: &series, documents: &docs };
        let mut cfg = config(split);
        let train = TrainGrid {
            epochs: 4,
            ..Default::default()
        };
        cfg.models = vec![
            FamilyGrid::Mlp(MlpGrid {
                hidden: vec![vec![8]],
                train: train.clone(),
            }),
            FamilyGrid::Gru(GruGrid {
                embed_dim: vec![4],
                hidden: vec![4],
                dense: vec![vec![]],
                train,
            }),
        ];
        cfg.runs = 1;
        let rep = run_experiment(&data, &cfg).unwrap();
        for f in &rep.families {
            let e = f.epochs.unwrap();
            assert!((1..=4).contains(&e));
            assert_eq!(f.loss_curves[0].len(), e);
        }
    }

    impl FamilyReport {
        fn std_is_zero(&self) -> bool {
            let s = self.summary.std;
            s.mape == 0.0 && s.rmse == 0.0 && s.mae == 0.0 && s.r2 == 0.0
        }
    }
}
