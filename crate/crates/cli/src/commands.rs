use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use textcast::corpus::{load_documents, preprocess, write_documents, RawDocument, Stopwords, Vocabulary};
use textcast::interpret::{
    lasso_word_effects, log_norm_ranking, nearest_words, norm_ranking, rf_word_importance, selection_overlap,
    write_reports, EmbeddingMatrix, Neighbours, RunImportance, SignedEffects, VennCounts, WordReport,
};
use textcast::neural::write_loss_curve;
use textcast::neural::EpochLoss;
use textcast::pipeline::{
    embedding_analysis, run_experiment, EmbeddingAnalysisConfig, ExperimentConfig, ExperimentData,
    ExperimentReport, FittedModel, Metrics, RunSummary,
};
use textcast::series::{load_series, TimeSeries, Unit};
use textcast::synth::{generate, SynthSpec, DOCUMENTS_FILE, GROUND_TRUTH_FILE, SERIES_FILE, SPEC_FILE};

use crate::config::{DataConfig, Mode, RunConfig};
use crate::manifest::{config_hash, hash_file, FileEntry, RunManifest, Seeds};
use crate::output::{file_stem, OutputDir};
use crate::{CliError, IngestArgs, InterpretArgs, RunArgs, SynthArgs};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_SUMMARY_FILE: &str = "metrics_summary.csv";
pub const MODELS_DIR: &str = "models";

/// Description of a normalized data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleInfo {
    pub unit: Unit,
    pub n_days: usize,
    pub n_documents: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub days_with_document: usize,
    /// Hash of the series file bytes followed by the document file bytes.
    pub content_hash: String,
}

/// Maps library load errors to input errors (exit code 2).
fn load_err(path: &Path) -> impl FnOnce(textcast::Error) -> CliError + '_ {
    move |e| match e {
        textcast::Error::Io { source, .. } => CliError::input(path, source),
        other => CliError::bad_input(path, other),
    }
}

fn write_bundle(
    out: &mut OutputDir,
    series: &TimeSeries,
    docs: &[RawDocument],
) -> Result<BundleInfo, CliError> {
    out.write_with(SERIES_FILE, |w| series.write_csv(w))?;
    out.write_with(DOCUMENTS_FILE, |w| write_documents(docs, w))?;
    let read = |name: &str| {
        let p = out.root().join(name);
        std::fs::read(&p).map_err(|e| CliError::input(&p, e))
    };
    let mut bytes = read(SERIES_FILE)?;
    bytes.extend(read(DOCUMENTS_FILE)?);
    let dates: std::collections::HashSet<NaiveDate> = docs.iter().map(|d| d.date).collect();
    let info = BundleInfo {
        unit: series.unit(),
        n_days: series.len(),
        n_documents: docs.len(),
        first_date: series.first_date().expect("non-empty series"),
        last_date: series.last_date().expect("non-empty series"),
        days_with_document: series.dates().iter().filter(|d| dates.contains(d)).count(),
        content_hash: crate::manifest::sha256_hex(&bytes),
    };
    out.write_json(BUNDLE_FILE, &info)?;
    Ok(info)
}

pub fn ingest(a: &IngestArgs, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let unit: Unit = a.unit.parse().map_err(|e: textcast::Error| CliError::Usage(e.to_string()))?;
    let series = load_series(&a.series, &a.date_field, &a.value_field, unit).map_err(load_err(&a.series))?;
    let docs = load_documents(&a.documents).map_err(load_err(&a.documents))?;
    let inputs = vec![hash_file(&a.series)?, hash_file(&a.documents)?];
    let mut dir = OutputDir::create(out)?;
    let info = write_bundle(&mut dir, &series, &docs)?;
    if info.days_with_document < info.n_days {
        log::warn!("{} of {} days have no document", info.n_days - info.days_with_document, info.n_days);
    }
    let settings = json!({"date_field": a.date_field, "value_field": a.value_field, "unit": unit});
    let hash = config_hash(&settings, &inputs);
    RunManifest::finish("ingest", hash, Seeds { base: 0, runs: vec![] }, inputs, &mut dir, started)?;
    println!("bundle: {} days, {} documents, hash {}", info.n_days, info.n_documents, info.content_hash);
    Ok(())
}

fn read_synth_spec(path: &Path) -> Result<SynthSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let spec: SynthSpec = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    Ok(spec)
}

pub fn synth(a: &SynthArgs, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let mut spec = match &a.spec {
        Some(p) => read_synth_spec(p)?,
        None => SynthSpec::default(),
    };
    spec.seed = seed.unwrap_or(spec.seed);
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let bundle = generate(&spec, spec.seed).map_err(CliError::runtime("synth"))?;
    let mut dir = OutputDir::create(out)?;
    let info = write_bundle(&mut dir, &bundle.series, &bundle.documents)?;
    dir.write_with(GROUND_TRUTH_FILE, |w| bundle.ground_truth.write_csv(w))?;
    dir.write_json(SPEC_FILE, &bundle.spec)?;
    let inputs = a.spec.as_deref().map(hash_file).transpose()?.into_iter().collect::<Vec<_>>();
    let hash = config_hash(&bundle.spec, &inputs);
    let seeds = Seeds {
        base: spec.seed,
        runs: vec![spec.seed],
    };
    RunManifest::finish("synth", hash, seeds, inputs, &mut dir, started)?;
    println!("synthetic bundle: {} days, hash {}", info.n_days, info.content_hash);
    Ok(())
}

/// Series, documents and the input files they came from.
fn load_data(cfg: &RunConfig) -> Result<(TimeSeries, Vec<RawDocument>, Vec<FileEntry>), CliError> {
    match &cfg.data {
        DataConfig::Bundle { path } => {
            let info_path = path.join(BUNDLE_FILE);
            let unit = match std::fs::read_to_string(&info_path) {
                Ok(text) => {
                    let info: BundleInfo = serde_json::from_str(&text).map_err(|e| CliError::bad_input(&info_path, e))?;
                    info.unit
                }
                Err(_) => Unit::Dimensionless,
            };
            let (sp, dp) = (path.join(SERIES_FILE), path.join(DOCUMENTS_FILE));
            let series = load_series(&sp, "date", "value", unit).map_err(load_err(&sp))?;
            let docs = load_documents(&dp).map_err(load_err(&dp))?;
            Ok((series, docs, vec![hash_file(&sp)?, hash_file(&dp)?]))
        }
        DataConfig::Files {
            series,
            documents,
            date_field,
            value_field,
            unit,
        } => {
            let unit: Unit = unit
                .as_deref()
                .unwrap_or("none")
                .parse()
                .map_err(|e: textcast::Error| CliError::Config(format!("data.unit: {e}")))?;
            let s = load_series(series, date_field, value_field, unit).map_err(load_err(series))?;
            let d = load_documents(documents).map_err(load_err(documents))?;
            Ok((s, d, vec![hash_file(series)?, hash_file(documents)?]))
        }
        DataConfig::Synth { spec } => {
            let mut s = match spec {
                Some(p) => read_synth_spec(p)?,
                None => SynthSpec::default(),
            };
            s.seed = cfg.seed;
            s.validate().map_err(|e| CliError::Config(format!("data.spec: {e}")))?;
            let b = generate(&s, s.seed).map_err(CliError::runtime("synth"))?;
            let inputs = spec.as_deref().map(hash_file).transpose()?.into_iter().collect();
            Ok((b.series, b.documents, inputs))
        }
    }
}

fn stopwords(cfg: &RunConfig) -> Result<Stopwords, CliError> {
    if let Some(p) = &cfg.text.stopwords {
        return Stopwords::load(p).map_err(load_err(p));
    }
    let lang = cfg.text.language.as_deref().unwrap_or("en");
    Stopwords::builtin(lang).ok_or_else(|| CliError::Config(format!("text.language: no built-in stopwords for `{lang}`")))
}

/// Models kept for later word-level reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub family: String,
    pub vocabulary: Vocabulary,
    /// Empty for forests, whose reports only need the importances.
    pub models: Vec<FittedModel>,
    pub importances: Vec<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Artifacts {
    pub lasso: Option<ModelArtifact>,
    pub forest: Option<ModelArtifact>,
    pub gru: Option<ModelArtifact>,
}

const ARTIFACT_FAMILIES: [&str; 3] = ["lasso", "random_forest", "gru"];

impl Artifacts {
    fn slot(&mut self, family: &str) -> Option<&mut Option<ModelArtifact>> {
        match family {
            "lasso" => Some(&mut self.lasso),
            "random_forest" => Some(&mut self.forest),
            "gru" => Some(&mut self.gru),
            _ => None,
        }
    }

    fn iter(&self) -> impl Iterator<Item = &ModelArtifact> {
        [&self.lasso, &self.forest, &self.gru].into_iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }

    pub fn from_report(report: &ExperimentReport) -> Self {
        let mut a = Artifacts::default();
        for f in &report.families {
            if let Some(slot) = a.slot(&f.family) {
                let models = if f.family == "random_forest" { vec![] } else { f.models.clone() };
                *slot = Some(ModelArtifact {
                    family: f.family.clone(),
                    vocabulary: report.vocabulary.clone(),
                    models,
                    importances: f.importances.clone(),
                });
            }
        }
        a
    }

    pub fn save(&self, out: &mut OutputDir) -> Result<(), CliError> {
        for art in self.iter() {
            out.write_json(&format!("{MODELS_DIR}/{}.json", art.family), art)?;
        }
        Ok(())
    }

    /// Reads `models/<family>.json` for every family present.
    pub fn load(dir: &Path) -> Result<(Self, Vec<FileEntry>), CliError> {
        let mut a = Artifacts::default();
        let mut inputs = vec![];
        for family in ARTIFACT_FAMILIES {
            let path = dir.join(MODELS_DIR).join(format!("{family}.json"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::input(&path, e))?;
            let art: ModelArtifact = serde_json::from_str(&text).map_err(|e| CliError::bad_input(&path, e))?;
            inputs.push(hash_file(&path)?);
            *a.slot(family).expect("known family") = Some(art);
        }
        if a.is_empty() {
            return Err(CliError::Input {
                path: dir.join(MODELS_DIR),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no model artifacts"),
            });
        }
        Ok((a, inputs))
    }

    pub fn embeddings(&self) -> Result<Vec<EmbeddingMatrix>, CliError> {
        let Some(art) = &self.gru else { return Ok(vec![]) };
        art.models
            .iter()
            .filter_map(|m| match m {
                FittedModel::Gru(g) => Some(g),
                _ => None,
            })
            .map(|g| EmbeddingMatrix::from_model(g, &art.vocabulary).map_err(CliError::runtime("interpret")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpretSummary {
    pub rf_importance: Vec<WordReport>,
    pub lasso_effects: Option<SignedEffects>,
    pub norm_ranking: Vec<WordReport>,
    pub neighbours: Vec<Neighbours>,
    pub venn_k: Option<usize>,
    pub venn: Option<VennCounts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpretRequest<'a> {
    pub top_k: usize,
    pub venn_k: usize,
    pub queries: &'a [String],
    pub probes: &'a [String],
}

/// Words by decreasing `|β|`, ties by word, zero coefficients included.
fn lasso_order(model: &textcast::linmod::LassoModel, words: &[String]) -> Vec<String> {
    let mut order: Vec<(&String, f64)> = words.iter().zip(model.beta.iter().map(|b| b.abs())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    order.into_iter().map(|(w, _)| w.clone()).collect()
}

fn lookup_as_usage(e: textcast::Error) -> CliError {
    match e {
        textcast::Error::Lookup(w) => CliError::Usage(format!("word `{w}` is not in the model vocabulary")),
        other => CliError::runtime("interpret")(other),
    }
}

/// Writes every report the artifacts allow under `prefix`.
pub fn interpret_reports(
    art: &Artifacts,
    req: &InterpretRequest,
    out: &mut OutputDir,
    prefix: &str,
) -> Result<InterpretSummary, CliError> {
    let mut summary = InterpretSummary {
        rf_importance: vec![],
        lasso_effects: None,
        norm_ranking: vec![],
        neighbours: vec![],
        venn_k: None,
        venn: None,
    };

    let mut rf_list = None;
    if let Some(f) = art.forest.as_ref().filter(|f| !f.importances.is_empty()) {
        let words = f.vocabulary.words();
        let runs: Vec<RunImportance> = f
            .importances
            .iter()
            .map(|imp| RunImportance {
                words: words.to_vec(),
                importance: imp.clone(),
            })
            .collect();
        let full = rf_word_importance(&runs, words.len()).map_err(CliError::runtime("interpret"))?;
        summary.rf_importance = full[..req.top_k.min(full.len())].to_vec();
        out.write_with(&format!("{prefix}rf_importance.csv"), |w| write_reports(&summary.rf_importance, "importance", w))?;
        rf_list = Some(full.into_iter().map(|r| r.word).collect::<Vec<_>>());
    }

    let mut lasso_list = None;
    if let Some(Some(FittedModel::Lasso(m))) = art.lasso.as_ref().map(|l| l.models.first()) {
        let words = art.lasso.as_ref().expect("checked").vocabulary.words();
        let effects = lasso_word_effects(m, words, req.top_k).map_err(CliError::runtime("interpret"))?;
        out.write_with(&format!("{prefix}lasso_positive.csv"), |w| write_reports(&effects.positive, "coefficient", w))?;
        out.write_with(&format!("{prefix}lasso_negative.csv"), |w| write_reports(&effects.negative, "coefficient", w))?;
        summary.lasso_effects = Some(effects);
        lasso_list = Some(lasso_order(m, words));
    }

    let embeddings = art.embeddings()?;
    let mut norm_list = None;
    if !embeddings.is_empty() {
        for (r, e) in embeddings.iter().enumerate() {
            out.write_with(&format!("{prefix}embeddings/run{r}.csv"), |w| e.write_csv(w))?;
        }
        let v = embeddings[0].words.len();
        let full = norm_ranking(&embeddings, v).map_err(CliError::runtime("interpret"))?;
        summary.norm_ranking = full[..req.top_k.min(v)].to_vec();
        out.write_with(&format!("{prefix}norm_ranking.csv"), |w| write_reports(&summary.norm_ranking, "norm", w))?;
        let logs = log_norm_ranking(&embeddings, v).map_err(CliError::runtime("interpret"))?;
        out.write_with(&format!("{prefix}log_norm.csv"), |w| write_reports(&logs, "log_norm", w))?;
        norm_list = Some(full.into_iter().map(|r| r.word).collect::<Vec<_>>());

        let probes: Vec<&str> = req.probes.iter().map(String::as_str).collect();
        for q in req.queries {
            let n = nearest_words(q, &embeddings, req.top_k, &probes).map_err(lookup_as_usage)?;
            out.write_with(&format!("{prefix}neighbours_{}.csv", file_stem(q)), |w| n.write_table(w))?;
            summary.neighbours.push(n);
        }
    } else if !req.queries.is_empty() {
        return Err(CliError::Usage("neighbour queries need a gru model artifact".into()));
    }

    if let (Some(a), Some(b), Some(c)) = (&rf_list, &lasso_list, &norm_list) {
        let k = req.venn_k.min(a.len()).min(b.len()).min(c.len());
        if k < req.venn_k {
            log::warn!("overlap computed on the top {k} words: the vocabulary is smaller than {}", req.venn_k);
        }
        let venn = selection_overlap(a, b, c, k).map_err(CliError::runtime("interpret"))?;
        out.write_with(&format!("{prefix}venn.csv"), |w| venn.write_csv(w))?;
        summary.venn_k = Some(k);
        summary.venn = Some(venn);
    }
    out.write_json(&format!("{prefix}summary.json"), &summary)?;
    Ok(summary)
}

fn metric_cells(m: &Metrics) -> [String; 4] {
    [m.mape.to_string(), m.rmse.to_string(), m.mae.to_string(), m.r2.to_string()]
}

fn summary_row(name: &str, s: &RunSummary) -> Vec<String> {
    let mut row = vec![name.to_string(), s.runs.len().to_string()];
    for (m, d) in metric_cells(&s.mean).into_iter().zip(metric_cells(&s.std)) {
        row.push(m);
        row.push(d);
    }
    row
}

fn export_forecast(report: &ExperimentReport, out: &mut OutputDir) -> Result<(), CliError> {
    let mut summaries: Vec<(String, &RunSummary)> =
        report.families.iter().map(|f| (f.family.clone(), &f.summary)).collect();
    if let Some(a) = &report.aggregate {
        summaries.push(("aggregate".into(), &a.summary));
    }

    let rows: Vec<Vec<String>> = summaries
        .iter()
        .flat_map(|(name, s)| {
            s.runs.iter().enumerate().map(move |(r, run)| {
                let mut row = vec![name.clone(), r.to_string(), run.seed.to_string()];
                row.extend(metric_cells(&run.metrics));
                row
            })
        })
        .collect();
    out.write_csv(METRICS_FILE, &["family", "run", "seed", "mape", "rmse", "mae", "r2"], &rows)?;
    let rows: Vec<Vec<String>> = summaries.iter().map(|(n, s)| summary_row(n, s)).collect();
    out.write_csv(
        METRICS_SUMMARY_FILE,
        &["family", "runs", "mape_mean", "mape_std", "rmse_mean", "rmse_std", "mae_mean", "mae_std", "r2_mean", "r2_std"],
        &rows,
    )?;

    for (name, s) in &summaries {
        let mut header = vec!["date".to_string(), "actual".to_string()];
        header.extend((0..s.runs.len()).map(|r| format!("run{r}")));
        let rows: Vec<Vec<String>> = report
            .test_dates
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut row = vec![d.to_string(), report.test_actual[i].to_string()];
                row.extend(s.runs.iter().map(|run| run.predictions[i].to_string()));
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.write_csv(&format!("predictions_{name}.csv"), &header, &rows)?;
    }

    for f in &report.families {
        let rows: Vec<Vec<String>> = f
            .grid
            .leaderboard
            .iter()
            .map(|row| {
                vec![
                    row.cell.to_string(),
                    row.rmse.map(|v| v.to_string()).unwrap_or_default(),
                    row.error.clone().unwrap_or_default(),
                    serde_json::to_string(&row.config).expect("spec serializes"),
                ]
            })
            .collect();
        out.write_csv(&format!("leaderboard_{}.csv", f.family), &["cell", "validation_rmse", "error", "config"], &rows)?;
        if let Some(d) = &f.diagnostics {
            let rows: Vec<Vec<String>> = d.qq_points.iter().map(|(t, s)| vec![t.to_string(), s.to_string()]).collect();
            out.write_csv(&format!("qq_{}.csv", f.family), &["theoretical", "sample"], &rows)?;
        }
        if !f.loss_curves.is_empty() {
            write_curves(out, &format!("loss_{}.csv", f.family), &f.loss_curves)?;
        }
    }

    if let Some(sel) = &report.selection {
        out.write_with("selection_curve.csv", |w| sel.write_curve(w))?;
        let rows: Vec<Vec<String>> = sel
            .ranked_words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                vec![
                    (i + 1).to_string(),
                    w.clone(),
                    sel.importance_mean[i].to_string(),
                    sel.importance_std[i].to_string(),
                ]
            })
            .collect();
        out.write_csv("selection_ranking.csv", &["rank", "word", "importance_mean", "importance_std"], &rows)?;
    }

    let families: Vec<_> = report
        .families
        .iter()
        .map(|f| {
            json!({
                "family": f.family,
                "best": f.best,
                "validation_rmse": f.validation_rmse,
                "epochs": f.epochs,
                "mean": f.summary.mean,
                "std": f.summary.std,
                "diagnostics": f.diagnostics.as_ref().map(|d| json!({
                    "n": d.n,
                    "mean": d.mean,
                    "std": d.std,
                    "ks_statistic": d.ks_statistic,
                    "ks_p_value": d.ks_p_value,
                    "ks_reject_5pct": d.ks_reject_5pct,
                    "degenerate": d.degenerate,
                    "lag1_autocorr": d.lag1_autocorr,
                })),
            })
        })
        .collect();
    let (n_tr, n_va, n_te) = report.split_lengths;
    let doc = json!({
        "split": {"train": n_tr, "validation": n_va, "test": n_te},
        "vocabulary_size": report.vocabulary.len(),
        "vocabulary_fingerprint": report.vocabulary.fingerprint(),
        "transform": report.transform,
        "selection": report.selection.as_ref().map(|s| json!({"v_star": s.v_star, "selected": s.selected()})),
        "families": families,
        "aggregate": report.aggregate.as_ref().map(|a| json!({
            "members": [a.members.0, a.members.1],
            "mean": a.summary.mean,
            "std": a.summary.std,
        })),
    });
    out.write_json("report.json", &doc)
}

fn write_curves(out: &mut OutputDir, rel: &str, curves: &[Vec<EpochLoss>]) -> Result<(), CliError> {
    if curves.len() == 1 {
        return out.write_with(rel, |w| write_loss_curve(&curves[0], w));
    }
    let rows: Vec<Vec<String>> = curves
        .iter()
        .enumerate()
        .flat_map(|(r, c)| {
            c.iter().map(move |e| {
                vec![
                    r.to_string(),
                    e.epoch.to_string(),
                    e.train_mse.to_string(),
                    e.validation_mse.map(|v| v.to_string()).unwrap_or_default(),
                ]
            })
        })
        .collect();
    out.write_csv(rel, &["run", "epoch", "train_mse", "validation_mse"], &rows)
}

fn print_summary(path: &Path) {
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

pub fn run(a: &RunArgs, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (series, raw_docs, inputs) = load_data(&cfg)?;
    let sw = stopwords(&cfg)?;
    let documents: Vec<(NaiveDate, Vec<String>)> = raw_docs.iter().map(|d| (d.date, preprocess(&d.text, &sw))).collect();
    let data = ExperimentData {
        series: &series,
        documents: &documents,
    };
    let mut dir = OutputDir::create(out)?;
    let req = InterpretRequest {
        top_k: cfg.interpret.top_k,
        venn_k: cfg.interpret.venn_k,
        queries: &cfg.interpret.queries,
        probes: &cfg.interpret.probes,
    };

    let runs = match cfg.mode {
        Mode::Forecast => {
            let exp = ExperimentConfig {
                split: cfg.split.resolve(&series)?,
                detrend: cfg.experiment.detrend,
                mape: cfg.experiment.mape,
                vocab_filter: cfg.vocab,
                selection: cfg.selection,
                models: cfg.models.clone(),
                runs: cfg.experiment.runs,
                seed: cfg.seed,
                aggregate: cfg.experiment.aggregate,
            };
            let report = run_experiment(&data, &exp).map_err(CliError::runtime("experiment"))?;
            export_forecast(&report, &mut dir)?;
            let art = Artifacts::from_report(&report);
            art.save(&mut dir)?;
            interpret_reports(&art, &req, &mut dir, "interpret/")?;
            exp.runs
        }
        Mode::EmbeddingAnalysis => {
            let ecfg = EmbeddingAnalysisConfig {
                seed: cfg.seed,
                ..cfg.embedding.clone()
            };
            let ana = embedding_analysis(&data, &ecfg).map_err(CliError::runtime("embedding-analysis"))?;
            write_curves(&mut dir, "loss_gru.csv", &ana.loss_curves)?;
            let art = Artifacts {
                gru: Some(ModelArtifact {
                    family: "gru".into(),
                    vocabulary: ana.vocabulary,
                    models: ana.models.into_iter().map(FittedModel::Gru).collect(),
                    importances: vec![],
                }),
                ..Default::default()
            };
            art.save(&mut dir)?;
            interpret_reports(&art, &req, &mut dir, "interpret/")?;
            ecfg.runs
        }
    };

    let hash = config_hash(&cfg, &inputs);
    let seeds = Seeds {
        base: cfg.seed,
        runs: (0..runs as u64).map(|r| cfg.seed.wrapping_add(r)).collect(),
    };
    RunManifest::finish("run", hash, seeds, inputs, &mut dir, started)?;
    print_summary(&dir.root().join(METRICS_SUMMARY_FILE));
    Ok(())
}

pub fn interpret(a: &InterpretArgs, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let (art, inputs) = Artifacts::load(&a.artifacts)?;
    let mut dir = OutputDir::create(out)?;
    let req = InterpretRequest {
        top_k: a.top_k,
        venn_k: a.venn_k,
        queries: &a.queries,
        probes: &a.probes,
    };
    let summary = interpret_reports(&art, &req, &mut dir, "")?;
    let settings = json!({"top_k": a.top_k, "venn_k": a.venn_k, "queries": a.queries, "probes": a.probes});
    let hash = config_hash(&settings, &inputs);
    RunManifest::finish("interpret", hash, Seeds { base: 0, runs: vec![] }, inputs, &mut dir, started)?;
    for n in &summary.neighbours {
        println!("{}: {}", n.query.word, n.neighbours.iter().map(|r| format!("{} {:.3}", r.word, r.score)).collect::<Vec<_>>().join(", "));
    }
    if let Some(v) = summary.venn {
        println!("overlap of top {}: {} words shared by all three lists", summary.venn_k.unwrap_or(0), v.all);
    }
    Ok(())
}
