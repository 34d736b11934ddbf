//! A small synthetic corpus with three operations on it, exported to the
//! browser. Every export returns JSON text.

use serde::Serialize;
use textcast::corpus::{preprocess, Stopwords, VocabFilter, Vocabulary};
use textcast::encode::{fit_tfidf, TfIdfMatrix};
use textcast::forest::{fit_forest, ForestModel, ForestParams};
use textcast::linmod::{fit_lasso_path, lambda_grid, lambda_max, LassoConfig, LassoModel};
use textcast::synth::{generate, oracle_predict, GroundTruth, SynthSpec};
use wasm_bindgen::prelude::*;

pub const DEFAULT_DAYS: usize = 500;
const PATH_STEPS: usize = 40;
const PATH_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weight {
    pub word: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Encoding {
    pub tokens: Vec<String>,
    /// Tokens kept by the vocabulary.
    pub known: Vec<String>,
    /// Non-zero TF-IDF entries, largest first.
    pub weights: Vec<Weight>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStep {
    pub lambda: f64,
    pub nonzero: usize,
    /// Non-zero coefficients by decreasing magnitude.
    pub coefficients: Vec<Weight>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forecast {
    pub forest: f64,
    /// Value the generator would assign before noise.
    pub truth: f64,
    pub known_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub days: usize,
    pub vocabulary: usize,
    pub base_level: f64,
    pub sample: Vec<String>,
}

#[wasm_bindgen]
pub struct Demo {
    stopwords: Stopwords,
    vocab: Vocabulary,
    tfidf: TfIdfMatrix,
    path: Vec<LassoModel>,
    forest: ForestModel,
    truth: GroundTruth,
    base_level: f64,
    sample: Vec<String>,
}

fn to_js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo values serialize")
}

impl Demo {
    pub fn build(seed: u64, days: usize, n_trees: usize) -> textcast::Result<Demo> {
        let spec = SynthSpec {
            n_days: days,
            seed,
            ..SynthSpec::default()
        };
        spec.validate()?;
        let bundle = generate(&spec, seed)?;
        let stopwords = Stopwords::english();
        let docs: Vec<Vec<String>> = bundle.documents.iter().map(|d| preprocess(&d.text, &stopwords)).collect();
        let vocab = Vocabulary::build(&docs, VocabFilter::default())?;
        let tfidf = fit_tfidf(&docs, &vocab)?;
        let y = bundle.series.values();
        let lambdas = lambda_grid(lambda_max(&tfidf.rows, y)?, PATH_STEPS, PATH_RATIO);
        let path = fit_lasso_path(&tfidf.rows, y, &lambdas, &LassoConfig::default())?;
        let params = ForestParams {
            n_trees,
            min_leaf: 5,
            ..ForestParams::default()
        };
        let forest = fit_forest(&tfidf.rows, y, &params, seed)?;
        let sample = bundle.documents.iter().take(5).map(|d| d.text.clone()).collect();
        Ok(Demo {
            stopwords,
            vocab,
            tfidf,
            path,
            forest,
            truth: bundle.ground_truth,
            base_level: spec.base_level,
            sample,
        })
    }

    pub fn summary(&self) -> Summary {
        Summary {
            days: self.tfidf.n_docs,
            vocabulary: self.vocab.len(),
            base_level: self.base_level,
            sample: self.sample.clone(),
        }
    }

    pub fn encoding(&self, text: &str) -> Encoding {
        let tokens = preprocess(text, &self.stopwords);
        let known = tokens.iter().filter(|t| self.vocab.id(t).is_some()).cloned().collect();
        let row = self.tfidf.transform(&tokens, &self.vocab);
        Encoding {
            tokens,
            known,
            weights: by_magnitude(self.vocab.words(), &row),
        }
    }

    pub fn path_len(&self) -> usize {
        self.path.len()
    }

    /// Step `i` of the path, from the largest penalty (`i = 0`) down.
    pub fn path_step(&self, i: usize) -> Option<PathStep> {
        self.path.get(i).map(|m| PathStep {
            lambda: m.lambda,
            nonzero: m.nonzero(),
            coefficients: by_magnitude(self.vocab.words(), &m.beta),
        })
    }

    pub fn forecast(&self, text: &str) -> textcast::Result<Forecast> {
        let tokens = preprocess(text, &self.stopwords);
        let row = self.tfidf.transform(&tokens, &self.vocab);
        Ok(Forecast {
            forest: self.forest.predict(&row)?,
            truth: oracle_predict(&tokens, &self.truth, self.base_level),
            known_words: tokens.iter().filter(|t| self.vocab.id(t).is_some()).count(),
        })
    }
}

fn by_magnitude(words: &[String], values: &[f64]) -> Vec<Weight> {
    let mut out: Vec<Weight> = words
        .iter()
        .zip(values)
        .filter(|(_, v)| **v != 0.0)
        .map(|(w, v)| Weight {
            word: w.clone(),
            value: *v,
        })
        .collect();
    out.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()).then_with(|| a.word.cmp(&b.word)));
    out
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, days: u32, n_trees: u32) -> Result<Demo, JsError> {
        Demo::build(seed as u64, days as usize, n_trees as usize).map_err(to_js)
    }

    #[wasm_bindgen(js_name = summaryJson)]
    pub fn summary_json(&self) -> String {
        json(&self.summary())
    }

    #[wasm_bindgen(js_name = encodeJson)]
    pub fn encode_json(&self, text: &str) -> String {
        json(&self.encoding(text))
    }

    #[wasm_bindgen(js_name = pathLength)]
    pub fn path_length(&self) -> usize {
        self.path_len()
    }

    #[wasm_bindgen(js_name = pathStepJson)]
    pub fn path_step_json(&self, i: usize) -> Result<String, JsError> {
        self.path_step(i)
            .map(|s| json(&s))
            .ok_or_else(|| JsError::new(&format!("step {i} is outside the path")))
    }

    #[wasm_bindgen(js_name = forecastJson)]
    pub fn forecast_json(&self, text: &str) -> Result<String, JsError> {
        self.forecast(text).map(|f| json(&f)).map_err(to_js)
    }
}
