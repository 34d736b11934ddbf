//! Word-level reports on fitted models: forest importances, signed LASSO
//! coefficients, cosine neighbourhoods and norms of learned word vectors,
//! and the overlap of three top-k word lists.
//!
//! Scores from several independently trained models are summarized per word
//! (mean and sample standard deviation). Embeddings are never averaged with
//! each other since each run lives in its own basis; only distances and
//! norms are.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::linmod::LassoModel;
use crate::neural::GruModel;
use crate::pipeline::mean_std;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordReport {
    pub word: String,
    /// Importance, coefficient, distance or norm depending on the report.
    pub score: f64,
    pub rank: usize,
    pub std: f64,
}

pub fn write_reports<W: Write>(reports: &[WordReport], score_name: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "word", score_name, "std"])?;
    for r in reports {
        w.write_record([r.rank.to_string(), r.word.clone(), r.score.to_string(), r.std.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 − a·b / (‖a‖ ‖b‖)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Word vectors of one trained model, padding row excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub words: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingMatrix {
    pub fn new(words: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if words.len() != vectors.len() {
            return Err(Error::Shape {
                expected: words.len(),
                got: vectors.len(),
            });
        }
        Ok(EmbeddingMatrix { words, vectors })
    }

    pub fn from_model(model: &GruModel, vocab: &Vocabulary) -> Result<Self> {
        if model.arch.vocab_size != vocab.len() {
            return Err(Error::Spec(format!(
                "model has {} word rows but the vocabulary has {} words",
                model.arch.vocab_size,
                vocab.len()
            )));
        }
        let vectors = (1..=vocab.len()).map(|id| model.word_vector(id).to_vec()).collect();
        Self::new(vocab.words().to_vec(), vectors)
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.words.iter().position(|w| w == word).map(|i| self.vectors[i].as_slice())
    }

    /// `word,v1,...,vq` rows for external projection tools.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let q = self.vectors.first().map_or(0, Vec::len);
        let mut header = vec!["word".to_string()];
        header.extend((1..=q).map(|j| format!("v{j}")));
        w.write_record(&header)?;
        for (word, v) in self.words.iter().zip(&self.vectors) {
            let mut rec = vec![word.clone()];
            rec.extend(v.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<embedding>", e))?;
        Ok(())
    }
}

fn check_same_words(embeddings: &[EmbeddingMatrix]) -> Result<&[String]> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::Spec("at least one embedding is required".into()))?;
    if embeddings.iter().any(|e| e.words != first.words) {
        return Err(Error::Spec("embeddings were trained on different vocabularies".into()));
    }
    Ok(&first.words)
}

/// Sorts `(word, mean, std)` by mean (ascending or descending), ties by word,
/// keeps `k` and assigns ranks from 1.
fn ranked(mut rows: Vec<(String, f64, f64)>, descending: bool, k: usize) -> Vec<WordReport> {
    rows.sort_by(|a, b| {
        let ord = if descending { b.1.total_cmp(&a.1) } else { a.1.total_cmp(&b.1) };
        ord.then_with(|| a.0.cmp(&b.0))
    });
    rows.into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (word, score, std))| WordReport {
            word,
            score,
            rank: i + 1,
            std,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbours {
    /// The query word itself, distance 0, rank 0.
    pub query: WordReport,
    /// Closest other words, ranks `1..=k`.
    pub neighbours: Vec<WordReport>,
    /// Distances to the requested probe words.
    pub probes: Vec<WordReport>,
}

impl Neighbours {
    /// Word, mean cosine distance and standard deviation: the query first,
    /// then the neighbours, then the probes.
    pub fn write_table<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["word", "mean_dcos", "std", "kind"])?;
        let rows = std::iter::once((&self.query, "query"))
            .chain(self.neighbours.iter().map(|r| (r, "neighbour")))
            .chain(self.probes.iter().map(|r| (r, "probe")));
        for (r, kind) in rows {
            w.write_record([r.word.clone(), format!("{:.3}", r.score), format!("{:.3}", r.std), kind.into()])?;
        }
        w.flush().map_err(|e| Error::io("<neighbours>", e))?;
        Ok(())
    }
}

/// The `k` words closest to `word` by cosine distance, averaged per word
/// pair over the given embeddings.
pub fn nearest_words(word: &str, embeddings: &[EmbeddingMatrix], k: usize, probes: &[&str]) -> Result<Neighbours> {
    let words = check_same_words(embeddings)?;
    let qi = words
        .iter()
        .position(|w| w == word)
        .ok_or_else(|| Error::Lookup(word.to_string()))?;
    let distance_stats = |j: usize| -> Result<(f64, f64)> {
        let d = embeddings
            .iter()
            .map(|e| cosine_distance(&e.vectors[qi], &e.vectors[j]))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_std(&d))
    };
    let mut rows = Vec::with_capacity(words.len());
    for (j, w) in words.iter().enumerate() {
        if j != qi {
            let (m, s) = distance_stats(j)?;
            rows.push((w.clone(), m, s));
        }
    }
    let probes = probes
        .iter()
        .map(|p| {
            let j = words
                .iter()
                .position(|w| w == p)
                .ok_or_else(|| Error::Lookup(p.to_string()))?;
            let (m, s) = distance_stats(j)?;
            let rank = rows.iter().filter(|r| r.1 < m || (r.1 == m && r.0.as_str() < *p)).count() + 1;
            Ok(WordReport {
                word: p.to_string(),
                score: m,
                rank: if j == qi { 0 } else { rank },
                std: s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Neighbours {
        query: WordReport {
            word: word.to_string(),
            score: 0.0,
            rank: 0,
            std: 0.0,
        },
        neighbours: ranked(rows, false, k),
        probes,
    })
}

/// Words by decreasing euclidean norm of their vectors (mean over the
/// embeddings), ties broken lexicographically.
pub fn norm_ranking(embeddings: &[EmbeddingMatrix], k: usize) -> Result<Vec<WordReport>> {
    let words = check_same_words(embeddings)?;
    let rows = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let norms: Vec<f64> = embeddings.iter().map(|e| norm(&e.vectors[i])).collect();
            let (m, s) = mean_std(&norms);
            (w.clone(), m, s)
        })
        .collect();
    Ok(ranked(rows, true, k))
}

/// Norm ranking with the natural log of the mean norm as score.
pub fn log_norm_ranking(embeddings: &[EmbeddingMatrix], k: usize) -> Result<Vec<WordReport>> {
    Ok(norm_ranking(embeddings, k)?
        .into_iter()
        .map(|r| WordReport {
            score: r.score.ln(),
            std: r.std / r.score,
            ..r
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedEffects {
    /// Largest positive coefficients first.
    pub positive: Vec<WordReport>,
    /// Most negative coefficients first.
    pub negative: Vec<WordReport>,
}

impl SignedEffects {
    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }
}

/// Up to `k` words with positive and `k` with negative coefficients, each
/// list sorted by `|β|`. Zero coefficients are left out.
pub fn lasso_word_effects(model: &LassoModel, words: &[String], k: usize) -> Result<SignedEffects> {
    if words.len() != model.beta.len() {
        return Err(Error::Shape {
            expected: model.beta.len(),
            got: words.len(),
        });
    }
    let pick = |positive: bool| {
        let rows = words
            .iter()
            .zip(&model.beta)
            .filter(|(_, &b)| if positive { b > 0.0 } else { b < 0.0 })
            .map(|(w, &b)| (w.clone(), b.abs(), 0.0))
            .collect();
        ranked(rows, true, k)
            .into_iter()
            .map(|r| WordReport {
                score: if positive { r.score } else { -r.score },
                ..r
            })
            .collect::<Vec<_>>()
    };
    let effects = SignedEffects {
        positive: pick(true),
        negative: pick(false),
    };
    if effects.is_empty() {
        log::warn!("all LASSO coefficients are zero: the effect report is empty");
    }
    Ok(effects)
}

/// Normalized importances of one fitted forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunImportance {
    pub words: Vec<String>,
    pub importance: Vec<f64>,
}

/// Mean and standard deviation of each word's importance over the runs,
/// top `k` by mean.
pub fn rf_word_importance(runs: &[RunImportance], k: usize) -> Result<Vec<WordReport>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Spec("at least one forest is required".into()))?;
    if runs.iter().any(|r| r.words != first.words || r.importance.len() != r.words.len()) {
        return Err(Error::Spec("forests were fitted on different vocabularies".into()));
    }
    let rows = first
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let v: Vec<f64> = runs.iter().map(|r| r.importance[i]).collect();
            let (m, s) = mean_std(&v);
            (w.clone(), m, s)
        })
        .collect();
    Ok(ranked(rows, true, k))
}

/// Exclusive region sizes of the three-set Venn diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennCounts {
    pub only_rf: usize,
    pub only_lasso: usize,
    pub only_norm: usize,
    pub rf_lasso: usize,
    pub rf_norm: usize,
    pub lasso_norm: usize,
    pub all: usize,
}

impl VennCounts {
    pub fn regions(&self) -> [(&'static str, usize); 7] {
        [
            ("rf", self.only_rf),
            ("lasso", self.only_lasso),
            ("norm", self.only_norm),
            ("rf&lasso", self.rf_lasso),
            ("rf&norm", self.rf_norm),
            ("lasso&norm", self.lasso_norm),
            ("rf&lasso&norm", self.all),
        ]
    }

    pub fn total(&self) -> usize {
        self.regions().iter().map(|r| r.1).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["region", "count"])?;
        for (name, n) in self.regions() {
            w.write_record([name.to_string(), n.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<venn>", e))?;
        Ok(())
    }
}

/// Overlap of the first `top_k` entries of three ranked word lists.
pub fn selection_overlap<S: AsRef<str>>(rf: &[S], lasso: &[S], norm: &[S], top_k: usize) -> Result<VennCounts> {
    for (name, list) in [("rf", rf), ("lasso", lasso), ("norm", norm)] {
        if list.len() < top_k {
            return Err(Error::Spec(format!(
                "{name} list has {} words, fewer than top_k = {top_k}",
                list.len()
            )));
        }
    }
    let set = |l: &[S]| -> BTreeSet<String> { l[..top_k].iter().map(|s| s.as_ref().to_string()).collect() };
    let (a, b, c) = (set(rf), set(lasso), set(norm));
    let mut membership: HashMap<&str, u8> = HashMap::new();
    for (bit, s) in [(1u8, &a), (2, &b), (4, &c)] {
        for w in s {
            *membership.entry(w.as_str()).or_default() |= bit;
        }
    }
    let mut v = VennCounts {
        only_rf: 0,
        only_lasso: 0,
        only_norm: 0,
        rf_lasso: 0,
        rf_norm: 0,
        lasso_norm: 0,
        all: 0,
    };
    for mask in membership.values() {
        match mask {
            1 => v.only_rf += 1,
            2 => v.only_lasso += 1,
            4 => v.only_norm += 1,
            3 => v.rf_lasso += 1,
            5 => v.rf_norm += 1,
            6 => v.lasso_norm += 1,
            _ => v.all += 1,
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            vec!["w1".into(), "w2".into(), "w3".into()],
            vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![-1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        let w = [0.3, -2.0, 1.0];
        assert!(cosine_distance(&w, &w).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&w, &[-0.3, 2.0, -1.0]).unwrap(), 2.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 1.0);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn toy_neighbourhood() {
        let n = nearest_words("w1", &[toy()], 2, &["w3"]).unwrap();
        assert_eq!(n.query.score, 0.0);
        let oracle = 1.0 - 0.9 / (0.81f64 + 0.01).sqrt();
        assert_eq!(n.neighbours[0].word, "w2");
        assert!((n.neighbours[0].score - oracle).abs() < 1e-15);
        assert!((n.neighbours[0].score - 0.00612).abs() < 1e-5);
        assert_eq!(n.neighbours[1].word, "w3");
        assert_eq!(n.neighbours[1].score, 2.0);
        assert_eq!(n.probes[0].score, 2.0);
        assert_eq!(n.probes[0].rank, 2);
        assert!(matches!(nearest_words("zz", &[toy()], 2, &[]), Err(Error::Lookup(_))));
    }

    #[test]
    fn neighbour_table_lists_query_first() {
        let n = nearest_words("w1", &[toy(), toy()], 2, &[]).unwrap();
        let mut buf = Vec::new();
        n.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "w1,0.000,0.000,query");
        assert_eq!(n.neighbours[0].std, 0.0);
    }

    #[test]
    fn norm_examples() {
        let e = EmbeddingMatrix::new(vec!["a".into(), "b".into()], vec![vec![3.0, 4.0], vec![1.0, 0.0]]).unwrap();
        let r = norm_ranking(&[e], 2).unwrap();
        assert_eq!((r[0].word.as_str(), r[0].score, r[0].rank), ("a", 5.0, 1));
        assert_eq!(r[1].score, 1.0);
        let tie = EmbeddingMatrix::new(vec!["z".into(), "m".into()], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = norm_ranking(&[tie], 2).unwrap();
        assert_eq!(r[0].word, "m");
    }

    #[test]
    fn lasso_effect_lists() {
        let model = LassoModel {
            beta: vec![2.0, -3.0, 0.0],
            intercept: 0.0,
            lambda: 0.1,
            feature_means: vec![0.0; 3],
            feature_scales: vec![1.0; 3],
            converged: true,
            sweeps: 1,
            final_change: 0.0,
            parameterization: String::new(),
        };
        let words: Vec<String> = vec!["w1".into(), "w2".into(), "w3".into()];
        let e = lasso_word_effects(&model, &words, 5).unwrap();
        assert_eq!(e.positive.iter().map(|r| r.word.as_str()).collect::<Vec<_>>(), vec!["w1"]);
        assert_eq!(e.negative.iter().map(|r| r.word.as_str()).collect::<Vec<_>>(), vec!["w2"]);
        assert_eq!(e.negative[0].score, -3.0);
        let zero = LassoModel { beta: vec![0.0; 3], ..model };
        assert!(lasso_word_effects(&zero, &words, 5).unwrap().is_empty());
    }

    #[test]
    fn importance_summary() {
        let words: Vec<String> = vec!["a".into(), "b".into()];
        let one = RunImportance { words: words.clone(), importance: vec![0.25, 0.75] };
        let r = rf_word_importance(std::slice::from_ref(&one), 2).unwrap();
        assert_eq!(r[0].word, "b");
        assert_eq!(r[0].std, 0.0);
        let two = RunImportance { words: words.clone(), importance: vec![0.75, 0.25] };
        let r = rf_word_importance(&[one.clone(), two], 2).unwrap();
        assert_eq!(r[0].score, 0.5);
        assert!((r[0].std - (0.125f64).sqrt()).abs() < 1e-15);
        let other = RunImportance { words: vec!["a".into(), "c".into()], importance: vec![0.5, 0.5] };
        assert!(matches!(rf_word_importance(&[one, other], 2), Err(Error::Spec(_))));
    }

    #[test]
    fn venn_examples() {
        let l: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let v = selection_overlap(&l, &l, &l, 50).unwrap();
        assert_eq!(v.all, 50);
        assert_eq!(v.total(), 50);
        let m: Vec<String> = (50..100).map(|i| format!("w{i}")).collect();
        let n: Vec<String> = (100..150).map(|i| format!("w{i}")).collect();
        let v = selection_overlap(&l, &m, &n, 50).unwrap();
        assert_eq!((v.only_rf, v.only_lasso, v.only_norm), (50, 50, 50));
        assert_eq!(v.rf_lasso + v.rf_norm + v.lasso_norm + v.all, 0);
        assert!(selection_overlap(&l[..10], &m, &n, 50).is_err());
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 8);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in prop::collection::vec(-5.0f64..5.0, 3),
            s in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let d = cosine_distance(&a, &b).unwrap();
            prop_assert!((d - cosine_distance(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((d - cosine_distance(&scaled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=2.0).contains(&d));
        }

        #[test]
        fn neighbour_distances_non_decreasing(rows in prop::collection::vec(prop::collection::vec(0.1f64..3.0, 4), 3..12)) {
            let words: Vec<String> = (0..rows.len()).map(|i| format!("w{i}")).collect();
            let e = EmbeddingMatrix::new(words, rows.clone()).unwrap();
            let n = nearest_words("w0", &[e], rows.len(), &[]).unwrap();
            prop_assert!(n.neighbours.windows(2).all(|w| w[0].score <= w[1].score));
            prop_assert_eq!(n.neighbours.len(), rows.len() - 1);
        }

        #[test]
        fn norm_ranking_matches_sort_oracle_and_rotation(
            rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..15),
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            let words: Vec<String> = (0..rows.len()).map(|i| format!("w{i:02}")).collect();
            let e = EmbeddingMatrix::new(words.clone(), rows.clone()).unwrap();
            let r = norm_ranking(&[e], rows.len()).unwrap();
            let mut oracle: Vec<(f64, &String)> = rows.iter().map(|v| norm(v)).zip(&words).collect();
            oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
            prop_assert_eq!(r.iter().map(|x| &x.word).collect::<Vec<_>>(), oracle.iter().map(|x| x.1).collect::<Vec<_>>());
            let (c, s) = (theta.cos(), theta.sin());
            let rotated: Vec<Vec<f64>> = rows.iter().map(|v| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]]).collect();
            let rr = norm_ranking(&[EmbeddingMatrix::new(words, rotated).unwrap()], rows.len()).unwrap();
            for (x, y) in r.iter().zip(&rr) {
                prop_assert!((x.score - y.score).abs() < 1e-12);
            }
        }

        #[test]
        fn venn_regions_sum_to_union(
            a in prop::collection::vec(0u8..30, 10),
            b in prop::collection::vec(0u8..30, 10),
            c in prop::collection::vec(0u8..30, 10),
            k in 1usize..10,
        ) {
            let s = |v: &Vec<u8>| v.iter().map(|x| format!("w{x}")).collect::<Vec<_>>();
            let (la, lb, lc) = (s(&a), s(&b), s(&c));
            let v = selection_overlap(&la, &lb, &lc, k).unwrap();
            let union: BTreeSet<&String> = la[..k].iter().chain(&lb[..k]).chain(&lc[..k]).collect();
            prop_assert_eq!(v.total(), union.len());
        }
    }
}
