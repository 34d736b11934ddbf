//! TF-IDF document-term weights.
//!
//! `x[d][w] = (count(w, d) / len(d)) · ln(N / (doc_count(w) + 1))`, where
//! `len(d)` counts the in-vocabulary tokens of `d` and `N`, `doc_count` come
//! from the training corpus. The logarithm is not floored: a word present in
//! every training document gets a negative weight.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfMatrix {
    /// One dense row of length `V` per training document.
    pub rows: Vec<Vec<f64>>,
    /// Per-word factor `ln(N / (doc_count + 1))`, indexed by `id - 1`.
    pub idf: Vec<f64>,
    pub n_docs: usize,
    pub vocab_fingerprint: String,
}

/// Per-word counts of a document and its in-vocabulary length.
fn term_counts<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> (Vec<(usize, usize)>, usize) {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    let mut len = 0;
    for t in tokens {
        if let Some(id) = vocab.id(t.as_ref()) {
            len += 1;
            let col = id as usize - 1;
            match counts.iter_mut().find(|(c, _)| *c == col) {
                Some((_, n)) => *n += 1,
                None => counts.push((col, 1)),
            }
        }
    }
    (counts, len)
}

fn weigh(counts: &[(usize, usize)], len: usize, idf: &[f64]) -> Vec<f64> {
    let mut row = vec![0.0; idf.len()];
    if len == 0 {
        return row;
    }
    for &(col, n) in counts {
        row[col] = (n as f64 / len as f64) * idf[col];
    }
    row
}

pub fn fit_tfidf<S: AsRef<str>>(docs: &[Vec<S>], vocab: &Vocabulary) -> Result<TfIdfMatrix> {
    if docs.is_empty() || vocab.is_empty() {
        return Err(Error::Spec("TF-IDF needs a non-empty corpus and vocabulary".into()));
    }
    let counted: Vec<_> = docs.iter().map(|d| term_counts(d, vocab)).collect();
    let mut doc_count = vec![0usize; vocab.len()];
    for (counts, _) in &counted {
        for &(col, _) in counts {
            doc_count[col] += 1;
        }
    }
    let n = docs.len() as f64;
    let idf: Vec<f64> = doc_count.iter().map(|&dc| (n / (dc as f64 + 1.0)).ln()).collect();
    let rows = counted
        .iter()
        .map(|(counts, len)| weigh(counts, *len, &idf))
        .collect();
    Ok(TfIdfMatrix {
        rows,
        idf,
        n_docs: docs.len(),
        vocab_fingerprint: vocab.fingerprint(),
    })
}

impl TfIdfMatrix {
    pub fn n_features(&self) -> usize {
        self.idf.len()
    }

    /// Encodes an unseen document with the training statistics.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S], vocab: &Vocabulary) -> Vec<f64> {
        debug_assert_eq!(vocab.len(), self.idf.len());
        let (counts, len) = term_counts(tokens, vocab);
        weigh(&counts, len, &self.idf)
    }

    /// Header row of words, then `date,w1,w2,...` per document.
    pub fn write_csv<W: Write, D: std::fmt::Display>(
        rows: &[Vec<f64>],
        labels: &[D],
        vocab: &Vocabulary,
        out: W,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(vocab.words().iter().cloned());
        w.write_record(&header)?;
        for (label, row) in labels.iter().zip(rows) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<tfidf csv>", e))?;
        Ok(())
    }
}

/// Keeps the given columns (0-based) of every row, in the given order.
pub fn select_columns(rows: &[Vec<f64>], columns: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| columns.iter().map(|&c| r[c]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::VocabFilter;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn open_filter() -> VocabFilter {
        VocabFilter {
            min_count: 1,
            max_doc_frac: 1.0,
        }
    }

    fn three_docs() -> (Vec<Vec<String>>, Vocabulary) {
        let docs = vec![toks("a a b"), toks("a c"), toks("c")];
        let vocab = Vocabulary::build(&docs, open_filter()).unwrap();
        (docs, vocab)
    }

    #[test]
    fn hand_evaluated_entries() {
        let (docs, vocab) = three_docs();
        let m = fit_tfidf(&docs, &vocab).unwrap();
        let col = |w: &str| vocab.id(w).unwrap() as usize - 1;
        assert_eq!(m.rows[0][col("a")], 0.0);
        assert_eq!(m.rows[1][col("c")], 0.0);
        assert!((m.rows[0][col("b")] - (1.0 / 3.0) * 1.5f64.ln()).abs() < 1e-15);
        assert!((m.rows[0][col("b")] - 0.1352).abs() < 1e-4);
        assert_eq!(m.rows[2][col("a")], 0.0);
        let v = m.transform(&toks("b b"), &vocab);
        assert!((v[col("b")] - 0.4055).abs() < 1e-4);
    }

    #[test]
    fn ubiquitous_word_is_negative() {
        let docs = vec![toks("x y"), toks("x"), toks("x z")];
        let vocab = Vocabulary::build(&docs, open_filter()).unwrap();
        let m = fit_tfidf(&docs, &vocab).unwrap();
        let x = vocab.id("x").unwrap() as usize - 1;
        assert!(m.idf[x] < 0.0);
        assert!(m.rows.iter().all(|r| r[x] < 0.0));
    }

    #[test]
    fn transform_edge_cases() {
        let (docs, vocab) = three_docs();
        let m = fit_tfidf(&docs, &vocab).unwrap();
        assert!(m.transform::<String>(&[], &vocab).iter().all(|&v| v == 0.0));
        for (d, row) in docs.iter().zip(&m.rows) {
            assert_eq!(&m.transform(d, &vocab), row);
        }
    }

    #[test]
    fn doc_without_vocabulary_words_is_zero_row() {
        let docs = vec![toks("a b"), toks("zzz"), toks("a")];
        let vocab = Vocabulary::build(&docs[..1], open_filter()).unwrap();
        let m = fit_tfidf(&docs, &vocab).unwrap();
        assert!(m.rows[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicating_tokens_keeps_row() {
        let (docs, vocab) = three_docs();
        let m = fit_tfidf(&docs, &vocab).unwrap();
        let doubled: Vec<String> = docs[0].iter().chain(&docs[0]).cloned().collect();
        assert_eq!(m.transform(&doubled, &vocab), m.rows[0]);
    }

    #[test]
    fn csv_export_has_word_header() {
        let (docs, vocab) = three_docs();
        let m = fit_tfidf(&docs, &vocab).unwrap();
        let mut buf = Vec::new();
        TfIdfMatrix::write_csv(&m.rows, &["d1", "d2", "d3"], &vocab, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("date,a,c,b\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
