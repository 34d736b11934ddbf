//! Dated text documents: ingestion, tokenization, frequency-filtered
//! vocabulary and integer/padded sequences for the embedding models.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub date: NaiveDate,
    pub text: String,
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_documents(BufReader::new(file))
}

/// Reads one JSON object per line (`{"date": "...", "text": "..."}`).
/// Blank lines are skipped. Output is sorted by date.
pub fn read_documents<R: BufRead>(input: R) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    docs.sort_by_key(|d| d.date);
    if let Some(w) = docs.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::Duplicate(w[0].date));
    }
    Ok(docs)
}

pub fn write_documents<W: Write>(docs: &[RawDocument], mut out: W) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io("<documents>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn empty() -> Self {
        Self::default()
    }

    /// One word per line; blank lines and `#` comments ignored. Entries are
    /// lowercased.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn english() -> Self {
        Self::parse(include_str!("../data/stopwords/en.txt"))
    }

    pub fn french() -> Self {
        Self::parse(include_str!("../data/stopwords/fr.txt"))
    }

    /// Built-in list by language code (`en`, `fr`).
    pub fn builtin(language: &str) -> Option<Self> {
        match language {
            "en" | "english" => Some(Self::english()),
            "fr" | "french" => Some(Self::french()),
            _ => None,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stopwords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Lowercases, splits on every non-alphabetic character and drops
/// stopwords. Accented letters are alphabetic.
pub fn preprocess(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        // lowercasing can expand into non-alphabetic marks in rare scripts
        .flat_map(|t| {
            t.split(|c: char| !c.is_alphabetic())
                .filter(|p| !p.is_empty())
                .map(str::to_owned)
                .collect::<Vec<_>>()
        })
        .filter(|t| !stopwords.contains(t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabFilter {
    /// Words seen fewer times than this in the training corpus are dropped.
    pub min_count: usize,
    /// Words present in a larger fraction of training documents are dropped.
    pub max_doc_frac: f64,
}

impl Default for VocabFilter {
    fn default() -> Self {
        VocabFilter {
            min_count: 7,
            max_doc_frac: 0.40,
        }
    }
}

/// Word ↔ index map. Index 0 is reserved for padding and unknown words, so
/// words occupy `1..=len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    total_count: Vec<usize>,
    doc_count: Vec<usize>,
    n_docs: usize,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    words: Vec<String>,
    total_count: Vec<usize>,
    doc_count: Vec<usize>,
    n_docs: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.words, r.total_count, r.doc_count, r.n_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            words: v.words,
            total_count: v.total_count,
            doc_count: v.doc_count,
            n_docs: v.n_docs,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct WordCounts {
    total: BTreeMap<String, usize>,
    docs: BTreeMap<String, usize>,
}

fn count_words(docs: &[Vec<String>]) -> WordCounts {
    let mut counts = WordCounts::default();
    for doc in docs {
        let mut seen = HashSet::new();
        for tok in doc {
            *counts.total.entry(tok.clone()).or_default() += 1;
            if seen.insert(tok.as_str()) {
                *counts.docs.entry(tok.clone()).or_default() += 1;
            }
        }
    }
    counts
}

impl Vocabulary {
    fn from_parts(
        words: Vec<String>,
        total_count: Vec<usize>,
        doc_count: Vec<usize>,
        n_docs: usize,
    ) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + 1))
            .collect();
        Vocabulary {
            words,
            total_count,
            doc_count,
            n_docs,
            index,
        }
    }

    /// Builds the filtered vocabulary from tokenized training documents.
    /// Indices follow descending total count, ties broken lexicographically.
    pub fn build(docs: &[Vec<String>], filter: VocabFilter) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Spec("vocabulary needs at least one document".into()));
        }
        let n_docs = docs.len();
        let counts = count_words(docs);
        let mut kept: Vec<(&String, usize, usize)> = counts
            .total
            .iter()
            .map(|(w, &t)| (w, t, counts.docs[w]))
            .filter(|&(_, t, d)| {
                t >= filter.min_count && d as f64 / n_docs as f64 <= filter.max_doc_frac
            })
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocab);
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(Self::from_parts(
            kept.iter().map(|k| k.0.clone()).collect(),
            kept.iter().map(|k| k.1).collect(),
            kept.iter().map(|k| k.2).collect(),
            n_docs,
        ))
    }

    /// Sub-vocabulary holding `words` in the given order (re-indexed from 1).
    /// Unknown words are an error.
    pub fn restrict<S: AsRef<str>>(&self, words: &[S]) -> Result<Vocabulary> {
        let mut out_words = Vec::with_capacity(words.len());
        let mut total = Vec::with_capacity(words.len());
        let mut docs = Vec::with_capacity(words.len());
        for w in words {
            let w = w.as_ref();
            let id = self.id(w).ok_or_else(|| Error::Lookup(w.to_owned()))? as usize;
            out_words.push(w.to_owned());
            total.push(self.total_count[id - 1]);
            docs.push(self.doc_count[id - 1]);
        }
        Ok(Self::from_parts(out_words, total, docs, self.n_docs))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of documents the vocabulary was built from.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Words in index order: `words()[i]` has id `i + 1`.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        id.checked_sub(1)
            .and_then(|i| self.words.get(i as usize))
            .map(String::as_str)
    }

    pub fn total_count(&self, id: u32) -> usize {
        self.total_count[id as usize - 1]
    }

    pub fn doc_count(&self, id: u32) -> usize {
        self.doc_count[id as usize - 1]
    }

    /// SHA-256 over the ordered word list, identifying index assignments.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([0u8]);
        }
        format!("{:x}", h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMode {
    /// Out-of-vocabulary tokens are dropped.
    Training,
    /// Out-of-vocabulary tokens become id 0.
    Inference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub date: NaiveDate,
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn to_ids<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, mode: IdMode) -> Vec<u32> {
    tokens
        .iter()
        .filter_map(|t| match (vocab.id(t.as_ref()), mode) {
            (Some(id), _) => Some(id),
            (None, IdMode::Inference) => Some(0),
            (None, IdMode::Training) => None,
        })
        .collect()
}

/// Fixed-width id rows: each original sequence followed by zeros, or cut to
/// its first `seq_len` ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedBatch {
    pub rows: Vec<Vec<u32>>,
    pub seq_len: usize,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> PaddedBatch {
        PaddedBatch {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            seq_len: self.seq_len,
        }
    }
}

pub fn pad_batch<S: AsRef<[u32]>>(sequences: &[S], seq_len: usize) -> PaddedBatch {
    let rows = sequences
        .iter()
        .map(|s| {
            let s = s.as_ref();
            let keep = s.len().min(seq_len);
            let mut row = Vec::with_capacity(seq_len);
            row.extend_from_slice(&s[..keep]);
            row.resize(seq_len, 0);
            row
        })
        .collect();
    PaddedBatch { rows, seq_len }
}

/// Longest sequence, the `S` used for padding.
pub fn max_len<S: AsRef<[u32]>>(sequences: &[S]) -> usize {
    sequences.iter().map(|s| s.as_ref().len()).max().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    /// Distinct preprocessed words before frequency filtering.
    pub vocab_size_unfiltered: usize,
    pub vocab_size: usize,
    pub max_length: usize,
    pub mean_length: f64,
}

pub fn corpus_stats(docs: &[Vec<String>], vocab: &Vocabulary) -> CorpusStats {
    let distinct: HashSet<&str> = docs.iter().flatten().map(String::as_str).collect();
    let total: usize = docs.iter().map(Vec::len).sum();
    CorpusStats {
        n_docs: docs.len(),
        vocab_size_unfiltered: distinct.len(),
        vocab_size: vocab.len(),
        max_length: docs.iter().map(Vec::len).max().unwrap_or(0),
        mean_length: if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        },
    }
}
