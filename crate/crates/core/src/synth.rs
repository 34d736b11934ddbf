//! Synthetic (corpus, series) pairs with known word effects.
//!
//! Each day gets one document. Seasonal words appear with a probability
//! that follows a yearly cosine, the weekday cluster contributes the name of
//! the day, and noise words fill the document up to a fixed length. The
//! target is `base + Σ effect(w) + N(0, noise_std²)` over the distinct words
//! of the day's document.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_documents, RawDocument};
use crate::error::{Error, Result};
use crate::series::{CalendarFeatures, SplitSpec, TimeSeries, Unit};

/// Filler words sprinkled between the generated tokens. All of them are in
/// the bundled English stopword list.
const FILLERS: [&str; 8] = ["the", "and", "of", "with", "in", "on", "a", "to"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    /// Probability `rate·(1 + cos 2πτ)`, τ the time of year: peaks on Jan 1.
    Winter,
    /// Probability `rate·(1 − cos 2πτ)`: peaks mid-year.
    Summer,
    /// Exactly seven words, Monday first; the day's word is always present.
    Weekday,
    /// Fills each document up to `words_per_doc` tokens.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub name: String,
    pub presence: Presence,
    /// `(word, effect)` pairs.
    pub words: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub start: NaiveDate,
    pub n_days: usize,
    pub clusters: Vec<Cluster>,
    pub base_level: f64,
    pub noise_std: f64,
    /// Mean presence probability of each seasonal word.
    pub season_rate: f64,
    /// Generated (non-filler) tokens per document.
    pub words_per_doc: usize,
    /// Chance of a filler word before each generated token.
    pub filler_rate: f64,
    pub seed: u64,
}

fn noise_words(n: usize) -> Vec<String> {
    const SYLLABLES: [&str; 10] = ["ba", "ko", "ri", "tu", "ne", "lo", "mi", "sa", "de", "vu"];
    (0..n)
        .map(|i| {
            format!(
                "{}{}{}rn",
                SYLLABLES[i / 100 % 10],
                SYLLABLES[i / 10 % 10],
                SYLLABLES[i % 10]
            )
        })
        .collect()
}

fn with_effect(words: &[&str], effect: f64) -> Vec<(String, f64)> {
    words.iter().map(|w| (w.to_string(), effect)).collect()
}

impl Default for SynthSpec {
    /// 100 words: 5 winter words (+5), 5 summer words (−5), 7 weekday
    /// words (+2 Monday to Friday, −2 at the weekend) and 83 noise words over
    /// 2000 days, with the noise level set for an oracle R² near 0.9.
    fn default() -> Self {
        let weekday = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
            .iter()
            .enumerate()
            .map(|(i, w)| (w.to_string(), if i < 5 { 2.0 } else { -2.0 }))
            .collect();
        SynthSpec {
            start: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            n_days: 2000,
            clusters: vec![
                Cluster {
                    name: "winter-up".into(),
                    presence: Presence::Winter,
                    words: with_effect(&["january", "february", "snow", "freezing", "frost"], 5.0),
                },
                Cluster {
                    name: "summer-down".into(),
                    presence: Presence::Summer,
                    words: with_effect(&["july", "august", "hot", "thunderstorms", "sunny"], -5.0),
                },
                Cluster {
                    name: "weekday".into(),
                    presence: Presence::Weekday,
                    words: weekday,
                },
                Cluster {
                    name: "noise".into(),
                    presence: Presence::Noise,
                    words: noise_words(83).into_iter().map(|w| (w, 0.0)).collect(),
                },
            ],
            base_level: 100.0,
            noise_std: 3.66,
            season_rate: 0.25,
            words_per_doc: 20,
            filler_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !self.base_level.is_finite() {
            return bad("noise_std must be finite and >= 0, base_level finite".into());
        }
        if !(0.0..=0.5).contains(&self.season_rate) {
            return bad(format!("season_rate {} outside [0, 0.5]", self.season_rate));
        }
        if !(0.0..1.0).contains(&self.filler_rate) {
            return bad(format!("filler_rate {} outside [0, 1)", self.filler_rate));
        }
        let mut seen = HashSet::new();
        for c in &self.clusters {
            if c.presence == Presence::Weekday && c.words.len() != 7 {
                return bad(format!("weekday cluster `{}` needs 7 words", c.name));
            }
            for (w, e) in &c.words {
                if !e.is_finite() {
                    return bad(format!("effect of `{w}` is not finite"));
                }
                if c.presence == Presence::Noise && *e != 0.0 {
                    return bad(format!("noise word `{w}` has nonzero effect {e}"));
                }
                if w.is_empty() || !w.chars().all(|ch| ch.is_alphabetic() && ch.is_lowercase()) {
                    return bad(format!("word `{w}` is not lowercase alphabetic"));
                }
                if !seen.insert(w.as_str()) {
                    return bad(format!("word `{w}` appears in more than one cluster"));
                }
            }
        }
        Ok(())
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.start.iter_days().take(self.n_days).collect()
    }

    /// First 60% of the days for training, the next 20% for validation.
    pub fn suggested_split(&self) -> SplitSpec {
        let day = |i: usize| self.start + chrono::Days::new(i as u64);
        SplitSpec {
            train_end: day(self.n_days * 6 / 10 - 1),
            validation_end: day(self.n_days * 8 / 10 - 1),
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            effects: self
                .clusters
                .iter()
                .flat_map(|c| c.words.iter().cloned())
                .collect(),
        }
    }

    pub fn cluster(&self, name: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.name == name)
    }

    /// Words of every cluster with the given presence rule.
    pub fn words_with(&self, presence: Presence) -> Vec<String> {
        self.clusters
            .iter()
            .filter(|c| c.presence == presence)
            .flat_map(|c| c.words.iter().map(|(w, _)| w.clone()))
            .collect()
    }
}

/// Word → additive effect on the target. Words absent from the map have
/// effect 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub effects: BTreeMap<String, f64>,
}

impl GroundTruth {
    pub fn effect(&self, word: &str) -> f64 {
        self.effects.get(word).copied().unwrap_or(0.0)
    }

    pub fn nonzero(&self) -> Vec<&str> {
        self.effects
            .iter()
            .filter(|(_, &e)| e != 0.0)
            .map(|(w, _)| w.as_str())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["word", "effect"])?;
        for (word, e) in &self.effects {
            w.write_record([word.clone(), e.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<ground truth>", e))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut effects = BTreeMap::new();
        for (i, rec) in csv::Reader::from_reader(input).records().enumerate() {
            let rec = rec?;
            let parsed = rec.get(1).and_then(|v| v.parse::<f64>().ok());
            match (rec.get(0), parsed) {
                (Some(w), Some(e)) => {
                    effects.insert(w.to_string(), e);
                }
                _ => {
                    return Err(Error::Parse {
                        line: i + 2,
                        message: "expected `word,effect`".into(),
                    })
                }
            }
        }
        Ok(GroundTruth { effects })
    }
}

/// `base + Σ effect(w)` over the distinct tokens of a document.
pub fn oracle_predict<S: AsRef<str>>(doc: &[S], truth: &GroundTruth, base: f64) -> f64 {
    let distinct: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
    let mut words: Vec<&str> = distinct.into_iter().collect();
    words.sort_unstable();
    base + words.iter().map(|w| truth.effect(w)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub spec: SynthSpec,
    pub documents: Vec<RawDocument>,
    pub series: TimeSeries,
    pub ground_truth: GroundTruth,
    /// Target before the gaussian noise is added.
    pub noiseless: Vec<f64>,
}

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const SERIES_FILE: &str = "series.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const SPEC_FILE: &str = "synth_spec.json";

impl SynthBundle {
    /// Writes the documents, the series, the ground truth and the spec into
    /// `dir`, returning the written paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(&p, e))
                .map(|f| (p, f))
        };
        let (p1, mut f) = create(DOCUMENTS_FILE)?;
        write_documents(&self.documents, &mut f)?;
        f.flush().map_err(|e| Error::io(&p1, e))?;
        let (p2, f) = create(SERIES_FILE)?;
        self.series.write_csv(f)?;
        let (p3, f) = create(GROUND_TRUTH_FILE)?;
        self.ground_truth.write_csv(f)?;
        let (p4, mut f) = create(SPEC_FILE)?;
        serde_json::to_writer_pretty(&mut f, &self.spec)?;
        f.flush().map_err(|e| Error::io(&p4, e))?;
        Ok(vec![p1, p2, p3, p4])
    }
}

fn render(tokens: &[&str], filler_rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut out: Vec<&str> = Vec::with_capacity(tokens.len() * 2);
    for t in tokens {
        if rng.random::<f64>() < filler_rate {
            out.push(FILLERS.choose(rng).expect("non-empty"));
        }
        out.push(t);
    }
    let mut text = out.join(" ");
    if let Some(first) = text.get(..1) {
        let upper = first.to_uppercase();
        text.replace_range(..1, &upper);
    }
    text.push('.');
    text
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Spec(e.to_string()))?;
    let truth = spec.ground_truth();
    let fillers: Vec<&str> = spec
        .clusters
        .iter()
        .filter(|c| c.presence == Presence::Noise)
        .flat_map(|c| c.words.iter().map(|(w, _)| w.as_str()))
        .collect();

    let dates = spec.dates();
    let mut documents = Vec::with_capacity(dates.len());
    let mut values = Vec::with_capacity(dates.len());
    let mut noiseless = Vec::with_capacity(dates.len());
    for &date in &dates {
        let cycle = (2.0 * std::f64::consts::PI * CalendarFeatures::of(date).time_of_year).cos();
        let mut tokens: Vec<&str> = Vec::with_capacity(spec.words_per_doc);
        for c in &spec.clusters {
            let p = match c.presence {
                Presence::Winter => spec.season_rate * (1.0 + cycle),
                Presence::Summer => spec.season_rate * (1.0 - cycle),
                Presence::Weekday => {
                    let day = date.weekday().num_days_from_monday() as usize;
                    tokens.push(&c.words[day].0);
                    continue;
                }
                Presence::Noise => continue,
            };
            for (w, _) in &c.words {
                if rng.random::<f64>() < p {
                    tokens.push(w);
                }
            }
        }
        let fill = spec.words_per_doc.saturating_sub(tokens.len());
        tokens.extend(fillers.choose_multiple(&mut rng, fill).copied());
        tokens.shuffle(&mut rng);

        let signal = oracle_predict(&tokens, &truth, spec.base_level);
        noiseless.push(signal);
        values.push(signal + noise.sample(&mut rng));
        documents.push(RawDocument {
            date,
            text: render(&tokens, spec.filler_rate, &mut rng),
        });
    }
    Ok(SynthBundle {
        spec: spec.clone(),
        documents,
        series: TimeSeries::new(dates, values, Unit::Dimensionless)?,
        ground_truth: truth,
        noiseless,
    })
}
