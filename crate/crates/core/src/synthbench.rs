//! Synthetic corpora with a planted semantic gradient.
//!
//! The generator builds an embedding vocabulary whose geometry has a known
//! low-rank signal subspace, samples token bags for each author from that
//! vocabulary, composes their PCVs with the regular composer, and sets the
//! outcome to a noisy linear function of the PCV along a planted direction.
//! Ground truth is returned separately and never enters the analysis path.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::composer::{build_pcvs, SifConfig};
use crate::corpus::{corpus_frequencies, AuthorRecord, EmbeddingStore, LetterTokenizer};
use crate::error::{Result, SsdError};
use crate::interpret::cosine;
use crate::sweep::SweepResult;

/// Outcome field written by the generator.
pub const OUTCOME_NAME: &str = "Y";

const LEXEMES_PER_POLE: usize = 15;
const WORDS_PER_TOPIC: usize = 30;
const FILLER_WORDS: usize = 60;
const WORD_NOISE: f64 = 0.08;
const FILLER_OFFSET: f64 = 5.0;
const USAGE_TEMPERATURE: f64 = 1.5;
/// Spread of filler words off the common axis; sets the noise floor outside the signal subspace.
const FILLER_SPREAD: f64 = 0.5;
/// Planted weights fall linearly over the signal axes, from 1 down to `1/rank`.
const PLANTED_DECAY: f64 = 1.0;
/// Author latent scales fall linearly from 1 to `1 - LATENT_DECAY`.
const LATENT_DECAY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedScenario {
    pub seed: u64,
    pub n_authors: usize,
    pub vocab_size: usize,
    pub dim: usize,
    pub effective_rank: usize,
    pub noise_sd: f64,
    pub tokens_per_author: usize,
}

impl Default for PlantedScenario {
    fn default() -> Self {
        PlantedScenario {
            seed: 0,
            n_authors: 350,
            vocab_size: 2000,
            dim: 50,
            effective_rank: 10,
            noise_sd: 1.0,
            tokens_per_author: 80,
        }
    }
}

impl PlantedScenario {
    /// Smallest vocabulary that fits the structured word groups.
    pub fn min_vocab(&self) -> usize {
        2 * LEXEMES_PER_POLE + 2 * self.effective_rank * WORDS_PER_TOPIC + FILLER_WORDS
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SsdError::Config(m));
        if self.dim == 0 || self.effective_rank == 0 || self.n_authors == 0 || self.tokens_per_author == 0 {
            return fail("dim, rank, authors and tokens per author must be positive".into());
        }
        if self.effective_rank + 1 >= self.dim {
            return fail(format!(
                "rank {} must be smaller than dim {} minus one",
                self.effective_rank, self.dim
            ));
        }
        if self.n_authors < 4 {
            return fail("at least 4 authors are required".into());
        }
        if self.vocab_size < self.min_vocab() {
            return fail(format!("vocab_size must be at least {}", self.min_vocab()));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return fail("noise_sd must be a nonnegative number".into());
        }
        Ok(())
    }
}

/// Known answer for a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted_direction: Vec<f64>,
    pub effective_rank: usize,
    pub positive_lexemes: Vec<String>,
    pub negative_lexemes: Vec<String>,
    /// Multiplier applied to `x · planted_direction` before adding noise.
    pub outcome_scale: f64,
    pub scenario: PlantedScenario,
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub store: EmbeddingStore,
    pub records: Vec<AuthorRecord>,
    pub truth: GroundTruth,
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "th",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Unique letters-only word for `index` under a given prefix.
fn word_name(prefix: &str, mut index: usize) -> String {
    let mut name = prefix.to_string();
    loop {
        let syl = index % (ONSETS.len() * VOWELS.len());
        name.push_str(ONSETS[syl / VOWELS.len()]);
        name.push_str(VOWELS[syl % VOWELS.len()]);
        index /= ONSETS.len() * VOWELS.len();
        if index == 0 {
            break;
        }
        index -= 1;
    }
    name
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random orthonormal basis; columns of the returned D × D matrix.
fn random_basis(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

struct WordGroup {
    /// Word indices in the vocabulary.
    members: Vec<usize>,
}

/// Generates a scenario. Deterministic in `scenario.seed`.
pub fn generate(scenario: &PlantedScenario) -> Result<GeneratedCorpus> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let d = scenario.dim;
    let r = scenario.effective_rank;

    let basis = random_basis(&mut rng, d);
    let signal: Vec<Vec<f64>> = (0..r).map(|j| basis.column(j).iter().copied().collect()).collect();
    let common: Vec<f64> = basis.column(r).iter().copied().collect();

    // planted direction: random signs, weights decaying over the signal axes
    let raw: Vec<f64> = (0..r)
        .map(|j| {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            s * (1.0 - PLANTED_DECAY * j as f64 / r as f64)
        })
        .collect();
    let wn = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
    let weights: Vec<f64> = raw.iter().map(|w| w / wn).collect();
    let mut planted = vec![0.0; d];
    for (w, axis) in weights.iter().zip(&signal) {
        for (p, a) in planted.iter_mut().zip(axis) {
            *p += w * a;
        }
    }

    let mut pairs: Vec<(String, Vec<f64>)> = Vec::with_capacity(scenario.vocab_size);
    let mut push_word = |name: String, center: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let v: Vec<f64> = center
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(rng);
                c + WORD_NOISE * z
            })
            .collect();
        pairs.push((name, v));
        pairs.len() - 1
    };

    let mut positive_lexemes = Vec::new();
    let mut negative_lexemes = Vec::new();
    let neg_planted: Vec<f64> = planted.iter().map(|p| -p).collect();
    // pole lexemes sit on the planted axis; authors never use them directly
    for (sign, center, names) in [
        ("pos", &planted, &mut positive_lexemes),
        ("neg", &neg_planted, &mut negative_lexemes),
    ] {
        for i in 0..LEXEMES_PER_POLE {
            let name = word_name(sign, i);
            names.push(name.clone());
            push_word(name, center, &mut rng);
        }
    }

    // two topic groups per signal axis, one at each end
    let mut topic_groups = Vec::with_capacity(2 * r);
    for (j, axis) in signal.iter().enumerate() {
        for s in [1.0, -1.0] {
            let center: Vec<f64> = axis.iter().map(|a| s * a).collect();
            let prefix = format!("{}{}", if s > 0.0 { "ta" } else { "te" }, word_name("", j));
            let members = (0..WORDS_PER_TOPIC)
                .map(|i| push_word(word_name(&prefix, i), &center, &mut rng))
                .collect();
            topic_groups.push(WordGroup { members });
        }
    }

    // frequent function-like words sharing a common offset
    let fillers: Vec<usize> = (0..FILLER_WORDS)
        .map(|i| {
            let mut center: Vec<f64> = gaussian(&mut rng, d).iter().map(|v| FILLER_SPREAD * v).collect();
            for (c, u) in center.iter_mut().zip(&common) {
                *c += FILLER_OFFSET * u;
            }
            push_word(word_name("fi", i), &center, &mut rng)
        })
        .collect();

    // remaining vocabulary: unused words in random directions
    let mut i = 0;
    while pairs.len() < scenario.vocab_size {
        let mut v = gaussian(&mut rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        pairs.push((word_name("ra", i), v));
        i += 1;
    }
    let names: Vec<String> = pairs.iter().map(|(w, _)| w.clone()).collect();
    let store = EmbeddingStore::from_pairs(d, pairs)?;

    // author latent positions with a decaying spectrum over the signal axes
    let scales: Vec<f64> = (0..r).map(|j| 1.0 - LATENT_DECAY * j as f64 / r as f64).collect();
    let mut records = Vec::with_capacity(scenario.n_authors);
    for a in 0..scenario.n_authors {
        let z: Vec<f64> = gaussian(&mut rng, r).iter().zip(&scales).map(|(g, s)| g * s).collect();
        let filler_share = rng.random_range(0.1..0.7);

        let mut group_weights: Vec<(f64, &WordGroup)> = Vec::with_capacity(2 * r);
        for (j, zj) in z.iter().enumerate() {
            group_weights.push(((USAGE_TEMPERATURE * zj).exp(), &topic_groups[2 * j]));
            group_weights.push(((-USAGE_TEMPERATURE * zj).exp(), &topic_groups[2 * j + 1]));
        }
        let total: f64 = group_weights.iter().map(|(w, _)| w).sum();

        let mut tokens = Vec::with_capacity(scenario.tokens_per_author);
        for _ in 0..scenario.tokens_per_author {
            let idx = if rng.random::<f64>() < filler_share {
                fillers[rng.random_range(0..fillers.len())]
            } else {
                let mut t = rng.random::<f64>() * total;
                let mut chosen = group_weights.last().expect("groups").1;
                for (w, g) in &group_weights {
                    if t < *w {
                        chosen = g;
                        break;
                    }
                    t -= w;
                }
                chosen.members[rng.random_range(0..chosen.members.len())]
            };
            tokens.push(names[idx].as_str());
        }
        records.push(AuthorRecord {
            author_id: format!("author{a:04}"),
            texts: vec![tokens.join(" ")],
            outcomes: BTreeMap::new(),
        });
    }

    // outcome from the PCVs the analysis will see
    let mut analysis_store = store.clone();
    analysis_store.set_frequencies(&corpus_frequencies(&records, &LetterTokenizer))?;
    let pcvs = build_pcvs(&records, &analysis_store, &SifConfig::default(), None, &LetterTokenizer)?;
    if pcvs.len() != records.len() {
        return Err(SsdError::Degenerate(
            "generator produced an author without content".into(),
        ));
    }
    let proj: Vec<f64> = pcvs
        .pcvs
        .iter()
        .map(|p| p.vector.iter().zip(&planted).map(|(a, b)| a * b).sum())
        .collect();
    let m = proj.iter().sum::<f64>() / proj.len() as f64;
    let sd = (proj.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (proj.len() - 1) as f64).sqrt();
    if sd == 0.0 {
        return Err(SsdError::Degenerate("planted projection has no variance".into()));
    }
    let outcome_scale = 1.0 / sd;
    let noise = Normal::new(0.0, scenario.noise_sd).map_err(|e| SsdError::Config(e.to_string()))?;
    for (record, p) in records.iter_mut().zip(&proj) {
        let e = if scenario.noise_sd > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        record.outcomes.insert(OUTCOME_NAME.to_string(), outcome_scale * p + e);
    }

    Ok(GeneratedCorpus {
        store,
        records,
        truth: GroundTruth {
            planted_direction: planted,
            effective_rank: r,
            positive_lexemes,
            negative_lexemes,
            outcome_scale,
            scenario: scenario.clone(),
        },
    })
}

/// `|cos(gradient, planted)|`.
pub fn direction_recovery(gradient: &[f64], truth: &GroundTruth) -> f64 {
    cosine(gradient, &truth.planted_direction).abs()
}

/// Recovery of the sweep-selected gradient.
pub fn recovery_cosine(result: &SweepResult, truth: &GroundTruth) -> f64 {
    direction_recovery(&result.selected_fit.gradient_d, truth)
}

/// Names of the three files [`write_generated`] produces.
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TRUTH_FILE: &str = "truth.json";

/// Serializes the embedding store as GloVe text.
pub fn embeddings_to_text(store: &EmbeddingStore) -> String {
    let mut out = String::new();
    for i in 0..store.len() {
        out.push_str(store.word(i));
        for v in store.vector(i) {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Serializes records as JSON lines, one row per text.
pub fn corpus_to_jsonl(records: &[AuthorRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        for text in &r.texts {
            let mut row = serde_json::Map::new();
            row.insert("author_id".into(), r.author_id.clone().into());
            row.insert("text".into(), text.clone().into());
            for (k, v) in &r.outcomes {
                row.insert(k.clone(), serde_json::Value::from(*v));
            }
            out.push_str(&serde_json::to_string(&row).map_err(|e| SsdError::Degenerate(e.to_string()))?);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Writes embeddings, corpus and truth files into `dir`.
pub fn write_generated(generated: &GeneratedCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SsdError::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| SsdError::io(p, e))
    };
    write(EMBEDDINGS_FILE, embeddings_to_text(&generated.store))?;
    write(CORPUS_FILE, corpus_to_jsonl(&generated.records)?)?;
    let truth = serde_json::to_string_pretty(&generated.truth).map_err(|e| SsdError::Degenerate(e.to_string()))?;
    write(TRUTH_FILE, truth + "\n")
}
