//! Personal concept vectors: SIF-weighted composition and top-component removal.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorRecord, EmbeddingStore, Lexicon, Tokenizer};
use crate::error::{Result, SsdError};
use crate::reducer::PcaBasis;

pub const DEFAULT_SIF_A: f64 = 1e-3;
pub const DEFAULT_REMOVE_TOP: usize = 1;
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeMode {
    WholeDocument,
    LexiconWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SifConfig {
    pub a: f64,
    pub remove_top_components: usize,
    pub mode: ComposeMode,
    pub window: usize,
}

impl Default for SifConfig {
    fn default() -> Self {
        SifConfig {
            a: DEFAULT_SIF_A,
            remove_top_components: DEFAULT_REMOVE_TOP,
            mode: ComposeMode::WholeDocument,
            window: DEFAULT_WINDOW,
        }
    }
}

impl SifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(SsdError::Config(format!("SIF a must be positive, got {}", self.a)));
        }
        if self.mode == ComposeMode::LexiconWindow && self.window == 0 {
            return Err(SsdError::Config("lexicon window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Smooth inverse frequency weight `a / (a + p)`.
pub fn sif_weight(p: f64, a: f64) -> f64 {
    a / (a + p)
}

/// SIF-weighted sum of in-vocabulary token vectors divided by the number of
/// in-vocabulary tokens. Returns the vector and the contributing token count.
pub fn compose_raw<S: AsRef<str>>(tokens: &[S], store: &EmbeddingStore, cfg: &SifConfig) -> Result<(Vec<f64>, usize)> {
    let mut acc = vec![0.0; store.dim()];
    let mut count = 0usize;
    for token in tokens {
        let Some(idx) = store.index_of(token.as_ref()) else {
            continue;
        };
        let w = sif_weight(store.frequency(idx).unwrap_or(0.0), cfg.a);
        for (a, v) in acc.iter_mut().zip(store.vector(idx)) {
            *a += w * v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(SsdError::NoContent);
    }
    let c = count as f64;
    acc.iter_mut().for_each(|a| *a /= c);
    Ok((acc, count))
}

/// Tokens within `window` positions of each lexicon occurrence, in document
/// order. Lexicon terms never count as context. Overlapping windows repeat
/// the shared tokens.
pub fn extract_lexicon_contexts<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon, window: usize) -> Vec<String> {
    let mut out = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        if !lexicon.contains(tok.as_ref()) {
            continue;
        }
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(tokens.len() - 1);
        for t in &tokens[lo..=hi] {
            if !lexicon.contains(t.as_ref()) {
                out.push(t.as_ref().to_string());
            }
        }
    }
    out
}

/// Removes the projection of every row onto the top `m` principal directions
/// of the centered rows. The rows themselves are not centered.
pub fn remove_top_components(x: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Ok(x.clone());
    }
    if x.nrows() < 2 {
        return Err(SsdError::InsufficientData(format!(
            "top-component removal needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    let basis = PcaBasis::fit(x)?;
    let rank = basis.rank();
    if m > rank {
        return Err(SsdError::DegenerateRank(format!(
            "cannot remove {m} components from data of centered rank {rank}"
        )));
    }
    let dirs = basis.truncate(m.min(basis.max_components()))?.components;
    let coef = x * dirs.transpose();
    Ok(x - coef * dirs)
}

/// One author's composed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcv {
    pub author_id: String,
    pub vector: Vec<f64>,
    pub token_count: usize,
}

/// Surviving PCVs plus the authors that contributed nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct PcvSet {
    pub pcvs: Vec<Pcv>,
    pub dropped: Vec<String>,
}

impl PcvSet {
    pub fn len(&self) -> usize {
        self.pcvs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pcvs.is_empty()
    }

    /// n × D matrix with one PCV per row.
    pub fn matrix(&self) -> DMatrix<f64> {
        pcv_matrix(&self.pcvs)
    }

    /// Outcome values aligned with the PCV order.
    pub fn outcomes(&self, records: &[AuthorRecord], name: &str) -> Result<Vec<f64>> {
        let by_id: std::collections::HashMap<&str, &AuthorRecord> =
            records.iter().map(|r| (r.author_id.as_str(), r)).collect();
        self.pcvs
            .iter()
            .map(|p| {
                by_id
                    .get(p.author_id.as_str())
                    .ok_or_else(|| SsdError::Consistency {
                        author_id: p.author_id.clone(),
                        msg: "PCV has no matching corpus record".into(),
                    })?
                    .outcome(name)
            })
            .collect()
    }
}

pub fn pcv_matrix(pcvs: &[Pcv]) -> DMatrix<f64> {
    let d = pcvs.first().map_or(0, |p| p.vector.len());
    DMatrix::from_fn(pcvs.len(), d, |i, j| pcvs[i].vector[j])
}

/// Composes one PCV per author, then applies top-component removal across the set.
pub fn build_pcvs(
    records: &[AuthorRecord],
    store: &EmbeddingStore,
    cfg: &SifConfig,
    lexicon: Option<&Lexicon>,
    tokenizer: &dyn Tokenizer,
) -> Result<PcvSet> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(SsdError::EmptyInput("no author records".into()));
    }
    let lexicon = match (cfg.mode, lexicon) {
        (ComposeMode::LexiconWindow, None) => {
            return Err(SsdError::Config("lexicon_window mode requires a lexicon".into()))
        }
        (ComposeMode::LexiconWindow, Some(l)) if l.is_empty() => {
            return Err(SsdError::Config("lexicon is empty".into()))
        }
        (ComposeMode::LexiconWindow, l) => l,
        (ComposeMode::WholeDocument, _) => None,
    };

    let composed: Vec<Option<Pcv>> = records
        .par_iter()
        .map(|record| {
            let tokens: Vec<String> = record.texts.iter().flat_map(|t| tokenizer.tokenize(t)).collect();
            let tokens = match lexicon {
                Some(lex) => extract_lexicon_contexts(&tokens, lex, cfg.window),
                None => tokens,
            };
            compose_raw(&tokens, store, cfg).ok().map(|(vector, token_count)| Pcv {
                author_id: record.author_id.clone(),
                vector,
                token_count,
            })
        })
        .collect();

    let mut pcvs = Vec::with_capacity(records.len());
    let mut dropped = Vec::new();
    for (record, pcv) in records.iter().zip(composed) {
        match pcv {
            Some(p) => pcvs.push(p),
            None => dropped.push(record.author_id.clone()),
        }
    }
    if !dropped.is_empty() {
        warn!("{} author(s) without embeddable content dropped", dropped.len());
    }
    if pcvs.len() < 3 {
        return Err(SsdError::InsufficientData(format!(
            "only {} PCVs survived composition; at least 3 are required",
            pcvs.len()
        )));
    }

    if cfg.remove_top_components > 0 {
        let cleaned = remove_top_components(&pcv_matrix(&pcvs), cfg.remove_top_components)?;
        for (i, p) in pcvs.iter_mut().enumerate() {
            p.vector = cleaned.row(i).iter().copied().collect();
        }
    }
    Ok(PcvSet { pcvs, dropped })
}
