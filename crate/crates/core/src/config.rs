//! Run configuration: a flat TOML file whose keys can all be overridden from
//! the command line.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::composer::{ComposeMode, SifConfig, DEFAULT_REMOVE_TOP, DEFAULT_SIF_A, DEFAULT_WINDOW};
use crate::error::{Result, SsdError};
use crate::interpret::{InterpretSettings, NeighborFilter, DEFAULT_K_RANGE, DEFAULT_NEIGHBORS};
use crate::sweep::{FirstKPolicy, SweepSettings, DEFAULT_AUCK_RADIUS, DEFAULT_MEDIAN_WIN};

pub const DEFAULT_OUT_DIR: &str = "ssd_out";
pub const DEFAULT_SNIPPETS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Sweep,
    FixedK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub embeddings: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Words never reported as pole neighbors, one per line.
    pub exclude: Option<PathBuf>,
    /// Optional `word count` file; corpus counts are used otherwise.
    pub frequencies: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub outcome: Option<String>,

    pub sif_a: f64,
    pub remove_top: usize,
    pub compose_mode: ComposeMode,
    pub window: usize,

    pub mode: RunMode,
    pub fixed_k: Option<usize>,
    pub k_start: usize,
    pub k_stop: usize,
    pub k_step: usize,
    pub first_k: FirstKPolicy,
    pub auck_radius: usize,
    pub median_win: usize,

    pub neighbors: usize,
    pub cluster_k_min: usize,
    pub cluster_k_max: usize,
    pub restrict_to_corpus: bool,
    pub snippets: usize,
    pub seed: u64,

    /// Worker threads; does not affect results and is left out of artifacts.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embeddings: None,
            corpus: None,
            lexicon: None,
            exclude: None,
            frequencies: None,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            outcome: None,
            sif_a: DEFAULT_SIF_A,
            remove_top: DEFAULT_REMOVE_TOP,
            compose_mode: ComposeMode::WholeDocument,
            window: DEFAULT_WINDOW,
            mode: RunMode::Sweep,
            fixed_k: None,
            k_start: 1,
            k_stop: 119,
            k_step: 2,
            first_k: FirstKPolicy::Impute,
            auck_radius: DEFAULT_AUCK_RADIUS,
            median_win: DEFAULT_MEDIAN_WIN,
            neighbors: DEFAULT_NEIGHBORS,
            cluster_k_min: DEFAULT_K_RANGE.0,
            cluster_k_max: DEFAULT_K_RANGE.1,
            restrict_to_corpus: false,
            snippets: DEFAULT_SNIPPETS,
            seed: 0,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SsdError::Config(e.message().to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SsdError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SsdError::Config(e.to_string()))
    }

    /// Checks everything that can be checked without touching the inputs.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(SsdError::Config(m.to_string()));
        if self.embeddings.is_none() {
            return fail("embeddings path is required");
        }
        if self.corpus.is_none() {
            return fail("corpus path is required");
        }
        match &self.outcome {
            None => return fail("outcome name is required"),
            Some(o) if o.trim().is_empty() => return fail("outcome name is empty"),
            _ => {}
        }
        self.sif_config().validate()?;
        if self.compose_mode == ComposeMode::LexiconWindow && self.lexicon.is_none() {
            return fail("lexicon_window mode needs a lexicon file");
        }
        if self.k_start == 0 || self.k_step == 0 || self.k_stop < self.k_start {
            return fail("K grid needs 1 <= k_start <= k_stop and k_step >= 1");
        }
        if self.median_win.is_multiple_of(2) {
            return fail("median_win must be odd");
        }
        if self.neighbors == 0 {
            return fail("neighbors must be positive");
        }
        if self.cluster_k_min < 2 || self.cluster_k_max < self.cluster_k_min {
            return fail("cluster K range needs 2 <= cluster_k_min <= cluster_k_max");
        }
        if self.snippets == 0 {
            return fail("snippets must be positive");
        }
        if self.workers == Some(0) {
            return fail("workers must be positive");
        }
        match (self.mode, self.fixed_k) {
            (RunMode::FixedK, None) => fail("fixed_k mode needs a K"),
            (RunMode::FixedK, Some(0)) => fail("fixed K must be positive"),
            _ => Ok(()),
        }
    }

    pub fn sif_config(&self) -> SifConfig {
        SifConfig {
            a: self.sif_a,
            remove_top_components: self.remove_top,
            mode: self.compose_mode,
            window: self.window,
        }
    }

    pub fn k_grid(&self) -> Vec<usize> {
        (self.k_start..=self.k_stop).step_by(self.k_step.max(1)).collect()
    }

    pub fn interpret_settings(&self, filter: NeighborFilter) -> InterpretSettings {
        InterpretSettings {
            neighbors_per_pole: self.neighbors,
            k_range: (self.cluster_k_min, self.cluster_k_max),
            seed: self.seed,
            filter,
        }
    }

    pub fn sweep_settings(&self, filter: NeighborFilter) -> SweepSettings {
        SweepSettings {
            k_grid: self.k_grid(),
            interpret: self.interpret_settings(filter),
            auck_radius: self.auck_radius,
            median_win: self.median_win,
            first_k: self.first_k,
            workers: self.workers,
        }
    }

    pub fn outcome_name(&self) -> &str {
        self.outcome.as_deref().unwrap_or("")
    }

    /// The configuration as embedded in artifacts. Output location and worker
    /// count are dropped so that artifacts only depend on what they report.
    pub fn resolved(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("out_dir");
            map.remove("workers");
            map.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        }
        v
    }
}

/// Words from an exclusion list, lowercased.
pub fn exclusion_set(words: Vec<String>) -> HashSet<String> {
    words.into_iter().map(|w| w.to_lowercase()).collect()
}
