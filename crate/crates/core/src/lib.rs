//! Supervised semantic differential (SSD) with PCA-sweep selection of the
//! number of retained components.
//!
//! The pipeline composes one vector per author from word embeddings
//! ([`composer`]), reduces them with PCA ([`reducer`]), regresses an outcome on
//! the component scores ([`regression`]) and interprets the resulting
//! semantic gradient through pole-neighbor clusters ([`interpret`]). The
//! [`sweep`] module repeats this over a grid of K and selects the smallest K
//! with the best joint interpretability/stability score.

pub mod app;
pub mod composer;
pub mod config;
pub mod corpus;
pub mod error;
pub mod interpret;
pub mod reducer;
pub mod regression;
pub mod report;
pub mod sweep;
pub mod synthbench;

pub use composer::{build_pcvs, ComposeMode, Pcv, PcvSet, SifConfig};
pub use config::{RunConfig, RunMode};
pub use corpus::{load_corpus, load_embeddings, tokenize, AuthorRecord, EmbeddingStore, Lexicon};
pub use error::{Result, SsdError};
pub use interpret::{InterpretSettings, InterpretabilityReport, Pole, PoleCluster};
pub use reducer::{pca_fit, PcaBasis, PcaModel};
pub use regression::{f_upper_tail, fit_ols, GradientFit, OlsFit};
pub use sweep::{run_sweep, SweepRecord, SweepResult, SweepSettings};
pub use synthbench::{generate, GroundTruth, PlantedScenario};
