//! End-to-end commands behind the CLI. Every command computes all of its
//! outputs in memory first and only then writes them, so a failing run
//! leaves no artifacts behind.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;

use crate::composer::{build_pcvs, PcvSet};
use crate::config::{exclusion_set, RunConfig, RunMode};
use crate::corpus::{
    corpus_frequencies, load_corpus, load_embeddings, load_frequencies, load_lexicon, read_word_list, AuthorRecord,
    EmbeddingStore, LetterTokenizer, Tokenizer,
};
use crate::error::{Result, SsdError};
use crate::interpret::{InterpretabilityReport, NeighborFilter};
use crate::reducer::PcaBasis;
use crate::regression::GradientFit;
use crate::report::{
    cluster_rows, clusters_json, clusters_markdown, curves_svg, diagnostics_csv, selected_fit_json, CLUSTERS_JSON_FILE,
    CLUSTERS_MD_FILE, CURVES_FILE, DIAGNOSTICS_FILE, FIT_FILE,
};
use crate::sweep::{evaluate_k, run_sweep, SweepResult};
use crate::synthbench::{generate, write_generated, GeneratedCorpus, PlantedScenario};

/// Everything loaded and composed before any K is fitted.
pub struct Prepared {
    pub store: EmbeddingStore,
    pub records: Vec<AuthorRecord>,
    pub pcvs: PcvSet,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub filter: NeighborFilter,
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| SsdError::Config(format!("{what} path is required")))
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let outcome = cfg.outcome_name().to_string();
    let records = load_corpus(required(&cfg.corpus, "corpus")?, std::slice::from_ref(&outcome))?;
    let mut store = load_embeddings(required(&cfg.embeddings, "embeddings")?, None)?;
    let tokenizer = LetterTokenizer;
    let freqs = match &cfg.frequencies {
        Some(p) => load_frequencies(p)?,
        None => corpus_frequencies(&records, &tokenizer),
    };
    store.set_frequencies(&freqs)?;
    let lexicon = cfg.lexicon.as_ref().map(load_lexicon).transpose()?;
    let pcvs = build_pcvs(&records, &store, &cfg.sif_config(), lexicon.as_ref(), &tokenizer)?;
    let y = pcvs.outcomes(&records, &outcome)?;
    let x = pcvs.matrix();

    let mut filter = NeighborFilter::default();
    if let Some(p) = &cfg.exclude {
        filter.exclude = exclusion_set(read_word_list(p)?);
    }
    if cfg.restrict_to_corpus {
        let seen: HashSet<String> = records
            .iter()
            .flat_map(|r| r.texts.iter().flat_map(|t| tokenizer.tokenize(t)))
            .collect();
        filter.restrict_to = Some(seen);
    }
    info!(
        "{} PCVs of dimension {} ({} authors dropped)",
        pcvs.len(),
        store.dim(),
        pcvs.dropped.len()
    );
    Ok(Prepared {
        store,
        records,
        pcvs,
        x,
        y,
        filter,
    })
}

/// Named file contents, written together by [`write_artifacts`].
pub type Artifacts = Vec<(&'static str, String)>;

fn interpretation_artifacts(
    cfg: &RunConfig,
    prep: &Prepared,
    fit: &GradientFit,
    report: &InterpretabilityReport,
) -> Result<Artifacts> {
    let config = cfg.resolved();
    let outcome = cfg.outcome_name();
    let rows = cluster_rows(report, &prep.pcvs.pcvs, &prep.records, cfg.snippets);
    Ok(vec![
        (FIT_FILE, selected_fit_json(fit, outcome, &config)?),
        (
            CLUSTERS_JSON_FILE,
            clusters_json(&rows, report, fit.k(), outcome, &config)?,
        ),
        (
            CLUSTERS_MD_FILE,
            clusters_markdown(&rows, report, fit.k(), outcome, &config),
        ),
    ])
}

pub fn sweep_artifacts(cfg: &RunConfig, prep: &Prepared) -> Result<(SweepResult, Artifacts)> {
    let settings = cfg.sweep_settings(prep.filter.clone());
    let result = run_sweep(&prep.x, &prep.y, &prep.store, &settings)?;
    let config = cfg.resolved();
    let mut files = vec![(DIAGNOSTICS_FILE, diagnostics_csv(&result.records, &config))];
    files.extend(interpretation_artifacts(
        cfg,
        prep,
        &result.selected_fit,
        &result.selected_report,
    )?);
    files.push((CURVES_FILE, curves_svg(&result.records, result.selected_k, &config)));
    Ok((result, files))
}

pub fn fixed_k_artifacts(cfg: &RunConfig, prep: &Prepared, k: usize) -> Result<(GradientFit, Artifacts)> {
    let basis = PcaBasis::fit(&prep.x)?;
    let settings = cfg.interpret_settings(prep.filter.clone());
    let ev = evaluate_k(&basis, &prep.x, &prep.y, &prep.store, k, &settings)?;
    let files = interpretation_artifacts(cfg, prep, &ev.fit, &ev.report)?;
    Ok((ev.fit, files))
}

/// Writes each file through a temporary name so readers never see half a file.
pub fn write_artifacts(dir: &Path, files: &Artifacts) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| SsdError::io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, body).map_err(|e| SsdError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| SsdError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Short description of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub k: usize,
    pub r2_adj: f64,
    pub p_value: f64,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    fn new(fit: &GradientFit, files: Vec<PathBuf>) -> Self {
        RunSummary {
            k: fit.k(),
            r2_adj: fit.ols.r2_adj,
            p_value: fit.ols.p_value,
            files,
        }
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<RunSummary> {
    let prep = prepare(cfg)?;
    let (result, files) = sweep_artifacts(cfg, &prep)?;
    let written = write_artifacts(&cfg.out_dir, &files)?;
    Ok(RunSummary::new(&result.selected_fit, written))
}

pub fn cmd_fixed_k(cfg: &RunConfig) -> Result<RunSummary> {
    if cfg.mode != RunMode::FixedK {
        return Err(SsdError::Config("configuration is not in fixed_k mode".into()));
    }
    let k = cfg
        .fixed_k
        .ok_or_else(|| SsdError::Config("fixed_k mode needs a K".into()))?;
    let prep = prepare(cfg)?;
    let (fit, files) = fixed_k_artifacts(cfg, &prep, k)?;
    let written = write_artifacts(&cfg.out_dir, &files)?;
    Ok(RunSummary::new(&fit, written))
}

/// Dispatches on `cfg.mode`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    match cfg.mode {
        RunMode::Sweep => cmd_sweep(cfg),
        RunMode::FixedK => cmd_fixed_k(cfg),
    }
}

pub fn cmd_generate(scenario: &PlantedScenario, out_dir: &Path) -> Result<GeneratedCorpus> {
    let generated = generate(scenario)?;
    write_generated(&generated, out_dir)?;
    Ok(generated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::{CORPUS_FILE, EMBEDDINGS_FILE, OUTCOME_NAME};

    fn small_inputs(dir: &Path) -> RunConfig {
        let scenario = PlantedScenario {
            n_authors: 80,
            vocab_size: 400,
            dim: 16,
            effective_rank: 3,
            ..PlantedScenario::default()
        };
        cmd_generate(&scenario, dir).unwrap();
        RunConfig {
            embeddings: Some(dir.join(EMBEDDINGS_FILE)),
            corpus: Some(dir.join(CORPUS_FILE)),
            outcome: Some(OUTCOME_NAME.into()),
            out_dir: dir.join("out"),
            k_stop: 15,
            neighbors: 20,
            ..RunConfig::default()
        }
    }

    #[test]
    fn sweep_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_inputs(dir.path());
        let summary = cmd_sweep(&cfg).unwrap();
        assert_eq!(summary.files.len(), 5);
        for f in &summary.files {
            assert!(f.exists());
        }
        let fit: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(cfg.out_dir.join(FIT_FILE)).unwrap()).unwrap();
        assert_eq!(fit["k"].as_u64().unwrap() as usize, summary.k);
    }

    #[test]
    fn fixed_k_skips_sweep_outputs_and_checks_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_inputs(dir.path());
        cfg.mode = RunMode::FixedK;
        cfg.fixed_k = Some(1);
        let summary = cmd_fixed_k(&cfg).unwrap();
        assert_eq!(summary.k, 1);
        assert!(!cfg.out_dir.join(DIAGNOSTICS_FILE).exists());
        assert!(!cfg.out_dir.join(CURVES_FILE).exists());

        cfg.fixed_k = Some(200);
        cfg.out_dir = dir.path().join("out2");
        let err = cmd_fixed_k(&cfg).unwrap_err();
        assert!(matches!(err, SsdError::Bounds { .. }), "{err}");
        assert!(!cfg.out_dir.exists());
    }

    #[test]
    fn missing_corpus_leaves_no_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_inputs(dir.path());
        cfg.corpus = Some(dir.path().join("nope.jsonl"));
        let err = cmd_sweep(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(!cfg.out_dir.exists());
    }
}
