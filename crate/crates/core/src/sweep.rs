//! The PCA sweep: fit SSD over a grid of K, score each K on detrended
//! interpretability and gradient stability, and pick the smallest K with the
//! best joint score.

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingStore;
use crate::error::{Result, SsdError};
use crate::interpret::{cosine, interpret, InterpretSettings, InterpretabilityReport};
use crate::reducer::PcaBasis;
use crate::regression::{fit_gradient, GradientFit};

pub const DEFAULT_AUCK_RADIUS: usize = 3;
pub const DEFAULT_MEDIAN_WIN: usize = 7;
/// Residual variance below which detrended scores collapse to zero.
pub const DETREND_EPS: f64 = 1e-12;

/// `1 − cos(current, previous)`, in `[0, 2]`.
pub fn gradient_change(current: &[f64], previous: &[f64]) -> f64 {
    (1.0 - cosine(current, previous)).clamp(0.0, 2.0)
}

/// Running median over a centered window of odd width `win`, shrinking at
/// the edges. Even-sized edge windows take the lower median.
pub fn median_smooth(series: &[f64], win: usize) -> Result<Vec<f64>> {
    if win == 0 || win.is_multiple_of(2) {
        return Err(SsdError::Config(format!("median window must be odd, got {win}")));
    }
    if series.is_empty() {
        return Err(SsdError::InsufficientData("cannot smooth an empty series".into()));
    }
    let half = win / 2;
    let mut buf = Vec::with_capacity(win);
    Ok((0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(series.len() - 1);
            buf.clear();
            buf.extend_from_slice(&series[lo..=hi]);
            buf.sort_by(f64::total_cmp);
            buf[(buf.len() - 1) / 2]
        })
        .collect())
}

/// Mean over indices within `radius`, truncated at the edges.
pub fn auck(series: &[f64], radius: usize) -> Vec<f64> {
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(series.len() - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standardizes to mean 0 and sample sd 1; all zeros when the variance is
/// below [`DETREND_EPS`].
pub fn zscore(values: &[f64]) -> Vec<f64> {
    if values.len() < 2 {
        return vec![0.0; values.len()];
    }
    let m = mean(values);
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    let var = centered.iter().map(|c| c * c).sum::<f64>() / (values.len() - 1) as f64;
    if var < DETREND_EPS {
        return vec![0.0; values.len()];
    }
    let sd = var.sqrt();
    centered.iter().map(|c| c / sd).collect()
}

/// Residuals of `values` regressed on `[1, ln(cum_var)]`, standardized.
pub fn detrend_z(values: &[f64], cum_var: &[f64]) -> Result<Vec<f64>> {
    if values.len() != cum_var.len() {
        return Err(SsdError::DimensionMismatch {
            expected: values.len(),
            got: cum_var.len(),
        });
    }
    if values.len() < 3 {
        return Err(SsdError::InsufficientData(format!(
            "detrending needs at least 3 points, got {}",
            values.len()
        )));
    }
    if cum_var.iter().any(|&c| c.is_nan() || c <= 0.0) {
        return Err(SsdError::Degenerate("cumulative variance must be positive".into()));
    }
    let x: Vec<f64> = cum_var.iter().map(|c| c.ln()).collect();
    let (mx, my) = (mean(&x), mean(values));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(values).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(values)
        .map(|(xi, yi)| yi - (intercept + slope * xi))
        .collect();
    Ok(zscore(&residuals))
}

/// What to do with the first evaluated K, whose gradient change is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstKPolicy {
    /// Copy the successor's smoothed change.
    Impute,
    /// Impute for scoring, but never select the first K.
    Exclude,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub k_grid: Vec<usize>,
    pub interpret: InterpretSettings,
    pub auck_radius: usize,
    pub median_win: usize,
    pub first_k: FirstKPolicy,
    /// Worker threads for per-K fits; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            k_grid: default_k_grid(),
            interpret: InterpretSettings::default(),
            auck_radius: DEFAULT_AUCK_RADIUS,
            median_win: DEFAULT_MEDIAN_WIN,
            first_k: FirstKPolicy::Impute,
            workers: None,
        }
    }
}

/// `1, 3, …, 119`.
pub fn default_k_grid() -> Vec<usize> {
    (1..=119).step_by(2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitSummary {
    pub r2_adj: f64,
    pub f: f64,
    pub p: f64,
    pub beta_norm: f64,
}

/// Diagnostics for one grid K. Score fields are `None` on skipped rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub k: usize,
    pub cum_var: Option<f64>,
    pub interp_raw: Option<f64>,
    pub interp_z: Option<f64>,
    pub interp_auck: Option<f64>,
    pub delta: Option<f64>,
    pub delta_smooth: Option<f64>,
    pub stab_z: Option<f64>,
    pub stab_auck: Option<f64>,
    pub joint: Option<f64>,
    pub fit_summary: Option<FitSummary>,
    pub skipped: Option<String>,
}

impl SweepRecord {
    fn skipped(k: usize, reason: String) -> Self {
        SweepRecord {
            k,
            cum_var: None,
            interp_raw: None,
            interp_z: None,
            interp_auck: None,
            delta: None,
            delta_smooth: None,
            stab_z: None,
            stab_auck: None,
            joint: None,
            fit_summary: None,
            skipped: Some(reason),
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub selected_k: usize,
    pub selected_fit: GradientFit,
    pub selected_report: InterpretabilityReport,
}

impl SweepResult {
    pub fn selected_record(&self) -> &SweepRecord {
        self.records
            .iter()
            .find(|r| r.k == self.selected_k)
            .expect("selected K is among the records")
    }
}

/// Smallest K attaining the maximal joint score over non-skipped records.
pub fn select_k(records: &[SweepRecord], first_k: FirstKPolicy) -> Option<usize> {
    let mut candidates = records.iter().filter(|r| r.joint.is_some());
    if first_k == FirstKPolicy::Exclude {
        candidates.next();
    }
    let mut best: Option<(usize, f64)> = None;
    for r in candidates {
        let j = r.joint.expect("filtered");
        if j.is_nan() {
            continue;
        }
        match best {
            Some((bk, bj)) if j < bj || (j == bj && r.k >= bk) => {}
            _ => best = Some((r.k, j)),
        }
    }
    best.map(|(k, _)| k)
}

/// Fills in the score columns of `records` from their raw diagnostics.
/// `gradients` holds the embedding-space gradient of each non-skipped record
/// in order.
pub fn score_records(records: &mut [SweepRecord], gradients: &[Vec<f64>], settings: &SweepSettings) -> Result<()> {
    let live: Vec<usize> = (0..records.len()).filter(|&i| !records[i].is_skipped()).collect();
    if live.len() < 3 {
        return Err(SsdError::Sweep(format!(
            "only {} feasible K values; at least 3 are required",
            live.len()
        )));
    }
    if gradients.len() != live.len() {
        return Err(SsdError::DimensionMismatch {
            expected: live.len(),
            got: gradients.len(),
        });
    }

    let raw: Vec<f64> = live.iter().map(|&i| records[i].interp_raw.expect("live")).collect();
    let cum: Vec<f64> = live.iter().map(|&i| records[i].cum_var.expect("live")).collect();
    let interp_z = detrend_z(&raw, &cum)?;
    let interp_auck = auck(&interp_z, settings.auck_radius);

    let deltas: Vec<f64> = gradients.windows(2).map(|w| gradient_change(&w[1], &w[0])).collect();
    let mut delta_smooth = Vec::with_capacity(live.len());
    let smoothed = median_smooth(&deltas, settings.median_win)?;
    delta_smooth.push(smoothed[0]);
    delta_smooth.extend_from_slice(&smoothed);
    let neg: Vec<f64> = delta_smooth.iter().map(|d| -d).collect();
    let stab_z = zscore(&neg);
    let stab_auck = auck(&stab_z, settings.auck_radius);

    for (pos, &i) in live.iter().enumerate() {
        let r = &mut records[i];
        r.interp_z = Some(interp_z[pos]);
        r.interp_auck = Some(interp_auck[pos]);
        r.delta = if pos == 0 { None } else { Some(deltas[pos - 1]) };
        r.delta_smooth = Some(delta_smooth[pos]);
        r.stab_z = Some(stab_z[pos]);
        r.stab_auck = Some(stab_auck[pos]);
        r.joint = Some(0.5 * (interp_auck[pos] + stab_auck[pos]));
    }
    Ok(())
}

/// Everything computed for a single K.
#[derive(Debug, Clone)]
pub struct KEvaluation {
    pub k: usize,
    pub cum_var: f64,
    pub fit: GradientFit,
    pub report: InterpretabilityReport,
}

/// Fits and interprets SSD at one K.
pub fn evaluate_k(
    basis: &PcaBasis,
    pcvs: &DMatrix<f64>,
    outcomes: &[f64],
    store: &EmbeddingStore,
    k: usize,
    settings: &InterpretSettings,
) -> Result<KEvaluation> {
    let max = basis.max_components().min(pcvs.nrows().saturating_sub(2));
    if k == 0 || k > max {
        return Err(SsdError::Bounds { k, max });
    }
    let pca = basis.truncate(k)?;
    let fit = fit_gradient(&pca, pcvs, outcomes)?;
    let report = interpret(&fit.gradient_d, store, settings)?;
    Ok(KEvaluation {
        k,
        cum_var: pca.cumulative_ratio,
        fit,
        report,
    })
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SsdError::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs the sweep over `settings.k_grid` on an n × D PCV matrix.
pub fn run_sweep(
    pcvs: &DMatrix<f64>,
    outcomes: &[f64],
    store: &EmbeddingStore,
    settings: &SweepSettings,
) -> Result<SweepResult> {
    if settings.k_grid.is_empty() {
        return Err(SsdError::Config("K grid is empty".into()));
    }
    if settings.k_grid.windows(2).any(|w| w[0] >= w[1]) || settings.k_grid[0] == 0 {
        return Err(SsdError::Config(
            "K grid must be strictly increasing positive integers".into(),
        ));
    }
    if settings.median_win.is_multiple_of(2) {
        return Err(SsdError::Config(format!(
            "median window must be odd, got {}",
            settings.median_win
        )));
    }
    if pcvs.nrows() != outcomes.len() {
        return Err(SsdError::DimensionMismatch {
            expected: pcvs.nrows(),
            got: outcomes.len(),
        });
    }
    let basis = PcaBasis::fit(pcvs)?;
    let (n, d) = pcvs.shape();
    let feasible_max = n.saturating_sub(2).min(d);

    let evaluations: Vec<std::result::Result<KEvaluation, String>> = with_workers(settings.workers, || {
        settings
            .k_grid
            .par_iter()
            .map(|&k| {
                if k > feasible_max {
                    return Err(format!("K exceeds min(n-2, D) = {feasible_max}"));
                }
                evaluate_k(&basis, pcvs, outcomes, store, k, &settings.interpret).map_err(|e| e.to_string())
            })
            .collect()
    })?;

    let mut records = Vec::with_capacity(evaluations.len());
    let mut gradients = Vec::new();
    let mut kept: Vec<Option<KEvaluation>> = Vec::with_capacity(evaluations.len());
    for (&k, eval) in settings.k_grid.iter().zip(evaluations) {
        match eval {
            Ok(ev) => {
                gradients.push(ev.fit.gradient_d.clone());
                records.push(SweepRecord {
                    cum_var: Some(ev.cum_var),
                    interp_raw: Some(ev.report.score),
                    fit_summary: Some(FitSummary {
                        r2_adj: ev.fit.ols.r2_adj,
                        f: ev.fit.ols.f_stat,
                        p: ev.fit.ols.p_value,
                        beta_norm: ev.fit.beta_norm,
                    }),
                    skipped: None,
                    ..SweepRecord::skipped(k, String::new())
                });
                kept.push(Some(ev));
            }
            Err(reason) => {
                if k <= feasible_max {
                    warn!("K={k} skipped: {reason}");
                }
                records.push(SweepRecord::skipped(k, reason));
                kept.push(None);
            }
        }
    }
    if gradients.is_empty() {
        return Err(SsdError::Sweep("no K in the grid is feasible".into()));
    }
    score_records(&mut records, &gradients, settings)?;

    let selected_k = select_k(&records, settings.first_k).ok_or_else(|| SsdError::Sweep("no selectable K".into()))?;
    info!("sweep selected K={selected_k}");
    let selected = kept
        .into_iter()
        .flatten()
        .find(|ev| ev.k == selected_k)
        .expect("selected K was evaluated");
    Ok(SweepResult {
        records,
        selected_k,
        selected_fit: selected.fit,
        selected_report: selected.report,
    })
}
