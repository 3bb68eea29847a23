//! Serialized outputs: diagnostics CSV, fit and cluster JSON, cluster
//! markdown and the SVG curve panels.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::composer::Pcv;
use crate::corpus::AuthorRecord;
use crate::error::{Result, SsdError};
use crate::interpret::{snippets_for_cluster, InterpretabilityReport, Pole};
use crate::regression::{format_p, GradientFit};
use crate::sweep::SweepRecord;

pub const DIAGNOSTICS_FILE: &str = "sweep_diagnostics.csv";
pub const FIT_FILE: &str = "selected_fit.json";
pub const CLUSTERS_JSON_FILE: &str = "clusters.json";
pub const CLUSTERS_MD_FILE: &str = "clusters.md";
pub const CURVES_FILE: &str = "curves.svg";

pub const DIAGNOSTICS_HEADER: &str =
    "k,cum_var,interp_raw,interp_z,interp_auck,delta,delta_smooth,stab_z,stab_auck,joint,r2_adj,f,p,beta_norm,skipped,reason";

const TOP_WORDS: usize = 10;
const EXCERPT_CHARS: usize = 160;

/// Formats with 10 significant digits, `%g` style.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One comment line carrying the resolved configuration as JSON.
fn comment_header(prefix: &str, config: &Value) -> String {
    format!(
        "{prefix} ssd-config: {}\n",
        serde_json::to_string(config).expect("json value")
    )
}

/// Per-K diagnostics table.
pub fn diagnostics_csv(records: &[SweepRecord], config: &Value) -> String {
    let mut out = comment_header("#", config);
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        let fs = r.fit_summary;
        let cols = [
            r.k.to_string(),
            opt(r.cum_var),
            opt(r.interp_raw),
            opt(r.interp_z),
            opt(r.interp_auck),
            opt(r.delta),
            opt(r.delta_smooth),
            opt(r.stab_z),
            opt(r.stab_auck),
            opt(r.joint),
            opt(fs.map(|f| f.r2_adj)),
            opt(fs.map(|f| f.f)),
            fs.map(|f| format_p(f.p)).unwrap_or_default(),
            opt(fs.map(|f| f.beta_norm)),
            r.is_skipped().to_string(),
            csv_field(r.skipped.as_deref().unwrap_or("")),
        ];
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Regression statistics at the chosen K.
pub fn selected_fit_json(fit: &GradientFit, outcome: &str, config: &Value) -> Result<String> {
    let ols = &fit.ols;
    let body = json!({
        "k": fit.k(),
        "r2_adj": ols.r2_adj,
        "f": finite_or_null(ols.f_stat),
        "p": ols.p_value,
        "p_display": format_p(ols.p_value),
        "r": ols.r(),
        "r2": ols.r2,
        "beta_norm": fit.beta_norm,
        "alpha": ols.alpha,
        "n": ols.n,
        "outcome": outcome,
        "rank_deficient": ols.rank_deficient,
        "config": config,
    });
    to_pretty(&body)
}

fn to_pretty(v: &impl Serialize) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| SsdError::Degenerate(format!("serialization failed: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct SnippetRow {
    pub author_id: String,
    pub cosine: f64,
    pub excerpt: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterRow {
    pub pole: Pole,
    pub size: usize,
    pub top_words: Vec<String>,
    pub members: Vec<String>,
    pub coherence: f64,
    pub alignment: f64,
    pub snippets: Vec<SnippetRow>,
}

fn excerpt(record: Option<&&AuthorRecord>) -> String {
    let Some(r) = record else { return String::new() };
    let joined = r.texts.join(" / ");
    let mut out: String = joined.chars().take(EXCERPT_CHARS).collect();
    if joined.chars().count() > EXCERPT_CHARS {
        out.push_str("...");
    }
    out
}

/// One row per cluster with its nearest-author snippets.
pub fn cluster_rows(
    report: &InterpretabilityReport,
    pcvs: &[Pcv],
    records: &[AuthorRecord],
    top_m: usize,
) -> Vec<ClusterRow> {
    let by_id: HashMap<&str, &AuthorRecord> = records.iter().map(|r| (r.author_id.as_str(), r)).collect();
    report
        .clusters()
        .map(|c| ClusterRow {
            pole: c.pole,
            size: c.size,
            top_words: c.member_words.iter().take(TOP_WORDS).cloned().collect(),
            members: c.member_words.clone(),
            coherence: c.coherence,
            alignment: c.alignment,
            snippets: snippets_for_cluster(&c.centroid, pcvs, top_m)
                .into_iter()
                .map(|s| SnippetRow {
                    excerpt: excerpt(by_id.get(s.author_id.as_str())),
                    author_id: s.author_id,
                    cosine: s.cosine,
                })
                .collect(),
        })
        .collect()
}

pub fn clusters_json(
    rows: &[ClusterRow],
    report: &InterpretabilityReport,
    k: usize,
    outcome: &str,
    config: &Value,
) -> Result<String> {
    let poles: Vec<Value> = report
        .poles
        .iter()
        .map(|p| json!({"pole": p.pole, "k": p.k, "silhouette": p.silhouette}))
        .collect();
    to_pretty(&json!({
        "k": k,
        "outcome": outcome,
        "interpretability": report.score,
        "neighbors_per_pole": report.neighbors_per_pole,
        "poles": poles,
        "clusters": rows,
        "config": config,
    }))
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn clusters_markdown(
    rows: &[ClusterRow],
    report: &InterpretabilityReport,
    k: usize,
    outcome: &str,
    config: &Value,
) -> String {
    let mut out = String::new();
    out.push_str(comment_header("<!--", config).trim_end());
    out.push_str(" -->\n");
    let _ = writeln!(out, "# Pole clusters for {outcome} at K={k}\n");
    let _ = writeln!(out, "Interpretability score: {}\n", fmt_sig(report.score));
    out.push_str("| Pole | Size | Coherence | Alignment | Top words | Excerpt |\n");
    out.push_str("|:----:|-----:|----------:|----------:|-----------|---------|\n");
    for r in rows {
        let ex = r
            .snippets
            .first()
            .map(|s| format!("\"{}\" ({})", md_cell(&s.excerpt), md_cell(&s.author_id)))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {:.3} | {} | {} |",
            r.pole.symbol(),
            r.size,
            r.coherence,
            r.alignment,
            md_cell(&r.top_words.join(", ")),
            ex
        );
    }
    out
}

/// Stacked panels of interpretability, stability and joint curves against K.
pub fn curves_svg(records: &[SweepRecord], selected_k: usize, config: &Value) -> String {
    let live: Vec<&SweepRecord> = records.iter().filter(|r| !r.is_skipped()).collect();
    type Series = fn(&SweepRecord) -> Option<f64>;
    let panels: [(&str, Series); 4] = [
        ("detrended interpretability (interp_z)", |r| r.interp_z),
        ("interpretability AUCK (interp_auck)", |r| r.interp_auck),
        ("stability AUCK (stab_auck)", |r| r.stab_auck),
        ("joint score", |r| r.joint),
    ];
    let (w, ph, margin) = (640.0, 150.0, 48.0);
    let height = panels.len() as f64 * (ph + margin) + margin;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="11">"#
    );
    let cfg = serde_json::to_string(config).expect("json").replace("--", "- -");
    let _ = writeln!(svg, "<!-- ssd-config: {cfg} -->");
    let _ = writeln!(svg, r#"<rect width="{w}" height="{height}" fill="white"/>"#);
    if live.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let kmin = live.first().map_or(0, |r| r.k) as f64;
    let kmax = live.last().map_or(1, |r| r.k) as f64;
    let kspan = (kmax - kmin).max(1.0);
    let x0 = margin;
    let pw = w - 2.0 * margin;
    let xpos = |k: f64| x0 + (k - kmin) / kspan * pw;

    for (p, (title, get)) in panels.iter().enumerate() {
        let top = margin + p as f64 * (ph + margin);
        let vals: Vec<(f64, f64)> = live.iter().filter_map(|r| get(r).map(|v| (r.k as f64, v))).collect();
        let lo = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let ypos = |v: f64| top + ph - (v - lo) / span * ph;
        let _ = writeln!(svg, r#"<text x="{x0}" y="{:.1}">{title}</text>"#, top - 8.0);
        let _ = writeln!(
            svg,
            r##"<rect x="{x0}" y="{top:.1}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>"##
        );
        let sx = xpos(selected_k as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{sx:.1}" y1="{top:.1}" x2="{sx:.1}" y2="{:.1}" stroke="#c33" stroke-dasharray="4 3"/>"##,
            top + ph
        );
        let pts: Vec<String> = vals
            .iter()
            .map(|(k, v)| format!("{:.1},{:.1}", xpos(*k), ypos(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{}"/>"##,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            top + 10.0,
            fmt_short(hi)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            top + ph,
            fmt_short(lo)
        );
        let _ = writeln!(svg, r#"<text x="{x0}" y="{:.1}">K={}</text>"#, top + ph + 14.0, kmin);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">K={}</text>"#,
            x0 + pw,
            top + ph + 14.0,
            kmax
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_short(v: f64) -> String {
    format!("{v:.2}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.1234567890123), "0.123456789");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(123456.7890123), "123456.789");
        assert_eq!(fmt_sig(1.5e-7), "1.5e-07");
        assert_eq!(fmt_sig(9.99999999999), "10");
        assert_eq!(fmt_sig(12345678901.0), "1.23456789e+10");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_header_and_skipped_rows() {
        let rec = SweepRecord {
            k: 9,
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
            skipped: Some("K exceeds min(n-2, D) = 8".into()),
        };
        let csv = diagnostics_csv(&[rec], &json!({"seed": 1}));
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# ssd-config: "));
        assert_eq!(lines[1], DIAGNOSTICS_HEADER);
        assert_eq!(lines[2], "9,,,,,,,,,,,,,,true,\"K exceeds min(n-2, D) = 8\"");
        assert_eq!(lines[2].matches(',').count(), 16);
    }
}
