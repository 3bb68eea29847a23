//! Runs the sweep on a generated scenario and prints the diagnostic curves.
//!
//! `cargo run --release --example planted_sweep -- [seed] [noise_sd] [tokens_per_author]`

use ssd_core::corpus::{corpus_frequencies, LetterTokenizer};
use ssd_core::synthbench::{direction_recovery, recovery_cosine, OUTCOME_NAME};
use ssd_core::{build_pcvs, generate, run_sweep, PlantedScenario, SifConfig, SweepSettings};

fn main() -> ssd_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let noise_sd = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let tokens_per_author = args.next().and_then(|s| s.parse().ok()).unwrap_or(80);
    let scenario = PlantedScenario {
        seed,
        noise_sd,
        tokens_per_author,
        ..PlantedScenario::default()
    };

    let t = std::time::Instant::now();
    let g = generate(&scenario)?;
    let mut store = g.store.clone();
    store.set_frequencies(&corpus_frequencies(&g.records, &LetterTokenizer))?;
    let pcvs = build_pcvs(&g.records, &store, &SifConfig::default(), None, &LetterTokenizer)?;
    let y = pcvs.outcomes(&g.records, OUTCOME_NAME)?;
    let x = pcvs.matrix();

    let mut settings = SweepSettings::default();
    settings.interpret.seed = seed;
    let result = run_sweep(&x, &y, &store, &settings)?;

    println!(
        "{:>4} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6}",
        "k", "cumvar", "raw", "i_z", "i_auck", "delta", "stab_z", "s_auck", "joint", "recov"
    );
    for r in result.records.iter().filter(|r| !r.is_skipped()) {
        let ev = ssd_core::sweep::evaluate_k(&ssd_core::PcaBasis::fit(&x)?, &x, &y, &store, r.k, &settings.interpret)?;
        println!(
            "{:>4} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>6.3}",
            r.k,
            r.cum_var.unwrap(),
            r.interp_raw.unwrap(),
            r.interp_z.unwrap(),
            r.interp_auck.unwrap(),
            r.delta.unwrap_or(f64::NAN),
            r.stab_z.unwrap(),
            r.stab_auck.unwrap(),
            r.joint.unwrap(),
            direction_recovery(&ev.fit.gradient_d, &g.truth),
        );
    }
    println!(
        "selected K={} recovery={:.3} r2_adj={:.3} elapsed={:.2?}",
        result.selected_k,
        recovery_cosine(&result, &g.truth),
        result.selected_fit.ols.r2_adj,
        t.elapsed()
    );
    Ok(())
}
