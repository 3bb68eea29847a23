use ssd_core::corpus::{corpus_frequencies, LetterTokenizer};
use ssd_core::reducer::pca_fit;
use ssd_core::regression::fit_gradient;
use ssd_core::synthbench::{generate, PlantedScenario, OUTCOME_NAME};
use ssd_core::{build_pcvs, SifConfig};

/// The outcome signal has unit variance, so noise variance 3 puts the population R² at 0.25.
#[test]
fn fitted_r2_tracks_population_r2_over_seeds() {
    let noise_sd = 3f64.sqrt();
    for seed in 0..20 {
        let s = PlantedScenario {
            seed,
            noise_sd,
            ..PlantedScenario::default()
        };
        let g = generate(&s).unwrap();
        let mut store = g.store.clone();
        store
            .set_frequencies(&corpus_frequencies(&g.records, &LetterTokenizer))
            .unwrap();
        let pcvs = build_pcvs(&g.records, &store, &SifConfig::default(), None, &LetterTokenizer).unwrap();
        let x = pcvs.matrix();
        let y = pcvs.outcomes(&g.records, OUTCOME_NAME).unwrap();
        let fit = fit_gradient(&pca_fit(&x, s.effective_rank).unwrap(), &x, &y).unwrap();
        assert!((0.1..=0.4).contains(&fit.ols.r2), "seed {seed}: r2 = {}", fit.ols.r2);
    }
}
