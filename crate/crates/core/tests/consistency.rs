use complexmarket::economy::{sample_economy_stream, ModelConfig};
use complexmarket::equilibrium::{solve_consumer, MeanSe};
use complexmarket::saddlepoint::SaddleSolver;

/// Expected utility gain over not trading, per sample, against the saddle-point ψ
/// minus the no-trade utility of the bimodal price distribution.
#[test]
fn saddle_utility_matches_finite_size_gain() {
    let sv = SaddleSolver::new(0.5, 0.2, 64).unwrap();
    let no_trade = (0.8f64.powf(-0.5) + 1.2f64.powf(-0.5)) - 2.0;
    for n in [0.5, 1.0] {
        let s = sv.solve(n, 0.05, None).unwrap();
        let cfg = ModelConfig { n_ratio: n, epsilon: 0.05, omega_count: 200, seed: 17, ..Default::default() };
        let gains: Vec<f64> = (0..40)
            .map(|k| {
                let e = sample_economy_stream(&cfg, k).unwrap();
                let sol = solve_consumer(&e).unwrap();
                let base = e.prices.iter().map(|p| 2.0 * (p.powf(-0.5) - 1.0)).sum::<f64>() / 200.0;
                sol.utility - base
            })
            .collect();
        let g = MeanSe::from_samples(&gains);
        let z = (g.mean - (s.utility - no_trade)) / g.std_error;
        assert!(z.abs() < 3.0, "n {n}: gain {} ± {}, ψ {}", g.mean, g.std_error, s.utility - no_trade);
    }
}

#[test]
fn finite_susceptibility_tracks_saddle_value() {
    let sv = SaddleSolver::new(0.5, 0.2, 64).unwrap();
    let s = sv.solve(1.0, 0.05, None).unwrap();
    let cfg = ModelConfig { n_ratio: 1.0, epsilon: 0.05, omega_count: 300, seed: 2, ..Default::default() };
    let chis: Vec<f64> = (0..30)
        .filter_map(|k| {
            let e = sample_economy_stream(&cfg, k).ok()?;
            let sol = solve_consumer(&e).ok()?;
            sol.susceptibility.is_finite().then_some(sol.susceptibility)
        })
        .collect();
    let m = MeanSe::from_samples(&chis);
    assert!(chis.len() >= 25);
    assert!(((m.mean - s.params.chi) / s.params.chi).abs() < 0.15, "{} vs {}", m.mean, s.params.chi);
}
