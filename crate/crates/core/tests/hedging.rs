use complexmarket::economy::ModelConfig;
use complexmarket::hedging::{analytic_interbank, hedge_ensemble, HedgeMode, Selection};

fn config(omega: usize, seed: u64) -> ModelConfig {
    ModelConfig { n_ratio: 1.0, epsilon: 0.05, omega_count: omega, seed, ..Default::default() }
}

#[test]
fn residual_risk_scales_inversely_with_state_count() {
    let phi = 0.5;
    let small = hedge_ensemble(&config(100, 1), 50, Selection::Random { phi }, HedgeMode::ZeroNet, 0.1).unwrap();
    let large = hedge_ensemble(&config(200, 2), 50, Selection::Random { phi }, HedgeMode::ZeroNet, 0.1).unwrap();
    let ratio = small.residual_risk.mean / large.residual_risk.mean;
    assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn residual_risk_is_unexplained_variance_fraction() {
    // Ω Σ² against (1 − φ): the new asset's variance 1/Ω times the share not spanned.
    for phi in [0.3, 0.6] {
        let h = hedge_ensemble(&config(300, 5), 30, Selection::Random { phi }, HedgeMode::ZeroNet, 0.1).unwrap();
        let scaled = h.residual_risk.mean * 300.0 / (1.0 - phi);
        assert!((scaled - 1.0).abs() < 0.05, "φ {phi}: Ω Σ²/(1−φ) = {scaled}");
    }
}

#[test]
fn equilibrium_selection_matches_analytic_volume() {
    let cfg = ModelConfig { n_ratio: 1.0, epsilon: 0.05, omega_count: 200, seed: 9, ..Default::default() };
    let h = hedge_ensemble(&cfg, 20, Selection::Equilibrium, HedgeMode::ZeroNet, 0.1).unwrap();
    let (g, chi_w) = analytic_interbank(h.completeness.mean, 0.1).unwrap();
    assert!((h.interbank_volume.mean / g - 1.0).abs() < 0.15);
    assert!((h.chi_w.mean / chi_w - 1.0).abs() < 0.15);
    assert!(h.net_position.mean.abs() < 1e-10);
}

#[test]
fn unconstrained_hedges_sell_net() {
    let h = hedge_ensemble(&config(200, 3), 20, Selection::Random { phi: 0.5 }, HedgeMode::Unconstrained, 0.1).unwrap();
    assert!(h.net_position.mean < 0.0);
}

#[test]
fn ensembles_are_deterministic() {
    let run = || hedge_ensemble(&config(80, 4), 8, Selection::Random { phi: 0.4 }, HedgeMode::ZeroNet, 0.1).unwrap();
    assert_eq!(run(), run());
}
