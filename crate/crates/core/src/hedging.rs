//! Interbank hedging of new instruments and the endogenous risk premium.
//!
//! A bank issuing one unit of a new asset hedges it with a zero-net portfolio
//! of traded assets, minimizing the residual variance. In the competitive
//! limit the premium satisfies `ε = γ(1 − φ)/2`, which couples back to the
//! consumer equilibrium through `φ(n, ε)`.

use crate::economy::{sample_economy_stream, Economy, ModelConfig};
use crate::equilibrium::{solve_consumer, MeanSe};
use crate::error::{Error, Result};
use crate::roots::brent;
use crate::saddlepoint::{OrderParameters, SaddleSolution, SaddleSolver};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeSolution {
    pub weights: Vec<f64>,
    pub residual_risk: f64,
    pub interbank_volume: f64,
    pub net_position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HedgeMode {
    /// `Σ w_i = 0`.
    ZeroNet,
    /// Unconstrained mean-variance optimum; net position is free.
    Unconstrained,
}

/// `γ(1 − φ)/2`.
pub fn analytic_premium(phi: f64, bank_risk_aversion: f64) -> Result<f64> {
    check_phi(phi)?;
    Ok(bank_risk_aversion * (1.0 - phi) / 2.0)
}

/// `(g, χ_w) = (φ/(1−φ), φ/(γ(1−φ)))`.
pub fn analytic_interbank(phi: f64, bank_risk_aversion: f64) -> Result<(f64, f64)> {
    check_phi(phi)?;
    let g = phi / (1.0 - phi);
    Ok((g, g / bank_risk_aversion))
}

fn check_phi(phi: f64) -> Result<()> {
    if (0.0..1.0).contains(&phi) {
        Ok(())
    } else {
        Err(Error::Domain(format!("completeness must lie in [0,1), got {phi}")))
    }
}

/// π-covariance of the traded assets and their covariance with `target`.
fn covariances(economy: &Economy, traded: &[usize], target: &[f64]) -> (DMatrix<f64>, DVector<f64>, f64) {
    let omega = economy.state_count();
    let pi = &economy.probabilities;
    let centred = |row: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let m: f64 = (0..omega).map(|w| pi[w] * row(w)).sum();
        (0..omega).map(|w| row(w) - m).collect()
    };
    let x: Vec<Vec<f64>> = traded
        .iter()
        .map(|&i| centred(&|w| economy.returns[(i, w)]))
        .collect();
    let y = centred(&|w| target[w]);
    let k = traded.len();
    let mut weighted = DMatrix::zeros(k, omega);
    let mut plain = DMatrix::zeros(k, omega);
    for a in 0..k {
        for w in 0..omega {
            plain[(a, w)] = x[a][w];
            weighted[(a, w)] = pi[w] * x[a][w];
        }
    }
    let c = &weighted * plain.transpose();
    let yv = DVector::from_vec(y.clone());
    let b = &weighted * &yv;
    let var_y: f64 = (0..omega).map(|w| pi[w] * y[w] * y[w]).sum();
    (c, b, var_y)
}

fn null_dimension(c: &DMatrix<f64>, mode: HedgeMode) -> usize {
    let k = c.nrows();
    let m = match mode {
        HedgeMode::ZeroNet => {
            let p = DMatrix::identity(k, k) - DMatrix::from_element(k, k, 1.0 / k as f64);
            &p * c * &p
        }
        HedgeMode::Unconstrained => c.clone(),
    };
    let eig = SymmetricEigen::new(m).eigenvalues;
    let top = eig.amax().max(1e-300);
    let small = eig.iter().filter(|&&v| v.abs() <= 1e-11 * top).count();
    match mode {
        // The projector itself removes one direction.
        HedgeMode::ZeroNet => small.saturating_sub(1),
        HedgeMode::Unconstrained => small,
    }
}

/// Minimum-variance zero-net hedge of `new_asset` with the `traded` assets.
pub fn min_variance_hedge(economy: &Economy, traded: &[usize], new_asset: &[f64]) -> Result<HedgeSolution> {
    hedge(economy, traded, new_asset, HedgeMode::ZeroNet, 1.0)
}

/// Hedge in either mode; `bank_risk_aversion` only enters the unconstrained optimum.
pub fn hedge(
    economy: &Economy,
    traded: &[usize],
    new_asset: &[f64],
    mode: HedgeMode,
    bank_risk_aversion: f64,
) -> Result<HedgeSolution> {
    let omega = economy.state_count();
    let need = if mode == HedgeMode::ZeroNet { 2 } else { 1 };
    if traded.len() < need {
        return Err(Error::Precondition(format!(
            "need at least {need} traded assets to hedge, got {}",
            traded.len()
        )));
    }
    if traded.iter().any(|&i| i >= economy.asset_count()) {
        return Err(Error::Precondition("traded index out of range".into()));
    }
    if new_asset.len() != omega {
        return Err(Error::Precondition("new asset needs one return per state".into()));
    }
    let mean: f64 = new_asset.iter().zip(&economy.probabilities).map(|(r, p)| r * p).sum();
    let target = -economy.epsilon / omega as f64;
    if (mean - target).abs() > 1e-10 * (1.0 + target.abs() * omega as f64) {
        return Err(Error::Precondition(format!(
            "new asset has π-mean {mean:e}, expected {target:e}"
        )));
    }
    let (c, b, var_y) = covariances(economy, traded, new_asset);
    let null_dim = null_dimension(&c, mode);
    if null_dim > 0 {
        return Err(Error::RankDeficient { null_dim });
    }
    let k = traded.len();
    let w = match mode {
        HedgeMode::ZeroNet => {
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            kkt.view_mut((0, 0), (k, k)).copy_from(&c);
            for a in 0..k {
                kkt[(a, k)] = 1.0;
                kkt[(k, a)] = 1.0;
            }
            let mut rhs = DVector::zeros(k + 1);
            rhs.rows_mut(0, k).copy_from(&b);
            let sol = kkt
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::IllConditioned("singular hedge system".into()))?;
            sol.rows(0, k).into_owned()
        }
        HedgeMode::Unconstrained => {
            let shift = economy.epsilon / (bank_risk_aversion * omega as f64);
            let rhs = b.map(|v| v - shift);
            c.clone()
                .cholesky()
                .ok_or_else(|| Error::IllConditioned("covariance not positive definite".into()))?
                .solve(&rhs)
        }
    };
    let residual_risk = (w.dot(&(&c * &w)) - 2.0 * w.dot(&b) + var_y).max(0.0);
    Ok(HedgeSolution {
        interbank_volume: w.norm_squared(),
        net_position: w.sum(),
        weights: w.iter().copied().collect(),
        residual_risk,
    })
}

/// `χ_w = tr(M)/Ω` where `M` is the response of the hedge weights to a linear
/// tilt of the bank's objective; `S = γΩC` with the zero-sum projection when
/// the constraint is active.
pub fn interbank_susceptibility(
    economy: &Economy,
    traded: &[usize],
    mode: HedgeMode,
    bank_risk_aversion: f64,
) -> Result<f64> {
    let omega = economy.state_count() as f64;
    let zero = vec![0.0; economy.state_count()];
    let (c, _, _) = covariances(economy, traded, &zero);
    let null_dim = null_dimension(&c, mode);
    if null_dim > 0 {
        return Err(Error::RankDeficient { null_dim });
    }
    let s = c * (bank_risk_aversion * omega);
    let k = s.nrows();
    let tr = match mode {
        HedgeMode::Unconstrained => s
            .cholesky()
            .ok_or_else(|| Error::IllConditioned("covariance not positive definite".into()))?
            .inverse()
            .trace(),
        HedgeMode::ZeroNet => {
            // Upper-left block of the bordered inverse is the constrained response.
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            kkt.view_mut((0, 0), (k, k)).copy_from(&s);
            for a in 0..k {
                kkt[(a, k)] = 1.0;
                kkt[(k, a)] = 1.0;
            }
            let inv = kkt
                .try_inverse()
                .ok_or_else(|| Error::IllConditioned("singular hedge system".into()))?;
            (0..k).map(|a| inv[(a, a)]).sum()
        }
    };
    Ok(tr / omega)
}

/// Draw one more asset from the economy's ensemble.
pub fn sample_new_asset(economy: &Economy, rng: &mut impl Rng) -> Vec<f64> {
    let omega = economy.state_count();
    let scale = 1.0 / (omega as f64).sqrt();
    let mut r: Vec<f64> = (0..omega)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    let mean = r.iter().sum::<f64>() / omega as f64;
    let shift = -economy.epsilon / omega as f64 - mean;
    r.iter_mut().for_each(|v| *v += shift);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    /// Assets traded in the consumer equilibrium.
    Equilibrium,
    /// A uniformly random subset of `round(φΩ)` assets.
    Random { phi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeEnsemble {
    pub samples: usize,
    pub used: usize,
    pub completeness: MeanSe,
    pub interbank_volume: MeanSe,
    pub chi_w: MeanSe,
    pub residual_risk: MeanSe,
    pub net_position: MeanSe,
}

/// One hedge per sample, sample `k` on generator stream `k`.
pub fn hedge_ensemble(
    config: &ModelConfig,
    samples: usize,
    selection: Selection,
    mode: HedgeMode,
    bank_risk_aversion: f64,
) -> Result<HedgeEnsemble> {
    config.validate()?;
    if samples < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {samples}")));
    }
    let results: Vec<Option<[f64; 5]>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| -> Option<[f64; 5]> {
            let e = sample_economy_stream(config, k).ok()?;
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(k);
            let traded: Vec<usize> = match selection {
                Selection::Equilibrium => solve_consumer(&e).ok()?.traded,
                Selection::Random { phi } => {
                    let size = (phi * config.omega_count as f64).round() as usize;
                    if size > e.asset_count() {
                        return None;
                    }
                    let mut idx = sample_indices(&mut rng, e.asset_count(), size).into_vec();
                    idx.sort_unstable();
                    idx
                }
            };
            let new_asset = sample_new_asset(&e, &mut rng);
            let h = hedge(&e, &traded, &new_asset, mode, bank_risk_aversion).ok()?;
            let chi = interbank_susceptibility(&e, &traded, mode, bank_risk_aversion).ok()?;
            Some([
                traded.len() as f64 / config.omega_count as f64,
                h.interbank_volume,
                chi,
                h.residual_risk,
                h.net_position,
            ])
        })
        .collect();
    let ok: Vec<[f64; 5]> = results.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::EmptyStatistics(samples));
    }
    let col = |j: usize| MeanSe::from_samples(&ok.iter().map(|r| r[j]).collect::<Vec<_>>());
    Ok(HedgeEnsemble {
        samples,
        used: ok.len(),
        completeness: col(0),
        interbank_volume: col(1),
        chi_w: col(2),
        residual_risk: col(3),
        net_position: col(4),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub n: f64,
    pub epsilon_endogenous: f64,
    pub completeness: f64,
    pub chi_consumer: f64,
    pub volume_consumer: f64,
    pub interbank_volume: f64,
    pub chi_interbank: f64,
    pub bank_risk_aversion: f64,
    /// `|ε − γ(1 − φ)/2|` at the returned point.
    pub fixed_point_residual: f64,
    pub saddle: SaddleSolution,
}

#[derive(Debug)]
pub struct TrajectoryEntry {
    pub n: f64,
    pub result: Result<TrajectoryPoint>,
}

struct FixedPoint {
    eps: f64,
    sol: SaddleSolution,
}

fn solve_fixed_point(
    solver: &SaddleSolver,
    n: f64,
    gamma: f64,
    eps_start: f64,
    warm: Option<OrderParameters>,
) -> Result<FixedPoint> {
    let mut warm = warm;
    let mut trace = Vec::new();
    let eval = |eps: f64, warm: &mut Option<OrderParameters>| -> Result<(f64, SaddleSolution)> {
        let s = solver.solve(n, eps, warm.as_ref())?;
        *warm = Some(s.params);
        Ok((eps - gamma * (1.0 - s.completeness) / 2.0, s))
    };
    // F(ε) = ε − γ(1 − φ(n, ε))/2 is increasing; F(γ/2) = γφ/2 ≥ 0.
    let hi = gamma / 2.0;
    let mut lo = eps_start.min(hi);
    let mut flo = eval(lo, &mut warm)?.0;
    trace.push(lo);
    while flo > 0.0 {
        lo *= 0.5;
        if lo < 1e-14 {
            return Err(Error::NonConvergence {
                what: "endogenous premium bracket",
                iterations: trace.len(),
                residual: flo,
                trace,
            });
        }
        flo = eval(lo, &mut warm)?.0;
        trace.push(lo);
    }
    let mut failure: Option<Error> = None;
    let eps = brent(
        |e| match eval(e, &mut warm) {
            Ok((f, _)) => f,
            Err(err) => {
                failure.get_or_insert(err);
                f64::NAN
            }
        },
        lo,
        hi,
        1e-15,
        200,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    let eps = eps?;
    let (f, sol) = eval(eps, &mut warm)?;
    if f.abs() > 1e-8 {
        return Err(Error::NonConvergence {
            what: "endogenous premium fixed point",
            iterations: trace.len(),
            residual: f.abs(),
            trace,
        });
    }
    Ok(FixedPoint { eps, sol })
}

fn point_from(n: f64, gamma: f64, fp: FixedPoint) -> TrajectoryPoint {
    let phi = fp.sol.completeness;
    let (g, chi_w) = analytic_interbank(phi, gamma).unwrap_or((f64::INFINITY, f64::INFINITY));
    TrajectoryPoint {
        n,
        epsilon_endogenous: fp.eps,
        completeness: phi,
        chi_consumer: fp.sol.params.chi,
        volume_consumer: fp.sol.volume,
        interbank_volume: g,
        chi_interbank: chi_w,
        bank_risk_aversion: gamma,
        fixed_point_residual: (fp.eps - gamma * (1.0 - phi) / 2.0).abs(),
        saddle: fp.sol,
    }
}

/// Fixed point `ε = γ(1 − φ(n, ε))/2` at each ascending `n`, continuing from
/// the previous point.
pub fn endogenous_trajectory(solver: &SaddleSolver, n_values: &[f64], bank_risk_aversion: f64) -> Result<Vec<TrajectoryEntry>> {
    if n_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("n values must be sorted ascending".into()));
    }
    if !(bank_risk_aversion > 0.0) {
        return Err(Error::Config("bank risk aversion must be positive".into()));
    }
    let mut eps_prev = bank_risk_aversion / 2.0;
    let mut warm = None;
    let mut out = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let result = solve_fixed_point(solver, n, bank_risk_aversion, eps_prev, warm).map(|fp| {
            eps_prev = fp.eps;
            warm = Some(fp.sol.params);
            point_from(n, bank_risk_aversion, fp)
        });
        out.push(TrajectoryEntry { n, result });
    }
    Ok(out)
}

/// The trajectory point with completeness `phi`: there `ε = γ(1 − φ)/2` is
/// known, so only `φ(n, ε) = phi` must be solved for `n`.
pub fn trajectory_point_at_completeness(solver: &SaddleSolver, phi: f64, bank_risk_aversion: f64) -> Result<TrajectoryPoint> {
    let eps = analytic_premium(phi, bank_risk_aversion)?;
    if phi <= 0.0 {
        return Err(Error::Domain("completeness must be positive".into()));
    }
    let mut warm: Option<OrderParameters> = None;
    let mut failure = None;
    let mut f = |n: f64| -> f64 {
        match solver.solve(n, eps, warm.as_ref()) {
            Ok(s) => {
                warm = Some(s.params);
                s.completeness - phi
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    // φ ≤ n/2 in the small-ε limit, so the root lies above φ.
    let lo = phi;
    let mut hi = 2.0 * phi.max(0.5);
    while f(hi) < 0.0 {
        hi *= 1.5;
        if hi > 1e3 {
            return Err(Error::Bracket(format!("no n reaches completeness {phi}")));
        }
    }
    let n = brent(&mut f, lo, hi, 1e-13, 200)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let sol = solver.solve(n, eps, None)?;
    Ok(point_from(n, bank_risk_aversion, FixedPoint { eps, sol }))
}

/// Ascending grid: uniform steps of `dn` from `dn` up to the point of
/// completeness `phi_targets[0]`, then the points at each target completeness.
pub fn trajectory_grid(solver: &SaddleSolver, bank_risk_aversion: f64, dn: f64, phi_targets: &[f64]) -> Result<Vec<f64>> {
    if phi_targets.is_empty() || !(dn > 0.0) {
        return Err(Error::Precondition("need dn > 0 and at least one completeness target".into()));
    }
    let mut ends = phi_targets
        .iter()
        .map(|&p| trajectory_point_at_completeness(solver, p, bank_risk_aversion).map(|t| t.n))
        .collect::<Result<Vec<f64>>>()?;
    ends.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = (1..)
        .map(|k| k as f64 * dn)
        .take_while(|&n| n < ends[0] - 1e-9)
        .collect();
    grid.extend(ends);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(grid)
}
