//! Finite economies: the consumer's portfolio problem, its equivalent
//! martingale measure, susceptibility, and arbitrage detection.

use crate::economy::{sample_economy_stream, Economy, ModelConfig};
use crate::error::{Error, Result};
use crate::lp::solve_matrix_game;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Decision threshold on the min state payoff of a normalized portfolio.
pub const ARBITRAGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub z: Vec<f64>,
    pub consumption: Vec<f64>,
    pub emm: Vec<f64>,
    pub emm_norm: f64,
    pub revenue: f64,
    pub sigma_q: f64,
    pub completeness: f64,
    /// NaN when the restricted Hessian is singular or complementarity is not strict.
    pub susceptibility: f64,
    pub hessian_condition: f64,
    pub utility: f64,
    pub kkt_residual: f64,
    pub traded: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub has_arbitrage: bool,
    pub witness: Option<Vec<f64>>,
    pub min_state_payoff: f64,
    /// State prices certifying absence of arbitrage (`E_q[r_i] ≤ 0` for all `i`).
    pub certificate: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ConsumerOptions {
    /// Stop when the KKT residual falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Adds `Σ_i h_i z_i / Ω` to the objective.
    pub tilt: Option<Vec<f64>>,
    pub initial: Option<Vec<f64>>,
    pub check_arbitrage: bool,
}

impl Default for ConsumerOptions {
    fn default() -> Self {
        ConsumerOptions {
            tolerance: 1e-13,
            max_iterations: 500,
            tilt: None,
            initial: None,
            check_arbitrage: true,
        }
    }
}

/// Traded means `z_i > 1e−8 · max(1, ‖z‖∞)`.
pub fn traded_set(z: &[f64]) -> Vec<usize> {
    let zmax = z.iter().cloned().fold(0.0, f64::max);
    let thr = 1e-8 * zmax.max(1.0);
    (0..z.len()).filter(|&i| z[i] > thr).collect()
}

struct Problem<'a> {
    e: &'a Economy,
    tilt: Option<&'a [f64]>,
    omega: f64,
}

struct Point {
    wealth: DVector<f64>,
    value: f64,
    grad: DVector<f64>,
}

impl<'a> Problem<'a> {
    fn wealth(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut w = self.e.returns.tr_mul(z);
        w.add_scalar_mut(1.0);
        w
    }

    fn value_at(&self, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        if w.iter().any(|&v| !(v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        let u = &self.e.utility;
        let mut s: f64 = w.iter().zip(&self.e.prices).map(|(&wi, &p)| u.value(wi / p)).sum();
        if let Some(h) = self.tilt {
            s += h.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        s / self.omega
    }

    fn point(&self, z: &DVector<f64>) -> Point {
        let wealth = self.wealth(z);
        let value = self.value_at(z, &wealth);
        let u = &self.e.utility;
        let m = DVector::from_iterator(
            wealth.len(),
            wealth.iter().zip(&self.e.prices).map(|(&w, &p)| u.marginal(w / p) / p),
        );
        let mut grad = &self.e.returns * m;
        if let Some(h) = self.tilt {
            for (g, hi) in grad.iter_mut().zip(h) {
                *g += hi;
            }
        }
        grad /= self.omega;
        Point { wealth, value, grad }
    }

    /// `−∂²f/∂z_F²`.
    fn neg_hessian(&self, wealth: &DVector<f64>, free: &[usize]) -> DMatrix<f64> {
        let u = &self.e.utility;
        let omega = self.e.state_count();
        let rf = DMatrix::from_fn(free.len(), omega, |a, w| self.e.returns[(free[a], w)]);
        let mut scaled = rf.clone();
        for w in 0..omega {
            let p = self.e.prices[w];
            let k = -u.curvature(wealth[w] / p) / (p * p) / self.omega;
            scaled.column_mut(w).scale_mut(k);
        }
        scaled * rf.transpose()
    }
}

fn kkt_residual(z: &DVector<f64>, g: &DVector<f64>) -> f64 {
    z.iter()
        .zip(g.iter())
        .map(|(&zi, &gi)| if zi > 0.0 { gi.abs() } else { gi.max(0.0) })
        .fold(0.0, f64::max)
}

/// Cholesky solve with Levenberg–Marquardt damping when needed.
fn damped_solve(mut m: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let scale = m.diagonal().iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut mu = 0.0;
    loop {
        if let Some(ch) = m.clone().cholesky() {
            return ch.solve(rhs);
        }
        let next = if mu == 0.0 { 1e-14 * scale } else { mu * 100.0 };
        for k in 0..m.nrows() {
            m[(k, k)] += next - mu;
        }
        mu = next;
    }
}

/// Maximize `E_π[u((1 + Σ z_i r_i)/p)]` over `z ≥ 0`.
pub fn solve_consumer(economy: &Economy) -> Result<EquilibriumSolution> {
    solve_consumer_with(economy, &ConsumerOptions::default())
}

pub fn solve_consumer_with(economy: &Economy, opts: &ConsumerOptions) -> Result<EquilibriumSolution> {
    let n = economy.asset_count();
    if let Some(h) = &opts.tilt {
        if h.len() != n {
            return Err(Error::Precondition("tilt length must equal the asset count".into()));
        }
    }
    if opts.check_arbitrage {
        // With ε > 0 every nonzero z ≥ 0 has negative mean payoff, so no arbitrage exists.
        if economy.epsilon <= 0.0 {
            let rep = detect_arbitrage(economy);
            if rep.has_arbitrage {
                return Err(Error::Unbounded {
                    witness: rep.witness.unwrap_or_default(),
                    min_state_payoff: rep.min_state_payoff,
                });
            }
        }
    }
    let prob = Problem { e: economy, tilt: opts.tilt.as_deref(), omega: economy.state_count() as f64 };
    let mut z = match &opts.initial {
        Some(z0) if z0.len() == n => DVector::from_iterator(n, z0.iter().map(|v| v.max(0.0))),
        _ => DVector::zeros(n),
    };
    if prob.wealth(&z).iter().any(|&w| w <= 0.0) {
        z.fill(0.0);
    }
    let mut pt = prob.point(&z);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let kkt = kkt_residual(&z, &pt.grad);
        trace.push(kkt);
        if kkt < opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                what: "consumer projected Newton",
                iterations,
                residual: kkt,
                trace,
            });
        }
        iterations += 1;
        let zmax = z.amax();
        if zmax > 1e10 {
            let total: f64 = z.sum();
            let witness: Vec<f64> = z.iter().map(|v| v / total).collect();
            let payoff = economy.returns.tr_mul(&DVector::from_vec(witness.clone())).min();
            return Err(Error::Unbounded { witness, min_state_payoff: payoff });
        }
        // Coordinates held at zero: near the bound with outward gradient.
        let proj_gap = z
            .iter()
            .zip(pt.grad.iter())
            .map(|(&zi, &gi)| (zi - (zi + gi).max(0.0)).powi(2))
            .sum::<f64>()
            .sqrt();
        let delta = proj_gap.min(1e-3);
        let bound: Vec<bool> = (0..n).map(|i| z[i] <= delta && pt.grad[i] <= 0.0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !bound[i]).collect();
        let mut d = DVector::zeros(n);
        let diag_scale;
        if free.is_empty() {
            diag_scale = 1.0;
        } else {
            let h = prob.neg_hessian(&pt.wealth, &free);
            diag_scale = h.diagonal().mean().max(1e-300);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| pt.grad[i]));
            let df = damped_solve(h, &gf);
            for (a, &i) in free.iter().enumerate() {
                d[i] = df[a];
            }
        }
        for i in 0..n {
            if bound[i] {
                d[i] = pt.grad[i] / diag_scale;
            }
        }
        let predicted: f64 = free.iter().map(|&i| pt.grad[i] * d[i]).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let zt = (&z + &d * alpha).map(|v| v.max(0.0));
            let wt = prob.wealth(&zt);
            if wt.iter().all(|&w| w > 0.0) {
                let ft = prob.value_at(&zt, &wt);
                let bound_gain: f64 = (0..n)
                    .filter(|&i| bound[i])
                    .map(|i| pt.grad[i] * (zt[i] - z[i]))
                    .sum();
                let gain = alpha * predicted + bound_gain;
                let noise = 1e-14 * (1.0 + pt.value.abs());
                let ok = if gain.abs() < noise {
                    let ptt = prob.point(&zt);
                    kkt_residual(&zt, &ptt.grad) < kkt
                } else {
                    ft - pt.value >= 1e-4 * gain
                };
                if ok {
                    z = zt;
                    pt = prob.point(&z);
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            if kkt < 1e-9 {
                break;
            }
            return Err(Error::NonConvergence {
                what: "consumer line search",
                iterations,
                residual: kkt,
                trace,
            });
        }
    }
    Ok(assemble(economy, &prob, z, pt, iterations))
}

fn assemble(economy: &Economy, prob: &Problem, z: DVector<f64>, pt: Point, iterations: usize) -> EquilibriumSolution {
    let omega = economy.state_count();
    let u = &economy.utility;
    let consumption: Vec<f64> = pt.wealth.iter().zip(&economy.prices).map(|(&w, &p)| w / p).collect();
    let weights: Vec<f64> = consumption
        .iter()
        .zip(&economy.prices)
        .zip(&economy.probabilities)
        .map(|((&c, &p), &pi)| pi * u.marginal(c) / p)
        .collect();
    let q_norm: f64 = weights.iter().sum();
    let emm: Vec<f64> = weights.iter().map(|w| w / q_norm).collect();
    let sigma_q = (omega as f64
        * emm.iter().zip(&economy.probabilities).map(|(q, pi)| (q - pi).powi(2)).sum::<f64>())
    .sqrt();
    let zv: Vec<f64> = z.iter().copied().collect();
    let traded = traded_set(&zv);
    let utility = consumption.iter().map(|&c| u.value(c)).sum::<f64>() / omega as f64;
    let mut sol = EquilibriumSolution {
        revenue: economy.epsilon / omega as f64 * zv.iter().sum::<f64>(),
        completeness: traded.len() as f64 / omega as f64,
        z: zv,
        consumption,
        emm,
        emm_norm: q_norm,
        sigma_q,
        susceptibility: f64::NAN,
        hessian_condition: f64::NAN,
        utility,
        kkt_residual: kkt_residual(&z, &pt.grad),
        traded,
        iterations,
    };
    let _ = prob;
    if let Ok(s) = susceptibility_finite(economy, &sol) {
        sol.susceptibility = s.chi;
        sol.hessian_condition = s.condition_number;
    }
    sol
}

/// Sum over states of `u′(c)/p · r_i`, divided by `Ω`: the objective gradient.
pub fn objective_gradient(economy: &Economy, z: &[f64]) -> Vec<f64> {
    let prob = Problem { e: economy, tilt: None, omega: economy.state_count() as f64 };
    prob.point(&DVector::from_column_slice(z)).grad.iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Susceptibility {
    pub chi: f64,
    pub condition_number: f64,
}

/// `χ = (1/Ω) Σ_{i traded} ∂z_i/∂h_i` for the perturbation `E_π[u] + h·z/Ω`,
/// i.e. `tr((−H_TT)⁻¹)/Ω²` with `H` the Hessian of `E_π[u]` on the traded set.
pub fn susceptibility_finite(economy: &Economy, solution: &EquilibriumSolution) -> Result<Susceptibility> {
    let traded = &solution.traded;
    if traded.is_empty() {
        return Ok(Susceptibility { chi: 0.0, condition_number: 1.0 });
    }
    let grad = objective_gradient(economy, &solution.z);
    let inactive_max = (0..economy.asset_count())
        .filter(|i| !traded.contains(i))
        .map(|i| grad[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if inactive_max >= -1e-10 {
        return Err(Error::Precondition(format!(
            "complementarity is not strict: inactive gradient {inactive_max:e}"
        )));
    }
    let omega = economy.state_count() as f64;
    let prob = Problem { e: economy, tilt: None, omega };
    let wealth = prob.wealth(&DVector::from_column_slice(&solution.z));
    let h = prob.neg_hessian(&wealth, traded);
    let eig = SymmetricEigen::new(h.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition_number = lmax / lmin;
    if !(lmin > 0.0) || condition_number > 1e14 {
        return Err(Error::IllConditioned(format!(
            "restricted Hessian is singular (condition number {condition_number:e})"
        )));
    }
    let inv = h
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("restricted Hessian not positive definite".into()))?
        .inverse();
    Ok(Susceptibility { chi: inv.trace() / (omega * omega), condition_number })
}

/// Search for `ζ ≥ 0`, `Σζ = 1`, maximizing the smallest state payoff.
pub fn detect_arbitrage(economy: &Economy) -> ArbitrageReport {
    match solve_matrix_game(&economy.returns) {
        Ok(game) => {
            let zeta = DVector::from_vec(game.row_strategy.clone());
            let payoff = economy.returns.tr_mul(&zeta);
            let min_payoff = payoff.min();
            let has = min_payoff > ARBITRAGE_TOL;
            ArbitrageReport {
                has_arbitrage: has,
                witness: has.then_some(game.row_strategy),
                min_state_payoff: min_payoff,
                certificate: (!has).then_some(game.column_strategy),
            }
        }
        Err(_) => ArbitrageReport {
            has_arbitrage: false,
            witness: None,
            min_state_payoff: f64::NAN,
            certificate: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> MeanSe {
        let k = xs.len() as f64;
        if xs.is_empty() {
            return MeanSe { mean: f64::NAN, std_error: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / k;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            f64::NAN
        };
        MeanSe { mean, std_error: (var / k).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    /// Density normalized by the total count, so it integrates to the fraction inside the range.
    pub fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
        let bins = bins.max(1);
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut counts = vec![0usize; bins];
        for &v in values {
            if v >= lo && v <= hi && width > 0.0 {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        let total = values.len().max(1) as f64;
        let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
        Histogram { edges, density }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n: f64,
    pub epsilon: f64,
    pub omega: usize,
    pub samples: usize,
    pub used: usize,
    pub arbitrage_count: usize,
    pub failure_count: usize,
    pub completeness: MeanSe,
    pub sigma_q: MeanSe,
    pub revenue: MeanSe,
    pub susceptibility: MeanSe,
    pub utility: MeanSe,
    pub histogram: Histogram,
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub histogram_bins: usize,
    pub histogram_range: Option<(f64, f64)>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { histogram_bins: 100, histogram_range: None }
    }
}

enum Outcome {
    Solved(Box<EquilibriumSolution>),
    Arbitrage,
    Failed,
}

pub fn ensemble_statistics(config: &ModelConfig, samples: usize) -> Result<EnsembleStats> {
    ensemble_statistics_with(config, samples, &EnsembleOptions::default())
}

/// Sample `k` uses generator stream `k` of `config.seed`.
pub fn ensemble_statistics_with(config: &ModelConfig, samples: usize, opts: &EnsembleOptions) -> Result<EnsembleStats> {
    if samples < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {samples}")));
    }
    config.validate()?;
    let outcomes: Vec<Outcome> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let e = match sample_economy_stream(config, k) {
                Ok(e) => e,
                Err(_) => return Outcome::Failed,
            };
            match solve_consumer(&e) {
                Ok(s) => Outcome::Solved(Box::new(s)),
                Err(Error::Unbounded { .. }) => Outcome::Arbitrage,
                Err(_) => Outcome::Failed,
            }
        })
        .collect();
    let arbitrage_count = outcomes.iter().filter(|o| matches!(o, Outcome::Arbitrage)).count();
    let failure_count = outcomes.iter().filter(|o| matches!(o, Outcome::Failed)).count();
    let sols: Vec<&EquilibriumSolution> = outcomes
        .iter()
        .filter_map(|o| match o {
            Outcome::Solved(s) => Some(s.as_ref()),
            _ => None,
        })
        .collect();
    if sols.is_empty() {
        return Err(Error::EmptyStatistics(samples));
    }
    let pick = |f: &dyn Fn(&EquilibriumSolution) -> f64| -> Vec<f64> {
        sols.iter().map(|s| f(s)).filter(|v| v.is_finite()).collect()
    };
    let pooled: Vec<f64> = sols.iter().flat_map(|s| s.consumption.iter().copied()).collect();
    let (lo, hi) = opts.histogram_range.unwrap_or_else(|| {
        (
            pooled.iter().cloned().fold(f64::INFINITY, f64::min),
            pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    });
    Ok(EnsembleStats {
        n: config.n_ratio,
        epsilon: config.epsilon,
        omega: config.omega_count,
        samples,
        used: sols.len(),
        arbitrage_count,
        failure_count,
        completeness: MeanSe::from_samples(&pick(&|s| s.completeness)),
        sigma_q: MeanSe::from_samples(&pick(&|s| s.sigma_q)),
        revenue: MeanSe::from_samples(&pick(&|s| s.revenue)),
        susceptibility: MeanSe::from_samples(&pick(&|s| s.susceptibility)),
        utility: MeanSe::from_samples(&pick(&|s| s.utility)),
        histogram: Histogram::from_values(&pooled, lo, hi, opts.histogram_bins),
    })
}

/// Number of samples (streams `0..samples`) that admit an arbitrage.
pub fn arbitrage_count(config: &ModelConfig, samples: usize) -> Result<usize> {
    config.validate()?;
    let hits: Vec<bool> = (0..samples as u64)
        .into_par_iter()
        .map(|k| sample_economy_stream(config, k).map(|e| detect_arbitrage(&e).has_arbitrage))
        .collect::<Result<_>>()?;
    Ok(hits.into_iter().filter(|&h| h).count())
}
