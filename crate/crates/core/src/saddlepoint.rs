//! Infinite-size limit: the replica-symmetric saddle point.
//!
//! The six order parameters reduce to three independent unknowns `(λ, σ, ν)`:
//! the portfolio side (`G`, `χ`, `κ`) has closed forms in the truncated
//! Gaussian moments, the consumption side is averaged by Gauss–Hermite
//! quadrature over `t` and the two price levels. The reduced map is solved by
//! Newton's method in log variables, falling back to damped fixed-point
//! iteration.

use crate::arbitrage_boundary::{boundary_point, gaussian_partial_moment as moment};
use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::roots::brent;
use crate::special::{normal_cdf, normal_pdf};
use crate::utility::Crra;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParameters {
    pub lambda: f64,
    pub nu: f64,
    pub sigma: f64,
    pub big_g: f64,
    pub chi: f64,
    pub kappa: f64,
}

impl Default for OrderParameters {
    /// Cold start at `u′(1) = 1`.
    fn default() -> Self {
        OrderParameters { lambda: 1.0, nu: 1.0, sigma: 0.1, big_g: 0.1, chi: 1.0, kappa: 0.0 }
    }
}

/// Identities implied by the saddle-point equations, as signed residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identities {
    /// `⟨c p⟩ + ε n ⟨z⟩ − 1`
    pub budget: f64,
    /// `⟨(u′/p)(c p − 1)⟩`
    pub no_arbitrage: f64,
    /// `χ − φ/ν`
    pub chi_dual: f64,
    /// `⟨u′ t / p⟩ / √(nG) − ν`
    pub nu_dual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub n: f64,
    pub epsilon: f64,
    pub crra_exponent: f64,
    pub price_spread: f64,
    pub params: OrderParameters,
    /// φ = χν
    pub completeness: f64,
    /// σ/λ
    pub emm_distance: f64,
    /// R = εn⟨z*⟩
    pub revenue: f64,
    /// V = n⟨z*⟩
    pub volume: f64,
    pub mean_z: f64,
    pub utility: f64,
    /// Largest relative residual over the six saddle-point equations.
    pub residual: f64,
    pub identities: Identities,
    pub iterations: usize,
    /// φ exceeded `1 − 1e−4`.
    pub at_boundary: bool,
}

/// Threshold of the near-completeness guard.
pub const COMPLETENESS_GUARD: f64 = 1.0 - 1e-4;

/// `z*(t) = max(σt − ελ, 0)/ν`.
pub fn z_star(t: f64, params: &OrderParameters, epsilon: f64) -> f64 {
    let x = params.sigma * t - epsilon * params.lambda;
    if x > 0.0 {
        x / params.nu
    } else {
        0.0
    }
}

/// Unique `c > 0` with `χ u′(c)/p = c p − 1 + κ + √(nG) t`.
pub fn c_star(t: f64, p: f64, params: &OrderParameters, n: f64, utility: &Crra) -> Result<f64> {
    if !(params.chi > 0.0 && params.big_g >= 0.0 && p > 0.0) {
        return Err(Error::Precondition(format!(
            "c_star needs chi > 0, G >= 0, p > 0 (chi {}, G {}, p {p})",
            params.chi, params.big_g
        )));
    }
    let offset = 1.0 - params.kappa - (n * params.big_g).sqrt() * t;
    solve_consumption(params.chi, offset, p, utility)
}

/// Root of `g(c) = χ u′(c)/p − c p + offset`, strictly decreasing in `c`.
fn solve_consumption(chi: f64, offset: f64, p: f64, u: &Crra) -> Result<f64> {
    let g = |c: f64| chi * u.marginal(c) / p - c * p + offset;
    let mut hi = (offset / p).max(0.0) + 1.0;
    let mut expansions = 0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 2000 {
            return Err(Error::Bracket("c* upper bracket".into()));
        }
    }
    let mut lo = hi;
    while g(lo) <= 0.0 {
        lo *= 0.5;
        expansions += 1;
        if expansions > 4000 || lo == 0.0 {
            return Err(Error::Bracket("c* lower bracket".into()));
        }
    }
    // Newton from the side where the function is convex (g is convex in c).
    let mut c = if offset > 0.0 { (offset / p).clamp(lo, hi) } else { lo };
    for _ in 0..200 {
        let gc = g(c);
        let scale = 1.0 + (c * p).abs() + offset.abs();
        if gc.abs() <= 1e-15 * scale {
            return Ok(c);
        }
        if gc > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let dg = chi * u.curvature(c) / p - p;
        let mut next = c - gc / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        c = next;
    }
    let gc = g(c);
    if gc.abs() <= 1e-12 * (1.0 + (c * p).abs() + offset.abs()) {
        Ok(c)
    } else {
        Err(Error::NonConvergence {
            what: "consumption root",
            iterations: 200,
            residual: gc.abs(),
            trace: vec![],
        })
    }
}

/// Everything the reduced map produces at one point `(λ, σ, ν)`.
#[derive(Debug, Clone)]
struct MapEval {
    params: OrderParameters,
    next: Vector3<f64>,
    phi: f64,
    mean_z: f64,
    identities: Identities,
    utility: f64,
}

#[derive(Debug, Clone)]
pub struct SaddleSolver {
    utility: Crra,
    price_spread: f64,
    quad: GaussHermite,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SaddleSolver {
    pub fn new(crra_exponent: f64, price_spread: f64, quadrature_order: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&price_spread) {
            return Err(Error::Config(format!("price_spread must lie in [0,1), got {price_spread}")));
        }
        Ok(SaddleSolver {
            utility: Crra::new(crra_exponent)?,
            price_spread,
            quad: GaussHermite::new(quadrature_order)?,
            tolerance: 1e-12,
            max_iterations: 400,
        })
    }

    pub fn utility(&self) -> Crra {
        self.utility
    }

    pub fn price_spread(&self) -> f64 {
        self.price_spread
    }

    pub fn quadrature_order(&self) -> usize {
        self.quad.order()
    }

    fn prices(&self) -> [f64; 2] {
        [1.0 - self.price_spread, 1.0 + self.price_spread]
    }

    fn evaluate(&self, x: &Vector3<f64>, n: f64, epsilon: f64) -> Result<MapEval> {
        let (lambda, sigma, nu) = (x[0], x[1], x[2]);
        let a = epsilon * lambda / sigma;
        let i0 = moment(0, -a);
        let i1 = moment(1, -a);
        let i2 = moment(2, -a);
        let chi = n * i0 / nu;
        let big_g = sigma * sigma * i2 / (nu * nu);
        let mean_z = sigma * i1 / nu;
        let kappa = lambda * chi + n * epsilon * mean_z;
        let params = OrderParameters { lambda, nu, sigma, big_g, chi, kappa };
        if !(chi > 0.0) {
            return Err(Error::IllConditioned(format!(
                "susceptibility underflow (ελ/σ = {a:e})"
            )));
        }
        let b = (n * big_g).sqrt();
        let u = &self.utility;
        let (mut m1, mut m2, mut nu34, mut mt) = (0.0, 0.0, 0.0, 0.0);
        let (mut cp, mut noarb, mut util) = (0.0, 0.0, 0.0);
        for (t, w) in self.quad.iter() {
            for p in self.prices() {
                let c = solve_consumption(chi, 1.0 - kappa - b * t, p, u)?;
                let wt = 0.5 * w;
                let m = u.marginal(c) / p;
                let upp = u.curvature(c);
                m1 += wt * m;
                m2 += wt * m * m;
                nu34 += wt * upp / (chi * upp - p * p);
                mt += wt * m * t;
                cp += wt * c * p;
                noarb += wt * m * (c * p - 1.0);
                util += wt * (u.value(c) - 0.5 * chi * m * m);
            }
        }
        let var = (m2 - m1 * m1).max(0.0);
        let nu20 = if b > 0.0 { mt / b } else { nu34 };
        let phi = n * i0;
        let identities = Identities {
            budget: cp + epsilon * n * mean_z - 1.0,
            no_arbitrage: noarb,
            chi_dual: chi - phi / nu,
            nu_dual: nu20 - nu34,
        };
        let utility = n * big_g * nu + kappa * lambda - 0.5 * chi * (sigma * sigma + lambda * lambda) + util;
        Ok(MapEval {
            params,
            next: Vector3::new(m1, var.sqrt(), nu34),
            phi,
            mean_z,
            identities,
            utility,
        })
    }

    fn log_residual(&self, y: &Vector3<f64>, n: f64, epsilon: f64) -> Result<(Vector3<f64>, MapEval)> {
        let x = y.map(f64::exp);
        let ev = self.evaluate(&x, n, epsilon)?;
        if ev.next.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::IllConditioned("order parameter left the positive orthant".into()));
        }
        Ok((ev.next.map(f64::ln) - y, ev))
    }

    /// Solve at `(n, ε)`, warm-starting from `init` when given.
    pub fn solve(&self, n: f64, epsilon: f64, init: Option<&OrderParameters>) -> Result<SaddleSolution> {
        if !(n > 0.0 && n.is_finite() && epsilon.is_finite()) {
            return Err(Error::Domain(format!("need n > 0 and finite ε, got n {n}, ε {epsilon}")));
        }
        if epsilon < 0.0 {
            let bp = boundary_point(epsilon)?;
            if n >= bp.n_critical {
                return Err(Error::Domain(format!(
                    "(n {n}, ε {epsilon}) lies beyond the arbitrage boundary n_c = {:.6}",
                    bp.n_critical
                )));
            }
        } else if epsilon == 0.0 && n >= 2.0 {
            return Err(Error::Domain(format!(
                "ε = 0 with n = {n} ≥ 2 is on the complete-market line"
            )));
        }
        let start = init.copied().unwrap_or_default();
        let y0 = Vector3::new(start.lambda.ln(), start.sigma.max(1e-12).ln(), start.nu.ln());
        let mut trace = Vec::new();
        match self.attempt(y0, n, epsilon, &mut trace) {
            Ok(sol) => Ok(sol),
            Err(_) if n > 1.0 => self.continuation(n, epsilon, &mut trace),
            Err(e) => Err(e),
        }
    }

    fn attempt(&self, y0: Vector3<f64>, n: f64, epsilon: f64, trace: &mut Vec<f64>) -> Result<SaddleSolution> {
        self.newton(y0, n, epsilon, trace)
            .or_else(|_| self.damped(y0, n, epsilon, trace))
    }

    /// Walk in from `n = 1`, where a cold start is reliable, with adaptive steps.
    fn continuation(&self, n: f64, epsilon: f64, trace: &mut Vec<f64>) -> Result<SaddleSolution> {
        let logs = |p: &OrderParameters| Vector3::new(p.lambda.ln(), p.sigma.ln(), p.nu.ln());
        let mut cur = self.attempt(logs(&OrderParameters::default()), 1.0, epsilon, trace)?;
        let mut step = (n - 1.0) / 8.0;
        while cur.n < n {
            let next = (cur.n + step).min(n);
            match self.newton(logs(&cur.params), next, epsilon, trace) {
                Ok(s) => {
                    cur = s;
                    step *= 1.5;
                }
                Err(e) => {
                    step *= 0.5;
                    if step < 1e-6 * n {
                        return Err(e);
                    }
                }
            }
        }
        Ok(cur)
    }

    fn newton(&self, mut y: Vector3<f64>, n: f64, epsilon: f64, trace: &mut Vec<f64>) -> Result<SaddleSolution> {
        let (mut f, mut ev) = self.log_residual(&y, n, epsilon)?;
        let mut norm = f.amax();
        for it in 0..self.max_iterations {
            trace.push(norm);
            if norm < self.tolerance {
                return Ok(self.finish(n, epsilon, &ev, norm, it));
            }
            let mut jac = Matrix3::zeros();
            for k in 0..3 {
                let h = 1e-7;
                let mut yh = y;
                yh[k] += h;
                let (fh, _) = self.log_residual(&yh, n, epsilon)?;
                jac.set_column(k, &((fh - f) / h));
            }
            let mut step = jac
                .lu()
                .solve(&(-f))
                .ok_or_else(|| Error::IllConditioned("singular saddle Jacobian".into()))?;
            let big = step.amax();
            if big > 2.0 {
                step *= 2.0 / big;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            let mut floor = false;
            for _ in 0..40 {
                let yt = y + alpha * step;
                if let Ok((ft, evt)) = self.log_residual(&yt, n, epsilon) {
                    let nt = ft.amax();
                    if nt < norm * (1.0 - 1e-4 * alpha) || (nt <= norm && nt < 1e3 * self.tolerance) {
                        floor = nt < 1e3 * self.tolerance && nt > 0.5 * norm;
                        y = yt;
                        f = ft;
                        ev = evt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted || floor {
                // Stalled at the evaluation noise floor.
                if norm < 1e3 * self.tolerance {
                    return Ok(self.finish(n, epsilon, &ev, norm, it));
                }
                break;
            }
        }
        Err(Error::NonConvergence {
            what: "saddle-point Newton",
            iterations: trace.len(),
            residual: norm,
            trace: trace.clone(),
        })
    }

    fn damped(&self, y0: Vector3<f64>, n: f64, epsilon: f64, trace: &mut Vec<f64>) -> Result<SaddleSolution> {
        let mut x = y0.map(f64::exp);
        let mut alpha = 0.5;
        let mut ev = self.evaluate(&x, n, epsilon)?;
        let rel = |ev: &MapEval, x: &Vector3<f64>| {
            (0..3).map(|k| ((ev.next[k] - x[k]) / x[k]).abs()).fold(0.0, f64::max)
        };
        let mut norm = rel(&ev, &x);
        for it in 0..20 * self.max_iterations {
            trace.push(norm);
            if norm < self.tolerance {
                return Ok(self.finish(n, epsilon, &ev, norm, it));
            }
            let xt = x * (1.0 - alpha) + ev.next * alpha;
            match self.evaluate(&xt, n, epsilon) {
                Ok(evt) if rel(&evt, &xt) <= norm => {
                    norm = rel(&evt, &xt);
                    x = xt;
                    ev = evt;
                }
                _ => {
                    alpha *= 0.5;
                    if alpha < 1e-8 {
                        break;
                    }
                }
            }
        }
        Err(Error::NonConvergence {
            what: "saddle-point fixed-point iteration",
            iterations: trace.len(),
            residual: norm,
            trace: trace.clone(),
        })
    }

    fn finish(&self, n: f64, epsilon: f64, ev: &MapEval, _log_norm: f64, iterations: usize) -> SaddleSolution {
        let p = ev.params;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        let aa = epsilon * p.lambda / p.sigma;
        let residual = [
            rel(p.lambda, ev.next[0]),
            rel(p.sigma * p.sigma, ev.next[1] * ev.next[1]),
            rel(p.nu, ev.next[2]),
            rel(p.big_g, p.sigma * p.sigma * moment(2, -aa) / (p.nu * p.nu)),
            rel(p.chi, n * p.sigma * moment(0, -aa) / (p.sigma * p.nu)),
            (p.kappa - p.lambda * p.chi - n * epsilon * ev.mean_z).abs() / p.kappa.abs().max(1.0),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        SaddleSolution {
            n,
            epsilon,
            crra_exponent: self.utility.exponent(),
            price_spread: self.price_spread,
            params: p,
            completeness: ev.phi,
            emm_distance: p.sigma / p.lambda,
            revenue: epsilon * n * ev.mean_z,
            volume: n * ev.mean_z,
            mean_z: ev.mean_z,
            utility: ev.utility,
            residual,
            identities: ev.identities,
            iterations,
            at_boundary: ev.phi > COMPLETENESS_GUARD,
        }
    }

    /// Continuation sweep over ascending `n`. Failures are reported per point
    /// and the next point restarts from the last success.
    pub fn sweep(&self, n_values: &[f64], epsilon: f64) -> Result<Vec<SweepPoint>> {
        if n_values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Precondition("n values must be sorted ascending".into()));
        }
        let mut out = Vec::with_capacity(n_values.len());
        let mut warm: Option<OrderParameters> = None;
        let mut stopped = false;
        for &n in n_values {
            if stopped {
                out.push(SweepPoint {
                    n,
                    epsilon,
                    result: Err(Error::Domain("continuation stopped at the completeness boundary".into())),
                });
                continue;
            }
            let result = self.solve(n, epsilon, warm.as_ref());
            if let Ok(s) = &result {
                warm = Some(s.params);
                stopped = s.at_boundary;
            }
            out.push(SweepPoint { n, epsilon, result });
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub n: f64,
    pub epsilon: f64,
    pub result: Result<SaddleSolution>,
}

/// Default solver: order-64 quadrature.
pub fn solve_order_parameters(n: f64, epsilon: f64, crra_exponent: f64, price_spread: f64) -> Result<SaddleSolution> {
    SaddleSolver::new(crra_exponent, price_spread, 64)?.solve(n, epsilon, None)
}

pub fn sweep(n_values: &[f64], epsilon: f64, crra_exponent: f64, price_spread: f64) -> Result<Vec<SweepPoint>> {
    SaddleSolver::new(crra_exponent, price_spread, 64)?.sweep(n_values, epsilon)
}

/// Density of consumption on a grid, by change of variables along each price branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Probability mass between the first and last grid point.
    pub covered_mass: f64,
    /// Point masses `(location, weight)` when the Gaussian spread vanishes.
    pub atoms: Vec<(f64, f64)>,
}

impl ConsumptionDensity {
    pub fn is_degenerate(&self) -> bool {
        !self.atoms.is_empty()
    }

    pub fn warning(&self) -> Option<String> {
        (!self.is_degenerate() && self.covered_mass < 1.0 - 1e-6).then(|| {
            format!(
                "grid covers only {:.8} of the consumption mass",
                self.covered_mass
            )
        })
    }
}

struct Branches {
    chi: f64,
    kappa: f64,
    b: f64,
    prices: [f64; 2],
    u: Crra,
}

impl Branches {
    fn new(s: &SaddleSolution) -> Result<Self> {
        let p = &s.params;
        Ok(Branches {
            chi: p.chi,
            kappa: p.kappa,
            b: (s.n * p.big_g).sqrt(),
            prices: [1.0 - s.price_spread, 1.0 + s.price_spread],
            u: Crra::new(s.crra_exponent)?,
        })
    }

    fn t_of(&self, c: f64, p: f64) -> f64 {
        (self.chi * self.u.marginal(c) / p - c * p + 1.0 - self.kappa) / self.b
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.prices.iter().map(|&p| 0.5 * normal_cdf(-self.t_of(x, p))).sum()
    }

    fn density(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        self.prices
            .iter()
            .map(|&p| {
                let jac = (p - self.chi * self.u.curvature(c) / p) / self.b;
                0.5 * normal_pdf(self.t_of(c, p)) * jac
            })
            .sum()
    }

    fn degenerate(&self) -> bool {
        !(self.b > 1e-300)
    }
}

pub fn consumption_density(solution: &SaddleSolution, grid: &[f64]) -> Result<ConsumptionDensity> {
    let br = Branches::new(solution)?;
    if br.degenerate() {
        let atoms = br
            .prices
            .iter()
            .map(|&p| Ok((solve_consumption(br.chi, 1.0 - br.kappa, p, &br.u)?, 0.5)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(ConsumptionDensity {
            grid: grid.to_vec(),
            density: vec![0.0; grid.len()],
            covered_mass: 1.0,
            atoms,
        });
    }
    let density = grid.iter().map(|&c| br.density(c)).collect();
    let covered_mass = match (grid.first(), grid.last()) {
        (Some(&a), Some(&b)) if b > a => br.cdf(b) - br.cdf(a),
        _ => 0.0,
    };
    Ok(ConsumptionDensity { grid: grid.to_vec(), density, covered_mass, atoms: vec![] })
}

/// `P(c* ≤ x)`.
pub fn consumption_cdf(solution: &SaddleSolution, x: f64) -> Result<f64> {
    let br = Branches::new(solution)?;
    if br.degenerate() {
        let mut f = 0.0;
        for &p in &br.prices {
            if solve_consumption(br.chi, 1.0 - br.kappa, p, &br.u)? <= x {
                f += 0.5;
            }
        }
        return Ok(f);
    }
    Ok(br.cdf(x))
}

/// Quantile of consumption by bisection in `ln c`.
pub fn consumption_quantile(solution: &SaddleSolution, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Precondition(format!("quantile level {level} outside (0,1)")));
    }
    let br = Branches::new(solution)?;
    if br.degenerate() {
        let mut a: Vec<f64> = br
            .prices
            .iter()
            .map(|&p| solve_consumption(br.chi, 1.0 - br.kappa, p, &br.u))
            .collect::<Result<_>>()?;
        a.sort_by(f64::total_cmp);
        return Ok(if level <= 0.5 { a[0] } else { a[1] });
    }
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while br.cdf(lo.exp()) > level {
        lo *= 2.0;
        if lo < -700.0 {
            return Err(Error::Bracket("consumption quantile lower".into()));
        }
    }
    while br.cdf(hi.exp()) < level {
        hi *= 2.0;
        if hi > 700.0 {
            return Err(Error::Bracket("consumption quantile upper".into()));
        }
    }
    brent(|y| br.cdf(y.exp()) - level, lo, hi, 1e-14, 500).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(lambda: f64, nu: f64, sigma: f64, big_g: f64, chi: f64, kappa: f64) -> OrderParameters {
        OrderParameters { lambda, nu, sigma, big_g, chi, kappa }
    }

    #[test]
    fn z_star_examples() {
        let p = params(1.0, 2.0, 1.0, 0.0, 1.0, 0.0);
        assert_eq!(z_star(3.0, &p, 0.0), 1.5);
        let q = params(1.3, 0.7, 0.4, 0.0, 1.0, 0.0);
        assert_eq!(z_star(0.05 * 1.3 / 0.4, &q, 0.05), 0.0);
        assert_eq!(z_star(-1.0, &q, 0.05), 0.0);
    }

    #[test]
    fn c_star_matches_bisection() {
        let u = Crra::default();
        let p = params(1.0, 1.0, 0.1, 0.0, 1.0, 0.0);
        let c = c_star(0.0, 1.0, &p, 1.0, &u).unwrap();
        // bisection on c^{-1/2} − c + 1 = 0
        let (mut lo, mut hi) = (0.5_f64, 5.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 / mid.sqrt() - mid + 1.0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(c, 0.5 * (lo + hi), epsilon = 1e-13);
        assert_relative_eq!(c, 1.7549, epsilon = 1e-4);
    }

    #[test]
    fn c_star_small_chi_limit_and_monotonicity() {
        let u = Crra::default();
        let p = params(1.0, 1.0, 0.1, 0.04, 1e-10, 0.2);
        let c = c_star(0.5, 1.2, &p, 1.0, &u).unwrap();
        assert_relative_eq!(c * 1.2, 1.0 - 0.2 - 0.2 * 0.5, max_relative = 1e-6);
        let q = params(1.0, 1.0, 0.1, 0.3, 0.8, 0.1);
        let vals: Vec<f64> = (-40..=40).map(|k| c_star(k as f64 * 0.1, 0.8, &q, 1.5, &u).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn moments_of_z_star_match_adaptive_quadrature() {
        let p = params(1.1, 0.6, 0.3, 0.0, 1.0, 0.0);
        let eps = 0.05;
        let a = eps * p.lambda / p.sigma;
        let oracle = |k: i32| {
            // composite Simpson on [a, 12] where z* > 0
            let m = 200_000;
            let (lo, hi) = (a, 12.0);
            let h = (hi - lo) / m as f64;
            let f = |t: f64| {
                let z = z_star(t, &p, eps);
                match k {
                    0 => z,
                    1 => z * z,
                    _ => z * t,
                }
                .mul_add(1.0, 0.0)
                    * normal_pdf(t)
            };
            let mut s = f(lo) + f(hi);
            for i in 1..m {
                s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let mean = p.sigma * moment(1, -a) / p.nu;
        let second = p.sigma.powi(2) * moment(2, -a) / p.nu.powi(2);
        let cross = p.sigma * moment(0, -a) / p.nu;
        assert_relative_eq!(oracle(0), mean, epsilon = 1e-10);
        assert_relative_eq!(oracle(1), second, epsilon = 1e-10);
        assert_relative_eq!(oracle(2), cross, epsilon = 1e-10);
    }

    #[test]
    fn prototype_point_is_reproduced() {
        let s = solve_order_parameters(0.5, 0.05, 0.5, 0.2).unwrap();
        assert!(s.residual < 1e-9);
        assert_relative_eq!(s.params.lambda, 1.01596, max_relative = 1e-4);
        assert_relative_eq!(s.completeness, 0.14550, max_relative = 1e-3);
        assert_relative_eq!(s.emm_distance, 0.090828, max_relative = 1e-3);
        assert_relative_eq!(s.params.chi, 0.33435, max_relative = 1e-3);
    }

    #[test]
    fn identities_hold() {
        for &(n, eps) in &[(0.5, 0.05), (1.0, 0.1), (1.5, 0.01), (1.0, -0.01)] {
            let s = solve_order_parameters(n, eps, 0.5, 0.2).unwrap();
            let id = s.identities;
            assert!(id.budget.abs() < 1e-10, "{n} {eps} {id:?}");
            assert!(id.no_arbitrage.abs() < 1e-8, "{n} {eps} {id:?}");
            assert!(id.chi_dual.abs() < 1e-10, "{n} {eps} {id:?}");
            assert!(id.nu_dual.abs() < 1e-8, "{n} {eps} {id:?}");
            let a = eps * s.params.lambda / s.params.sigma;
            assert_relative_eq!(s.completeness, n * normal_cdf(-a), max_relative = 1e-12);
        }
    }

    #[test]
    fn quadrature_refinement_is_stable() {
        let coarse = SaddleSolver::new(0.5, 0.2, 64).unwrap().solve(1.0, 0.05, None).unwrap();
        let fine = SaddleSolver::new(0.5, 0.2, 128).unwrap().solve(1.0, 0.05, None).unwrap();
        for (a, b) in [
            (coarse.completeness, fine.completeness),
            (coarse.emm_distance, fine.emm_distance),
            (coarse.revenue, fine.revenue),
            (coarse.params.chi, fine.params.chi),
        ] {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn small_n_has_no_trading() {
        let s = solve_order_parameters(1e-3, 0.05, 0.5, 0.2).unwrap();
        assert!(s.completeness < 1e-3);
        assert!(s.revenue.abs() < 1e-5);
    }

    #[test]
    fn outside_the_stable_region_is_a_domain_error() {
        assert!(matches!(solve_order_parameters(2.2, -0.01, 0.5, 0.2), Err(Error::Domain(_))));
        assert!(matches!(solve_order_parameters(2.5, 0.0, 0.5, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn density_is_normalized_and_matches_cdf() {
        let s = solve_order_parameters(1.0, -0.01, 0.5, 0.2).unwrap();
        let lo = consumption_quantile(&s, 1e-10).unwrap();
        let hi = consumption_quantile(&s, 1.0 - 1e-10).unwrap();
        let m = 200_000;
        let grid: Vec<f64> = (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect();
        let d = consumption_density(&s, &grid).unwrap();
        let h = (hi - lo) / m as f64;
        let integral: f64 = d.density.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
        assert!(d.warning().is_none());
        let q = consumption_quantile(&s, 0.3).unwrap();
        assert_relative_eq!(consumption_cdf(&s, q).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_density_has_two_atoms() {
        let mut s = solve_order_parameters(0.5, 0.05, 0.5, 0.2).unwrap();
        s.params.big_g = 0.0;
        let d = consumption_density(&s, &[0.5, 1.0, 1.5]).unwrap();
        assert_eq!(d.atoms.len(), 2);
        let u = Crra::default();
        for (c, w) in &d.atoms {
            assert_eq!(*w, 0.5);
            let residual = [0.8, 1.2]
                .iter()
                .map(|&p| (s.params.chi * u.marginal(*c) / p - c * p + 1.0 - s.params.kappa).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(residual < 1e-12);
        }
    }

    #[test]
    fn sweep_warm_starts_and_stays_monotone() {
        let ns: Vec<f64> = (1..=16).map(|k| 0.25 * k as f64).collect();
        let pts = sweep(&ns, 0.05, 0.5, 0.2).unwrap();
        let phis: Vec<f64> = pts.iter().map(|p| p.result.as_ref().unwrap().completeness).collect();
        let chis: Vec<f64> = pts.iter().map(|p| p.result.as_ref().unwrap().params.chi).collect();
        assert!(phis.windows(2).all(|w| w[1] > w[0]));
        assert!(chis.windows(2).all(|w| w[1] > w[0]));
        assert!(sweep(&[1.0, 0.5], 0.05, 0.5, 0.2).is_err());
    }
}
