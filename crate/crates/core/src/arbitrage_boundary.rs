//! Boundary of the region with arbitrage opportunities for negative risk premium.
//!
//! With `I_k` the truncated Gaussian moments and
//! `t₀(ξ) = √(n/I₂(ξ)) · (ε I₁(ξ) − ξ I₀(ξ)/ε)`, the volume of arbitrage
//! portfolios vanishes where
//!
//! `B(ξ; n, ε) = 1 + ξ²/ε² − I₂(ξ) I₂(t₀) / (n I₀(ξ)²)`
//!
//! has a tangent zero in `ξ`. For each `ξ` the root `n_B(ξ)` of `B` in `n` is
//! found by bracketing; the boundary is the maximum of `n_B`, i.e. the zero
//! of `∂B/∂ξ` along that curve.

use crate::error::{Error, Result};
use crate::roots::brent;
use crate::special::{normal_cdf, normal_pdf};
use serde::{Deserialize, Serialize};

/// `I_k(ξ) = E[(t + ξ)^k ; t + ξ > 0]` for `k ∈ {0, 1, 2}`.
///
/// # Panics
/// For `k > 2`.
pub fn gaussian_partial_moment(k: u32, xi: f64) -> f64 {
    if xi < -4.0 {
        // Laplace continued fraction for the Mills ratio keeps full relative
        // accuracy deep in the tail.
        let y = -xi;
        let mut tail = 0.0;
        let mut t = [0.0; 3];
        for j in (1..200).rev() {
            tail = j as f64 / (y + tail);
            if j <= 2 {
                t[j] = tail;
            }
        }
        let base = normal_pdf(xi) / (y + t[1]);
        return match k {
            0 => base,
            1 => base * t[1],
            2 => base * t[1] * t[2],
            _ => panic!("partial moment order must be 0, 1 or 2, got {k}"),
        };
    }
    let cdf = normal_cdf(xi);
    let pdf = normal_pdf(xi);
    match k {
        0 => cdf,
        1 => xi * cdf + pdf,
        2 => (1.0 + xi * xi) * cdf + xi * pdf,
        _ => panic!("partial moment order must be 0, 1 or 2, got {k}"),
    }
}

use gaussian_partial_moment as moment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub epsilon: f64,
    pub n_critical: f64,
    pub xi: f64,
    pub t0: f64,
    /// `B` at the returned point.
    pub residual_1: f64,
    /// `∂B/∂ξ` at the returned point.
    pub residual_2: f64,
    /// All local maxima `(ξ, n)` of `n_B(ξ)` found on the scan.
    pub stationary_points: Vec<(f64, f64)>,
}

impl BoundaryPoint {
    pub fn is_multiple(&self) -> bool {
        self.stationary_points.len() > 1
    }
}

fn t0(xi: f64, n: f64, eps: f64) -> f64 {
    (n / moment(2, xi)).sqrt() * (eps * moment(1, xi) - xi * moment(0, xi) / eps)
}

/// The bracket `B(ξ; n, ε)`.
pub fn bracket(xi: f64, n: f64, eps: f64) -> f64 {
    let i0 = moment(0, xi);
    1.0 + xi * xi / (eps * eps) - moment(2, xi) * moment(2, t0(xi, n, eps)) / (n * i0 * i0)
}

/// `∂B/∂ξ` at fixed `n`.
pub fn bracket_slope(xi: f64, n: f64, eps: f64) -> f64 {
    let (i0, i1, i2) = (moment(0, xi), moment(1, xi), moment(2, xi));
    let h = eps * i1 - xi * i0 / eps;
    let dh = eps * i0 - i0 / eps - xi * normal_pdf(xi) / eps;
    let tt = (n / i2).sqrt() * h;
    let dt = n.sqrt() * (dh / i2.sqrt() - h * i1 / i2.powf(1.5));
    let j2 = moment(2, tt);
    let dj2 = 2.0 * moment(1, tt) * dt;
    2.0 * xi / (eps * eps)
        - (2.0 * i1 * j2 + i2 * dj2 - 2.0 * i2 * j2 * normal_pdf(xi) / i0) / (n * i0 * i0)
}

/// Root of `B(ξ, ·)` in `n`, if `B` changes sign.
pub fn critical_n_at(xi: f64, eps: f64) -> Option<f64> {
    let f = |n: f64| bracket(xi, n, eps);
    let mut lo = 1.0;
    let mut hi = 10.0;
    while f(lo) > 0.0 {
        lo *= 0.5;
        if lo < 1e-8 {
            return None;
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    brent(f, lo, hi, 1e-15, 300).ok()
}

fn xi_grid(eps: f64) -> Vec<f64> {
    let scale = eps.abs();
    let umax = (10.0 / scale).asinh();
    let m = 4000;
    (0..=m)
        .map(|k| scale * (-umax + 2.0 * umax * k as f64 / m as f64).sinh())
        .collect()
}

/// Boundary point for one `ε < 0`.
pub fn boundary_point(eps: f64) -> Result<BoundaryPoint> {
    if !(eps < 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("boundary requires ε < 0, got {eps}")));
    }
    let grid = xi_grid(eps);
    let nb: Vec<Option<f64>> = grid.iter().map(|&x| critical_n_at(x, eps)).collect();
    let along = |x: f64| -> f64 {
        match critical_n_at(x, eps) {
            Some(n) => bracket_slope(x, n, eps),
            None => f64::NAN,
        }
    };
    let mut stationary = Vec::new();
    for k in 1..grid.len() - 1 {
        if let (Some(a), Some(b), Some(c)) = (nb[k - 1], nb[k], nb[k + 1]) {
            // Only maxima of n_B are tangencies approached from B ≥ 0.
            if !(b >= a && b > c) {
                continue;
            }
            let (lo, hi) = (grid[k - 1], grid[k + 1]);
            let (flo, fhi) = (along(lo), along(hi));
            if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
                continue;
            }
            let xi = brent(along, lo, hi, 1e-17, 500)?;
            if let Some(n) = critical_n_at(xi, eps) {
                stationary.push((xi, n));
            }
        }
    }
    let &(xi, n) = stationary
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Bracket(format!("no tangency of B found for ε = {eps}")))?;
    Ok(BoundaryPoint {
        epsilon: eps,
        n_critical: n,
        xi,
        t0: t0(xi, n, eps),
        residual_1: bracket(xi, n, eps),
        residual_2: bracket_slope(xi, n, eps),
        stationary_points: stationary,
    })
}

/// One result per `ε`; a failure at one point does not stop the curve.
pub fn boundary_curve(epsilon_values: &[f64]) -> Vec<Result<BoundaryPoint>> {
    epsilon_values.iter().map(|&e| boundary_point(e)).collect()
}

/// Residuals of the unreduced stationarity system at internal scale `s`,
/// with `r = −ξs/ε`, `v = I₀(ξ)`, `ω = s² I₂/I₀²`, `λ = r + ε s I₁/I₀` and
/// `t₀ = λ √(n/ω)`.
pub fn stationarity_residuals(xi: f64, n: f64, eps: f64, s: f64) -> [f64; 5] {
    let r = -xi * s / eps;
    let (i0, i1, i2) = (moment(0, xi), moment(1, xi), moment(2, xi));
    let v = i0;
    let omega = s * s * i2 / (i0 * i0);
    let lambda = r + eps * s * i1 / i0;
    let tt = lambda * (n / omega).sqrt();
    [
        v - moment(0, xi),
        omega - s * s * i2 / (i0 * i0),
        lambda - r - eps * s * i1 / i0,
        (r - (omega / n).sqrt() * moment(1, tt)) / s,
        moment(0, tt) - n * v,
    ]
}

/// Solve the unreduced system directly in the scaled variable `r`; the
/// returned `(ξ, n)` must not depend on `s`.
pub fn boundary_at_scale(eps: f64, s: f64) -> Result<(f64, f64)> {
    if !(eps < 0.0 && s > 0.0) {
        return Err(Error::Domain(format!("need ε < 0 and s > 0, got ε {eps}, s {s}")));
    }
    let inner = |r: f64| -> Option<f64> {
        let xi = -eps * r / s;
        let i0 = moment(0, xi);
        let omega = s * s * moment(2, xi) / (i0 * i0);
        let lambda = r + eps * s * moment(1, xi) / i0;
        let g = |n: f64| moment(0, lambda * (n / omega).sqrt()) - n * i0;
        let hi = 1.0 / i0;
        let lo = 1e-9;
        if g(lo).signum() == g(hi).signum() {
            return None;
        }
        brent(g, lo, hi, 1e-15, 300).ok()
    };
    let outer = |r: f64| -> f64 {
        match inner(r) {
            Some(n) => stationarity_residuals(-eps * r / s, n, eps, s)[3],
            None => f64::NAN,
        }
    };
    let rs: Vec<f64> = xi_grid(eps).iter().map(|&xi| -xi * s / eps).collect();
    let vals: Vec<f64> = rs.iter().map(|&r| outer(r)).collect();
    let mut best: Option<(f64, f64)> = None;
    for k in 0..rs.len() - 1 {
        let (a, b) = (vals[k], vals[k + 1]);
        if a.is_finite() && b.is_finite() && a.signum() != b.signum() {
            let r = brent(outer, rs[k], rs[k + 1], 1e-16 * s, 500)?;
            if let Some(n) = inner(r) {
                let xi = -eps * r / s;
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((xi, n));
                }
            }
        }
    }
    best.ok_or_else(|| Error::Bracket(format!("no stationary point at scale {s}")))
}
