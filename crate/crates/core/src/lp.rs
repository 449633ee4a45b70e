//! Zero-sum matrix games solved as a linear program.
//!
//! The maximizer mixes over the rows of an `m × k` payoff matrix, the minimizer
//! over its columns. After shifting the matrix to be strictly positive the game
//! becomes `min 1ᵀx  s.t.  Aᵀx ≥ 1, x ≥ 0`, which starts dual feasible from the
//! slack basis and is solved with a dense-tableau dual simplex. The final basis
//! is re-solved from the original data and both feasibility certificates are
//! checked before the result is returned.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct GameSolution {
    /// max over row mixtures of the min column payoff.
    pub value: f64,
    /// Optimal row mixture (sums to one).
    pub row_strategy: Vec<f64>,
    /// Optimal column mixture (sums to one).
    pub column_strategy: Vec<f64>,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

struct Tableau {
    rows: usize,
    cols: usize,
    /// First slack column.
    slack: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.cols..(i + 1) * self.cols]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.t[r * cols + q];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        let pivot_row: Vec<f64> = self.row(r).to_vec();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[q] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.d[q] = 0.0;
        }
        self.basis[r] = q;
    }

    fn reprice(&mut self, cost: &[f64]) {
        for j in 0..self.cols {
            let mut s = cost[j];
            for i in 0..self.rows {
                s -= cost[self.basis[i]] * self.t[i * self.cols + j];
            }
            self.d[j] = s;
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn dual_simplex(&mut self, budget: usize) -> Result<usize> {
        for it in 0..budget {
            // Dual steepest edge: the slack block of the tableau is B⁻¹, so the
            // row norms of B⁻¹ are available exactly.
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let beta = self.rhs[i];
                if beta < -FEAS_TOL {
                    let norm: f64 = self.row(i)[self.slack..].iter().map(|v| v * v).sum();
                    let score = beta * beta / norm;
                    if pick.is_none_or(|(_, s)| score > s) {
                        pick = Some((i, score));
                    }
                }
            }
            let Some((r, _)) = pick else {
                return Ok(it);
            };
            let row = self.row(r);
            let mut best: Option<(usize, f64, f64)> = None;
            for (j, &a) in row.iter().enumerate() {
                if a < -PIVOT_TOL {
                    let ratio = self.d[j].max(0.0) / -a;
                    let better = match best {
                        None => true,
                        Some((_, br, ba)) => ratio < br || (ratio == br && -a > ba),
                    };
                    if better {
                        best = Some((j, ratio, -a));
                    }
                }
            }
            match best {
                Some((q, _, _)) => self.pivot(r, q),
                None => {
                    return Err(Error::IllConditioned(
                        "dual simplex found an infeasible row".into(),
                    ))
                }
            }
        }
        Err(Error::NonConvergence {
            what: "dual simplex",
            iterations: budget,
            residual: self.rhs.iter().cloned().fold(0.0, f64::min).abs(),
            trace: vec![],
        })
    }

    fn primal_simplex(&mut self, budget: usize) -> Result<usize> {
        for it in 0..budget {
            let (q, &dq) = self
                .d
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty tableau");
            if dq >= -FEAS_TOL {
                return Ok(it);
            }
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.t[i * self.cols + q];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    if best.is_none_or(|(_, br)| ratio < br) {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, q),
                None => return Err(Error::IllConditioned("primal simplex ray".into())),
            }
        }
        Err(Error::NonConvergence {
            what: "primal simplex",
            iterations: budget,
            residual: self.d.iter().cloned().fold(0.0, f64::min).abs(),
            trace: vec![],
        })
    }
}

/// Value and optimal strategies of the game with `payoff[(i, j)]` paid to the
/// row player when rows `i` and column `j` are played.
pub fn solve_matrix_game(payoff: &DMatrix<f64>) -> Result<GameSolution> {
    let (m, k) = payoff.shape();
    if m == 0 || k == 0 {
        return Err(Error::Precondition("empty payoff matrix".into()));
    }
    let shift = 1.0 - payoff.min();
    // Constraint rows are columns of the game: −(Aᵀx) + s = −1.
    let cols = m + k;
    let mut t = vec![0.0; k * cols];
    for j in 0..k {
        for i in 0..m {
            t[j * cols + i] = -(payoff[(i, j)] + shift);
        }
        t[j * cols + m + j] = 1.0;
    }
    let cost: Vec<f64> = (0..cols).map(|j| if j < m { 1.0 } else { 0.0 }).collect();
    // Deterministic cost perturbation against dual degeneracy.
    let perturbed: Vec<f64> = cost
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            if j < m {
                c + 1e-7 * (((j as f64 + 1.0) * 0.618_033_988_749_895).fract())
            } else {
                c
            }
        })
        .collect();
    let mut tab = Tableau {
        rows: k,
        cols,
        slack: m,
        t,
        rhs: vec![-1.0; k],
        d: perturbed.clone(),
        basis: (m..cols).collect(),
    };
    let budget = 50 * cols;
    let mut pivots = tab.dual_simplex(budget)?;
    tab.reprice(&cost);
    pivots += tab.primal_simplex(budget)?;

    let original = |row: usize, col: usize| -> f64 {
        if col < m {
            -(payoff[(col, row)] + shift)
        } else if col - m == row {
            1.0
        } else {
            0.0
        }
    };
    for _refresh in 0..4 {
        let bm = DMatrix::from_fn(k, k, |r, c| original(r, tab.basis[c]));
        let lu = bm.clone().lu();
        let xb = lu
            .solve(&DVector::from_element(k, -1.0))
            .ok_or_else(|| Error::IllConditioned("singular optimal basis".into()))?;
        let cb = DVector::from_iterator(k, tab.basis.iter().map(|&b| cost[b]));
        let y = bm
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| Error::IllConditioned("singular optimal basis".into()))?;
        let primal_ok = xb.iter().all(|&v| v >= -FEAS_TOL);
        let reduced: Vec<f64> = (0..cols)
            .map(|j| cost[j] - (0..k).map(|r| y[r] * original(r, j)).sum::<f64>())
            .collect();
        let dual_ok = reduced.iter().all(|&v| v >= -FEAS_TOL);
        if primal_ok && dual_ok {
            let mut x = vec![0.0; m];
            for (r, &b) in tab.basis.iter().enumerate() {
                if b < m {
                    x[b] = xb[r].max(0.0);
                }
            }
            let total: f64 = x.iter().sum();
            let w: Vec<f64> = y.iter().map(|v| (-v).max(0.0)).collect();
            let wsum: f64 = w.iter().sum();
            if total <= 0.0 || wsum <= 0.0 {
                return Err(Error::IllConditioned("degenerate game certificate".into()));
            }
            return Ok(GameSolution {
                value: 1.0 / total - shift,
                row_strategy: x.iter().map(|v| v / total).collect(),
                column_strategy: w.iter().map(|v| v / wsum).collect(),
                pivots,
            });
        }
        // Rebuild the tableau from the exact basis inverse and keep pivoting.
        let binv = lu
            .try_inverse()
            .ok_or_else(|| Error::IllConditioned("singular optimal basis".into()))?;
        let full = DMatrix::from_fn(k, cols, original);
        let nt = &binv * full;
        for r in 0..k {
            for c in 0..cols {
                tab.t[r * cols + c] = nt[(r, c)];
            }
            tab.rhs[r] = xb[r];
        }
        tab.d = reduced;
        for &b in &tab.basis {
            tab.d[b] = 0.0;
        }
        pivots += if primal_ok {
            tab.primal_simplex(budget)?
        } else {
            tab.dual_simplex(budget)?
        };
    }
    Err(Error::IllConditioned(
        "simplex basis failed the exact feasibility re-check".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn certificate_gap(p: &DMatrix<f64>, s: &GameSolution) -> (f64, f64) {
        let (m, k) = p.shape();
        let lower = (0..k)
            .map(|j| (0..m).map(|i| s.row_strategy[i] * p[(i, j)]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let upper = (0..m)
            .map(|i| (0..k).map(|j| s.column_strategy[j] * p[(i, j)]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        (lower, upper)
    }

    #[test]
    fn two_by_two_mixed_equilibrium() {
        let p = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 2.0, 4.0]);
        let s = solve_matrix_game(&p).unwrap();
        assert_relative_eq!(s.value, 2.5, epsilon = 1e-12);
        assert_relative_eq!(s.row_strategy[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.column_strategy[0], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn rock_paper_scissors() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0]);
        let s = solve_matrix_game(&p).unwrap();
        assert!(s.value.abs() < 1e-12);
        for v in &s.row_strategy {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dominated_row_gets_zero_weight() {
        let p = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 2.0]);
        let s = solve_matrix_game(&p).unwrap();
        assert_relative_eq!(s.value, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.row_strategy[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_row_games_match_golden_section() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k = rng.random_range(2..7);
            let p = DMatrix::from_fn(2, k, |_, _| rng.random_range(-1.0..1.0));
            let s = solve_matrix_game(&p).unwrap();
            let lower_env = |a: f64| {
                (0..k)
                    .map(|j| a * p[(0, j)] + (1.0 - a) * p[(1, j)])
                    .fold(f64::INFINITY, f64::min)
            };
            let (_, neg) = crate::roots::golden_min(|a| -lower_env(a), 0.0, 1.0, 1e-12);
            let endpoints = lower_env(0.0).max(lower_env(1.0));
            assert_relative_eq!(s.value, (-neg).max(endpoints), epsilon = 1e-9);
        }
    }

    #[test]
    fn random_games_close_the_duality_gap() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for &(m, k) in &[(5, 3), (20, 10), (60, 40), (80, 40)] {
            let p = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
            let s = solve_matrix_game(&p).unwrap();
            let (lo, hi) = certificate_gap(&p, &s);
            assert_relative_eq!(lo, s.value, epsilon = 1e-10);
            assert_relative_eq!(hi, s.value, epsilon = 1e-10);
        }
    }
}
