//! Newton solve of the collocated periodic state equation
//! `CFDS[s](t_j) = F(t_j, s_j, D_j)` for a prescribed control.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::frac::{cfds_apply, direct_cfds, Side, SpectralMultiplierTable};
use crate::grid::{PeriodicGrid, Profile};
use crate::model::ChemostatParams;

pub const DEFAULT_STATE_TOL: f64 = 1e-10;
pub const MAX_NEWTON_ITERATIONS: usize = 100;

/// Iterates are kept at least this far inside `(0, s_in)`.
const CLAMP_MARGIN: f64 = 1e-9;
/// A solution this close to `s_in` is the washout branch.
const TRIVIAL_BRANCH_GAP: f64 = 1e-6;
const MIN_STEP: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone)]
pub struct PeriodicSolveResult {
    pub state: Profile,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Collocation operator for one parameter set on one grid. Building it
/// computes the multiplier table and the dense left matrix once.
#[derive(Debug, Clone)]
pub struct StateOperator {
    params: ChemostatParams,
    table: SpectralMultiplierTable,
    left: DMatrix<f64>,
}

impl StateOperator {
    pub fn new(params: &ChemostatParams, grid: PeriodicGrid) -> Result<Self> {
        if (grid.period() - params.period()).abs() > 1e-12 * params.period() {
            return Err(Error::InvalidParams(format!(
                "grid period {} differs from T = {}",
                grid.period(),
                params.period()
            )));
        }
        let table = SpectralMultiplierTable::new(grid, params.alpha(), params.memory());
        let left = table.matrix(Side::Left);
        Ok(StateOperator {
            params: *params,
            table,
            left,
        })
    }

    pub fn params(&self) -> &ChemostatParams {
        &self.params
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.table.grid()
    }

    pub fn table(&self) -> &SpectralMultiplierTable {
        &self.table
    }

    /// Dense left operator matrix `M`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.left
    }

    /// `r_j = (M s)_j - F(s_j, D_j)`.
    pub fn residual(&self, s: &[f64], d: &[f64]) -> Vec<f64> {
        let sv = DVector::from_column_slice(s);
        let ms = &self.left * sv;
        ms.iter()
            .zip(s.iter().zip(d))
            .map(|(m, (&sj, &dj))| m - self.params.rhs_unchecked(sj, dj))
            .collect()
    }

    /// `J = M - diag(dF/ds)`.
    pub fn state_jacobian(&self, s: &[f64], d: &[f64]) -> DMatrix<f64> {
        let mut j = self.left.clone();
        for (i, (&sj, &dj)) in s.iter().zip(d).enumerate() {
            j[(i, i)] -= self.params.rhs_partials(sj, dj).0;
        }
        j
    }

    /// Damped Newton iteration from `guess`; see [`solve_periodic_state`].
    pub fn solve(&self, d: &Profile, guess: &Profile, tol: f64) -> Result<PeriodicSolveResult> {
        let n = self.grid().len();
        if d.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: d.len(),
            });
        }
        if guess.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: guess.len(),
            });
        }
        let s_in = self.params.s_in();
        let (lo, hi) = (CLAMP_MARGIN, s_in - CLAMP_MARGIN);
        let dv = d.values();
        let mut s: Vec<f64> = guess.values().iter().map(|v| v.clamp(lo, hi)).collect();
        let mut r = self.residual(&s, dv);
        let mut norm = max_abs(&r);

        for it in 0..=MAX_NEWTON_ITERATIONS {
            if !norm.is_finite() {
                return Err(nonconvergence(it, norm, "non-finite residual"));
            }
            if norm <= tol {
                return self.finish(s, norm, it, tol);
            }
            if it == MAX_NEWTON_ITERATIONS {
                break;
            }
            let jac = self.state_jacobian(&s, dv);
            let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
            let delta = jac.lu().solve(&rhs).ok_or_else(|| {
                Error::Singular(format!("state Jacobian at Newton iteration {it}"))
            })?;

            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = s
                    .iter()
                    .zip(delta.iter())
                    .map(|(a, b)| (a + step * b).clamp(lo, hi))
                    .collect();
                let rt = self.residual(&trial, dv);
                let nt = max_abs(&rt);
                if nt < (1.0 - 1e-4 * step) * norm || (step <= MIN_STEP && nt.is_finite()) {
                    s = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
                step *= 0.5;
                if step < MIN_STEP {
                    return Err(nonconvergence(it, norm, "line search failed"));
                }
            }
        }
        Err(nonconvergence(
            MAX_NEWTON_ITERATIONS,
            norm,
            "iteration cap reached",
        ))
    }

    fn finish(
        &self,
        s: Vec<f64>,
        norm: f64,
        iterations: usize,
        tol: f64,
    ) -> Result<PeriodicSolveResult> {
        let s_in = self.params.s_in();
        if let Some(j) = s.iter().position(|&v| v > s_in - TRIVIAL_BRANCH_GAP) {
            return Err(Error::NonConvergence {
                iterations,
                residual: norm,
                reason: format!("converged to the washout branch (s[{j}] = {})", s[j]),
            });
        }
        Ok(PeriodicSolveResult {
            state: Profile::new(*self.grid(), s)?,
            residual_norm: norm,
            iterations,
            converged: norm <= tol,
        })
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(
        0.0,
        |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) },
    )
}

fn nonconvergence(iterations: usize, residual: f64, reason: &str) -> Error {
    Error::NonConvergence {
        iterations,
        residual,
        reason: reason.to_string(),
    }
}

/// Solve the periodic reduced equation for control `d`, starting at `guess`,
/// until the max collocation residual is at most `tol`.
pub fn solve_periodic_state(
    params: &ChemostatParams,
    d: &Profile,
    guess: &Profile,
    tol: f64,
) -> Result<PeriodicSolveResult> {
    StateOperator::new(params, *d.grid())?.solve(d, guess, tol)
}

/// Collocation residuals of the 2D system `(s, x)` under control `d`.
pub fn residuals_2d(
    params: &ChemostatParams,
    s: &Profile,
    x: &Profile,
    d: &Profile,
) -> Result<(Profile, Profile)> {
    let grid = *s.grid();
    for p in [x, d] {
        if p.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                got: p.len(),
            });
        }
    }
    let table = SpectralMultiplierTable::new(grid, params.alpha(), params.memory());
    let ds = cfds_apply(s, &table, Side::Left)?;
    let dx = cfds_apply(x, &table, Side::Left)?;
    let mut rs = Vec::with_capacity(grid.len());
    let mut rx = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let (fs, fx) = params.full_rhs(grid.node(j), s.values()[j], x.values()[j], d.values()[j]);
        rs.push(ds.values()[j] - fs);
        rx.push(dx.values()[j] - fx);
    }
    Ok((Profile::new(grid, rs)?, Profile::new(grid, rx)?))
}

/// Residual of the averaged balance `mean(D (s_in - s)) = mean(ν(s) (s_in - s))`.
pub fn integral_balance_check(params: &ChemostatParams, s: &Profile, d: &Profile) -> Result<f64> {
    if s.len() != d.len() {
        return Err(Error::Shape {
            expected: s.len(),
            got: d.len(),
        });
    }
    let s_in = params.s_in();
    let n = s.len() as f64;
    let mut supply = 0.0;
    let mut uptake = 0.0;
    for (&sj, &dj) in s.values().iter().zip(d.values()) {
        supply += dj * (s_in - sj);
        uptake += params.nu(sj)? * (s_in - sj);
    }
    Ok(((supply - uptake) / n).abs())
}

/// Collocation residuals recomputed with the quadrature definition of the
/// operator applied to the trigonometric interpolant of `s`.
pub fn oracle_residuals(params: &ChemostatParams, s: &Profile, d: &Profile) -> Result<Vec<f64>> {
    let interp = s.interpolant();
    let grid = *s.grid();
    (0..grid.len())
        .map(|j| {
            let t = grid.node(j);
            let lhs = direct_cfds(
                |u| interp.derivative(u),
                t,
                params.alpha(),
                params.memory(),
                Side::Left,
            )?;
            Ok(lhs - params.rhs_unchecked(s.values()[j], d.values()[j]))
        })
        .collect()
}
