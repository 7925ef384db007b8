//! Direct transcription of the periodic control problem and its solver.
//!
//! The NLP has decision vector `(s_0..s_{N-1}, D_0..D_{N-1})`, objective
//! `mean(s)`, `N` collocation equalities, one mean-dilution equality and box
//! bounds. [`solve_nlp`] works in the reduced space: for each control the
//! state block is eliminated by a Newton solve (so the collocation equalities
//! hold to the state tolerance), the reduced gradient comes from one adjoint
//! solve with the transposed state Jacobian, and the control is updated by a
//! projected gradient step onto `{D_min <= D <= D_max, mean(D) = D_bar}`.
//! The stopping test is the projected-gradient form of the KKT conditions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, Profile};
use crate::model::ChemostatParams;
use crate::solver::{PeriodicSolveResult, StateOperator, DEFAULT_STATE_TOL};

pub const DEFAULT_KKT_TOL: f64 = 1e-6;
pub const MAX_MAJOR_ITERATIONS: usize = 500;
/// Weight of the infeasibility norm in the merit function.
pub const MERIT_PENALTY: f64 = 1e3;
/// Start amplitude as a fraction of `D_max - D_bar`.
pub const START_AMPLITUDE: f64 = 0.3;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1e6;
const CONTINUATION_STAGES: usize = 8;

#[derive(Debug, Clone)]
pub struct TranscribedNlp {
    op: StateOperator,
}

impl TranscribedNlp {
    pub fn new(params: &ChemostatParams, grid: PeriodicGrid) -> Result<Self> {
        Ok(TranscribedNlp {
            op: StateOperator::new(params, grid)?,
        })
    }

    pub fn operator(&self) -> &StateOperator {
        &self.op
    }

    pub fn params(&self) -> &ChemostatParams {
        self.op.params()
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.op.grid()
    }

    /// Number of collocation nodes `N`.
    pub fn nodes(&self) -> usize {
        self.grid().len()
    }

    pub fn variable_count(&self) -> usize {
        2 * self.nodes()
    }

    pub fn constraint_count(&self) -> usize {
        self.nodes() + 1
    }

    fn split<'a>(&self, z: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if z.len() != self.variable_count() {
            return Err(Error::Shape {
                expected: self.variable_count(),
                got: z.len(),
            });
        }
        Ok(z.split_at(self.nodes()))
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        let (s, _) = self.split(z)?;
        Ok(s.iter().sum::<f64>() / s.len() as f64)
    }

    /// Collocation residuals followed by `mean(D) - D_bar`.
    pub fn constraints(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (s, d) = self.split(z)?;
        let mut c = self.op.residual(s, d);
        c.push(d.iter().sum::<f64>() / d.len() as f64 - self.params().d_bar());
        Ok(c)
    }

    /// Constraint Jacobian `[M - diag(dF/ds) | -diag(dF/dD); 0 | 1/N]`.
    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let (s, d) = self.split(z)?;
        let n = self.nodes();
        let mut jac = DMatrix::zeros(n + 1, 2 * n);
        jac.view_mut((0, 0), (n, n))
            .copy_from(&self.op.state_jacobian(s, d));
        for j in 0..n {
            jac[(j, n + j)] = -self.params().rhs_partials(s[j], d[j]).1;
            jac[(n, n + j)] = 1.0 / n as f64;
        }
        Ok(jac)
    }

    pub fn objective_gradient(&self) -> Vec<f64> {
        let n = self.nodes();
        let mut g = vec![1.0 / n as f64; n];
        g.extend(std::iter::repeat_n(0.0, n));
        g
    }

    /// Lower and upper variable bounds.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.params();
        let n = self.nodes();
        let mut lo = vec![0.0; n];
        let mut hi = vec![p.s_in(); n];
        lo.extend(std::iter::repeat_n(p.d_min(), n));
        hi.extend(std::iter::repeat_n(p.d_max(), n));
        (lo, hi)
    }

    /// Max-norm of the equality residuals plus bound violations.
    pub fn infeasibility(&self, z: &[f64]) -> Result<f64> {
        let c = self.constraints(z)?;
        let (lo, hi) = self.bounds();
        let eq = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = z
            .iter()
            .zip(lo.iter().zip(&hi))
            .fold(0.0f64, |m, (v, (l, h))| m.max(l - v).max(v - h));
        Ok(eq.max(bound))
    }

    pub fn merit(&self, z: &[f64]) -> Result<f64> {
        Ok(self.objective(z)? + MERIT_PENALTY * self.infeasibility(z)?)
    }

    /// Reduced gradient of `mean(s(D))` with respect to the control samples,
    /// together with the adjoint vector `λ` solving `J_s^T λ = 1/N`.
    pub fn reduced_gradient(&self, s: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.nodes();
        let js = self.op.state_jacobian(s, d);
        let rhs = DVector::from_element(n, 1.0 / n as f64);
        let lambda = js
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("adjoint system of the state Jacobian".into()))?;
        let g = (0..n)
            .map(|j| self.params().rhs_partials(s[j], d[j]).1 * lambda[j])
            .collect();
        Ok((g, lambda.iter().copied().collect()))
    }

    /// State for control `d`, with continuation from `D_bar` if a direct
    /// Newton solve from `guess` fails.
    pub fn state_for(&self, d: &Profile, guess: &Profile, tol: f64) -> Result<PeriodicSolveResult> {
        match self.op.solve(d, guess, tol) {
            Ok(r) => Ok(r),
            Err(e) if e.is_nonconvergence() || matches!(e, Error::Singular(_)) => {
                self.continuation(d, tol)
            }
            Err(e) => Err(e),
        }
    }

    fn continuation(&self, d: &Profile, tol: f64) -> Result<PeriodicSolveResult> {
        let p = self.params();
        let g = *self.grid();
        let mut state = Profile::constant(g, p.equilibrium()?.s_bar);
        let mut last = None;
        for stage in 1..=CONTINUATION_STAGES {
            let w = stage as f64 / CONTINUATION_STAGES as f64;
            let dk = d.map(|v| p.d_bar() + w * (v - p.d_bar()));
            let r = self.op.solve(&dk, &state, tol)?;
            state = r.state.clone();
            last = Some(r);
        }
        Ok(last.expect("at least one continuation stage"))
    }
}

/// Options for [`solve_nlp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol_kkt: f64,
    pub tol_state: f64,
    pub max_iterations: usize,
    /// Recorded in reports; the start family itself is deterministic.
    pub seed: u64,
    /// Output grid size recorded in reports.
    pub m: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_kkt: DEFAULT_KKT_TOL,
            tol_state: DEFAULT_STATE_TOL,
            max_iterations: MAX_MAJOR_ITERATIONS,
            seed: 0,
            m: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub objective: f64,
    pub improvement_pct: f64,
    pub kkt_residual: f64,
    pub constraint_infeasibility: f64,
    pub switch_times: Vec<f64>,
    pub iterations: usize,
    /// Seconds; excluded from any deterministic output.
    pub wall_time: f64,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub converged: bool,
    /// Index of the multistart start that produced this report (0 = steady state).
    pub start_index: usize,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub report: SolveReport,
    pub state: Profile,
    pub control: Profile,
    /// Adjoint vector of the final iterate.
    pub adjoint: Vec<f64>,
}

/// Euclidean projection of `v` onto `{lo <= x <= hi, mean(x) = mean}`.
///
/// The projection is `clip(v + c)` for the unique shift `c`; the shift is
/// bracketed by bisection and then solved exactly on the final active set.
pub fn project_control(v: &[f64], lo: f64, hi: f64, mean: f64) -> Vec<f64> {
    let n = v.len() as f64;
    let clip_mean = |c: f64| v.iter().map(|x| (x + c).clamp(lo, hi)).sum::<f64>() / n;
    if hi <= lo {
        return vec![lo; v.len()];
    }
    let vmax = v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    let vmin = v.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    let (mut a, mut b) = (lo - vmax, hi - vmin);
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if clip_mean(c) < mean {
            a = c;
        } else {
            b = c;
        }
        if b - a <= f64::EPSILON * (a.abs() + b.abs()) {
            break;
        }
    }
    let c0 = 0.5 * (a + b);
    // exact shift with the active set frozen at c0
    let (mut fixed, mut free) = (0.0, 0usize);
    let mut free_sum = 0.0;
    for x in v {
        let y = x + c0;
        if y <= lo {
            fixed += lo;
        } else if y >= hi {
            fixed += hi;
        } else {
            free += 1;
            free_sum += x;
        }
    }
    let c = if free > 0 {
        let c = (n * mean - fixed - free_sum) / free as f64;
        let consistent = v.iter().all(|x| {
            let y0 = x + c0;
            let y = x + c;
            (y0 <= lo) == (y <= lo) && (y0 >= hi) == (y >= hi)
        });
        if consistent {
            c
        } else {
            c0
        }
    } else {
        c0
    };
    v.iter().map(|x| (x + c).clamp(lo, hi)).collect()
}

fn now() -> Option<std::time::Instant> {
    #[cfg(not(target_arch = "wasm32"))]
    {
        Some(std::time::Instant::now())
    }
    #[cfg(target_arch = "wasm32")]
    {
        None
    }
}

fn elapsed(t0: Option<std::time::Instant>) -> f64 {
    t0.map(|t| t.elapsed().as_secs_f64()).unwrap_or(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve the transcribed problem from `initial = (state guess, control)`.
///
/// Returns the best iterate; `report.converged` is false if the iteration
/// cap was hit before the KKT tolerance was met.
pub fn solve_nlp(
    nlp: &TranscribedNlp,
    initial: (&Profile, &Profile),
    opts: &SolveOptions,
) -> Result<NlpSolution> {
    let t0 = now();
    let p = nlp.params();
    let n = nlp.nodes();
    let (lo, hi, d_bar) = (p.d_min(), p.d_max(), p.d_bar());
    let (s_init, d_init) = initial;
    if d_init.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: d_init.len(),
        });
    }
    if d_init.values().iter().any(|&v| v < lo || v > hi) {
        return Err(Error::domain("initial control violates the bounds"));
    }
    let grid = *nlp.grid();
    let project = |v: &[f64]| project_control(v, lo, hi, d_bar);

    let mut d = Profile::new(grid, project(d_init.values()))?;
    let mut state = nlp.state_for(&d, s_init, opts.tol_state)?;
    let mut f = state.state.mean();
    let (mut g, mut lambda) = nlp.reduced_gradient(state.state.values(), d.values())?;
    let mut step = 1.0;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        // gradient in the mean inner product, so the scale is independent of N
        let big_g: Vec<f64> = g.iter().map(|v| v * n as f64).collect();
        let dv = d.values();
        let trial_full: Vec<f64> = dv.iter().zip(&big_g).map(|(x, y)| x - y).collect();
        let pg = project(&trial_full);
        kkt = dv
            .iter()
            .zip(&pg)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if kkt <= opts.tol_kkt {
            break;
        }
        iterations += 1;

        let mut accepted = None;
        while step >= MIN_STEP {
            let cand: Vec<f64> = dv.iter().zip(&big_g).map(|(x, y)| x - step * y).collect();
            let dn = Profile::new(grid, project(&cand))?;
            let decrease = dot(
                &g,
                &dn.values()
                    .iter()
                    .zip(dv)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if let Ok(sn) = nlp.op.solve(&dn, &state.state, opts.tol_state) {
                let fnew = sn.state.mean();
                if fnew <= f + ARMIJO * decrease {
                    accepted = Some((dn, sn, fnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((dn, sn, fnew)) = accepted else {
            break;
        };
        let (gn, ln) = nlp.reduced_gradient(sn.state.values(), dn.values())?;

        // Barzilai-Borwein step for the next iteration
        let sk: Vec<f64> = dn
            .values()
            .iter()
            .zip(d.values())
            .map(|(a, b)| a - b)
            .collect();
        let yk: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| (a - b) * n as f64).collect();
        let sy = dot(&sk, &yk);
        step = if sy > 0.0 {
            dot(&sk, &sk) / sy
        } else {
            4.0 * step
        };
        step = step.clamp(1e-6, MAX_STEP);

        d = dn;
        state = sn;
        f = fnew;
        g = gn;
        lambda = ln;
    }

    let mut z = state.state.values().to_vec();
    z.extend_from_slice(d.values());
    let s_bar = p.equilibrium()?.s_bar;
    let report = SolveReport {
        objective: f,
        improvement_pct: 100.0 * (s_bar - f) / s_bar,
        kkt_residual: kkt,
        constraint_infeasibility: nlp.infeasibility(&z)?,
        switch_times: Vec::new(),
        iterations,
        wall_time: elapsed(t0),
        seed: opts.seed,
        n,
        m: opts.m,
        converged: kkt <= opts.tol_kkt,
        start_index: 0,
    };
    Ok(NlpSolution {
        report,
        state: state.state,
        control: d,
        adjoint: lambda,
    })
}

/// Start `k`: `D_bar + ε sin(2πkt/T)` with `ε = 0.3 (D_max - D_bar)`; start 0
/// is the steady state.
pub fn start_control(params: &ChemostatParams, grid: PeriodicGrid, k: usize) -> Profile {
    let eps = START_AMPLITUDE * (params.d_max() - params.d_bar());
    let w = 2.0 * std::f64::consts::PI * k as f64 / grid.period();
    Profile::from_fn(grid, |t| {
        if k == 0 {
            params.d_bar()
        } else {
            params.d_bar() + eps * (w * t).sin()
        }
    })
}

/// Run [`solve_nlp`] from the steady state and from `perturbations`
/// sinusoidal starts, returning the lowest-objective converged result.
/// Ties are broken by start index, so the outcome does not depend on
/// scheduling.
pub fn multistart(
    params: &ChemostatParams,
    grid: PeriodicGrid,
    perturbations: usize,
    opts: &SolveOptions,
) -> Result<NlpSolution> {
    let t0 = now();
    let nlp = TranscribedNlp::new(params, grid)?;
    let s_bar = params.equilibrium()?.s_bar;
    let guess = Profile::constant(grid, s_bar);
    let run = |k: usize| -> Result<NlpSolution> {
        let d0 = start_control(params, grid, k);
        let mut sol = solve_nlp(&nlp, (&guess, &d0), opts)?;
        sol.report.start_index = k;
        Ok(sol)
    };
    let starts: Vec<usize> = (0..=perturbations).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Result<NlpSolution>> = {
        use rayon::prelude::*;
        starts.par_iter().map(|&k| run(k)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<NlpSolution>> = starts.iter().map(|&k| run(k)).collect();

    let mut best: Option<NlpSolution> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(sol) => {
                let better = match &best {
                    None => true,
                    Some(b) => match (sol.report.converged, b.report.converged) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => sol.report.objective < b.report.objective,
                    },
                };
                if better {
                    best = Some(sol);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(mut b) => {
            b.report.wall_time = elapsed(t0);
            Ok(b)
        }
        None => Err(first_err.unwrap_or_else(|| Error::domain("no starts"))),
    }
}
