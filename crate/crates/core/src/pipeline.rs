//! Predictor-corrector driver.
//!
//! 1. predictor: multistart transcription solve on the `N` grid;
//! 2. switches detected on the predicted control and the mean restored;
//! 3. optional switch refinement;
//! 4. corrector: state solved for the bang-bang law on the `N` grid;
//! 5. phase: the periodic problem is invariant under time shifts, so the
//!    solution is translated to start where the state crosses `s_bar` upwards,
//!    then corrected again;
//! 6. everything is resampled onto the `M` output grid.

use crate::bangbang::{
    cell_average, correct_state_with, detect_switches, mean_adjust, phase_anchor, reconstruct,
    refine_switches, BangBangControl, ControlSampling,
};
use crate::error::{Error, Result};
use crate::grid::{resample, PeriodicGrid, Profile};
use crate::model::ChemostatParams;
use crate::opc::{multistart, NlpSolution, SolveOptions, SolveReport, DEFAULT_KKT_TOL};
use crate::solver::{StateOperator, DEFAULT_STATE_TOL};

const PHASE_ITERATIONS: usize = 8;
const PHASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub n: usize,
    pub m: usize,
    pub tol_state: f64,
    pub tol_kkt: f64,
    pub multistarts: usize,
    pub seed: u64,
    pub refine_switches: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 300,
            m: 400,
            tol_state: DEFAULT_STATE_TOL,
            tol_kkt: DEFAULT_KKT_TOL,
            multistarts: 3,
            seed: 0,
            refine_switches: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Objective, improvement and switch times refer to the corrected solution;
    /// KKT and infeasibility to the predictor.
    pub report: SolveReport,
    pub predicted_objective: f64,
    pub bang_bang: BangBangControl,
    /// Predictor solution on the `N` grid, time-aligned with the corrected one.
    pub s_pred: Profile,
    pub d_pred: Profile,
    /// Corrected state and the cell-averaged control it solves, on the `N` grid.
    pub s_corr: Profile,
    pub d_corr: Profile,
    pub corrected_residual: f64,
    /// Time shift applied to the raw predictor output.
    pub phase_shift: f64,
}

impl PipelineOutput {
    /// `(t, s_pred, D_pred, s_corr, D_corr, x_corr)` columns on `m` points;
    /// `D_corr` is the two-valued law.
    pub fn output_profiles(&self, params: &ChemostatParams, m: usize) -> Result<[Profile; 5]> {
        let g = PeriodicGrid::new(params.period(), m)?;
        let s_corr = resample(&self.s_corr, m)?;
        let x_corr = params.biomass_from_substrate(&s_corr);
        Ok([
            resample(&self.s_pred, m)?,
            resample(&self.d_pred, m)?,
            s_corr,
            reconstruct(&self.bang_bang, g),
            x_corr,
        ])
    }
}

pub fn run_pipeline(params: &ChemostatParams, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    if cfg.m < cfg.n {
        return Err(Error::InvalidParams(format!(
            "M = {} must be at least N = {}",
            cfg.m, cfg.n
        )));
    }
    let grid = PeriodicGrid::new(params.period(), cfg.n)?;
    let opts = SolveOptions {
        tol_kkt: cfg.tol_kkt,
        tol_state: cfg.tol_state,
        seed: cfg.seed,
        m: cfg.m,
        ..SolveOptions::default()
    };
    let predicted = multistart(params, grid, cfg.multistarts, &opts)?;
    correct(params, predicted, cfg)
}

/// Steps 2 to 5 applied to a predictor solution.
pub fn correct(
    params: &ChemostatParams,
    predicted: NlpSolution,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let grid = *predicted.control.grid();
    let h = grid.spacing();
    let op = StateOperator::new(params, grid)?;
    let s_bar = params.equilibrium()?.s_bar;

    let raw = detect_switches(&predicted.control, params)?;
    let mut bb = mean_adjust(&raw, params, h)?;
    let mut corrected = if cfg.refine_switches {
        let (b, r) = refine_switches(&op, &bb, &predicted.state, cfg.tol_state)?;
        bb = b;
        r
    } else {
        correct_state_with(
            &op,
            &bb,
            &predicted.state,
            cfg.tol_state,
            ControlSampling::CellAverage,
        )?
    };

    // Cell averaging is not exactly shift-equivariant on a fixed grid, so the
    // anchor is iterated until the corrected state starts at s_bar.
    let mut tau = 0.0;
    if !bb.is_constant() {
        for _ in 0..PHASE_ITERATIONS {
            let Some(t) = phase_anchor(&corrected.state, s_bar, &bb) else {
                break;
            };
            let period = grid.period();
            let t = if t > 0.5 * period { t - period } else { t };
            if t.abs() <= PHASE_TOL * period {
                break;
            }
            tau += t;
            bb = bb.shifted(t)?;
            let guess = corrected.state.interpolant().sample_shifted(grid, t);
            corrected = correct_state_with(
                &op,
                &bb,
                &guess,
                cfg.tol_state,
                ControlSampling::CellAverage,
            )?;
        }
    }

    let s_pred = predicted.state.interpolant().sample_shifted(grid, tau);
    let d_pred = predicted.control.interpolant().sample_shifted(grid, tau);
    let objective = corrected.state.mean();
    let mut report = predicted.report.clone();
    report.objective = objective;
    report.improvement_pct = 100.0 * (s_bar - objective) / s_bar;
    report.switch_times = bb.switches().to_vec();
    report.m = cfg.m;
    Ok(PipelineOutput {
        report,
        predicted_objective: predicted.report.objective,
        d_corr: cell_average(&bb, grid),
        bang_bang: bb,
        s_pred,
        d_pred,
        s_corr: corrected.state,
        corrected_residual: corrected.residual_norm,
        phase_shift: tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamValues;

    #[test]
    fn coarse_baseline_has_two_switches_and_starts_at_equilibrium() {
        let p = ChemostatParams::baseline();
        let cfg = PipelineConfig {
            n: 100,
            m: 200,
            multistarts: 1,
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&p, &cfg).unwrap();
        assert_eq!(out.bang_bang.switch_count(), 2);
        assert!((out.bang_bang.mean() - 0.5).abs() < 1e-12);
        let s0 = out.s_corr.interpolant().eval(0.0);
        assert!((s0 - 5.0).abs() < 1e-8, "s(0) = {s0}");
        assert!(out.report.objective < out.predicted_objective + 0.05);
        assert!(out.report.improvement_pct > 20.0);
        let cols = out.output_profiles(&p, 200).unwrap();
        assert!(cols.iter().all(|c| c.len() == 200));
    }

    #[test]
    fn degenerate_levels_give_a_constant_solution() {
        let mut v = ParamValues::baseline();
        v.d_min = 0.5;
        v.d_max = 0.5;
        let p = ChemostatParams::new(v).unwrap();
        let cfg = PipelineConfig {
            n: 32,
            m: 64,
            multistarts: 2,
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&p, &cfg).unwrap();
        assert!(out.bang_bang.is_constant());
        assert!((out.report.objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn m_below_n_is_rejected() {
        let p = ChemostatParams::baseline();
        let cfg = PipelineConfig {
            n: 64,
            m: 32,
            ..PipelineConfig::default()
        };
        assert!(run_pipeline(&p, &cfg).is_err());
    }
}
