//! Bang-bang reconstruction of a predicted control, state correction and
//! first-order (co-state / switching function) checks.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::frac::{cfds_apply, direct_cfds, Side, SpectralMultiplierTable};
use crate::grid::{PeriodicGrid, Profile, TrigInterpolant};
use crate::model::ChemostatParams;
use crate::solver::{PeriodicSolveResult, StateOperator};

/// Switch-time accuracy of the root refinement, in hours.
pub const SWITCH_TOL: f64 = 1e-12;
/// Crossings closer than this many grid spacings are merged.
pub const MERGE_SPACINGS: f64 = 2.0;
/// Largest allowed mean-restoring shift, in grid spacings.
pub const MAX_ADJUST_SPACINGS: f64 = 2.0;
/// Refinement stops once the coordinate step falls below this fraction of `h`.
pub const REFINE_TOL_SPACINGS: f64 = 1e-4;

/// Two-level periodic control: `D_max` on high intervals, `D_min` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct BangBangControl {
    period: f64,
    d_min: f64,
    d_max: f64,
    switches: Vec<f64>,
    initial_high: bool,
    constant: Option<f64>,
}

impl BangBangControl {
    /// `switches` must be strictly increasing in `[0, T)` with even length;
    /// `initial_high` is the level on `[0, ξ_1)`.
    pub fn new(
        period: f64,
        d_min: f64,
        d_max: f64,
        switches: Vec<f64>,
        initial_high: bool,
    ) -> Result<Self> {
        if !switches.len().is_multiple_of(2) {
            return Err(Error::Structure(format!(
                "odd switch count {}",
                switches.len()
            )));
        }
        if switches.iter().any(|&t| !(0.0..period).contains(&t)) {
            return Err(Error::Structure("switch time outside [0, T)".into()));
        }
        if switches.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Structure(
                "switch times not strictly increasing".into(),
            ));
        }
        if switches.is_empty() {
            let level = if initial_high { d_max } else { d_min };
            return Ok(Self::constant(period, d_min, d_max, level));
        }
        Ok(BangBangControl {
            period,
            d_min,
            d_max,
            switches,
            initial_high,
            constant: None,
        })
    }

    /// Degenerate control with no switches.
    pub fn constant(period: f64, d_min: f64, d_max: f64, value: f64) -> Self {
        BangBangControl {
            period,
            d_min,
            d_max,
            switches: Vec::new(),
            initial_high: value >= d_max,
            constant: Some(value),
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn levels(&self) -> (f64, f64) {
        (self.d_min, self.d_max)
    }

    pub fn switches(&self) -> &[f64] {
        &self.switches
    }

    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn initial_high(&self) -> bool {
        self.initial_high
    }

    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// Whether switch `k` goes from `D_min` to `D_max`.
    pub fn is_upward(&self, k: usize) -> bool {
        // the level before switch k is the initial level for even k
        k.is_multiple_of(2) != self.initial_high
    }

    /// Control value at `t` (right-continuous).
    pub fn value_at(&self, t: f64) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let t = t.rem_euclid(self.period);
        let passed = self.switches.partition_point(|&x| x <= t);
        let high = self.initial_high != (passed % 2 == 1);
        if high {
            self.d_max
        } else {
            self.d_min
        }
    }

    /// High intervals `(start, length)`, with starts in `[0, T)`.
    pub fn high_intervals(&self) -> Vec<(f64, f64)> {
        if self.constant.is_some() {
            return Vec::new();
        }
        let n = self.switches.len();
        (0..n)
            .filter(|&k| self.is_upward(k))
            .map(|k| {
                let start = self.switches[k];
                let end = self.switches[(k + 1) % n];
                (start, (end - start).rem_euclid(self.period))
            })
            .collect()
    }

    /// Total time spent at `D_max` in one period.
    pub fn high_time(&self) -> f64 {
        match self.constant {
            Some(c) => {
                self.period * (c - self.d_min) / (self.d_max - self.d_min).max(f64::MIN_POSITIVE)
            }
            None => self.high_intervals().iter().map(|iv| iv.1).sum(),
        }
    }

    /// Exact period average of the control.
    pub fn mean(&self) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let h = self.high_time();
        (self.d_max * h + self.d_min * (self.period - h)) / self.period
    }

    /// High time accumulated on `[0, t]`, extended to all real `t`.
    fn cumulative_high(&self, t: f64) -> f64 {
        let total = self.high_time();
        let wraps = (t / self.period).floor();
        let r = t - wraps * self.period;
        let mut acc = 0.0;
        let mut level = self.initial_high;
        let mut prev = 0.0;
        for &x in &self.switches {
            if x >= r {
                break;
            }
            if level {
                acc += x - prev;
            }
            level = !level;
            prev = x;
        }
        if level {
            acc += r - prev;
        }
        wraps * total + acc
    }

    /// Time shift: the returned control `g` satisfies `g(t) = self(t + tau)`.
    pub fn shifted(&self, tau: f64) -> Result<Self> {
        if self.constant.is_some() {
            return Ok(self.clone());
        }
        let events: Vec<(f64, bool)> = (0..self.switches.len())
            .map(|k| {
                (
                    (self.switches[k] - tau).rem_euclid(self.period),
                    self.is_upward(k),
                )
            })
            .collect();
        Self::from_events(self.period, self.d_min, self.d_max, events)
    }

    fn from_events(
        period: f64,
        d_min: f64,
        d_max: f64,
        mut events: Vec<(f64, bool)>,
    ) -> Result<Self> {
        for e in &mut events {
            if e.0 >= period {
                e.0 -= period;
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        if events.windows(2).any(|w| w[0].1 == w[1].1) {
            return Err(Error::Structure(
                "switch directions do not alternate".into(),
            ));
        }
        let initial_high = events.first().map(|e| !e.1).unwrap_or(false);
        Self::new(
            period,
            d_min,
            d_max,
            events.into_iter().map(|e| e.0).collect(),
            initial_high,
        )
    }

    /// Replace switch `k` by `time` (taken modulo `T`), keeping directions.
    pub fn with_switch(&self, k: usize, time: f64) -> Result<Self> {
        let events: Vec<(f64, bool)> = (0..self.switches.len())
            .map(|i| {
                let t = if i == k {
                    time.rem_euclid(self.period)
                } else {
                    self.switches[i]
                };
                (t, self.is_upward(i))
            })
            .collect();
        Self::from_events(self.period, self.d_min, self.d_max, events)
    }
}

/// Locate switches of a predicted control where its trigonometric
/// interpolant crosses `(D_min + D_max) / 2`.
pub fn detect_switches(d_pred: &Profile, params: &ChemostatParams) -> Result<BangBangControl> {
    let (d_min, d_max) = (params.d_min(), params.d_max());
    let grid = *d_pred.grid();
    let period = grid.period();
    let h = grid.spacing();
    let mid = 0.5 * (d_min + d_max);
    let interp = d_pred.interpolant();
    let f = |t: f64| interp.eval(t) - mid;
    let v: Vec<f64> = d_pred.values().iter().map(|x| x - mid).collect();
    let n = v.len();

    let mut events: Vec<(f64, bool)> = Vec::new();
    for j in 0..n {
        let (a, b) = (v[j], v[(j + 1) % n]);
        let up = a < 0.0 && b >= 0.0;
        let down = a >= 0.0 && b < 0.0;
        if up || down {
            let t0 = grid.node(j);
            let t = refine_root(&f, t0, t0 + h, a, b);
            events.push((t.rem_euclid(period), up));
        }
    }
    if events.is_empty() {
        return Ok(BangBangControl::constant(
            period,
            d_min,
            d_max,
            params.d_bar(),
        ));
    }

    // drop pairs of neighbouring crossings closer than the merge distance
    loop {
        let m = events.len();
        if m < 2 {
            break;
        }
        let close = (0..m).find(|&i| {
            let next = events[(i + 1) % m].0;
            (next - events[i].0).rem_euclid(period) < MERGE_SPACINGS * h
        });
        match close {
            Some(i) => {
                let j = (i + 1) % m;
                let (hi, lo) = if i > j { (i, j) } else { (j, i) };
                events.remove(hi);
                events.remove(lo);
            }
            None => break,
        }
    }
    if !events.len().is_multiple_of(2) {
        return Err(Error::Structure(format!(
            "odd number of crossings ({}) after merging",
            events.len()
        )));
    }
    if events.is_empty() {
        return Ok(BangBangControl::constant(
            period,
            d_min,
            d_max,
            params.d_bar(),
        ));
    }
    BangBangControl::from_events(period, d_min, d_max, events)
}

/// Bracketed root refinement (Illinois variant of regula falsi).
fn refine_root<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a && c < b {
            c
        } else {
            0.5 * (a + b)
        };
        let fc = f(c);
        if fc == 0.0 || (b - a) <= SWITCH_TOL {
            return c;
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

/// Duty time at `D_max` that makes the period mean equal `D_bar`.
pub fn required_high_time(params: &ChemostatParams) -> f64 {
    params.period() * (params.d_bar() - params.d_min()) / (params.d_max() - params.d_min())
}

/// Move the last switch so the mean equals `D_bar`; fails if the shift
/// exceeds two spacings `h`.
pub fn mean_adjust(
    bb: &BangBangControl,
    params: &ChemostatParams,
    h: f64,
) -> Result<BangBangControl> {
    if bb.is_constant() {
        return Ok(BangBangControl::constant(
            bb.period(),
            params.d_min(),
            params.d_max(),
            params.d_bar(),
        ));
    }
    let delta = required_high_time(params) - bb.high_time();
    if delta.abs() > MAX_ADJUST_SPACINGS * h {
        return Err(Error::Structure(format!(
            "mean restoration needs a shift of {delta:.6} h, more than {MAX_ADJUST_SPACINGS} grid spacings"
        )));
    }
    shift_last(bb, delta)
}

/// Lengthen the high time by `delta` through the last switch.
fn shift_last(bb: &BangBangControl, delta: f64) -> Result<BangBangControl> {
    if delta == 0.0 {
        return Ok(bb.clone());
    }
    let k = bb.switch_count() - 1;
    let t = bb.switches()[k];
    // an upward switch moved earlier, or a downward one moved later, adds high time
    let moved = if bb.is_upward(k) {
        t - delta
    } else {
        t + delta
    };
    bb.with_switch(k, moved)
}

/// Point samples of the two-level law on `grid`.
pub fn reconstruct(bb: &BangBangControl, grid: PeriodicGrid) -> Profile {
    Profile::from_fn(grid, |t| bb.value_at(t))
}

/// Exact averages of the control over the cells `[t_j - h/2, t_j + h/2]`.
pub fn cell_average(bb: &BangBangControl, grid: PeriodicGrid) -> Profile {
    if let Some(c) = bb.constant_value() {
        return Profile::constant(grid, c);
    }
    let h = grid.spacing();
    let (lo, hi) = bb.levels();
    Profile::from_fn(grid, |t| {
        let frac = (bb.cumulative_high(t + 0.5 * h) - bb.cumulative_high(t - 0.5 * h)) / h;
        lo + (hi - lo) * frac.clamp(0.0, 1.0)
    })
}

/// How a bang-bang law is sampled for the state correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlSampling {
    /// Two-valued point samples.
    Point,
    /// Exact cell averages (converges at first order in `h` through the switches).
    #[default]
    CellAverage,
}

pub fn sample_control(
    bb: &BangBangControl,
    grid: PeriodicGrid,
    sampling: ControlSampling,
) -> Profile {
    match sampling {
        ControlSampling::Point => reconstruct(bb, grid),
        ControlSampling::CellAverage => cell_average(bb, grid),
    }
}

/// Solve the state for the bang-bang law on the grid of `s_pred`, which is
/// also the Newton guess.
pub fn correct_state(
    params: &ChemostatParams,
    bb: &BangBangControl,
    s_pred: &Profile,
    tol: f64,
) -> Result<PeriodicSolveResult> {
    let op = StateOperator::new(params, *s_pred.grid())?;
    correct_state_with(&op, bb, s_pred, tol, ControlSampling::CellAverage)
}

pub fn correct_state_with(
    op: &StateOperator,
    bb: &BangBangControl,
    guess: &Profile,
    tol: f64,
    sampling: ControlSampling,
) -> Result<PeriodicSolveResult> {
    let d = sample_control(bb, *op.grid(), sampling);
    op.solve(&d, guess, tol)
}

/// Time `tau` of the upward crossing of `level` by the interpolant of `state`
/// that lies in the longest high interval of `bb` (or the first crossing if
/// none does). Shifting by `tau` makes the state start at `level`.
pub fn phase_anchor(state: &Profile, level: f64, bb: &BangBangControl) -> Option<f64> {
    let grid = *state.grid();
    let interp = state.interpolant();
    let f = |t: f64| interp.eval(t) - level;
    let v: Vec<f64> = state.values().iter().map(|x| x - level).collect();
    let n = v.len();
    let h = grid.spacing();
    let period = grid.period();
    let ups: Vec<f64> = (0..n)
        .filter(|&j| v[j] < 0.0 && v[(j + 1) % n] >= 0.0)
        .map(|j| {
            refine_root(&f, grid.node(j), grid.node(j) + h, v[j], v[(j + 1) % n]).rem_euclid(period)
        })
        .collect();
    if ups.is_empty() {
        return None;
    }
    let longest = bb
        .high_intervals()
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((start, len)) = longest {
        if let Some(&t) = ups.iter().find(|&&t| (t - start).rem_euclid(period) <= len) {
            return Some(t);
        }
    }
    Some(ups[0])
}

/// Coordinate search over switch times at fixed count; every trial keeps the
/// mean exact by re-adjusting the last switch. Stops once the step is below
/// `REFINE_TOL_SPACINGS * h`.
pub fn refine_switches(
    op: &StateOperator,
    bb: &BangBangControl,
    guess: &Profile,
    tol: f64,
) -> Result<(BangBangControl, PeriodicSolveResult)> {
    let params = *op.params();
    let h = op.grid().spacing();
    let mut best_bb = bb.clone();
    let mut best = correct_state_with(op, &best_bb, guess, tol, ControlSampling::CellAverage)?;
    if bb.switch_count() < 2 {
        return Ok((best_bb, best));
    }
    let mut step = h;
    while step >= REFINE_TOL_SPACINGS * h {
        let mut improved = false;
        for k in 0..best_bb.switch_count() - 1 {
            let candidates: Vec<BangBangControl> = [-step, step]
                .iter()
                .filter_map(|&ds| {
                    let moved = best_bb.with_switch(k, best_bb.switches()[k] + ds).ok()?;
                    let delta = required_high_time(&params) - moved.high_time();
                    shift_last(&moved, delta).ok()
                })
                .filter(|c| c.switch_count() == bb.switch_count())
                .collect();
            let eval = |c: &BangBangControl| {
                correct_state_with(op, c, &best.state, tol, ControlSampling::CellAverage).ok()
            };
            #[cfg(feature = "parallel")]
            let results: Vec<Option<PeriodicSolveResult>> = {
                use rayon::prelude::*;
                candidates.par_iter().map(eval).collect()
            };
            #[cfg(not(feature = "parallel"))]
            let results: Vec<Option<PeriodicSolveResult>> = candidates.iter().map(eval).collect();
            for (c, r) in candidates.into_iter().zip(results) {
                if let Some(r) = r {
                    if r.state.mean() < best.state.mean() {
                        best_bb = c;
                        best = r;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((best_bb, best))
}

/// Form of the co-state equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostateForm {
    /// `R p + C p = 1/T`, the adjoint of the linearised state equation
    /// (reduces to `-p' = 1/T - C p`, i.e. `p' = -dH/ds`, for `α = 1`).
    #[default]
    Adjoint,
    /// `R p = -1/T + C p`, the equation as usually printed for this problem.
    Published,
}

/// `C = ϑ^{1-α} [ν'(s)(s_in - s) + D - ν(s)] = -dF/ds`.
fn costate_coefficient(params: &ChemostatParams, s: &Profile, d: &Profile) -> Vec<f64> {
    s.values()
        .iter()
        .zip(d.values())
        .map(|(&sj, &dj)| -params.rhs_partials(sj, dj).0)
        .collect()
}

#[derive(Debug, Clone)]
pub struct CostateProfile {
    pub p: Profile,
    pub form: CostateForm,
    /// Max residual of the collocated linear equation, evaluated spectrally.
    pub residual: f64,
}

pub fn solve_costate(params: &ChemostatParams, s: &Profile, d: &Profile) -> Result<CostateProfile> {
    solve_costate_with(params, s, d, CostateForm::Adjoint)
}

/// Solve the periodic co-state equation with the right-sided operator.
pub fn solve_costate_with(
    params: &ChemostatParams,
    s: &Profile,
    d: &Profile,
    form: CostateForm,
) -> Result<CostateProfile> {
    let grid = *s.grid();
    let n = grid.len();
    if d.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: d.len(),
        });
    }
    let table = SpectralMultiplierTable::new(grid, params.alpha(), params.memory());
    let c = costate_coefficient(params, s, d);
    let (sign, forcing) = costate_signs(form, params.period());
    let mut a = table.matrix(Side::Right);
    for j in 0..n {
        a[(j, j)] += sign * c[j];
    }
    let rhs = DVector::from_element(n, forcing);
    let lu = a.lu();
    let p = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("co-state system on {n} nodes")))?;
    let p = Profile::new(grid, p.iter().copied().collect())?;
    let residual = costate_residuals_spectral(&table, &p, &c, sign, forcing)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(CostateProfile { p, form, residual })
}

/// `(sign, forcing)` with the equation written as `R p + sign C p = forcing`.
fn costate_signs(form: CostateForm, period: f64) -> (f64, f64) {
    match form {
        CostateForm::Adjoint => (1.0, 1.0 / period),
        CostateForm::Published => (-1.0, -1.0 / period),
    }
}

fn costate_residuals_spectral(
    table: &SpectralMultiplierTable,
    p: &Profile,
    c: &[f64],
    sign: f64,
    forcing: f64,
) -> Result<Vec<f64>> {
    let rp = cfds_apply(p, table, Side::Right)?;
    Ok(rp
        .values()
        .iter()
        .zip(p.values().iter().zip(c))
        .map(|(r, (pj, cj))| r + sign * cj * pj - forcing)
        .collect())
}

/// Co-state residuals with the right-sided operator evaluated by quadrature.
pub fn costate_oracle_residuals(
    params: &ChemostatParams,
    s: &Profile,
    d: &Profile,
    costate: &CostateProfile,
) -> Result<Vec<f64>> {
    let grid = *s.grid();
    let c = costate_coefficient(params, s, d);
    let (sign, forcing) = costate_signs(costate.form, params.period());
    let interp: TrigInterpolant = costate.p.interpolant();
    (0..grid.len())
        .map(|j| {
            let t = grid.node(j);
            let rp = direct_cfds(
                |u| interp.derivative(u),
                t,
                params.alpha(),
                params.memory(),
                Side::Right,
            )?;
            Ok(rp + sign * c[j] * costate.p.values()[j] - forcing)
        })
        .collect()
}

/// `φ = p ϑ^{1-α} (s_in - s)`, the coefficient of `D` in the Hamiltonian.
pub fn switching_function(params: &ChemostatParams, s: &Profile, p: &Profile) -> Result<Profile> {
    if s.len() != p.len() {
        return Err(Error::Shape {
            expected: s.len(),
            got: p.len(),
        });
    }
    let c = params.scale();
    let v = s
        .values()
        .iter()
        .zip(p.values())
        .map(|(sj, pj)| pj * c * (params.s_in() - sj))
        .collect();
    Profile::new(*s.grid(), v)
}

/// Agreement between the control levels and the sign of the switching
/// function, away from switch neighbourhoods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignConsistency {
    /// `D_max` where `φ < 0`, `D_min` where `φ > 0`.
    pub raw: f64,
    /// Same with `φ` negated.
    pub raw_flipped: f64,
    /// With `φ + η`, `η` the mean-dilution multiplier estimate.
    pub shifted: f64,
    pub shifted_flipped: f64,
    pub eta: f64,
    /// Nodes counted (those farther than two spacings from every switch).
    pub nodes: usize,
}

impl SignConsistency {
    pub fn best(&self) -> f64 {
        self.raw
            .max(self.raw_flipped)
            .max(self.shifted)
            .max(self.shifted_flipped)
    }
}

/// Sign agreement of `φ` with `bb`. The multiplier of the mean-dilution
/// constraint enters the Hamiltonian as `η D`; it is estimated as the value
/// making `φ + η` vanish on average at the switch times.
pub fn sign_consistency(phi: &Profile, bb: &BangBangControl) -> SignConsistency {
    let grid = *phi.grid();
    let h = grid.spacing();
    let period = grid.period();
    let interp = phi.interpolant();
    let eta = if bb.switch_count() > 0 {
        -bb.switches().iter().map(|&t| interp.eval(t)).sum::<f64>() / bb.switch_count() as f64
    } else {
        0.0
    };
    let near = |t: f64| {
        bb.switches().iter().any(|&x| {
            let d = (t - x).rem_euclid(period);
            d.min(period - d) <= MERGE_SPACINGS * h
        })
    };
    let (_, d_max) = bb.levels();
    let mut counts = [0usize; 4];
    let mut nodes = 0usize;
    for (j, &f) in phi.values().iter().enumerate() {
        let t = grid.node(j);
        if near(t) {
            continue;
        }
        nodes += 1;
        let high = bb.value_at(t) >= d_max;
        let agree = |g: f64| (high && g < 0.0) || (!high && g > 0.0);
        counts[0] += agree(f) as usize;
        counts[1] += agree(-f) as usize;
        counts[2] += agree(f + eta) as usize;
        counts[3] += agree(-(f + eta)) as usize;
    }
    let frac = |c: usize| {
        if nodes == 0 {
            0.0
        } else {
            c as f64 / nodes as f64
        }
    };
    SignConsistency {
        raw: frac(counts[0]),
        raw_flipped: frac(counts[1]),
        shifted: frac(counts[2]),
        shifted_flipped: frac(counts[3]),
        eta,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> ChemostatParams {
        ChemostatParams::baseline()
    }

    fn one_pulse(start: f64, len: f64) -> BangBangControl {
        let end = (start + len).rem_euclid(15.0);
        let mut ev = vec![(start, true), (end, false)];
        ev.sort_by(|a, b| a.0.total_cmp(&b.0));
        BangBangControl::from_events(15.0, 0.02, 1.95, ev).unwrap()
    }

    #[test]
    fn square_wave_switches_are_recovered() {
        let g = PeriodicGrid::new(15.0, 64).unwrap();
        let sq = Profile::from_fn(g, |t| {
            if (3.75..11.25).contains(&t) {
                1.95
            } else {
                0.02
            }
        });
        let bb = detect_switches(&sq, &params()).unwrap();
        assert_eq!(bb.switch_count(), 2);
        assert!((bb.switches()[0] - 3.75).abs() <= g.spacing());
        assert!((bb.switches()[1] - 11.25).abs() <= g.spacing());
        assert!(!bb.initial_high());
        assert!(bb.is_upward(0) && !bb.is_upward(1));
    }

    #[test]
    fn constant_prediction_is_degenerate() {
        let g = PeriodicGrid::new(15.0, 32).unwrap();
        let bb = detect_switches(&Profile::constant(g, 0.5), &params()).unwrap();
        assert!(bb.is_constant());
        assert_eq!(bb.switch_count(), 0);
        assert_eq!(bb.mean(), 0.5);
    }

    #[test]
    fn short_blips_are_merged() {
        let g = PeriodicGrid::new(15.0, 150).unwrap();
        let sq = Profile::from_fn(g, |t| {
            if (3.0..7.0).contains(&t) || (10.0..10.15).contains(&t) {
                1.95
            } else {
                0.02
            }
        });
        let bb = detect_switches(&sq, &params()).unwrap();
        assert_eq!(bb.switch_count(), 2);
    }

    #[test]
    fn duty_time_for_baseline_levels() {
        let tau = required_high_time(&params());
        assert!((tau - 3.730_569_948_186_528).abs() < 1e-12);
        assert!(((1.95 * tau + 0.02 * (15.0 - tau)) / 15.0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mean_adjust_restores_the_mean_exactly() {
        let p = params();
        let h = 15.0 / 300.0;
        let bb = one_pulse(14.41, 15.0 - 14.41 + 3.131);
        let adj = mean_adjust(&bb, &p, h).unwrap();
        assert!((adj.mean() - 0.5).abs() <= 1e-12);
        assert_eq!(adj.switch_count(), 2);

        let again = mean_adjust(&adj, &p, h).unwrap();
        let diff: f64 = again
            .switches()
            .iter()
            .zip(adj.switches())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff < 1e-12);

        let far = one_pulse(2.0, 5.0);
        assert!(mean_adjust(&far, &p, h).is_err());
    }

    #[test]
    fn reconstruction_is_two_valued_with_sampling_error_bound() {
        let p = params();
        let bb = mean_adjust(&one_pulse(14.41, 3.72), &p, 0.05).unwrap();
        let g = PeriodicGrid::new(15.0, 400).unwrap();
        let d = reconstruct(&bb, g);
        assert!(d.values().iter().all(|&v| v == 0.02 || v == 1.95));
        assert!((d.mean() - 0.5).abs() <= (1.95 - 0.02) / 400.0);
        let c = cell_average(&bb, g);
        assert!((c.mean() - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cell_average_preserves_the_mean(start in 0.0f64..15.0, len in 0.5f64..10.0, n in 4usize..60) {
            let bb = one_pulse(start, len);
            let g = PeriodicGrid::new(15.0, 2 * n).unwrap();
            let c = cell_average(&bb, g);
            prop_assert!((c.mean() - bb.mean()).abs() < 1e-12);
            prop_assert!(c.values().iter().all(|&v| (0.02..=1.95).contains(&v)));
        }

        #[test]
        fn shifting_preserves_mean_and_values(start in 0.0f64..15.0, len in 0.5f64..10.0, tau in -20.0f64..20.0, t in 0.0f64..15.0) {
            let bb = one_pulse(start, len);
            let sh = bb.shifted(tau).unwrap();
            prop_assert!((sh.mean() - bb.mean()).abs() < 1e-12);
            prop_assert_eq!(sh.switch_count() % 2, 0);
            let near = bb.switches().iter().any(|&x| ((t + tau - x).rem_euclid(15.0)).min((x - t - tau).rem_euclid(15.0)) < 1e-9);
            if !near {
                prop_assert_eq!(sh.value_at(t), bb.value_at(t + tau));
            }
        }
    }

    #[test]
    fn invalid_structures_are_rejected() {
        assert!(BangBangControl::new(15.0, 0.02, 1.95, vec![1.0], true).is_err());
        assert!(BangBangControl::new(15.0, 0.02, 1.95, vec![2.0, 1.0], true).is_err());
        assert!(BangBangControl::new(15.0, 0.02, 1.95, vec![1.0, 15.0], true).is_err());
    }

    #[test]
    fn constant_control_corrects_to_equilibrium() {
        let p = params();
        let g = PeriodicGrid::new(15.0, 32).unwrap();
        let bb = BangBangControl::constant(15.0, 0.02, 1.95, 0.5);
        let r = correct_state(&p, &bb, &Profile::constant(g, 4.0), 1e-10).unwrap();
        assert!(r.state.values().iter().all(|v| (v - 5.0).abs() < 1e-9));
    }

    #[test]
    fn adjoint_costate_is_the_scaled_reduced_gradient_multiplier() {
        use crate::opc::TranscribedNlp;
        let p = params();
        let g = PeriodicGrid::new(15.0, 48).unwrap();
        let d = Profile::from_fn(g, |t| {
            0.5 + 0.4 * (2.0 * std::f64::consts::PI * t / 15.0).sin()
        });
        let nlp = TranscribedNlp::new(&p, g).unwrap();
        let s = nlp
            .state_for(&d, &Profile::constant(g, 5.0), 1e-12)
            .unwrap()
            .state;
        let (_, lambda) = nlp.reduced_gradient(s.values(), d.values()).unwrap();
        let co = solve_costate(&p, &s, &d).unwrap();
        assert!(co.residual <= 1e-10);
        for (pj, lj) in co.p.values().iter().zip(&lambda) {
            assert!((pj * g.spacing() - lj).abs() < 1e-10 * (1.0 + pj.abs()));
        }
        let oracle = costate_oracle_residuals(&p, &s, &d, &co).unwrap();
        assert!(oracle.iter().all(|r| r.abs() <= 1e-6));
        assert!(co.p.values().iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn published_form_also_solves_its_equation() {
        let p = params();
        let g = PeriodicGrid::new(15.0, 32).unwrap();
        let s = Profile::from_fn(g, |t| 4.0 + 0.5 * (t / 2.0).sin());
        let d = Profile::from_fn(g, |t| 0.5 + 0.2 * (t / 2.0).cos());
        let co = solve_costate_with(&p, &s, &d, CostateForm::Published).unwrap();
        assert!(co.residual <= 1e-10);
        let phi = switching_function(&p, &s, &co.p).unwrap();
        for (f, q) in phi.values().iter().zip(co.p.values()) {
            assert_eq!(f.signum(), q.signum());
        }
    }
}
