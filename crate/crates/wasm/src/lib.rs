use chemostat_core::bangbang::{correct_state, reconstruct, required_high_time, BangBangControl};
use chemostat_core::pipeline::{run_pipeline, PipelineConfig};
use chemostat_core::{
    ChemostatParams, FracOrder, MemoryLength, ParamValues, PeriodicGrid, Profile, Side,
    SpectralMultiplierTable,
};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Solution {
    t: Vec<f64>,
    s: Vec<f64>,
    d: Vec<f64>,
    switches: Vec<f64>,
    s_av: f64,
    s_bar: f64,
}

#[wasm_bindgen]
impl Solution {
    #[wasm_bindgen(getter)]
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn s(&self) -> Vec<f64> {
        self.s.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn d(&self) -> Vec<f64> {
        self.d.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn switches(&self) -> Vec<f64> {
        self.switches.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn s_av(&self) -> f64 {
        self.s_av
    }

    #[wasm_bindgen(getter)]
    pub fn s_bar(&self) -> f64 {
        self.s_bar
    }

    #[wasm_bindgen(getter)]
    pub fn improvement_pct(&self) -> f64 {
        100.0 * (self.s_bar - self.s_av) / self.s_bar
    }
}

fn js(e: chemostat_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn params(alpha: f64, theta: f64, memory: f64) -> chemostat_core::Result<ChemostatParams> {
    ChemostatParams::new(ParamValues {
        alpha,
        theta,
        memory,
        ..ParamValues::baseline()
    })
}

fn pack(
    params: &ChemostatParams,
    s: &Profile,
    bb: &BangBangControl,
) -> chemostat_core::Result<Solution> {
    let grid = *s.grid();
    Ok(Solution {
        t: grid.nodes(),
        s: s.values().to_vec(),
        d: reconstruct(bb, grid).into_values(),
        switches: bb.switches().to_vec(),
        s_av: s.mean(),
        s_bar: params.equilibrium()?.s_bar,
    })
}

pub fn optimize_native(
    alpha: f64,
    theta: f64,
    memory: f64,
    n: usize,
) -> chemostat_core::Result<Solution> {
    let p = params(alpha, theta, memory)?;
    let cfg = PipelineConfig {
        n,
        m: n,
        multistarts: 1,
        ..PipelineConfig::default()
    };
    let out = run_pipeline(&p, &cfg)?;
    let mut sol = pack(&p, &out.s_corr, &out.bang_bang)?;
    sol.s_av = out.report.objective;
    Ok(sol)
}

/// Optimal periodic dilution for the baseline plant with the given memory
/// parameters, on `n` collocation nodes.
#[wasm_bindgen]
pub fn optimize(alpha: f64, theta: f64, memory: f64, n: usize) -> Result<Solution, JsValue> {
    optimize_native(alpha, theta, memory, n).map_err(js)
}

pub fn simulate_native(
    alpha: f64,
    theta: f64,
    memory: f64,
    switch_on: f64,
    n: usize,
) -> chemostat_core::Result<Solution> {
    let p = params(alpha, theta, memory)?;
    let period = p.period();
    let on = switch_on.rem_euclid(period);
    let off = on + required_high_time(&p);
    let bb = if off < period {
        BangBangControl::new(period, p.d_min(), p.d_max(), vec![on, off], false)?
    } else {
        BangBangControl::new(period, p.d_min(), p.d_max(), vec![off - period, on], true)?
    };
    let grid = PeriodicGrid::new(period, n)?;
    let guess = Profile::constant(grid, p.equilibrium()?.s_bar);
    let state = correct_state(&p, &bb, &guess, 1e-10)?.state;
    pack(&p, &state, &bb)
}

/// Periodic state under the two-level law that turns the pump up at
/// `switch_on` and keeps it up just long enough to meet the mean dilution.
#[wasm_bindgen]
pub fn simulate(
    alpha: f64,
    theta: f64,
    memory: f64,
    switch_on: f64,
    n: usize,
) -> Result<Solution, JsValue> {
    simulate_native(alpha, theta, memory, switch_on, n).map_err(js)
}

pub fn multiplier_curve_native(
    alpha: f64,
    memory: f64,
    n: usize,
) -> chemostat_core::Result<Vec<f64>> {
    let grid = PeriodicGrid::new(ParamValues::baseline().period, n)?;
    let table =
        SpectralMultiplierTable::new(grid, FracOrder::new(alpha)?, MemoryLength::new(memory)?);
    let m = table.multipliers(Side::Left);
    Ok((1..n / 2)
        .flat_map(|k| [grid.omega(k), m[k].re, m[k].im])
        .collect())
}

/// Left multiplier on the positive grid frequencies, flattened as
/// `[omega, re, im, omega, re, im, ...]`.
#[wasm_bindgen]
pub fn multiplier_curve(alpha: f64, memory: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    multiplier_curve_native(alpha, memory, n).map_err(js)
}
