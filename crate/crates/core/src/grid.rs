//! Equispaced periodic grids and trigonometric interpolation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// `N` equispaced nodes `t_j = j T / N` on `[0, T)`; `N` is even and at least 8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    period: f64,
    n: usize,
}

impl PeriodicGrid {
    pub fn new(period: f64, n: usize) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::domain(format!(
                "grid period must be positive, got {period}"
            )));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "grid size must be even and >= 8, got {n}"
            )));
        }
        Ok(PeriodicGrid { period, n })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.period / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Signed wavenumber stored at FFT index `idx` (`N/2` maps to `+N/2`).
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let k = idx as i64;
        if k <= n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Angular frequency `2 pi k / T` at FFT index `idx`.
    pub fn omega(&self, idx: usize) -> f64 {
        2.0 * PI * self.wavenumber(idx) as f64 / self.period
    }
}

/// Samples of a T-periodic function on a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

/// Dilution-rate samples (1/h).
pub type ControlProfile = Profile;
/// Concentration samples (mg/L).
pub type StateProfile = Profile;

impl Profile {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Profile { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: PeriodicGrid, f: F) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Profile { grid, values }
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Profile {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        periodic_mean(self)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Profile {
        Profile {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn interpolant(&self) -> TrigInterpolant {
        TrigInterpolant::new(self)
    }
}

/// Mean over one period; the trapezoid rule is exact for equispaced periodic data
/// up to the Nyquist band.
pub fn periodic_mean(profile: &Profile) -> f64 {
    profile.values.iter().sum::<f64>() / profile.values.len() as f64
}

/// Discrete Fourier coefficients `c_k = (1/N) sum_j f_j e^{-2 pi i j k / N}` in FFT order.
pub fn to_modes(profile: &Profile) -> Vec<Complex64> {
    let n = profile.len();
    let mut buf: Vec<Complex64> = profile
        .values
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

/// Inverse of [`to_modes`]; the imaginary part of the synthesis is discarded.
pub fn from_modes(modes: &[Complex64], grid: PeriodicGrid) -> Result<Profile> {
    if modes.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            got: modes.len(),
        });
    }
    let mut buf = modes.to_vec();
    FftPlanner::new()
        .plan_fft_inverse(grid.len())
        .process(&mut buf);
    Ok(Profile {
        grid,
        values: buf.iter().map(|c| c.re).collect(),
    })
}

/// Band-limited resampling onto `m` equispaced nodes of the same period.
pub fn resample(profile: &Profile, m: usize) -> Result<Profile> {
    let target = PeriodicGrid::new(profile.grid.period, m)?;
    let n = profile.len();
    if m == n {
        return Ok(profile.clone());
    }
    let src = to_modes(profile);
    let mut dst = vec![Complex64::new(0.0, 0.0); m];
    let half_src = n / 2;
    let half_dst = m / 2;
    let kmax = half_src.min(half_dst);
    dst[0] = src[0];
    for k in 1..kmax {
        dst[k] = src[k];
        dst[m - k] = src[n - k];
    }
    if m > n {
        // split the real Nyquist cosine evenly between +-N/2
        let c = 0.5 * src[half_src].re;
        dst[half_src] = Complex64::new(c, 0.0);
        dst[m - half_src] = Complex64::new(c, 0.0);
    } else {
        // new Nyquist bin carries 2 Re(c_{M/2}) of the old positive mode
        dst[half_dst] = Complex64::new(src[half_dst].re + src[n - half_dst].re, 0.0);
    }
    from_modes(&dst, target)
}

/// Trigonometric interpolant of a real sampled profile, evaluable anywhere.
///
/// `f(t) = c_0 + sum_{k=1}^{N/2-1} 2 Re(c_k e^{i w_k t}) + c_{N/2} cos(w_{N/2} t)`.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    period: f64,
    mean: f64,
    coeffs: Vec<Complex64>,
    nyquist: f64,
}

impl TrigInterpolant {
    pub fn new(profile: &Profile) -> Self {
        let modes = to_modes(profile);
        let n = profile.len();
        TrigInterpolant {
            period: profile.grid.period,
            mean: modes[0].re,
            coeffs: modes[1..n / 2].to_vec(),
            nyquist: modes[n / 2].re,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    fn base(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn eval(&self, t: f64) -> f64 {
        let w = self.base();
        let step = Complex64::from_polar(1.0, w * t);
        let mut rot = step;
        let mut acc = self.mean;
        for c in &self.coeffs {
            acc += 2.0 * (c * rot).re;
            rot *= step;
        }
        let kn = (self.coeffs.len() + 1) as f64;
        acc + self.nyquist * (kn * w * t).cos()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let w = self.base();
        let step = Complex64::from_polar(1.0, w * t);
        let mut rot = step;
        let mut acc = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = (i + 1) as f64;
            acc += 2.0 * (Complex64::new(0.0, k * w) * c * rot).re;
            rot *= step;
        }
        let kn = (self.coeffs.len() + 1) as f64;
        acc - self.nyquist * kn * w * (kn * w * t).sin()
    }

    /// Interpolant shifted in time: returns `g(t) = f(t + shift)` sampled on `grid`.
    pub fn sample_shifted(&self, grid: PeriodicGrid, shift: f64) -> Profile {
        Profile::from_fn(grid, |t| self.eval(t + shift))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(15.0, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::new(15.0, 7).is_err());
        assert!(PeriodicGrid::new(15.0, 6).is_err());
        assert!(PeriodicGrid::new(15.0, 9).is_err());
        assert!(PeriodicGrid::new(0.0, 16).is_err());
        let g = grid(16);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.node(15) < 15.0);
        assert_eq!(g.wavenumber(8), 8);
        assert_eq!(g.wavenumber(9), -7);
    }

    #[test]
    fn mean_of_constant_and_sine() {
        let g = grid(32);
        assert_eq!(Profile::constant(g, 3.25).mean(), 3.25);
        let s = Profile::from_fn(g, |t| (2.0 * PI * t / 15.0).sin());
        assert!(s.mean().abs() < 1e-14);
    }

    #[test]
    fn constant_has_only_zero_mode() {
        let modes = to_modes(&Profile::constant(grid(16), 2.0));
        assert!((modes[0].re - 2.0).abs() < 1e-15);
        assert!(modes[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn mean_equals_zero_mode() {
        let p = Profile::from_fn(grid(24), |t| 1.0 + t.sin() + 0.3 * (3.0 * t).cos());
        assert!((to_modes(&p)[0].re - p.mean()).abs() < 1e-14);
    }

    #[test]
    fn single_mode_resampled_exactly() {
        let f = |t: f64| 0.7 + (2.0 * PI * 3.0 * t / 15.0 + 0.4).cos();
        let p = Profile::from_fn(grid(16), f);
        for m in [8, 16, 40, 64] {
            let q = resample(&p, m).unwrap();
            for (t, v) in q.grid().nodes().into_iter().zip(q.values()) {
                assert!((f(t) - v).abs() < 1e-13, "m = {m}");
            }
        }
    }

    #[test]
    fn nyquist_mode_survives_upsampling() {
        let g = grid(8);
        let p = Profile::from_fn(g, |t| (2.0 * PI * 4.0 * t / 15.0).cos());
        let q = resample(&p, 32).unwrap();
        for (t, v) in q.grid().nodes().into_iter().zip(q.values()) {
            assert!(((2.0 * PI * 4.0 * t / 15.0).cos() - v).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolant_reproduces_nodes_and_derivative() {
        let f = |t: f64| (2.0 * PI * t / 15.0).sin() + 0.2 * (2.0 * PI * 5.0 * t / 15.0).cos();
        let df = |t: f64| {
            2.0 * PI / 15.0 * (2.0 * PI * t / 15.0).cos()
                - 0.2 * 2.0 * PI * 5.0 / 15.0 * (2.0 * PI * 5.0 * t / 15.0).sin()
        };
        let p = Profile::from_fn(grid(32), f);
        let it = p.interpolant();
        for t in [0.0, 1.3, 7.77, 14.9] {
            assert!((it.eval(t) - f(t)).abs() < 1e-13);
            assert!((it.derivative(t) - df(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval() {
        let p = Profile::from_fn(grid(64), |t| (t * 0.9).sin().exp());
        let energy: f64 = p.values().iter().map(|v| v * v).sum::<f64>() / 64.0;
        let spec: f64 = to_modes(&p).iter().map(|c| c.norm_sqr()).sum();
        assert!((energy - spec).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn analysis_synthesis_round_trip(vals in prop::collection::vec(-10.0f64..10.0, 32)) {
            let p = Profile::new(grid(32), vals).unwrap();
            let back = from_modes(&to_modes(&p), *p.grid()).unwrap();
            for (a, b) in p.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let modes = to_modes(&p);
            for k in 1..32 {
                prop_assert!((modes[k] - modes[32 - k].conj()).norm() < 1e-13);
            }
        }

        #[test]
        fn band_limited_round_trip(amps in prop::collection::vec(-1.0f64..1.0, 10), m in 3usize..12) {
            let f = |t: f64| {
                amps.iter().enumerate().map(|(k, a)| a * (2.0 * PI * k as f64 * t / 15.0 + k as f64).cos()).sum::<f64>()
            };
            let p = Profile::from_fn(grid(24), f);
            let up = resample(&p, 8 * m).unwrap();
            prop_assert!((up.mean() - p.mean()).abs() < 1e-12);
            let back = resample(&up, 24).unwrap();
            for (a, b) in p.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
