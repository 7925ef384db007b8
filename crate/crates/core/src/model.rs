//! Chemostat physics: Contois growth, the reduced substrate equation and the
//! equilibrium under constant dilution.

use crate::error::{Error, Result};
use crate::frac::{FracOrder, MemoryLength};
use crate::grid::Profile;

/// Raw parameter values; validated into [`ChemostatParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamValues {
    /// Inlet substrate concentration (mg/L).
    pub s_in: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Required mean dilution rate over one period (1/h).
    pub d_bar: f64,
    pub mu_max: f64,
    /// Contois saturation constant.
    pub k: f64,
    /// Yield coefficient.
    pub y: f64,
    /// Control period (h).
    pub period: f64,
    pub alpha: f64,
    /// Sliding memory length (h).
    pub memory: f64,
    /// Dynamic scaling; the right-hand side carries `theta^(1-alpha)`.
    pub theta: f64,
}

impl ParamValues {
    /// The benchmark parameter set.
    pub fn baseline() -> Self {
        ParamValues {
            s_in: 8.0,
            d_min: 0.02,
            d_max: 1.95,
            d_bar: 0.5,
            mu_max: 2.0,
            k: 5.0,
            y: 1.0,
            period: 15.0,
            alpha: 0.85,
            memory: 5.0,
            theta: 0.25,
        }
    }
}

impl Default for ParamValues {
    fn default() -> Self {
        Self::baseline()
    }
}

/// A validated problem instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemostatParams {
    v: ParamValues,
    alpha: FracOrder,
    memory: MemoryLength,
}

/// Non-trivial steady state under `D ≡ D_bar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub s_bar: f64,
    pub x_bar: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl ChemostatParams {
    pub fn new(v: ParamValues) -> Result<Self> {
        positive("s_in", v.s_in)?;
        positive("K", v.k)?;
        positive("Y", v.y)?;
        positive("theta", v.theta)?;
        positive("T", v.period)?;
        positive("mu_max", v.mu_max)?;
        positive("D_min", v.d_min)?;
        if !(v.d_min <= v.d_bar && v.d_bar <= v.d_max) {
            return Err(Error::InvalidParams(format!(
                "need D_min <= D_bar <= D_max, got {} / {} / {}",
                v.d_min, v.d_bar, v.d_max
            )));
        }
        if !(v.d_max < v.mu_max) {
            return Err(Error::InvalidParams(format!(
                "D_max = {} must stay below mu_max = {} (washout)",
                v.d_max, v.mu_max
            )));
        }
        let alpha = FracOrder::new(v.alpha).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let memory =
            MemoryLength::new(v.memory).map_err(|e| Error::InvalidParams(e.to_string()))?;
        Ok(ChemostatParams { v, alpha, memory })
    }

    pub fn baseline() -> Self {
        Self::new(ParamValues::baseline()).expect("baseline parameters are valid")
    }

    pub fn values(&self) -> ParamValues {
        self.v
    }

    pub fn s_in(&self) -> f64 {
        self.v.s_in
    }
    pub fn d_min(&self) -> f64 {
        self.v.d_min
    }
    pub fn d_max(&self) -> f64 {
        self.v.d_max
    }
    pub fn d_bar(&self) -> f64 {
        self.v.d_bar
    }
    pub fn mu_max(&self) -> f64 {
        self.v.mu_max
    }
    pub fn period(&self) -> f64 {
        self.v.period
    }
    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }
    pub fn memory(&self) -> MemoryLength {
        self.memory
    }
    pub fn theta(&self) -> f64 {
        self.v.theta
    }
    pub fn ky(&self) -> f64 {
        self.v.k * self.v.y
    }
    pub fn yield_coef(&self) -> f64 {
        self.v.y
    }

    /// `theta^(1-alpha)`.
    pub fn scale(&self) -> f64 {
        self.v.theta.powf(1.0 - self.alpha.value())
    }

    /// Contois specific growth rate `mu_max s / (K x + s)`; zero at `s = x = 0`.
    pub fn mu(&self, s: f64, x: f64) -> f64 {
        let den = self.v.k * x + s;
        if den == 0.0 {
            0.0
        } else {
            self.v.mu_max * s / den
        }
    }

    fn check_substrate(&self, s: f64) -> Result<()> {
        if s >= 0.0 && s <= self.v.s_in {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "substrate {s} outside [0, {}]",
                self.v.s_in
            )))
        }
    }

    /// Growth rate on the biomass manifold `x = Y (s_in - s)`.
    pub fn nu(&self, s: f64) -> Result<f64> {
        self.check_substrate(s)?;
        Ok(self.nu_unchecked(s))
    }

    /// [`Self::nu`] without the domain check, for solver inner loops.
    #[inline]
    pub fn nu_unchecked(&self, s: f64) -> f64 {
        self.v.mu_max * s / (self.ky() * (self.v.s_in - s) + s)
    }

    pub fn nu_prime(&self, s: f64) -> Result<f64> {
        self.check_substrate(s)?;
        Ok(self.nu_prime_unchecked(s))
    }

    #[inline]
    pub fn nu_prime_unchecked(&self, s: f64) -> f64 {
        let den = self.ky() * (self.v.s_in - s) + s;
        self.ky() * self.v.mu_max * self.v.s_in / (den * den)
    }

    /// Curvature of `nu`; its sign is the sign of `KY - 1`.
    pub fn nu_second(&self, s: f64) -> Result<f64> {
        self.check_substrate(s)?;
        let ky = self.ky();
        let den = ky * (self.v.s_in - s) + s;
        Ok(2.0 * ky * self.v.mu_max * self.v.s_in * (ky - 1.0) / (den * den * den))
    }

    /// Net conversion rate `h(s) = nu(s) (s_in - s)`.
    pub fn h_conversion(&self, s: f64) -> Result<f64> {
        Ok(self.nu(s)? * (self.v.s_in - s))
    }

    /// Maximiser of `h`: `s_in sqrt(KY) / (sqrt(KY) + 1)`.
    pub fn s_hat(&self) -> f64 {
        let r = self.ky().sqrt();
        self.v.s_in * r / (r + 1.0)
    }

    pub fn equilibrium(&self) -> Result<Equilibrium> {
        let d = self.v.d_bar;
        if !(d < self.v.mu_max) {
            return Err(Error::Washout {
                d_bar: d,
                mu_max: self.v.mu_max,
            });
        }
        let ky = self.ky();
        let s_bar = d * ky * self.v.s_in / (d * ky + self.v.mu_max - d);
        Ok(Equilibrium {
            s_bar,
            x_bar: self.v.y * (self.v.s_in - s_bar),
        })
    }

    /// Right-hand side of the reduced substrate equation,
    /// `theta^(1-alpha) [D - nu(s)] (s_in - s)`.
    pub fn reduced_rhs(&self, _t: f64, s: f64, d: f64) -> Result<f64> {
        self.check_substrate(s)?;
        Ok(self.rhs_unchecked(s, d))
    }

    #[inline]
    pub fn rhs_unchecked(&self, s: f64, d: f64) -> f64 {
        self.scale() * (d - self.nu_unchecked(s)) * (self.v.s_in - s)
    }

    /// `(dF/ds, dF/dD)` of the reduced right-hand side.
    #[inline]
    pub fn rhs_partials(&self, s: f64, d: f64) -> (f64, f64) {
        let c = self.scale();
        let gap = self.v.s_in - s;
        let ds = -c * (self.nu_prime_unchecked(s) * gap + (d - self.nu_unchecked(s)));
        (ds, c * gap)
    }

    /// Right-hand sides of the substrate and biomass equations.
    pub fn full_rhs(&self, _t: f64, s: f64, x: f64, d: f64) -> (f64, f64) {
        let c = self.scale();
        let mu = self.mu(s, x);
        let ds = c * (-mu * x / self.v.y + d * (self.v.s_in - s));
        let dx = c * (mu - d) * x;
        (ds, dx)
    }

    /// Biomass on the invariant manifold, `x = Y (s_in - s)`.
    pub fn biomass_from_substrate(&self, s: &Profile) -> Profile {
        s.map(|v| self.v.y * (self.v.s_in - v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;

    fn p() -> ChemostatParams {
        ChemostatParams::baseline()
    }

    fn with(f: impl FnOnce(&mut ParamValues)) -> ChemostatParams {
        let mut v = ParamValues::baseline();
        f(&mut v);
        ChemostatParams::new(v).unwrap()
    }

    #[test]
    fn validation_rejects_bad_sets() {
        let bad: Vec<Box<dyn Fn(&mut ParamValues)>> = vec![
            Box::new(|v| v.s_in = 0.0),
            Box::new(|v| v.k = -1.0),
            Box::new(|v| v.d_bar = 0.01),
            Box::new(|v| v.d_bar = 2.5),
            Box::new(|v| v.d_max = 2.0),
            Box::new(|v| v.alpha = 0.0),
            Box::new(|v| v.memory = 0.0),
            Box::new(|v| v.theta = 0.0),
            Box::new(|v| v.period = -15.0),
        ];
        for f in bad {
            let mut v = ParamValues::baseline();
            f(&mut v);
            assert!(ChemostatParams::new(v).is_err(), "{v:?}");
        }
    }

    #[test]
    fn contois_values() {
        assert!((p().mu(5.0, 3.0) - 0.5).abs() < 1e-15);
        assert_eq!(p().mu(0.0, 2.0), 0.0);
        assert_eq!(p().mu(3.0, 0.0), 2.0);
        assert_eq!(p().mu(0.0, 0.0), 0.0);
    }

    #[test]
    fn nu_values_and_domain() {
        assert_eq!(p().nu(0.0).unwrap(), 0.0);
        assert!((p().nu(8.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((p().nu(5.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(p().nu(-0.1).is_err());
        assert!(p().nu(8.1).is_err());
    }

    #[test]
    fn nu_prime_matches_finite_difference() {
        let h = 1e-5;
        for s in [2.0, 4.0, 6.0] {
            let fd = (p().nu(s + h).unwrap() - p().nu(s - h).unwrap()) / (2.0 * h);
            let an = p().nu_prime(s).unwrap();
            assert!(((fd - an) / an).abs() < 1e-6);
        }
        assert!((p().nu_prime(5.0).unwrap() - 0.2).abs() < 1e-15);
        for i in 0..=80 {
            assert!(p().nu_prime(i as f64 * 0.1).unwrap() > 0.0);
        }
    }

    #[test]
    fn nu_second_sign_and_fd() {
        let h = 1e-5;
        for s in [1.0, 3.0, 5.0, 7.0] {
            let fd = (p().nu_prime(s + h).unwrap() - p().nu_prime(s - h).unwrap()) / (2.0 * h);
            let an = p().nu_second(s).unwrap();
            assert!(((fd - an) / an).abs() < 1e-5);
        }
        assert!(p().nu_second(5.0).unwrap() > 0.0);
        let linear = with(|v| v.k = 1.0);
        let concave = with(|v| v.k = 0.5);
        for i in 0..=40 {
            let s = i as f64 * 0.2;
            assert_eq!(linear.nu_second(s).unwrap(), 0.0);
            assert!(concave.nu_second(s).unwrap() < 0.0);
            assert!(p().nu_second(s).unwrap() > 0.0);
        }
    }

    #[test]
    fn h_conversion_peak() {
        assert_eq!(p().h_conversion(0.0).unwrap(), 0.0);
        assert_eq!(p().h_conversion(8.0).unwrap(), 0.0);
        let sh = p().s_hat();
        assert!((sh - 8.0 * 5f64.sqrt() / (5f64.sqrt() + 1.0)).abs() < 1e-15);
        assert!((sh - 5.528).abs() < 1e-3);
        let h = 1e-6;
        let d = (p().h_conversion(sh + h).unwrap() - p().h_conversion(sh - h).unwrap()) / (2.0 * h);
        assert!(d.abs() < 1e-6);
    }

    #[test]
    fn equilibrium_identity() {
        let eq = p().equilibrium().unwrap();
        assert!((eq.s_bar - 5.0).abs() < 1e-12);
        assert!((eq.x_bar - 3.0).abs() < 1e-12);
        assert!((p().nu(eq.s_bar).unwrap() - 0.5).abs() < 1e-12);
        let tiny = with(|v| {
            v.d_min = 1e-9;
            v.d_bar = 1e-9;
        });
        assert!(tiny.equilibrium().unwrap().s_bar < 1e-7);
    }

    #[test]
    fn reduced_rhs_values() {
        let pp = p();
        assert!(pp.reduced_rhs(0.0, 5.0, 0.5).unwrap().abs() < 1e-15);
        assert_eq!(pp.reduced_rhs(0.0, 8.0, 1.3).unwrap(), 0.0);
        let expected = 0.25f64.powf(0.15) * (1.95 - 0.5) * 3.0;
        assert!((pp.reduced_rhs(0.0, 5.0, 1.95).unwrap() - expected).abs() < 1e-14);
        // stability direction at the equilibrium
        assert!(pp.rhs_partials(5.0, 0.5).0 < 0.0);
    }

    #[test]
    fn partials_match_finite_differences() {
        let pp = p();
        let h = 1e-6;
        for &(s, d) in &[(1.0, 0.1), (4.0, 1.5), (6.5, 0.7)] {
            let (fs, fd) = pp.rhs_partials(s, d);
            let fs_num = (pp.rhs_unchecked(s + h, d) - pp.rhs_unchecked(s - h, d)) / (2.0 * h);
            let fd_num = (pp.rhs_unchecked(s, d + h) - pp.rhs_unchecked(s, d - h)) / (2.0 * h);
            assert!((fs - fs_num).abs() < 1e-7 * fs.abs().max(1.0));
            assert!((fd - fd_num).abs() < 1e-7 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn full_rhs_on_manifold() {
        let pp = p();
        for &(s, d) in &[(1.0, 0.1), (4.0, 1.5), (6.5, 0.02)] {
            let x = pp.yield_coef() * (8.0 - s);
            let (ds, dx) = pp.full_rhs(0.0, s, x, d);
            let f = pp.reduced_rhs(0.0, s, d).unwrap();
            assert!((ds - f).abs() < 1e-14);
            assert!((dx + pp.yield_coef() * ds).abs() < 1e-14);
        }
        assert_eq!(pp.full_rhs(0.0, 3.0, 0.0, 1.0).1, 0.0);
        let (a, b) = pp.full_rhs(0.0, 5.0, 3.0, 0.5);
        assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
    }

    #[test]
    fn biomass_profile() {
        let g = PeriodicGrid::new(15.0, 8).unwrap();
        let s = Profile::new(g, vec![8.0, 5.0, 1.0, 2.0, 3.0, 4.0, 6.0, 7.0]).unwrap();
        let x = p().biomass_from_substrate(&s);
        assert_eq!(x.values()[0], 0.0);
        assert_eq!(x.values()[1], 3.0);
        assert!(x.values()[2] > x.values()[3]);
    }
}
