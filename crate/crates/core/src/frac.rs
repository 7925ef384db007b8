//! Caputo fractional derivatives with sliding memory.
//!
//! Left-sided: `D f(t) = 1/Γ(1-α) ∫_{t-L}^{t} (t-τ)^{-α} f'(τ) dτ`.
//! Right-sided: `D⁺ f(t) = -1/Γ(1-α) ∫_{t}^{t+L} (τ-t)^{-α} f'(τ) dτ`.
//!
//! Both commute with translations, so on `e^{iωt}` they act as multipliers
//! `m(ω) = iω/Γ(1-α) ∫_0^L u^{-α} e^{-iωu} du` and `m⁺(ω) = conj(m(ω))`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{self, PeriodicGrid, Profile};
use crate::quadrature::{adaptive_singular, SingularRule};
use crate::special::gamma;

/// Points per panel of the multiplier quadrature.
pub const DEFAULT_QUAD_ORDER: usize = 24;
/// Upper bound on `omega * panel_width` for the multiplier quadrature.
const PHASE_PER_PANEL: f64 = 4.0;

/// Fractional order `alpha` in `(0, 1]`; `1` is the classical derivative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(FracOrder(alpha))
        } else {
            Err(Error::domain(format!(
                "fractional order must lie in (0, 1], got {alpha}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_classical(self) -> bool {
        self.0 == 1.0
    }
}

/// Sliding memory length `L > 0` (hours).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MemoryLength(f64);

impl MemoryLength {
    pub fn new(length: f64) -> Result<Self> {
        if length > 0.0 && length.is_finite() {
            Ok(MemoryLength(length))
        } else {
            Err(Error::domain(format!(
                "memory length must be positive, got {length}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

fn kernel_rule(
    alpha: FracOrder,
    length: MemoryLength,
    omega_max: f64,
    order: usize,
) -> SingularRule {
    let width = if omega_max > 0.0 {
        PHASE_PER_PANEL / omega_max
    } else {
        length.0
    };
    SingularRule::new(alpha.0, length.0, order, width.min(length.0))
}

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "non-finite angular frequency {omega}"
        )))
    }
}

/// Symbol of the left-sided operator at angular frequency `omega`.
pub fn left_multiplier(omega: f64, alpha: FracOrder, length: MemoryLength) -> Result<Complex64> {
    check_omega(omega)?;
    if omega == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if alpha.is_classical() {
        return Ok(Complex64::new(0.0, omega));
    }
    let rule = kernel_rule(alpha, length, omega.abs(), DEFAULT_QUAD_ORDER);
    Ok(multiplier_from_rule(&rule, omega, alpha))
}

/// Symbol of the right-sided operator; the conjugate of [`left_multiplier`].
pub fn right_multiplier(omega: f64, alpha: FracOrder, length: MemoryLength) -> Result<Complex64> {
    Ok(left_multiplier(omega, alpha, length)?.conj())
}

fn multiplier_from_rule(rule: &SingularRule, omega: f64, alpha: FracOrder) -> Complex64 {
    Complex64::new(0.0, omega) * rule.fourier(omega) / gamma(1.0 - alpha.0)
}

/// Per-mode multipliers of both operators on a periodic grid, in FFT order.
#[derive(Debug, Clone)]
pub struct SpectralMultiplierTable {
    grid: PeriodicGrid,
    alpha: FracOrder,
    length: MemoryLength,
    left: Vec<Complex64>,
    right: Vec<Complex64>,
}

impl SpectralMultiplierTable {
    pub fn new(grid: PeriodicGrid, alpha: FracOrder, length: MemoryLength) -> Self {
        Self::with_order(grid, alpha, length, DEFAULT_QUAD_ORDER)
    }

    /// Same table with `order` quadrature points per panel.
    pub fn with_order(
        grid: PeriodicGrid,
        alpha: FracOrder,
        length: MemoryLength,
        order: usize,
    ) -> Self {
        let n = grid.len();
        let omega_max = grid.omega(n / 2).abs();
        let rule = if alpha.is_classical() {
            None
        } else {
            Some(kernel_rule(alpha, length, omega_max, order))
        };
        let left: Vec<Complex64> = (0..n)
            .map(|idx| {
                let w = grid.omega(idx);
                match &rule {
                    _ if idx == 0 => Complex64::new(0.0, 0.0),
                    None => Complex64::new(0.0, w),
                    Some(r) => multiplier_from_rule(r, w, alpha),
                }
            })
            .collect();
        let right = left.iter().map(|m| m.conj()).collect();
        SpectralMultiplierTable {
            grid,
            alpha,
            length,
            left,
            right,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    pub fn memory(&self) -> MemoryLength {
        self.length
    }

    pub fn multipliers(&self, side: Side) -> &[Complex64] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Multiplier actually applied at FFT index `idx`; at Nyquist only the real
    /// part acts on samples of the real cosine mode.
    fn effective(&self, side: Side, idx: usize) -> Complex64 {
        let m = self.multipliers(side)[idx];
        if idx == self.grid.len() / 2 {
            Complex64::new(m.re, 0.0)
        } else {
            m
        }
    }

    /// Real `N x N` circulant matrix of the operator acting on grid samples.
    pub fn matrix(&self, side: Side) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let col = self
            .apply_values(&e0, side)
            .expect("unit vector has grid length");
        DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n])
    }

    fn apply_values(&self, values: &[f64], side: Side) -> Result<Vec<f64>> {
        let p = Profile::new(self.grid, values.to_vec())?;
        let mut modes = grid::to_modes(&p);
        for (idx, c) in modes.iter_mut().enumerate() {
            *c *= self.effective(side, idx);
        }
        Ok(grid::from_modes(&modes, self.grid)?.into_values())
    }
}

/// Apply the operator to the trigonometric interpolant of `samples`.
pub fn cfds_apply(
    samples: &Profile,
    table: &SpectralMultiplierTable,
    side: Side,
) -> Result<Profile> {
    if samples.len() != table.grid.len() {
        return Err(Error::Shape {
            expected: table.grid.len(),
            got: samples.len(),
        });
    }
    let values = table.apply_values(samples.values(), side)?;
    Profile::new(table.grid, values)
}

/// Tolerance used by [`direct_cfds`] for its adaptive quadrature.
pub const DIRECT_TOL: f64 = 1e-12;

/// Evaluate the defining integral at time `t` by adaptive Gauss-Jacobi quadrature,
/// given the derivative `fprime` of the function.
pub fn direct_cfds<F: Fn(f64) -> f64>(
    fprime: F,
    t: f64,
    alpha: FracOrder,
    length: MemoryLength,
    side: Side,
) -> Result<f64> {
    if alpha.is_classical() {
        return Ok(match side {
            Side::Left => fprime(t),
            Side::Right => -fprime(t),
        });
    }
    let g = 1.0 / gamma(1.0 - alpha.0);
    match side {
        Side::Left => Ok(g * adaptive_singular(|u| fprime(t - u), alpha.0, length.0, DIRECT_TOL)?),
        Side::Right => {
            Ok(-g * adaptive_singular(|u| fprime(t + u), alpha.0, length.0, DIRECT_TOL)?)
        }
    }
}

/// `psi(λ) = λ ∫_0^L u^{-α} e^{λu} du`.
pub fn psi(lambda: f64, alpha: FracOrder, length: MemoryLength) -> f64 {
    let rule = SingularRule::new(
        alpha.0,
        length.0,
        DEFAULT_QUAD_ORDER,
        (2.0 / lambda.abs().max(1e-12)).min(length.0),
    );
    lambda * rule.integrate(|u| (lambda * u).exp())
}

/// Unique `λ > 0` with `psi(λ) = k Γ(1-α)`, the decay rate of `e^{-λt}`
/// under `D z = -k z`.
pub fn lambda_root(k: f64, alpha: FracOrder, length: MemoryLength) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(format!(
            "decay coefficient must be positive, got {k}"
        )));
    }
    if alpha.is_classical() {
        return Ok(k);
    }
    let target = k * gamma(1.0 - alpha.0);
    let f = |lam: f64| psi(lam, alpha, length) - target;
    let mut lo = 1e-8;
    let mut hi = 1.0;
    if f(lo) > 0.0 {
        // target below psi(1e-8); shrink towards zero
        while f(lo) > 0.0 {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    residual: f(lo),
                    reason: "no lower bracket".into(),
                });
            }
        }
    }
    let mut doublings = 0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::NonConvergence {
                iterations: doublings,
                residual: f(hi),
                reason: "no upper bracket".into(),
            });
        }
    }
    // bisection to full precision; psi is strictly increasing
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn a(x: f64) -> FracOrder {
        FracOrder::new(x).unwrap()
    }
    fn l(x: f64) -> MemoryLength {
        MemoryLength::new(x).unwrap()
    }

    #[test]
    fn newtypes_validate() {
        assert!(FracOrder::new(0.0).is_err());
        assert!(FracOrder::new(1.2).is_err());
        assert!(FracOrder::new(1.0).unwrap().is_classical());
        assert!(MemoryLength::new(0.0).is_err());
        assert!(MemoryLength::new(f64::NAN).is_err());
    }

    #[test]
    fn multiplier_trivial_cases() {
        assert_eq!(
            left_multiplier(0.0, a(0.85), l(5.0)).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let w = 2.0 * PI / 15.0;
        assert_eq!(
            left_multiplier(w, a(1.0), l(5.0)).unwrap(),
            Complex64::new(0.0, w)
        );
        assert_eq!(
            right_multiplier(w, a(1.0), l(3.0)).unwrap(),
            Complex64::new(0.0, -w)
        );
        assert!(left_multiplier(f64::INFINITY, a(0.5), l(1.0)).is_err());
    }

    #[test]
    fn right_is_conjugate_of_left() {
        for &w in &[0.3, -1.7, 12.0] {
            let m = left_multiplier(w, a(0.4), l(2.0)).unwrap();
            let p = right_multiplier(w, a(0.4), l(2.0)).unwrap();
            assert_eq!(p, m.conj());
        }
    }

    #[test]
    fn doubling_quadrature_order_changes_nothing() {
        let g = PeriodicGrid::new(15.0, 64).unwrap();
        for &(al, ll) in &[(0.85, 5.0), (0.3, 1.0), (0.1, 50.0)] {
            let t1 = SpectralMultiplierTable::with_order(g, a(al), l(ll), DEFAULT_QUAD_ORDER);
            let t2 = SpectralMultiplierTable::with_order(g, a(al), l(ll), 2 * DEFAULT_QUAD_ORDER);
            for (x, y) in t1
                .multipliers(Side::Left)
                .iter()
                .zip(t2.multipliers(Side::Left))
            {
                assert!((x - y).norm() < 1e-12, "alpha {al}, L {ll}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn constant_profile_maps_to_zero() {
        let g = PeriodicGrid::new(15.0, 32).unwrap();
        let t = SpectralMultiplierTable::new(g, a(0.85), l(5.0));
        let out = cfds_apply(&Profile::constant(g, 4.2), &t, Side::Left).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = PeriodicGrid::new(15.0, 32).unwrap();
        let t = SpectralMultiplierTable::new(g, a(0.85), l(5.0));
        let other = Profile::constant(PeriodicGrid::new(15.0, 16).unwrap(), 1.0);
        assert!(matches!(
            cfds_apply(&other, &t, Side::Left),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn matrix_matches_spectral_application() {
        let g = PeriodicGrid::new(15.0, 16).unwrap();
        let t = SpectralMultiplierTable::new(g, a(0.6), l(4.0));
        let p = Profile::from_fn(g, |x| (x * 0.7).sin() + 0.1 * x.cos());
        for side in [Side::Left, Side::Right] {
            let m = t.matrix(side);
            let direct = cfds_apply(&p, &t, side).unwrap();
            let v = nalgebra::DVector::from_column_slice(p.values());
            let mv = &m * v;
            for i in 0..16 {
                assert!((mv[i] - direct.values()[i]).abs() < 1e-13);
            }
        }
        // the right operator is the transpose of the left one on the grid
        let diff = t.matrix(Side::Left).transpose() - t.matrix(Side::Right);
        assert!(diff.amax() < 1e-14);
    }

    #[test]
    fn linear_function_closed_form() {
        let (al, ll) = (0.85, 5.0);
        let v = direct_cfds(|_| 1.0, 3.0, a(al), l(ll), Side::Left).unwrap();
        let exact = ll.powf(1.0 - al) / ((1.0 - al) * gamma(1.0 - al));
        assert!((v - exact).abs() < 1e-12);
        assert_eq!(
            direct_cfds(|_| 0.0, 1.0, a(0.3), l(2.0), Side::Right).unwrap(),
            0.0
        );
    }

    #[test]
    fn lambda_root_rejects_nonpositive_k() {
        assert!(lambda_root(0.0, a(0.5), l(1.0)).is_err());
        assert!(lambda_root(-1.0, a(0.5), l(1.0)).is_err());
        assert_eq!(lambda_root(0.7, a(1.0), l(1.0)).unwrap(), 0.7);
    }
}
