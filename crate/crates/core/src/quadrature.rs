//! Gauss rules for integrals carrying the weakly singular kernel `u^{-alpha}`.
//!
//! Two independent routes are provided. [`SingularRule`] is a fixed composite
//! rule (one Gauss-Jacobi panel at the singular endpoint followed by uniform
//! Gauss-Legendre panels); it backs the multiplier tables. [`adaptive_singular`]
//! bisects panels until embedded rules agree; it backs the direct oracles.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::gamma;

/// Nodes and weights of an n-point rule on [-1, 1].
///
/// `gaps[i] = 1 + nodes[i]` is carried separately so that nodes clustered at
/// the left endpoint keep full relative precision.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub gaps: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss-Jacobi rule for the weight `(1-x)^a (1+x)^b` on [-1, 1].
///
/// Golub-Welsch supplies nodes and weights; nodes are then polished by Newton
/// iteration. Requires `a > -1`, `b > -1` and `n >= 1`.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> GaussRule {
    assert!(n >= 1 && a > -1.0 && b > -1.0);
    let ab = a + b;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            let s = 2.0 * kf + ab;
            (b * b - a * a) / (s * (s + 2.0))
        };
        jac[(k, k)] = diag;
        if k + 1 < n {
            let j = kf + 1.0;
            let s = 2.0 * j + ab;
            let beta = 4.0 * j * (j + a) * (j + b) * (j + ab) / (s * s * (s + 1.0) * (s - 1.0));
            let off = beta.sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(ab + 2.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut rule = GaussRule {
        nodes: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        gaps: Vec::with_capacity(n),
    };
    for (x0, w) in pairs {
        let (x, gap) = polish_node(n, a, b, x0);
        rule.nodes.push(x);
        rule.gaps.push(gap);
        rule.weights.push(mu0 * w / total);
    }
    rule
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> GaussRule {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` and its derivative by the three-term recurrence.
fn jacobi_eval(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p = 0.5 * (a - b + (a + b + 2.0) * x);
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let c1 = 2.0 * k * (k + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (a * a - b * b);
        let c3 = (s - 2.0) * (s - 1.0) * s;
        let c4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let next = ((c2 + c3 * x) * p - c4 * p_prev) / c1;
        p_prev = p;
        p = next;
    }
    let nf = n as f64;
    // (2n+a+b)(1-x^2) P_n' = n[(a-b) - (2n+a+b)x] P_n + 2(n+a)(n+b) P_{n-1}
    let s = 2.0 * nf + a + b;
    let dp =
        (nf * ((a - b) - s * x) * p + 2.0 * (nf + a) * (nf + b) * p_prev) / (s * (1.0 - x * x));
    (p, dp)
}

/// `2F1(-n, n+a+b+1; b+1; z)` and its z-derivative; proportional to
/// `P_n^{(a,b)}(2z - 1)` and well conditioned for small `z`.
fn jacobi_series(n: usize, a: f64, b: f64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let mut term = 1.0;
    let mut f = 1.0;
    let mut df = 0.0;
    for k in 0..n {
        let kf = k as f64;
        term *= (kf - nf) * (nf + a + b + 1.0 + kf) / ((b + 1.0 + kf) * (kf + 1.0)) * z;
        f += term;
        df += (kf + 1.0) * term / z;
    }
    (f, df)
}

/// Nodes with `n^2 z` below this are refined in the endpoint variable
/// `z = (1+x)/2`, where the series stays well conditioned.
const ENDPOINT_ZONE: f64 = 4.0;

fn polish_node(n: usize, a: f64, b: f64, x0: f64) -> (f64, f64) {
    let z0 = 0.5 * (1.0 + x0);
    let zone = ENDPOINT_ZONE / (n * n) as f64;
    if z0 < zone && z0 > 0.0 {
        let mut z = z0;
        for _ in 0..8 {
            let (f, df) = jacobi_series(n, a, b, z);
            if df == 0.0 || !df.is_finite() {
                break;
            }
            let dz = f / df;
            let next = z - dz;
            if !(next > 0.5 * z0 && next < 1.5 * z0) {
                break;
            }
            z = next;
            if dz.abs() <= 1e-17 * z {
                break;
            }
        }
        (2.0 * z - 1.0, 2.0 * z)
    } else {
        let mut x = x0;
        for _ in 0..3 {
            let (p, dp) = jacobi_eval(n, a, b, x);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let dx = p / dp;
            let next = x - dx;
            if dx.abs() > 1e-8 || !(next > -1.0 && next < 1.0) {
                break;
            }
            x = next;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        (x, 1.0 + x)
    }
}

/// Fixed composite rule for `∫_0^L u^{-alpha} g(u) du`.
///
/// The first panel `[0, w]` uses Gauss-Jacobi with the kernel folded into the
/// weights; the rest of `[w, L]` is split into uniform Gauss-Legendre panels.
/// Returned weights already include `u^{-alpha}`.
#[derive(Debug, Clone)]
pub struct SingularRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SingularRule {
    /// `order` points per panel; panels no wider than `max_width`.
    pub fn new(alpha: f64, length: f64, order: usize, max_width: f64) -> Self {
        assert!(length > 0.0 && max_width > 0.0 && alpha < 1.0);
        let panels = (length / max_width).ceil().max(1.0) as usize;
        let width = length / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);

        // u = w (1 + x) / 2  =>  u^{-alpha} du = (w/2)^{1-alpha} (1+x)^{-alpha} dx
        let gj = gauss_jacobi(order, 0.0, -alpha);
        let scale = (0.5 * width).powf(1.0 - alpha);
        for (gap, wt) in gj.gaps.iter().zip(&gj.weights) {
            nodes.push(0.5 * width * gap);
            weights.push(scale * wt);
        }
        let gl = gauss_legendre(order);
        for p in 1..panels {
            let lo = p as f64 * width;
            let half = 0.5 * width;
            for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
                let u = lo + half * (1.0 + x);
                nodes.push(u);
                weights.push(half * wt * u.powf(-alpha));
            }
        }
        SingularRule { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * g(u))
            .sum()
    }

    /// `∫_0^L u^{-alpha} e^{-i omega u} du`.
    pub fn fourier(&self, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&u, &w) in self.nodes.iter().zip(&self.weights) {
            let (s, c) = (omega * u).sin_cos();
            acc += Complex64::new(w * c, -w * s);
        }
        acc
    }
}

const ADAPTIVE_MAX_DEPTH: usize = 40;
const ADAPTIVE_MAX_PANELS: usize = 200_000;

/// Adaptive evaluation of `∫_0^L u^{-alpha} g(u) du` to absolute tolerance `tol`.
///
/// The singular panel `[0, a]` is integrated with Gauss-Jacobi at two orders;
/// if they disagree it is halved. Regular panels use 16- and 32-point
/// Gauss-Legendre and are bisected until the pair agrees.
pub fn adaptive_singular<F: Fn(f64) -> f64>(
    g: F,
    alpha: f64,
    length: f64,
    tol: f64,
) -> Result<f64> {
    if !(alpha < 1.0) || !(length > 0.0) {
        return Err(Error::domain(format!(
            "adaptive_singular: alpha = {alpha}, L = {length}"
        )));
    }
    let gj_lo = gauss_jacobi(12, 0.0, -alpha);
    let gj_hi = gauss_jacobi(24, 0.0, -alpha);
    let gl_lo = gauss_legendre(16);
    let gl_hi = gauss_legendre(32);

    let jacobi_panel = |rule: &GaussRule, a: f64| -> f64 {
        let scale = (0.5 * a).powf(1.0 - alpha);
        rule.gaps
            .iter()
            .zip(&rule.weights)
            .map(|(gap, w)| scale * w * g(0.5 * a * gap))
            .sum()
    };
    let legendre_panel = |rule: &GaussRule, lo: f64, hi: f64| -> f64 {
        let half = 0.5 * (hi - lo);
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| {
                let u = lo + half * (1.0 + x);
                half * w * u.powf(-alpha) * g(u)
            })
            .sum()
    };

    let mut total = 0.0;
    // singular end
    let mut a = length / 16.0;
    let mut depth = 0;
    loop {
        let lo = jacobi_panel(&gj_lo, a);
        let hi = jacobi_panel(&gj_hi, a);
        if (hi - lo).abs() <= (0.25 * tol).max(16.0 * f64::EPSILON * hi.abs()) {
            total += hi;
            break;
        }
        depth += 1;
        if depth > ADAPTIVE_MAX_DEPTH {
            return Err(Error::Quadrature {
                a: 0.0,
                b: a,
                estimate: hi,
                error: (hi - lo).abs(),
            });
        }
        a *= 0.5;
    }

    // regular remainder [a, L], bisected with a work stack
    let mut stack = vec![(a, length, 0usize)];
    let mut panels = 0usize;
    while let Some((lo, hi, d)) = stack.pop() {
        panels += 1;
        let coarse = legendre_panel(&gl_lo, lo, hi);
        let fine = legendre_panel(&gl_hi, lo, hi);
        let err = (fine - coarse).abs();
        let share = tol * (hi - lo) / length;
        if err <= 0.5 * share.max(16.0 * f64::EPSILON * fine.abs()) {
            total += fine;
            continue;
        }
        if d >= ADAPTIVE_MAX_DEPTH || panels > ADAPTIVE_MAX_PANELS {
            return Err(Error::Quadrature {
                a: lo,
                b: hi,
                estimate: fine,
                error: err,
            });
        }
        let mid = 0.5 * (lo + hi);
        stack.push((mid, hi, d + 1));
        stack.push((lo, mid, d + 1));
    }
    Ok(total)
}
