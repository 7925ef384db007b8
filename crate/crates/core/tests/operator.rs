use std::f64::consts::PI;

use chemostat_core::frac::{cfds_apply, direct_cfds};
use chemostat_core::{
    FracOrder, MemoryLength, PeriodicGrid, Profile, Side, SpectralMultiplierTable,
};
use proptest::prelude::*;

fn band_limited(grid: PeriodicGrid, coeffs: &[(f64, f64)]) -> (Profile, impl Fn(f64) -> f64 + '_) {
    let w = 2.0 * PI / grid.period();
    let f = |t: f64| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let kw = (k + 1) as f64 * w;
                a * (kw * t).cos() + b * (kw * t).sin()
            })
            .sum::<f64>()
    };
    let fp = move |t: f64| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let kw = (k + 1) as f64 * w;
                kw * (b * (kw * t).cos() - a * (kw * t).sin())
            })
            .sum::<f64>()
    };
    (Profile::from_fn(grid, f), fp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spectral_operator_matches_direct_quadrature(
        alpha in 0.2f64..0.95,
        length in 0.5f64..8.0,
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
    ) {
        let grid = PeriodicGrid::new(15.0, 32).unwrap();
        let (a, l) = (FracOrder::new(alpha).unwrap(), MemoryLength::new(length).unwrap());
        let table = SpectralMultiplierTable::new(grid, a, l);
        let (f, fp) = band_limited(grid, &coeffs);
        for side in [Side::Left, Side::Right] {
            let spectral = cfds_apply(&f, &table, side).unwrap();
            for j in [0, 5, 19] {
                let direct = direct_cfds(&fp, grid.node(j), a, l, side).unwrap();
                prop_assert!((spectral.values()[j] - direct).abs() < 1e-8, "{side:?} node {j}");
            }
        }
    }

    #[test]
    fn right_operator_is_the_transpose_of_the_left(
        f in prop::collection::vec(-3.0f64..3.0, 24),
        g in prop::collection::vec(-3.0f64..3.0, 24),
    ) {
        let grid = PeriodicGrid::new(7.0, 24).unwrap();
        let table = SpectralMultiplierTable::new(grid, FracOrder::new(0.6).unwrap(), MemoryLength::new(2.0).unwrap());
        let (fp, gp) = (Profile::new(grid, f).unwrap(), Profile::new(grid, g).unwrap());
        let lf = cfds_apply(&fp, &table, Side::Left).unwrap();
        let rg = cfds_apply(&gp, &table, Side::Right).unwrap();
        let a: f64 = lf.values().iter().zip(gp.values()).map(|(x, y)| x * y).sum();
        let b: f64 = fp.values().iter().zip(rg.values()).map(|(x, y)| x * y).sum();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn operator_commutes_with_node_shifts(
        f in prop::collection::vec(-3.0f64..3.0, 16),
        shift in 1usize..16,
    ) {
        let grid = PeriodicGrid::new(5.0, 16).unwrap();
        let table = SpectralMultiplierTable::new(grid, FracOrder::new(0.4).unwrap(), MemoryLength::new(1.0).unwrap());
        let shifted: Vec<f64> = (0..16).map(|j| f[(j + shift) % 16]).collect();
        let a = cfds_apply(&Profile::new(grid, f).unwrap(), &table, Side::Left).unwrap();
        let b = cfds_apply(&Profile::new(grid, shifted).unwrap(), &table, Side::Left).unwrap();
        for j in 0..16 {
            prop_assert!((b.values()[j] - a.values()[(j + shift) % 16]).abs() < 1e-11);
        }
    }
}

#[test]
fn constants_are_annihilated() {
    let grid = PeriodicGrid::new(15.0, 40).unwrap();
    let table = SpectralMultiplierTable::new(
        grid,
        FracOrder::new(0.3).unwrap(),
        MemoryLength::new(5.0).unwrap(),
    );
    let out = cfds_apply(&Profile::constant(grid, 4.2), &table, Side::Left).unwrap();
    assert!(out.values().iter().all(|v| v.abs() < 1e-13));
}
