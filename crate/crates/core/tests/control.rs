use chemostat_core::bangbang::{cell_average, BangBangControl};
use chemostat_core::pipeline::{run_pipeline, PipelineConfig};
use chemostat_core::solver::residuals_2d;
use chemostat_core::{ChemostatParams, PeriodicGrid};
use proptest::prelude::*;

fn coarse() -> PipelineConfig {
    PipelineConfig {
        n: 80,
        m: 120,
        multistarts: 1,
        ..PipelineConfig::default()
    }
}

#[test]
fn coarse_pipeline_outputs_are_consistent() {
    let p = ChemostatParams::baseline();
    let out = run_pipeline(&p, &coarse()).unwrap();
    let [_, _, s, d, x] = out.output_profiles(&p, 120).unwrap();
    let v = p.values();
    for j in 0..120 {
        assert!((x.values()[j] - v.y * (v.s_in - s.values()[j])).abs() < 1e-12);
        let dj = d.values()[j];
        assert!(dj == v.d_min || dj == v.d_max);
    }
    assert!((out.d_corr.mean() - v.d_bar).abs() < 1e-12);
    let x_n = p.biomass_from_substrate(&out.s_corr);
    let (rs, rx) = residuals_2d(&p, &out.s_corr, &x_n, &out.d_corr).unwrap();
    assert!(rs
        .values()
        .iter()
        .chain(rx.values())
        .all(|r| r.abs() < 1e-8));
}

#[test]
fn pipeline_is_bitwise_repeatable() {
    let p = ChemostatParams::baseline();
    let a = run_pipeline(&p, &coarse()).unwrap();
    let b = run_pipeline(&p, &coarse()).unwrap();
    assert_eq!(a.s_corr.values(), b.s_corr.values());
    assert_eq!(a.report.switch_times, b.report.switch_times);
}

proptest! {
    #[test]
    fn cell_average_preserves_the_mean(t0 in 0.0f64..14.0, width in 0.5f64..14.0, n in 8usize..64) {
        let period = 15.0;
        let t1 = (t0 + width).min(period - 1e-6);
        prop_assume!(t1 > t0 + 1e-3);
        let bb = BangBangControl::new(period, 0.1, 0.9, vec![t0, t1], false).unwrap();
        let grid = PeriodicGrid::new(period, 2 * n).unwrap();
        let avg = cell_average(&bb, grid);
        prop_assert!((avg.mean() - bb.mean()).abs() < 1e-12);
        prop_assert!(avg.values().iter().all(|&v| (0.1 - 1e-12..=0.9 + 1e-12).contains(&v)));
    }

    #[test]
    fn shifting_back_and_forth_is_the_identity(t0 in 0.1f64..7.0, t1 in 7.5f64..14.9, tau in -20.0f64..20.0) {
        let bb = BangBangControl::new(15.0, 0.1, 0.9, vec![t0, t1], true).unwrap();
        let back = bb.shifted(tau).unwrap().shifted(-tau).unwrap();
        for t in [0.0, 3.3, 7.2, 11.9] {
            prop_assert_eq!(back.value_at(t), bb.value_at(t));
        }
        prop_assert!((back.mean() - bb.mean()).abs() < 1e-12);
    }
}
