use proptest::prelude::*;

use spde_core::analysis::{fit_rate, uit_certificate};
use spde_core::fem::TridiagonalMatrix;
use spde_core::field::{norm_l2, norm_l2_sq};
use spde_core::noise::coarsen_increments;
use spde_core::schemes::{global_factor, pointwise_drift};
use spde_core::spectral::SpectralGrid;
use spde_core::{
    CovarianceSpec, FemNoiseRoute, Field, InitialDatum, NoiseStream, Nonlinearity, Problem,
    SchemeKind, Space, Stepper,
};

fn nonlinearity() -> impl Strategy<Value = Nonlinearity> {
    prop_oneof![
        Just(Nonlinearity::Cubic),
        (0.0..2.0f64, 0.1..2.0f64).prop_map(|(b2, b3)| Nonlinearity::AllenCahn { b2, b3 }),
    ]
}

const TAMED_POINTWISE: [SchemeKind; 3] = [
    SchemeKind::TruncatedPointwise,
    SchemeKind::Gtem,
    SchemeKind::Gyongy,
];

proptest! {
    #[test]
    fn tamed_drift_never_exceeds_f(nl in nonlinearity(), u in -1e3..1e3f64, tau in 1e-4..1.0f64) {
        let f = nl.eval(u).abs();
        for kind in TAMED_POINTWISE {
            let d = pointwise_drift(&kind, &nl, u, tau).unwrap();
            prop_assert!(d.abs() <= f * (1.0 + 1e-15));
        }
    }

    #[test]
    fn gtem_against_truncation(nl in nonlinearity(), u in -1e3..1e3f64, tau in 1e-4..1.0f64) {
        // sqrt(1 + tau a^2) <= 1 + tau a  iff  a (1 - tau) <= 2
        let a = nl.eval_prime(u).abs();
        let g = pointwise_drift(&SchemeKind::Gtem, &nl, u, tau).unwrap().abs();
        let t = pointwise_drift(&SchemeKind::TruncatedPointwise, &nl, u, tau).unwrap().abs();
        if a * (1.0 - tau) <= 2.0 * (1.0 - 1e-9) {
            prop_assert!(g >= t * (1.0 - 1e-15));
        } else if a * (1.0 - tau) >= 2.0 * (1.0 + 1e-9) && nl.eval(u) != 0.0 {
            prop_assert!(g < t);
        }
    }

    #[test]
    fn gyongy_drift_is_bounded(nl in nonlinearity(), u in -1e4..1e4f64, tau in 1e-4..1.0f64) {
        let d = pointwise_drift(&SchemeKind::Gyongy, &nl, u, tau).unwrap();
        prop_assert!(d.abs() < 1.0 / tau);
    }

    #[test]
    fn derivative_taming_grows_linearly(u in -1e6..1e6f64, tau in 1e-4..1.0f64) {
        let nl = Nonlinearity::Cubic;
        let d = pointwise_drift(&SchemeKind::TruncatedPointwise, &nl, u, tau).unwrap();
        prop_assert!(d.abs() <= u.abs() / (3.0 * tau) * (1.0 + 1e-12));
        let d = pointwise_drift(&SchemeKind::Gtem, &nl, u, tau).unwrap();
        prop_assert!(d.abs() <= u.abs() / (3.0 * tau.sqrt()) * (1.0 + 1e-12));
    }

    #[test]
    fn global_factor_in_unit_interval(tau in 1e-6..10.0f64, s in 0.0..1e12f64, alpha in 0.1..10.0f64) {
        for kind in [SchemeKind::TruncatedGlobal, SchemeKind::GradientGlobal { alpha }] {
            let g = global_factor(&kind, tau, s);
            prop_assert!(g > 0.0 && g <= 1.0);
        }
        prop_assert_eq!(global_factor(&SchemeKind::TruncatedGlobal, tau, 0.0), 1.0);
    }

    #[test]
    fn norm_is_homogeneous(vals in prop::collection::vec(-5.0..5.0f64, 16), c in -10.0..10.0f64) {
        let fem = Space::FemDirichlet { n: 17 };
        let mut u = Field::Nodal(vals.clone());
        let base = norm_l2(&u, &fem).unwrap();
        u.scale(c);
        let scaled = norm_l2(&u, &fem).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + scaled));

        let spec = Space::SpectralPeriodic { n: 16 };
        let grid = SpectralGrid::new(16).unwrap();
        let mut m = Field::Modes(grid.forward(&vals).unwrap());
        let base = norm_l2(&m, &spec).unwrap();
        m.scale(c);
        let scaled = norm_l2(&m, &spec).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + scaled));
    }

    #[test]
    fn fourier_round_trip(vals in prop::collection::vec(-100.0..100.0f64, 32)) {
        let grid = SpectralGrid::new(32).unwrap();
        let modes = grid.forward(&vals).unwrap();
        let back = grid.forward(&grid.inverse(&modes)).unwrap();
        for (a, b) in modes.iter().zip(&back) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        let padded = grid.from_padded(&grid.to_padded(&modes));
        for (a, b) in modes.iter().zip(&padded) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn coarsening_adds_increments(seed in any::<u64>(), spectral in any::<bool>(), k in 1usize..6) {
        let space = if spectral { Space::SpectralPeriodic { n: 16 } } else { Space::FemDirichlet { n: 16 } };
        let cov = if spectral {
            CovarianceSpec::InversePeriodicHelmholtz
        } else {
            CovarianceSpec::InverseDirichletLaplacian
        };
        let stream = NoiseStream::new(seed, 0, &cov, &space, FemNoiseRoute::Eigen).unwrap();
        let incs: Vec<_> = (0..k as u64).map(|s| stream.sample_increment(s, 0.01).unwrap()).collect();
        let coarse = coarsen_increments(&incs).unwrap();
        let mut acc = incs[0].zero_like();
        for i in &incs {
            acc.accumulate(i).unwrap();
        }
        prop_assert_eq!(coarse, acc);
    }

    #[test]
    fn thomas_solve_has_small_residual(
        rows in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 2..40)
    ) {
        let n = rows.len();
        let a = TridiagonalMatrix {
            sub: rows[1..].iter().map(|r| r.0).collect(),
            diag: rows.iter().map(|r| 2.5 + r.1).collect(),
            sup: rows[..n - 1].iter().map(|r| r.2).collect(),
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = a.solve(&b).unwrap();
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            prop_assert!((ri - bi).abs() <= 1e-12);
        }
    }

    #[test]
    fn fit_recovers_planted_slope(s in -3.0..3.0f64, c in 1e-3..1e3f64, x0 in 1e-4..1.0f64) {
        let pairs: Vec<(f64, f64)> = (0..5).map(|k| {
            let x = x0 * 2f64.powi(-k);
            (x, c * x.powf(s))
        }).collect();
        let fit = fit_rate(&pairs).unwrap();
        prop_assert!((fit.slope - s).abs() <= 1e-9);
    }

    #[test]
    fn certificate_is_scale_invariant(errs in prop::collection::vec(1e-6..1.0f64, 3..50), c in 1e-3..1e3f64) {
        let series: Vec<(f64, f64)> = errs.iter().enumerate().map(|(i, &e)| (i as f64, e)).collect();
        let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, e)| (t, c * e)).collect();
        let a = uit_certificate(&series).unwrap().ratio;
        let b = uit_certificate(&scaled).unwrap().ratio;
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn fully_implicit_step_is_dissipative(
        vals in prop::collection::vec(-3.0..3.0f64, 16),
        tau in 1e-3..0.5f64,
    ) {
        let space = Space::SpectralPeriodic { n: 16 };
        let grid = SpectralGrid::new(16).unwrap();
        let p = Problem::cubic(space, InitialDatum::Constant(0.0));
        let stepper = Stepper::new(&p, SchemeKind::fie(), tau).unwrap();
        let u = Field::Modes(grid.forward(&vals).unwrap());
        let (v, _) = stepper.advance(&u, &space.zero_field()).unwrap();
        let (nu, nv) = (norm_l2_sq(&u, &space).unwrap(), norm_l2_sq(&v, &space).unwrap());
        prop_assert!(nv <= nu * (1.0 + 1e-12) + 1e-12);
    }
}
