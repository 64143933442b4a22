//! Randomized invariants of the subspace operators, schedules and the
//! large-spin energy.

use proptest::prelude::*;
use qaa_core::driver::{build_he_symmetric, gammas_from_a, DriverMatrix, N_ENTRIES};
use qaa_core::problem::{betas_from_p, classify_cost, gp_eval, CostMode, HwpInstance};
use qaa_core::semiclassical::EffectiveModel;
use qaa_core::spectral::{gap_at, Driver, ScheduleOps};
use qaa_core::spin_algebra::{build_nz, eigh, sym_poly, GammaCoefficients};

fn weights() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-3.0f64..3.0)
}

fn gammas() -> impl Strategy<Value = GammaCoefficients> {
    prop::array::uniform6(-2.0f64..2.0).prop_map(GammaCoefficients::new)
}

fn clause() -> impl Strategy<Value = DriverMatrix> {
    prop::collection::vec(-2.0f64..2.0, N_ENTRIES).prop_map(|v| {
        let mut u = [0.0; N_ENTRIES];
        u.copy_from_slice(&v);
        DriverMatrix::from_upper(u).unwrap()
    })
}

fn mirror(g: GammaCoefficients) -> GammaCoefficients {
    let [g1, g2, g3, g4, g5, g6] = g.gamma;
    GammaCoefficients::new([g1, g2, g3, -g4, g5, -g6])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schedule_is_symmetric_and_gap_nonnegative(p in weights(), g in gammas(), n in 3usize..40, tau in 0.0f64..=1.0) {
        let ops = ScheduleOps::new(&HwpInstance::new(p), &Driver::Gamma(g), n, CostMode::Exact).unwrap();
        prop_assert!(ops.h(tau).unwrap().is_symmetric());
        prop_assert!(gap_at(&ops, tau).unwrap() >= 0.0);
    }

    #[test]
    fn clause_driver_is_symmetric(a in clause(), n in 3usize..30) {
        let op = build_he_symmetric(&a, n, true).unwrap();
        prop_assert!(op.is_symmetric());
    }

    #[test]
    fn complement_preserves_spectrum(p in weights(), g in gammas(), n in 3usize..30, tau in 0.0f64..=1.0) {
        let inst = HwpInstance::new(p);
        let a = ScheduleOps::new(&inst, &Driver::Gamma(g), n, CostMode::Exact).unwrap();
        let b = ScheduleOps::new(&inst.complemented(), &Driver::Gamma(mirror(g)), n, CostMode::Exact).unwrap();
        let ea = eigh(&a.h(tau).unwrap(), false).unwrap().eigenvalues;
        let eb = eigh(&b.h(tau).unwrap(), false).unwrap().eigenvalues;
        for (x, y) in ea.iter().zip(&eb) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn complemented_clause_maps_to_mirrored_gammas(a in clause()) {
        let g = gammas_from_a(&a);
        let gm = gammas_from_a(&a.complemented());
        for (x, y) in mirror(g).gamma.iter().zip(gm.gamma) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_map_is_linear(a in clause(), b in clause(), s in -2.0f64..2.0) {
        let lhs = gammas_from_a(&a.add(&DriverMatrix::from_upper(b.upper().map(|x| s * x)).unwrap()));
        let (ga, gb) = (gammas_from_a(&a), gammas_from_a(&b));
        for k in 0..6 {
            prop_assert!((lhs.gamma[k] - ga.gamma[k] - s * gb.gamma[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_mirror_covariance(p in weights(), g in gammas(), tau in 0.0f64..=1.0, x in -1.0f64..1.0, z in -1.0f64..1.0) {
        let m = EffectiveModel::new(betas_from_p(p), g);
        let lhs = m.g(tau, x, z);
        let rhs = m.mirrored().g(tau, x, -z);
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        let c = EffectiveModel::from_instance(&HwpInstance::new(p).complemented(), mirror(g));
        prop_assert!((c.g(tau, x, -z) - lhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn cost_minimizer_is_global(p in weights()) {
        let beta = betas_from_p(p);
        let shape = classify_cost(beta);
        for k in 0..=200 {
            let q = -1.0 + k as f64 / 100.0;
            prop_assert!(gp_eval(beta, q) >= shape.g_star - 1e-12);
        }
    }

    #[test]
    fn sym_poly_of_pure_z_terms_vanishes(n in 2usize..30) {
        // Every monomial carries at least one x: a z-only spectrum cannot appear.
        let op = sym_poly(n, &GammaCoefficients::ZERO).unwrap();
        prop_assert_eq!(op.max_abs(), 0.0);
        prop_assert!(build_nz(n).unwrap().is_symmetric());
    }
}
