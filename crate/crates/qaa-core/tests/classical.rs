use qaa_core::classical_spin::{adiabatic_diagnostics, integrate_spin, SpinOptions};
use qaa_core::problem::{classify_cost, HwpInstance};
use qaa_core::semiclassical::EffectiveModel;
use qaa_core::spin_algebra::GammaCoefficients;

fn farhi(g4: f64) -> (HwpInstance, EffectiveModel) {
    let inst = HwpInstance::new([0.0, 3.0, 1.0, 1.0]);
    (inst, EffectiveModel::from_instance(&inst, GammaCoefficients::gamma4(g4)))
}

#[test]
fn driven_path_converges_with_runtime() {
    let (inst, m) = farhi(-8.0);
    let q_star = classify_cost(inst.beta).q_star;
    let errs: Vec<f64> = [50.0, 200.0, 800.0]
        .iter()
        .map(|&t| {
            let traj = integrate_spin(&m, t, &SpinOptions::default()).unwrap();
            assert!(traj.max_norm_drift < 1e-8);
            (traj.final_nz - q_star).abs()
        })
        .collect();
    assert!(errs[2] < errs[0], "{errs:?}");
    assert!(errs[2] < 0.05, "{errs:?}");
}

#[test]
fn undriven_path_stays_in_the_wrong_well() {
    let (inst, m) = farhi(0.0);
    let q_star = classify_cost(inst.beta).q_star;
    let traj = integrate_spin(&m, 800.0, &SpinOptions::default()).unwrap();
    // The classical spin cannot tunnel: it ends at the metastable minimum.
    assert!(traj.final_nz < 0.0 && q_star > 0.0, "{} vs {q_star}", traj.final_nz);
}

#[test]
fn slow_sweeps_stay_aligned() {
    let (_, m) = farhi(-8.0);
    let fast = adiabatic_diagnostics(&integrate_spin(&m, 20.0, &SpinOptions::default()).unwrap());
    let slow = adiabatic_diagnostics(&integrate_spin(&m, 800.0, &SpinOptions::default()).unwrap());
    assert!(slow.max_misalignment < fast.max_misalignment);
    assert!(slow.max_misalignment.is_finite() && slow.max_misalignment >= 0.0);
}

#[test]
fn trajectory_is_sampled_monotonically() {
    let (_, m) = farhi(-8.0);
    let traj = integrate_spin(&m, 30.0, &SpinOptions::default()).unwrap();
    assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t && w[1].tau >= w[0].tau));
    let last = traj.samples.last().unwrap();
    assert!((last.tau - 1.0).abs() < 1e-12 && (last.n[2] - traj.final_nz).abs() == 0.0);
    assert_eq!(traj.samples[0].n, [1.0, 0.0, 0.0]);
}
