use twisted_ep::dynamics::{
    evolve, extract_permutation, initial_basis, Direction, EvolveOptions, ModulationSchedule,
};
use twisted_ep::spectral::{branch_cut_couplings, BranchCutOptions};
use twisted_ep::SystemConfig;

fn base() -> SystemConfig {
    SystemConfig::uniform(vec![1.0, 1.0, 2.0], 1.0).unwrap()
}

const P1: &str = "(1,5)(2,6)(3,4)(7,8)";

#[test]
fn ellipse_yields_first_generator() {
    let s = ModulationSchedule::from_origin(base(), 3.0, 6.0, 2500.0, vec![]).unwrap();
    let o = extract_permutation(&s, &EvolveOptions::default(), 0.9).unwrap();
    assert_eq!(o.cycles.as_deref(), Some(P1));
    assert!(o.min_confidence() > 0.99);
}

#[test]
fn winding_direction_does_not_matter() {
    let s = ModulationSchedule::from_origin(base(), 1.0, 2.0, 2500.0, vec![(1, 2)]).unwrap();
    let opts = EvolveOptions::with_steps(100_000);
    let ccw = extract_permutation(&s, &opts, 0.9).unwrap();
    let cw = extract_permutation(&s.with_direction(Direction::Clockwise), &opts, 0.9).unwrap();
    assert!(ccw.valid && cw.valid);
    assert_eq!(ccw.mapping, cw.mapping);
}

#[test]
fn two_windings_return_every_state() {
    let s = ModulationSchedule::from_origin(base(), 3.0, 6.0, 2500.0, vec![]).unwrap();
    let opts = EvolveOptions { windings: 2, ..EvolveOptions::with_steps(100_000) };
    let o = extract_permutation(&s, &opts, 0.9).unwrap();
    assert_eq!(o.mapping, (1..=8).collect::<Vec<_>>());
}

#[test]
fn circle_and_ellipse_agree() {
    let circle = ModulationSchedule::from_origin(base(), 1.0, 1.0, 2500.0, vec![]).unwrap();
    let o = extract_permutation(&circle, &EvolveOptions::default(), 0.9).unwrap();
    assert_eq!(o.cycles.as_deref(), Some(P1));
}

#[test]
fn continuation_across_the_cut_predicts_the_loop_result() {
    let cut = branch_cut_couplings(&base(), 6.0, None, &BranchCutOptions::default()).unwrap();
    assert_eq!(cut.pairs, vec![(1, 5), (2, 6), (3, 4), (7, 8)]);
    let mut j = base().couplings;
    j[0][2] = 0.5;
    j[2][0] = 0.5;
    let cut = branch_cut_couplings(&base(), 6.0, Some(&j), &BranchCutOptions::default()).unwrap();
    assert_eq!(cut.pairs, vec![(1, 2), (3, 6), (4, 5), (7, 8)]);
}

#[test]
fn eta_norm_drift_converges_to_a_nonzero_floor() {
    // Converged in the step count, yet clearly nonzero.
    let s = ModulationSchedule::from_origin(base(), 3.0, 6.0, 2500.0, vec![]).unwrap();
    let psi = initial_basis(&s, 0.0).unwrap().right_vectors[6].clone();
    let drift = |steps| {
        let opts = EvolveOptions { samples: 200, ..EvolveOptions::with_steps(steps) };
        evolve(&s, &psi, &opts).unwrap().eta_drift()
    };
    let (coarse, fine) = (drift(400_000), drift(800_000));
    assert!((coarse - fine).abs() < 0.05 * fine, "{coarse} vs {fine}");
    assert!(fine > 1e-3);
}

#[test]
fn trajectory_is_deterministic() {
    let s = ModulationSchedule::from_origin(base(), 3.0, 6.0, 250.0, vec![(1, 3)]).unwrap();
    let psi = initial_basis(&s, 0.0).unwrap().right_vectors[0].clone();
    let opts = EvolveOptions { samples: 50, ..EvolveOptions::with_steps(5000) };
    let mut a = Vec::new();
    let mut b = Vec::new();
    evolve(&s, &psi, &opts).unwrap().write_csv(&mut a).unwrap();
    evolve(&s, &psi, &opts).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}
