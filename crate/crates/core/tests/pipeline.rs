//! Cross-module checks through the public API only.

use fracfk::analytics::ctrw_fractal_dimension;
use fracfk::estimators::{energy_from_decay, simulate, uniform_checkpoints, Ensemble, MergeMode};
use fracfk::fractal::trajectory_dfa;
use fracfk::paths::{generate, FractionalIndices, Trajectory, WalkConfig};
use fracfk::potentials::Potential;
use fracfk::sampling::RngStream;

#[test]
fn trajectory_survives_csv_and_feeds_dfa() {
    let walk = WalkConfig::new(FractionalIndices::brownian(), 200.0, 20);
    let traj = generate(&walk, &mut RngStream::new(5, 0)).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf, &["# test".to_string()]).unwrap();
    let back = Trajectory::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), traj.len());
    assert_eq!(back.last_position(), traj.last_position());

    let a = trajectory_dfa(&traj, 4000, None).unwrap();
    let b = trajectory_dfa(&back, 4000, None).unwrap();
    assert_eq!(a.hurst, b.hurst);
    let theory = ctrw_fractal_dimension(2.0, 1.0).unwrap();
    assert!((a.dimension - theory).abs() < 0.15, "D = {}", a.dimension);
}

#[test]
fn harmonic_energy_end_to_end() {
    let walk = WalkConfig::new(FractionalIndices::brownian(), 8.0, 50);
    let ensemble = Ensemble::new(walk, 4000, 3);
    let out = simulate(&ensemble, &Potential::harmonic(0.5), None, &uniform_checkpoints(8.0, 16), false).unwrap();
    let e = energy_from_decay(&out.series, Some((3.0, 8.0))).unwrap();
    assert!((e.value - 0.5).abs() < 4.0 * e.stderr + 0.03, "{} +- {}", e.value, e.stderr);
}

#[test]
fn merge_modes_agree_on_the_same_replicas() {
    let walk = WalkConfig::new(FractionalIndices::new(1.5, 0.8).unwrap(), 2.0, 40).with_compensation(true);
    let cps = uniform_checkpoints(2.0, 4);
    let v = Potential::harmonic(0.5);
    let seq = simulate(&Ensemble::new(walk.clone(), 1500, 9), &v, None, &cps, false).unwrap();
    let par = simulate(
        &Ensemble::new(walk, 1500, 9).with_merge(MergeMode::Unordered),
        &v,
        None,
        &cps,
        false,
    )
    .unwrap();
    for (a, b) in seq.series.log_z.iter().zip(&par.series.log_z) {
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }
}
