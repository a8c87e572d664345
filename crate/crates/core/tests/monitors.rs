mod common;

use common::bracketed_run;
use graphflow_core::estimates::{
    averaged_form_barrier, curvature_growth, curvature_scaling, localized_star_omega_bound,
    max_sample_gap, star_omega_monotonicity, tubular_check, LocalizationBall, RadiusChoice,
    ScalingWeight,
};
use graphflow_core::flow::{run, FlowConfig, State, Trajectory};
use graphflow_core::forms::{
    compute_constants, select_centers, CutoffProfile, EpsilonRule, SurfaceSamples,
};
use graphflow_core::initdata::{
    circle, clifford_torus, corner_graph, mollify, random_fourier, sphere,
};
use graphflow_core::{Error, GraphGrid, Lattice, Status, Surface};

fn recorded_run(init: State, t_end: f64, times: &[f64], stencil: bool) -> Trajectory {
    let mut cfg = FlowConfig::new(t_end);
    cfg.record_times = times.to_vec();
    cfg.stencil = stencil;
    cfg.diagnostics = vec!["min_star_omega".into()];
    let result = run(init, &cfg).unwrap();
    assert!(result.completed(), "{:?}", result.halt);
    result.trajectory
}

fn flat_graph(n: usize, m: usize) -> State {
    let lat = Lattice::periodic(vec![16; n], &vec![1.0; n]).unwrap();
    let len = lat.len();
    GraphGrid::new(lat, vec![vec![0.2; len]; m], 0.0)
        .unwrap()
        .into()
}

#[test]
fn tubular_circle_matches_exact_distance() {
    let traj = recorded_run(circle(1.0, 256).unwrap().into(), 0.18, &[0.05, 0.1], false);
    let r = tubular_check(&traj).unwrap();
    assert_eq!(r.status, Status::Pass);
    assert_eq!(r.series[0].value, 0.0);
    let last = r.series.last().unwrap();
    // the shrunken circle is 1 − √(1 − 2t) = 0.2 from the initial one
    assert!((last.value - 0.2).abs() < 1e-3, "{}", last.value);
    assert!(
        (last.bound - (0.36f64.sqrt() + max_sample_gap(traj.initial().unwrap()))).abs() < 1e-12
    );
}

#[test]
fn tubular_sphere_and_torus() {
    let traj = recorded_run(sphere(1.0, 32).unwrap().into(), 0.1, &[0.05], false);
    let r = tubular_check(&traj).unwrap();
    assert_eq!(r.status, Status::Pass);
    let last = r.series.last().unwrap();
    assert!(
        (last.value - (1.0 - 0.6f64.sqrt())).abs() < 2e-2,
        "{}",
        last.value
    );
    let traj = recorded_run(
        clifford_torus(1.0, 1.0, 32).unwrap().into(),
        0.1,
        &[],
        false,
    );
    assert_eq!(tubular_check(&traj).unwrap().status, Status::Pass);
}

#[test]
fn monotonicity_on_flat_and_corner_graphs() {
    let flat = bracketed_run(flat_graph(2, 2), 0.001);
    let r = star_omega_monotonicity(&flat).unwrap();
    assert_eq!(r.status, Status::Pass);
    // both sides vanish up to roundoff in the time difference
    assert!(r.max_abs_residual < 1e-10);
    assert!(r.extras["min_pointwise_margin"].abs() < 1e-10);

    let corner: State = corner_graph(1, 1, 0.75, 64, 1).unwrap().into();
    let traj = recorded_run(corner, 0.02, &[0.002, 0.005, 0.01], true);
    let r = star_omega_monotonicity(&traj).unwrap();
    assert_eq!(r.status, Status::Pass, "{r:?}");
    assert!(r.extras["min_star_omega_final"] > r.extras["min_star_omega_initial"]);
}

#[test]
fn monotonicity_aborts_below_threshold() {
    let steep: State = corner_graph(1, 1, 1.2, 32, 1).unwrap().into();
    let traj = recorded_run(steep, 0.001, &[], false);
    let r = star_omega_monotonicity(&traj).unwrap();
    assert_eq!(r.status, Status::Aborted);
    assert!(!r.passed());
    let circle_traj = recorded_run(circle(1.0, 32).unwrap().into(), 0.01, &[], false);
    assert_eq!(
        star_omega_monotonicity(&circle_traj).unwrap().status,
        Status::NotApplicable
    );
}

#[test]
fn localized_bound_on_corner_run() {
    let g = corner_graph(1, 1, 0.75, 64, 4).unwrap();
    let y0 = vec![0.5, g.values[0][16]];
    let traj = recorded_run(g.into(), 0.05, &[0.005, 0.01, 0.02], false);
    let ball = LocalizationBall {
        y0,
        radius: 0.2,
        theta: 0.5,
        r_choice: RadiusChoice::AmbientDistance,
    };
    let r = localized_star_omega_bound(&traj, &ball).unwrap();
    assert_eq!(r.status, Status::Pass, "{r:?}");
    assert!(r.notes.iter().any(|n| n.contains("window closed")));
    // a ball missing the surface gives zero on both sides
    let far = LocalizationBall {
        y0: vec![0.5, 10.0],
        ..ball
    };
    let r = localized_star_omega_bound(&traj, &far).unwrap();
    assert!(r.series.iter().all(|p| p.value == 0.0 && p.bound == 0.0));
}

#[test]
fn curvature_growth_on_circle_and_random_graph() {
    let traj = bracketed_run(circle(1.0, 128).unwrap().into(), 0.05);
    let r = curvature_growth(&traj).unwrap();
    assert_eq!(r.status, Status::Pass);
    // LHS is d/dt (1/R²) = 2/R⁴ and the bound is 10/R⁴
    let p = r.series[0];
    let r4 = (1.0 - 2.0 * p.t).powi(2);
    assert!((p.value * r4 / 2.0 - 1.0).abs() < 1e-2, "{}", p.value);
    assert!((p.bound * r4 / 10.0 - 1.0).abs() < 1e-2, "{}", p.bound);

    let traj = bracketed_run(random_fourier(2, 1, 32, 2, 0.2, 3).unwrap().into(), 0.005);
    assert_eq!(curvature_growth(&traj).unwrap().status, Status::Pass);
}

#[test]
fn curvature_scaling_on_smooth_data_vanishes_at_small_times() {
    let traj = recorded_run(
        circle(1.0, 128).unwrap().into(),
        0.05,
        &[1e-4, 1e-3, 1e-2],
        false,
    );
    let ball = LocalizationBall {
        y0: vec![1.0, 0.0],
        radius: 0.5,
        theta: 0.5,
        r_choice: RadiusChoice::AmbientDistance,
    };
    let r = curvature_scaling(&traj, &ball, &ScalingWeight::BaseStarOmega, None).unwrap();
    assert!(r.fitted_constant.unwrap().is_finite());
    let first = r.series[0];
    assert!((first.t - 1e-4).abs() < 1e-15);
    // s(t) ≈ |A|² t (1−θ)² / sup P⁻⁴ grows from zero
    assert!(first.value < r.series[2].value);

    let plane = LocalizationBall {
        r_choice: RadiusChoice::PlaneProjection,
        ..ball.clone()
    };
    let r = curvature_scaling(&traj, &plane, &ScalingWeight::BaseStarOmega, None).unwrap();
    assert!(r.fitted_constant.unwrap().is_finite());

    let tiny = LocalizationBall {
        y0: vec![5.0, 5.0],
        ..ball
    };
    assert!(matches!(
        curvature_scaling(&traj, &tiny, &ScalingWeight::BaseStarOmega, None),
        Err(Error::WindowClosed(_))
    ));
}

fn curve_pipeline(
    state: &State,
    r0: f64,
) -> (
    graphflow_core::AveragedForm,
    graphflow_core::ConstantPipeline,
) {
    let samples = SurfaceSamples::from_surface(state).unwrap();
    let form = select_centers(&samples, r0, CutoffProfile::default()).unwrap();
    let bounds = form.local_bounds(&samples);
    let pipeline = compute_constants(1, state.codim(), r0, &bounds, EpsilonRule::HalfGap).unwrap();
    (form, pipeline)
}

#[test]
fn barrier_on_flat_data_and_gentle_corner() {
    let lat = Lattice::periodic(vec![64], &[2.0]).unwrap();
    let flat: State = GraphGrid::new(lat, vec![vec![0.0; 64]], 0.0)
        .unwrap()
        .into();
    let (form, pipeline) = curve_pipeline(&flat, 0.8);
    let traj = recorded_run(flat, 1e-3, &[], false);
    let r = averaged_form_barrier(&traj, &form, &pipeline).unwrap();
    assert_eq!(r.status, Status::Pass);
    assert!(r.series.iter().all(|p| (p.value - 1.0).abs() < 1e-12));

    let gentle: State = mollify(&corner_graph(1, 1, 0.25, 128, 2).unwrap(), 0.05)
        .unwrap()
        .into();
    let (form, pipeline) = curve_pipeline(&gentle, 0.8);
    let times: Vec<f64> = (1..=4).map(|k| k as f64 * pipeline.t1 / 4.0).collect();
    let mut cfg = FlowConfig::new(pipeline.t1);
    cfg.record_times = times;
    cfg.dt = Some(pipeline.t1 / 8.0);
    cfg.diagnostics = vec!["min_star_omega".into()];
    let traj = run(gentle, &cfg).unwrap().trajectory;
    let r = averaged_form_barrier(&traj, &form, &pipeline).unwrap();
    assert_eq!(r.status, Status::Pass, "{r:?}");
    assert!(r.extras["min_ratio"] > 5.0);
}

#[test]
fn barrier_refuses_data_failing_the_k_condition() {
    let steep: State = corner_graph(1, 1, 0.75, 128, 2).unwrap().into();
    let (form, pipeline) = curve_pipeline(&steep, 0.8);
    let traj = recorded_run(steep, 1e-4, &[], false);
    assert!(matches!(
        averaged_form_barrier(&traj, &form, &pipeline),
        Err(Error::PreconditionLost(_))
    ));
}
