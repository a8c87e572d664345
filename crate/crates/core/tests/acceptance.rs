//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the test
//! harness so the lines are printed under a plain `cargo test`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::convergence;
use graphflow_core::estimates::{
    averaged_form_barrier, curvature_scaling, residual_plane_distance, residual_position_norm,
    residual_star_omega, residual_star_omega_sv, star_omega_monotonicity, tubular_check,
    LocalizationBall, RadiusChoice, ScalingWeight,
};
use graphflow_core::flow::{run, FlowConfig, State, Trajectory};
use graphflow_core::forms::{
    compute_constants, select_centers, CutoffProfile, EpsilonRule, SurfaceSamples,
};
use graphflow_core::geometry::sample_all;
use graphflow_core::initdata::{
    circle, corner_graph, lawson_osserman, lawson_osserman_jacobian, mollify, perturbed_circle,
    random_fourier, sphere,
};
use graphflow_core::{ConstantNForm, Error, Status, Surface};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn completed_run(init: State, cfg: &FlowConfig) -> Trajectory {
    let result = run(init, cfg).expect("valid flow config");
    assert!(result.completed(), "halted: {:?}", result.halt);
    result.trajectory
}

fn row_at(traj: &Trajectory, t: f64) -> &graphflow_core::flow::SeriesRow {
    traj.series
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .expect("nonempty series")
}

fn exact_solution_fidelity() -> Verdict {
    let start = Instant::now();
    let mut cfg = FlowConfig::new(0.375);
    cfg.cfl_safety = 0.5;
    cfg.record_times = (1..=15).map(|k| 0.025 * k as f64).collect();
    cfg.diagnostics = vec!["max_H".into()];
    let traj = completed_run(circle(1.0, 256).unwrap().into(), &cfg);
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for snap in &traj.snapshots {
        let state = &snap.state;
        let exact = (1.0 - 2.0 * state.time()).sqrt();
        for i in 0..state.len() {
            let r = state.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max((r / exact - 1.0).abs());
        }
    }
    let t_last = traj.last().unwrap().time();
    Verdict::new(
        worst <= 1e-3 && elapsed <= Duration::from_secs(10) && (t_last - 0.375).abs() < 1e-12,
        format!(
            "max relative radius error {worst:.2e} to t = {t_last}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn wobbly_circle(points: usize) -> State {
    perturbed_circle(points, 3, 0.05, 17).unwrap().into()
}

fn wavy_graph(points: usize) -> State {
    random_fourier(2, 2, points, 2, 0.15, 5).unwrap().into()
}

fn identity_convergence() -> Verdict {
    let start = Instant::now();
    let levels = [64, 128, 256];
    let plane = [DVector::from_vec(vec![1.0, 0.0])];
    let curve_form = ConstantNForm::base(1, 2);
    let surface_form = ConstantNForm::base(2, 4);
    let studies = [
        convergence("star_omega curve", &levels, 0.01, wobbly_circle, |t| {
            residual_star_omega(t, &curve_form).unwrap()
        }),
        convergence("star_omega surface", &levels, 0.002, wavy_graph, |t| {
            residual_star_omega(t, &surface_form).unwrap()
        }),
        convergence("position_norm", &levels, 0.01, wobbly_circle, |t| {
            residual_position_norm(t).unwrap()
        }),
        convergence("plane_distance", &levels, 0.01, wobbly_circle, |t| {
            residual_plane_distance(t, &plane).unwrap()
        }),
    ];
    let traj = common::bracketed_run(wavy_graph(64), 0.002);
    let sv = residual_star_omega_sv(&traj).unwrap();
    let gap = sv.extras["algebraic_max_relative_gap"];
    let elapsed = start.elapsed();
    let mut passed = studies.iter().all(|s| s.passed);
    passed &= sv.status == Status::Pass && gap <= 1e-8;
    passed &= elapsed <= Duration::from_secs(120);
    let orders: Vec<String> = studies
        .iter()
        .map(|s| format!("{} {:.2}", s.identity, s.order.unwrap_or(f64::NAN)))
        .collect();
    Verdict::new(
        passed,
        format!(
            "orders [{}]; singular-value gap {gap:.1e} with {} ties; {:.1} s",
            orders.join(", "),
            sv.extras["tie_points"],
            elapsed.as_secs_f64()
        ),
    )
}

fn tubular_containment() -> Verdict {
    let mut cfg = FlowConfig::new(0.375);
    cfg.record_times = (1..=15).map(|k| 0.025 * k as f64).collect();
    let circle_report =
        tubular_check(&completed_run(circle(1.0, 256).unwrap().into(), &cfg)).unwrap();
    let mut cfg = FlowConfig::new(0.1);
    cfg.record_times = (1..=4).map(|k| 0.025 * k as f64).collect();
    let sphere_report =
        tubular_check(&completed_run(sphere(1.0, 32).unwrap().into(), &cfg)).unwrap();
    let reports = [circle_report, sphere_report];
    let violations: usize = reports.iter().map(|r| r.violation_count).sum();
    let min_margin = reports
        .iter()
        .flat_map(|r| r.series.iter().map(|p| p.margin))
        .fold(f64::INFINITY, f64::min);
    Verdict::new(
        violations == 0 && reports.iter().all(|r| r.status == Status::Pass),
        format!("{violations} violations on circle and sphere, smallest margin {min_margin:.3e}"),
    )
}

/// Corner runs shared by the monotonicity and smoothing criteria.
struct CornerRun {
    label: String,
    trajectory: Trajectory,
    elapsed: Duration,
}

const CORNER_CASES: [(usize, usize, f64); 4] =
    [(1, 1, 0.75), (1, 2, 0.75), (2, 1, 0.75), (2, 2, 0.5)];

fn corner_runs() -> Vec<CornerRun> {
    CORNER_CASES
        .iter()
        .map(|&(n, m, slope)| {
            let start = Instant::now();
            let g = corner_graph(n, m, slope, 128, 1).unwrap();
            let mut cfg = FlowConfig::new(0.1);
            cfg.record_times = (0..=12)
                .map(|k| 1e-4 * 10f64.powf(k as f64 / 4.0))
                .collect();
            cfg.stencil = true;
            cfg.diagnostics = vec!["min_star_omega".into(), "max_A2".into()];
            let trajectory = completed_run(g.into(), &cfg);
            CornerRun {
                label: format!("n={n} m={m}"),
                trajectory,
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

fn monotonicity(runs: &[CornerRun]) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for run in runs {
        let r = star_omega_monotonicity(&run.trajectory).unwrap();
        let initial = r.extras["min_star_omega_initial"];
        passed &= r.status == Status::Pass && r.violation_count == 0;
        passed &= (initial - 0.8).abs() < 1e-9;
        parts.push(format!(
            "{}: {} violations, min *Ω {:.4} -> {:.4}",
            run.label, r.violation_count, initial, r.extras["min_star_omega_final"]
        ));
    }
    Verdict::new(passed, parts.join("; "))
}

fn kink_ball(traj: &Trajectory) -> LocalizationBall {
    let initial = traj.initial().unwrap();
    let samples = sample_all(initial).unwrap();
    let peak = (0..samples.len())
        .max_by(|&a, &b| samples[a].a_norm2().total_cmp(&samples[b].a_norm2()))
        .unwrap();
    LocalizationBall {
        y0: initial.point(peak),
        radius: 1.2,
        theta: 0.5,
        r_choice: RadiusChoice::AmbientDistance,
    }
}

fn smoothing_scaling(runs: &[CornerRun]) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    let mut total = Duration::ZERO;
    for run in runs {
        let start = Instant::now();
        let ball = kink_ball(&run.trajectory);
        let r = curvature_scaling(
            &run.trajectory,
            &ball,
            &ScalingWeight::BaseStarOmega,
            Some((1e-4, 1e-1)),
        )
        .unwrap();
        total += run.elapsed + start.elapsed();
        let slope = r.extras.get("a2_slope").copied().unwrap_or(f64::NAN);
        let c0 = r.fitted_constant.unwrap_or(f64::NAN);
        passed &= (-1.1..=-0.9).contains(&slope) && c0.is_finite();
        parts.push(format!("{}: slope {slope:.3}, c0 {c0:.3e}", run.label));
    }
    passed &= total <= Duration::from_secs(300);
    Verdict::new(
        passed,
        format!("{}; {:.1} s", parts.join("; "), total.as_secs_f64()),
    )
}

fn averaged_form_pipeline() -> Verdict {
    let gentle: State = mollify(&corner_graph(1, 1, 0.25, 128, 2).unwrap(), 0.05)
        .unwrap()
        .into();
    let r0 = 0.8;
    let samples = SurfaceSamples::from_surface(&gentle).unwrap();
    let form = select_centers(&samples, r0, CutoffProfile::default()).unwrap();
    let bounds = form.local_bounds(&samples);
    let pipeline = compute_constants(1, 1, r0, &bounds, EpsilonRule::HalfGap).unwrap();
    let k_check = form.check_k_condition(&samples, pipeline.k).unwrap();
    let probe = form.probe_partition(&samples, 2000, 7).unwrap();

    let mut cfg = FlowConfig::new(pipeline.t1);
    cfg.record_times = (1..=4).map(|k| k as f64 * pipeline.t1 / 4.0).collect();
    cfg.dt = Some(pipeline.t1 / 8.0);
    cfg.diagnostics = vec!["min_star_omega".into()];
    let traj = completed_run(gentle, &cfg);
    let barrier = averaged_form_barrier(&traj, &form, &pipeline).unwrap();
    let min_ratio = barrier.extras["min_ratio"];

    let passed = k_check.passed
        && probe.max_sum_defect <= 1e-10
        && probe.max_dp <= probe.dp_bound
        && probe.max_d2p <= probe.d2p_bound
        && barrier.status == Status::Pass
        && barrier.violation_count == 0
        && min_ratio > 5.0;
    Verdict::new(
        passed,
        format!(
            "K = {:.3} (data min {:.4}); partition defect {:.1e}; |Dp| {:.2e} ≤ {:.2e}; |D²p| {:.2e} ≤ {:.2e}; barrier {} violations through t1 = {:.2e}, min ratio {:.1}",
            pipeline.k,
            k_check.min_star_omega,
            probe.max_sum_defect,
            probe.max_dp,
            probe.dp_bound,
            probe.max_d2p,
            probe.d2p_bound,
            barrier.violation_count,
            pipeline.t1,
            min_ratio
        ),
    )
}

/// `*Ω` of the base 4-plane on the graph of a map with differential `df`.
fn graph_star_omega(df: &DMatrix<f64>) -> f64 {
    let n = df.ncols();
    let g = DMatrix::identity(n, n) + df.transpose() * df;
    1.0 / g.determinant().sqrt()
}

fn lawson_osserman_sharpness() -> Verdict {
    let r0 = 1.5;
    let grid = lawson_osserman(12, 2.0).unwrap();
    let samples = SurfaceSamples::from_surface(&grid).unwrap();
    let form = select_centers(&samples, r0, CutoffProfile::default()).unwrap();
    let pipeline =
        compute_constants(4, 3, r0, &form.local_bounds(&samples), EpsilonRule::HalfGap).unwrap();
    let k_check = form.check_k_condition(&samples, pipeline.k).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ray_gap: f64 = 0.0;
    for _ in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = graph_star_omega(&lawson_osserman_jacobian(&x));
        for scale in [1e-3, 0.1, 0.5, 3.0, 1e3] {
            let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
            ray_gap = ray_gap.max((graph_star_omega(&lawson_osserman_jacobian(&y)) - base).abs());
        }
    }

    let mut cfg = FlowConfig::new(0.01);
    cfg.record_every = 20;
    let flow = match run(grid.into(), &cfg) {
        Ok(result) => match &result.halt {
            None => Ok(format!(
                "flow completed to t = {}",
                result.trajectory.last().unwrap().time()
            )),
            Some(e @ (Error::SingularMetric { .. } | Error::NonFinite { .. })) => {
                Ok(format!("flow halted cleanly: {e}"))
            }
            Some(e) => Err(format!("unexpected halt: {e}")),
        },
        Err(e) => Err(format!("flow refused: {e}")),
    };
    let passed = !k_check.passed && ray_gap <= 1e-8 && flow.is_ok();
    Verdict::new(
        passed,
        format!(
            "K(4,3) = {:.3}, data min *Ω_L {:.3} (condition {}); ray gap {ray_gap:.1e}; {}",
            pipeline.k,
            k_check.min_star_omega,
            if k_check.passed { "holds" } else { "fails" },
            flow.unwrap_or_else(|e| e)
        ),
    )
}

fn approximation_stability() -> Verdict {
    let raw = corner_graph(1, 1, 0.75, 128, 1).unwrap();
    let h = raw.lattice.min_spacing();
    let mut cfg = FlowConfig::new(0.01);
    cfg.record_times = vec![0.001, 0.005, 0.01];
    cfg.diagnostics = vec!["min_star_omega".into()];
    let series: Vec<Trajectory> = [2.0, 4.0]
        .iter()
        .map(|k| completed_run(mollify(&raw, k * h).unwrap().into(), &cfg))
        .collect();
    let diff =
        (row_at(&series[0], 0.01).min_star_omega - row_at(&series[1], 0.01).min_star_omega).abs();
    let worst = cfg
        .record_times
        .iter()
        .map(|&t| {
            (row_at(&series[0], t).min_star_omega - row_at(&series[1], t).min_star_omega).abs()
        })
        .fold(0.0, f64::max);
    Verdict::new(
        diff <= 5e-2,
        format!(
            "min *Ω difference {diff:.2e} at t = 0.01 (largest over recorded times {worst:.2e})"
        ),
    )
}

fn evaluate<F: FnOnce() -> Verdict>(check: F) -> Verdict {
    match panic::catch_unwind(AssertUnwindSafe(check)) {
        Ok(v) => v,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::new(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let corner = panic::catch_unwind(corner_runs).map_err(|_| "corner runs panicked");
    let with_corner = |check: fn(&[CornerRun]) -> Verdict| match &corner {
        Ok(runs) => evaluate(|| check(runs)),
        Err(e) => Verdict::new(false, *e),
    };
    let verdicts = [
        ("exact-solution fidelity", evaluate(exact_solution_fidelity)),
        ("identity convergence", evaluate(identity_convergence)),
        ("tubular containment", evaluate(tubular_containment)),
        ("star-omega monotonicity", with_corner(monotonicity)),
        ("smoothing scaling", with_corner(smoothing_scaling)),
        ("averaged-form pipeline", evaluate(averaged_form_pipeline)),
        (
            "Lawson-Osserman sharpness",
            evaluate(lawson_osserman_sharpness),
        ),
        ("approximation stability", evaluate(approximation_stability)),
    ];
    let mut failures = 0;
    for (k, (name, v)) in verdicts.iter().enumerate() {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} {name}: {}", k + 1, v.detail);
        failures += usize::from(!v.passed);
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        verdicts.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
