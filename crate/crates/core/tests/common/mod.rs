#![allow(dead_code)]

use graphflow_core::estimates::ConvergenceStudy;
use graphflow_core::flow::{run, FlowConfig, State, Trajectory};
use graphflow_core::{EstimateReport, Surface};

/// Flow to `2 t_rec` with a scheduled snapshot at `t_rec` bracketed by stencil snapshots.
pub fn bracketed_run(init: State, t_rec: f64) -> Trajectory {
    let mut cfg = FlowConfig::new(2.0 * t_rec);
    cfg.record_times = vec![t_rec];
    cfg.stencil = true;
    cfg.diagnostics = vec!["max_A2".into()];
    let result = run(init, &cfg).expect("valid config");
    assert!(result.completed(), "{:?}", result.halt);
    result.trajectory
}

/// Residual of one identity at three or more resolutions and its fitted order.
pub fn convergence<M, R>(
    name: &str,
    levels: &[usize],
    t_rec: f64,
    make: M,
    mut residual: R,
) -> ConvergenceStudy
where
    M: Fn(usize) -> State,
    R: FnMut(&Trajectory) -> EstimateReport,
{
    let mut spacing = Vec::new();
    let mut values = Vec::new();
    for &points in levels {
        let init = make(points);
        spacing.push(init.lattice().min_spacing());
        let traj = bracketed_run(init, t_rec);
        values.push(residual(&traj).max_abs_residual);
    }
    ConvergenceStudy::new(name, spacing, values, 1.7)
}
