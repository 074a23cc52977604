use super::{
    check_len, norm, sweep, DualBall, Flag, SolveReport, SolverKind, SolverOptions, Sweep,
    WarmStart,
};
use crate::ellipsoid::{cut_below, ellipsoid_step, stop_metric};
use crate::error::{Error, Result};
use crate::model::ChannelSet;
use crate::ratecalc::{greedy_order, rate_allocation, weighted_sum, WeightVector};
use crate::tonesolver::W_FLOOR;

/// Price given to zero-weight users inside the tone problems. Such users
/// earn nothing, so any positive price drives their covariance to zero.
const IDLE_PRICE: f64 = 1.0;

/// Maximizes `Σ_u θ_u b_u` subject to `Σ_n tr R[n][u] ≤ E_u`.
pub fn max_rmac(
    ch: &ChannelSet,
    energies: &[f64],
    theta: &WeightVector,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    max_rmac_warm(ch, energies, theta, opts, &mut WarmStart::default())
}

/// [`max_rmac`] with caller-held warm-start factors.
pub fn max_rmac_warm(
    ch: &ChannelSet,
    energies: &[f64],
    theta: &WeightVector,
    opts: &SolverOptions,
    warm: &mut WarmStart,
) -> Result<SolveReport> {
    let users = ch.num_users();
    check_len("energy budget", energies, users)?;
    if let Some(u) = energies.iter().position(|&e| e <= 0.0) {
        return Err(Error::validation(format!(
            "energy budget {u} must be positive"
        )));
    }
    if theta.len() != users {
        return Err(Error::validation(format!(
            "{} weights for {users} users",
            theta.len()
        )));
    }
    let tmax = theta.max();
    if tmax <= 0.0 {
        return Err(Error::validation("at least one weight must be positive"));
    }
    let active: Vec<usize> = (0..users).filter(|&u| theta.values()[u] > 0.0).collect();

    let mut ball = DualBall::new(vec![tmax; active.len()], 100.0 * tmax);
    let mut state = ball.state();
    let lower = vec![W_FLOOR; active.len()];
    let eps = opts.outer_tol * norm(energies);
    let mut w = vec![IDLE_PRICE; users];
    let mut trace = Vec::new();
    let mut best: Option<(f64, Sweep, Vec<f64>)> = None;
    let cap = opts.outer_cap(users);

    for it in 0..cap {
        cut_below(&mut state, &lower)?;
        for (i, &u) in active.iter().enumerate() {
            w[u] = state.x[i];
        }
        let sw = sweep(ch, theta, &w, warm, opts)?;
        let g: Vec<f64> = active
            .iter()
            .map(|&u| energies[u] - sw.energies[u])
            .collect();
        let metric = stop_metric(&state, &g);
        trace.push(metric);
        if metric <= eps {
            if let Some(fresh) = ball.grow_if_edge(state.x.as_slice()) {
                state = fresh;
                continue;
            }
            return finish(ch, energies, theta, &sw, &w, trace, it + 1);
        }
        let dual = sw.lagrangian + active.iter().map(|&u| w[u] * energies[u]).sum::<f64>();
        if best.as_ref().is_none_or(|b| dual < b.0) {
            best = Some((dual, sw, w.clone()));
        }
        ellipsoid_step(&mut state, &g)?;
    }
    let (_, sw, w) = best.expect("at least one outer iteration");
    let best = finish(ch, energies, theta, &sw, &w, trace, cap)?;
    Err(Error::NonConvergence {
        iterations: cap,
        best: Box::new(best),
    })
}

fn finish(
    ch: &ChannelSet,
    energies: &[f64],
    theta: &WeightVector,
    sw: &Sweep,
    w: &[f64],
    trace: Vec<f64>,
    iterations: usize,
) -> Result<SolveReport> {
    let mut plan = sw.plan(ch);
    let used = plan.energies();
    let mut prices = w.to_vec();
    for u in 0..ch.num_users() {
        if theta.values()[u] == 0.0 {
            plan.scale_user(u, 0.0);
            prices[u] = 0.0;
        } else if used[u] > 1e-12 * energies[u] {
            plan.scale_user(u, energies[u] / used[u]);
        }
    }
    let alloc = rate_allocation(ch, &plan, &greedy_order(theta))?;
    let mut report = SolveReport::single(SolverKind::MaxRmac, Flag::SingleOrder, plan, alloc);
    report.objective = weighted_sum(theta.values(), &report.rates);
    report.w = prices;
    report.theta = theta.values().to_vec();
    report.trace = trace;
    report.outer_iterations = iterations;
    Ok(report)
}
