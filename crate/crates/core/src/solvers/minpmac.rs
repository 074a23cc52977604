use super::{
    check_len, cluster_orderings, norm, sweep, DualBall, Flag, SolveReport, SolverKind,
    SolverOptions, Sweep, WarmStart,
};
use crate::ellipsoid::{cut_below, ellipsoid_step, stop_metric};
use crate::error::{Error, Result};
use crate::hull::timeshare_lp;
use crate::model::{ChannelSet, CovariancePlan, RateAllocation};
use crate::ratecalc::{greedy_order, order_totals, rate_allocation, WeightVector};

/// Largest common scaling of the dual solution's covariances tried when
/// recovering an exactly feasible primal.
const MAX_REPAIR: f64 = 1.1;
const REPAIR_STEPS: usize = 50;
/// Slack on the time-sharing scale within which a single order is preferred.
const SINGLE_ORDER_SLACK: f64 = 1e-4;
const RATE_SLACK: f64 = 1e-9;
/// Relative slack on energy budgets and the sum-capacity bound.
const BUDGET_SLACK: f64 = 1e-6;

/// Minimizes `Σ_u w_u E_u` subject to per-user rates of at least `b_min`.
pub fn min_pmac(
    ch: &ChannelSet,
    b_min: &[f64],
    w: &[f64],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let users = ch.num_users();
    check_len("rate target", b_min, users)?;
    check_len("energy weights", w, users)?;
    if let Some(u) = b_min.iter().position(|&b| b < 0.0) {
        return Err(Error::validation(format!(
            "rate target {u} must be nonnegative"
        )));
    }
    if let Some(u) = w.iter().position(|&x| x <= 0.0) {
        return Err(Error::validation(format!(
            "energy weight {u} must be positive"
        )));
    }
    if b_min.iter().all(|&b| b == 0.0) {
        let plan = CovariancePlan::zeros(ch);
        let order: Vec<usize> = (0..users).collect();
        let alloc = rate_allocation(ch, &plan, &order)?;
        let mut report = SolveReport::single(SolverKind::MinPmac, Flag::SingleOrder, plan, alloc);
        report.w = w.to_vec();
        report.theta = vec![0.0; users];
        return Ok(report);
    }

    let wmax = w.iter().copied().fold(0.0, f64::max);
    let mut ball = DualBall::new(vec![wmax; users], 100.0 * wmax);
    let mut state = ball.state();
    let lower = vec![0.0; users];
    let eps = opts.outer_tol * norm(b_min);
    let mut warm = WarmStart::new(ch.num_tones());
    let mut trace = Vec::new();
    let mut best: Option<(f64, Sweep, WeightVector)> = None;
    let cap = opts.outer_cap(users);

    for it in 0..cap {
        cut_below(&mut state, &lower)?;
        let theta = WeightVector::new(state.x.as_slice().to_vec())?;
        let sw = sweep(ch, &theta, w, &mut warm, opts)?;
        let g: Vec<f64> = (0..users).map(|u| sw.rates[u] - b_min[u]).collect();
        let metric = stop_metric(&state, &g);
        trace.push(metric);
        if metric <= eps {
            if let Some(fresh) = ball.grow_if_edge(theta.values()) {
                state = fresh;
                continue;
            }
            // A small metric bounds the dual gap but not the distance to the
            // dual optimum; keep cutting until a primal point is recovered.
            let report = recover(ch, b_min, w, &theta, &sw, trace.clone(), it + 1, opts)?;
            if report.flag.is_feasible() {
                return Ok(report);
            }
            log::debug!("min_pmac: recovery failed at iteration {}", it + 1);
        }
        let dual = theta
            .values()
            .iter()
            .zip(b_min)
            .map(|(t, b)| t * b)
            .sum::<f64>()
            - sw.lagrangian;
        if best.as_ref().is_none_or(|b| dual > b.0) {
            best = Some((dual, sw, theta));
        }
        // Minimizing the negated dual: `b* − b_min` is its subgradient.
        ellipsoid_step(&mut state, &g)?;
    }
    let (_, sw, theta) = best.expect("at least one outer iteration");
    let best = recover(ch, b_min, w, &theta, &sw, trace, cap, opts)?;
    Err(Error::NonConvergence {
        iterations: cap,
        best: Box::new(best),
    })
}

/// [`min_pmac`] under per-user energy budgets: flags the targets infeasible
/// when their sum exceeds the sum capacity at `budgets`, or when the
/// minimum-energy solution needs more than some user's budget.
pub fn min_pmac_within(
    ch: &ChannelSet,
    b_min: &[f64],
    w: &[f64],
    budgets: &[f64],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    check_len("energy budget", budgets, ch.num_users())?;
    check_len("rate target", b_min, ch.num_users())?;
    let equal = WeightVector::equal(ch.num_users());
    let sum_capacity = super::max_rmac(ch, budgets, &equal, opts)?;
    let capacity: f64 = sum_capacity.rates.iter().sum();
    if b_min.iter().sum::<f64>() > capacity * (1.0 + BUDGET_SLACK) {
        let mut report = sum_capacity;
        report.solver = SolverKind::MinPmac;
        report.flag = Flag::Infeasible;
        report.objective = w.iter().zip(&report.energies).map(|(a, b)| a * b).sum();
        report.w = w.to_vec();
        return Ok(report);
    }
    let mut report = min_pmac(ch, b_min, w, opts)?;
    if report
        .energies
        .iter()
        .zip(budgets)
        .any(|(e, b)| *e > b * (1.0 + BUDGET_SLACK))
    {
        report.flag = Flag::Infeasible;
    }
    Ok(report)
}

/// Smallest `t` in `[lo, hi]` with `ok(t)`, given `ok(hi)`.
fn min_scale(mut lo: f64, mut hi: f64, mut ok: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    if ok(lo)? {
        return Ok(lo);
    }
    for _ in 0..REPAIR_STEPS {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Rescales each user of `base` so that, under `order`, every rate meets
/// its target with the least energy along the given covariance shapes.
/// Users are fixed from the last decoded back: a user's rate depends only on
/// the users decoded after it.
fn tune(
    ch: &ChannelSet,
    base: &CovariancePlan,
    order: &[usize],
    b_min: &[f64],
) -> Result<Option<CovariancePlan>> {
    let mut plan = base.clone();
    for &u in order.iter().rev() {
        let ok = |s: f64| -> Result<bool> {
            let mut p = plan.clone();
            p.scale_user(u, s);
            Ok(rate_allocation(ch, &p, order)?.totals[u] >= b_min[u] - RATE_SLACK)
        };
        if !ok(MAX_REPAIR)? {
            return Ok(None);
        }
        let s = min_scale(0.0, MAX_REPAIR, ok)?;
        plan.scale_user(u, s);
    }
    Ok(Some(plan))
}

/// Turns the dual solution into a primal one: tries every decoding order
/// the weights allow, and scales the covariances up slightly when the dual
/// iterate falls just short of the targets.
#[allow(clippy::too_many_arguments)]
fn recover(
    ch: &ChannelSet,
    b_min: &[f64],
    w: &[f64],
    theta: &WeightVector,
    sw: &Sweep,
    trace: Vec<f64>,
    iterations: usize,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let base = sw.plan(ch);
    let orders = cluster_orderings(
        theta.values(),
        opts.cluster_tol,
        opts.max_orderings,
        opts.seed,
    );
    let lp_at = |t: f64| -> Result<Option<Vec<f64>>> {
        let vertices = order_totals(ch, &base.scaled(t), &orders)?;
        timeshare_lp(&vertices, b_min)
    };

    let finalize = |mut report: SolveReport| {
        report.mix();
        report.objective = w.iter().zip(&report.energies).map(|(a, b)| a * b).sum();
        report.w = w.to_vec();
        report.theta = theta.values().to_vec();
        report.trace = trace.clone();
        report.outer_iterations = iterations;
        report
    };

    let t_lp = if lp_at(1.0)?.is_some() {
        Some(1.0)
    } else if lp_at(MAX_REPAIR)?.is_none() {
        None
    } else {
        Some(min_scale(1.0, MAX_REPAIR, |t| Ok(lp_at(t)?.is_some()))?)
    };
    let cost = |p: &CovariancePlan| -> f64 { w.iter().zip(p.energies()).map(|(a, b)| a * b).sum() };

    let mut single: Option<(f64, CovariancePlan, usize)> = None;
    for (k, order) in orders.iter().enumerate() {
        if let Some(plan) = tune(ch, &base, order, b_min)? {
            let c = cost(&plan);
            if single.as_ref().is_none_or(|(best, _, _)| c < *best) {
                single = Some((c, plan, k));
            }
        }
    }
    let shared = t_lp.map(|t| t * cost(&base));
    if let Some((c, plan, k)) = single {
        if shared.is_none_or(|s| c <= s * (1.0 + SINGLE_ORDER_SLACK)) {
            let alloc = rate_allocation(ch, &plan, &orders[k])?;
            return Ok(finalize(SolveReport::single(
                SolverKind::MinPmac,
                Flag::SingleOrder,
                plan,
                alloc,
            )));
        }
    }
    let Some(t_lp) = t_lp else {
        let alloc = rate_allocation(ch, &base, &greedy_order(theta))?;
        return Ok(finalize(SolveReport::single(
            SolverKind::MinPmac,
            Flag::Infeasible,
            base,
            alloc,
        )));
    };

    let alpha = lp_at(t_lp)?.expect("feasible at the repair scale");
    let plan = base.scaled(t_lp);
    let kept: Vec<usize> = (0..orders.len()).filter(|&k| alpha[k] > 0.0).collect();
    let total: f64 = kept.iter().map(|&k| alpha[k]).sum();
    let allocations = kept
        .iter()
        .map(|&k| rate_allocation(ch, &plan, &orders[k]))
        .collect::<Result<Vec<RateAllocation>>>()?;
    let mut report = SolveReport::single(
        SolverKind::MinPmac,
        Flag::TimeSharing,
        plan,
        allocations[0].clone(),
    );
    report.allocation_plan = vec![0; kept.len()];
    report.alpha = kept.iter().map(|&k| alpha[k] / total).collect();
    report.allocations = allocations;
    if kept.len() == 1 {
        report.flag = Flag::SingleOrder;
    }
    Ok(finalize(report))
}
