use super::{check_len, sweep, Flag, SolveReport, SolverKind, SolverOptions, Sweep, WarmStart};
use crate::error::{Error, Result};
use crate::model::ChannelSet;
use crate::ratecalc::{greedy_order, rate_allocation, weighted_sum, WeightVector};

const MAX_EXPANSIONS: usize = 60;
const ENERGY_TOL: f64 = 1e-4;
const LOG_WIDTH_TOL: f64 = 1e-10;
const MONOTONE_TOL: f64 = 1e-6;

struct Prober<'a> {
    ch: &'a ChannelSet,
    theta: &'a WeightVector,
    opts: &'a SolverOptions,
    warm: WarmStart,
    seen: Vec<(f64, f64)>,
}

impl Prober<'_> {
    /// Solves every tone with the common price `lambda`; zero-weight users
    /// are switched off.
    fn probe(&mut self, lambda: f64) -> Result<(Sweep, f64)> {
        let w = vec![lambda; self.ch.num_users()];
        let sw = sweep(self.ch, self.theta, &w, &mut self.warm, self.opts)?;
        let total: f64 = (0..w.len())
            .filter(|&u| self.theta.values()[u] > 0.0)
            .map(|u| sw.energies[u])
            .sum();
        for &(l, e) in &self.seen {
            let slack = MONOTONE_TOL * e.max(total);
            if (l < lambda && e < total - slack) || (l > lambda && e > total + slack) {
                return Err(Error::NonMonotone(format!(
                    "energy {e} at price {l} vs {total} at price {lambda}"
                )));
            }
        }
        self.seen.push((lambda, total));
        Ok((sw, total))
    }
}

/// Maximizes `Σ_u θ_u b_u` subject to a single energy budget shared by all
/// users, by bisection on the common energy price.
pub fn max_resmac(
    ch: &ChannelSet,
    total: f64,
    theta: &WeightVector,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let users = ch.num_users();
    check_len("total energy", &[total], 1)?;
    if total <= 0.0 {
        return Err(Error::validation("total energy must be positive"));
    }
    if theta.len() != users {
        return Err(Error::validation(format!(
            "{} weights for {users} users",
            theta.len()
        )));
    }
    if theta.max() <= 0.0 {
        return Err(Error::validation("at least one weight must be positive"));
    }
    let mut p = Prober {
        ch,
        theta,
        opts,
        warm: WarmStart::new(ch.num_tones()),
        seen: Vec::new(),
    };

    let mut expansions = 0;
    let mut lo = 1e-8;
    while p.probe(lo)?.1 < total {
        if expansions == MAX_EXPANSIONS {
            return Err(Error::BracketExpansion(expansions));
        }
        lo /= 10.0;
        expansions += 1;
    }
    let mut hi = 10.0;
    while p.probe(hi)?.1 > total {
        if expansions == MAX_EXPANSIONS {
            return Err(Error::BracketExpansion(expansions));
        }
        hi *= 10.0;
        expansions += 1;
    }

    let mut trace = Vec::new();
    let (sw, lambda) = loop {
        let lambda = (lo * hi).sqrt();
        let (sw, used) = p.probe(lambda)?;
        let rel = (used - total).abs() / total;
        trace.push(rel);
        if rel <= ENERGY_TOL || (hi / lo).ln() <= LOG_WIDTH_TOL {
            break (sw, lambda);
        }
        if used > total {
            lo = lambda;
        } else {
            hi = lambda;
        }
    };

    let mut plan = sw.plan(ch);
    for u in 0..users {
        if theta.values()[u] == 0.0 {
            plan.scale_user(u, 0.0);
        }
    }
    let used: f64 = plan.energies().iter().sum();
    if used > 0.0 {
        plan = plan.scaled(total / used);
    }
    let alloc = rate_allocation(ch, &plan, &greedy_order(theta))?;
    let mut report = SolveReport::single(SolverKind::MaxResmac, Flag::SingleOrder, plan, alloc);
    report.objective = weighted_sum(theta.values(), &report.rates);
    report.w = vec![lambda; users];
    report.lambda = Some(lambda);
    report.theta = theta.values().to_vec();
    report.outer_iterations = trace.len();
    report.trace = trace;
    Ok(report)
}
