//! Admission testing: is a rate vector achievable under per-user energy
//! budgets? Plus boundary tracing of two-user capacity regions.

use crate::error::{Error, Result};
use crate::hull::{down_closure, mix, nearest_point, timeshare_lp};
use crate::model::{ChannelSet, CovariancePlan};
use crate::ratecalc::{order_totals, rate_allocation, WeightVector};
use crate::solvers::{
    cluster_orderings, max_rmac_warm, norm, Flag, SolveReport, SolverKind, SolverOptions, WarmStart,
};

/// How the weights for the next boundary solve are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    /// Normal of the hyperplane separating the target from the hull of the
    /// cached vertices.
    Separating,
    /// Multiplicative boost of the users the last boundary vertex leaves
    /// short, `θ_u ← θ_u (1 + η·shortfall_u / b_u)`.
    Deficit,
}

#[derive(Debug, Clone)]
pub struct AdmOptions {
    pub solver: SolverOptions,
    pub max_rounds: usize,
    pub rule: WeightRule,
    /// Initial step of the multiplicative weight update.
    pub eta: f64,
    pub fw_tol: f64,
}

impl Default for AdmOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            max_rounds: 100,
            rule: WeightRule::Separating,
            eta: 0.5,
            fw_tol: 1e-6,
        }
    }
}

/// Shortfall accepted on feasible verdicts; achieved rates stay within 1e-6
/// of the target.
const RATE_SLACK: f64 = 5e-7;

enum Verdict {
    Decided(SolveReport),
    /// Undecided; carries a direction separating the target from the
    /// cached hull when one is known.
    Open(Option<Vec<f64>>),
    /// Within the hull tolerance of the cached hull but not inside it, and
    /// within `ε` of every cached hyperplane.
    Marginal(Option<Vec<f64>>),
}
const DEDUP_TOL: f64 = 1e-9;
/// Boundary solves spent on a target that stays marginal before giving up.
const MARGINAL_ROUNDS: usize = 2;

#[derive(Debug, Clone)]
struct Vertex {
    rates: Vec<f64>,
    order: Vec<usize>,
    plan: usize,
}

#[derive(Debug, Clone)]
struct Hyperplane {
    theta: Vec<f64>,
    /// `θᵀ b_v` at the boundary vertex for `θ`.
    level: f64,
    plan: usize,
    rates: Vec<f64>,
}

/// Admission tester with a vertex and hyperplane cache that persists across
/// queries on the same channel and budgets.
#[derive(Debug, Clone)]
pub struct AdmMac<'a> {
    ch: &'a ChannelSet,
    energies: Vec<f64>,
    opts: AdmOptions,
    plans: Vec<CovariancePlan>,
    vertices: Vec<Vertex>,
    hyperplanes: Vec<Hyperplane>,
    warm: WarmStart,
    solves: usize,
}

impl<'a> AdmMac<'a> {
    pub fn new(ch: &'a ChannelSet, energies: &[f64], opts: AdmOptions) -> Result<Self> {
        let users = ch.num_users();
        if energies.len() != users || energies.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::validation(format!(
                "need {users} positive energy budgets"
            )));
        }
        Ok(Self {
            ch,
            energies: energies.to_vec(),
            opts,
            plans: Vec::new(),
            vertices: Vec::new(),
            hyperplanes: Vec::new(),
            warm: WarmStart::new(ch.num_tones()),
            solves: 0,
        })
    }

    /// Number of weighted-rate maximizations run so far.
    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn cached_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Rate vectors of the cached boundary vertices.
    pub fn vertex_rates(&self) -> Vec<Vec<f64>> {
        self.vertices.iter().map(|v| v.rates.clone()).collect()
    }

    /// Solves the weighted-rate problem at `theta` and caches its vertices
    /// and supporting hyperplane.
    pub fn boundary(&mut self, theta: &WeightVector) -> Result<SolveReport> {
        let report = max_rmac_warm(
            self.ch,
            &self.energies,
            theta,
            &self.opts.solver,
            &mut self.warm,
        )?;
        self.solves += 1;
        self.absorb(&report)?;
        Ok(report)
    }

    fn absorb(&mut self, report: &SolveReport) -> Result<()> {
        let plan = self.plans.len();
        self.plans.push(report.plan().clone());
        self.hyperplanes.push(Hyperplane {
            theta: report.theta.clone(),
            level: report.objective,
            plan,
            rates: report.rates.clone(),
        });
        let s = &self.opts.solver;
        let orders = cluster_orderings(&report.theta, s.cluster_tol, s.max_orderings, s.seed);
        let totals = order_totals(self.ch, &self.plans[plan], &orders)?;
        for (order, rates) in orders.into_iter().zip(totals) {
            let dup = self.vertices.iter().any(|v| {
                v.rates
                    .iter()
                    .zip(&rates)
                    .all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
            });
            if !dup {
                self.vertices.push(Vertex { rates, order, plan });
            }
        }
        Ok(())
    }

    /// Decides whether `b` is achievable.
    pub fn test(&mut self, b: &[f64]) -> Result<SolveReport> {
        let users = self.ch.num_users();
        if b.len() != users || b.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::validation(format!(
                "need {users} finite nonnegative rate targets"
            )));
        }
        if b.iter().all(|&x| x == 0.0) {
            let plan = CovariancePlan::zeros(self.ch);
            let alloc = rate_allocation(self.ch, &plan, &(0..users).collect::<Vec<_>>())?;
            return Ok(self.finish(
                SolveReport::single(SolverKind::AdmMac, Flag::SingleOrder, plan, alloc),
                0,
            ));
        }
        let eps = 1e-6 * (1.0 + norm(b));
        let mut theta = vec![1.0; users];
        let mut eta = self.opts.eta;
        let mut pattern: Option<Vec<bool>> = None;
        let mut gap = vec![0.0; users];
        let mut marginal = 0;

        for round in 0..=self.opts.max_rounds {
            let normal = match self.decide(b, eps, round)? {
                Verdict::Decided(r) => return Ok(r),
                Verdict::Open(normal) => {
                    marginal = 0;
                    normal
                }
                Verdict::Marginal(normal) => {
                    marginal += 1;
                    if marginal > MARGINAL_ROUNDS {
                        return Err(Error::Undecided { rounds: round, gap });
                    }
                    normal
                }
            };
            if round == self.opts.max_rounds {
                break;
            }
            // The deficit update below is the fallback when no separating
            // direction is known.
            if let (WeightRule::Separating, Some(n)) = (self.opts.rule, normal) {
                theta = n;
            }
            let report = self.boundary(&WeightVector::new(theta.clone())?)?;
            log::trace!("round {round}: weights {theta:?} vertex {:?}", report.rates);
            let bv = &report.rates;
            for u in 0..users {
                gap[u] = bv[u] - b[u];
            }
            let deficit: Vec<bool> = (0..users).map(|u| gap[u] < 0.0).collect();
            if pattern.as_ref().is_some_and(|p| *p != deficit) {
                eta *= 0.5;
            }
            pattern = Some(deficit);
            for u in 0..users {
                let short = (-gap[u]).max(0.0) / b[u].max(eps);
                theta[u] *= 1.0 + eta * short;
            }
            let top = theta.iter().copied().fold(0.0, f64::max);
            theta.iter_mut().for_each(|t| *t /= top);
        }
        Err(Error::Undecided {
            rounds: self.opts.max_rounds,
            gap,
        })
    }

    /// Verdict from the cache alone, if it has one.
    fn decide(&self, b: &[f64], eps: f64, rounds: usize) -> Result<Verdict> {
        if let Some(v) = self
            .vertices
            .iter()
            .find(|v| v.rates.iter().zip(b).all(|(r, t)| *r >= t - RATE_SLACK))
        {
            let plan = self.plans[v.plan].clone();
            let alloc = rate_allocation(self.ch, &plan, &v.order)?;
            let mut r = SolveReport::single(SolverKind::AdmMac, Flag::SingleOrder, plan, alloc);
            r.theta = self.hyperplanes[v.plan].theta.clone();
            return Ok(Verdict::Decided(self.finish(r, rounds)));
        }
        if let Some(h) = self
            .hyperplanes
            .iter()
            .find(|h| h.theta.iter().zip(b).map(|(t, x)| t * x).sum::<f64>() > h.level + eps)
        {
            let plan = self.plans[h.plan].clone();
            let order = crate::ratecalc::greedy_order(&WeightVector::new(h.theta.clone())?);
            let alloc = rate_allocation(self.ch, &plan, &order)?;
            debug_assert!(alloc
                .totals
                .iter()
                .zip(&h.rates)
                .all(|(a, b)| (a - b).abs() < 1e-9));
            let mut r = SolveReport::single(SolverKind::AdmMac, Flag::Infeasible, plan, alloc);
            r.theta = h.theta.clone();
            return Ok(Verdict::Decided(self.finish(r, rounds)));
        }
        if self.vertices.is_empty() {
            return Ok(Verdict::Open(None));
        }
        let rates: Vec<Vec<f64>> = self.vertices.iter().map(|v| v.rates.clone()).collect();
        let relaxed: Vec<f64> = b.iter().map(|&x| (x - RATE_SLACK).max(0.0)).collect();
        if let Some(alpha) = timeshare_lp(&rates, &relaxed)? {
            return Ok(Verdict::Decided(self.timeshare(&alpha, rounds)?));
        }
        let closure = down_closure(&rates);
        let (weights, distance) = nearest_point(&closure, b)?;
        // `b − x` at the nearest point `x` is the normal of the supporting
        // hyperplane closest to `b`; the hull is down-closed, so only its
        // positive part matters.
        let x = mix(&closure, &weights);
        let n: Vec<f64> = b.iter().zip(&x).map(|(t, y)| (t - y).max(0.0)).collect();
        let top = n.iter().copied().fold(0.0, f64::max);
        let normal = (top > 0.0).then(|| n.iter().map(|v| v / top).collect());
        Ok(if distance <= self.opts.fw_tol * (1.0 + norm(b)) {
            Verdict::Marginal(normal)
        } else {
            Verdict::Open(normal)
        })
    }

    /// Time-sharing report over the cached vertices with fractions `alpha`.
    fn timeshare(&self, alpha: &[f64], rounds: usize) -> Result<SolveReport> {
        let used: Vec<usize> = (0..alpha.len()).filter(|&k| alpha[k] > 0.0).collect();
        let mut plan_ids: Vec<usize> = Vec::new();
        for &k in &used {
            if !plan_ids.contains(&self.vertices[k].plan) {
                plan_ids.push(self.vertices[k].plan);
            }
        }
        let plans: Vec<CovariancePlan> = plan_ids.iter().map(|&p| self.plans[p].clone()).collect();
        let mut allocations = Vec::with_capacity(used.len());
        let mut allocation_plan = Vec::with_capacity(used.len());
        for &k in &used {
            let v = &self.vertices[k];
            let pi = plan_ids.iter().position(|&p| p == v.plan).unwrap();
            allocations.push(rate_allocation(self.ch, &plans[pi], &v.order)?);
            allocation_plan.push(pi);
        }
        let total: f64 = used.iter().map(|&k| alpha[k]).sum();
        let flag = if used.len() == 1 {
            Flag::SingleOrder
        } else {
            Flag::TimeSharing
        };
        let mut r = SolveReport::single(
            SolverKind::AdmMac,
            flag,
            plans[0].clone(),
            allocations[0].clone(),
        );
        r.plans = plans;
        r.allocations = allocations;
        r.allocation_plan = allocation_plan;
        r.alpha = used.iter().map(|&k| alpha[k] / total).collect();
        Ok(self.finish(r, rounds))
    }

    fn finish(&self, mut r: SolveReport, rounds: usize) -> SolveReport {
        r.mix();
        r.objective = r.rates.iter().sum();
        r.outer_iterations = rounds;
        if r.theta.is_empty() {
            r.theta = vec![0.0; self.ch.num_users()];
        }
        r
    }
}

/// Decides whether the rate vector `b` is achievable under budgets `E`.
pub fn adm_mac(
    ch: &ChannelSet,
    b: &[f64],
    energies: &[f64],
    opts: &AdmOptions,
) -> Result<SolveReport> {
    AdmMac::new(ch, energies, opts.clone())?.test(b)
}

#[derive(Debug, Clone)]
pub struct RegionTrace {
    /// `(b1, b2)` boundary points, `b1` ascending.
    pub points: Vec<(f64, f64)>,
    /// SIC corners of the sum-rate face: user 2 decoded last, then user 1.
    pub corners: [(f64, f64); 2],
    /// Traced boundary `b2` at the `b1` of each corner.
    pub corner_boundary: [f64; 2],
    /// Probes the admission test could not decide (counted as infeasible).
    pub undecided: usize,
    pub solves: usize,
}

/// Bisection bracket width on `b2`, in bits.
pub const TRACE_TOL: f64 = 1e-3;
/// Weight offset used to pick each SIC corner.
pub const CORNER_OFFSET: f64 = 1e-3;

/// Traces the boundary of a two-user capacity region: for each `b1` on a
/// uniform grid up to user 1's single-user maximum, bisects on `b2` with the
/// admission test.
pub fn trace_region_2user(
    ch: &ChannelSet,
    energies: &[f64],
    grid_points: usize,
    opts: &AdmOptions,
) -> Result<RegionTrace> {
    if ch.num_users() != 2 {
        return Err(Error::validation(format!(
            "region tracing needs 2 users, channel has {}",
            ch.num_users()
        )));
    }
    if grid_points < 2 {
        return Err(Error::validation("need at least 2 grid points"));
    }
    let mut adm = AdmMac::new(ch, energies, opts.clone())?;
    let c1 = adm.boundary(&WeightVector::new(vec![1.0, 0.0])?)?.rates[0];
    let c2 = adm.boundary(&WeightVector::new(vec![0.0, 1.0])?)?.rates[1];
    let upper = adm
        .boundary(&WeightVector::new(vec![1.0, 1.0 + CORNER_OFFSET])?)?
        .rates;
    let lower = adm
        .boundary(&WeightVector::new(vec![1.0 + CORNER_OFFSET, 1.0])?)?
        .rates;

    let mut undecided = 0;
    let top = c2 * (1.0 + 1e-3) + TRACE_TOL;
    let mut bisect = |b1: f64, mut hi: f64| -> Result<f64> {
        let mut lo = 0.0;
        while hi - lo > TRACE_TOL {
            let mid = 0.5 * (lo + hi);
            let feasible = match adm.test(&[b1, mid]) {
                Ok(r) => r.flag.is_feasible(),
                Err(Error::Undecided { .. }) => {
                    undecided += 1;
                    false
                }
                Err(e) => return Err(e),
            };
            if feasible {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let mut points = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let b1 = c1 * i as f64 / (grid_points - 1) as f64;
        points.push((b1, bisect(b1, top)?));
    }
    let corner_boundary = [bisect(upper[0], top)?, bisect(lower[0], top)?];
    Ok(RegionTrace {
        points,
        corners: [(upper[0], upper[1]), (lower[0], lower[1])],
        corner_boundary,
        undecided,
        solves: adm.solves(),
    })
}
