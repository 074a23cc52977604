use std::fmt;

use crate::error::{Error, Result};
use crate::model::{ChannelSet, CovariancePlan, RateAllocation};
use crate::ratecalc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Infeasible = 0,
    SingleOrder = 1,
    TimeSharing = 2,
}

impl Flag {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Flag::Infeasible),
            1 => Some(Flag::SingleOrder),
            2 => Some(Flag::TimeSharing),
            _ => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        self != Flag::Infeasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    MaxRmac,
    MinPmac,
    MaxResmac,
    AdmMac,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::MaxRmac => "maxrmac",
            SolverKind::MinPmac => "minpmac",
            SolverKind::MaxResmac => "maxresmac",
            SolverKind::AdmMac => "admmac",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::MaxRmac, Self::MinPmac, Self::MaxResmac, Self::AdmMac]
            .into_iter()
            .find(|k| k.name() == name)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of any solver.
///
/// `allocations[k]` is the rate allocation of ordering `k`, evaluated on
/// `plans[allocation_plan[k]]`, and is used a fraction `alpha[k]` of the
/// time. Single-order results have one allocation with `alpha = [1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub flag: Flag,
    /// Weighted sum rate, weighted energy (for minimum-energy problems) or
    /// sum rate (for admission tests).
    pub objective: f64,
    pub plans: Vec<CovariancePlan>,
    pub allocations: Vec<RateAllocation>,
    pub allocation_plan: Vec<usize>,
    pub alpha: Vec<f64>,
    /// Time-shared per-user rates `Σ_k α_k b_k`.
    pub rates: Vec<f64>,
    /// Time-shared per-user energies.
    pub energies: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Option<f64>,
    /// Stop metric per outer iteration.
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
}

impl SolveReport {
    /// Single plan, single ordering.
    pub(crate) fn single(
        solver: SolverKind,
        flag: Flag,
        plan: CovariancePlan,
        allocation: RateAllocation,
    ) -> Self {
        let rates = allocation.totals.clone();
        let energies = plan.energies();
        Self {
            solver,
            flag,
            objective: 0.0,
            plans: vec![plan],
            allocations: vec![allocation],
            allocation_plan: vec![0],
            alpha: vec![1.0],
            rates,
            energies,
            w: Vec::new(),
            theta: Vec::new(),
            lambda: None,
            trace: Vec::new(),
            outer_iterations: 0,
        }
    }

    /// Recomputes `rates` and `energies` from the allocations, plans and
    /// fractions.
    pub(crate) fn mix(&mut self) {
        let users = self.allocations.first().map_or(0, |a| a.totals.len());
        self.rates = vec![0.0; users];
        self.energies = vec![0.0; users];
        let plan_energies: Vec<Vec<f64>> = self.plans.iter().map(|p| p.energies()).collect();
        for (k, a) in self.allocations.iter().enumerate() {
            let e = &plan_energies[self.allocation_plan[k]];
            for u in 0..users {
                self.rates[u] += self.alpha[k] * a.totals[u];
                self.energies[u] += self.alpha[k] * e[u];
            }
        }
    }

    pub fn plan(&self) -> &CovariancePlan {
        &self.plans[0]
    }

    /// Ordering with the largest fraction.
    pub fn dominant(&self) -> Option<&RateAllocation> {
        let k = (0..self.alpha.len()).max_by(|&a, &b| self.alpha[a].total_cmp(&self.alpha[b]))?;
        self.allocations.get(k)
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha.iter().copied().fold(0.0, f64::max)
    }

    /// Re-derives every reported rate and energy from the stored
    /// covariances and checks the fractions.
    pub fn verify(&self, ch: &ChannelSet) -> Result<()> {
        let fail = |m: String| Err(Error::validation(format!("report check failed: {m}")));
        if self.plans.is_empty() {
            return fail("no covariance plan".into());
        }
        for p in &self.plans {
            p.validate(ch)?;
        }
        let k = self.allocations.len();
        if self.allocation_plan.len() != k || self.alpha.len() != k {
            return fail("allocation, plan index and fraction counts differ".into());
        }
        if self.alpha.iter().any(|&a| !(a >= 0.0 && a <= 1.0 + 1e-12)) {
            return fail(format!("fractions out of [0, 1]: {:?}", self.alpha));
        }
        if k > 0 && (self.alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return fail(format!("fractions do not sum to one: {:?}", self.alpha));
        }
        for (a, &pi) in self.allocations.iter().zip(&self.allocation_plan) {
            let plan = self
                .plans
                .get(pi)
                .ok_or_else(|| Error::validation("plan index out of range"))?;
            let again = ratecalc::rate_allocation(ch, plan, &a.order)?;
            for (n, (x, y)) in again.per_tone.iter().zip(&a.per_tone).enumerate() {
                for u in 0..x.len() {
                    if (x[u] - y[u]).abs() > 1e-6 * (1.0 + x[u].abs()) {
                        return fail(format!(
                            "rate of user {u} on tone {n}: {} vs {}",
                            y[u], x[u]
                        ));
                    }
                }
            }
        }
        let mut check = self.clone();
        check.mix();
        for u in 0..self.rates.len() {
            if (check.rates[u] - self.rates[u]).abs() > 1e-6 * (1.0 + check.rates[u].abs()) {
                return fail(format!("total rate of user {u}"));
            }
            if (check.energies[u] - self.energies[u]).abs() > 1e-9 * (1.0 + check.energies[u].abs())
            {
                return fail(format!("energy of user {u}"));
            }
        }
        Ok(())
    }
}
