//! Weighted-rate maximization under per-user or total energy budgets,
//! minimum-energy rate provisioning, and the shared per-tone machinery.

mod maxresmac;
mod maxrmac;
mod minpmac;
mod report;

pub use maxresmac::max_resmac;
pub use maxrmac::{max_rmac, max_rmac_warm};
pub use minpmac::{min_pmac, min_pmac_within};
pub use report::{Flag, SolveReport, SolverKind};

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ellipsoid::EllipsoidState;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{ChannelSet, CovariancePlan};
use crate::ratecalc::{greedy_order, WeightVector};
use crate::tonesolver::{solve_tone, FactorVector, LbfgsOptions, ToneProblem, ToneSolution};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub inner: LbfgsOptions,
    /// Solve tones concurrently.
    pub parallel: bool,
    /// Outer iteration cap; `None` means `500·U²`.
    pub max_outer: Option<usize>,
    /// Outer tolerance relative to the norm of the budget or target.
    pub outer_tol: f64,
    /// Relative tolerance for treating two weights as tied.
    pub cluster_tol: f64,
    pub max_orderings: usize,
    /// Seed for sampling orderings when there are too many to enumerate.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            inner: LbfgsOptions::default(),
            parallel: true,
            max_outer: None,
            outer_tol: 1e-6,
            cluster_tol: 1e-3,
            max_orderings: 5040,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub(crate) fn outer_cap(&self, users: usize) -> usize {
        self.max_outer.unwrap_or(500 * users * users)
    }
}

/// Warm-start factors for every tone, carried across outer iterations and
/// across solver calls.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub(crate) tones: Vec<Option<FactorVector>>,
}

impl WarmStart {
    pub fn new(tones: usize) -> Self {
        Self {
            tones: vec![None; tones],
        }
    }

    fn fit(&mut self, tones: usize) {
        if self.tones.len() != tones {
            self.tones = vec![None; tones];
        }
    }
}

/// Per-tone solutions at one dual point, reduced in tone order.
pub(crate) struct Sweep {
    pub tones: Vec<ToneSolution>,
    pub energies: Vec<f64>,
    /// Per-user totals under the greedy order.
    pub rates: Vec<f64>,
    /// `Σ_n ℓ_n`.
    pub lagrangian: f64,
}

impl Sweep {
    pub fn plan(&self, ch: &ChannelSet) -> CovariancePlan {
        CovariancePlan::new(
            self.tones
                .iter()
                .map(|s| s.covariances(ch.tx_antennas()))
                .collect(),
        )
    }
}

/// Solves every tone at weights `theta` and prices `w`.
pub(crate) fn sweep(
    ch: &ChannelSet,
    theta: &WeightVector,
    w: &[f64],
    warm: &mut WarmStart,
    opts: &SolverOptions,
) -> Result<Sweep> {
    warm.fit(ch.num_tones());
    let results = exec::map_with_state(&mut warm.tones, opts.parallel, |n, slot| {
        let p = ToneProblem::from_channel(ch, n, theta, w)?;
        let sol = solve_tone(&p, slot.as_ref(), &opts.inner)?;
        *slot = Some(sol.z.clone());
        Ok(sol)
    });
    let tones = results.into_iter().collect::<Result<Vec<_>>>()?;
    let users = ch.num_users();
    let mut energies = vec![0.0; users];
    let mut rates = vec![0.0; users];
    let mut lagrangian = 0.0;
    for s in &tones {
        for u in 0..users {
            energies[u] += s.energies[u];
            rates[u] += s.rates[u];
        }
        lagrangian += s.value;
    }
    Ok(Sweep {
        tones,
        energies,
        rates,
        lagrangian,
    })
}

/// Starting region of a dual search. The optimum is only guaranteed to stay
/// inside the ellipsoid if it starts inside the ball, so a search that
/// settles near the edge is restarted in a larger ball.
pub(crate) struct DualBall {
    center: Vec<f64>,
    radius: f64,
    expansions: usize,
}

impl DualBall {
    const GROWTH: f64 = 100.0;
    const MAX_EXPANSIONS: usize = 3;
    /// Distance from the center, relative to the radius, counted as the edge.
    const EDGE: f64 = 0.9;

    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self {
            center,
            radius,
            expansions: 0,
        }
    }

    pub fn state(&self) -> EllipsoidState {
        EllipsoidState::ball(self.center.clone(), self.radius)
    }

    /// A fresh ellipsoid in an enlarged ball if `x` lies near the edge of
    /// the current one.
    pub fn grow_if_edge(&mut self, x: &[f64]) -> Option<EllipsoidState> {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        if self.expansions == Self::MAX_EXPANSIONS || norm(&d) <= Self::EDGE * self.radius {
            return None;
        }
        self.radius *= Self::GROWTH;
        self.expansions += 1;
        log::debug!(
            "dual optimum near the ball edge; radius now {:e}",
            self.radius
        );
        Some(self.state())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn check_len(what: &str, v: &[f64], users: usize) -> Result<()> {
    if v.len() != users {
        return Err(Error::validation(format!(
            "{what} has {} entries for {users} users",
            v.len()
        )));
    }
    if let Some(u) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::validation(format!("{what}[{u}] is not finite")));
    }
    Ok(())
}

/// Groups users whose weights differ by at most `tol·(1 + max θ)`, chaining
/// ties (single linkage). Clusters come by descending weight; members are
/// listed by ascending index.
pub fn cluster_users(theta: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let scale = tol * (1.0 + theta.iter().copied().fold(0.0, f64::max));
    let mut by_weight: Vec<usize> = (0..theta.len()).collect();
    by_weight.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut prev = f64::INFINITY;
    for u in by_weight {
        match clusters.last_mut() {
            Some(c) if prev - theta[u] <= scale => c.push(u),
            _ => clusters.push(vec![u]),
        }
        prev = theta[u];
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let mut cur = items.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    // Lexicographic successor.
    loop {
        let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..cur.len()).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Decoding orders consistent with the weights `theta`: clusters decoded by
/// ascending weight, any order within a cluster. The greedy order comes
/// first. When there are more than `cap` such orders, `cap` distinct ones
/// are sampled.
pub fn cluster_orderings(theta: &[f64], tol: f64, cap: usize, seed: u64) -> Vec<Vec<usize>> {
    let greedy = greedy_order(&WeightVector::new(theta.to_vec()).expect("nonnegative weights"));
    let mut clusters = cluster_users(theta, tol);
    clusters.reverse();
    let count = clusters.iter().try_fold(1usize, |acc, c| {
        (1..=c.len()).try_fold(acc, |a, k| a.checked_mul(k))
    });
    let mut seen = HashSet::new();
    seen.insert(greedy.clone());
    let mut out = vec![greedy];
    match count {
        Some(total) if total <= cap => {
            let perms: Vec<Vec<Vec<usize>>> = clusters.iter().map(|c| permutations(c)).collect();
            let mut idx = vec![0; perms.len()];
            loop {
                let order: Vec<usize> = idx
                    .iter()
                    .zip(&perms)
                    .flat_map(|(&i, p)| p[i].iter().copied())
                    .collect();
                if seen.insert(order.clone()) {
                    out.push(order);
                }
                let mut k = perms.len();
                loop {
                    if k == 0 {
                        return out;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < perms[k].len() {
                        break;
                    }
                    idx[k] = 0;
                }
            }
        }
        _ => {
            log::warn!("more than {cap} decoding orders; sampling {cap}");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while out.len() < cap {
                let order: Vec<usize> = clusters
                    .iter()
                    .flat_map(|c| {
                        let mut c = c.clone();
                        c.shuffle(&mut rng);
                        c
                    })
                    .collect();
                if seen.insert(order.clone()) {
                    out.push(order);
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clustering_examples() {
        assert_eq!(
            cluster_users(&[1.0, 1.0, 2.0], 1e-3),
            vec![vec![2], vec![0, 1]]
        );
        assert_eq!(
            cluster_users(&[3.0, 1.0, 2.0], 1e-3),
            vec![vec![0], vec![2], vec![1]]
        );
        let tau = 1e-3 * 3.0;
        assert_eq!(
            cluster_users(&[1.0, 1.0 + tau / 2.0, 2.0], 1e-3),
            vec![vec![2], vec![0, 1]]
        );
        // Chained ties merge.
        let step = 0.9e-3 * 2.0;
        assert_eq!(
            cluster_users(&[1.0, 1.0 + step, 1.0 + 2.0 * step], 1e-3).len(),
            1
        );
    }

    #[test]
    fn orderings_enumerate_within_clusters() {
        let o = cluster_orderings(&[1.0, 1.0, 2.0], 1e-3, 5040, 0);
        assert_eq!(o, vec![vec![0, 1, 2], vec![1, 0, 2]]);
        let all = cluster_orderings(&[1.0; 4], 1e-3, 5040, 0);
        assert_eq!(all.len(), 24);
        assert_eq!(all[0], vec![0, 1, 2, 3]);
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 24);
        assert_eq!(
            cluster_orderings(&[3.0, 1.0, 2.0], 1e-3, 5040, 0),
            vec![vec![1, 2, 0]]
        );
    }

    #[test]
    fn orderings_are_sampled_past_the_cap() {
        let a = cluster_orderings(&[1.0; 5], 1e-3, 10, 3);
        let b = cluster_orderings(&[1.0; 5], 1e-3, 10, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 10);
    }
}
