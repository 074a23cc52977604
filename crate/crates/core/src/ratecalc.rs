//! Successive-interference-cancellation rates, polymatroid bounds and
//! decoding-order selection.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{ChannelSet, CovariancePlan, RateAllocation};

/// Rates below this are reported as exactly zero.
const RATE_FLOOR: f64 = 1e-12;

/// Nonnegative rate weights `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::validation("weight vector is empty"));
        }
        if let Some(u) = theta.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::validation(format!(
                "weight {u} must be finite and nonnegative, got {}",
                theta[u]
            )));
        }
        Ok(Self(theta))
    }

    pub fn equal(users: usize) -> Self {
        Self(vec![1.0; users])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Users by descending weight; the reverse of [`greedy_order`].
    pub fn descending(&self) -> Vec<usize> {
        let mut order = greedy_order(self);
        order.reverse();
        order
    }

    /// Weight differences `δ_k = θ_(k) − θ_(k+1)` along [`Self::descending`],
    /// with `θ_(U+1) = 0`.
    pub fn differences(&self) -> Vec<f64> {
        let desc = self.descending();
        (0..desc.len())
            .map(|k| {
                let next = desc.get(k + 1).map_or(0.0, |&u| self.0[u]);
                self.0[desc[k]] - next
            })
            .collect()
    }
}

/// Decoding order maximizing `Σ θ_u b_u`: ascending weight, ties by
/// ascending user index. `order[0]` is decoded first.
pub fn greedy_order(theta: &WeightVector) -> Vec<usize> {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| theta.0[a].total_cmp(&theta.0[b]).then(a.cmp(&b)));
    order
}

pub fn is_permutation(order: &[usize], users: usize) -> bool {
    let mut seen = vec![false; users];
    order.len() == users
        && order
            .iter()
            .all(|&u| u < users && !std::mem::replace(&mut seen[u], true))
}

/// Received covariance `Q_u = H_u R_u H_uᴴ`.
pub fn received_covariance(h: &CMatrix, r: &CMatrix) -> CMatrix {
    h * r * h.adjoint()
}

fn tone_received(ch: &ChannelSet, plan: &CovariancePlan, tone: usize) -> Vec<CMatrix> {
    (0..ch.num_users())
        .map(|u| received_covariance(ch.h(tone, u), plan.r(tone, u)))
        .collect()
}

fn check_tone_inputs(ch: &ChannelSet, plan: &CovariancePlan, tone: usize) -> Result<()> {
    if tone >= ch.num_tones() || tone >= plan.num_tones() {
        return Err(Error::validation(format!("tone {tone} out of range")));
    }
    for u in 0..ch.num_users() {
        let r = plan.r(tone, u);
        let t = ch.tx_antennas()[u];
        if r.nrows() != t || r.ncols() != t {
            return Err(Error::validation(format!(
                "R at (n={tone}, u={u}) has wrong shape"
            )));
        }
        linalg::check_covariance(r, &format!("R at (n={tone}, u={u})"))?;
    }
    Ok(())
}

/// Per-user rates on one tone when users are decoded in `order`.
///
/// The user at decode position `k` sees the users decoded after it as
/// interference.
pub fn sic_rates(
    ch: &ChannelSet,
    plan: &CovariancePlan,
    order: &[usize],
    tone: usize,
) -> Result<Vec<f64>> {
    if !is_permutation(order, ch.num_users()) {
        return Err(Error::validation(format!(
            "{order:?} is not a permutation of the users"
        )));
    }
    check_tone_inputs(ch, plan, tone)?;
    let q = tone_received(ch, plan, tone);
    sic_rates_from_received(&q, order, ch.rx_antennas(), ch.c_b())
}

pub(crate) fn sic_rates_from_received(
    q: &[CMatrix],
    order: &[usize],
    rx: usize,
    c_b: u32,
) -> Result<Vec<f64>> {
    let users = order.len();
    let mut rates = vec![0.0; users];
    // Walk from the last decoded user backwards, accumulating suffix sums.
    let mut suffix = linalg::identity(rx);
    let mut prev = 0.0;
    for &u in order.iter().rev() {
        suffix += &q[u];
        let cur = linalg::log2_det_hpd(&suffix)?;
        let b = (cur - prev) / c_b as f64;
        rates[u] = if b < RATE_FLOOR { 0.0 } else { b };
        prev = cur;
    }
    Ok(rates)
}

/// Right-hand side of the polymatroid constraint for subset `subset`.
pub fn polymatroid_bound(
    ch: &ChannelSet,
    plan: &CovariancePlan,
    subset: &[usize],
    tone: usize,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if let Some(&u) = subset.iter().find(|&&u| u >= ch.num_users()) {
        return Err(Error::validation(format!("user {u} out of range")));
    }
    check_tone_inputs(ch, plan, tone)?;
    let mut s = linalg::identity(ch.rx_antennas());
    for &u in subset {
        s += received_covariance(ch.h(tone, u), plan.r(tone, u));
    }
    Ok(linalg::log2_det_hpd(&s)? / ch.c_b() as f64)
}

/// Rates on every tone under one decoding order.
pub fn rate_allocation(
    ch: &ChannelSet,
    plan: &CovariancePlan,
    order: &[usize],
) -> Result<RateAllocation> {
    let per_tone = (0..ch.num_tones())
        .map(|n| sic_rates(ch, plan, order, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateAllocation::new(per_tone, order.to_vec()))
}

/// Total per-user rates for several orders sharing one plan. Skips the
/// per-call PSD checks; `plan` must already be validated.
pub(crate) fn order_totals(
    ch: &ChannelSet,
    plan: &CovariancePlan,
    orders: &[Vec<usize>],
) -> Result<Vec<Vec<f64>>> {
    let users = ch.num_users();
    let received: Vec<Vec<CMatrix>> = (0..ch.num_tones())
        .map(|n| tone_received(ch, plan, n))
        .collect();
    orders
        .iter()
        .map(|order| {
            let mut totals = vec![0.0; users];
            for q in &received {
                let r = sic_rates_from_received(q, order, ch.rx_antennas(), ch.c_b())?;
                for u in 0..users {
                    totals[u] += r[u];
                }
            }
            Ok(totals)
        })
        .collect()
}

/// Both sides of the summation-by-parts identity on one tone:
/// `Σ_u θ_u b_u` under the greedy order, and
/// `(1/c_b) Σ_k δ_k log2 det S_k` with `S_k` cumulated in descending weight.
pub fn weighted_rate_identity(
    ch: &ChannelSet,
    plan: &CovariancePlan,
    theta: &WeightVector,
    tone: usize,
) -> Result<(f64, f64)> {
    if theta.len() != ch.num_users() {
        return Err(Error::validation(
            "weight vector length does not match users",
        ));
    }
    let order = greedy_order(theta);
    let rates = sic_rates(ch, plan, &order, tone)?;
    let lhs: f64 = rates.iter().zip(theta.values()).map(|(b, t)| b * t).sum();

    let desc = theta.descending();
    let delta = theta.differences();
    let mut s = linalg::identity(ch.rx_antennas());
    let mut rhs = 0.0;
    for (k, &u) in desc.iter().enumerate() {
        s += received_covariance(ch.h(tone, u), plan.r(tone, u));
        if delta[k] != 0.0 {
            rhs += delta[k] * linalg::log2_det_hpd(&s)?;
        }
    }
    Ok((lhs, rhs / ch.c_b() as f64))
}

/// `Σ_u θ_u b_u` for given totals.
pub fn weighted_sum(theta: &[f64], rates: &[f64]) -> f64 {
    theta.iter().zip(rates).map(|(t, b)| t * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::model::{generate_channel, ChannelSpec, Fading};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_pair() -> (ChannelSet, CovariancePlan) {
        let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let ch = ChannelSet::new(1, 1, vec![1, 1], vec![vec![one.clone(), one.clone()]]).unwrap();
        let plan = CovariancePlan::new(vec![vec![one.clone(), one]]);
        (ch, plan)
    }

    pub(crate) fn random_plan(ch: &ChannelSet, rng: &mut ChaCha8Rng) -> CovariancePlan {
        let r = (0..ch.num_tones())
            .map(|_| {
                ch.tx_antennas()
                    .iter()
                    .map(|&t| {
                        let b = CMatrix::from_fn(t, t, |_, _| {
                            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                        });
                        &b * b.adjoint() * c(2.0, 0.0)
                    })
                    .collect()
            })
            .collect();
        CovariancePlan::new(r)
    }

    fn random_channel(users: usize, seed: u64) -> ChannelSet {
        generate_channel(&ChannelSpec {
            users,
            rx: 2,
            tx: (0..users).map(|u| 1 + u % 2).collect(),
            tones: 2,
            c_b: 1,
            fading: Fading::IidRayleigh,
            rho_tx: 0.0,
            rho_rx: 0.0,
            taps: 1,
            seed,
        })
        .unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn scalar_two_user_rates() {
        let (ch, plan) = scalar_pair();
        let r = sic_rates(&ch, &plan, &[0, 1], 0).unwrap();
        assert!((r[0] - 1.5f64.log2()).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-12);
        let bound = polymatroid_bound(&ch, &plan, &[0, 1], 0).unwrap();
        assert!((bound - 3f64.log2()).abs() < 1e-12);
        assert!(polymatroid_bound(&ch, &plan, &[], 0).is_err());
    }

    #[test]
    fn zero_covariances_give_zero_rates() {
        let (ch, _) = scalar_pair();
        let plan = CovariancePlan::zeros(&ch);
        assert_eq!(sic_rates(&ch, &plan, &[1, 0], 0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(polymatroid_bound(&ch, &plan, &[1], 0).unwrap(), 0.0);
    }

    #[test]
    fn single_user_identity() {
        let id = linalg::identity(2);
        let ch = ChannelSet::new(1, 2, vec![2], vec![vec![id.clone()]]).unwrap();
        let plan = CovariancePlan::new(vec![vec![id]]);
        let r = sic_rates(&ch, &plan, &[0], 0).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_psd_covariance_is_rejected() {
        let (ch, _) = scalar_pair();
        let neg = CMatrix::from_element(1, 1, c(-1.0, 0.0));
        let plan = CovariancePlan::new(vec![vec![neg.clone(), neg]]);
        assert!(sic_rates(&ch, &plan, &[0, 1], 0).is_err());
        assert!(sic_rates(&ch, &CovariancePlan::zeros(&ch), &[0, 0], 0).is_err());
    }

    #[test]
    fn greedy_order_examples() {
        let w = WeightVector::new(vec![4.0, 2.0, 1.0, 0.5]).unwrap();
        assert_eq!(greedy_order(&w), vec![3, 2, 1, 0]);
        assert_eq!(greedy_order(&WeightVector::equal(4)), vec![0, 1, 2, 3]);
        let d = w.differences();
        assert_eq!(d, vec![2.0, 1.0, 0.5, 0.5]);
        assert!((d.iter().sum::<f64>() - w.max()).abs() < 1e-15);
    }

    #[test]
    fn identity_examples() {
        let (ch, plan) = scalar_pair();
        let (lhs, rhs) = weighted_rate_identity(&ch, &plan, &WeightVector::equal(2), 0).unwrap();
        assert!((lhs - 3f64.log2()).abs() < 1e-12 && (rhs - lhs).abs() < 1e-12);
        let w = WeightVector::new(vec![2.0, 1.0]).unwrap();
        let (lhs, rhs) = weighted_rate_identity(&ch, &plan, &w, 0).unwrap();
        let want = 2.0 + 1.5f64.log2();
        assert!((lhs - want).abs() < 1e-12, "{lhs}");
        assert!((rhs - want).abs() < 1e-12, "{rhs}");
    }

    /// Exhaustive polymatroid check: every order's rate vector obeys every
    /// subset bound, with equality on the suffix sets of that order.
    #[test]
    fn vertices_satisfy_all_subset_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..6 {
            let users = 2 + seed as usize % 3;
            let ch = random_channel(users, seed);
            let plan = random_plan(&ch, &mut rng);
            for order in permutations(users) {
                let r = sic_rates(&ch, &plan, &order, 1).unwrap();
                for mask in 1u32..(1 << users) {
                    let subset: Vec<usize> = (0..users).filter(|u| mask >> u & 1 == 1).collect();
                    let bound = polymatroid_bound(&ch, &plan, &subset, 1).unwrap();
                    let sum: f64 = subset.iter().map(|&u| r[u]).sum();
                    assert!(sum <= bound + 1e-9, "{sum} > {bound}");
                }
                for k in 0..users {
                    let suffix = &order[k..];
                    let bound = polymatroid_bound(&ch, &plan, suffix, 1).unwrap();
                    let sum: f64 = suffix.iter().map(|&u| r[u]).sum();
                    assert!((sum - bound).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn greedy_order_is_optimal_over_all_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..10 {
            let users = 2 + seed as usize % 3;
            let ch = random_channel(users, 100 + seed);
            let plan = random_plan(&ch, &mut rng);
            let theta =
                WeightVector::new((0..users).map(|_| rng.random::<f64>() * 3.0).collect()).unwrap();
            let greedy = sic_rates(&ch, &plan, &greedy_order(&theta), 0).unwrap();
            let best = weighted_sum(theta.values(), &greedy);
            for order in permutations(users) {
                let r = sic_rates(&ch, &plan, &order, 0).unwrap();
                assert!(weighted_sum(theta.values(), &r) <= best + 1e-9);
            }
        }
    }

    #[test]
    fn monotone_in_single_user_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ch = random_channel(3, 77);
        let plan = random_plan(&ch, &mut rng);
        let all = [0, 1, 2];
        let base = polymatroid_bound(&ch, &plan, &all, 0).unwrap();
        for t in [1.0, 1.5, 4.0] {
            let mut p = plan.clone();
            p.scale_user(1, t);
            assert!(polymatroid_bound(&ch, &p, &all, 0).unwrap() >= base - 1e-12);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn chain_rule_and_identity(seed in 0u64..10_000, users in 1usize..5, cb in 1u32..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_channel(users, seed);
            let ch = ChannelSet::new(cb, base.rx_antennas(), base.tx_antennas().to_vec(),
                base.matrices().to_vec()).unwrap();
            let plan = random_plan(&ch, &mut rng);
            let theta = WeightVector::new((0..users).map(|_| rng.random::<f64>()).collect()).unwrap();
            let order = greedy_order(&theta);
            let all: Vec<usize> = (0..users).collect();
            for n in 0..ch.num_tones() {
                let r = sic_rates(&ch, &plan, &order, n).unwrap();
                proptest::prop_assert!(r.iter().all(|&b| b >= 0.0));
                let sum: f64 = r.iter().sum();
                let bound = polymatroid_bound(&ch, &plan, &all, n).unwrap();
                proptest::prop_assert!((sum - bound).abs() <= 1e-9);
                let (lhs, rhs) = weighted_rate_identity(&ch, &plan, &theta, n).unwrap();
                proptest::prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            }
        }
    }
}
