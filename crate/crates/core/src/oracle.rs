//! Independent reference solutions for testing: closed-form water-filling,
//! exact hull membership and a brute-force covariance optimizer for tiny
//! instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec;
use crate::hull::{feasible_point, VertexSet};
use crate::linalg::{self, c, CMatrix, LN_2};
use crate::model::{ChannelSet, CovariancePlan};
use crate::ratecalc::{greedy_order, WeightVector};

#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    /// Water level `μ` (0 when nothing is allocated).
    pub level: f64,
    /// Power per eigenmode, `powers[n][i]` for tone `n`, descending gain.
    pub powers: Vec<Vec<f64>>,
    pub gains: Vec<Vec<f64>>,
    pub rate: f64,
}

/// Single-user water-filling over the eigenmodes of `H`.
pub fn waterfill(h: &CMatrix, energy: f64, c_b: u32) -> Result<WaterFill> {
    waterfill_tones(std::slice::from_ref(h), energy, c_b)
}

/// Water-filling with one energy budget pooled over several tones.
pub fn waterfill_tones(hs: &[CMatrix], energy: f64, c_b: u32) -> Result<WaterFill> {
    if !(energy >= 0.0 && energy.is_finite()) {
        return Err(Error::validation("energy must be finite and nonnegative"));
    }
    let gains: Vec<Vec<f64>> = hs
        .iter()
        .map(|h| {
            let (mut vals, _) = linalg::hermitian_eigen(&(h.adjoint() * h));
            vals.reverse();
            vals.into_iter().map(|g| g.max(0.0)).collect()
        })
        .collect();
    let mut all: Vec<f64> = gains
        .iter()
        .flatten()
        .copied()
        .filter(|&g| g > 1e-300)
        .collect();
    all.sort_by(|a, b| b.total_cmp(a));
    let mut level = 0.0;
    if energy > 0.0 {
        let mut inv_sum = 0.0;
        for (k, g) in all.iter().enumerate() {
            inv_sum += 1.0 / g;
            let mu = (energy + inv_sum) / (k + 1) as f64;
            if mu > 1.0 / g {
                level = mu;
            } else {
                break;
            }
        }
    }
    let powers: Vec<Vec<f64>> = gains
        .iter()
        .map(|t| {
            t.iter()
                .map(|&g| {
                    if g > 1e-300 {
                        (level - 1.0 / g).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let rate = gains
        .iter()
        .flatten()
        .map(|&g| (level * g).max(1.0).log2())
        .sum::<f64>()
        / c_b as f64;
    Ok(WaterFill {
        level,
        powers,
        gains,
        rate,
    })
}

/// Exact test of `target ∈ conv(v)` by linear-program feasibility with
/// equality rows.
pub fn exact_membership(v: &VertexSet, target: &[f64]) -> Result<bool> {
    if v.is_empty() {
        return Err(Error::validation("vertex set is empty"));
    }
    let m = target.len();
    let k = v.len();
    if v.iter().any(|x| x.len() != m) {
        return Err(Error::validation("vertex dimension mismatch"));
    }
    let rows = m + 1;
    let mut a = vec![0.0; rows * k];
    for u in 0..m {
        for j in 0..k {
            a[u * k + j] = v[j][u];
        }
    }
    a[m * k..].iter_mut().for_each(|x| *x = 1.0);
    let mut b = target.to_vec();
    b.push(1.0);
    let scale = 1.0 + target.iter().map(|x| x.abs()).sum::<f64>();
    Ok(feasible_point(&a, &b, rows, k, 1e-9 * scale).is_some())
}

#[derive(Debug, Clone)]
pub struct BruteOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for BruteOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            iterations: 20_000,
            seed: 0,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BruteResult {
    /// Best `Σ θ_u b_u` found.
    pub value: f64,
    pub plan: CovariancePlan,
}

fn inverse(m: &CMatrix) -> CMatrix {
    m.clone().try_inverse().expect("I + PSD is invertible")
}

/// `Σ θ_u b_u` and its gradient with respect to every `R[n][u]`, written
/// directly from the per-user successive-cancellation rate expressions.
fn sic_objective(
    ch: &ChannelSet,
    r: &[Vec<CMatrix>],
    theta: &[f64],
    order: &[usize],
) -> (f64, Vec<Vec<CMatrix>>) {
    let users = ch.num_users();
    let rx = ch.rx_antennas();
    let scale = 1.0 / (ch.c_b() as f64 * LN_2);
    let mut value = 0.0;
    let mut grad: Vec<Vec<CMatrix>> = r
        .iter()
        .map(|t| {
            t.iter()
                .map(|m| CMatrix::zeros(m.nrows(), m.ncols()))
                .collect()
        })
        .collect();
    for n in 0..ch.num_tones() {
        let q: Vec<CMatrix> = (0..users)
            .map(|u| ch.h(n, u) * &r[n][u] * ch.h(n, u).adjoint())
            .collect();
        for (pos, &v) in order.iter().enumerate() {
            if theta[v] == 0.0 {
                continue;
            }
            // Signal-plus-interference and interference-only sets of user v.
            let with: &[usize] = &order[pos..];
            let without: &[usize] = &order[pos + 1..];
            let mut s_with = linalg::identity(rx);
            for &j in with {
                s_with += &q[j];
            }
            let mut s_without = linalg::identity(rx);
            for &j in without {
                s_without += &q[j];
            }
            let b = (s_with.determinant().re.ln() - s_without.determinant().re.ln()) * scale;
            value += theta[v] * b;
            let inv_with = inverse(&s_with);
            let inv_without = inverse(&s_without);
            for &j in with {
                let h = ch.h(n, j);
                grad[n][j] += h.adjoint() * &inv_with * h * c(theta[v] * scale, 0.0);
            }
            for &j in without {
                let h = ch.h(n, j);
                grad[n][j] -= h.adjoint() * &inv_without * h * c(theta[v] * scale, 0.0);
            }
        }
    }
    (value, grad)
}

/// Euclidean projection of `y` onto `{x ≥ 0, Σx = total}`.
fn simplex_projection(y: &[f64], total: f64) -> Vec<f64> {
    if total <= 0.0 {
        return vec![0.0; y.len()];
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - total) / (k + 1) as f64;
        if v - t > 0.0 {
            shift = t;
        }
    }
    y.iter().map(|v| (v - shift).max(0.0)).collect()
}

/// Projects each user's covariances onto `{R ⪰ 0, Σ_n tr R[n] = E_u}` by
/// projecting the pooled eigenvalues onto the simplex. Spending the whole
/// budget is optimal since every rate-weighted objective here is
/// nondecreasing in each covariance.
fn project(r: &mut [Vec<CMatrix>], energies: &[f64]) {
    for (u, &e) in energies.iter().enumerate() {
        let eig: Vec<(Vec<f64>, CMatrix)> = r
            .iter()
            .map(|tone| linalg::hermitian_eigen(&linalg::hermitian_part(&tone[u])))
            .collect();
        let pooled: Vec<f64> = eig.iter().flat_map(|(v, _)| v.iter().copied()).collect();
        let projected = simplex_projection(&pooled, e);
        let mut off = 0;
        for (tone, (vals, vecs)) in r.iter_mut().zip(&eig) {
            tone[u] = linalg::from_eigen(&projected[off..off + vals.len()], vecs);
            off += vals.len();
        }
    }
}

/// Maximizes `Σ θ_u b_u` under per-user energy budgets by projected
/// gradient ascent from many starting points. Meant for tiny instances.
pub fn brute_solve(
    ch: &ChannelSet,
    energies: &[f64],
    theta: &WeightVector,
    opts: &BruteOptions,
) -> Result<BruteResult> {
    let users = ch.num_users();
    if energies.len() != users || theta.len() != users {
        return Err(Error::validation(
            "budget and weight lengths must match the users",
        ));
    }
    if energies.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
        return Err(Error::validation("energies must be finite and nonnegative"));
    }
    let order = greedy_order(theta);
    let tx = ch.tx_antennas().to_vec();
    let tones = ch.num_tones();
    let runs = exec::map_indexed(opts.restarts.max(1), opts.parallel, |run| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(1_000_003).wrapping_add(run as u64));
        let mut r: Vec<Vec<CMatrix>> = (0..tones)
            .map(|_| {
                tx.iter()
                    .map(|&t| {
                        if run == 0 {
                            linalg::identity(t)
                        } else {
                            let a = CMatrix::from_fn(t, t, |_, _| {
                                c(rng.sample(StandardNormal), rng.sample(StandardNormal))
                            });
                            &a * a.adjoint()
                        }
                    })
                    .collect()
            })
            .collect();
        project(&mut r, energies);
        let (mut value, mut grad) = sic_objective(ch, &r, theta.values(), &order);
        let total: f64 = energies.iter().sum();
        let mut step = 0.1 * total.max(1e-12);
        for _ in 0..opts.iterations {
            let mut trial = r.clone();
            for (tt, gt) in trial.iter_mut().zip(&grad) {
                for (m, g) in tt.iter_mut().zip(gt) {
                    *m += g * c(step, 0.0);
                }
            }
            project(&mut trial, energies);
            let (v, g) = sic_objective(ch, &trial, theta.values(), &order);
            if v > value {
                r = trial;
                value = v;
                grad = g;
                step *= 1.2;
            } else {
                step *= 0.5;
                if step < 1e-14 * total.max(1e-300) {
                    break;
                }
            }
        }
        (value, r)
    });
    let (value, r) = runs
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one restart");
    Ok(BruteResult {
        value,
        plan: CovariancePlan::new(r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::fw_membership;
    use crate::model::{generate_channel, ChannelSpec, Fading};

    #[test]
    fn two_mode_waterfill() {
        let h =
            CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]));
        let wf = waterfill(&h, 1.0, 1).unwrap();
        assert!((wf.level - 1.125).abs() < 1e-12);
        assert!((wf.powers[0][0] - 0.875).abs() < 1e-12);
        assert!((wf.powers[0][1] - 0.125).abs() < 1e-12);
        assert!((wf.rate - 2.339850002884625).abs() < 1e-9);
    }

    #[test]
    fn waterfill_limits() {
        let h = linalg::identity(3);
        let wf = waterfill(&h, 3.0 * 2.5, 1).unwrap();
        assert!(wf.powers[0].iter().all(|&p| (p - 2.5).abs() < 1e-12));
        assert!((wf.rate - 3.0 * 3.5_f64.log2()).abs() < 1e-12);
        assert!(waterfill(&h, 1e-12, 1).unwrap().rate < 1e-11);
        let zero = CMatrix::zeros(2, 2);
        let wf = waterfill(&zero, 1.0, 1).unwrap();
        assert_eq!(wf.rate, 0.0);
        assert!(wf.powers[0].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn waterfill_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let hs: Vec<CMatrix> = (0..3)
                .map(|_| {
                    CMatrix::from_fn(3, 2, |_, _| {
                        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                    })
                })
                .collect();
            let e = rng.random::<f64>() * 5.0;
            let wf = waterfill_tones(&hs, e, 1).unwrap();
            let used: f64 = wf.powers.iter().flatten().sum();
            assert!((used - e).abs() < 1e-10 * (1.0 + e));
            for (ps, gs) in wf.powers.iter().zip(&wf.gains) {
                for (&p, &g) in ps.iter().zip(gs) {
                    if p > 0.0 {
                        assert!((p + 1.0 / g - wf.level).abs() < 1e-10 * wf.level);
                    } else if g > 0.0 {
                        assert!(1.0 / g >= wf.level - 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn exact_membership_examples() {
        let v = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(exact_membership(&v, &[0.5, 0.5]).unwrap());
        assert!(!exact_membership(&v, &[0.6, 0.6]).unwrap());
        assert!(exact_membership(&v, &[1.0, 0.0]).unwrap());
        assert_eq!(
            fw_membership(&v, &[0.6, 0.6], 1e-6).unwrap().inside,
            exact_membership(&v, &[0.6, 0.6]).unwrap()
        );
    }

    fn tiny(users: usize, tones: usize, seed: u64) -> ChannelSet {
        generate_channel(&ChannelSpec {
            users,
            rx: 2,
            tx: vec![2; users],
            tones,
            fading: Fading::IidRayleigh,
            taps: 1,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn brute_matches_waterfill() {
        for seed in 0..3 {
            let ch = tiny(1, 2, seed);
            let wf = waterfill_tones(
                ch.matrices()
                    .iter()
                    .map(|t| &t[0])
                    .cloned()
                    .collect::<Vec<_>>()
                    .as_slice(),
                4.0,
                1,
            )
            .unwrap();
            let opts = BruteOptions {
                restarts: 4,
                ..Default::default()
            };
            let b = brute_solve(&ch, &[4.0], &WeightVector::equal(1), &opts).unwrap();
            assert!(
                (b.value - wf.rate).abs() < 1e-6 * wf.rate,
                "{} vs {}",
                b.value,
                wf.rate
            );
        }
    }

    #[test]
    fn simplex_projection_examples() {
        assert_eq!(simplex_projection(&[0.5, 0.5], 1.0), vec![0.5, 0.5]);
        assert_eq!(simplex_projection(&[3.0, 0.0], 1.0), vec![1.0, 0.0]);
        let p = simplex_projection(&[0.2, -0.4, 1.0], 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12 && p.iter().all(|&x| x >= 0.0));
        assert_eq!(simplex_projection(&[1.0, 2.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn brute_zero_energy() {
        let ch = tiny(2, 1, 1);
        let b = brute_solve(
            &ch,
            &[0.0, 0.0],
            &WeightVector::equal(2),
            &BruteOptions {
                restarts: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn brute_scalar_sum_capacity() {
        let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let ch = ChannelSet::new(1, 1, vec![1, 1], vec![vec![one.clone(), one]]).unwrap();
        let b = brute_solve(
            &ch,
            &[1.5, 2.0],
            &WeightVector::equal(2),
            &BruteOptions {
                restarts: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((b.value - 4.5_f64.log2()).abs() < 1e-9);
    }
}
