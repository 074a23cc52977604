//! Per-tone Lagrangian maximization over Cholesky-like covariance factors.
//!
//! For one tone the Lagrangian is
//! `ℓ = (1/c_b) Σ_k δ_k log2 det S_k − Σ_u w_u tr(B_u B_uᴴ)`, with `S_k` the
//! identity plus the received covariances of the `k` highest-weight users.
//! Each covariance is parameterized as `R_u = B_u B_uᴴ`, which removes the
//! PSD constraint, and the packed real coordinates are optimized by L-BFGS.

mod kernel;
mod lbfgs;

pub use lbfgs::{minimize, LbfgsOptions, LbfgsResult};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, LN_2};
use crate::model::ChannelSet;
use crate::ratecalc::WeightVector;

/// Energy prices at or below this make the tone problem unbounded for any
/// user with positive rate weight.
pub const W_FLOOR: f64 = 1e-12;

/// Scale of the cold-start factor `B_u = 0.1 I`.
const COLD_START: f64 = 0.1;

/// Relative threshold on the largest eigenvalue of `∂ℓ/∂R_u` that triggers
/// an escape from a rank-deficient stationary point.
const KKT_TOL: f64 = 1e-6;

const MAX_ESCAPES: usize = 3;

/// One tone of the decomposed problem.
#[derive(Debug, Clone)]
pub struct ToneProblem {
    pub(crate) h: Vec<CMatrix>,
    pub(crate) rx: usize,
    pub(crate) tx: Vec<usize>,
    pub(crate) c_b: u32,
    /// Users by descending weight.
    pub(crate) desc: Vec<usize>,
    /// `δ_k` along `desc`.
    pub(crate) delta: Vec<f64>,
    /// Position of each user in `desc`.
    pub(crate) pos: Vec<usize>,
    pub(crate) w: Vec<f64>,
    theta: Vec<f64>,
}

impl ToneProblem {
    pub fn new(h: Vec<CMatrix>, theta: &WeightVector, w: &[f64], c_b: u32) -> Result<Self> {
        let users = h.len();
        if users == 0 || theta.len() != users || w.len() != users {
            return Err(Error::validation(format!(
                "tone problem with {users} channels, {} weights, {} prices",
                theta.len(),
                w.len()
            )));
        }
        if let Some(u) = w.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::validation(format!(
                "energy price {u} must be >= 0, got {}",
                w[u]
            )));
        }
        let rx = h[0].nrows();
        if h.iter().any(|m| m.nrows() != rx) {
            return Err(Error::validation(
                "channel matrices disagree on receive dimension",
            ));
        }
        let tx = h.iter().map(|m| m.ncols()).collect();
        let desc = theta.descending();
        let mut pos = vec![0; users];
        for (k, &u) in desc.iter().enumerate() {
            pos[u] = k;
        }
        Ok(Self {
            h,
            rx,
            tx,
            c_b,
            delta: theta.differences(),
            desc,
            pos,
            w: w.to_vec(),
            theta: theta.values().to_vec(),
        })
    }

    pub fn from_channel(
        ch: &ChannelSet,
        tone: usize,
        theta: &WeightVector,
        w: &[f64],
    ) -> Result<Self> {
        Self::new(ch.tone(tone).to_vec(), theta, w, ch.c_b())
    }

    /// Length of the packed factor vector, `2 Σ_u L_x[u]²`.
    pub fn dim(&self) -> usize {
        2 * self.tx.iter().map(|t| t * t).sum::<usize>()
    }

    pub fn tx_antennas(&self) -> &[usize] {
        &self.tx
    }

    pub fn prices(&self) -> &[f64] {
        &self.w
    }

    pub fn set_prices(&mut self, w: &[f64]) {
        self.w.copy_from_slice(w);
    }

    pub(crate) fn scale(&self) -> f64 {
        1.0 / (self.c_b as f64 * LN_2)
    }

    /// Users whose rate weight is positive but whose energy price is not.
    fn unbounded_user(&self) -> Option<usize> {
        (0..self.tx.len()).find(|&u| self.theta[u] > 0.0 && self.w[u] <= W_FLOOR)
    }

    pub fn cold_start(&self) -> FactorVector {
        let factors: Vec<CMatrix> = self
            .tx
            .iter()
            .map(|&t| linalg::identity(t) * Complex64::new(COLD_START, 0.0))
            .collect();
        FactorVector::pack(&factors)
    }
}

/// Real and imaginary parts of every `B_u`, user-major, column-major within
/// a block, `[re, im]` interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorVector(pub Vec<f64>);

impl FactorVector {
    pub fn pack(factors: &[CMatrix]) -> Self {
        let mut z = Vec::with_capacity(factors.iter().map(|b| 2 * b.len()).sum());
        for b in factors {
            for v in b.iter() {
                z.push(v.re);
                z.push(v.im);
            }
        }
        Self(z)
    }

    pub fn unpack(&self, tx: &[usize]) -> Result<Vec<CMatrix>> {
        let need: usize = tx.iter().map(|t| 2 * t * t).sum();
        if need != self.0.len() {
            return Err(Error::validation(format!(
                "factor vector has length {}, expected {need}",
                self.0.len()
            )));
        }
        let mut off = 0;
        Ok(tx
            .iter()
            .map(|&t| {
                let m = CMatrix::from_fn(t, t, |i, j| {
                    let k = off + 2 * (i + j * t);
                    Complex64::new(self.0[k], self.0[k + 1])
                });
                off += 2 * t * t;
                m
            })
            .collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `ℓ` at the factors `z`.
pub fn tone_objective(p: &ToneProblem, z: &FactorVector) -> f64 {
    let mut ws = kernel::Workspace::new(p);
    kernel::value(p, z.as_slice(), &mut ws)
}

/// Gradient of `ℓ` with respect to the packed coordinates of `z`.
pub fn tone_gradient(p: &ToneProblem, z: &FactorVector) -> Vec<f64> {
    let mut ws = kernel::Workspace::new(p);
    let mut g = vec![0.0; p.dim()];
    kernel::value_and_gradient(p, z.as_slice(), &mut g, &mut ws);
    g
}

/// `∂ℓ/∂R_u` for every user at `z`.
pub fn covariance_gradients(p: &ToneProblem, z: &FactorVector) -> Vec<CMatrix> {
    let mut ws = kernel::Workspace::new(p);
    kernel::covariance_gradients(p, z.as_slice(), &mut ws)
        .into_iter()
        .zip(&p.tx)
        .map(|(m, &t)| CMatrix::from_column_slice(t, t, &m))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ToneSolution {
    pub z: FactorVector,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `tr(R_u)` per user.
    pub energies: Vec<f64>,
    /// Per-user rates under the greedy order of the problem's weights.
    pub rates: Vec<f64>,
}

impl ToneSolution {
    pub fn factors(&self, tx: &[usize]) -> Vec<CMatrix> {
        self.z
            .unpack(tx)
            .expect("solution packed from the same problem")
    }

    pub fn covariances(&self, tx: &[usize]) -> Vec<CMatrix> {
        self.factors(tx).iter().map(|b| b * b.adjoint()).collect()
    }
}

fn block_energies(p: &ToneProblem, z: &[f64]) -> Vec<f64> {
    let mut off = 0;
    p.tx.iter()
        .map(|&t| {
            let e = z[off..off + 2 * t * t].iter().map(|v| v * v).sum();
            off += 2 * t * t;
            e
        })
        .collect()
}

/// Maximizes the tone Lagrangian, warm-started from `warm` when given.
pub fn solve_tone(
    p: &ToneProblem,
    warm: Option<&FactorVector>,
    opts: &LbfgsOptions,
) -> Result<ToneSolution> {
    if let Some(user) = p.unbounded_user() {
        return Err(Error::UnboundedTone { user });
    }
    let mut z = match warm {
        Some(w) if w.0.len() == p.dim() && w.0.iter().all(|v| v.is_finite()) => w.0.clone(),
        _ => p.cold_start().0,
    };
    let mut ws = kernel::Workspace::new(p);
    let mut iterations = 0;
    let mut result;
    let mut escapes = 0;
    loop {
        result = minimize(
            |x, g| {
                let v = kernel::value_and_gradient(p, x, g, &mut ws);
                g.iter_mut().for_each(|gi| *gi = -*gi);
                -v
            },
            z,
            opts,
        );
        iterations += result.iterations;
        z = result.x.clone();
        if escapes == MAX_ESCAPES || !escape_saddle(p, &mut z, &mut ws) {
            break;
        }
        escapes += 1;
    }
    let rates = kernel::greedy_rates(p, &z, &mut ws);
    Ok(ToneSolution {
        energies: block_energies(p, &z),
        z: FactorVector(z),
        value: -result.value,
        iterations,
        converged: result.converged,
        rates,
    })
}

/// At a stationary point of the factor problem a user may still have a
/// direction of positive curvature in covariance space (its covariance is
/// rank-deficient). Adds power along the top eigenvector of `∂ℓ/∂R_u` for
/// such users; returns whether anything changed.
fn escape_saddle(p: &ToneProblem, z: &mut [f64], ws: &mut kernel::Workspace) -> bool {
    let grads = kernel::covariance_gradients(p, z, ws);
    let mut changed = false;
    let mut off = 0;
    for (u, &t) in p.tx.iter().enumerate() {
        let m = CMatrix::from_column_slice(t, t, &grads[u]);
        let (values, vectors) = linalg::hermitian_eigen(&m);
        let top = values[t - 1];
        let reference = p.w[u] + (top + p.w[u]).abs();
        if top > KKT_TOL * reference {
            let v = vectors.column(t - 1);
            let scale = COLD_START;
            for j in 0..t {
                for i in 0..t {
                    let add = v[i] * v[j].conj() * scale;
                    let k = off + 2 * (i + j * t);
                    z[k] += add.re;
                    z[k + 1] += add.im;
                }
            }
            changed = true;
        }
        off += 2 * t * t;
    }
    changed
}
