//! Problem and solution data: channels, covariance plans, synthetic channel
//! generation, noise whitening and the dual broadcast channel.

mod io;

pub use io::{
    load_channel, load_report, read_channel, read_report, save_channel, save_report, write_channel,
    write_report, ReportFile,
};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Per-tone, per-user channel matrices of a multiple-access channel.
///
/// `h[n][u]` is the noise-whitened `rx × tx[u]` matrix of user `u` on tone
/// `n`. `c_b` is 1 for complex and 2 for real baseband.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    c_b: u32,
    rx: usize,
    tx: Vec<usize>,
    h: Vec<Vec<CMatrix>>,
}

impl ChannelSet {
    pub fn new(c_b: u32, rx: usize, tx: Vec<usize>, h: Vec<Vec<CMatrix>>) -> Result<Self> {
        if c_b != 1 && c_b != 2 {
            return Err(Error::validation(format!("c_b must be 1 or 2, got {c_b}")));
        }
        if rx == 0 {
            return Err(Error::validation("L_y must be positive"));
        }
        if tx.is_empty() {
            return Err(Error::validation("at least one user is required"));
        }
        if let Some(u) = tx.iter().position(|&t| t == 0) {
            return Err(Error::validation(format!("L_x[{u}] must be positive")));
        }
        if h.is_empty() {
            return Err(Error::validation("at least one tone is required"));
        }
        for (n, tone) in h.iter().enumerate() {
            if tone.len() != tx.len() {
                return Err(Error::validation(format!(
                    "tone {n} has {} users, expected {}",
                    tone.len(),
                    tx.len()
                )));
            }
            for (u, m) in tone.iter().enumerate() {
                if m.nrows() != rx || m.ncols() != tx[u] {
                    return Err(Error::validation(format!(
                        "H at (n={n}, u={u}) has shape {}x{}, expected {rx}x{}",
                        m.nrows(),
                        m.ncols(),
                        tx[u]
                    )));
                }
                if !linalg::is_finite(m) {
                    return Err(Error::validation(format!(
                        "H at (n={n}, u={u}) has a non-finite entry"
                    )));
                }
            }
        }
        Ok(Self { c_b, rx, tx, h })
    }

    pub fn c_b(&self) -> u32 {
        self.c_b
    }

    pub fn num_users(&self) -> usize {
        self.tx.len()
    }

    pub fn num_tones(&self) -> usize {
        self.h.len()
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx
    }

    pub fn tx_antennas(&self) -> &[usize] {
        &self.tx
    }

    /// Aggregate transmit dimension `Σ_u L_x[u]`.
    pub fn total_tx(&self) -> usize {
        self.tx.iter().sum()
    }

    pub fn h(&self, tone: usize, user: usize) -> &CMatrix {
        &self.h[tone][user]
    }

    pub fn tone(&self, tone: usize) -> &[CMatrix] {
        &self.h[tone]
    }

    pub fn matrices(&self) -> &[Vec<CMatrix>] {
        &self.h
    }

    /// Restriction to a subset of tones, keeping their order.
    pub fn select_tones(&self, tones: &[usize]) -> Result<Self> {
        let h = tones.iter().map(|&n| self.h[n].clone()).collect();
        Self::new(self.c_b, self.rx, self.tx.clone(), h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fading {
    IidRayleigh,
    KroneckerExponential,
}

/// Parameters of the synthetic channel generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub users: usize,
    pub rx: usize,
    pub tx: Vec<usize>,
    pub tones: usize,
    pub c_b: u32,
    pub fading: Fading,
    pub rho_tx: f64,
    pub rho_rx: f64,
    pub taps: usize,
    pub seed: u64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            users: 4,
            rx: 4,
            tx: vec![2; 4],
            tones: 16,
            c_b: 1,
            fading: Fading::KroneckerExponential,
            rho_tx: 0.5,
            rho_rx: 0.5,
            taps: 3,
            seed: 0,
        }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.rx == 0 || self.tones == 0 {
            return Err(Error::validation("users, rx and tones must be positive"));
        }
        if self.tx.len() != self.users {
            return Err(Error::validation(format!(
                "tx has {} entries for {} users",
                self.tx.len(),
                self.users
            )));
        }
        if self.tx.iter().any(|&t| t == 0) {
            return Err(Error::validation("tx antennas must be positive"));
        }
        if self.c_b != 1 && self.c_b != 2 {
            return Err(Error::validation(format!(
                "c_b must be 1 or 2, got {}",
                self.c_b
            )));
        }
        for (name, rho) in [("rho_tx", self.rho_tx), ("rho_rx", self.rho_rx)] {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::validation(format!(
                    "{name} must lie in [0, 1), got {rho}"
                )));
            }
        }
        if self.taps == 0 || self.taps > self.tones {
            return Err(Error::validation(format!(
                "taps must lie in [1, tones={}], got {}",
                self.tones, self.taps
            )));
        }
        if self.c_b == 2 && self.taps != 1 {
            return Err(Error::validation(
                "real baseband channels are generated flat (taps = 1)",
            ));
        }
        Ok(())
    }
}

/// Symmetric square root of the exponential correlation matrix `[R]_ij = ρ^|i-j|`.
fn exp_correlation_sqrt(n: usize, rho: f64) -> CMatrix {
    let r = DMatrix::<f64>::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let eig = SymmetricEigen::new(r);
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let s = eig.eigenvalues[k].max(0.0).sqrt();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] +=
                    Complex64::new(s * eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)], 0.0);
            }
        }
    }
    out
}

/// Draws a channel realization. Deterministic in `spec` (seed included).
///
/// Each user gets `taps` independent delay taps with entries of variance
/// `1/taps`, so every tone has unit average gain per antenna pair; tones
/// are the DFT of the zero-padded tap sequence.
pub fn generate_channel(spec: &ChannelSpec) -> Result<ChannelSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rx_sqrt = exp_correlation_sqrt(spec.rx, spec.rho_rx);
    let tap_scale = (1.0 / spec.taps as f64).sqrt();
    let mut h = vec![Vec::with_capacity(spec.users); spec.tones];
    for u in 0..spec.users {
        let tx = spec.tx[u];
        let tx_sqrt = exp_correlation_sqrt(tx, spec.rho_tx);
        let mut taps = Vec::with_capacity(spec.taps);
        for _ in 0..spec.taps {
            let g = CMatrix::from_fn(spec.rx, tx, |_, _| {
                if spec.c_b == 2 {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(tap_scale * x, 0.0)
                } else {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(a, b) * (tap_scale * std::f64::consts::FRAC_1_SQRT_2)
                }
            });
            let g = match spec.fading {
                Fading::IidRayleigh => g,
                Fading::KroneckerExponential => &rx_sqrt * g * &tx_sqrt,
            };
            taps.push(g);
        }
        for (n, tone) in h.iter_mut().enumerate() {
            let mut m = CMatrix::zeros(spec.rx, tx);
            for (l, g) in taps.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (n * l) as f64 / spec.tones as f64;
                m += g * Complex64::from_polar(1.0, phase);
            }
            tone.push(m);
        }
    }
    ChannelSet::new(spec.c_b, spec.rx, spec.tx.clone(), h)
}

/// Whitens a raw channel against correlated noise: `N^{-1/2} H`.
pub fn whiten(h_raw: &CMatrix, noise_cov: &CMatrix) -> Result<CMatrix> {
    if noise_cov.nrows() != noise_cov.ncols() || noise_cov.nrows() != h_raw.nrows() {
        return Err(Error::validation(format!(
            "noise covariance {}x{} does not match channel with {} rows",
            noise_cov.nrows(),
            noise_cov.ncols(),
            h_raw.nrows()
        )));
    }
    let asym = linalg::max_abs(&(noise_cov - noise_cov.adjoint()));
    if asym > 1e-10 * (1.0 + linalg::max_abs(noise_cov)) {
        return Err(Error::NotPd("noise covariance is not Hermitian".into()));
    }
    Ok(linalg::inv_sqrt_hpd(noise_cov)? * h_raw)
}

/// Broadcast channel: one transmitter with `tx` antennas, user `u` receiving
/// on `rx[u]` antennas through `h[n][u]` of shape `rx[u] × tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastChannel {
    pub c_b: u32,
    pub tx: usize,
    pub rx: Vec<usize>,
    pub h: Vec<Vec<CMatrix>>,
}

/// Broadcast channel dual to `mac`: user `u` sees `H[n][U-1-u]ᴴ`.
pub fn dual_bc_channel(mac: &ChannelSet) -> BroadcastChannel {
    let users = mac.num_users();
    let h = mac
        .matrices()
        .iter()
        .map(|tone| (0..users).map(|u| tone[users - 1 - u].adjoint()).collect())
        .collect();
    BroadcastChannel {
        c_b: mac.c_b(),
        tx: mac.rx_antennas(),
        rx: mac.tx_antennas().iter().rev().copied().collect(),
        h,
    }
}

/// Multiple-access channel dual to `bc`; inverse of [`dual_bc_channel`].
pub fn dual_mac_channel(bc: &BroadcastChannel) -> Result<ChannelSet> {
    let users = bc.rx.len();
    let h =
        bc.h.iter()
            .map(|tone| (0..users).map(|u| tone[users - 1 - u].adjoint()).collect())
            .collect();
    ChannelSet::new(bc.c_b, bc.tx, bc.rx.iter().rev().copied().collect(), h)
}

/// Transmit covariances `r[n][u]` for every tone and user.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePlan {
    r: Vec<Vec<CMatrix>>,
}

impl CovariancePlan {
    pub fn new(r: Vec<Vec<CMatrix>>) -> Self {
        Self { r }
    }

    pub fn zeros(ch: &ChannelSet) -> Self {
        let r = (0..ch.num_tones())
            .map(|_| {
                ch.tx_antennas()
                    .iter()
                    .map(|&t| CMatrix::zeros(t, t))
                    .collect()
            })
            .collect();
        Self { r }
    }

    /// `R = B Bᴴ` for every block.
    pub fn from_factors(factors: &[Vec<CMatrix>]) -> Self {
        let r = factors
            .iter()
            .map(|tone| tone.iter().map(|b| b * b.adjoint()).collect())
            .collect();
        Self { r }
    }

    pub fn num_tones(&self) -> usize {
        self.r.len()
    }

    pub fn r(&self, tone: usize, user: usize) -> &CMatrix {
        &self.r[tone][user]
    }

    pub fn tone(&self, tone: usize) -> &[CMatrix] {
        &self.r[tone]
    }

    pub fn matrices(&self) -> &[Vec<CMatrix>] {
        &self.r
    }

    /// Per-user energies `Σ_n tr R[n][u]`, summed in tone order.
    pub fn energies(&self) -> Vec<f64> {
        let users = self.r.first().map_or(0, Vec::len);
        let mut e = vec![0.0; users];
        for tone in &self.r {
            for (u, m) in tone.iter().enumerate() {
                e[u] += linalg::trace_re(m);
            }
        }
        e
    }

    pub fn scale_user(&mut self, user: usize, factor: f64) {
        let f = Complex64::new(factor, 0.0);
        for tone in &mut self.r {
            tone[user] *= f;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let f = Complex64::new(factor, 0.0);
        Self {
            r: self
                .r
                .iter()
                .map(|tone| tone.iter().map(|m| m * f).collect())
                .collect(),
        }
    }

    /// Checks shapes against `ch` and the Hermitian PSD invariants.
    pub fn validate(&self, ch: &ChannelSet) -> Result<()> {
        if self.r.len() != ch.num_tones() {
            return Err(Error::validation(format!(
                "plan has {} tones, channel has {}",
                self.r.len(),
                ch.num_tones()
            )));
        }
        for (n, tone) in self.r.iter().enumerate() {
            if tone.len() != ch.num_users() {
                return Err(Error::validation(format!(
                    "plan tone {n} has {} users",
                    tone.len()
                )));
            }
            for (u, m) in tone.iter().enumerate() {
                let t = ch.tx_antennas()[u];
                if m.nrows() != t || m.ncols() != t {
                    return Err(Error::validation(format!(
                        "R at (n={n}, u={u}) has shape {}x{}, expected {t}x{t}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                linalg::check_covariance(m, &format!("R at (n={n}, u={u})"))?;
            }
        }
        Ok(())
    }
}

/// Per-tone and total rates under one decoding order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAllocation {
    /// `per_tone[n][u]`, bits per (real or complex) dimension.
    pub per_tone: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    /// Decoding order, `order[0]` decoded first.
    pub order: Vec<usize>,
}

impl RateAllocation {
    pub fn new(per_tone: Vec<Vec<f64>>, order: Vec<usize>) -> Self {
        let users = order.len();
        let mut totals = vec![0.0; users];
        for tone in &per_tone {
            for (u, &b) in tone.iter().enumerate() {
                totals[u] += b;
            }
        }
        Self {
            per_tone,
            totals,
            order,
        }
    }
}
