//! How often minimum-energy rate provisioning needs time-sharing, as a
//! function of the tone count and the loading factor.

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{generate_channel, ChannelSet, ChannelSpec, Fading};
use crate::oracle::waterfill_tones;
use crate::solvers::{min_pmac, Flag, SolverOptions};

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub tones: Vec<usize>,
    pub rhos: Vec<f64>,
    pub trials: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub users: usize,
    pub rx: usize,
    pub tx: usize,
    pub taps: usize,
    pub solver: SolverOptions,
    /// Run trials concurrently.
    pub parallel: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            tones: vec![1, 2, 4, 8, 16, 32, 64],
            rhos: vec![0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.99],
            trials: 100,
            snr_db: 15.0,
            seed: 0,
            users: 3,
            rx: 2,
            tx: 1,
            taps: 3,
            solver: SolverOptions::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub flag: Option<Flag>,
    pub alpha_max: f64,
    /// Largest shortfall of the time-shared rates below the targets, and
    /// the deviation of `Σα` from one.
    pub rate_violation: f64,
    pub alpha_sum_error: f64,
}

#[derive(Debug, Clone)]
pub struct StudyCell {
    pub tones: usize,
    pub rho: f64,
    pub trials: Vec<Trial>,
}

impl StudyCell {
    pub fn timeshare_count(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.flag == Some(Flag::TimeSharing))
            .count()
    }

    pub fn timeshare_probability(&self) -> f64 {
        self.timeshare_count() as f64 / self.trials.len().max(1) as f64
    }

    /// Mean dominant fraction over the time-shared trials (NaN if none).
    pub fn mean_alpha_max(&self) -> f64 {
        let ts: Vec<f64> = self
            .trials
            .iter()
            .filter(|t| t.flag == Some(Flag::TimeSharing))
            .map(|t| t.alpha_max)
            .collect();
        if ts.is_empty() {
            f64::NAN
        } else {
            ts.iter().sum::<f64>() / ts.len() as f64
        }
    }

    /// Trials reported infeasible or failing to converge.
    pub fn infeasible_count(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.flag.is_none_or(|f| f == Flag::Infeasible))
            .count()
    }
}

/// Channel and rate targets of one trial: targets are `rho` times each
/// user's single-user rate.
pub fn trial_instance(
    cfg: &StudyConfig,
    tones: usize,
    rho: f64,
    trial: usize,
) -> Result<(ChannelSet, Vec<f64>)> {
    let spec = ChannelSpec {
        users: cfg.users,
        rx: cfg.rx,
        tx: vec![cfg.tx; cfg.users],
        tones,
        c_b: 1,
        fading: Fading::IidRayleigh,
        // A single tone cannot resolve more than one tap.
        taps: cfg.taps.min(tones),
        seed: cfg.seed.wrapping_add(trial as u64),
        ..Default::default()
    };
    let ch = generate_channel(&spec)?;
    let energy = tones as f64 * 10f64.powf(cfg.snr_db / 10.0);
    let mut targets = Vec::with_capacity(cfg.users);
    for u in 0..cfg.users {
        let hs: Vec<_> = (0..tones).map(|n| ch.h(n, u).clone()).collect();
        targets.push(rho * waterfill_tones(&hs, energy, ch.c_b())?.rate);
    }
    Ok((ch, targets))
}

/// Runs one trial with unit energy prices.
pub fn run_trial(cfg: &StudyConfig, tones: usize, rho: f64, trial: usize) -> Result<Trial> {
    let (ch, targets) = trial_instance(cfg, tones, rho, trial)?;
    let w = vec![1.0; cfg.users];
    let report = match min_pmac(&ch, &targets, &w, &cfg.solver) {
        Ok(r) => r,
        Err(Error::NonConvergence { .. }) => {
            return Ok(Trial {
                flag: None,
                alpha_max: f64::NAN,
                rate_violation: f64::NAN,
                alpha_sum_error: f64::NAN,
            })
        }
        Err(e) => return Err(e),
    };
    let rate_violation = report
        .rates
        .iter()
        .zip(&targets)
        .map(|(r, t)| t - r)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Trial {
        flag: Some(report.flag),
        alpha_max: report.alpha_max(),
        rate_violation,
        alpha_sum_error: (report.alpha.iter().sum::<f64>() - 1.0).abs(),
    })
}

/// Every `(tones, rho)` cell of the sweep, tones-major.
pub fn timeshare_study(cfg: &StudyConfig) -> Result<Vec<StudyCell>> {
    if cfg.rhos.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::validation("loading factors must lie in (0, 1]"));
    }
    if cfg.tones.contains(&0) {
        return Err(Error::validation("tone counts must be positive"));
    }
    let mut cells = Vec::new();
    for &tones in &cfg.tones {
        for &rho in &cfg.rhos {
            let trials =
                exec::map_indexed(cfg.trials, cfg.parallel, |t| run_trial(cfg, tones, rho, t))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
            log::info!("tones={tones} rho={rho}: done");
            cells.push(StudyCell { tones, rho, trials });
        }
    }
    Ok(cells)
}
