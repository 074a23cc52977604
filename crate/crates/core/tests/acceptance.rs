//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails. `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use maccanon::admission::{adm_mac, trace_region_2user, AdmOptions};
use maccanon::hull::fw_membership;
use maccanon::linalg::CMatrix;
use maccanon::model::{generate_channel, ChannelSet, ChannelSpec, CovariancePlan, Fading};
use maccanon::oracle::{brute_solve, exact_membership, waterfill_tones, BruteOptions};
use maccanon::ratecalc::{
    polymatroid_bound, rate_allocation, weighted_rate_identity, WeightVector,
};
use maccanon::solvers::{max_resmac, max_rmac, min_pmac, Flag, SolveReport, SolverOptions};
use maccanon::study::{timeshare_study, trial_instance, StudyConfig};
use maccanon::tonesolver::{tone_gradient, tone_objective, FactorVector, ToneProblem};

type Check = Result<String, String>;

fn fail<T>(msg: impl Into<String>) -> Result<T, String> {
    Err(msg.into())
}

fn cmat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

fn snr_energy(tones: usize, snr_db: f64) -> f64 {
    tones as f64 * 10f64.powf(snr_db / 10.0)
}

fn user_channels(ch: &ChannelSet, u: usize) -> Vec<CMatrix> {
    (0..ch.num_tones()).map(|n| ch.h(n, u).clone()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `log2 det(I + Σ_{u∈S} H_u R_u H_uᴴ) / c_b` by LU determinant.
fn subset_capacity(ch: &ChannelSet, plan: &CovariancePlan, subset: &[usize], tone: usize) -> f64 {
    let ly = ch.rx_antennas();
    let mut s = CMatrix::identity(ly, ly);
    for &u in subset {
        let h = ch.h(tone, u);
        s += h * plan.r(tone, u) * h.adjoint();
    }
    s.determinant().re.log2() / ch.c_b() as f64
}

fn gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let problems = 120;
    for _ in 0..problems {
        let users = rng.random_range(1..=3);
        let rx = rng.random_range(1..=3);
        let h: Vec<CMatrix> = (0..users)
            .map(|_| {
                let tx = rng.random_range(1..=3);
                cmat(&mut rng, rx, tx) * Complex64::new(2.0, 0.0)
            })
            .collect();
        let theta = WeightVector::new((0..users).map(|_| rng.random_range(0.1..2.0)).collect())
            .map_err(|e| e.to_string())?;
        let w: Vec<f64> = (0..users).map(|_| rng.random_range(0.1..2.0)).collect();
        let c_b = rng.random_range(1..=2);
        let p = ToneProblem::new(h, &theta, &w, c_b).map_err(|e| e.to_string())?;
        let z = FactorVector((0..p.dim()).map(|_| rng.random::<f64>() - 0.5).collect());
        let g = tone_gradient(&p, &z);
        let step = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..p.dim() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp.0[i] += step;
            zm.0[i] -= step;
            let fd = (tone_objective(&p, &zp) - tone_objective(&p, &zm)) / (2.0 * step);
            num += (g[i] - fd).powi(2);
            den += fd * fd;
        }
        let err = num.sqrt() / den.sqrt().max(1.0);
        worst = worst.max(err);
        if err > 1e-5 {
            return fail(format!("relative gradient error {err:.2e}"));
        }
    }
    Ok(format!(
        "{problems} problems, worst relative error {worst:.2e}"
    ))
}

fn single_user() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let tones = rng.random_range(1..=8);
        let real = i % 5 == 4;
        let spec = ChannelSpec {
            users: 1,
            rx: rng.random_range(1..=4),
            tx: vec![rng.random_range(1..=4)],
            tones,
            c_b: if real { 2 } else { 1 },
            fading: if i % 2 == 0 {
                Fading::IidRayleigh
            } else {
                Fading::KroneckerExponential
            },
            taps: if real {
                1
            } else {
                rng.random_range(1..=tones.min(3))
            },
            seed: 1000 + i,
            ..Default::default()
        };
        let ch = generate_channel(&spec).map_err(|e| e.to_string())?;
        let energy = snr_energy(tones, rng.random_range(0.0..20.0));
        let wf = waterfill_tones(&user_channels(&ch, 0), energy, ch.c_b())
            .map_err(|e| e.to_string())?
            .rate;
        let theta = WeightVector::equal(1);
        let a = max_rmac(&ch, &[energy], &theta, &opts).map_err(|e| e.to_string())?;
        let b = max_resmac(&ch, energy, &theta, &opts).map_err(|e| e.to_string())?;
        for (name, r) in [("max_rmac", a.rates[0]), ("max_resmac", b.rates[0])] {
            let e = rel(r, wf);
            worst = worst.max(e);
            if e > 1e-4 {
                return fail(format!("channel {i}: {name} {r} vs water-filling {wf}"));
            }
        }
    }
    Ok(format!("50 channels, worst relative gap {worst:.2e}"))
}

fn small_instances() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let tones = rng.random_range(1..=2);
        let spec = ChannelSpec {
            users: 2,
            rx: rng.random_range(1..=2),
            tx: vec![rng.random_range(1..=2), rng.random_range(1..=2)],
            tones,
            fading: Fading::IidRayleigh,
            taps: 1,
            seed: 2000 + i,
            ..Default::default()
        };
        let ch = generate_channel(&spec).map_err(|e| e.to_string())?;
        let energies: Vec<f64> = (0..2)
            .map(|_| snr_energy(tones, rng.random_range(0.0..15.0)))
            .collect();
        let theta = WeightVector::new(vec![rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)])
            .map_err(|e| e.to_string())?;
        let r = max_rmac(&ch, &energies, &theta, &opts).map_err(|e| e.to_string())?;
        let brute = brute_solve(
            &ch,
            &energies,
            &theta,
            &BruteOptions {
                seed: i,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let e = rel(r.objective, brute.value);
        worst = worst.max(e);
        if e > 5e-3 {
            return fail(format!(
                "instance {i}: max_rmac {} vs brute force {}",
                r.objective, brute.value
            ));
        }
    }
    Ok(format!("20 instances, worst relative gap {worst:.2e}"))
}

fn duality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let ch = generate_channel(&ChannelSpec {
            seed: 3000 + i,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let users = ch.num_users();
        let energies: Vec<f64> = (0..users)
            .map(|_| snr_energy(ch.num_tones(), rng.random_range(5.0..20.0)))
            .collect();
        let theta = WeightVector::new((0..users).map(|_| rng.random_range(0.5..1.5)).collect())
            .map_err(|e| e.to_string())?;
        let fwd = max_rmac(&ch, &energies, &theta, &opts).map_err(|e| e.to_string())?;
        let budget: f64 = fwd.w.iter().zip(&energies).map(|(w, e)| w * e).sum();
        let back = min_pmac(&ch, &fwd.rates, &fwd.w, &opts).map_err(|e| e.to_string())?;
        let used: f64 = fwd.w.iter().zip(&back.energies).map(|(w, e)| w * e).sum();
        let e = rel(used, budget);
        worst = worst.max(e);
        if e > 5e-3 {
            return fail(format!(
                "instance {i}: weighted energy {used} vs budget {budget} (flag {})",
                back.flag.code()
            ));
        }
    }
    Ok(format!("20 instances, worst relative gap {worst:.2e}"))
}

/// Every vertex of `r` against every subset bound on its own plan, and the
/// weighted identity on every plan.
fn check_polymatroid(ch: &ChannelSet, r: &SolveReport, theta: &WeightVector) -> Result<(), String> {
    let users = ch.num_users();
    r.verify(ch).map_err(|e| e.to_string())?;
    for (a, &pi) in r.allocations.iter().zip(&r.allocation_plan) {
        let plan = &r.plans[pi];
        for n in 0..ch.num_tones() {
            for mask in 1..(1usize << users) {
                let subset: Vec<usize> = (0..users).filter(|u| mask >> u & 1 == 1).collect();
                let bound = subset_capacity(ch, plan, &subset, n);
                let lib = polymatroid_bound(ch, plan, &subset, n).map_err(|e| e.to_string())?;
                if (lib - bound).abs() > 1e-9 {
                    return fail(format!("bound of {subset:?} on tone {n}: {lib} vs {bound}"));
                }
                let sum: f64 = subset.iter().map(|&u| a.per_tone[n][u]).sum();
                if sum > bound + 1e-9 {
                    return fail(format!(
                        "{}: subset {subset:?} on tone {n} carries {sum} > {bound}",
                        r.solver
                    ));
                }
            }
        }
    }
    for plan in &r.plans {
        for n in 0..ch.num_tones() {
            let (lhs, _) = weighted_rate_identity(ch, plan, theta, n).map_err(|e| e.to_string())?;
            let desc = theta.descending();
            let t = theta.values();
            let mut rhs = 0.0;
            for k in 0..users {
                let next = if k + 1 < users { t[desc[k + 1]] } else { 0.0 };
                rhs += (t[desc[k]] - next) * subset_capacity(ch, plan, &desc[..=k], n);
            }
            if (lhs - rhs).abs() > 1e-9 {
                return fail(format!("weighted identity on tone {n}: {lhs} vs {rhs}"));
            }
        }
    }
    Ok(())
}

fn polymatroid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let opts = SolverOptions::default();
    let mut reports = 0;
    for i in 0..6 {
        let users = 2 + i % 3;
        let tones = rng.random_range(2..=4);
        let ch = generate_channel(&ChannelSpec {
            users,
            rx: 2,
            tx: (0..users).map(|u| 1 + u % 2).collect(),
            tones,
            taps: 2,
            seed: 4000 + i as u64,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let energies = vec![snr_energy(tones, 10.0); users];
        let theta = WeightVector::new((0..users).map(|_| rng.random_range(0.2..1.0)).collect())
            .map_err(|e| e.to_string())?;
        let equal = WeightVector::equal(users);
        let a = max_rmac(&ch, &energies, &theta, &opts).map_err(|e| e.to_string())?;
        let tied = max_rmac(&ch, &energies, &equal, &opts).map_err(|e| e.to_string())?;
        let targets: Vec<f64> = tied.rates.iter().map(|r| 0.8 * r).collect();
        let b = min_pmac(&ch, &targets, &vec![1.0; users], &opts).map_err(|e| e.to_string())?;
        let c = max_resmac(&ch, energies.iter().sum(), &theta, &opts).map_err(|e| e.to_string())?;
        let d =
            adm_mac(&ch, &targets, &energies, &AdmOptions::default()).map_err(|e| e.to_string())?;
        for r in [&a, &tied, &b, &c, &d] {
            check_polymatroid(&ch, r, &theta)?;
            check_polymatroid(&ch, r, &equal)?;
            reports += 1;
        }
    }
    Ok(format!("{reports} reports from all four solvers, U = 2..4"))
}

fn admission() -> Check {
    let opts = SolverOptions::default();
    let mut counts = [0usize; 3];
    for i in 0..20u64 {
        let users = 2 + (i % 2) as usize;
        let ch = generate_channel(&ChannelSpec {
            users,
            rx: 2,
            tx: vec![2; users],
            tones: 4,
            taps: 2,
            seed: 5000 + i,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let energies = vec![snr_energy(4, 15.0); users];
        let r = max_rmac(&ch, &energies, &WeightVector::equal(users), &opts)
            .map_err(|e| e.to_string())?;
        for (scale, want_feasible) in [(0.9, true), (1.1, false)] {
            let b: Vec<f64> = r.rates.iter().map(|x| scale * x).collect();
            let v = adm_mac(&ch, &b, &energies, &AdmOptions::default())
                .map_err(|e| format!("instance {i}, scale {scale}: {e}"))?;
            counts[v.flag.code() as usize] += 1;
            if v.flag.is_feasible() != want_feasible {
                return fail(format!(
                    "instance {i}, scale {scale}: flag {}",
                    v.flag.code()
                ));
            }
            if v.flag.is_feasible() {
                v.verify(&ch).map_err(|e| e.to_string())?;
                if v.rates.iter().zip(&b).any(|(x, t)| *x < t - 1e-6) {
                    return fail(format!("instance {i}: rates {:?} short of {b:?}", v.rates));
                }
            } else {
                let lhs: f64 = v.theta.iter().zip(&b).map(|(t, x)| t * x).sum();
                let rhs: f64 = v.theta.iter().zip(&v.rates).map(|(t, x)| t * x).sum();
                if lhs <= rhs {
                    return fail(format!(
                        "instance {i}: infeasible verdict does not separate"
                    ));
                }
            }
        }
    }
    Ok(format!(
        "40 verdicts, flags 0/1/2 = {}/{}/{}",
        counts[0], counts[1], counts[2]
    ))
}

fn hull() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut inside = 0;
    for i in 0..500 {
        let m = rng.random_range(1..=4);
        let k = rng.random_range(1..=8);
        let v: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let mut a: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let s: f64 = a.iter().sum();
        a.iter_mut().for_each(|x| *x /= s);
        let mut t: Vec<f64> = (0..m)
            .map(|u| v.iter().zip(&a).map(|(x, w)| w * x[u]).sum())
            .collect();
        if i % 2 == 1 {
            // Push past the supporting hyperplane of a random direction.
            let mut d: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            d.iter_mut().for_each(|x| *x /= n);
            let dot = |p: &[f64]| p.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>();
            let top = v.iter().map(|x| dot(x)).fold(f64::NEG_INFINITY, f64::max);
            let step = top - dot(&t) + rng.random_range(0.01..1.0);
            t.iter_mut().zip(&d).for_each(|(x, y)| *x += step * y);
        }
        let fw = fw_membership(&v, &t, 1e-6).map_err(|e| e.to_string())?;
        let exact = exact_membership(&v, &t).map_err(|e| e.to_string())?;
        if fw.inside != exact {
            return fail(format!(
                "set {i} (m={m}, k={k}): Frank-Wolfe {} vs exact {exact}, distance {:.2e} after {} iterations",
                fw.inside, fw.distance, fw.iterations
            ));
        }
        inside += exact as usize;
    }
    Ok(format!("500 sets agree ({inside} inside)"))
}

fn timesharing() -> Check {
    let cfg = StudyConfig {
        tones: vec![1, 32],
        rhos: vec![0.85, 0.95],
        trials: 100,
        ..Default::default()
    };
    let cells = timeshare_study(&cfg).map_err(|e| e.to_string())?;
    let cell = |tones: usize, rho: f64| {
        cells
            .iter()
            .find(|c| c.tones == tones && c.rho == rho)
            .expect("cell present")
    };
    let mut worst: f64 = 0.0;
    for c in cells.iter().filter(|c| c.rho == 0.95) {
        for (t, trial) in c.trials.iter().enumerate() {
            if trial.flag != Some(Flag::TimeSharing) {
                continue;
            }
            let (ch, targets) =
                trial_instance(&cfg, c.tones, c.rho, t).map_err(|e| e.to_string())?;
            let r = min_pmac(&ch, &targets, &vec![1.0; cfg.users], &cfg.solver)
                .map_err(|e| e.to_string())?;
            if r.flag != Flag::TimeSharing {
                return fail(format!(
                    "N={} trial {t}: rerun gave flag {}",
                    c.tones,
                    r.flag.code()
                ));
            }
            let mut mixed = vec![0.0; cfg.users];
            for ((a, &pi), &alpha) in r.allocations.iter().zip(&r.allocation_plan).zip(&r.alpha) {
                worst = worst.max(-alpha);
                let again =
                    rate_allocation(&ch, &r.plans[pi], &a.order).map_err(|e| e.to_string())?;
                for u in 0..cfg.users {
                    mixed[u] += alpha * again.totals[u];
                }
            }
            worst = worst.max((r.alpha.iter().sum::<f64>() - 1.0).abs());
            for u in 0..cfg.users {
                worst = worst.max(targets[u] - mixed[u]);
            }
            if worst > 1e-8 {
                return fail(format!(
                    "N={} trial {t}: fraction constraints off by {worst:.2e}",
                    c.tones
                ));
            }
        }
    }
    let (one, many) = (cell(1, 0.95), cell(32, 0.95));
    let summary = format!(
        "P(N=1) = {:.2}, P(N=32) = {:.2}; mean alpha_max {:.3} / {:.3} (rho 0.95), {:.3} / {:.3} (rho 0.85, reference level 0.85); fraction error {worst:.1e}",
        one.timeshare_probability(),
        many.timeshare_probability(),
        one.mean_alpha_max(),
        many.mean_alpha_max(),
        cell(1, 0.85).mean_alpha_max(),
        cell(32, 0.85).mean_alpha_max(),
    );
    if one.timeshare_probability() > many.timeshare_probability() {
        Ok(summary)
    } else {
        fail(summary)
    }
}

fn region() -> Check {
    let ch = generate_channel(&ChannelSpec {
        users: 2,
        tx: vec![2, 2],
        seed: 3,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let energy = snr_energy(ch.num_tones(), 15.0);
    let t = trace_region_2user(&ch, &[energy; 2], 81, &AdmOptions::default())
        .map_err(|e| e.to_string())?;
    if t.points.len() != 81 {
        return fail(format!("{} points", t.points.len()));
    }
    let p = &t.points;
    let rise = (1..81)
        .map(|i| p[i].1 - p[i - 1].1)
        .fold(f64::NEG_INFINITY, f64::max);
    if rise > 0.0 {
        return fail(format!("boundary rises by {rise:.2e}"));
    }
    let dip = (1..80)
        .map(|i| 0.5 * (p[i - 1].1 + p[i + 1].1) - p[i].1)
        .fold(f64::NEG_INFINITY, f64::max);
    if dip > 2e-3 {
        return fail(format!("concavity violated by {dip:.2e}"));
    }
    let mut corner: f64 = 0.0;
    for k in 0..2 {
        corner = corner.max((t.corner_boundary[k] - t.corners[k].1).abs());
    }
    if corner > 2e-3 {
        return fail(format!("corner off the boundary by {corner:.2e}"));
    }
    let wf = |u| waterfill_tones(&user_channels(&ch, u), energy, ch.c_b()).map(|w| w.rate);
    let (c1, c2) = (
        wf(0).map_err(|e| e.to_string())?,
        wf(1).map_err(|e| e.to_string())?,
    );
    let axis = (p[0].1 - c2).abs().max((p[80].0 - c1).abs());
    if axis > 2e-3 {
        return fail(format!("axis intercepts off water-filling by {axis:.2e}"));
    }
    Ok(format!(
        "81 points, concavity slack {dip:.1e}, corner gap {corner:.1e}, axis gap {axis:.1e}, {} solves, {} undecided probes",
        t.solves, t.undecided
    ))
}

fn run_cli(dir: &Path, parallel: u32, args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = dir.join(format!("out-{parallel}"));
    let status = Command::new(env!("CARGO_BIN_EXE_maccanon"))
        .arg("--parallel")
        .arg(parallel.to_string())
        .args(args)
        .arg("-o")
        .arg(&out)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&out).map_err(|e| format!("{args:?}: {e}"))?;
    Ok((status.status.code().unwrap_or(-1), bytes))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let gen3 = [
        "--seed", "11", "gen", "--users", "3", "--rx", "2", "--tx", "1", "--tones", "8",
    ];
    let gen2 = [
        "--seed", "12", "gen", "--users", "2", "--rx", "2", "--tx", "2", "--tones", "4",
    ];
    for (args, name) in [(&gen3[..], "ch3.json"), (&gen2[..], "ch2.json")] {
        let (code, bytes) = run_cli(d, 1, args)?;
        if code != 0 {
            return fail(format!("gen exited {code}"));
        }
        std::fs::write(d.join(name), bytes).map_err(|e| e.to_string())?;
    }
    let cases: Vec<Vec<&str>> = vec![
        gen3.to_vec(),
        vec![
            "solve",
            "maxrmac",
            "--channel",
            "ch3.json",
            "--weights",
            "1",
            "0.7",
            "0.4",
        ],
        vec!["solve", "maxrmac", "--channel", "ch3.json"],
        vec![
            "solve",
            "minpmac",
            "--channel",
            "ch3.json",
            "--rates",
            "6",
            "6",
            "6",
        ],
        vec!["solve", "maxresmac", "--channel", "ch3.json"],
        vec![
            "solve",
            "admmac",
            "--channel",
            "ch3.json",
            "--rates",
            "8",
            "8",
            "8",
        ],
        vec!["trace", "--channel", "ch2.json", "--points", "9"],
        vec![
            "study-timeshare",
            "--tones",
            "1",
            "4",
            "--rhos",
            "0.9",
            "--trials",
            "6",
        ],
    ];
    for args in &cases {
        let (c1, one) = run_cli(d, 1, args)?;
        let (c4, four) = run_cli(d, 4, args)?;
        if c1 != c4 || one != four {
            return fail(format!("{args:?}: outputs differ (exit {c1} vs {c4})"));
        }
    }
    Ok(format!(
        "{} invocations byte-identical at --parallel 1 and 4",
        cases.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("gradient vs central differences", gradient),
        ("single-user optimality", single_user),
        ("small-instance optimality", small_instances),
        ("strong-duality round trip", duality),
        ("polymatroid suite", polymatroid),
        ("admission soundness sandwich", admission),
        ("hull cross-validation", hull),
        ("time-sharing reproduction", timesharing),
        ("region trace", region),
        ("CLI determinism", determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
