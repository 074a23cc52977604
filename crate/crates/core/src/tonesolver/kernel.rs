//! Allocation-free evaluation of the per-tone Lagrangian and its gradient
//! over packed factor coordinates.
//!
//! All matrices are column-major flat buffers; `(i, j)` of an `r × c`
//! matrix lives at `i + j * r`.

use num_complex::Complex64;

use super::ToneProblem;
use crate::linalg::LN_2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub(crate) struct Workspace {
    /// `F_u = H_u B_u`, per user.
    f: Vec<Vec<Complex64>>,
    /// `B_u`, per user.
    b: Vec<Vec<Complex64>>,
    s: Vec<Complex64>,
    l: Vec<Complex64>,
    /// `ln det S_k` for each descending position.
    ln_det: Vec<f64>,
    /// `T_k = Σ_{k' ≥ k} δ_k' S_k'^{-1}`, per descending position.
    t: Vec<Vec<Complex64>>,
    inv: Vec<Complex64>,
    linv: Vec<Complex64>,
    p: Vec<Complex64>,
}

impl Workspace {
    pub(crate) fn new(p: &ToneProblem) -> Self {
        let rx = p.rx;
        let users = p.tx.len();
        Self {
            f: p.tx.iter().map(|&t| vec![ZERO; rx * t]).collect(),
            b: p.tx.iter().map(|&t| vec![ZERO; t * t]).collect(),
            s: vec![ZERO; rx * rx],
            l: vec![ZERO; rx * rx],
            ln_det: vec![0.0; users],
            t: vec![vec![ZERO; rx * rx]; users],
            inv: vec![ZERO; rx * rx],
            linv: vec![ZERO; rx * rx],
            p: vec![ZERO; rx * p.tx.iter().copied().max().unwrap_or(0)],
        }
    }
}

/// In-place lower Cholesky of the Hermitian PD `a` (n × n) into `l`.
/// Returns `ln det a`.
fn cholesky(a: &[Complex64], l: &mut [Complex64], n: usize) -> f64 {
    l.iter_mut().for_each(|v| *v = ZERO);
    let mut ln_det = 0.0;
    for j in 0..n {
        let mut d = a[j + j * n].re;
        for k in 0..j {
            d -= l[j + k * n].norm_sqr();
        }
        // Arguments are I + PSD, so d ≥ 1 up to round-off.
        let d = d.max(f64::MIN_POSITIVE).sqrt();
        l[j + j * n] = Complex64::new(d, 0.0);
        ln_det += 2.0 * d.ln();
        for i in (j + 1)..n {
            let mut v = a[i + j * n];
            for k in 0..j {
                v -= l[i + k * n] * l[j + k * n].conj();
            }
            l[i + j * n] = v / d;
        }
    }
    ln_det
}

/// `a^{-1} = L^{-H} L^{-1}` from the Cholesky factor.
fn inverse_from_cholesky(l: &[Complex64], linv: &mut [Complex64], out: &mut [Complex64], n: usize) {
    linv.iter_mut().for_each(|v| *v = ZERO);
    for j in 0..n {
        linv[j + j * n] = Complex64::new(1.0 / l[j + j * n].re, 0.0);
        for i in (j + 1)..n {
            let mut v = ZERO;
            for k in j..i {
                v -= l[i + k * n] * linv[k + j * n];
            }
            linv[i + j * n] = v / l[i + i * n].re;
        }
    }
    for j in 0..n {
        for i in j..n {
            let mut v = ZERO;
            for k in i..n {
                v += linv[k + i * n].conj() * linv[k + j * n];
            }
            out[i + j * n] = v;
            out[j + i * n] = v.conj();
        }
    }
}

fn load_factors(p: &ToneProblem, z: &[f64], ws: &mut Workspace) {
    let mut off = 0;
    for (u, &t) in p.tx.iter().enumerate() {
        for (k, b) in ws.b[u].iter_mut().enumerate() {
            *b = Complex64::new(z[off + 2 * k], z[off + 2 * k + 1]);
        }
        off += 2 * t * t;
    }
}

/// Fills `F_u`, the cumulative log-determinants and (when `need_inverse`) the
/// suffix sums `T_k`. Returns the log-det part of the objective in nats
/// scaled by `δ` (before the `1/(c_b ln 2)` factor).
fn forward(p: &ToneProblem, z: &[f64], ws: &mut Workspace, need_inverse: bool) -> f64 {
    let rx = p.rx;
    load_factors(p, z, ws);
    for (u, &t) in p.tx.iter().enumerate() {
        let h = p.h[u].as_slice();
        let b = &ws.b[u];
        let f = &mut ws.f[u];
        for j in 0..t {
            for i in 0..rx {
                let mut v = ZERO;
                for k in 0..t {
                    v += h[i + k * rx] * b[k + j * t];
                }
                f[i + j * rx] = v;
            }
        }
    }

    ws.s.iter_mut().for_each(|v| *v = ZERO);
    for i in 0..rx {
        ws.s[i + i * rx] = Complex64::new(1.0, 0.0);
    }
    let mut weighted = 0.0;
    let users = p.tx.len();
    for k in 0..users {
        let u = p.desc[k];
        let t = p.tx[u];
        let f = &ws.f[u];
        for j in 0..rx {
            for i in j..rx {
                let mut v = ZERO;
                for c in 0..t {
                    v += f[i + c * rx] * f[j + c * rx].conj();
                }
                ws.s[i + j * rx] += v;
                if i != j {
                    ws.s[j + i * rx] += v.conj();
                }
            }
        }
        ws.ln_det[k] = cholesky(&ws.s, &mut ws.l, rx);
        weighted += p.delta[k] * ws.ln_det[k];
        if need_inverse {
            if p.delta[k] > 0.0 {
                inverse_from_cholesky(&ws.l, &mut ws.linv, &mut ws.inv, rx);
                for (dst, src) in ws.t[k].iter_mut().zip(&ws.inv) {
                    *dst = src * p.delta[k];
                }
            } else {
                ws.t[k].iter_mut().for_each(|v| *v = ZERO);
            }
        }
    }
    if need_inverse {
        for k in (0..users.saturating_sub(1)).rev() {
            let (head, tail) = ws.t.split_at_mut(k + 1);
            for (dst, src) in head[k].iter_mut().zip(&tail[0]) {
                *dst += src;
            }
        }
    }
    weighted
}

fn penalty(p: &ToneProblem, ws: &Workspace) -> f64 {
    ws.b.iter()
        .zip(&p.w)
        .map(|(b, w)| w * b.iter().map(|v| v.norm_sqr()).sum::<f64>())
        .sum()
}

pub(crate) fn value(p: &ToneProblem, z: &[f64], ws: &mut Workspace) -> f64 {
    let weighted = forward(p, z, ws, false);
    weighted * p.scale() - penalty(p, ws)
}

/// Objective and gradient with respect to the packed real coordinates.
pub(crate) fn value_and_gradient(
    p: &ToneProblem,
    z: &[f64],
    grad: &mut [f64],
    ws: &mut Workspace,
) -> f64 {
    let rx = p.rx;
    let scale = p.scale();
    let weighted = forward(p, z, ws, true);
    let value = weighted * scale - penalty(p, ws);

    let mut off = 0;
    for (u, &t) in p.tx.iter().enumerate() {
        let h = p.h[u].as_slice();
        let tk = &ws.t[p.pos[u]];
        let f = &ws.f[u];
        // P = T F_u
        for j in 0..t {
            for i in 0..rx {
                let mut v = ZERO;
                for k in 0..rx {
                    v += tk[i + k * rx] * f[k + j * rx];
                }
                ws.p[i + j * rx] = v;
            }
        }
        // G_u = 2 (scale · H_uᴴ P − w_u B_u)
        let b = &ws.b[u];
        for j in 0..t {
            for i in 0..t {
                let mut v = ZERO;
                for k in 0..rx {
                    v += h[k + i * rx].conj() * ws.p[k + j * rx];
                }
                let g = (v * scale - b[i + j * t] * p.w[u]) * 2.0;
                let idx = off + 2 * (i + j * t);
                grad[idx] = g.re;
                grad[idx + 1] = g.im;
            }
        }
        off += 2 * t * t;
    }
    value
}

/// Per-user rates under the greedy order and the cumulative log-dets, from
/// the most recent forward pass.
pub(crate) fn greedy_rates(p: &ToneProblem, z: &[f64], ws: &mut Workspace) -> Vec<f64> {
    forward(p, z, ws, false);
    let mut rates = vec![0.0; p.tx.len()];
    let mut prev = 0.0;
    for (k, &u) in p.desc.iter().enumerate() {
        let b = (ws.ln_det[k] - prev) / (LN_2 * p.c_b as f64);
        rates[u] = if b < 1e-12 { 0.0 } else { b };
        prev = ws.ln_det[k];
    }
    rates
}

/// Euclidean gradient `∂ℓ/∂R_u` for every user (Hermitian `t × t`).
pub(crate) fn covariance_gradients(
    p: &ToneProblem,
    z: &[f64],
    ws: &mut Workspace,
) -> Vec<Vec<Complex64>> {
    forward(p, z, ws, true);
    let rx = p.rx;
    let scale = p.scale();
    p.tx.iter()
        .enumerate()
        .map(|(u, &t)| {
            let h = p.h[u].as_slice();
            let tk = &ws.t[p.pos[u]];
            let mut m = vec![ZERO; t * t];
            for j in 0..t {
                for i in 0..t {
                    let mut v = ZERO;
                    for a in 0..rx {
                        for bb in 0..rx {
                            v += h[a + i * rx].conj() * tk[a + bb * rx] * h[bb + j * rx];
                        }
                    }
                    m[i + j * t] = v * scale;
                }
                m[j + j * t] -= Complex64::new(p.w[u], 0.0);
            }
            m
        })
        .collect()
}
