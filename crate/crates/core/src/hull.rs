//! Time-sharing feasibility and convex-hull membership over rate vertices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rate vectors, one per decoding order (or per vertex of any origin).
pub type VertexSet = [Vec<f64>];

const PIVOT_TOL: f64 = 1e-12;

/// Finds `x ≥ 0` with `A x = b` by a phase-1 simplex with Bland's rule.
///
/// `a` is row-major with `rows × cols` entries. Returns `None` when the
/// minimal sum of infeasibilities exceeds `tol`.
pub fn feasible_point(
    a: &[f64],
    b: &[f64],
    rows: usize,
    cols: usize,
    tol: f64,
) -> Option<Vec<f64>> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    // Tableau: `cols` structural columns, `rows` artificials, then rhs.
    let width = cols + rows + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    for i in 0..rows {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            t[i * width + j] = sign * a[i * cols + j];
        }
        t[i * width + cols + i] = 1.0;
        t[i * width + width - 1] = sign * b[i];
    }
    // Objective row holds reduced costs of `min Σ artificials`.
    let obj = rows * width;
    for i in 0..rows {
        for j in 0..width {
            if j < cols || j == width - 1 {
                t[obj + j] -= t[i * width + j];
            }
        }
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    // Bland's rule cannot cycle; the bound only guards against round-off.
    let max_pivots = 50 * (rows + cols) + 1000;
    for _ in 0..max_pivots {
        let Some(enter) = (0..cols + rows).find(|&j| t[obj + j] < -PIVOT_TOL) else {
            break;
        };
        let ratio = |i: usize| {
            let coef = t[i * width + enter];
            (coef > PIVOT_TOL).then(|| t[i * width + width - 1] / coef)
        };
        let best = (0..rows).filter_map(ratio).fold(f64::INFINITY, f64::min);
        let leave = (0..rows)
            .filter(|&i| ratio(i).is_some_and(|q| q <= best + 1e-12 * (1.0 + best.abs())))
            .min_by_key(|&i| basis[i]);
        let Some(r) = leave else {
            // Unbounded direction; cannot happen for a sum of artificials.
            break;
        };
        pivot(&mut t, width, rows + 1, r, enter);
        basis[r] = enter;
    }
    let infeasibility = -t[obj + width - 1];
    if infeasibility > tol {
        return None;
    }
    let mut x = vec![0.0; cols];
    for (i, &j) in basis.iter().enumerate() {
        if j < cols {
            x[j] = t[i * width + width - 1].max(0.0);
        }
    }
    Some(x)
}

fn pivot(t: &mut [f64], width: usize, rows: usize, r: usize, c: usize) {
    let p = t[r * width + c];
    for j in 0..width {
        t[r * width + j] /= p;
    }
    for i in 0..rows {
        if i == r {
            continue;
        }
        let f = t[i * width + c];
        if f != 0.0 {
            for j in 0..width {
                t[i * width + j] -= f * t[r * width + j];
            }
            t[i * width + c] = 0.0;
        }
    }
}

fn dims(v: &VertexSet, target: &[f64]) -> Result<(usize, usize)> {
    if v.is_empty() {
        return Err(Error::validation("vertex set is empty"));
    }
    let m = target.len();
    if let Some(k) = v
        .iter()
        .position(|x| x.len() != m || x.iter().any(|e| !e.is_finite()))
    {
        return Err(Error::validation(format!(
            "vertex {k} is malformed for dimension {m}"
        )));
    }
    Ok((v.len(), m))
}

/// Fractions `α ≥ 0`, `Σα = 1` with `Σ_k α_k v_k ≥ b_min − 1e-9`, or
/// `None` when no such fractions exist.
pub fn timeshare_lp(v: &VertexSet, b_min: &[f64]) -> Result<Option<Vec<f64>>> {
    let (k, m) = dims(v, b_min)?;
    // Σ_k α_k v_k − s = b_min, Σ α = 1, with slacks s ≥ 0.
    let rows = m + 1;
    let cols = k + m;
    let mut a = vec![0.0; rows * cols];
    for u in 0..m {
        for j in 0..k {
            a[u * cols + j] = v[j][u];
        }
        a[u * cols + k + u] = -1.0;
    }
    for j in 0..k {
        a[m * cols + j] = 1.0;
    }
    let mut b = b_min.to_vec();
    b.push(1.0);
    let scale = 1.0 + b_min.iter().map(|x| x.abs()).sum::<f64>();
    let Some(x) = feasible_point(&a, &b, rows, cols, 1e-10 * scale) else {
        return Ok(None);
    };
    let mut alpha = x[..k].to_vec();
    let total: f64 = alpha.iter().sum();
    if !(total > 0.0) {
        return Ok(None);
    }
    alpha.iter_mut().for_each(|a| *a /= total);
    let mixed = mix(v, &alpha);
    if mixed.iter().zip(b_min).any(|(x, b)| *x < b - 1e-9) {
        return Ok(None);
    }
    Ok(Some(alpha))
}

/// `Σ_k α_k v_k`.
pub fn mix(v: &VertexSet, alpha: &[f64]) -> Vec<f64> {
    let m = v.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m];
    for (vk, a) in v.iter().zip(alpha) {
        for u in 0..m {
            out[u] += a * vk[u];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub inside: bool,
    /// Convex weights of the final iterate.
    pub weights: Vec<f64>,
    /// Distance from the final iterate to the target.
    pub distance: f64,
    pub iterations: usize,
    /// Frank-Wolfe duality gap at every iteration.
    pub gaps: Vec<f64>,
}

pub const FW_MAX_ITER: usize = 2000;

/// Projects `target` onto `conv(v)` by fully corrective Frank-Wolfe: each
/// iteration adds the vertex the linear oracle picks, then re-minimizes over
/// the hull of the active vertices (Wolfe's minor cycle). `inside` means the
/// distance is at most `tol·(1 + ‖target‖)`; the loop stops as soon as the
/// gap proves either verdict.
pub fn fw_membership(v: &VertexSet, target: &[f64], tol: f64) -> Result<Membership> {
    let tol_abs = tol * (1.0 + target.iter().map(|x| x * x).sum::<f64>().sqrt());
    wolfe(v, target, Some(tol_abs * tol_abs))
}

/// Nearest point of `conv(v)` to `target`. Returns the convex weights and
/// the distance.
pub fn nearest_point(v: &VertexSet, target: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = wolfe(v, target, None)?;
    Ok((m.weights, m.distance))
}

const MNP_TOL: f64 = 1e-14;
const MNP_WEIGHT_TOL: f64 = 1e-12;

/// With `tol2`, stops once `f ≤ tol2` or `f − gap > tol2`; without, runs to
/// optimality.
fn wolfe(v: &VertexSet, target: &[f64], tol2: Option<f64>) -> Result<Membership> {
    let (k, m) = dims(v, target)?;
    let p: Vec<DVector<f64>> = v
        .iter()
        .map(|x| DVector::from_iterator(m, x.iter().zip(target).map(|(a, t)| a - t)))
        .collect();
    let scale = p
        .iter()
        .map(|x| x.norm_squared())
        .fold(0.0, f64::max)
        .max(1.0);
    let start = (0..k)
        .min_by(|&a, &b| p[a].norm_squared().total_cmp(&p[b].norm_squared()))
        .unwrap();
    let mut set = vec![start];
    let mut lambda = vec![1.0];
    let mut x = p[start].clone();
    let mut gaps = Vec::new();
    let mut iterations = 0;

    loop {
        let f = x.norm_squared();
        let j = (0..k)
            .min_by(|&a, &b| x.dot(&p[a]).total_cmp(&x.dot(&p[b])))
            .unwrap();
        // ∇f = 2x.
        let gap = (2.0 * (f - x.dot(&p[j]))).max(0.0);
        gaps.push(gap);
        let decided = tol2.is_some_and(|t| f <= t || f - gap > t);
        if decided || gap <= MNP_TOL * scale || set.contains(&j) || iterations == FW_MAX_ITER {
            break;
        }
        set.push(j);
        lambda.push(0.0);
        loop {
            let mu = affine_min_norm(&p, &set);
            if mu.iter().all(|&u| u > MNP_WEIGHT_TOL) {
                lambda = mu;
                break;
            }
            // Step from `lambda` toward `mu` until a weight hits zero.
            let step = (0..set.len())
                .filter(|&i| mu[i] <= MNP_WEIGHT_TOL)
                .map(|i| lambda[i] / (lambda[i] - mu[i]))
                .filter(|t| t.is_finite())
                .fold(1.0, f64::min);
            for i in 0..set.len() {
                lambda[i] = (1.0 - step) * lambda[i] + step * mu[i];
            }
            let keep: Vec<usize> = (0..set.len())
                .filter(|&i| lambda[i] > MNP_WEIGHT_TOL)
                .collect();
            set = keep.iter().map(|&i| set[i]).collect();
            lambda = keep.iter().map(|&i| lambda[i]).collect();
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            if set.len() == 1 {
                break;
            }
        }
        x = set
            .iter()
            .zip(&lambda)
            .fold(DVector::zeros(m), |acc, (&i, &l)| acc + &p[i] * l);
        iterations += 1;
    }
    let mut weights = vec![0.0; k];
    for (&i, &l) in set.iter().zip(&lambda) {
        weights[i] = l;
    }
    let f = x.norm_squared();
    Ok(Membership {
        inside: tol2.is_some_and(|t| f <= t),
        weights,
        distance: f.sqrt(),
        iterations,
        gaps,
    })
}

/// Weights of the point of minimum norm on the affine hull of `p[set]`.
fn affine_min_norm(p: &[DVector<f64>], set: &[usize]) -> Vec<f64> {
    let s = set.len();
    // [PᵀP 1; 1ᵀ 0] [μ; ν] = [0; 1]
    let mut a = DMatrix::zeros(s + 1, s + 1);
    for i in 0..s {
        for j in 0..s {
            a[(i, j)] = p[set[i]].dot(&p[set[j]]);
        }
        a[(i, s)] = 1.0;
        a[(s, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| a.svd(true, true).solve(&rhs, 1e-12).unwrap());
    sol.rows(0, s).iter().copied().collect()
}

/// Every vertex with every subset of its coordinates zeroed. For a target
/// `b ≥ 0`, `b` is in the hull of this set iff some point of `conv(v)`
/// dominates `b`.
pub fn down_closure(v: &VertexSet) -> Vec<Vec<f64>> {
    let m = v.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(v.len() << m);
    for vk in v {
        for mask in 0..(1usize << m) {
            out.push(
                (0..m)
                    .map(|u| if mask >> u & 1 == 1 { 0.0 } else { vk[u] })
                    .collect(),
            );
        }
    }
    out
}
