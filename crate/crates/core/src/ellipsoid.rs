//! Central-cut ellipsoid method on the nonnegative orthant.
//!
//! The ellipsoid is `{y : (y − x)ᵀ A⁻¹ (y − x) ≤ 1}`. A cut with `g` keeps the
//! halfspace `gᵀ(y − x) ≤ 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Consecutive constraint cuts allowed before giving up.
pub const MAX_CONSTRAINT_CUTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub x: DVector<f64>,
    pub a: DMatrix<f64>,
    pub iterations: usize,
}

impl EllipsoidState {
    /// Ball of the given radius around `center`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let n = center.len();
        Self {
            x: DVector::from_vec(center),
            a: DMatrix::identity(n, n) * (radius * radius),
            iterations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn center(&self) -> &[f64] {
        self.x.as_slice()
    }

    /// `true` if `y` lies in the ellipsoid (with a small relative slack).
    pub fn contains(&self, y: &[f64]) -> bool {
        let d = DVector::from_column_slice(y) - &self.x;
        match self.a.clone().cholesky() {
            Some(ch) => d.dot(&ch.solve(&d)) <= 1.0 + 1e-9,
            None => false,
        }
    }

    fn symmetrize(&mut self) {
        let t = self.a.transpose();
        self.a = (&self.a + t) * 0.5;
    }

    /// Symmetrizes and lifts tiny or negative eigenvalues.
    fn repair(&mut self) {
        self.symmetrize();
        let eig = SymmetricEigen::new(self.a.clone());
        let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let floor = (top * 1e-14).max(f64::MIN_POSITIVE);
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        self.a = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        self.symmetrize();
    }
}

fn quad(a: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    g.dot(&(a * g))
}

/// `√(gᵀ A g)`.
pub fn stop_metric(state: &EllipsoidState, g: &[f64]) -> f64 {
    let g = DVector::from_column_slice(g);
    quad(&state.a, &g).max(0.0).sqrt()
}

/// One central cut with subgradient `g`.
pub fn ellipsoid_step(state: &mut EllipsoidState, g: &[f64]) -> Result<()> {
    let n = state.dim();
    if g.len() != n {
        return Err(Error::validation(format!(
            "cut of length {} for dimension {n}",
            g.len()
        )));
    }
    if g.iter().all(|&v| v == 0.0) || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("cut vector must be finite and nonzero"));
    }
    let g = DVector::from_column_slice(g);
    let mut q = quad(&state.a, &g);
    if !(q > 0.0) {
        state.repair();
        q = quad(&state.a, &g);
        if !(q > 0.0) {
            return Err(Error::EllipsoidBreakdown(q));
        }
    }
    if n == 1 {
        let half = state.a[(0, 0)].sqrt() / 2.0;
        state.x[0] -= g[0].signum() * half;
        state.a[(0, 0)] /= 4.0;
    } else {
        let u = n as f64;
        let gt = g / q.sqrt();
        let ag = &state.a * &gt;
        state.x -= &ag / (u + 1.0);
        let update = &ag * ag.transpose() * (2.0 / (u + 1.0));
        state.a = (&state.a - update) * (u * u / (u * u - 1.0));
        state.symmetrize();
    }
    state.iterations += 1;
    Ok(())
}

/// Cuts with `−e_u` until `x_u ≥ 0`.
pub fn constraint_cut(state: &mut EllipsoidState, u: usize) -> Result<()> {
    let mut lower = vec![f64::NEG_INFINITY; state.dim()];
    lower[u] = 0.0;
    cut_below(state, &lower)?;
    Ok(())
}

/// Cuts with `−e_u` on the most violated coordinate until `x ≥ lower`
/// componentwise (strictly above a positive bound). Returns the number of
/// cuts applied.
pub fn cut_below(state: &mut EllipsoidState, lower: &[f64]) -> Result<usize> {
    let mut cuts = 0;
    loop {
        let violated = (0..state.dim())
            .filter(|&u| {
                let x = state.x[u];
                if lower[u] > 0.0 {
                    x <= lower[u]
                } else {
                    x < lower[u]
                }
            })
            .min_by(|&a, &b| state.x[a].total_cmp(&state.x[b]));
        let Some(u) = violated else {
            return Ok(cuts);
        };
        if cuts == MAX_CONSTRAINT_CUTS {
            return Err(Error::EllipsoidCollapsed);
        }
        let mut g = vec![0.0; state.dim()];
        g[u] = -1.0;
        ellipsoid_step(state, &g)?;
        cuts += 1;
    }
}
