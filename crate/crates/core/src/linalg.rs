//! Thin wrappers around the dense factorizations used by the sweeping
//! algorithms: sorted thin SVD, thin QR, and truncation-rank selection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative floor under which singular values count as zero for rank
/// decisions.
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-14;

/// Thin SVD with singular values sorted descending.
/// Returns `(u, sigma, v_t)` with `u: m×k`, `v_t: k×n`, `k = min(m, n)`.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON * 16.0, 1024)
        .ok_or_else(|| Error::SingularSystem("svd did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let vt_sorted = DMatrix::from_fn(order.len(), v_t.ncols(), |r, c| v_t[(order[r], c)]);
    Ok((u_sorted, sorted, vt_sorted))
}

/// Thin QR: `m = q·r` with `q: m×k` (orthonormal columns), `k = min(m, n)`.
pub fn thin_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    (q, r)
}

/// How aggressively each internal SVD of a T3-SVD sweep is truncated. The
/// criteria combine: a relative tail tolerance (discard the smallest tail
/// whose cumulative energy stays below `tol · ‖σ‖`) and hard rank caps.
#[derive(Debug, Clone, Default)]
pub struct Truncation {
    pub tol: Option<f64>,
    pub max_tucker: Option<Vec<usize>>,
    pub max_tt: Option<Vec<usize>>,
}

impl Truncation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn tolerance(tol: f64) -> Self {
        Self {
            tol: Some(tol),
            ..Self::default()
        }
    }

    pub fn ranks(max_tucker: Vec<usize>, max_tt: Vec<usize>) -> Self {
        Self {
            tol: None,
            max_tucker: Some(max_tucker),
            max_tt: Some(max_tt),
        }
    }

    pub(crate) fn tucker_cap(&self, i: usize) -> Option<usize> {
        self.max_tucker.as_ref().map(|v| v[i])
    }

    pub(crate) fn tt_cap(&self, i: usize) -> Option<usize> {
        self.max_tt.as_ref().map(|v| v[i])
    }
}

/// Number of singular values to keep: at least one, never below the
/// floor-relative-to-σ₁ cutoff, within `cap`, and within the tail-energy
/// tolerance when one is given.
pub fn kept_rank(sigma: &[f64], tol: Option<f64>, cap: Option<usize>) -> usize {
    if sigma.is_empty() {
        return 0;
    }
    let smax = sigma[0];
    let mut keep = sigma
        .iter()
        .take_while(|&&s| s > SINGULAR_VALUE_FLOOR * smax && s > 0.0)
        .count()
        .max(1);
    if let Some(tol) = tol {
        let total: f64 = sigma.iter().map(|s| s * s).sum();
        let budget = tol * tol * total;
        let mut tail = 0.0;
        let mut cut = sigma.len();
        for k in (1..=sigma.len()).rev() {
            tail += sigma[k - 1] * sigma[k - 1];
            if tail <= budget {
                cut = k - 1;
            } else {
                break;
            }
        }
        keep = keep.min(cut.max(1));
    }
    if let Some(cap) = cap {
        keep = keep.min(cap.max(1));
    }
    keep
}

/// Solve the quadratic `‖v + t·d‖ = radius` for the positive root.
pub fn boundary_step(v_norm_sq: f64, vd: f64, d_norm_sq: f64, radius: f64) -> f64 {
    let disc = vd * vd + d_norm_sq * (radius * radius - v_norm_sq);
    (-vd + disc.max(0.0).sqrt()) / d_norm_sq
}

/// Least-squares slope of `log(y)` against `log(x)`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

pub fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let gram = u.transpose() * u;
    (gram - DMatrix::identity(u.ncols(), u.ncols())).norm()
}

pub fn solve_lu(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::SingularSystem("lu solve failed".into()))
}

/// High-order central finite-difference stencils along a scalar parameter,
/// used as independent oracles by the verification suites.
pub mod fd {
    use nalgebra::DVector;

    /// First derivative, O(h⁴).
    pub fn d1(f: impl Fn(f64) -> DVector<f64>, h: f64) -> DVector<f64> {
        (f(-2.0 * h) - f(-h) * 8.0 + f(h) * 8.0 - f(2.0 * h)) / (12.0 * h)
    }

    /// Second derivative, O(h⁴).
    pub fn d2(f: impl Fn(f64) -> DVector<f64>, h: f64) -> DVector<f64> {
        (-f(-2.0 * h) + f(-h) * 16.0 - f(0.0) * 30.0 + f(h) * 16.0 - f(2.0 * h)) / (12.0 * h * h)
    }

    /// Third derivative, O(h⁴).
    pub fn d3(f: impl Fn(f64) -> DVector<f64>, h: f64) -> DVector<f64> {
        (f(-3.0 * h) * (1.0 / 8.0) - f(-2.0 * h) + f(-h) * (13.0 / 8.0) - f(h) * (13.0 / 8.0)
            + f(2.0 * h)
            - f(3.0 * h) * (1.0 / 8.0))
            / (h * h * h)
    }
}
