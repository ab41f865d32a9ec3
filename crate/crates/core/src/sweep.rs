//! Sweeping contraction schemes: probing a Tucker tensor train, probing a
//! tangent vector (the least-squares Jacobian `J` applied to a gauged
//! variation), and the adjoint sweep applying `Jᵀ`.
//!
//! One probe builds edge variables in four passes,
//!
//! ```text
//! ξ_i = U_iᵀ w_i                        (upward)
//! μ_i = μ_{i-1}ᵀ P_i(ξ_i)              (left to right)
//! ν_i = Q_{i+1}(ξ_{i+1}) ν_{i+1}       (right to left)
//! η_i = μ_{i-1}ᵀ O_i ν_i,  z_i = Ũ_i η_i   (downward)
//! ```
//!
//! and caches them; every subsequent `J`/`Jᵀ` application at the same point
//! and probe vectors reuses the cache. The corewise (non-manifold) variants
//! substitute the raw cores for `P`, `Q`, `O` and drop the orthogonality
//! requirements.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{GaugedVariation, ManifoldPoint};
use crate::t3::{Core, TuckerTensorTrain};

/// Contraction counts for one probe sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub basis_contractions: usize,
    pub partial_updates: usize,
    pub central_contractions: usize,
    pub expansions: usize,
}

/// Edge variables of one probe, reusable across `J`/`Jᵀ` applications.
#[derive(Debug, Clone)]
pub struct EdgeCache {
    owner: u64,
    w: Vec<DVector<f64>>,
    xi: Vec<DVector<f64>>,
    /// `mu[j]`: contraction of cores `0..j` (length-`r_j` row vector).
    mu: Vec<DVector<f64>>,
    /// `nu[j]`: contraction of cores `j+1..d` (length-`r_{j+1}` vector).
    nu: Vec<DVector<f64>>,
    /// Central contractions through the outer cores.
    eta: Vec<DVector<f64>>,
    /// Probes of the cached object.
    probes: Vec<DVector<f64>>,
    counts: OpCounts,
}

impl EdgeCache {
    pub fn probes(&self) -> &[DVector<f64>] {
        &self.probes
    }

    pub fn counts(&self) -> OpCounts {
        self.counts
    }

    pub fn probe_vectors(&self) -> &[DVector<f64>] {
        &self.w
    }
}

struct Families<'a> {
    /// Bases reducing the probe vectors and expanding `δη`.
    bases: &'a [DMatrix<f64>],
    /// Bases expanding `η` into probes of the point itself.
    expand: &'a [DMatrix<f64>],
    left: &'a [Core],
    right: &'a [Core],
    outer: &'a [Core],
}

impl<'a> Families<'a> {
    fn of_point(p: &'a ManifoldPoint) -> Self {
        Self {
            bases: p.bases(),
            expand: p.modified_bases(),
            left: p.left_cores(),
            right: p.right_cores(),
            outer: p.outer_cores(),
        }
    }

    fn of_t3(t: &'a TuckerTensorTrain) -> Self {
        Self {
            bases: t.bases(),
            expand: t.bases(),
            left: t.train().cores(),
            right: t.train().cores(),
            outer: t.train().cores(),
        }
    }

    fn d(&self) -> usize {
        self.bases.len()
    }
}

fn check_vectors(fam: &Families, w: &[DVector<f64>]) -> Result<()> {
    if w.len() != fam.d() {
        return Err(Error::ShapeMismatch(format!(
            "{} probe vectors for d = {}",
            w.len(),
            fam.d()
        )));
    }
    for (i, wi) in w.iter().enumerate() {
        if wi.len() != fam.bases[i].nrows() {
            return Err(Error::ShapeMismatch(format!(
                "probe vector {} has length {}, dimension is {}",
                i,
                wi.len(),
                fam.bases[i].nrows()
            )));
        }
    }
    Ok(())
}

fn sweep(fam: &Families, w: &[DVector<f64>], owner: u64) -> Result<EdgeCache> {
    check_vectors(fam, w)?;
    let d = fam.d();
    let mut counts = OpCounts::default();

    let xi: Vec<DVector<f64>> = (0..d)
        .map(|i| {
            counts.basis_contractions += 1;
            fam.bases[i].transpose() * &w[i]
        })
        .collect();

    let mut mu = vec![DVector::from_element(1, 1.0)];
    for j in 1..d {
        counts.partial_updates += 1;
        let prev = &mu[j - 1];
        mu.push(fam.left[j - 1].left_mid(prev, &xi[j - 1]));
    }

    let mut nu = vec![DVector::zeros(0); d];
    nu[d - 1] = DVector::from_element(1, 1.0);
    for j in (0..d - 1).rev() {
        counts.partial_updates += 1;
        nu[j] = fam.right[j + 1].mid_right(&xi[j + 1], &nu[j + 1]);
    }

    let mut eta = Vec::with_capacity(d);
    let mut probes = Vec::with_capacity(d);
    for s in 0..d {
        counts.central_contractions += 1;
        let e = fam.outer[s].central(&mu[s], &nu[s]);
        counts.expansions += 1;
        probes.push(&fam.expand[s] * &e);
        eta.push(e);
    }

    Ok(EdgeCache {
        owner,
        w: w.to_vec(),
        xi,
        mu,
        nu,
        eta,
        probes,
        counts,
    })
}

fn sweep_j(
    fam: &Families,
    cache: &EdgeCache,
    d_bases: &[DMatrix<f64>],
    d_cores: &[Core],
) -> Vec<DVector<f64>> {
    let d = fam.d();
    let dxi: Vec<DVector<f64>> = (0..d)
        .map(|i| d_bases[i].transpose() * &cache.w[i])
        .collect();

    // sig[j] pairs with mu[j]; built left to right.
    let mut sig = vec![DVector::from_element(1, 0.0)];
    for j in 1..d {
        let mut s = fam.right[j - 1].left_mid(&sig[j - 1], &cache.xi[j - 1]);
        s += d_cores[j - 1].left_mid(&cache.mu[j - 1], &cache.xi[j - 1]);
        s += fam.outer[j - 1].left_mid(&cache.mu[j - 1], &dxi[j - 1]);
        sig.push(s);
    }

    // tau[j] pairs with nu[j-1]; tau[d] = 0, built right to left.
    let mut tau = vec![DVector::zeros(0); d + 1];
    tau[d] = DVector::from_element(1, 0.0);
    for j in (1..d).rev() {
        let mut t = d_cores[j].mid_right(&cache.xi[j], &cache.nu[j]);
        t += fam.outer[j].mid_right(&dxi[j], &cache.nu[j]);
        t += fam.left[j].mid_right(&cache.xi[j], &tau[j + 1]);
        tau[j] = t;
    }

    (0..d)
        .map(|s| {
            let mut deta = fam.right[s].central(&sig[s], &cache.nu[s]);
            deta += fam.left[s].central(&cache.mu[s], &tau[s + 1]);
            deta += d_cores[s].central(&cache.mu[s], &cache.nu[s]);
            &fam.bases[s] * deta + &d_bases[s] * &cache.eta[s]
        })
        .collect()
}

fn outer3(a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Core {
    Core::from_fn(a.len(), b.len(), c.len(), |i, j, k| a[i] * b[j] * c[k])
}

fn sweep_jt(
    fam: &Families,
    cache: &EdgeCache,
    z_tilde: &[DVector<f64>],
) -> (Vec<DMatrix<f64>>, Vec<Core>) {
    let d = fam.d();
    let deta_t: Vec<DVector<f64>> = (0..d)
        .map(|s| fam.bases[s].transpose() * &z_tilde[s])
        .collect();

    // tau_t[j] pairs with mu[j]; built left to right.
    let mut tau_t = vec![DVector::from_element(1, 0.0)];
    for j in 1..d {
        let mut t = fam.left[j - 1].left_mid(&tau_t[j - 1], &cache.xi[j - 1]);
        t += fam.left[j - 1].left_mid(&cache.mu[j - 1], &deta_t[j - 1]);
        tau_t.push(t);
    }

    // sig_t[j] pairs with nu[j-1]; sig_t[d] = 0, built right to left.
    let mut sig_t = vec![DVector::zeros(0); d + 1];
    sig_t[d] = DVector::from_element(1, 0.0);
    for j in (1..d).rev() {
        let mut s = fam.right[j].mid_right(&deta_t[j], &cache.nu[j]);
        s += fam.right[j].mid_right(&cache.xi[j], &sig_t[j + 1]);
        sig_t[j] = s;
    }

    let mut d_bases = Vec::with_capacity(d);
    let mut d_cores = Vec::with_capacity(d);
    for s in 0..d {
        let dxi_t = fam.outer[s].central(&tau_t[s], &cache.nu[s])
            + fam.outer[s].central(&cache.mu[s], &sig_t[s + 1]);
        d_bases.push(&z_tilde[s] * cache.eta[s].transpose() + &cache.w[s] * dxi_t.transpose());
        let mut g = outer3(&tau_t[s], &cache.xi[s], &cache.nu[s]);
        g = g.add(&outer3(&cache.mu[s], &cache.xi[s], &sig_t[s + 1]));
        g = g.add(&outer3(&cache.mu[s], &deta_t[s], &cache.nu[s]));
        d_cores.push(g);
    }
    (d_bases, d_cores)
}

/// Probe a Tucker tensor train with raw cores: returns all `d` probes and a
/// cache for corewise Jacobian applications.
pub fn probe_t3(t: &TuckerTensorTrain, w: &[DVector<f64>]) -> Result<EdgeCache> {
    sweep(&Families::of_t3(t), w, 0)
}

/// Probe a manifold point through its orthogonal representations: returns
/// probes of the point and the edge variables consumed by [`apply_j`] and
/// [`apply_jt`].
pub fn probe_point(p: &ManifoldPoint, w: &[DVector<f64>]) -> Result<EdgeCache> {
    sweep(&Families::of_point(p), w, p.id())
}

fn check_cache(p: &ManifoldPoint, cache: &EdgeCache) -> Result<()> {
    if cache.owner != p.id() {
        return Err(Error::StaleCache {
            cache: cache.owner,
            point: p.id(),
        });
    }
    Ok(())
}

/// Apply the least-squares Jacobian for one probe-vector set: probes of the
/// tangent vector represented by `v`.
pub fn apply_j(
    p: &ManifoldPoint,
    cache: &EdgeCache,
    v: &GaugedVariation,
) -> Result<Vec<DVector<f64>>> {
    check_cache(p, cache)?;
    Ok(sweep_j(
        &Families::of_point(p),
        cache,
        v.basis_deltas(),
        v.core_deltas(),
    ))
}

/// Apply the transpose for one probe-vector set. The output is an ungauged
/// variation; callers apply the gauge projector.
pub fn apply_jt(
    p: &ManifoldPoint,
    cache: &EdgeCache,
    z_tilde: &[DVector<f64>],
) -> Result<GaugedVariation> {
    check_cache(p, cache)?;
    let (d_bases, d_cores) = sweep_jt(&Families::of_point(p), cache, z_tilde);
    Ok(GaugedVariation {
        point_id: p.id(),
        d_bases,
        d_cores,
    })
}

/// Directional derivative of the probes with respect to raw core and basis
/// perturbations of a plain T3 (non-manifold).
pub fn apply_j_corewise(
    t: &TuckerTensorTrain,
    cache: &EdgeCache,
    d_bases: &[DMatrix<f64>],
    d_cores: &[Core],
) -> Vec<DVector<f64>> {
    sweep_j(&Families::of_t3(t), cache, d_bases, d_cores)
}

/// Transpose of [`apply_j_corewise`] under the flat inner product on core
/// tuples.
pub fn apply_jt_corewise(
    t: &TuckerTensorTrain,
    cache: &EdgeCache,
    z_tilde: &[DVector<f64>],
) -> (Vec<DMatrix<f64>>, Vec<Core>) {
    sweep_jt(&Families::of_t3(t), cache, z_tilde)
}
