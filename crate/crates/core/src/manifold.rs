//! The manifold of fixed-rank Tucker tensor trains and its tangent spaces.
//!
//! A point is stored through `2d` interlocking orthogonal representations.
//! For every slot `i` the represented tensor equals the contraction of
//!
//! ```text
//! bases (U_1, …, U_d),          cores (P_1, …, P_{i-1}, G̃_i, Q_{i+1}, …, Q_d)
//! bases (U_1, …, Ũ_i, …, U_d),  cores (P_1, …, P_{i-1}, O_i, Q_{i+1}, …, Q_d)
//! ```
//!
//! with `P` left-orthogonal, `Q` right-orthogonal, `O` outer-orthogonal and
//! every `U` orthonormal. Tangent vectors are parameterized by variations
//! `(δU_i, δG_i)`; the gauge conditions `U_iᵀ δU_i = 0` and
//! `(P_i^L)ᵀ δG_i^L = 0` (i < d) make that parameterization unique, and under
//! them the Hilbert-Schmidt inner product of two tangent tensors is the flat
//! inner product of their variations.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{thin_qr, Truncation};
use crate::t3::{
    remove_useless_ranks, t3_svd_implicit, zero_pad_ranks, Core, TensorTrain, TuckerTensorTrain,
};

static POINT_IDS: AtomicU64 = AtomicU64::new(1);

/// A prepared point on the fixed-rank T3 manifold.
#[derive(Debug, Clone)]
pub struct ManifoldPoint {
    id: u64,
    dims: Vec<usize>,
    tucker: Vec<usize>,
    tt: Vec<usize>,
    /// Orthonormal Tucker bases.
    u: Vec<DMatrix<f64>>,
    /// Modified bases pairing with the outer-orthogonal cores.
    u_tilde: Vec<DMatrix<f64>>,
    /// Left-orthogonal cores; the last entry is the unorthogonalized center.
    p: Vec<Core>,
    /// Right-orthogonal cores; the first entry is the unorthogonalized center.
    q: Vec<Core>,
    /// Outer-orthogonal cores.
    o: Vec<Core>,
    /// Per-slot center cores.
    g_tilde: Vec<Core>,
}

/// Variation representation `(δU_i, δG_i)` of a tangent vector at one point.
#[derive(Debug, Clone)]
pub struct GaugedVariation {
    pub(crate) point_id: u64,
    pub(crate) d_bases: Vec<DMatrix<f64>>,
    pub(crate) d_cores: Vec<Core>,
}

impl GaugedVariation {
    pub fn basis_deltas(&self) -> &[DMatrix<f64>] {
        &self.d_bases
    }

    pub fn core_deltas(&self) -> &[Core] {
        &self.d_cores
    }

    pub fn basis_deltas_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.d_bases
    }

    pub fn core_deltas_mut(&mut self) -> &mut [Core] {
        &mut self.d_cores
    }
}

impl ManifoldPoint {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn tucker_ranks(&self) -> &[usize] {
        &self.tucker
    }

    pub fn tt_ranks(&self) -> &[usize] {
        &self.tt
    }

    pub fn bases(&self) -> &[DMatrix<f64>] {
        &self.u
    }

    pub fn modified_bases(&self) -> &[DMatrix<f64>] {
        &self.u_tilde
    }

    pub fn left_cores(&self) -> &[Core] {
        &self.p
    }

    pub fn right_cores(&self) -> &[Core] {
        &self.q
    }

    pub fn outer_cores(&self) -> &[Core] {
        &self.o
    }

    pub fn center_cores(&self) -> &[Core] {
        &self.g_tilde
    }

    /// Rebuild a plain T3 (left-orthogonal cores, last core carries the norm).
    pub fn to_t3(&self) -> TuckerTensorTrain {
        let mut cores = self.p[..self.d() - 1].to_vec();
        cores.push(self.g_tilde[self.d() - 1].clone());
        TuckerTensorTrain::new(self.u.clone(), TensorTrain::new(cores).expect("valid chain"))
            .expect("valid point")
    }

    /// Slot-`i` representation as a plain T3, in either the center form
    /// (`G̃_i` with basis `U_i`) or the outer form (`O_i` with `Ũ_i`).
    pub fn representation(&self, slot: usize, outer: bool) -> TuckerTensorTrain {
        let d = self.d();
        let mut cores = Vec::with_capacity(d);
        let mut bases = Vec::with_capacity(d);
        for i in 0..d {
            if i < slot {
                cores.push(self.p[i].clone());
                bases.push(self.u[i].clone());
            } else if i == slot {
                if outer {
                    cores.push(self.o[i].clone());
                    bases.push(self.u_tilde[i].clone());
                } else {
                    cores.push(self.g_tilde[i].clone());
                    bases.push(self.u[i].clone());
                }
            } else {
                cores.push(self.q[i].clone());
                bases.push(self.u[i].clone());
            }
        }
        TuckerTensorTrain::new(bases, TensorTrain::new(cores).expect("valid chain"))
            .expect("valid representation")
    }

    pub fn hs_norm(&self) -> f64 {
        // The first center carries the whole norm: everything around it is
        // orthonormal.
        self.g_tilde[0].hs_norm()
    }

    pub fn zero_variation(&self) -> GaugedVariation {
        GaugedVariation {
            point_id: self.id,
            d_bases: (0..self.d())
                .map(|i| DMatrix::zeros(self.dims[i], self.tucker[i]))
                .collect(),
            d_cores: (0..self.d())
                .map(|i| Core::zeros(self.tt[i], self.tucker[i], self.tt[i + 1]))
                .collect(),
        }
    }

    pub fn random_variation(&self, rng: &mut impl rand::Rng) -> GaugedVariation {
        let mut v = self.zero_variation();
        for b in &mut v.d_bases {
            for e in b.iter_mut() {
                *e = rng.sample::<f64, _>(StandardNormal);
            }
        }
        for c in &mut v.d_cores {
            for e in c.data_mut() {
                *e = rng.sample::<f64, _>(StandardNormal);
            }
        }
        v
    }
}

/// Build the `2d` orthogonal representations of a non-degenerate T3.
pub fn prepare_point(t: &TuckerTensorTrain) -> Result<ManifoldPoint> {
    let d = t.d();
    if d < 2 {
        return Err(Error::ShapeMismatch("manifold points need d >= 2".into()));
    }
    let dims = t.dims();
    let tucker = t.tucker_ranks();
    let tt = t.tt_ranks();
    let (feas_n, feas_r) = remove_useless_ranks(&tucker, &tt, &dims);
    if feas_n != tucker || feas_r != tt {
        return Err(Error::DegenerateRanks {
            requested: (tucker, tt),
            feasible: (feas_n, feas_r),
        });
    }

    let mut work = t.clone();
    work.orthogonalize_bases();
    work.train_mut().right_orthogonalize();
    let u = work.bases().to_vec();
    let q: Vec<Core> = work.train().cores().to_vec();

    // Left sweep over the right-orthogonal chain, keeping every center.
    let mut p = Vec::with_capacity(d);
    let mut g_tilde = Vec::with_capacity(d);
    let mut center = q[0].clone();
    for i in 0..d - 1 {
        g_tilde.push(center.clone());
        let (qf, rf) = thin_qr(&center.l_unfold());
        p.push(Core::from_l(&qf, center.r0, center.n, qf.ncols()));
        center = q[i + 1].left_multiplied(&rf);
    }
    g_tilde.push(center.clone());
    p.push(center);

    // Outer orthogonalization of every center.
    let mut o = Vec::with_capacity(d);
    let mut u_tilde = Vec::with_capacity(d);
    for i in 0..d {
        let (qf, rf) = thin_qr(&g_tilde[i].o_unfold());
        o.push(Core::from_o(&qf, g_tilde[i].r0, qf.ncols(), g_tilde[i].r1));
        u_tilde.push(&u[i] * rf.transpose());
    }

    Ok(ManifoldPoint {
        id: POINT_IDS.fetch_add(1, Ordering::Relaxed),
        dims,
        tucker: t.tucker_ranks(),
        tt: t.tt_ranks(),
        u,
        u_tilde,
        p,
        q,
        o,
        g_tilde,
    })
}

/// Zero-pad to `(n', r')`, jiggle with noise of total magnitude
/// `1e-10 · ‖p‖`, and prepare. Rank continuation hands us deliberately
/// degenerate padded guesses; the noise restores a usable tangent
/// parameterization.
pub fn prepare_padded_with_noise(
    t: &TuckerTensorTrain,
    new_tucker: &[usize],
    new_tt: &[usize],
    rng: &mut impl rand::Rng,
) -> Result<ManifoldPoint> {
    let mut padded = zero_pad_ranks(t, new_tucker, new_tt)?;
    let scale = 1e-10 * t.hs_norm().max(1e-300);
    let total: usize = padded
        .train()
        .cores()
        .iter()
        .map(|c| c.data().len())
        .sum::<usize>()
        + padded.bases().iter().map(|b| b.len()).sum::<usize>();
    let sigma = scale / (total as f64).sqrt();
    for c in padded.train_mut().cores_mut() {
        for e in c.data_mut() {
            *e += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    for b in padded.bases_mut() {
        for e in b.iter_mut() {
            *e += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    prepare_point(&padded)
}

/// Orthogonal projector onto the gauge slice:
/// `δU_i ← (I − U_iU_iᵀ) δU_i` for all `i`, and
/// `δG_i ← (I − P_i^L (P_i^L)ᵀ) δG_i` for `i < d`, last core untouched.
pub fn project_gauge(p: &ManifoldPoint, v: &GaugedVariation) -> Result<GaugedVariation> {
    check_point(p, v)?;
    let d = p.d();
    let mut out = v.clone();
    for i in 0..d {
        let coeff = p.u[i].transpose() * &out.d_bases[i];
        out.d_bases[i] -= &p.u[i] * coeff;
    }
    for i in 0..d - 1 {
        let pl = p.p[i].l_unfold();
        let gl = out.d_cores[i].l_unfold();
        let projected = &gl - &pl * (pl.transpose() * &gl);
        out.d_cores[i] = Core::from_l(
            &projected,
            out.d_cores[i].r0,
            out.d_cores[i].n,
            out.d_cores[i].r1,
        );
    }
    Ok(out)
}

fn check_point(p: &ManifoldPoint, v: &GaugedVariation) -> Result<()> {
    if v.point_id != p.id {
        return Err(Error::StaleCache {
            cache: v.point_id,
            point: p.id,
        });
    }
    Ok(())
}

/// `a·v + b·w` in variation coordinates.
pub fn variation_axpy(
    a: f64,
    v: &GaugedVariation,
    b: f64,
    w: &GaugedVariation,
) -> Result<GaugedVariation> {
    if v.point_id != w.point_id {
        return Err(Error::StaleCache {
            cache: w.point_id,
            point: v.point_id,
        });
    }
    let mut out = v.clone();
    for i in 0..out.d_bases.len() {
        out.d_bases[i] = &v.d_bases[i] * a + &w.d_bases[i] * b;
        out.d_cores[i] = v.d_cores[i].scale(a).add(&w.d_cores[i].scale(b));
    }
    Ok(out)
}

/// Flat inner product of variations. For gauged variations at the same
/// point this equals the Hilbert-Schmidt inner product of the represented
/// tangent tensors.
pub fn variation_inner(v: &GaugedVariation, w: &GaugedVariation) -> Result<f64> {
    if v.point_id != w.point_id {
        return Err(Error::StaleCache {
            cache: w.point_id,
            point: v.point_id,
        });
    }
    let mut acc = 0.0;
    for i in 0..v.d_bases.len() {
        acc += v.d_bases[i]
            .iter()
            .zip(w.d_bases[i].iter())
            .map(|(x, y)| x * y)
            .sum::<f64>();
        acc += v.d_cores[i]
            .data()
            .iter()
            .zip(w.d_cores[i].data().iter())
            .map(|(x, y)| x * y)
            .sum::<f64>();
    }
    Ok(acc)
}

pub fn variation_norm(v: &GaugedVariation) -> f64 {
    variation_inner(v, v).expect("same point").sqrt()
}

/// Represent the tangent vector of `v` (or the attached point `p + v` when
/// `attach`) as a Tucker tensor train with doubled ranks: bases
/// `[U_i | δU_i]` and block cores
///
/// ```text
/// W_i = [ Q_i          0   ]     (middle input split into (ξ_i, δξ_i);
///       [ δG_i | O_i   P_i ]      the O_i block acts on the δξ_i half)
/// ```
pub fn tangent_to_doubled(
    p: &ManifoldPoint,
    v: &GaugedVariation,
    attach: bool,
) -> Result<TuckerTensorTrain> {
    check_point(p, v)?;
    let d = p.d();
    let n = &p.tucker;
    let r = &p.tt;

    let mut bases = Vec::with_capacity(d);
    for i in 0..d {
        let mut b = DMatrix::zeros(p.dims[i], 2 * n[i]);
        b.view_mut((0, 0), (p.dims[i], n[i])).copy_from(&p.u[i]);
        b.view_mut((0, n[i]), (p.dims[i], n[i]))
            .copy_from(&v.d_bases[i]);
        bases.push(b);
    }

    let mut cores = Vec::with_capacity(d);
    for s in 0..d {
        let has_top = s > 0;
        let has_right = s < d - 1;
        let r0 = if has_top { 2 * r[s] } else { 1 };
        let r1 = if has_right { 2 * r[s + 1] } else { 1 };
        let mut w = Core::zeros(r0, 2 * n[s], r1);
        let dg = &v.d_cores[s];
        let (qc, pc, oc) = (&p.q[s], &p.p[s], &p.o[s]);

        for a in 0..r[s] {
            let a_bot = if has_top { r[s] + a } else { a };
            for b in 0..n[s] {
                for c in 0..r[s + 1] {
                    if has_top {
                        // Q block (top band, ξ half of the middle index).
                        w.set(a, b, if has_right { c } else { 0 }, qc.get(a, b, c));
                    }
                    let c_left = if has_right { c } else { 0 };
                    let mut val = dg.get(a, b, c);
                    if attach && s == d - 1 {
                        val += pc.get(a, b, c);
                    }
                    w.set(a_bot, b, c_left, val);
                    w.set(a_bot, n[s] + b, c_left, oc.get(a, b, c));
                    if has_right {
                        // P block (bottom-right).
                        w.set(a_bot, b, r[s + 1] + c, pc.get(a, b, c));
                    }
                }
            }
        }
        cores.push(w);
    }
    TuckerTensorTrain::new(bases, TensorTrain::new(cores)?)
}

/// Retract `p + v` back onto the manifold: round the doubled-rank
/// representation with the implicit T3-SVD, truncating to `p`'s ranks.
/// If a spectrum collapses below the target rank the result is zero-padded
/// back to shape.
pub fn attach_and_retract(p: &ManifoldPoint, v: &GaugedVariation) -> Result<TuckerTensorTrain> {
    let doubled = tangent_to_doubled(p, v, true)?;
    let trunc = Truncation::ranks(p.tucker.clone(), p.tt.clone());
    let (rounded, _) = t3_svd_implicit(&doubled, &trunc)?;
    if rounded.tucker_ranks() == p.tucker && rounded.tt_ranks() == p.tt {
        Ok(rounded)
    } else {
        zero_pad_ranks(&rounded, &p.tucker, &p.tt)
    }
}

/// Number of independent tangent directions at ranks `(n, r)` over `dims`:
/// basis variations on Stiefel quotients plus core parameters minus the
/// internal-edge gauge freedoms.
pub fn manifold_dim(dims: &[usize], tucker: &[usize], tt: &[usize]) -> usize {
    let d = dims.len();
    let mut dim = 0usize;
    for i in 0..d {
        dim += dims[i] * tucker[i] - tucker[i] * tucker[i];
        dim += tt[i] * tucker[i] * tt[i + 1];
    }
    for i in 1..d {
        dim -= tt[i] * tt[i];
    }
    dim
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::t3::random_t3;
    use crate::tensor::{hs_inner, DenseTensor};
    use approx::assert_relative_eq;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn test_point(seed: u64) -> (TuckerTensorTrain, ManifoldPoint) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t3 = random_t3(&[5, 4, 6, 3], &[2, 2, 3, 2], &[1, 2, 3, 2, 1], &mut rng).unwrap();
        let p = prepare_point(&t3).unwrap();
        (t3, p)
    }

    /// Independent oracle: the tangent tensor as the 2d-term first-order
    /// perturbation sum, one representation per slot.
    fn dense_tangent_oracle(p: &ManifoldPoint, v: &GaugedVariation) -> DenseTensor {
        let d = p.d();
        let mut acc = DenseTensor::zeros(p.dims()).unwrap();
        for s in 0..d {
            // Core slot: center form with δG_s in place of G̃_s.
            let mut rep = p.representation(s, false);
            rep.train_mut().cores_mut()[s] = v.d_cores[s].clone();
            acc = acc.add(&rep.contract_full().unwrap()).unwrap();
            // Basis slot: outer form with δU_s in place of Ũ_s.
            let mut rep = p.representation(s, true);
            rep.bases_mut()[s] = v.d_bases[s].clone();
            acc = acc.add(&rep.contract_full().unwrap()).unwrap();
        }
        acc
    }

    #[test]
    fn prepare_point_orthogonality_families() {
        let (t3, p) = test_point(1);
        let d = p.d();
        for i in 0..d {
            assert!(crate::linalg::orthonormality_defect(&p.bases()[i]) < 1e-12);
            let o = p.outer_cores()[i].o_unfold();
            assert!((o.transpose() * &o - DMatrix::identity(o.ncols(), o.ncols())).norm() < 1e-12);
        }
        for i in 0..d - 1 {
            let l = p.left_cores()[i].l_unfold();
            assert!((l.transpose() * &l - DMatrix::identity(l.ncols(), l.ncols())).norm() < 1e-12);
        }
        for i in 1..d {
            let r = p.right_cores()[i].r_unfold();
            assert!((&r * r.transpose() - DMatrix::identity(r.nrows(), r.nrows())).norm() < 1e-12);
        }

        let dense = t3.contract_full().unwrap();
        for s in 0..d {
            for outer in [false, true] {
                let rep = p.representation(s, outer).contract_full().unwrap();
                let err = rep.sub(&dense).unwrap().hs_norm() / dense.hs_norm();
                assert!(err < 1e-12, "slot {s} outer {outer}: {err:.2e}");
            }
        }
        assert_relative_eq!(p.hs_norm(), dense.hs_norm(), epsilon = 1e-12 * dense.hs_norm());

        // Re-preparing the reconstructed T3 reproduces the same tensor.
        let again = prepare_point(&p.to_t3()).unwrap();
        let dense2 = again.to_t3().contract_full().unwrap();
        assert!(dense2.sub(&dense).unwrap().hs_norm() < 1e-12 * dense.hs_norm());
    }

    #[test]
    fn prepare_point_rank_one_and_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t3 = random_t3(&[4, 3, 2], &[1, 1, 1], &[1, 1, 1, 1], &mut rng).unwrap();
        let p = prepare_point(&t3).unwrap();
        for u in p.bases() {
            assert_relative_eq!(u.norm(), 1.0, epsilon = 1e-12);
        }

        // Ranks too large for the dims are rejected with the feasible ones.
        let bad = zero_pad_ranks(&t3, &[1, 1, 1], &[1, 3, 1, 1]).unwrap();
        match prepare_point(&bad) {
            Err(Error::DegenerateRanks { feasible, .. }) => {
                assert_eq!(feasible.1, vec![1, 1, 1, 1]);
            }
            other => panic!("expected DegenerateRanks, got {other:?}"),
        }
    }

    #[test]
    fn gauge_projector_properties() {
        let (_, p) = test_point(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = p.random_variation(&mut rng);
        let g = project_gauge(&p, &raw).unwrap();

        // Gauge conditions hold.
        for i in 0..p.d() {
            assert!((p.bases()[i].transpose() * &g.d_bases[i]).norm() < 1e-12);
        }
        for i in 0..p.d() - 1 {
            let pl = p.left_cores()[i].l_unfold();
            assert!((pl.transpose() * g.d_cores[i].l_unfold()).norm() < 1e-12);
        }
        // Last core untouched.
        assert_eq!(g.d_cores[p.d() - 1].data(), raw.d_cores[p.d() - 1].data());

        // Projector: fixed point and idempotent.
        let gg = project_gauge(&p, &g).unwrap();
        for i in 0..p.d() {
            assert!((&gg.d_bases[i] - &g.d_bases[i]).norm() < 1e-14 * g.d_bases[i].norm().max(1.0));
            let diff = gg.d_cores[i].add(&g.d_cores[i].scale(-1.0)).hs_norm();
            assert!(diff < 1e-14 * g.d_cores[i].hs_norm().max(1.0));
        }

        // In-span basis directions are annihilated.
        let mut in_span = p.zero_variation();
        in_span.d_bases[1] = p.bases()[1].clone();
        let killed = project_gauge(&p, &in_span).unwrap();
        assert!(killed.d_bases[1].norm() < 1e-13);

        // Self-adjoint under the flat inner product.
        let w = p.random_variation(&mut rng);
        let pv_w = variation_inner(&project_gauge(&p, &raw).unwrap(), &w).unwrap();
        let v_pw = variation_inner(&raw, &project_gauge(&p, &w).unwrap()).unwrap();
        assert_relative_eq!(pv_w, v_pw, epsilon = 1e-12 * pv_w.abs().max(1.0));
    }

    #[test]
    fn doubled_representation_matches_perturbation_sum() {
        let (_, p) = test_point(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = p.random_variation(&mut rng);

        let doubled = tangent_to_doubled(&p, &v, false).unwrap();
        assert_eq!(
            doubled.tucker_ranks(),
            p.tucker_ranks().iter().map(|n| 2 * n).collect::<Vec<_>>()
        );
        let expect_tt: Vec<usize> = p
            .tt_ranks()
            .iter()
            .enumerate()
            .map(|(i, &r)| if i == 0 || i == p.d() { 1 } else { 2 * r })
            .collect();
        assert_eq!(doubled.tt_ranks(), expect_tt);

        let dense = doubled.contract_full().unwrap();
        let oracle = dense_tangent_oracle(&p, &v);
        let err = dense.sub(&oracle).unwrap().hs_norm() / oracle.hs_norm();
        assert!(err < 1e-12, "doubled vs oracle: {err:.2e}");

        // Zero variation contracts to zero.
        let zero = tangent_to_doubled(&p, &p.zero_variation(), false).unwrap();
        assert!(zero.contract_full().unwrap().hs_norm() < 1e-13);

        // Attached form equals p + v.
        let attached = tangent_to_doubled(&p, &v, true).unwrap();
        let expect = p.to_t3().contract_full().unwrap().add(&oracle).unwrap();
        let err = attached
            .contract_full()
            .unwrap()
            .sub(&expect)
            .unwrap()
            .hs_norm()
            / expect.hs_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn last_core_only_variation_is_a_core_replacement() {
        let (_, p) = test_point(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut v = p.zero_variation();
        let last = p.d() - 1;
        for e in v.d_cores[last].data_mut() {
            *e = rng.gen::<f64>() * 2.0 - 1.0;
        }
        let dense = tangent_to_doubled(&p, &v, false)
            .unwrap()
            .contract_full()
            .unwrap();
        let mut rep = p.representation(last, false);
        rep.train_mut().cores_mut()[last] = v.d_cores[last].clone();
        let oracle = rep.contract_full().unwrap();
        assert!(dense.sub(&oracle).unwrap().hs_norm() < 1e-12 * oracle.hs_norm());
    }

    #[test]
    fn gauge_freedoms_span_the_kernel_of_the_tangent_map() {
        let (_, p) = test_point(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = p.d();

        // Tucker gauge motion: δU_s = U_s·S compensated by δG_s = -S ·₂ O_s
        // (the δU acts through the outer form, whose basis slot is Ũ_s).
        for s in 0..d {
            let n = p.tucker_ranks()[s];
            let smat = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let mut v = p.zero_variation();
            v.d_bases[s] = &p.u[s] * &smat;
            v.d_cores[s] = p.outer_cores()[s].mid_multiplied(&smat).scale(-1.0);
            let dense = dense_tangent_oracle(&p, &v);
            assert!(
                dense.hs_norm() < 1e-11 * p.hs_norm(),
                "tucker kernel slot {s}: {:.2e}",
                dense.hs_norm()
            );
        }

        // TT gauge motion between cores s and s+1.
        for s in 0..d - 1 {
            let r = p.tt_ranks()[s + 1];
            let a = DMatrix::from_fn(r, r, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let mut v = p.zero_variation();
            v.d_cores[s] = p.left_cores()[s].right_multiplied(&a);
            v.d_cores[s + 1] = p.right_cores()[s + 1].left_multiplied(&a).scale(-1.0);
            let dense = dense_tangent_oracle(&p, &v);
            assert!(
                dense.hs_norm() < 1e-11 * p.hs_norm(),
                "tt kernel edge {s}: {:.2e}",
                dense.hs_norm()
            );
        }
    }

    #[test]
    fn gauged_inner_product_matches_dense_tangents() {
        let (_, p) = test_point(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let v = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();
            let w = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();
            let flat = variation_inner(&v, &w).unwrap();
            let dv = dense_tangent_oracle(&p, &v);
            let dw = dense_tangent_oracle(&p, &w);
            let dense = hs_inner(&dv, &dw).unwrap();
            assert_relative_eq!(flat, dense, epsilon = 1e-10 * dense.abs().max(1.0));
        }
        // Positivity and the axpy identities.
        let v = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();
        assert!(variation_inner(&v, &v).unwrap() > 0.0);
        let same = variation_axpy(1.0, &v, 0.0, &p.zero_variation()).unwrap();
        assert_eq!(same.d_cores[0].data(), v.d_cores[0].data());
    }

    #[test]
    fn gauge_uniqueness_through_the_inner_product_identity() {
        // If two gauged variations represent the same dense tangent their
        // difference is gauged with zero dense image, hence zero by the
        // norm identity.
        let (_, p) = test_point(13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let v = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();
        let dv = dense_tangent_oracle(&p, &v);
        assert_relative_eq!(
            variation_norm(&v),
            dv.hs_norm(),
            epsilon = 1e-10 * dv.hs_norm()
        );
    }

    #[test]
    fn retract_zero_recovers_the_point() {
        let (t3, p) = test_point(15);
        let dense = t3.contract_full().unwrap();
        let back = attach_and_retract(&p, &p.zero_variation()).unwrap();
        assert_eq!(back.tucker_ranks(), p.tucker_ranks());
        assert_eq!(back.tt_ranks(), p.tt_ranks());
        let err = back.contract_full().unwrap().sub(&dense).unwrap().hs_norm() / dense.hs_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn retract_tiny_variation_first_order() {
        let (t3, p) = test_point(16);
        let dense = t3.contract_full().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let v = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();
        let scale = 1e-8 * p.hs_norm() / variation_norm(&v);
        let tiny = variation_axpy(scale, &v, 0.0, &p.zero_variation()).unwrap();
        let retracted = attach_and_retract(&p, &tiny).unwrap();
        let target = dense.add(&dense_tangent_oracle(&p, &tiny)).unwrap();
        let err = retracted
            .contract_full()
            .unwrap()
            .sub(&target)
            .unwrap()
            .hs_norm();
        assert!(err <= 2e-8 * p.hs_norm(), "err = {err:.3e}");
    }

    #[test]
    fn retract_in_rank_perturbation_exact() {
        let (_, p) = test_point(18);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        // Perturbing only the last center keeps the ranks: rounding is
        // lossless.
        let mut v = p.zero_variation();
        let last = p.d() - 1;
        for e in v.d_cores[last].data_mut() {
            *e = 0.1 * (rng.gen::<f64>() * 2.0 - 1.0);
        }
        let retracted = attach_and_retract(&p, &v).unwrap();
        let expect = p
            .to_t3()
            .contract_full()
            .unwrap()
            .add(&dense_tangent_oracle(&p, &v))
            .unwrap();
        let err = retracted
            .contract_full()
            .unwrap()
            .sub(&expect)
            .unwrap()
            .hs_norm()
            / expect.hs_norm();
        assert!(err < 1e-12, "err = {err:.3e}");
    }

    #[test]
    fn retraction_is_first_order_accurate() {
        let (t3, p) = test_point(20);
        let dense = t3.contract_full().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();
        let unit = variation_axpy(1.0 / variation_norm(&v), &v, 0.0, &p.zero_variation()).unwrap();
        let dv = dense_tangent_oracle(&p, &unit);

        let ts = [1e-2, 1e-3, 1e-4, 1e-5];
        let mut errs = Vec::new();
        for &t in &ts {
            let step = variation_axpy(t, &unit, 0.0, &p.zero_variation()).unwrap();
            let retracted = attach_and_retract(&p, &step).unwrap();
            let target = dense.add(&dv.scale(t)).unwrap();
            errs.push(
                retracted
                    .contract_full()
                    .unwrap()
                    .sub(&target)
                    .unwrap()
                    .hs_norm(),
            );
        }
        let slope = crate::linalg::log_log_slope(&ts, &errs);
        assert!(slope >= 1.9, "slope = {slope:.3}, errs = {errs:?}");
    }

    #[test]
    fn gram_rank_counts_manifold_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let dims = [4usize, 3, 3];
        let tucker = [2usize, 2, 2];
        let tt = [1usize, 2, 2, 1];
        let t3 = random_t3(&dims, &tucker, &tt, &mut rng).unwrap();
        let p = prepare_point(&t3).unwrap();
        let dim = manifold_dim(&dims, &tucker, &tt);

        let samples = dim + 8;
        let mut gram = DMatrix::zeros(samples, samples);
        let tangents: Vec<DenseTensor> = (0..samples)
            .map(|_| {
                let v = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();
                dense_tangent_oracle(&p, &v)
            })
            .collect();
        for i in 0..samples {
            for j in 0..samples {
                gram[(i, j)] = hs_inner(&tangents[i], &tangents[j]).unwrap();
            }
        }
        let svals = crate::linalg::thin_svd(&gram).unwrap().1;
        let rank = svals.iter().filter(|&&s| s > 1e-9 * svals[0]).count();
        assert_eq!(rank, dim, "gram rank vs formula");
    }

    #[test]
    fn mixed_point_operations_rejected() {
        let (_, p1) = test_point(23);
        let (_, p2) = test_point(24);
        let v1 = p1.zero_variation();
        let v2 = p2.zero_variation();
        assert!(variation_inner(&v1, &v2).is_err());
        assert!(project_gauge(&p1, &v2).is_err());
    }
}
