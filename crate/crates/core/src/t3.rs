//! Tensor trains and Tucker tensor trains (T3): contraction,
//! orthogonalization sweeps, the dense and implicit T3-SVD algorithms,
//! rounding, and rank bookkeeping.
//!
//! A tensor train over extents `(n_1, …, n_d)` is a chain of 3-tensor cores
//! `G_i` of shape `r_{i-1} × n_i × r_i` with `r_0 = r_d = 1`. A Tucker tensor
//! train additionally carries basis matrices `U_i` of shape `N_i × n_i`, so
//! the represented array is
//!
//! ```text
//! T[i_1, …, i_d] = Σ S[b_1, …, b_d] · U_1[i_1, b_1] ⋯ U_d[i_d, b_d]
//! ```
//!
//! where `S` is the contraction of the chain.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kept_rank, thin_qr, thin_svd, Truncation};
use crate::tensor::{matrix_from_row_major, row_major_data, DenseTensor};

/// 3-tensor core with shape `r0 × n × r1`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub r0: usize,
    pub n: usize,
    pub r1: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn zeros(r0: usize, n: usize, r1: usize) -> Self {
        Self {
            r0,
            n,
            r1,
            data: vec![0.0; r0 * n * r1],
        }
    }

    pub fn from_fn(r0: usize, n: usize, r1: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut core = Self::zeros(r0, n, r1);
        for a in 0..r0 {
            for b in 0..n {
                for c in 0..r1 {
                    core.data[(a * n + b) * r1 + c] = f(a, b, c);
                }
            }
        }
        core
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.r1 + c]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.r1 + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Left unfolding `(r0·n) × r1`.
    pub fn l_unfold(&self) -> DMatrix<f64> {
        matrix_from_row_major(self.r0 * self.n, self.r1, &self.data)
    }

    /// Right unfolding `r0 × (n·r1)`.
    pub fn r_unfold(&self) -> DMatrix<f64> {
        matrix_from_row_major(self.r0, self.n * self.r1, &self.data)
    }

    /// Outer unfolding `(r0·r1) × n`, row index `(a, c)` with `a` slowest.
    pub fn o_unfold(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.r0 * self.r1, self.n, |rc, b| {
            self.get(rc / self.r1, b, rc % self.r1)
        })
    }

    pub fn from_l(m: &DMatrix<f64>, r0: usize, n: usize, r1: usize) -> Self {
        debug_assert_eq!(m.shape(), (r0 * n, r1));
        Self {
            r0,
            n,
            r1,
            data: row_major_data(m),
        }
    }

    pub fn from_r(m: &DMatrix<f64>, r0: usize, n: usize, r1: usize) -> Self {
        debug_assert_eq!(m.shape(), (r0, n * r1));
        Self {
            r0,
            n,
            r1,
            data: row_major_data(m),
        }
    }

    pub fn from_o(m: &DMatrix<f64>, r0: usize, n: usize, r1: usize) -> Self {
        debug_assert_eq!(m.shape(), (r0 * r1, n));
        Self::from_fn(r0, n, r1, |a, b, c| m[(a * r1 + c, b)])
    }

    /// `G(s)`: contract the middle index, yielding an `r0 × r1` matrix.
    pub fn contract_mid(&self, s: &DVector<f64>) -> DMatrix<f64> {
        debug_assert_eq!(s.len(), self.n);
        let mut out = DMatrix::zeros(self.r0, self.r1);
        for a in 0..self.r0 {
            for b in 0..self.n {
                let w = s[b];
                if w == 0.0 {
                    continue;
                }
                let row = &self.data[(a * self.n + b) * self.r1..][..self.r1];
                for c in 0..self.r1 {
                    out[(a, c)] += w * row[c];
                }
            }
        }
        out
    }

    /// Row vector times `G(s)`: returns `μᵀ G(s)` as a vector of length `r1`.
    pub fn left_mid(&self, mu: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(mu.len(), self.r0);
        debug_assert_eq!(s.len(), self.n);
        let mut out = DVector::zeros(self.r1);
        for a in 0..self.r0 {
            let ma = mu[a];
            if ma == 0.0 {
                continue;
            }
            for b in 0..self.n {
                let w = ma * s[b];
                if w == 0.0 {
                    continue;
                }
                let row = &self.data[(a * self.n + b) * self.r1..][..self.r1];
                for c in 0..self.r1 {
                    out[c] += w * row[c];
                }
            }
        }
        out
    }

    /// `G(s) ν`: returns a vector of length `r0`.
    pub fn mid_right(&self, s: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(s.len(), self.n);
        debug_assert_eq!(nu.len(), self.r1);
        let mut out = DVector::zeros(self.r0);
        for a in 0..self.r0 {
            let mut acc = 0.0;
            for b in 0..self.n {
                let w = s[b];
                if w == 0.0 {
                    continue;
                }
                let row = &self.data[(a * self.n + b) * self.r1..][..self.r1];
                let mut inner = 0.0;
                for c in 0..self.r1 {
                    inner += row[c] * nu[c];
                }
                acc += w * inner;
            }
            out[a] = acc;
        }
        out
    }

    /// `μᵀ G ν` with the middle index left open: a vector of length `n`.
    pub fn central(&self, mu: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(mu.len(), self.r0);
        debug_assert_eq!(nu.len(), self.r1);
        let mut out = DVector::zeros(self.n);
        for a in 0..self.r0 {
            let ma = mu[a];
            if ma == 0.0 {
                continue;
            }
            for b in 0..self.n {
                let row = &self.data[(a * self.n + b) * self.r1..][..self.r1];
                let mut inner = 0.0;
                for c in 0..self.r1 {
                    inner += row[c] * nu[c];
                }
                out[b] += ma * inner;
            }
        }
        out
    }

    /// Contract `l` (shape `r0' × r0`) into the left index.
    pub fn left_multiplied(&self, l: &DMatrix<f64>) -> Self {
        debug_assert_eq!(l.ncols(), self.r0);
        let r0p = l.nrows();
        Self::from_fn(r0p, self.n, self.r1, |ap, b, c| {
            (0..self.r0).map(|a| l[(ap, a)] * self.get(a, b, c)).sum()
        })
    }

    /// Contract `r` (shape `r1 × r1'`) into the right index.
    pub fn right_multiplied(&self, r: &DMatrix<f64>) -> Self {
        debug_assert_eq!(r.nrows(), self.r1);
        let r1p = r.ncols();
        Self::from_fn(self.r0, self.n, r1p, |a, b, cp| {
            (0..self.r1).map(|c| self.get(a, b, c) * r[(c, cp)]).sum()
        })
    }

    /// Contract `x` (shape `n' × n`) into the middle index.
    pub fn mid_multiplied(&self, x: &DMatrix<f64>) -> Self {
        debug_assert_eq!(x.ncols(), self.n);
        let np = x.nrows();
        Self::from_fn(self.r0, np, self.r1, |a, bp, c| {
            (0..self.n).map(|b| x[(bp, b)] * self.get(a, b, c)).sum()
        })
    }

    pub fn hs_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor::from_data(&[self.r0, self.n, self.r1], self.data.clone()).expect("core shape")
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            r0: self.r0,
            n: self.n,
            r1: self.r1,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.r0, self.n, self.r1), (other.r0, other.n, other.r1));
        Self {
            r0: self.r0,
            n: self.n,
            r1: self.r1,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(x, y)| x + y)
                .collect(),
        }
    }
}

/// Tensor train: a chain of cores with matching edge ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<Core>,
}

impl TensorTrain {
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::ShapeMismatch("tensor train needs >= 1 core".into()));
        }
        if cores[0].r0 != 1 || cores[cores.len() - 1].r1 != 1 {
            return Err(Error::ShapeMismatch("boundary tt ranks must be 1".into()));
        }
        for w in cores.windows(2) {
            if w[0].r1 != w[1].r0 {
                return Err(Error::ShapeMismatch(format!(
                    "edge rank mismatch: {} vs {}",
                    w[0].r1, w[1].r0
                )));
            }
        }
        Ok(Self { cores })
    }

    pub fn d(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn cores_mut(&mut self) -> &mut [Core] {
        &mut self.cores
    }

    pub fn extents(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.n).collect()
    }

    pub fn tt_ranks(&self) -> Vec<usize> {
        let mut r = vec![1];
        r.extend(self.cores.iter().map(|c| c.r1));
        r
    }

    /// Contract the chain into a dense array of shape `extents()`.
    pub fn contract_dense(&self) -> Result<DenseTensor> {
        let extents = self.extents();
        // Running prefix: matrix of shape (n_1⋯n_i) × r_i.
        let mut prefix = self.cores[0].l_unfold();
        for core in &self.cores[1..] {
            let right = core.r_unfold(); // r × (n·r')
            let product = prefix * right; // (pre) × (n·r')
            let pre_rows = product.nrows() * core.n;
            prefix = matrix_from_row_major(pre_rows, core.r1, &row_major_data(&product));
        }
        DenseTensor::from_data(&extents, row_major_data(&prefix))
    }

    /// Left-orthogonalize cores `1..d-1`, sweeping left to right. Edge ranks
    /// may shrink when an unfolding is wide (degenerate input).
    pub fn left_orthogonalize(&mut self) {
        let d = self.d();
        for i in 0..d.saturating_sub(1) {
            let (q, r) = thin_qr(&self.cores[i].l_unfold());
            let k = q.ncols();
            self.cores[i] = Core::from_l(&q, self.cores[i].r0, self.cores[i].n, k);
            self.cores[i + 1] = self.cores[i + 1].left_multiplied(&r);
        }
    }

    /// Right-orthogonalize cores `2..d`, sweeping right to left.
    pub fn right_orthogonalize(&mut self) {
        let d = self.d();
        for i in (1..d).rev() {
            let m = self.cores[i].r_unfold();
            let (q, r) = thin_qr(&m.transpose());
            let k = q.ncols();
            self.cores[i] = Core::from_r(&q.transpose(), k, self.cores[i].n, self.cores[i].r1);
            self.cores[i - 1] = self.cores[i - 1].right_multiplied(&r.transpose());
        }
    }

    pub fn hs_norm(&self) -> f64 {
        let mut clone = self.clone();
        clone.right_orthogonalize();
        clone.cores[0].hs_norm()
    }
}

/// Tucker tensor train: basis matrices over a tensor train.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerTensorTrain {
    bases: Vec<DMatrix<f64>>,
    tt: TensorTrain,
}

/// Per-index and per-edge singular values from a T3-SVD sweep,
/// sorted descending.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub tucker: Vec<Vec<f64>>,
    pub tt: Vec<Vec<f64>>,
}

impl TuckerTensorTrain {
    pub fn new(bases: Vec<DMatrix<f64>>, tt: TensorTrain) -> Result<Self> {
        if bases.len() != tt.d() {
            return Err(Error::ShapeMismatch(format!(
                "{} bases for {} cores",
                bases.len(),
                tt.d()
            )));
        }
        for (i, (b, n)) in bases.iter().zip(tt.extents()).enumerate() {
            if b.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "basis {} has {} columns, core middle extent is {}",
                    i,
                    b.ncols(),
                    n
                )));
            }
        }
        Ok(Self { bases, tt })
    }

    /// Identity-basis wrapper around a bare tensor train.
    pub fn from_train(tt: TensorTrain) -> Self {
        let bases = tt
            .extents()
            .iter()
            .map(|&n| DMatrix::identity(n, n))
            .collect();
        Self { bases, tt }
    }

    pub fn d(&self) -> usize {
        self.tt.d()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.nrows()).collect()
    }

    pub fn tucker_ranks(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    pub fn tt_ranks(&self) -> Vec<usize> {
        self.tt.tt_ranks()
    }

    pub fn bases(&self) -> &[DMatrix<f64>] {
        &self.bases
    }

    pub fn bases_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.bases
    }

    pub fn train(&self) -> &TensorTrain {
        &self.tt
    }

    pub fn train_mut(&mut self) -> &mut TensorTrain {
        &mut self.tt
    }

    pub fn contract_full(&self) -> Result<DenseTensor> {
        let mut dense = self.tt.contract_dense()?;
        for (mode, basis) in self.bases.iter().enumerate() {
            dense = dense.mode_product(basis, mode)?;
        }
        Ok(dense)
    }

    /// QR every Tucker basis and absorb the triangular factor into the
    /// matching core's middle index.
    pub fn orthogonalize_bases(&mut self) {
        for i in 0..self.d() {
            let (q, r) = thin_qr(&self.bases[i]);
            self.bases[i] = q;
            self.tt.cores_mut()[i] = self.tt.cores()[i].mid_multiplied(&r);
        }
    }

    pub fn hs_norm(&self) -> f64 {
        let mut clone = self.clone();
        clone.orthogonalize_bases();
        clone.tt.hs_norm()
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.tt.cores_mut()[0] = out.tt.cores()[0].scale(a);
        out
    }
}

/// Dense T3-SVD: factor a dense tensor into a Tucker tensor train, one
/// matricization SVD and one unfolding SVD per index.
pub fn t3_svd_dense(
    t: &DenseTensor,
    trunc: &Truncation,
) -> Result<(TuckerTensorTrain, SpectrumReport)> {
    let d = t.d();
    if d == 0 {
        return Err(Error::ShapeMismatch("cannot decompose a scalar".into()));
    }
    let dims = t.shape().to_vec();
    let mut report = SpectrumReport {
        tucker: Vec::with_capacity(d),
        tt: Vec::with_capacity(d - 1),
    };
    let mut bases = Vec::with_capacity(d);
    let mut cores: Vec<Core> = Vec::with_capacity(d);

    // X starts with a phantom leading rank index of extent 1.
    let mut shape = vec![1];
    shape.extend_from_slice(&dims);
    let mut x = t.reshape(&shape)?;
    let mut r = 1usize;

    for i in 0..d {
        // Tucker step: isolate the physical index.
        let mut perm: Vec<usize> = vec![1, 0];
        perm.extend(2..x.d());
        let xp = x.permute(&perm)?;
        let m = xp.unfold(1)?;
        let (u, sigma, vt) = thin_svd(&m)?;
        let n_keep = kept_rank(&sigma, trunc.tol, trunc.tucker_cap(i));
        report.tucker.push(sigma.clone());
        bases.push(u.columns(0, n_keep).into_owned());
        let carry = DMatrix::from_fn(n_keep, vt.ncols(), |a, b| sigma[a] * vt[(a, b)]);
        let mut new_shape = vec![n_keep, r];
        new_shape.extend_from_slice(&xp.shape()[2..]);
        x = DenseTensor::from_data(&new_shape, row_major_data(&carry))?;

        if i + 1 < d {
            // TT step: split (r·n) rows from the remaining columns.
            let mut perm: Vec<usize> = vec![1, 0];
            perm.extend(2..x.d());
            let xp = x.permute(&perm)?;
            let m = xp.unfold(2)?;
            let (w, sigma, vt) = thin_svd(&m)?;
            let r_keep = kept_rank(&sigma, trunc.tol, trunc.tt_cap(i + 1));
            report.tt.push(sigma.clone());
            cores.push(Core::from_l(
                &w.columns(0, r_keep).into_owned(),
                r,
                n_keep,
                r_keep,
            ));
            let carry = DMatrix::from_fn(r_keep, vt.ncols(), |a, b| sigma[a] * vt[(a, b)]);
            let mut new_shape = vec![r_keep];
            new_shape.extend_from_slice(&xp.shape()[2..]);
            x = DenseTensor::from_data(&new_shape, row_major_data(&carry))?;
            r = r_keep;
        } else {
            // Last index: X has shape (n_d, r); transpose into the core.
            let m = x.unfold(1)?;
            let core = Core::from_fn(r, n_keep, 1, |a, b, _| m[(b, a)]);
            cores.push(core);
        }
    }

    let t3 = TuckerTensorTrain::new(bases, TensorTrain::new(cores)?)?;
    Ok((t3, report))
}

/// Implicit T3-SVD: the same spectra as [`t3_svd_dense`] of the contracted
/// tensor, computed directly on the cores. Truncating realizes rounding.
pub fn t3_svd_implicit(
    t: &TuckerTensorTrain,
    trunc: &Truncation,
) -> Result<(TuckerTensorTrain, SpectrumReport)> {
    let d = t.d();
    let mut work = t.clone();
    work.orthogonalize_bases();
    work.train_mut().right_orthogonalize();

    let mut report = SpectrumReport {
        tucker: Vec::with_capacity(d),
        tt: Vec::with_capacity(d - 1),
    };

    for i in 0..d {
        let core = work.train().cores()[i].clone();
        let (w, sigma, vt) = thin_svd(&core.o_unfold())?;
        let n_keep = kept_rank(&sigma, trunc.tol, trunc.tucker_cap(i));
        report.tucker.push(sigma.clone());
        let scaled = DMatrix::from_fn(w.nrows(), n_keep, |rc, b| w[(rc, b)] * sigma[b]);
        work.train_mut().cores_mut()[i] = Core::from_o(&scaled, core.r0, n_keep, core.r1);
        let v = vt.transpose();
        work.bases_mut()[i] = &work.bases()[i] * v.columns(0, n_keep).into_owned();

        if i + 1 < d {
            let core = work.train().cores()[i].clone();
            let (w, sigma, vt) = thin_svd(&core.l_unfold())?;
            let r_keep = kept_rank(&sigma, trunc.tol, trunc.tt_cap(i + 1));
            report.tt.push(sigma.clone());
            work.train_mut().cores_mut()[i] =
                Core::from_l(&w.columns(0, r_keep).into_owned(), core.r0, core.n, r_keep);
            let carry = DMatrix::from_fn(r_keep, vt.ncols(), |a, b| sigma[a] * vt[(a, b)]);
            work.train_mut().cores_mut()[i + 1] =
                work.train().cores()[i + 1].left_multiplied(&carry);
        }
    }

    Ok((work, report))
}

/// Rewrite a tensor train over equal leading extents as a Tucker tensor
/// train by contracting each core's middle mode with orthonormal bases of
/// the first core's column space and the last core's row space. Exact when
/// the train is symmetric in its first `k` inputs.
pub fn sym_tt_to_t3(s: &TensorTrain, k: usize) -> Result<TuckerTensorTrain> {
    let d = s.d();
    if k + 1 != d {
        return Err(Error::IndexOutOfRange {
            index: k,
            d,
            context: "sym_tt_to_t3 (k inputs plus one output index)",
        });
    }
    let extents = s.extents();
    let n_in = extents[0];
    if extents[..k].iter().any(|&n| n != n_in) {
        return Err(Error::ShapeMismatch(format!(
            "first {} extents must agree, got {:?}",
            k,
            &extents[..k]
        )));
    }

    // First core as an N × r_1 matrix, last as r_{d-1} × M.
    let c0 = &s.cores()[0];
    let first = DMatrix::from_fn(c0.n, c0.r1, |b, r| c0.get(0, b, r));
    let (u, _) = thin_qr(&first);

    let cd = &s.cores()[d - 1];
    let last = DMatrix::from_fn(cd.r0, cd.n, |a, b| cd.get(a, b, 0));
    let (v, _) = thin_qr(&last.transpose());

    let mut bases = Vec::with_capacity(d);
    let mut cores = Vec::with_capacity(d);
    let ut = u.transpose();
    let vt = v.transpose();
    for (i, core) in s.cores().iter().enumerate() {
        if i < k {
            cores.push(core.mid_multiplied(&ut));
            bases.push(u.clone());
        } else {
            cores.push(core.mid_multiplied(&vt));
            bases.push(v.clone());
        }
    }
    TuckerTensorTrain::new(bases, TensorTrain::new(cores)?)
}

/// Zero-pad a T3 to larger ranks without changing the represented tensor.
pub fn zero_pad_ranks(
    t: &TuckerTensorTrain,
    new_tucker: &[usize],
    new_tt: &[usize],
) -> Result<TuckerTensorTrain> {
    let d = t.d();
    let tucker = t.tucker_ranks();
    let tt = t.tt_ranks();
    if new_tucker.len() != d || new_tt.len() != d + 1 {
        return Err(Error::ShapeMismatch("rank vector lengths".into()));
    }
    if new_tt[0] != 1 || new_tt[d] != 1 {
        return Err(Error::ShapeMismatch("boundary tt ranks must stay 1".into()));
    }
    for i in 0..d {
        if new_tucker[i] < tucker[i] || new_tt[i] < tt[i] || new_tt[i + 1] < tt[i + 1] {
            return Err(Error::DegenerateRanks {
                requested: (new_tucker.to_vec(), new_tt.to_vec()),
                feasible: (tucker.clone(), tt.clone()),
            });
        }
    }
    let mut bases = Vec::with_capacity(d);
    let mut cores = Vec::with_capacity(d);
    for i in 0..d {
        let b = &t.bases()[i];
        let mut padded = DMatrix::zeros(b.nrows(), new_tucker[i]);
        padded.view_mut((0, 0), b.shape()).copy_from(b);
        bases.push(padded);

        let c = &t.train().cores()[i];
        let mut core = Core::zeros(new_tt[i], new_tucker[i], new_tt[i + 1]);
        for a in 0..c.r0 {
            for b in 0..c.n {
                for r in 0..c.r1 {
                    core.set(a, b, r, c.get(a, b, r));
                }
            }
        }
        cores.push(core);
    }
    TuckerTensorTrain::new(bases, TensorTrain::new(cores)?)
}

/// Shrink proposed ranks by the minimum amount needed for a non-degenerate
/// T3 to exist over `dims`. Three sweeps, shapes only:
/// Tucker bases must be tall, right unfoldings wide, then (interleaved,
/// left to right) outer unfoldings tall and left unfoldings tall.
pub fn remove_useless_ranks(
    tucker: &[usize],
    tt: &[usize],
    dims: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let d = dims.len();
    assert_eq!(tucker.len(), d);
    assert_eq!(tt.len(), d + 1);
    let mut n: Vec<usize> = tucker.to_vec();
    let mut r: Vec<usize> = tt.to_vec();
    r[0] = 1;
    r[d] = 1;

    for i in 0..d {
        n[i] = n[i].min(dims[i]).max(1);
    }
    for i in (0..d).rev() {
        r[i] = r[i].min(n[i] * r[i + 1]).max(1);
    }
    for i in 0..d {
        n[i] = n[i].min(r[i] * r[i + 1]).max(1);
        r[i + 1] = r[i + 1].min(r[i] * n[i]).max(1);
    }
    (n, r)
}

#[derive(Serialize, Deserialize)]
struct T3Container {
    format: String,
    version: u32,
    dims: Vec<usize>,
    tucker_ranks: Vec<usize>,
    tt_ranks: Vec<usize>,
    bases: Vec<Vec<f64>>,
    cores: Vec<Vec<f64>>,
}

const T3_FORMAT: &str = "t3";
const T3_VERSION: u32 = 1;

impl TuckerTensorTrain {
    pub fn to_json(&self) -> Result<String> {
        let container = T3Container {
            format: T3_FORMAT.into(),
            version: T3_VERSION,
            dims: self.dims(),
            tucker_ranks: self.tucker_ranks(),
            tt_ranks: self.tt_ranks(),
            bases: self.bases.iter().map(row_major_data).collect(),
            cores: self.tt.cores().iter().map(|c| c.data().to_vec()).collect(),
        };
        Ok(serde_json::to_string(&container)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let c: T3Container = serde_json::from_str(json)?;
        if c.format != T3_FORMAT {
            return Err(Error::BadContainer(format!("format tag {:?}", c.format)));
        }
        if c.version != T3_VERSION {
            return Err(Error::BadContainer(format!("version {}", c.version)));
        }
        let d = c.dims.len();
        if c.tucker_ranks.len() != d || c.tt_ranks.len() != d + 1 {
            return Err(Error::BadContainer("rank vector lengths".into()));
        }
        let mut bases = Vec::with_capacity(d);
        let mut cores = Vec::with_capacity(d);
        for i in 0..d {
            let rows = c.dims[i];
            let cols = c.tucker_ranks[i];
            if c.bases[i].len() != rows * cols {
                return Err(Error::BadContainer(format!("basis {i} size")));
            }
            bases.push(matrix_from_row_major(rows, cols, &c.bases[i]));
            let (r0, n, r1) = (c.tt_ranks[i], c.tucker_ranks[i], c.tt_ranks[i + 1]);
            if c.cores[i].len() != r0 * n * r1 {
                return Err(Error::BadContainer(format!("core {i} size")));
            }
            let mut core = Core::zeros(r0, n, r1);
            core.data_mut().copy_from_slice(&c.cores[i]);
            cores.push(core);
        }
        TuckerTensorTrain::new(bases, TensorTrain::new(cores)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Deterministic random T3 with orthonormalized bases, usable as a planted
/// target or an optimizer start.
pub fn random_t3(
    dims: &[usize],
    tucker: &[usize],
    tt: &[usize],
    rng: &mut impl rand::Rng,
) -> Result<TuckerTensorTrain> {
    use rand_distr::StandardNormal;
    let d = dims.len();
    let mut bases = Vec::with_capacity(d);
    let mut cores = Vec::with_capacity(d);
    for i in 0..d {
        let raw = DMatrix::from_fn(dims[i], tucker[i], |_, _| rng.sample::<f64, _>(StandardNormal));
        let (q, _) = thin_qr(&raw);
        bases.push(q);
        cores.push(Core::from_fn(tt[i], tucker[i], tt[i + 1], |_, _, _| {
            rng.sample::<f64, _>(StandardNormal)
        }));
    }
    TuckerTensorTrain::new(bases, TensorTrain::new(cores)?)
}
