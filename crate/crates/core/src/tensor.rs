//! Dense multidimensional arrays and the contraction kernels every
//! decomposition in this crate is tested against.
//!
//! Arrays are stored flat in **row-major** order: for shape `(N_1, …, N_d)`
//! the entry `T[i_1, …, i_d]` lives at flat offset
//! `i_1·(N_2⋯N_d) + i_2·(N_3⋯N_d) + … + i_d` (first index slowest). All
//! reshapes, unfoldings, and [`kron`] follow this one convention, so the
//! unfolding/Kronecker identity
//!
//! ```text
//! unfold_i(A ∘ (M_1, …, M_d)) = (M_1 ⊗ … ⊗ M_i)ᵀ · unfold_i(A) · (M_{i+1} ⊗ … ⊗ M_d)
//! ```
//!
//! holds exactly with the standard block Kronecker product.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Hard cap on dense allocations. Dense tensors are oracles for desk-scale
/// checks; anything larger is a bug, so fail fast instead of swapping.
pub const DENSE_ELEMENT_GUARD: usize = 100_000_000;

/// Tucker ranks `n = (n_1, …, n_d)` paired with TT ranks
/// `r = (r_0, r_1, …, r_d)`, `r_0 = r_d = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector {
    pub tucker: Vec<usize>,
    pub tt: Vec<usize>,
}

impl RankVector {
    pub fn new(tucker: Vec<usize>, tt: Vec<usize>) -> Result<Self> {
        if tt.len() != tucker.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "tt ranks must have d+1 entries (tucker d = {}, tt = {})",
                tucker.len(),
                tt.len()
            )));
        }
        if tt[0] != 1 || tt[tucker.len()] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "boundary tt ranks must be 1, got {} and {}",
                tt[0],
                tt[tucker.len()]
            )));
        }
        if tucker.iter().any(|&n| n == 0) || tt.iter().any(|&r| r == 0) {
            return Err(Error::ShapeMismatch("ranks must be positive".into()));
        }
        Ok(Self { tucker, tt })
    }

    pub fn d(&self) -> usize {
        self.tucker.len()
    }

    pub fn all_ones(d: usize) -> Self {
        Self {
            tucker: vec![1; d],
            tt: vec![1; d + 1],
        }
    }
}

/// Dense real tensor with row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let elements = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; elements],
        })
    }

    pub fn from_data(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let elements = checked_len(shape)?;
        if data.len() != elements {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                elements
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mut idx = vec![0usize; shape.len()];
        for pos in 0..t.data.len() {
            decode_index(pos, shape, &mut idx);
            t.data[pos] = f(&idx);
        }
        Ok(t)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn d(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[encode_index(index, &self.shape)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let pos = encode_index(index, &self.shape);
        self.data[pos] = value;
    }

    /// Reinterpret the flat buffer under a new shape with the same length.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let elements: usize = shape.iter().product();
        if elements != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Permute axes: `out[j_0, …] = self[j_{perm[0]}, …]` in the sense that
    /// axis `k` of the output is axis `perm[k]` of the input.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let d = self.d();
        if perm.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "permutation {:?} does not match rank {}",
                perm, d
            )));
        }
        let mut seen = vec![false; d];
        for &p in perm {
            if p >= d || seen[p] {
                return Err(Error::ShapeMismatch(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let in_strides = strides(&self.shape);
        let mut out = Self::zeros(&out_shape)?;
        let mut out_idx = vec![0usize; d];
        for pos in 0..out.data.len() {
            decode_index(pos, &out_shape, &mut out_idx);
            let mut in_pos = 0;
            for k in 0..d {
                in_pos += out_idx[k] * in_strides[perm[k]];
            }
            out.data[pos] = self.data[in_pos];
        }
        Ok(out)
    }

    /// `i`th matrix unfolding: the first `i` indices become rows, the rest
    /// columns. `i = 0` yields a row vector, `i = d` a column vector.
    pub fn unfold(&self, i: usize) -> Result<DMatrix<f64>> {
        if i > self.d() {
            return Err(Error::IndexOutOfRange {
                index: i,
                d: self.d(),
                context: "unfold",
            });
        }
        let rows: usize = self.shape[..i].iter().product();
        let cols: usize = self.shape[i..].iter().product();
        Ok(matrix_from_row_major(rows, cols, &self.data))
    }

    /// `i`th matricization (1-based): index `i` becomes the rows, all other
    /// indices the columns in their original relative order.
    pub fn matricize(&self, i: usize) -> Result<DMatrix<f64>> {
        if i == 0 || i > self.d() {
            return Err(Error::IndexOutOfRange {
                index: i,
                d: self.d(),
                context: "matricize",
            });
        }
        let mut perm = Vec::with_capacity(self.d());
        perm.push(i - 1);
        perm.extend((0..self.d()).filter(|&k| k != i - 1));
        let permuted = self.permute(&perm)?;
        permuted.unfold(1)
    }

    /// Rebuild a tensor of shape `shape` from its `i`th unfolding.
    pub fn from_unfold(m: &DMatrix<f64>, shape: &[usize], i: usize) -> Result<Self> {
        let rows: usize = shape[..i].iter().product();
        let cols: usize = shape[i..].iter().product();
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix {}x{} is not the {}-unfolding of {:?}",
                m.nrows(),
                m.ncols(),
                i,
                shape
            )));
        }
        Self::from_data(shape, row_major_data(m))
    }

    /// Mode product along axis `mode`: contracts the old index `b` against
    /// `m[a, b]`, so the extent of `mode` becomes `m.nrows()`.
    pub fn mode_product(&self, m: &DMatrix<f64>, mode: usize) -> Result<Self> {
        if mode >= self.d() {
            return Err(Error::IndexOutOfRange {
                index: mode,
                d: self.d(),
                context: "mode_product",
            });
        }
        if m.ncols() != self.shape[mode] {
            return Err(Error::ShapeMismatch(format!(
                "mode {} extent {} vs matrix columns {}",
                mode,
                self.shape[mode],
                m.ncols()
            )));
        }
        let mat = self.matricize(mode + 1)?;
        let product = m * mat;
        let mut new_shape = self.shape.clone();
        new_shape[mode] = m.nrows();
        // Invert the matricization permutation: mode first, others in order.
        let mut perm_shape = Vec::with_capacity(self.d());
        perm_shape.push(new_shape[mode]);
        perm_shape.extend(
            (0..self.d())
                .filter(|&k| k != mode)
                .map(|k| new_shape[k]),
        );
        let permuted = Self::from_data(&perm_shape, row_major_data(&product))?;
        let mut inverse = vec![0usize; self.d()];
        inverse[mode] = 0;
        let mut next = 1;
        for k in (0..self.d()).filter(|&k| k != mode) {
            inverse[k] = next;
            next += 1;
        }
        permuted.permute(&inverse)
    }

    /// Contract the leading index with `w`.
    pub fn contract_first(&self, w: &DVector<f64>) -> Result<Self> {
        if self.d() == 0 || w.len() != self.shape[0] {
            return Err(Error::ShapeMismatch(format!(
                "contract_first: shape {:?} vs vector {}",
                self.shape,
                w.len()
            )));
        }
        let rest: usize = self.shape[1..].iter().product();
        let mut out = vec![0.0; rest];
        for a in 0..self.shape[0] {
            let wa = w[a];
            if wa == 0.0 {
                continue;
            }
            let block = &self.data[a * rest..(a + 1) * rest];
            for (o, &v) in out.iter_mut().zip(block.iter()) {
                *o += wa * v;
            }
        }
        Self::from_data(&self.shape[1..], out)
    }

    /// Contract the trailing index with `w`.
    pub fn contract_last(&self, w: &DVector<f64>) -> Result<Self> {
        let d = self.d();
        if d == 0 || w.len() != self.shape[d - 1] {
            return Err(Error::ShapeMismatch(format!(
                "contract_last: shape {:?} vs vector {}",
                self.shape,
                w.len()
            )));
        }
        let last = self.shape[d - 1];
        let pre: usize = self.shape[..d - 1].iter().product();
        let mut out = vec![0.0; pre];
        for p in 0..pre {
            let block = &self.data[p * last..(p + 1) * last];
            let mut acc = 0.0;
            for (b, &v) in block.iter().enumerate() {
                acc += v * w[b];
            }
            out[p] = acc;
        }
        Self::from_data(&self.shape[..d - 1], out)
    }

    pub fn hs_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    let mut elements: usize = 1;
    for &n in shape {
        if n == 0 {
            return Err(Error::ShapeMismatch("zero extent".into()));
        }
        elements = elements
            .checked_mul(n)
            .ok_or(Error::GuardExceeded {
                elements: usize::MAX,
                limit: DENSE_ELEMENT_GUARD,
            })?;
    }
    if elements > DENSE_ELEMENT_GUARD {
        return Err(Error::GuardExceeded {
            elements,
            limit: DENSE_ELEMENT_GUARD,
        });
    }
    Ok(elements)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let d = shape.len();
    let mut s = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

pub(crate) fn encode_index(index: &[usize], shape: &[usize]) -> usize {
    debug_assert_eq!(index.len(), shape.len());
    let mut pos = 0;
    for (k, &i) in index.iter().enumerate() {
        debug_assert!(i < shape[k]);
        pos = pos * shape[k] + i;
    }
    pos
}

pub(crate) fn decode_index(mut pos: usize, shape: &[usize], out: &mut [usize]) {
    for k in (0..shape.len()).rev() {
        out[k] = pos % shape[k];
        pos /= shape[k];
    }
}

/// Build a [`DMatrix`] from a row-major slice.
pub fn matrix_from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    debug_assert_eq!(rows * cols, data.len());
    DMatrix::from_fn(rows, cols, |r, c| data[r * cols + c])
}

/// Flatten a [`DMatrix`] into row-major order.
pub fn row_major_data(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Block Kronecker product `X ⊗ Y`, consistent with row-major groupings:
/// row `(a, c)` of the result (with `a` slowest) equals `X[a, b]·Y[c, d]`.
pub fn kron(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, m1) = x.shape();
    let (n2, m2) = y.shape();
    DMatrix::from_fn(n1 * n2, m1 * m2, |r, c| {
        x[(r / n2, c / m2)] * y[(r % n2, c % m2)]
    })
}

/// Hilbert-Schmidt inner product of same-shape tensors.
pub fn hs_inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "hs_inner: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| x * y)
        .sum())
}

/// All `d` probes of `t` by `w_1, …, w_d`: `z_i` is the contraction of `t`
/// with every vector except `w_i`, leaving index `i` open.
pub fn probe_dense(t: &DenseTensor, w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let d = t.d();
    if w.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "probe_dense: {} vectors for d = {}",
            w.len(),
            d
        )));
    }
    for (k, wk) in w.iter().enumerate() {
        if wk.len() != t.shape()[k] {
            return Err(Error::ShapeMismatch(format!(
                "probe_dense: vector {} has length {}, extent is {}",
                k,
                wk.len(),
                t.shape()[k]
            )));
        }
    }
    let mut probes = Vec::with_capacity(d);
    for i in 0..d {
        // Fold in the leading vectors before i, then the trailing ones.
        let mut cur = t.clone();
        for wk in w.iter().take(i) {
            cur = cur.contract_first(wk)?;
        }
        for k in (1..cur.d()).rev() {
            cur = cur.contract_last(&w[i + k])?;
        }
        probes.push(DVector::from_column_slice(cur.data()));
    }
    Ok(probes)
}

/// Average `t` over all permutations of its first `k` indices.
pub fn symmetrize_inputs(t: &DenseTensor, k: usize) -> Result<DenseTensor> {
    if k > t.d() {
        return Err(Error::IndexOutOfRange {
            index: k,
            d: t.d(),
            context: "symmetrize_inputs",
        });
    }
    let first = t.shape().first().copied().unwrap_or(0);
    if t.shape()[..k].iter().any(|&n| n != first) {
        return Err(Error::ShapeMismatch(format!(
            "first {} extents must be equal, got {:?}",
            k,
            &t.shape()[..k]
        )));
    }
    let perms = permutations(k);
    let mut acc = DenseTensor::zeros(t.shape())?;
    for p in &perms {
        let mut full: Vec<usize> = p.clone();
        full.extend(k..t.d());
        let permuted = t.permute(&full)?;
        acc = acc.add(&permuted)?;
    }
    Ok(acc.scale(1.0 / perms.len() as f64))
}

/// Contract `c` into each of the first `k` indices of `b`:
/// the array of `F(x_1, …, x_k) = B(Cx_1, …, Cx_k)`.
pub fn precondition(b: &DenseTensor, c: &DMatrix<f64>, k: usize) -> Result<DenseTensor> {
    if k > b.d() {
        return Err(Error::IndexOutOfRange {
            index: k,
            d: b.d(),
            context: "precondition",
        });
    }
    if c.nrows() != c.ncols() {
        return Err(Error::ShapeMismatch("preconditioner must be square".into()));
    }
    let ct = c.transpose();
    let mut out = b.clone();
    for mode in 0..k {
        if b.shape()[mode] != c.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "extent {} of mode {} does not match preconditioner size {}",
                b.shape()[mode],
                mode,
                c.nrows()
            )));
        }
        out = out.mode_product(&ct, mode)?;
    }
    Ok(out)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..k).collect();
    heap_permute(&mut items, k, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}
