//! The assembled Taylor surrogate: a constant term plus one Tucker tensor
//! train per derivative order, evaluated as
//!
//! ```text
//! f_k(x) = f(0) + Σ_{j=1..k} (1/j!) · T_j(x, …, x)
//! ```
//!
//! Factorials are applied at evaluation time; the stored trains represent
//! raw derivative probes.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::probe_t3;
use crate::t3::TuckerTensorTrain;
use crate::tensor::{matrix_from_row_major, row_major_data};

const MODEL_FORMAT: &str = "t4s-model";
const MODEL_VERSION: u32 = 1;

/// Metadata carried alongside the fitted terms.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub notes: String,
    /// Per-order continuation traces: `(order, stage, manifold_dim,
    /// train_loss, val_error)`.
    pub stage_history: Vec<(usize, usize, usize, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct T4sModel {
    pub f0: DVector<f64>,
    /// `(order j, fitted train for D^j f(0))`, orders `1..=k` without gaps.
    pub terms: Vec<(usize, TuckerTensorTrain)>,
    pub meta: ModelMeta,
}

impl T4sModel {
    pub fn new(f0: DVector<f64>, terms: Vec<(usize, TuckerTensorTrain)>, meta: ModelMeta) -> Result<Self> {
        for (slot, (order, term)) in terms.iter().enumerate() {
            if *order != slot + 1 {
                return Err(Error::BadContainer(format!(
                    "orders must run 1..=k without gaps, found {order} at slot {slot}"
                )));
            }
            if term.d() != order + 1 {
                return Err(Error::BadContainer(format!(
                    "order-{order} term must have {} indices, found {}",
                    order + 1,
                    term.d()
                )));
            }
            let dims = term.dims();
            if dims[*order] != f0.len() {
                return Err(Error::BadContainer(format!(
                    "order-{order} output dimension {} does not match f(0) length {}",
                    dims[*order],
                    f0.len()
                )));
            }
        }
        Ok(Self { f0, terms, meta })
    }

    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn input_dim(&self) -> usize {
        self.terms
            .first()
            .map(|(_, t)| t.dims()[0])
            .unwrap_or(0)
    }

    /// Partial-sum evaluation through order `up_to`.
    pub fn evaluate(&self, x: &DVector<f64>, up_to: usize) -> Result<DVector<f64>> {
        if up_to > self.order() {
            return Err(Error::IndexOutOfRange {
                index: up_to,
                d: self.order(),
                context: "evaluate",
            });
        }
        let mut out = self.f0.clone();
        let mut factorial = 1.0;
        for (order, term) in &self.terms[..up_to] {
            factorial *= *order as f64;
            let mut w: Vec<DVector<f64>> = vec![x.clone(); *order];
            w.push(DVector::zeros(self.f0.len()));
            let cache = probe_t3(term, &w)?;
            out += &cache.probes()[*order] / factorial;
        }
        Ok(out)
    }

    /// Compose the input-side Tucker bases with `U` and the output-side
    /// basis with `V`, producing a model that evaluates on full-space
    /// inputs. `f0` is replaced by the supplied full-space value.
    pub fn lift_to_original(
        &self,
        u: &DMatrix<f64>,
        v: &DMatrix<f64>,
        f0_full: DVector<f64>,
    ) -> Result<T4sModel> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (order, term) in &self.terms {
            let mut lifted = term.clone();
            for slot in 0..*order {
                lifted.bases_mut()[slot] = u * &term.bases()[slot];
            }
            lifted.bases_mut()[*order] = v * &term.bases()[*order];
            terms.push((*order, lifted));
        }
        T4sModel::new(f0_full, terms, self.meta.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let container = ModelContainer {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            f0: self.f0.iter().copied().collect(),
            terms: self
                .terms
                .iter()
                .map(|(order, t)| TermContainer {
                    order: *order,
                    dims: t.dims(),
                    tucker_ranks: t.tucker_ranks(),
                    tt_ranks: t.tt_ranks(),
                    bases: t.bases().iter().map(row_major_data).collect(),
                    cores: t.train().cores().iter().map(|c| c.data().to_vec()).collect(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string(&container)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let c: ModelContainer = serde_json::from_str(json)?;
        if c.format != MODEL_FORMAT {
            return Err(Error::BadContainer(format!("format tag {:?}", c.format)));
        }
        if c.version != MODEL_VERSION {
            return Err(Error::BadContainer(format!("version {}", c.version)));
        }
        let mut terms = Vec::with_capacity(c.terms.len());
        for t in &c.terms {
            let d = t.dims.len();
            if t.tucker_ranks.len() != d || t.tt_ranks.len() != d + 1 || t.bases.len() != d {
                return Err(Error::BadContainer("term rank vectors".into()));
            }
            let mut bases = Vec::with_capacity(d);
            let mut cores = Vec::with_capacity(d);
            for i in 0..d {
                if t.bases[i].len() != t.dims[i] * t.tucker_ranks[i] {
                    return Err(Error::BadContainer(format!("term basis {i} size")));
                }
                bases.push(matrix_from_row_major(
                    t.dims[i],
                    t.tucker_ranks[i],
                    &t.bases[i],
                ));
                let (r0, n, r1) = (t.tt_ranks[i], t.tucker_ranks[i], t.tt_ranks[i + 1]);
                if t.cores[i].len() != r0 * n * r1 {
                    return Err(Error::BadContainer(format!("term core {i} size")));
                }
                let mut core = crate::t3::Core::zeros(r0, n, r1);
                core.data_mut().copy_from_slice(&t.cores[i]);
                cores.push(core);
            }
            terms.push((
                t.order,
                TuckerTensorTrain::new(bases, crate::t3::TensorTrain::new(cores)?)?,
            ));
        }
        T4sModel::new(DVector::from_vec(c.f0), terms, c.meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TermContainer {
    order: usize,
    dims: Vec<usize>,
    tucker_ranks: Vec<usize>,
    tt_ranks: Vec<usize>,
    bases: Vec<Vec<f64>>,
    cores: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelContainer {
    format: String,
    version: u32,
    f0: Vec<f64>,
    terms: Vec<TermContainer>,
    meta: ModelMeta,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Truncation;
    use crate::t3::{random_t3, t3_svd_dense, t3_svd_implicit};
    use crate::tensor::DenseTensor;
    use approx::assert_relative_eq;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn linear_term(a: &DMatrix<f64>) -> TuckerTensorTrain {
        let (t3, _) = t3_svd_dense(
            &DenseTensor::from_fn(&[a.ncols(), a.nrows()], |i| a[(i[1], i[0])]).unwrap(),
            &Truncation::none(),
        )
        .unwrap();
        t3
    }

    #[test]
    fn constant_and_linear_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(4, 6, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let f0 = DVector::from_fn(4, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let model = T4sModel::new(
            f0.clone(),
            vec![(1, linear_term(&a))],
            ModelMeta::default(),
        )
        .unwrap();

        let zero = DVector::zeros(6);
        assert_relative_eq!(model.evaluate(&zero, 0).unwrap(), f0, epsilon = 0.0);
        assert_relative_eq!(model.evaluate(&zero, 1).unwrap(), f0, epsilon = 1e-14);

        let x = DVector::from_fn(6, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let expect = &f0 + &a * &x;
        assert_relative_eq!(model.evaluate(&x, 1).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_matches_a_dense_taylor_oracle() {
        // Plant exact dense derivative tensors and compare partial sums.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let m = 3;
        let d1 = DenseTensor::from_fn(&[n, m], |_| rng.gen::<f64>() * 2.0 - 1.0).unwrap();
        let d2 = DenseTensor::from_fn(&[n, n, m], |_| rng.gen::<f64>() * 2.0 - 1.0).unwrap();
        let f0 = DVector::from_fn(m, |_, _| rng.gen::<f64>() * 2.0 - 1.0);

        let (t1, _) = t3_svd_dense(&d1, &Truncation::none()).unwrap();
        let (t2, _) = t3_svd_dense(&d2, &Truncation::none()).unwrap();
        let model =
            T4sModel::new(f0.clone(), vec![(1, t1), (2, t2)], ModelMeta::default()).unwrap();

        let x = DVector::from_fn(n, |_, _| 0.3 * (rng.gen::<f64>() * 2.0 - 1.0));
        // Dense Taylor oracle: f0 + D1·x + (1/2)·D2(x, x, ·).
        let mut expect = f0.clone();
        for j in 0..m {
            for i in 0..n {
                expect[j] += d1.get(&[i, j]) * x[i];
            }
        }
        for j in 0..m {
            let mut acc = 0.0;
            for i1 in 0..n {
                for i2 in 0..n {
                    acc += d2.get(&[i1, i2, j]) * x[i1] * x[i2];
                }
            }
            expect[j] += 0.5 * acc;
        }
        let got = model.evaluate(&x, 2).unwrap();
        assert_relative_eq!(got, expect, epsilon = 1e-10);

        // Partial sums nest.
        let one = model.evaluate(&x, 1).unwrap();
        let direct: DVector<f64> = {
            let mut v = f0.clone();
            for j in 0..m {
                for i in 0..n {
                    v[j] += d1.get(&[i, j]) * x[i];
                }
            }
            v
        };
        assert_relative_eq!(one, direct, epsilon = 1e-12);
    }

    #[test]
    fn lift_composes_bases_and_agrees_with_projected_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n_red = 3;
        let m_red = 2;
        let n_full = 7;
        let m_full = 5;
        let term1 = random_t3(&[n_red, m_red], &[2, 2], &[1, 2, 1], &mut rng).unwrap();
        let term2 = random_t3(
            &[n_red, n_red, m_red],
            &[2, 2, 2],
            &[1, 2, 2, 1],
            &mut rng,
        )
        .unwrap();
        let f0_red = DVector::from_fn(m_red, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let model = T4sModel::new(
            f0_red.clone(),
            vec![(1, term1), (2, term2)],
            ModelMeta::default(),
        )
        .unwrap();

        let u = crate::linalg::thin_qr(&DMatrix::from_fn(n_full, n_red, |_, _| {
            rng.gen::<f64>() * 2.0 - 1.0
        }))
        .0;
        let v = crate::linalg::thin_qr(&DMatrix::from_fn(m_full, m_red, |_, _| {
            rng.gen::<f64>() * 2.0 - 1.0
        }))
        .0;
        let f0_full = &v * &f0_red;
        let lifted = model.lift_to_original(&u, &v, f0_full.clone()).unwrap();

        // Identity lift is a no-op.
        let same = model
            .lift_to_original(
                &DMatrix::identity(n_red, n_red),
                &DMatrix::identity(m_red, m_red),
                f0_red.clone(),
            )
            .unwrap();
        for ((_, a), (_, b)) in same.terms.iter().zip(&model.terms) {
            assert_eq!(a.bases(), b.bases());
        }

        // Composed bases stay orthonormal when the term bases are.
        for (_, t) in &lifted.terms {
            for (i, b) in t.bases().iter().enumerate() {
                let defect = crate::linalg::orthonormality_defect(b);
                // Random term bases from random_t3 are orthonormal.
                assert!(defect < 1e-10, "basis {i}: {defect:.2e}");
            }
        }

        // Agreement on 50 random full-space points with U-compatible inputs.
        for _ in 0..50 {
            let x_red = DVector::from_fn(n_red, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let x_full = &u * &x_red;
            let lifted_val = lifted.evaluate(&x_full, 2).unwrap();
            let reduced_val = &v * model.evaluate(&x_red, 2).unwrap();
            assert!(
                (lifted_val.clone() - &reduced_val).norm() <= 1e-12 * reduced_val.norm().max(1.0)
            );
        }
    }

    #[test]
    fn save_load_round_trip_bitwise_and_corruption_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let term = random_t3(&[4, 4, 3], &[2, 2, 2], &[1, 2, 2, 1], &mut rng).unwrap();
        let f0 = DVector::from_fn(3, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let meta = ModelMeta {
            seed: 77,
            notes: "fixture".into(),
            stage_history: vec![(2, 0, 12, 1e-3, 2e-3)],
        };
        let model = T4sModel::new(f0, vec![(1, random_t3(&[4, 3], &[2, 2], &[1, 2, 1], &mut rng).unwrap()), (2, term)], meta)
            .unwrap();

        let json = model.to_json().unwrap();
        let back = T4sModel::from_json(&json).unwrap();
        assert_eq!(back.f0.as_slice(), model.f0.as_slice());
        for ((_, a), (_, b)) in back.terms.iter().zip(&model.terms) {
            assert_eq!(a.train().cores(), b.train().cores());
        }
        // Evaluations agree bitwise.
        let x = DVector::from_fn(4, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let ya = model.evaluate(&x, 2).unwrap();
        let yb = back.evaluate(&x, 2).unwrap();
        for (a, b) in ya.iter().zip(yb.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        // Spectra survive the round trip.
        let (_, sa) = t3_svd_implicit(&model.terms[1].1, &Truncation::none()).unwrap();
        let (_, sb) = t3_svd_implicit(&back.terms[1].1, &Truncation::none()).unwrap();
        for (x, y) in sa.tucker.iter().zip(&sb.tucker) {
            for (p, q) in x.iter().zip(y.iter()) {
                assert_relative_eq!(p, q, epsilon = 1e-14);
            }
        }

        // Corrupted container tag is rejected outright.
        let bad = json.replace("t4s-model", "t4s-nope");
        assert!(T4sModel::from_json(&bad).is_err());
        let bad_version = json.replace("\"version\":1", "\"version\":9");
        assert!(T4sModel::from_json(&bad_version).is_err());
    }
}
