//! A small implicit algebraic map with closed-form directional partials,
//! used for verification and end-to-end runs:
//!
//! ```text
//! R(θ, u) = (M + diag(θ)) u + γ (u∘u∘u) − s = 0
//! Q(θ, u) = E u + D θ
//! ```
//!
//! with fixed SPD `M`, source `s`, and a small cubic weight `γ`. The
//! linearized operator `A = M + diag(θ) + 3γ diag(u∘u)` is symmetric and is
//! factored once per base point.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::solve_lu;

use super::ImplicitMap;

#[derive(Debug, Clone)]
pub struct BuiltinMap {
    m: DMatrix<f64>,
    s: DVector<f64>,
    e: DMatrix<f64>,
    d: DMatrix<f64>,
    gamma: f64,
}

pub struct BuiltinState {
    pub theta: DVector<f64>,
    pub u: DVector<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl BuiltinMap {
    pub fn new(dim_in: usize, dim_out: usize, gamma: f64, rng: &mut impl rand::Rng) -> Self {
        let a = DMatrix::from_fn(dim_in, dim_in, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = &a * a.transpose() / dim_in as f64 + DMatrix::identity(dim_in, dim_in);
        let s = DVector::from_fn(dim_in, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DMatrix::from_fn(dim_out, dim_in, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = DMatrix::from_fn(dim_out, dim_in, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self { m, s, e, d, gamma }
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn residual(&self, theta: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut r = &self.m * u - &self.s;
        for i in 0..u.len() {
            r[i] += theta[i] * u[i] + self.gamma * u[i] * u[i] * u[i];
        }
        r
    }

    fn linearized(&self, theta: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.m.clone();
        for i in 0..u.len() {
            a[(i, i)] += theta[i] + 3.0 * self.gamma * u[i] * u[i];
        }
        a
    }
}

impl ImplicitMap for BuiltinMap {
    type State = BuiltinState;

    fn theta_dim(&self) -> usize {
        self.m.nrows()
    }

    fn state_dim(&self) -> usize {
        self.m.nrows()
    }

    fn output_dim(&self) -> usize {
        self.e.nrows()
    }

    fn solve_state(&self, theta: &DVector<f64>) -> Result<BuiltinState> {
        let base = self.linearized(theta, &DVector::zeros(self.state_dim()));
        let mut u = solve_lu(&base, &self.s)?;
        let tol = 1e-13 * (1.0 + self.s.norm());
        for _ in 0..60 {
            let r = self.residual(theta, &u);
            if r.norm() <= tol {
                let a = self.linearized(theta, &u);
                let lu = a.lu();
                return Ok(BuiltinState {
                    theta: theta.clone(),
                    u,
                    lu,
                });
            }
            let a = self.linearized(theta, &u);
            let step = solve_lu(&a, &r)?;
            u -= step;
        }
        let r = self.residual(theta, &u);
        Err(Error::StateSolve {
            residual: r.norm(),
            iters: 60,
        })
    }

    fn q_value(&self, st: &BuiltinState) -> DVector<f64> {
        &self.e * &st.u + &self.d * &st.theta
    }

    fn q_partial(
        &self,
        _st: &BuiltinState,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
    ) -> DVector<f64> {
        match (theta_dirs.len(), u_dirs.len()) {
            (1, 0) => &self.d * theta_dirs[0],
            (0, 1) => &self.e * u_dirs[0],
            _ => DVector::zeros(self.output_dim()),
        }
    }

    fn r_partial(
        &self,
        st: &BuiltinState,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
    ) -> DVector<f64> {
        match (theta_dirs.len(), u_dirs.len()) {
            (1, 0) => theta_dirs[0].component_mul(&st.u),
            (1, 1) => theta_dirs[0].component_mul(u_dirs[0]),
            (0, 1) => {
                let mut out = self.linearized(&st.theta, &st.u) * u_dirs[0];
                let _ = &mut out;
                out
            }
            (0, 2) => st
                .u
                .component_mul(u_dirs[0])
                .component_mul(u_dirs[1])
                .scale(6.0 * self.gamma),
            (0, 3) => u_dirs[0]
                .component_mul(u_dirs[1])
                .component_mul(u_dirs[2])
                .scale(6.0 * self.gamma),
            _ => DVector::zeros(self.state_dim()),
        }
    }

    fn q_partial_theta_open(
        &self,
        _st: &BuiltinState,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64> {
        if theta_dirs.is_empty() && u_dirs.is_empty() {
            self.d.transpose() * left
        } else {
            DVector::zeros(self.theta_dim())
        }
    }

    fn r_partial_theta_open(
        &self,
        st: &BuiltinState,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64> {
        match (theta_dirs.len(), u_dirs.len()) {
            (0, 0) => left.component_mul(&st.u),
            (0, 1) => left.component_mul(u_dirs[0]),
            _ => DVector::zeros(self.theta_dim()),
        }
    }

    fn q_partial_u_open(
        &self,
        _st: &BuiltinState,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64> {
        if theta_dirs.is_empty() && u_dirs.is_empty() {
            self.e.transpose() * left
        } else {
            DVector::zeros(self.state_dim())
        }
    }

    fn r_partial_u_open(
        &self,
        st: &BuiltinState,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64> {
        match (theta_dirs.len(), u_dirs.len()) {
            (0, 0) => self.linearized(&st.theta, &st.u).transpose() * left,
            (1, 0) => theta_dirs[0].component_mul(left),
            (0, 1) => st
                .u
                .component_mul(u_dirs[0])
                .component_mul(left)
                .scale(6.0 * self.gamma),
            (0, 2) => u_dirs[0]
                .component_mul(u_dirs[1])
                .component_mul(left)
                .scale(6.0 * self.gamma),
            _ => DVector::zeros(self.state_dim()),
        }
    }

    fn solve_linearized(&self, st: &BuiltinState, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        st.lu
            .solve(rhs)
            .ok_or_else(|| Error::SingularSystem("linearized state operator".into()))
    }

    fn solve_linearized_adjoint(
        &self,
        st: &BuiltinState,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        // A is symmetric for this map.
        self.solve_linearized(st, rhs)
    }

    fn q_partial_vanishes(&self, n_theta: usize, n_u: usize) -> bool {
        n_theta + n_u >= 2
    }

    fn r_partial_vanishes(&self, n_theta: usize, n_u: usize) -> bool {
        n_theta >= 2 || (n_theta == 1 && n_u >= 2) || n_u >= 4
    }
}
