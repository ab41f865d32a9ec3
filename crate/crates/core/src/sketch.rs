//! Randomized derivative-based dimension reduction: grow orthonormal bases
//! for the output and input spaces from symmetric derivative probes along
//! Gaussian draws, accepting a residual whenever it is not already captured.
//!
//! The output basis collects forward probes `y_j = D^j q(θ₀) θ̂^j`; the input
//! basis collects Riesz representatives `x̂_j = Cᵀ ψ_j` of reverse probes
//! with output functionals drawn through the output basis. A loop stops
//! after `patience` consecutive draws produce no insertion.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::deriv::{ImplicitMap, ProbeEngine};
use crate::error::Result;
use crate::linalg::thin_qr;

#[derive(Debug, Clone)]
pub struct SketchConfig {
    /// Residual acceptance tolerance, relative to the probe norm.
    pub epsilon: f64,
    /// Consecutive no-insertion draws before stopping.
    pub patience: usize,
    /// Highest derivative order probed.
    pub max_order: usize,
    /// Re-orthogonalize after this many insertions.
    pub reorth_interval: usize,
    /// Hard cap on outer iterations.
    pub max_outer: usize,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            patience: 5,
            max_order: 3,
            reorth_interval: 25,
            max_outer: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SketchResult {
    pub basis: DMatrix<f64>,
    /// The basis hit the full ambient dimension before the residual test
    /// settled.
    pub saturated: bool,
    pub outer_iterations: usize,
}

struct GrowingBasis {
    ambient: usize,
    columns: Vec<DVector<f64>>,
    since_reorth: usize,
    reorth_interval: usize,
}

impl GrowingBasis {
    fn new(ambient: usize, reorth_interval: usize) -> Self {
        Self {
            ambient,
            columns: Vec::new(),
            since_reorth: 0,
            reorth_interval,
        }
    }

    fn project_residual(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut rho = y.clone();
        for c in &self.columns {
            let coeff = c.dot(y);
            rho -= c * coeff;
        }
        rho
    }

    /// Returns true when the residual was inserted.
    fn offer(&mut self, y: &DVector<f64>, epsilon: f64) -> bool {
        let norm_y = y.norm();
        if norm_y < 1e-300 || self.columns.len() >= self.ambient {
            return false;
        }
        let rho = self.project_residual(y);
        if rho.norm() < epsilon * norm_y {
            return false;
        }
        self.columns.push(&rho / rho.norm());
        self.since_reorth += 1;
        if self.since_reorth >= self.reorth_interval {
            self.reorthogonalize();
        }
        true
    }

    fn reorthogonalize(&mut self) {
        if self.columns.is_empty() {
            return;
        }
        let (q, _) = thin_qr(&self.matrix());
        self.columns = (0..q.ncols()).map(|c| q.column(c).into_owned()).collect();
        self.since_reorth = 0;
    }

    fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ambient, self.columns.len());
        for (c, col) in self.columns.iter().enumerate() {
            m.set_column(c, col);
        }
        m
    }

    fn saturated(&self) -> bool {
        self.columns.len() >= self.ambient
    }
}

fn gaussian(n: usize, rng: &mut impl rand::Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Grow the shared output basis from symmetric forward probes along draws
/// `θ̂ = C ξ`, `ξ ~ N(0, I)`.
pub fn build_output_basis<M: ImplicitMap>(
    engine: &mut ProbeEngine<'_, M>,
    c: &DMatrix<f64>,
    cfg: &SketchConfig,
    rng: &mut impl rand::Rng,
) -> Result<SketchResult> {
    let ambient = engine.map().output_dim();
    let mut basis = GrowingBasis::new(ambient, cfg.reorth_interval);
    let mut quiet = 0usize;
    let mut outer = 0usize;
    while quiet < cfg.patience && outer < cfg.max_outer && !basis.saturated() {
        outer += 1;
        let theta_dir = c * gaussian(c.ncols(), rng);
        let probes = engine.symmetric_forward(&theta_dir, cfg.max_order)?;
        let mut updated = false;
        for y in &probes {
            if basis.offer(y, cfg.epsilon) {
                updated = true;
            }
        }
        quiet = if updated { 0 } else { quiet + 1 };
    }
    basis.reorthogonalize();
    Ok(SketchResult {
        saturated: basis.saturated(),
        basis: basis.matrix(),
        outer_iterations: outer,
    })
}

/// Grow the shared input basis from reverse probes `ψ_j` with output
/// functionals `ω = V ω̂`, inserting `x̂_j = Cᵀ ψ_j`.
pub fn build_input_basis<M: ImplicitMap>(
    engine: &mut ProbeEngine<'_, M>,
    c: &DMatrix<f64>,
    output_basis: &DMatrix<f64>,
    cfg: &SketchConfig,
    rng: &mut impl rand::Rng,
) -> Result<SketchResult> {
    let ambient = engine.map().theta_dim();
    let mut basis = GrowingBasis::new(ambient, cfg.reorth_interval);
    let mut quiet = 0usize;
    let mut outer = 0usize;
    while quiet < cfg.patience && outer < cfg.max_outer && !basis.saturated() {
        outer += 1;
        let theta_dir = c * gaussian(c.ncols(), rng);
        let omega_hat = gaussian(output_basis.ncols(), rng);
        let omega = output_basis * omega_hat;
        let probes = engine.symmetric_probes(&theta_dir, &omega, cfg.max_order)?;
        let mut updated = false;
        for psi in &probes.reverse {
            let x_hat = c.transpose() * psi;
            if basis.offer(&x_hat, cfg.epsilon) {
                updated = true;
            }
        }
        quiet = if updated { 0 } else { quiet + 1 };
    }
    basis.reorthogonalize();
    Ok(SketchResult {
        saturated: basis.saturated(),
        basis: basis.matrix(),
        outer_iterations: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::builtin::BuiltinMap;
    use crate::deriv::{generate_training_data, Multiset, WhitenedMap};
    use crate::linalg::orthonormality_defect;
    use rand::SeedableRng as _;
    use rand_chacha::ChaCha8Rng;

    fn power_law_c(n: usize, exponent: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                ((i + 1) as f64).powf(-exponent)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn linear_map_output_basis_captures_jacobian_range() {
        // γ = 0 and k = 1: probes are Jacobian-vector products. With a
        // gapped preconditioner spectrum the numerical range is the four
        // strong directions, and fresh probes must land in span(V).
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let map = BuiltinMap::new(12, 8, 0.0, &mut rng);
        let theta0 = DVector::zeros(12);
        let c = DMatrix::from_fn(12, 12, |i, j| {
            if i != j {
                0.0
            } else if i < 4 {
                1.0 / (i + 1) as f64
            } else {
                1e-4
            }
        });
        let cfg = SketchConfig {
            epsilon: 0.05,
            max_order: 1,
            ..Default::default()
        };
        let mut engine = ProbeEngine::new(&map, &theta0).unwrap();
        let result = build_output_basis(&mut engine, &c, &cfg, &mut rng).unwrap();
        let v = &result.basis;
        assert!(orthonormality_defect(v) < 1e-10);
        assert_eq!(v.ncols(), 4);

        let mut under = 0;
        for _ in 0..100 {
            let theta_dir = &c * gaussian(12, &mut rng);
            let y = engine
                .forward_probe(&[theta_dir], &Multiset::uniform(0, 1))
                .unwrap();
            let rho = &y - v * (v.transpose() * &y);
            if rho.norm() < cfg.epsilon * y.norm() {
                under += 1;
            }
        }
        assert!(under >= 95, "only {under}/100 fresh probes captured");
    }

    #[test]
    fn loose_tolerance_keeps_the_basis_tiny_and_seeds_reproduce() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let map = BuiltinMap::new(10, 7, 0.05, &mut rng);
        let theta0 = DVector::zeros(10);
        let c = power_law_c(10, 2.0);
        let cfg = SketchConfig {
            epsilon: 0.95,
            max_order: 3,
            ..Default::default()
        };
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut engine = ProbeEngine::new(&map, &theta0).unwrap();
            build_output_basis(&mut engine, &c, &cfg, &mut rng).unwrap()
        };
        let a = run(3);
        let b = run(3);
        assert!(a.basis.ncols() <= cfg.max_order * cfg.patience);
        assert_eq!(a.basis, b.basis);
        assert!(!a.saturated);
    }

    #[test]
    fn tight_tolerance_saturates_small_output_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let map = BuiltinMap::new(8, 3, 0.05, &mut rng);
        let theta0 = DVector::zeros(8);
        let c = DMatrix::identity(8, 8);
        let cfg = SketchConfig {
            epsilon: 1e-12,
            max_order: 2,
            ..Default::default()
        };
        let mut engine = ProbeEngine::new(&map, &theta0).unwrap();
        let result = build_output_basis(&mut engine, &c, &cfg, &mut rng).unwrap();
        assert!(result.saturated);
        assert_eq!(result.basis.ncols(), 3);
    }

    #[test]
    fn input_basis_spans_transposed_jacobian_range() {
        // k = 1, γ = 0: x̂ = Cᵀ Jᵀ V ω̂, so span(U) should cover the range of
        // Cᵀ Jᵀ V, assembled densely.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let map = BuiltinMap::new(10, 6, 0.0, &mut rng);
        let theta0 = DVector::zeros(10);
        let c = power_law_c(10, 1.0);
        let cfg = SketchConfig {
            epsilon: 0.02,
            max_order: 1,
            ..Default::default()
        };
        let mut engine = ProbeEngine::new(&map, &theta0).unwrap();
        let vres = build_output_basis(&mut engine, &c, &cfg, &mut rng).unwrap();
        let ures = build_input_basis(&mut engine, &c, &vres.basis, &cfg, &mut rng).unwrap();
        let u = &ures.basis;
        assert!(orthonormality_defect(u) < 1e-10);

        // Dense Jacobian of q via first-order probes on basis vectors.
        let mut jac = DMatrix::zeros(6, 10);
        for col in 0..10 {
            let mut e = DVector::zeros(10);
            e[col] = 1.0;
            let y = engine
                .forward_probe(&[e], &Multiset::uniform(0, 1))
                .unwrap();
            jac.set_column(col, &y);
        }
        let target = c.transpose() * jac.transpose() * &vres.basis;
        // Every column of the dense range should be nearly captured by U.
        for col in 0..target.ncols() {
            let t = target.column(col).into_owned();
            let rho = &t - u * (u.transpose() * &t);
            assert!(
                rho.norm() <= 3.0 * cfg.epsilon * t.norm(),
                "column {col}: residual {:.3e}",
                rho.norm() / t.norm()
            );
        }
    }

    #[test]
    fn identity_output_basis_reduces_to_plain_reverse_sketching() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let map = BuiltinMap::new(9, 5, 0.05, &mut rng);
        let theta0 = DVector::zeros(9);
        let c = power_law_c(9, 2.0);
        let cfg = SketchConfig {
            epsilon: 0.05,
            max_order: 2,
            ..Default::default()
        };
        let v_full = DMatrix::identity(5, 5);
        let mut engine = ProbeEngine::new(&map, &theta0).unwrap();
        let ures = build_input_basis(&mut engine, &c, &v_full, &cfg, &mut rng).unwrap();
        assert!(ures.basis.ncols() >= 1);

        // Held-out residual criterion on fresh reverse draws.
        let u = &ures.basis;
        let mut under = 0;
        let total = 50;
        for _ in 0..total {
            let theta_dir = &c * gaussian(9, &mut rng);
            let omega = gaussian(5, &mut rng);
            let probes = engine.symmetric_probes(&theta_dir, &omega, 2).unwrap();
            for psi in &probes.reverse {
                let x_hat = c.transpose() * psi;
                let rho = &x_hat - u * (u.transpose() * &x_hat);
                if rho.norm() <= 3.0 * cfg.epsilon * x_hat.norm() {
                    under += 1;
                }
            }
        }
        assert!(under * 10 >= 2 * total * 9, "held-out captures {under}/{}", 2 * total);
    }

    #[test]
    fn zero_preconditioner_terminates_with_empty_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let map = BuiltinMap::new(6, 4, 0.05, &mut rng);
        let theta0 = DVector::zeros(6);
        let c = DMatrix::zeros(6, 6);
        let cfg = SketchConfig {
            epsilon: 0.05,
            max_order: 2,
            ..Default::default()
        };
        let mut engine = ProbeEngine::new(&map, &theta0).unwrap();
        let v = DMatrix::identity(4, 4);
        let result = build_input_basis(&mut engine, &c, &v, &cfg, &mut rng).unwrap();
        assert_eq!(result.basis.ncols(), 0);
        assert_eq!(result.outer_iterations, cfg.patience);
    }

    #[test]
    fn growth_is_monotone_and_insertions_orthogonal() {
        let mut basis = GrowingBasis::new(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut last = 0;
        for _ in 0..20 {
            let y = gaussian(6, &mut rng);
            let before = basis.columns.len();
            let inserted = basis.offer(&y, 0.3);
            assert!(basis.columns.len() >= last);
            last = basis.columns.len();
            if inserted {
                // The fresh column is orthogonal to the prior ones.
                let m = basis.matrix();
                assert!(orthonormality_defect(&m) < 1e-10, "defect after {before}");
            }
        }
    }

    #[test]
    fn reduced_map_probes_equal_projected_full_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let map = BuiltinMap::new(10, 6, 0.05, &mut rng);
        let theta0 = DVector::zeros(10);
        let c = power_law_c(10, 2.0);
        let cfg = SketchConfig {
            epsilon: 0.05,
            max_order: 2,
            ..Default::default()
        };
        let mut engine = ProbeEngine::new(&map, &theta0).unwrap();
        let v = build_output_basis(&mut engine, &c, &cfg, &mut rng).unwrap().basis;
        let u = build_input_basis(&mut engine, &c, &v, &cfg, &mut rng)
            .unwrap()
            .basis;

        // Identity bases: the reduced map is the whitened map itself.
        let mut plain = WhitenedMap::new(&map, &theta0, c.clone()).unwrap();
        let mut reduced = WhitenedMap::new(&map, &theta0, c.clone())
            .unwrap()
            .with_bases(u.clone(), v.clone());

        let x1 = gaussian(u.ncols(), &mut rng);
        let x2 = gaussian(u.ncols(), &mut rng);
        let alpha = Multiset::from_pairs(vec![(0, 1), (1, 1)]);
        let reduced_probe = reduced.forward_probe(&[x1.clone(), x2.clone()], &alpha).unwrap();
        let full_probe = plain
            .forward_probe(&[&u * &x1, &u * &x2], &alpha)
            .unwrap();
        let projected = v.transpose() * full_probe;
        assert!(
            (reduced_probe.clone() - &projected).norm() <= 1e-10 * projected.norm(),
            "{:.3e}",
            (reduced_probe - &projected).norm()
        );

        // Training data through the reduced map stays well-formed.
        let mut rng2 = ChaCha8Rng::seed_from_u64(10);
        let samples = generate_training_data(&mut reduced, 2, 3, &mut rng2).unwrap();
        assert_eq!(samples[0].y[0].len(), v.ncols());
        assert_eq!(samples[0].psi[0].len(), u.ncols());
    }
}
