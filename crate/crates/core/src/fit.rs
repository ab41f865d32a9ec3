//! Fixed-rank nonlinear least squares on the T3 manifold: the probe-residual
//! loss, a trust-region Riemannian Gauss-Newton solver with CG-Steihaug
//! subproblems, manifold stochastic gradient descent with Cauchy steps, and
//! rank continuation with validation-based model selection.
//!
//! For order `j` the loss over `n` training samples is
//!
//! ```text
//! Φ(T) = (1/2n) Σ_i [ Σ_{l=1..j} ‖ψ^(i) − a_l^(i)(T)‖² + ‖y^(i) − a_{j+1}^(i)(T)‖² ]
//! ```
//!
//! where `a_l^(i)(T)` are the probes of `T` by `(x^(i), …, x^(i), ω^(i))`.
//! Probing is linear in `T`, so the Gauss-Newton model on a tangent space is
//! exact up to the manifold curvature absorbed by the retraction.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::boundary_step;
use crate::manifold::{
    attach_and_retract, manifold_dim, prepare_padded_with_noise, prepare_point, project_gauge,
    variation_axpy, variation_inner, variation_norm, GaugedVariation, ManifoldPoint,
};
use crate::sweep::{apply_j, apply_jt, probe_point, probe_t3, EdgeCache};
use crate::t3::{random_t3, remove_useless_ranks, t3_svd_implicit, TuckerTensorTrain};
use crate::tensor::RankVector;

/// One training record: probe vectors `(x, …, x, ω)` and per-slot targets
/// `(ψ, …, ψ, y)`.
#[derive(Debug, Clone)]
pub struct FitSample {
    pub w: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
}

/// Least-squares problem for one derivative order, with a held-out
/// validation split used only for rank selection.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub dims: Vec<usize>,
    pub train: Vec<FitSample>,
    pub val: Vec<FitSample>,
}

impl FitProblem {
    /// Split samples into train and validation parts; the split is a
    /// deterministic function of the RNG state.
    pub fn new(
        dims: Vec<usize>,
        mut samples: Vec<FitSample>,
        val_fraction: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::ShapeMismatch(
                "validation fraction must lie in [0, 1)".into(),
            ));
        }
        use rand::seq::SliceRandom as _;
        samples.shuffle(rng);
        let n_val = ((samples.len() as f64) * val_fraction).round() as usize;
        let val = samples.split_off(samples.len() - n_val);
        Ok(Self {
            dims,
            train: samples,
            val,
        })
    }

    /// Build the order-`j` problem from symmetric probe records.
    pub fn from_probe_samples(
        samples: &[crate::deriv::ProbeSample],
        order: usize,
        val_fraction: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::ShapeMismatch("no samples".into()))?;
        let n = first.x.len();
        let m = first.y[order - 1].len();
        let mut dims = vec![n; order];
        dims.push(m);
        let fit_samples = samples
            .iter()
            .map(|s| {
                let mut w = vec![s.x.clone(); order];
                w.push(s.omega.clone());
                let mut targets = vec![s.psi[order - 1].clone(); order];
                targets.push(s.y[order - 1].clone());
                FitSample { w, targets }
            })
            .collect();
        Self::new(dims, fit_samples, val_fraction, rng)
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    /// Total number of scalar observations in the training split.
    pub fn data_dimension(&self) -> usize {
        self.train
            .iter()
            .map(|s| s.targets.iter().map(|t| t.len()).sum::<usize>())
            .sum()
    }
}

fn sample_residuals(probes: &[DVector<f64>], sample: &FitSample) -> Vec<DVector<f64>> {
    sample
        .targets
        .iter()
        .zip(probes)
        .map(|(t, z)| t - z)
        .collect()
}

fn residual_sq(residuals: &[DVector<f64>]) -> f64 {
    residuals.iter().map(|r| r.norm_squared()).sum()
}

/// Loss of an arbitrary T3 (raw cores, no manifold preparation).
pub fn loss_t3(t: &TuckerTensorTrain, samples: &[FitSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let parts: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let cache = probe_t3(t, &s.w).expect("probe shapes");
            residual_sq(&sample_residuals(cache.probes(), s))
        })
        .collect();
    Ok(parts.iter().sum::<f64>() / (2.0 * samples.len() as f64))
}

/// Loss at a prepared point together with the per-sample caches and
/// residuals consumed by the Jacobian sweeps.
pub fn loss_point(
    p: &ManifoldPoint,
    samples: &[FitSample],
) -> Result<(f64, Vec<EdgeCache>, Vec<Vec<DVector<f64>>>)> {
    let caches: Vec<EdgeCache> = samples
        .par_iter()
        .map(|s| probe_point(p, &s.w).expect("probe shapes"))
        .collect();
    let residuals: Vec<Vec<DVector<f64>>> = caches
        .iter()
        .zip(samples)
        .map(|(c, s)| sample_residuals(c.probes(), s))
        .collect();
    let loss =
        residuals.iter().map(|r| residual_sq(r)).sum::<f64>() / (2.0 * samples.len() as f64);
    Ok((loss, caches, residuals))
}

/// `Π Σ_i J_iᵀ r_i / n`: the negated Riemannian gradient when `r_i` are the
/// residuals.
fn accumulate_gradient(
    p: &ManifoldPoint,
    caches: &[EdgeCache],
    residuals: &[Vec<DVector<f64>>],
) -> Result<GaugedVariation> {
    let parts: Vec<GaugedVariation> = caches
        .par_iter()
        .zip(residuals.par_iter())
        .map(|(c, r)| apply_jt(p, c, r).expect("cache owner"))
        .collect();
    let mut acc = p.zero_variation();
    for part in &parts {
        acc = variation_axpy(1.0, &acc, 1.0, part)?;
    }
    let scaled = variation_axpy(1.0 / caches.len() as f64, &acc, 0.0, &p.zero_variation())?;
    project_gauge(p, &scaled)
}

/// Gauss-Newton operator `v ↦ Π Σ_i J_iᵀ J_i v / n` on gauged variations.
fn apply_gauss_newton(
    p: &ManifoldPoint,
    caches: &[EdgeCache],
    v: &GaugedVariation,
) -> Result<GaugedVariation> {
    let parts: Vec<GaugedVariation> = caches
        .par_iter()
        .map(|c| {
            let jv = apply_j(p, c, v).expect("cache owner");
            apply_jt(p, c, &jv).expect("cache owner")
        })
        .collect();
    let mut acc = p.zero_variation();
    for part in &parts {
        acc = variation_axpy(1.0, &acc, 1.0, part)?;
    }
    let scaled = variation_axpy(1.0 / caches.len() as f64, &acc, 0.0, &p.zero_variation())?;
    project_gauge(p, &scaled)
}

/// Outcome of one CG-Steihaug solve of `H v = g` inside radius `delta`.
pub struct CgOutcome {
    pub step: GaugedVariation,
    pub predicted_decrease: f64,
    pub hit_boundary: bool,
    pub iterations: usize,
}

/// CG-Steihaug on gauged variations: interior CG iterate, boundary
/// intersection on negative curvature or radius exit, or a
/// tolerance-satisfying iterate.
pub fn cg_steihaug(
    h: &dyn Fn(&GaugedVariation) -> GaugedVariation,
    g: &GaugedVariation,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let zero = variation_axpy(0.0, g, 0.0, g)?;
    let mut v = zero.clone();
    let mut r = g.clone();
    let mut d = r.clone();
    let mut rr = variation_inner(&r, &r)?;
    let mut hit_boundary = false;
    let mut iterations = 0;

    if rr.sqrt() > tol {
        while iterations < max_iter {
            iterations += 1;
            let hd = h(&d);
            let dhd = variation_inner(&d, &hd)?;
            let dd = variation_inner(&d, &d)?;
            if dhd <= 1e-14 * dd {
                // Nonpositive curvature: step to the boundary.
                let vv = variation_inner(&v, &v)?;
                let vd = variation_inner(&v, &d)?;
                let t = boundary_step(vv, vd, dd, delta);
                v = variation_axpy(1.0, &v, t, &d)?;
                hit_boundary = true;
                break;
            }
            let alpha = rr / dhd;
            let candidate = variation_axpy(1.0, &v, alpha, &d)?;
            if variation_norm(&candidate) >= delta {
                let vv = variation_inner(&v, &v)?;
                let vd = variation_inner(&v, &d)?;
                let t = boundary_step(vv, vd, dd, delta);
                v = variation_axpy(1.0, &v, t, &d)?;
                hit_boundary = true;
                break;
            }
            v = candidate;
            r = variation_axpy(1.0, &r, -alpha, &hd)?;
            let rr_new = variation_inner(&r, &r)?;
            if rr_new.sqrt() <= tol {
                break;
            }
            d = variation_axpy(1.0, &r, rr_new / rr, &d)?;
            rr = rr_new;
        }
    }

    let hv = h(&v);
    let predicted_decrease = variation_inner(g, &v)? - 0.5 * variation_inner(&v, &hv)?;
    Ok(CgOutcome {
        step: v,
        predicted_decrease,
        hit_boundary,
        iterations,
    })
}

#[derive(Debug, Clone)]
pub struct TrOptions {
    pub max_iters: usize,
    pub delta0: f64,
    pub delta_max: f64,
    pub accept_ratio: f64,
    pub expand_ratio: f64,
    pub shrink_ratio: f64,
    pub grad_tol_abs: f64,
    pub grad_tol_rel: f64,
    pub cg_max_iters: usize,
}

impl Default for TrOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            delta0: 1.0,
            delta_max: 1e3,
            accept_ratio: 0.1,
            expand_ratio: 0.75,
            shrink_ratio: 0.25,
            grad_tol_abs: 1e-13,
            grad_tol_rel: 1e-10,
            cg_max_iters: 250,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub control: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct FitRun {
    pub t3: TuckerTensorTrain,
    pub final_loss: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

/// Trust-region Riemannian Gauss-Newton: CG-Steihaug subproblem on the
/// tangent space, retraction by rank-truncated rounding, and the standard
/// accept/adjust rules on the reduction ratio.
pub fn tr_rmgn(problem: &FitProblem, init: &TuckerTensorTrain, opts: &TrOptions) -> Result<FitRun> {
    let mut current = init.clone();
    let mut point = prepare_point(&current)?;
    let mut delta = opts.delta0;
    let mut trace = Vec::new();
    let mut grad0: Option<f64> = None;

    let (mut loss, mut caches, mut residuals) = loss_point(&point, &problem.train)?;
    let mut iterations = 0;
    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let rhs = accumulate_gradient(&point, &caches, &residuals)?;
        let grad_norm = variation_norm(&rhs);
        let g0 = *grad0.get_or_insert(grad_norm);
        if grad_norm <= opts.grad_tol_abs || grad_norm <= opts.grad_tol_rel * g0 {
            trace.push(IterationRecord {
                iter,
                loss,
                grad_norm,
                control: delta,
                accepted: false,
            });
            break;
        }

        let hessian = |v: &GaugedVariation| {
            apply_gauss_newton(&point, &caches, v).expect("hessian apply")
        };
        let tol = grad_norm.sqrt().min(0.5) * grad_norm;
        let outcome = cg_steihaug(&hessian, &rhs, delta, tol, opts.cg_max_iters)?;

        let candidate = attach_and_retract(&point, &outcome.step)?;
        let candidate_loss = loss_t3(&candidate, &problem.train)?;
        let rho = if outcome.predicted_decrease > 0.0 {
            (loss - candidate_loss) / outcome.predicted_decrease
        } else {
            -1.0
        };
        let accepted = rho > opts.accept_ratio;
        trace.push(IterationRecord {
            iter,
            loss,
            grad_norm,
            control: delta,
            accepted,
        });

        if accepted {
            current = candidate;
            point = prepare_point(&current)?;
            let refreshed = loss_point(&point, &problem.train)?;
            loss = refreshed.0;
            caches = refreshed.1;
            residuals = refreshed.2;
        }
        if rho < opts.shrink_ratio {
            delta *= 0.25;
        } else if rho > opts.expand_ratio && outcome.hit_boundary {
            delta = (2.0 * delta).min(opts.delta_max);
        }
        if delta < 1e-14 {
            break;
        }
    }

    Ok(FitRun {
        t3: current,
        final_loss: loss,
        iterations,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct SgdOptions {
    /// Minibatch size; defaults to a tenth of the training set.
    pub batch_size: Option<usize>,
    pub c_tau: f64,
    pub c_t: f64,
    pub max_iters: usize,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self {
            batch_size: None,
            c_tau: 1.0,
            c_t: 3.0,
            max_iters: 2000,
        }
    }
}

/// Cauchy step length `‖g‖² / ‖J g‖²`, with a guarded fallback when the
/// curvature term degenerates on a tiny batch.
pub(crate) fn cauchy_scale(grad_norm_sq: f64, jg_norm_sq: f64) -> f64 {
    if jg_norm_sq < 1e-30 * grad_norm_sq {
        1e-3 / grad_norm_sq.sqrt()
    } else {
        grad_norm_sq / jg_norm_sq
    }
}

/// Manifold stochastic gradient descent with Cauchy step lengths and the
/// smoothed-loss equilibrium stopping rule.
pub fn mc_sgd(
    problem: &FitProblem,
    init: &TuckerTensorTrain,
    opts: &SgdOptions,
    rng: &mut impl rand::Rng,
) -> Result<FitRun> {
    let n_train = problem.train.len();
    let batch_size = opts
        .batch_size
        .unwrap_or_else(|| (n_train / 10).max(1))
        .clamp(1, n_train);
    let iters_per_epoch = n_train as f64 / batch_size as f64;
    let tau = opts.c_tau * iters_per_epoch;
    let alpha = 1.0 - (-1.0 / tau).exp();
    let lag = ((opts.c_t * iters_per_epoch).round() as usize).max(1);

    let mut current = init.clone();
    let mut smoothed: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let point = prepare_point(&current)?;
        let batch: Vec<usize> = rand::seq::index::sample(rng, n_train, batch_size).into_vec();
        let samples: Vec<&FitSample> = batch.iter().map(|&i| &problem.train[i]).collect();

        let caches: Vec<EdgeCache> = samples
            .par_iter()
            .map(|s| probe_point(&point, &s.w).expect("probe shapes"))
            .collect();
        let residuals: Vec<Vec<DVector<f64>>> = caches
            .iter()
            .zip(&samples)
            .map(|(c, s)| sample_residuals(c.probes(), s))
            .collect();
        let batch_loss =
            residuals.iter().map(|r| residual_sq(r)).sum::<f64>() / (2.0 * batch_size as f64);

        // Unscaled stochastic gradient direction g = Π Σ Jᵀ b; the Cauchy
        // length is invariant to the 1/n scaling.
        let mut g = point.zero_variation();
        for (c, r) in caches.iter().zip(&residuals) {
            let part = apply_jt(&point, c, r)?;
            g = variation_axpy(1.0, &g, 1.0, &part)?;
        }
        let g = project_gauge(&point, &g)?;
        let g_norm_sq = variation_inner(&g, &g)?;
        if g_norm_sq == 0.0 {
            trace.push(IterationRecord {
                iter,
                loss: batch_loss,
                grad_norm: 0.0,
                control: 0.0,
                accepted: false,
            });
            break;
        }
        let jg_sq: f64 = caches
            .iter()
            .map(|c| {
                apply_j(&point, c, &g)
                    .expect("cache owner")
                    .iter()
                    .map(|z| z.norm_squared())
                    .sum::<f64>()
            })
            .sum();
        let t = cauchy_scale(g_norm_sq, jg_sq);
        let step = variation_axpy(t, &g, 0.0, &point.zero_variation())?;
        current = attach_and_retract(&point, &step)?;

        trace.push(IterationRecord {
            iter,
            loss: batch_loss,
            grad_norm: g_norm_sq.sqrt(),
            control: t,
            accepted: true,
        });

        let s = match smoothed.last() {
            None => batch_loss,
            Some(prev) => alpha * batch_loss + (1.0 - alpha) * prev,
        };
        smoothed.push(s);
        if smoothed.len() > lag {
            let ds = s - smoothed[smoothed.len() - 1 - lag];
            if ds > 0.0 {
                break;
            }
        }
    }

    let final_loss = loss_t3(&current, &problem.train)?;
    Ok(FitRun {
        t3: current,
        final_loss,
        iterations,
        trace,
    })
}

/// Rank continuation controls. Edges whose condition number is at least
/// `tau` times better than the worst edge grow by `n_chunk`; a proposal
/// that survives useless-rank removal unchanged triggers a uniform
/// increase instead.
#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub optimizer: OptimizerKind,
    pub tr: TrOptions,
    pub sgd: SgdOptions,
    /// Stop when training data per manifold dimension falls below this.
    pub ratio_cap: f64,
    pub tau: f64,
    pub n_chunk: usize,
    pub max_stages: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    TrRmgn,
    McSgd,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::McSgd,
            tr: TrOptions::default(),
            sgd: SgdOptions::default(),
            ratio_cap: 2.0,
            tau: 10.0,
            n_chunk: 1,
            max_stages: 100,
        }
    }
}

/// Propose grown ranks from the edge condition numbers of the fitted
/// iterate, then clip to feasibility.
pub fn propose_ranks(
    t: &TuckerTensorTrain,
    dims: &[usize],
    tau: f64,
    n_chunk: usize,
) -> Result<RankVector> {
    let (_, spectra) = t3_svd_implicit(t, &crate::linalg::Truncation::none())?;
    let tucker = t.tucker_ranks();
    let tt = t.tt_ranks();
    let d = dims.len();

    let cond = |s: &[f64], rank: usize| -> f64 {
        if rank == 0 || rank > s.len() || s[rank - 1] <= 0.0 {
            f64::INFINITY
        } else {
            s[0] / s[rank - 1]
        }
    };
    let kappa_tucker: Vec<f64> = (0..d).map(|i| cond(&spectra.tucker[i], tucker[i])).collect();
    let kappa_tt: Vec<f64> = (1..d).map(|i| cond(&spectra.tt[i - 1], tt[i])).collect();
    let kappa_max = kappa_tucker
        .iter()
        .chain(kappa_tt.iter())
        .fold(1.0f64, |acc, &k| if k.is_finite() { acc.max(k) } else { acc });

    // Grow edges at least `tau` times better conditioned than the worst.
    let well = |k: f64| k.is_finite() && k * tau < kappa_max;
    let mut n_new: Vec<usize> = (0..d)
        .map(|i| tucker[i] + if well(kappa_tucker[i]) { n_chunk } else { 0 })
        .collect();
    let mut r_new = tt.clone();
    for i in 1..d {
        if well(kappa_tt[i - 1]) {
            r_new[i] += n_chunk;
        }
    }
    let (n2, r2) = remove_useless_ranks(&n_new, &r_new, dims);
    if n2 == tucker && r2 == tt {
        // Nothing survived: uniform increase, then clip again.
        n_new = tucker.iter().map(|&n| n + n_chunk).collect();
        r_new = tt.clone();
        for i in 1..d {
            r_new[i] += n_chunk;
        }
        let (n3, r3) = remove_useless_ranks(&n_new, &r_new, dims);
        return RankVector::new(n3, r3);
    }
    RankVector::new(n2, r2)
}

#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: usize,
    pub tucker: Vec<usize>,
    pub tt: Vec<usize>,
    pub manifold_dim: usize,
    pub train_loss: f64,
    pub val_error: f64,
    pub wall_secs: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub best: TuckerTensorTrain,
    pub best_stage: usize,
    pub stages: Vec<StageRecord>,
    /// Fitted iterate per stage, aligned with `stages`.
    pub models: Vec<TuckerTensorTrain>,
}

/// Relative forward error `sqrt(Σ‖y − ŷ‖² / Σ‖y‖²)` of a model's forward
/// probes against the stored targets.
pub fn relative_forward_error(t: &TuckerTensorTrain, samples: &[FitSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let parts: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let cache = probe_t3(t, &s.w).expect("probe shapes");
            let last = s.w.len() - 1;
            let y_true = &s.targets[last];
            let y_hat = &cache.probes()[last];
            ((y_true - y_hat).norm_squared(), y_true.norm_squared())
        })
        .collect();
    let num: f64 = parts.iter().map(|p| p.0).sum();
    let den: f64 = parts.iter().map(|p| p.1).sum();
    Ok((num / den).sqrt())
}

/// Fit → grow ranks → fit, keeping the stage with the smallest validation
/// forward error. Padded restarts are jiggled with noise because the padded
/// point is degenerate by construction.
pub fn fit_with_continuation(
    problem: &FitProblem,
    opts: &ContinuationOptions,
    rng: &mut impl rand::Rng,
) -> Result<ContinuationResult> {
    let d = problem.d();
    let dims = problem.dims.clone();
    let data_dim = problem.data_dimension() as f64;

    // Rank-all-ones start, scaled to the RMS forward-target magnitude.
    let rms = (problem
        .train
        .iter()
        .map(|s| s.targets[d - 1].norm_squared())
        .sum::<f64>()
        / problem.train.len() as f64)
        .sqrt();
    let ones = RankVector::all_ones(d);
    let mut init = random_t3(&dims, &ones.tucker, &ones.tt, rng)?;
    let norm = init.hs_norm();
    if norm > 0.0 && rms > 0.0 {
        init = init.scale(rms / norm);
    }

    let mut stages: Vec<StageRecord> = Vec::new();
    let mut models: Vec<TuckerTensorTrain> = Vec::new();
    let mut best: Option<(usize, f64, TuckerTensorTrain)> = None;

    for stage in 0..opts.max_stages {
        let started = Instant::now();
        let run = match opts.optimizer {
            OptimizerKind::TrRmgn => tr_rmgn(problem, &init, &opts.tr)?,
            OptimizerKind::McSgd => mc_sgd(problem, &init, &opts.sgd, rng)?,
        };
        let val_error = if problem.val.is_empty() {
            run.final_loss
        } else {
            relative_forward_error(&run.t3, &problem.val)?
        };
        let tucker = run.t3.tucker_ranks();
        let tt = run.t3.tt_ranks();
        let dim = manifold_dim(&dims, &tucker, &tt);
        stages.push(StageRecord {
            stage,
            tucker: tucker.clone(),
            tt: tt.clone(),
            manifold_dim: dim,
            train_loss: run.final_loss,
            val_error,
            wall_secs: started.elapsed().as_secs_f64(),
            iterations: run.iterations,
        });
        models.push(run.t3.clone());
        if best.as_ref().map(|(_, e, _)| val_error < *e).unwrap_or(true) {
            best = Some((stage, val_error, run.t3.clone()));
        }

        if opts.ratio_cap <= 0.0 {
            break;
        }
        let proposal = propose_ranks(&run.t3, &dims, opts.tau, opts.n_chunk)?;
        if proposal.tucker == tucker && proposal.tt == tt {
            break;
        }
        let new_dim = manifold_dim(&dims, &proposal.tucker, &proposal.tt) as f64;
        if data_dim / new_dim < opts.ratio_cap {
            break;
        }
        // Degenerate padded restart; noise restores the parameterization.
        let padded = prepare_padded_with_noise(&run.t3, &proposal.tucker, &proposal.tt, rng)?;
        init = padded.to_t3();
    }

    let (best_stage, _, best_t3) = best.expect("at least one stage");
    Ok(ContinuationResult {
        best: best_t3,
        best_stage,
        stages,
        models,
    })
}
