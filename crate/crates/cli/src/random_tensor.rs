//! Random-tensor benchmark: fit a symmetrized, preconditioned Gaussian
//! tensor with rank continuation and compare the error curve against the
//! quasi-optimal T3-SVD baseline evaluated at the same ranks.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use t4s_core::fit::{
    fit_with_continuation, relative_forward_error, ContinuationOptions, FitProblem, FitSample,
    OptimizerKind, SgdOptions, TrOptions,
};
use t4s_core::linalg::Truncation;
use t4s_core::t3::t3_svd_dense;
use t4s_core::tensor::{precondition, probe_dense, symmetrize_inputs, DenseTensor};

use crate::config::Config;
use crate::output;

/// Build the target: entries `N(0, 1)`, symmetrized over the first `k`
/// indices, preconditioned by the diagonal power law in every input index.
pub fn build_target(k: usize, n: usize, m: usize, power: f64, seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![n; k];
    dims.push(m);
    let raw = DenseTensor::from_fn(&dims, |_| rng.sample::<f64, _>(StandardNormal)).unwrap();
    let sym = symmetrize_inputs(&raw, k).unwrap();
    let c = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            ((i + 1) as f64).powf(-power)
        } else {
            0.0
        }
    });
    precondition(&sym, &c, k).unwrap()
}

/// Normalized training probes of a dense target; targets are all `d` slot
/// probes per sample.
pub fn training_samples(
    target: &DenseTensor,
    n_s: usize,
    rng: &mut impl rand::Rng,
) -> Vec<FitSample> {
    let d = target.d();
    let dims = target.shape();
    (0..n_s)
        .map(|_| {
            let mut x = DVector::from_fn(dims[0], |_, _| rng.sample::<f64, _>(StandardNormal));
            x /= x.norm();
            let mut omega =
                DVector::from_fn(dims[d - 1], |_, _| rng.sample::<f64, _>(StandardNormal));
            omega /= omega.norm();
            let mut w = vec![x; d - 1];
            w.push(omega);
            let targets = probe_dense(target, &w).unwrap();
            FitSample { w, targets }
        })
        .collect()
}

/// Unnormalized test draws carrying only the forward-probe target.
pub fn test_samples(
    target: &DenseTensor,
    n_t: usize,
    rng: &mut impl rand::Rng,
) -> Vec<FitSample> {
    let d = target.d();
    let dims = target.shape();
    (0..n_t)
        .map(|_| {
            let x = DVector::from_fn(dims[0], |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut w = vec![x; d - 1];
            w.push(DVector::zeros(dims[d - 1]));
            let mut cur = target.clone();
            for wi in w.iter().take(d - 1) {
                cur = cur.contract_first(wi).unwrap();
            }
            let y = DVector::from_column_slice(cur.data());
            let mut targets = vec![DVector::zeros(0); d - 1];
            targets.push(y);
            FitSample { w, targets }
        })
        .collect()
}

pub fn continuation_options(cfg: &Config) -> ContinuationOptions {
    ContinuationOptions {
        optimizer: if cfg.fit.optimizer == "tr-rmgn" {
            OptimizerKind::TrRmgn
        } else {
            OptimizerKind::McSgd
        },
        tr: TrOptions {
            max_iters: cfg.fit.tr_max_iters,
            ..Default::default()
        },
        sgd: SgdOptions {
            max_iters: cfg.fit.sgd_max_iters,
            ..Default::default()
        },
        ratio_cap: cfg.fit.ratio_cap,
        tau: cfg.fit.tau,
        n_chunk: cfg.fit.n_chunk,
        max_stages: cfg.fit.max_stages,
    }
}

pub fn run(cfg: &Config, out_dir: &Path) -> Result<(), String> {
    let seed = cfg.rng.seed;
    let (k, n, m) = (cfg.shape.k, cfg.shape.n, cfg.shape.m);
    let target = build_target(k, n, m, cfg.precondition.power_law, seed);
    let mut dims = vec![n; k];
    dims.push(m);

    let mut data_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e64);
    let train = training_samples(&target, cfg.data.n_s, &mut data_rng);
    let problem = FitProblem::new(
        dims.clone(),
        train,
        cfg.data.validation_fraction,
        &mut data_rng,
    )
    .map_err(|e| e.to_string())?;
    let mut test_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7374);
    let test = test_samples(&target, cfg.data.n_t, &mut test_rng);

    let mut fit_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6669_7400);
    let opts = continuation_options(cfg);
    let result =
        fit_with_continuation(&problem, &opts, &mut fit_rng).map_err(|e| e.to_string())?;

    // Per-stage fitted and baseline errors on the test draws.
    let mut curve_rows: Vec<String> = Vec::new();
    let mut stage_rows = Vec::new();
    for (record, model) in result.stages.iter().zip(&result.models) {
        let fitted_err = relative_forward_error(model, &test).map_err(|e| e.to_string())?;
        let trunc = Truncation::ranks(record.tucker.clone(), record.tt.clone());
        let (baseline, _) = t3_svd_dense(&target, &trunc).map_err(|e| e.to_string())?;
        let baseline_err =
            relative_forward_error(&baseline, &test).map_err(|e| e.to_string())?;
        curve_rows.push(format!(
            "{},{},{},{:.16e}",
            record.stage,
            record.manifold_dim,
            cfg.fit.optimizer,
            fitted_err
        ));
        curve_rows.push(format!(
            "{},{},t3-svd,{:.16e}",
            record.stage, record.manifold_dim, baseline_err
        ));
        stage_rows.push(json!({
            "stage": record.stage,
            "tucker": record.tucker,
            "tt": record.tt,
            "manifold_dim": record.manifold_dim,
            "train_loss": record.train_loss,
            "val_error": record.val_error,
            "test_error": fitted_err,
            "baseline_error": baseline_err,
        }));
    }

    let hash = cfg.hash();
    output::write_file(
        out_dir,
        "curve.csv",
        &format!(
            "# config_hash={hash} seed={seed}\nstage,manifold_dim,method,relative_forward_error\n{}\n",
            curve_rows.join("\n")
        ),
    )?;
    output::write_trace_csv(out_dir, &hash, seed, &result.stages)?;
    let summary = json!({
        "config_hash": hash,
        "seed": seed,
        "scenario": "random-tensor",
        "best_stage": result.best_stage,
        "stages": stage_rows,
    });
    output::write_file(
        out_dir,
        "summary.json",
        &format!("{}\n", serde_json::to_string_pretty(&summary).unwrap()),
    )?;
    output::write_meta(out_dir, &hash, seed)?;
    println!(
        "random-tensor: {} stages, best stage {} (val err {:.3e})",
        result.stages.len(),
        result.best_stage,
        result.stages[result.best_stage].val_error
    );
    Ok(())
}
