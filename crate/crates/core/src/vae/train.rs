//! Minibatch training loop: one epoch of weighted objective descent.

use super::loss::{pgvae_objective, LossBreakdown, PgvaeHyper};
use super::VaeModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{AdamHyper, AdamState};
use crate::rng::Rng;

/// Paired Adam states for the encoder and decoder.
#[derive(Debug, Clone)]
pub struct VaeOptimizer {
    pub encoder: AdamState,
    pub decoder: AdamState,
}

impl VaeOptimizer {
    pub fn new(model: &VaeModel, hyper: AdamHyper) -> Self {
        VaeOptimizer {
            encoder: AdamState::new(&model.encoder.params, hyper),
            decoder: AdamState::new(&model.decoder.params, hyper),
        }
    }
}

/// One pass over the data in shuffled minibatches.
///
/// Weights are normalized to sum one over the epoch, so the gradient scale is
/// invariant to the overall normalization of `weights` (schemes that produce
/// probability vectors and schemes that produce raw multipliers train
/// identically). Each minibatch then computes the objective with its slice of
/// the normalized weights: the data term contributes its share of the epoch
/// total, while the pair term applies per batch at full strength. That makes
/// guidance pressure grow with the dataset-to-batch ratio, which is what lets
/// the ordering constraint win against the prior's pull on realistic dataset
/// sizes.
///
/// When property guidance is on (`hyper.lambda_rel > 0`) the pair term needs
/// at least two samples per batch, so a trailing singleton batch is folded
/// into its predecessor and `batch_size` must be at least 2.
///
/// Returns the mean minibatch loss components.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &mut VaeModel,
    x: &Matrix,
    y: &[f64],
    weights: &[f64],
    hyper: &PgvaeHyper,
    batch_size: usize,
    opt: &mut VaeOptimizer,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    hyper.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptySelection("training epoch with no samples".into()));
    }
    if y.len() != n || weights.len() != n {
        return Err(Error::shape(
            "training epoch",
            format!("{n} designs = properties = weights"),
            format!("{} properties, {} weights", y.len(), weights.len()),
        ));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let guided = hyper.lambda_rel > 0.0;
    if guided && batch_size < 2 {
        return Err(Error::InvalidArgument(
            "batch_size must be >= 2 when property guidance is enabled".into(),
        ));
    }
    if guided && n < 2 {
        return Err(Error::InvalidArgument(
            "property guidance needs at least 2 training samples".into(),
        ));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::InvalidArgument(
            "weights must not all be zero".into(),
        ));
    }
    // Normalize to sum 1 over the whole epoch: upstream normalization
    // conventions become irrelevant, and each minibatch carries its share of
    // the data term while the pair term enters per batch at full strength.
    let scaled: Vec<f64> = weights.iter().map(|w| w / wsum).collect();

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    // Batch boundaries over the shuffled order; fold a trailing singleton
    // into the previous batch when the pair term needs company.
    let mut bounds: Vec<(usize, usize)> = (0..n)
        .step_by(batch_size)
        .map(|start| (start, (start + batch_size).min(n)))
        .collect();
    if guided && bounds.len() > 1 {
        let (last_start, last_end) = *bounds.last().unwrap();
        if last_end - last_start == 1 {
            bounds.pop();
            bounds.last_mut().unwrap().1 = last_end;
        }
    }

    let mut sums = LossBreakdown {
        recon: 0.0,
        kl: 0.0,
        relationship: 0.0,
        total: 0.0,
    };
    for &(start, end) in &bounds {
        let idx = &order[start..end];
        let xb = x.gather_rows(idx);
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let wb: Vec<f64> = idx.iter().map(|&i| scaled[i]).collect();
        let (breakdown, grads) = pgvae_objective(model, &xb, &yb, &wb, hyper, rng)?;
        opt.encoder.step(&mut model.encoder.params, &grads.encoder)?;
        opt.decoder.step(&mut model.decoder.params, &grads.decoder)?;
        sums.recon += breakdown.recon;
        sums.kl += breakdown.kl;
        sums.relationship += breakdown.relationship;
        sums.total += breakdown.total;
    }
    let inv = 1.0 / bounds.len() as f64;
    Ok(LossBreakdown {
        recon: sums.recon * inv,
        kl: sums.kl * inv,
        relationship: sums.relationship * inv,
        total: sums.total * inv,
    })
}
