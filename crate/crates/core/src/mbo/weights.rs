//! Sample-weighting rules for the optimization loop, plus the
//! effective-sample-size diagnostic.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::stats;
use crate::vae::{reconstruction_row, VaeModel};

/// Exponentiated, max-shifted, normalized reward weights:
/// `w_i = exp(gamma * (y_i - max_j y_j)) / sum`. The shift makes the
/// exponentials overflow-free and cancels any constant added to all scores.
/// `gamma = 0` gives uniform weights (the limit case).
pub fn rwr_weights(y: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::EmptySelection("reward weighting of no scores".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "reward-weighting scores".into(),
        });
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rwr gamma must be nonnegative, got {gamma}"
        )));
    }
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = y.iter().map(|&v| (gamma * (v - max)).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    Ok(w)
}

/// `1 / sum w_i^2` for a normalized weight vector: the number of samples an
/// equally-weighted batch would need to carry the same information. Ranges
/// from 1 (one-hot) to `w.len()` (uniform).
pub fn effective_sample_size(w: &[f64]) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptySelection("effective size of no weights".into()));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "weights must sum to 1 (got {sum})"
        )));
    }
    Ok(1.0 / w.iter().map(|v| v * v).sum::<f64>())
}

/// Running threshold for the adaptive-sampling scheme. It starts at the
/// objective threshold `y_m` and ratchets up to the batch quantile each
/// iteration, never decreasing.
#[derive(Debug, Clone, Copy)]
pub struct CbasState {
    pub threshold: f64,
    /// Latent Monte Carlo samples per density estimate.
    pub mc_samples: usize,
}

impl CbasState {
    pub fn new(y_m: f64, mc_samples: usize) -> Self {
        CbasState {
            threshold: y_m,
            mc_samples,
        }
    }
}

/// Adaptive-sampling weights: a prior-to-current density ratio gated by an
/// above-threshold indicator.
///
/// `w_i ∝ (p_baseline(x_i) / p_current(x_i)) * 1[y_i >= q]`, where `q` is the
/// ratcheted threshold (see [`CbasState`]) updated from the `quantile`-th
/// percentile of this batch's scores. Marginal densities are estimated by
/// Monte Carlo over `mc_samples` shared prior latents:
/// `p(x) ≈ mean_m p(x | z_m)`, evaluated through the decoder likelihood. The
/// same latents serve both models and every design, so when the two models
/// are identical the ratio is exactly 1, and the Gaussian normalizing
/// constant cancels. Ratios are combined in log space and shift-normalized,
/// which the final normalization absorbs.
///
/// When no score clears the threshold the single best design gets weight 1
/// (with a warning) rather than aborting the run.
pub fn cbas_weights(
    y: &[f64],
    designs_model_space: &Matrix,
    current: &VaeModel,
    baseline: &VaeModel,
    quantile: f64,
    state: &mut CbasState,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptySelection("adaptive weighting of no scores".into()));
    }
    if designs_model_space.rows() != n {
        return Err(Error::shape(
            "adaptive weighting designs",
            n,
            designs_model_space.rows(),
        ));
    }
    if state.mc_samples == 0 {
        return Err(Error::InvalidArgument(
            "density estimate needs at least 1 latent sample".into(),
        ));
    }
    state.threshold = state.threshold.max(stats::percentile(y, quantile)?);
    let q = state.threshold;

    let passing: Vec<usize> = (0..n).filter(|&i| y[i] >= q).collect();
    if passing.is_empty() {
        log::warn!(
            "no sample reached the threshold {q}; falling back to the single best design"
        );
        let best = (0..n)
            .max_by(|&a, &b| y[a].partial_cmp(&y[b]).expect("finite scores"))
            .expect("non-empty scores");
        let mut w = vec![0.0; n];
        w[best] = 1.0;
        return Ok(w);
    }

    // Shared latents: one draw reused across designs and across both models.
    let z = Matrix::from_fn(state.mc_samples, current.latent_dim, |_, _| rng.normal());
    let out_base = baseline.decode(&z)?;
    let out_cur = current.decode(&z)?;
    let mut ratios = Vec::with_capacity(passing.len());
    let mut ll_base = Vec::with_capacity(state.mc_samples);
    let mut ll_cur = Vec::with_capacity(state.mc_samples);
    for &i in &passing {
        let row = designs_model_space.row(i);
        ll_base.clear();
        ll_cur.clear();
        for m in 0..state.mc_samples {
            ll_base.push(-reconstruction_row(&baseline.kind, row, out_base.row(m))?);
            ll_cur.push(-reconstruction_row(&current.kind, row, out_cur.row(m))?);
        }
        // log mean exp; the 1/M terms cancel in the difference.
        ratios.push(log_sum_exp(&ll_base) - log_sum_exp(&ll_cur));
    }
    let shift = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w = vec![0.0; n];
    let mut sum = 0.0;
    for (&i, &lr) in passing.iter().zip(&ratios) {
        let v = (lr - shift).exp();
        w[i] = v;
        sum += v;
    }
    if !(sum.is_finite() && sum > 0.0) {
        return Err(Error::NonFinite {
            context: "adaptive weighting density ratios".into(),
        });
    }
    w.iter_mut().for_each(|v| *v /= sum);
    Ok(w)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::{DecoderKind, VaeArch};

    #[test]
    fn rwr_hand_case_and_limits() {
        // y = (0, 1), gamma = ln 9: raw = (exp(-ln 9), 1) = (1/9, 1)
        // → w = (0.1, 0.9).
        let w = rwr_weights(&[0.0, 1.0], 9.0_f64.ln()).unwrap();
        assert!((w[0] - 0.1).abs() < 1e-12 && (w[1] - 0.9).abs() < 1e-12, "{w:?}");

        for w in [
            rwr_weights(&[3.0, 3.0, 3.0], 10.0).unwrap(),
            rwr_weights(&[1.0, 2.0, 5.0], 0.0).unwrap(),
        ] {
            for v in &w {
                assert!((v - 1.0 / 3.0).abs() < 1e-12, "uniform expected, got {w:?}");
            }
        }
    }

    #[test]
    fn rwr_is_monotone_and_shift_invariant() {
        let mut rng = Rng::new(41);
        for _ in 0..50 {
            let y: Vec<f64> = (0..8).map(|_| 4.0 * rng.normal()).collect();
            let w = rwr_weights(&y, 2.5).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    if y[i] > y[j] {
                        assert!(w[i] > w[j], "monotonicity violated");
                    }
                }
            }
            let shifted: Vec<f64> = y.iter().map(|v| v + 17.25).collect();
            let ws = rwr_weights(&shifted, 2.5).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                assert!((a - b).abs() < 1e-12, "shift changed weights");
            }
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rwr_rejects_bad_input() {
        assert!(rwr_weights(&[], 1.0).is_err());
        assert!(rwr_weights(&[1.0, f64::NAN], 1.0).is_err());
        assert!(rwr_weights(&[1.0], -1.0).is_err());
    }

    #[test]
    fn effective_size_reference_points() {
        let uniform = vec![1.0 / 100.0; 100];
        assert!((effective_sample_size(&uniform).unwrap() - 100.0).abs() < 1e-12);

        let mut one_hot = vec![0.0; 7];
        one_hot[3] = 1.0;
        assert_eq!(effective_sample_size(&one_hot).unwrap(), 1.0);

        assert_eq!(effective_sample_size(&[0.5, 0.5, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn effective_size_requires_a_normalized_simplex_point() {
        assert!(effective_sample_size(&[0.5, 0.6]).is_err(), "sum > 1");
        assert!(effective_sample_size(&[1.5, -0.5]).is_err(), "negative");
        assert!(effective_sample_size(&[]).is_err(), "empty");
        assert!(effective_sample_size(&[f64::NAN, 1.0]).is_err(), "nan");
    }

    /// Model whose decoder ignores `z` and outputs the constant `bias`, so
    /// its marginal density is exactly `N(x; bias, 1)` and the Monte Carlo
    /// estimate has zero variance.
    fn constant_decoder_model(bias: f64) -> VaeModel {
        let mut rng = Rng::new(5);
        let arch = VaeArch {
            latent_dim: 2,
            encoder_hidden: vec![4],
            decoder_hidden: vec![],
            leaky_slope: 0.01,
            kind: DecoderKind::GaussianContinuous {
                dim: 1,
                stddev: 1.0,
            },
        };
        let mut model = VaeModel::init(&arch, &mut rng).unwrap();
        model.decoder.params.layers[0].w.map_inplace(|_| 0.0);
        model.decoder.params.layers[0].b[0] = bias;
        model
    }

    #[test]
    fn identical_models_reduce_to_the_indicator() {
        // Ratio is exactly 1 for every design, so weights are uniform over
        // the passing set. 10 distinct scores at the 80th percentile leave
        // exactly 2 above the interpolated threshold.
        let model = constant_decoder_model(0.0);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let x = Matrix::from_fn(10, 1, |r, _| r as f64 / 10.0);
        let mut state = CbasState::new(f64::NEG_INFINITY, 4);
        let mut rng = Rng::new(1);
        let w = cbas_weights(&y, &x, &model, &model, 80.0, &mut state, &mut rng).unwrap();
        let nonzero: Vec<usize> = (0..10).filter(|&i| w[i] > 0.0).collect();
        assert_eq!(nonzero, vec![8, 9], "top-2 by construction");
        assert_eq!(w[8], 0.5, "identical models give exactly equal weights");
        assert_eq!(w[9], 0.5);
    }

    #[test]
    fn density_ratio_hand_case() {
        // Constant decoders: baseline mean 0, current mean -1, stddev 1.
        // ratio(x) = exp(0.5 * ((x+1)^2 - x^2)) = exp(0.5 + x);
        // at x = ln 2 - 0.5 the ratio is 2, at x = -0.5 it is 1 → (2/3, 1/3).
        let baseline = constant_decoder_model(0.0);
        let current = constant_decoder_model(-1.0);
        let x = Matrix::from_vec(2, 1, vec![2.0_f64.ln() - 0.5, -0.5]).unwrap();
        let y = [1.0, 1.0];
        let mut state = CbasState::new(f64::NEG_INFINITY, 8);
        let mut rng = Rng::new(2);
        let w = cbas_weights(&y, &x, &current, &baseline, 50.0, &mut state, &mut rng).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12, "{w:?}");
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12, "{w:?}");
    }

    #[test]
    fn threshold_ratchets_and_the_floor_is_the_objective_threshold() {
        let model = constant_decoder_model(0.0);
        let x = Matrix::zeros(4, 1);
        let mut state = CbasState::new(0.5, 2);
        let mut rng = Rng::new(3);

        // Batch quantile above the floor: threshold rises to it.
        let w = cbas_weights(
            &[1.0, 2.0, 3.0, 4.0],
            &x,
            &model,
            &model,
            50.0,
            &mut state,
            &mut rng,
        )
        .unwrap();
        assert_eq!(state.threshold, 2.5);
        assert_eq!(w, vec![0.0, 0.0, 0.5, 0.5]);

        // A worse batch cannot lower it.
        cbas_weights(
            &[0.1, 0.2, 0.3, 0.4],
            &x,
            &model,
            &model,
            50.0,
            &mut state,
            &mut rng,
        )
        .unwrap();
        assert_eq!(state.threshold, 2.5, "threshold must never decrease");
    }

    #[test]
    fn empty_passing_set_falls_back_to_the_best_design() {
        let model = constant_decoder_model(0.0);
        let x = Matrix::zeros(3, 1);
        let mut state = CbasState::new(100.0, 2);
        let mut rng = Rng::new(4);
        let w = cbas_weights(&[1.0, 5.0, 3.0], &x, &model, &model, 90.0, &mut state, &mut rng)
            .unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0], "all mass on the best score");
    }
}
