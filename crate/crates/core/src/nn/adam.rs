//! Adam optimizer with bias-corrected moment estimates.

use super::MlpParams;
use crate::error::{Error, Result};

/// Adam hyper-parameters. The defaults are the ones used by every experiment
/// in this crate; configs may override the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moment accumulators, shaped like the parameters
/// they optimize, plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: MlpParams,
    v: MlpParams,
    t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(shape_like: &MlpParams, hyper: AdamHyper) -> Self {
        AdamState {
            m: shape_like.zeros_like(),
            v: shape_like.zeros_like(),
            t: 0,
            hyper,
        }
    }

    /// Steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// One update: `p -= lr * mhat / (sqrt(vhat) + eps)` per coordinate, with
    /// `mhat`/`vhat` the bias-corrected moments. Errors on a non-finite
    /// gradient, naming the parameter block, before touching any state.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if params.layers.len() != grads.layers.len() {
            return Err(Error::shape(
                "adam step",
                format!("{} layers", params.layers.len()),
                format!("{} layers", grads.layers.len()),
            ));
        }
        for (i, layer) in grads.layers.iter().enumerate() {
            layer
                .w
                .check_finite(&format!("gradient for layer {i} weights"))?;
            if layer.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient for layer {i} bias"),
                });
            }
        }

        self.t += 1;
        let AdamHyper {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        };

        for l in 0..params.layers.len() {
            let g_layer = &grads.layers[l];
            let p_layer = &mut params.layers[l];
            let m_layer = &mut self.m.layers[l];
            let v_layer = &mut self.v.layers[l];
            for (((p, &g), m), v) in p_layer
                .w
                .data_mut()
                .iter_mut()
                .zip(g_layer.w.data())
                .zip(m_layer.w.data_mut())
                .zip(v_layer.w.data_mut())
            {
                update(p, g, m, v);
            }
            for (((p, &g), m), v) in p_layer
                .b
                .iter_mut()
                .zip(&g_layer.b)
                .zip(m_layer.b.iter_mut())
                .zip(v_layer.b.iter_mut())
            {
                update(p, g, m, v);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::DenseLayer;

    fn one_param(value: f64) -> MlpParams {
        MlpParams {
            layers: vec![DenseLayer {
                w: Matrix::from_vec(1, 1, vec![value]).unwrap(),
                b: vec![],
            }],
        }
    }

    #[test]
    fn two_steps_match_hand_computation() {
        // Constant gradient g = 2, default hyper-parameters; the expected
        // values below recompute the update rule with scalar arithmetic.
        let (lr, b1, b2, eps) = (0.001, 0.9, 0.999, 1e-8);
        let g = 2.0;
        let mut p_expected = 0.3;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2u32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1_pow(b1, t));
            let vhat = v / (1.0 - b1_pow(b2, t));
            p_expected -= lr * mhat / (vhat.sqrt() + eps);
        }

        let mut params = one_param(0.3);
        let grads = one_param(g);
        let mut state = AdamState::new(&params, AdamHyper::default());
        state.step(&mut params, &grads).unwrap();
        state.step(&mut params, &grads).unwrap();
        let p = params.layers[0].w.at(0, 0);
        assert!((p - p_expected).abs() < 1e-15, "{p} vs {p_expected}");
        assert_eq!(state.t(), 2);
    }

    fn b1_pow(b: f64, t: u32) -> f64 {
        b.powi(t as i32)
    }

    #[test]
    fn step_magnitude_bounded_by_lr() {
        // With a constant gradient the bias-corrected ratio is g/|g|, so each
        // coordinate moves by at most ~lr.
        let mut params = one_param(1.0);
        let grads = one_param(-3.7);
        let mut state = AdamState::new(&params, AdamHyper::default());
        let mut prev = params.layers[0].w.at(0, 0);
        for _ in 0..100 {
            state.step(&mut params, &grads).unwrap();
            let cur = params.layers[0].w.at(0, 0);
            assert!((cur - prev).abs() <= 0.001 * 1.01, "step too large");
            prev = cur;
        }
        // gradient is negative, so the parameter must have increased
        assert!(prev > 1.0);
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_block_name() {
        let mut params = one_param(0.0);
        let grads = one_param(f64::NAN);
        let mut state = AdamState::new(&params, AdamHyper::default());
        let err = state.step(&mut params, &grads).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 0 weights"), "unhelpful error: {msg}");
        // state must be untouched after the failed step
        assert_eq!(state.t(), 0);
        assert_eq!(params.layers[0].w.at(0, 0), 0.0);
    }
}
