//! Central finite-difference gradient verification.
//!
//! Every analytic gradient in the crate can be checked against
//! `(loss(p + eps) - loss(p - eps)) / (2 eps)` taken one parameter at a time.
//! The comparison is the symmetric relative error
//! `|analytic - fd| / max(|analytic|, |fd|, 1e-8)`, so tiny gradients don't
//! blow up the ratio and large ones aren't held to an absolute scale.

use super::MlpParams;
use crate::error::{Error, Result};

/// Flat scalar-indexed view over a parameter container, so the checker can
/// perturb one coordinate at a time without knowing the block structure.
pub trait FlatParams {
    fn flat_len(&self) -> usize;
    fn get_flat(&self, i: usize) -> f64;
    fn set_flat(&mut self, i: usize, v: f64);
    /// Human-readable name of the block/coordinate, for error reports.
    fn describe_flat(&self, i: usize) -> String;
}

impl FlatParams for MlpParams {
    fn flat_len(&self) -> usize {
        self.param_count()
    }

    fn get_flat(&self, i: usize) -> f64 {
        let (l, in_w, j) = self.locate(i);
        if in_w {
            self.layers[l].w.data()[j]
        } else {
            self.layers[l].b[j]
        }
    }

    fn set_flat(&mut self, i: usize, v: f64) {
        let (l, in_w, j) = self.locate(i);
        if in_w {
            self.layers[l].w.data_mut()[j] = v;
        } else {
            self.layers[l].b[j] = v;
        }
    }

    fn describe_flat(&self, i: usize) -> String {
        let (l, in_w, j) = self.locate(i);
        if in_w {
            format!("layer {l} weights[{j}]")
        } else {
            format!("layer {l} bias[{j}]")
        }
    }
}

impl MlpParams {
    /// Maps a flat index to (layer, weights-or-bias, offset).
    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let nw = layer.w.data().len();
            if i < nw {
                return (l, true, i);
            }
            i -= nw;
            if i < layer.b.len() {
                return (l, false, i);
            }
            i -= layer.b.len();
        }
        panic!("flat index out of range");
    }
}

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst symmetric relative error over all parameters.
    pub max_rel_err: f64,
    /// Which coordinate produced it.
    pub worst_param: String,
    /// Number of scalar parameters checked.
    pub checked: usize,
}

/// Compares `analytic` (a gradient container shaped like `params`) against
/// central finite differences of `loss` at `params`. The `loss` closure must
/// be deterministic — freeze any sampling noise before calling.
pub fn finite_diff_gradcheck<P, F>(
    params: &P,
    analytic: &P,
    mut loss: F,
    eps: f64,
) -> Result<GradCheckReport>
where
    P: FlatParams + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    if params.flat_len() != analytic.flat_len() {
        return Err(Error::shape(
            "gradcheck",
            format!("{} parameters", params.flat_len()),
            format!("{} gradient entries", analytic.flat_len()),
        ));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gradcheck step must be positive, got {eps}"
        )));
    }

    let mut probe = params.clone();
    let mut max_rel_err = 0.0;
    let mut worst_param = String::new();
    for i in 0..params.flat_len() {
        let orig = params.get_flat(i);
        probe.set_flat(i, orig + eps);
        let hi = loss(&probe)?;
        probe.set_flat(i, orig - eps);
        let lo = loss(&probe)?;
        probe.set_flat(i, orig);
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFinite {
                context: format!("gradcheck loss near {}", params.describe_flat(i)),
            });
        }
        let fd = (hi - lo) / (2.0 * eps);
        let a = analytic.get_flat(i);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_param = params.describe_flat(i);
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst_param,
        checked: params.flat_len(),
    })
}
