//! Post-hoc diagnostics of the learned latent geometry.
//!
//! After a guided fit, posterior means should organize on spherical shells:
//! `||mu||^2 / 2 ≈ C - slope * y` with the slope near the guidance scale
//! `tau`, and latent radius should order designs by property. This module
//! measures both — a least-squares fit of radius against property plus the
//! rank correlation — and provides a 2-component PCA projection of the
//! posterior means for plotting.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats;
use crate::vae::VaeModel;

/// How tightly power iteration must converge before a component is accepted.
const PCA_TOL: f64 = 1e-9;
const PCA_MAX_ITERS: usize = 10_000;

/// Latent geometry summary for one fitted model over one labelled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStructureReport {
    /// `[n, 2]` PCA scores of the posterior means (second column zero when
    /// the latent space is one-dimensional).
    pub projection: Matrix,
    /// Rank correlation between `-||mu||^2` and the property; near +1 when
    /// higher-property designs sit closer to the latent origin.
    pub spearman: f64,
    /// Fitted `d(||mu||^2 / 2) / d(-y)`; near `tau` after a guided fit.
    pub slope: f64,
    /// Fitted radius at `y = 0`.
    pub intercept: f64,
    /// Root-mean-square residual of the radius fit.
    pub residual_rms: f64,
    /// Set when the correlation is undefined (constant radii or constant
    /// properties); `spearman` and `slope` are zero then.
    pub degenerate: bool,
    /// Per-sample `-||mu||^2`, the model's latent preference score; same row
    /// order as `projection`.
    pub neg_sq_norms: Vec<f64>,
}

/// Top-`k` principal components of the rows of `data` by power iteration with
/// deflation. Returns the components as rows of a `[k, d]` matrix (unit
/// length, sign fixed so each component's largest-magnitude coordinate is
/// positive) and their eigenvalues in descending order.
pub fn principal_components(data: &Matrix, k: usize) -> Result<(Matrix, Vec<f64>)> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "principal components need at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "cannot extract {k} components from {d} columns"
        )));
    }
    data.check_finite("principal components input")?;

    // Covariance of the (small) column space; d <= a few dozen here.
    let means = column_means(data);
    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let row = data.row(r);
        for i in 0..d {
            let di = row[i] - means[i];
            for j in i..d {
                *cov.at_mut(i, j) += di * (row[j] - means[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.at(i, j) / denom;
            *cov.at_mut(i, j) = v;
            *cov.at_mut(j, i) = v;
        }
    }

    let mut components = Matrix::zeros(k, d);
    let mut eigenvalues = Vec::with_capacity(k);
    for c in 0..k {
        // Deterministic start: the axis with the largest remaining variance.
        let start = (0..d)
            .max_by(|&a, &b| cov.at(a, a).partial_cmp(&cov.at(b, b)).unwrap())
            .unwrap();
        let mut v = vec![0.0; d];
        v[start] = 1.0;
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITERS {
            let w = mat_vec(&cov, &v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                // Rank exhausted: any direction orthogonal to the previous
                // components is an eigenvector with eigenvalue zero.
                v = orthogonal_basis_vector(&components, c, d);
                lambda = 0.0;
                break;
            }
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let delta: f64 = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            v = next;
            if delta <= PCA_TOL {
                break;
            }
        }
        fix_sign(&mut v);
        // Deflate: remove the found direction from the covariance.
        for i in 0..d {
            for j in 0..d {
                *cov.at_mut(i, j) -= lambda * v[i] * v[j];
            }
        }
        components.row_mut(c).copy_from_slice(&v);
        eigenvalues.push(lambda);
    }
    Ok((components, eigenvalues))
}

/// Centered scores of `data` on the given component rows: `[n, k]`.
pub fn project_onto(data: &Matrix, components: &Matrix) -> Result<Matrix> {
    if data.cols() != components.cols() {
        return Err(Error::shape(
            "projection",
            components.cols(),
            data.cols(),
        ));
    }
    let means = column_means(data);
    Ok(Matrix::from_fn(data.rows(), components.rows(), |r, c| {
        data.row(r)
            .iter()
            .zip(components.row(c))
            .enumerate()
            .map(|(i, (&x, &comp))| (x - means[i]) * comp)
            .sum()
    }))
}

/// Encode `x`, then summarize the latent geometry against properties `y`.
pub fn latent_structure_report(
    model: &VaeModel,
    x: &Matrix,
    y: &[f64],
) -> Result<LatentStructureReport> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "latent report needs at least 2 samples, got {n}"
        )));
    }
    if y.len() != n {
        return Err(Error::shape("latent report properties", n, y.len()));
    }
    let lat = model.encode(x)?;
    let mu = &lat.mu;

    let radii: Vec<f64> = (0..n)
        .map(|i| 0.5 * mu.row(i).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let neg_sq_norm: Vec<f64> = radii.iter().map(|r| -2.0 * r).collect();

    // Radius-vs-property line: radius = intercept - slope * y.
    let my = stats::mean(y);
    let mr = stats::mean(&radii);
    let mut cov_yr = 0.0;
    let mut var_y = 0.0;
    for i in 0..n {
        cov_yr += (y[i] - my) * (radii[i] - mr);
        var_y += (y[i] - my) * (y[i] - my);
    }
    let (spearman, slope, intercept, degenerate) = if var_y == 0.0 {
        (0.0, 0.0, mr, true)
    } else {
        let b = cov_yr / var_y;
        match stats::spearman(&neg_sq_norm, y) {
            Ok(rho) => (rho, -b, mr - b * my, false),
            Err(_) => (0.0, 0.0, mr, true),
        }
    };
    let residual_rms = {
        let mut ss = 0.0;
        for i in 0..n {
            let fitted = intercept - slope * y[i];
            ss += (radii[i] - fitted) * (radii[i] - fitted);
        }
        (ss / n as f64).sqrt()
    };

    let k = model.latent_dim.min(2);
    let (components, _) = principal_components(mu, k)?;
    let scores = project_onto(mu, &components)?;
    let projection = if k == 2 {
        scores
    } else {
        Matrix::from_fn(n, 2, |r, c| if c == 0 { scores.at(r, 0) } else { 0.0 })
    };

    Ok(LatentStructureReport {
        projection,
        spearman,
        slope,
        intercept,
        residual_rms,
        degenerate,
        neg_sq_norms: neg_sq_norm,
    })
}

fn column_means(data: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; data.cols()];
    for r in 0..data.rows() {
        for (m, &v) in means.iter_mut().zip(data.row(r)) {
            *m += v;
        }
    }
    let inv = 1.0 / data.rows() as f64;
    means.iter_mut().for_each(|m| *m *= inv);
    means
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect()
}

/// Flip `v` so its largest-magnitude coordinate is positive (deterministic
/// orientation; eigenvectors are defined up to sign).
fn fix_sign(v: &mut [f64]) {
    let lead = v
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap_or(0.0);
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// First standard basis vector orthogonalized against `found` rows `0..c`.
fn orthogonal_basis_vector(found: &Matrix, c: usize, d: usize) -> Vec<f64> {
    for axis in 0..d {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        for prev in 0..c {
            let dot: f64 = v.iter().zip(found.row(prev)).map(|(&a, &b)| a * b).sum();
            for (x, &p) in v.iter_mut().zip(found.row(prev)) {
                *x -= dot * p;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
    unreachable!("fewer than d components requested from a d-dimensional space")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mlp, MlpSpec};
    use crate::rng::Rng;
    use crate::vae::DecoderKind;

    #[test]
    fn pca_matches_axis_aligned_hand_case() {
        // Columns have sample variances 8/3, 2/3, 0.
        let data = Matrix::from_vec(
            4,
            3,
            vec![
                2.0, 0.0, 0.0, //
                -2.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                0.0, -1.0, 0.0,
            ],
        )
        .unwrap();
        let (comp, evals) = principal_components(&data, 2).unwrap();
        assert!((evals[0] - 8.0 / 3.0).abs() < 1e-9, "evals {evals:?}");
        assert!((evals[1] - 2.0 / 3.0).abs() < 1e-9, "evals {evals:?}");
        assert!((comp.at(0, 0) - 1.0).abs() < 1e-7, "first axis");
        assert!((comp.at(1, 1) - 1.0).abs() < 1e-7, "second axis");
        // orthonormal rows
        let dot: f64 = comp.row(0).iter().zip(comp.row(1)).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-7);
    }

    #[test]
    fn pca_recovers_a_rotated_direction_deterministically() {
        let u = [0.6, 0.8];
        let mut rng = Rng::new(17);
        let mut data = Matrix::zeros(200, 2);
        for r in 0..200 {
            let t = 3.0 * rng.normal();
            let s = 0.05 * rng.normal();
            *data.at_mut(r, 0) = t * u[0] - s * u[1];
            *data.at_mut(r, 1) = t * u[1] + s * u[0];
        }
        let (comp, evals) = principal_components(&data, 2).unwrap();
        let align: f64 = comp.row(0).iter().zip(&u).map(|(&a, &b)| a * b).sum();
        assert!(align.abs() > 0.9999, "alignment {align}");
        assert!(evals[0] > evals[1], "descending eigenvalues");

        let again = principal_components(&data, 2).unwrap();
        assert_eq!(comp, again.0, "deterministic output");
        assert_eq!(evals, again.1);
    }

    #[test]
    fn projection_scores_are_centered_variance_ordered() {
        let mut rng = Rng::new(23);
        let data = Matrix::from_fn(50, 3, |_, _| rng.normal() + 1.5);
        let (comp, evals) = principal_components(&data, 2).unwrap();
        let scores = project_onto(&data, &comp).unwrap();
        for (c, &eval) in evals.iter().enumerate() {
            let col: Vec<f64> = (0..50).map(|r| scores.at(r, c)).collect();
            assert!(stats::mean(&col).abs() < 1e-10, "column {c} centered");
            let var = col.iter().map(|v| v * v).sum::<f64>() / 49.0;
            assert!((var - eval).abs() < 1e-8, "score variance ~ eigenvalue");
        }
    }

    #[test]
    fn pca_survives_rank_deficient_input() {
        // All rows identical: zero covariance, both eigenvalues zero, but the
        // call must still return an orthonormal pair.
        let data = Matrix::from_fn(5, 3, |_, c| c as f64);
        let (comp, evals) = principal_components(&data, 2).unwrap();
        assert_eq!(evals, vec![0.0, 0.0]);
        let n0: f64 = comp.row(0).iter().map(|v| v * v).sum();
        let n1: f64 = comp.row(1).iter().map(|v| v * v).sum();
        assert!((n0 - 1.0).abs() < 1e-12 && (n1 - 1.0).abs() < 1e-12);
        let dot: f64 = comp.row(0).iter().zip(comp.row(1)).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
    }

    /// Encoder that copies the input into the posterior mean and sets
    /// log-variance to zero, so latent geometry is controlled exactly.
    fn identity_encoder_model() -> VaeModel {
        let spec = MlpSpec::new(vec![2, 4], 0.01).unwrap();
        let mut enc = Mlp::init(spec, &mut Rng::new(1));
        for layer in &mut enc.params.layers {
            layer.w.map_inplace(|_| 0.0);
            layer.b.iter_mut().for_each(|b| *b = 0.0);
        }
        *enc.params.layers[0].w.at_mut(0, 0) = 1.0;
        *enc.params.layers[0].w.at_mut(1, 1) = 1.0;
        let dec = Mlp::init(MlpSpec::new(vec![2, 2], 0.01).unwrap(), &mut Rng::new(2));
        VaeModel {
            encoder: enc,
            decoder: dec,
            latent_dim: 2,
            kind: DecoderKind::GaussianContinuous {
                dim: 2,
                stddev: 1.0,
            },
        }
    }

    #[test]
    fn report_reads_off_an_exact_radius_contour() {
        // Place inputs so that ||mu||^2 / 2 = 4 - 3 y exactly.
        let model = identity_encoder_model();
        let y: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let x = Matrix::from_fn(12, 2, |r, c| {
            if c == 0 {
                (2.0 * (4.0 - 3.0 * y[r])).sqrt()
            } else {
                0.0
            }
        });
        let rep = latent_structure_report(&model, &x, &y).unwrap();
        assert!(!rep.degenerate);
        assert!((rep.spearman - 1.0).abs() < 1e-12, "spearman {}", rep.spearman);
        assert!((rep.slope - 3.0).abs() < 1e-9, "slope {}", rep.slope);
        assert!((rep.intercept - 4.0).abs() < 1e-9, "intercept {}", rep.intercept);
        assert!(rep.residual_rms < 1e-9, "rms {}", rep.residual_rms);
        assert_eq!(
            (rep.projection.rows(), rep.projection.cols()),
            (12, 2),
            "plot-ready projection"
        );
    }

    #[test]
    fn report_flags_collapsed_latents_as_degenerate() {
        let model = identity_encoder_model();
        let x = Matrix::from_fn(6, 2, |_, _| 1.0);
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let rep = latent_structure_report(&model, &x, &y).unwrap();
        assert!(rep.degenerate);
        assert_eq!(rep.spearman, 0.0);
        assert_eq!(rep.slope, 0.0);

        // Constant property is equally undefined.
        let x = Matrix::from_fn(6, 2, |r, _| r as f64);
        let rep = latent_structure_report(&model, &x, &[2.0; 6]).unwrap();
        assert!(rep.degenerate);
    }

    #[test]
    fn report_validates_shapes() {
        let model = identity_encoder_model();
        let x = Matrix::from_fn(1, 2, |_, _| 1.0);
        assert!(latent_structure_report(&model, &x, &[1.0]).is_err(), "n = 1");
        let x = Matrix::from_fn(3, 2, |_, _| 1.0);
        assert!(
            latent_structure_report(&model, &x, &[1.0, 2.0]).is_err(),
            "length mismatch"
        );
    }
}
