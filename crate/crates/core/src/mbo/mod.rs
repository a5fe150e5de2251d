//! The iterative design-optimization loop.
//!
//! Starting from an offline dataset, each run fits the search model to the
//! data, then repeats: draw a batch of candidate designs from the model,
//! score them with the oracle, convert scores to sample weights under the
//! configured scheme, and refit the model by weighted maximum likelihood.
//! Because every refit sees only model-generated samples, the weighting
//! scheme is what steers the search — and the property-guided scheme instead
//! keeps the weights uniform and relies on the latent guidance term to pull
//! high-property designs toward the origin of latent space where the prior
//! puts its mass.
//!
//! Conventions fixed here:
//! - Continuous designs are z-scored with statistics frozen from the starting
//!   dataset ([`InputScaler`]); the model lives entirely in scaled space and
//!   samples are mapped back before oracle scoring. Sequence designs pass
//!   through one-hot unchanged.
//! - Property values are min-max rescaled with the starting dataset's range
//!   (not clipped, so improved designs exceed 1). Weighting exponents and the
//!   guidance scale `tau` therefore mean the same thing on every landscape.
//!   Reported metrics are always in raw oracle units.
//! - Batch metrics accumulate over the union of all generated samples; the
//!   starting dataset is reported separately as the base.

pub mod metrics;
pub mod weights;

pub use metrics::{aggregate_runs, AggregateIteration, AggregateMetrics, IterationMetrics, RunMetrics};
pub use weights::{cbas_weights, effective_sample_size, rwr_weights, CbasState};

use crate::data::{Dataset, DesignBatch};
use crate::error::{Error, Result};
use crate::latent::latent_structure_report;
use crate::matrix::Matrix;
use crate::nn::AdamHyper;
use crate::rng::Rng;
use crate::stats;
use crate::vae::{train_epoch, PgvaeHyper, VaeArch, VaeModel, VaeOptimizer};

/// How each iteration's oracle scores become refit weights.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Uniform weights; the latent guidance term does the steering.
    Pgvae,
    /// Exponentiated reward weights from the second fit onward.
    Rwr { gamma: f64 },
    /// Reward weights applied to the initial dataset fit as well.
    FwRwr { gamma: f64 },
    /// Density-ratio weights gated by a rising score threshold.
    Cbas { quantile: f64 },
}

impl WeightScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightScheme::Pgvae => Ok(()),
            WeightScheme::Rwr { gamma } | WeightScheme::FwRwr { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "reward weighting needs gamma > 0, got {gamma}"
                    )));
                }
                Ok(())
            }
            WeightScheme::Cbas { quantile } => {
                if !(quantile.is_finite() && 0.0 < quantile && quantile < 100.0) {
                    return Err(Error::InvalidArgument(format!(
                        "adaptive-sampling quantile must lie in (0, 100), got {quantile}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Short lowercase tag for logs and CSV rows.
    pub fn label(&self) -> &'static str {
        match self {
            WeightScheme::Pgvae => "pgvae",
            WeightScheme::Rwr { .. } => "rwr",
            WeightScheme::FwRwr { .. } => "fw-rwr",
            WeightScheme::Cbas { .. } => "cbas",
        }
    }
}

/// Column-wise affine map between raw continuous designs and the model's
/// input space. Sequence data uses [`InputScaler::Identity`].
#[derive(Debug, Clone, PartialEq)]
pub enum InputScaler {
    Identity,
    Standardize { means: Vec<f64>, stds: Vec<f64> },
}

impl InputScaler {
    /// Z-score parameters per column; a constant column keeps scale 1 so it
    /// round-trips exactly.
    pub fn fit(x: &Matrix) -> Self {
        let cols = x.cols();
        let mut means = Vec::with_capacity(cols);
        let mut stds = Vec::with_capacity(cols);
        for c in 0..cols {
            let col: Vec<f64> = (0..x.rows()).map(|r| x.at(r, c)).collect();
            means.push(stats::mean(&col));
            let s = stats::sample_std(&col);
            stds.push(if s > 1e-12 { s } else { 1.0 });
        }
        InputScaler::Standardize { means, stds }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.apply(x, |v, m, s| (v - m) / s)
    }

    pub fn inverse(&self, x: &Matrix) -> Result<Matrix> {
        self.apply(x, |v, m, s| v * s + m)
    }

    fn apply(&self, x: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Result<Matrix> {
        match self {
            InputScaler::Identity => Ok(x.clone()),
            InputScaler::Standardize { means, stds } => {
                if x.cols() != means.len() {
                    return Err(Error::shape("input scaling", means.len(), x.cols()));
                }
                Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| {
                    f(x.at(r, c), means[c], stds[c])
                }))
            }
        }
    }
}

/// Knobs of one optimization run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MboConfig {
    /// Designs sampled per iteration (K).
    pub samples_per_iter: usize,
    /// Optimization iterations after the initial fit (T).
    pub iterations: usize,
    /// Epochs of the initial dataset fit.
    pub initial_epochs: usize,
    /// Epochs of each per-iteration refit.
    pub iter_epochs: usize,
    pub batch_size: usize,
    /// Keep model and optimizer state across refits (else refit from a fresh
    /// initialization every iteration).
    pub warm_start: bool,
    pub scheme: WeightScheme,
    pub hyper: PgvaeHyper,
    /// Objective threshold `y_m` in raw oracle units; the floor of the
    /// adaptive-sampling threshold.
    pub threshold: f64,
    /// Add decoder observation noise to sampled continuous designs.
    pub sample_noise: bool,
    /// Latent Monte Carlo samples per density estimate.
    pub cbas_mc_samples: usize,
    pub adam: AdamHyper,
}

impl MboConfig {
    /// Defaults for a scheme: the guided scheme trains with its latent term,
    /// the baselines train a plain weighted VAE.
    pub fn for_scheme(scheme: WeightScheme) -> Self {
        let lambda_rel = match scheme {
            WeightScheme::Pgvae => 1.0,
            _ => 0.0,
        };
        MboConfig {
            samples_per_iter: 200,
            iterations: 20,
            // A long initial fit with small minibatches keeps the ordering
            // term strong relative to the prior, which is what lets a sparse
            // high-scoring cluster take hold in the latent map before the
            // sampling loop starts. Search quality is gated by that fit.
            initial_epochs: 1000,
            iter_epochs: 10,
            batch_size: 4,
            warm_start: true,
            scheme,
            hyper: PgvaeHyper {
                tau: 5.0,
                lambda_rel,
            },
            threshold: 0.0,
            sample_noise: false,
            cbas_mc_samples: 20,
            adam: AdamHyper::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_iter < 2 {
            return Err(Error::InvalidArgument(format!(
                "samples_per_iter must be >= 2, got {}",
                self.samples_per_iter
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if self.initial_epochs < 1 || self.iter_epochs < 1 {
            return Err(Error::InvalidArgument(
                "initial_epochs and iter_epochs must be >= 1".into(),
            ));
        }
        if self.cbas_mc_samples < 1 {
            return Err(Error::InvalidArgument(
                "cbas_mc_samples must be >= 1".into(),
            ));
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidArgument("threshold must be finite".into()));
        }
        self.scheme.validate()?;
        self.hyper.validate()?;
        let guided = self.hyper.lambda_rel > 0.0;
        match (self.scheme, guided) {
            (WeightScheme::Pgvae, false) => Err(Error::InvalidArgument(
                "the guided scheme requires lambda_rel > 0".into(),
            )),
            (WeightScheme::Pgvae, true) => Ok(()),
            (_, true) => Err(Error::InvalidArgument(
                "baseline schemes require lambda_rel = 0 (guidance off)".into(),
            )),
            (_, false) => Ok(()),
        }
    }
}

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    /// The final search model (scaled input space).
    pub model: VaeModel,
    /// Raw oracle scores of every generated batch, by iteration.
    pub iteration_scores: Vec<Vec<f64>>,
}

/// One full optimization run. Deterministic given `rng`'s seed; every source
/// of randomness (initialization, shuffling, reparameterization, sampling,
/// density estimates) draws from it in a fixed order.
pub fn run_mbo(
    arch: &VaeArch,
    oracle: &crate::oracle::Oracle,
    trainset: &Dataset,
    cfg: &MboConfig,
    rng: &mut Rng,
) -> Result<RunOutcome> {
    cfg.validate()?;

    // Frozen input map and property normalizer.
    let x_raw = trainset.designs.to_model_input()?;
    let scaler = match &trainset.designs {
        DesignBatch::Continuous(_) => InputScaler::fit(&x_raw),
        DesignBatch::Sequences { .. } => InputScaler::Identity,
    };
    let x_train = scaler.transform(&x_raw)?;
    let (y_lo, y_hi) = trainset
        .properties
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if y_hi <= y_lo {
        return Err(Error::InvalidArgument(
            "training properties are constant; property scaling is undefined".into(),
        ));
    }
    let norm = |y: f64| (y - y_lo) / (y_hi - y_lo);
    let yn_train: Vec<f64> = trainset.properties.iter().map(|&y| norm(y)).collect();

    let mut model = VaeModel::init(arch, rng)?;
    if model.input_dim() != x_train.cols() {
        return Err(Error::shape(
            "search-model input",
            format!("{} columns", model.input_dim()),
            format!("{} columns", x_train.cols()),
        ));
    }
    let mut opt = VaeOptimizer::new(&model, cfg.adam);

    // Initial fit: uniform weights, except the first-weighted reward scheme.
    let n_train = x_train.rows();
    let w0 = match cfg.scheme {
        WeightScheme::FwRwr { gamma } => rwr_weights(&yn_train, gamma)?,
        _ => vec![1.0 / n_train as f64; n_train],
    };
    for _ in 0..cfg.initial_epochs {
        train_epoch(
            &mut model, &x_train, &yn_train, &w0, &cfg.hyper, cfg.batch_size, &mut opt, rng,
        )?;
    }

    // The adaptive-sampling prior is the model right after the initial fit.
    let baseline = match cfg.scheme {
        WeightScheme::Cbas { .. } => Some(model.clone()),
        _ => None,
    };
    let mut cbas_state = CbasState::new(cfg.threshold, cfg.cbas_mc_samples);

    let k = cfg.samples_per_iter;
    let mut union_scores: Vec<f64> = Vec::with_capacity(k * cfg.iterations);
    let mut iterations = Vec::with_capacity(cfg.iterations);
    let mut iteration_scores = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let (designs, _z) = model.sample_designs(k, cfg.sample_noise, rng)?;
        let x_fit = designs.to_model_input()?;
        let oracle_designs = match &designs {
            DesignBatch::Continuous(m) => DesignBatch::Continuous(scaler.inverse(m)?),
            s @ DesignBatch::Sequences { .. } => s.clone(),
        };
        let y_raw = oracle.score_batch(&oracle_designs)?;
        if y_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("oracle scores at iteration {t}"),
            });
        }

        let yn: Vec<f64> = y_raw.iter().map(|&y| norm(y)).collect();
        let (w, n_eff) = match cfg.scheme {
            // Uniform by definition, so the effective size is exactly K.
            WeightScheme::Pgvae => (vec![1.0 / k as f64; k], k as f64),
            WeightScheme::Rwr { gamma } | WeightScheme::FwRwr { gamma } => {
                let w = rwr_weights(&yn, gamma)
                    .map_err(|e| degenerate(t, e))?;
                let n_eff = effective_sample_size(&w).map_err(|e| degenerate(t, e))?;
                (w, n_eff)
            }
            WeightScheme::Cbas { quantile } => {
                let w = cbas_weights(
                    &y_raw,
                    &x_fit,
                    &model,
                    baseline.as_ref().expect("snapshot exists for this scheme"),
                    quantile,
                    &mut cbas_state,
                    rng,
                )
                .map_err(|e| degenerate(t, e))?;
                let n_eff = effective_sample_size(&w).map_err(|e| degenerate(t, e))?;
                (w, n_eff)
            }
        };

        union_scores.extend_from_slice(&y_raw);
        iterations.push(IterationMetrics {
            max: stats::percentile(&y_raw, 100.0)?,
            p75: stats::percentile(&y_raw, 75.0)?,
            p95: stats::percentile(&y_raw, 95.0)?,
            cumulative_max: stats::percentile(&union_scores, 100.0)?,
            cumulative_p75: stats::percentile(&union_scores, 75.0)?,
            cumulative_p95: stats::percentile(&union_scores, 95.0)?,
            n_eff,
        });
        iteration_scores.push(y_raw);

        if !cfg.warm_start {
            model = VaeModel::init(arch, rng)?;
            opt = VaeOptimizer::new(&model, cfg.adam);
        }
        for _ in 0..cfg.iter_epochs {
            train_epoch(
                &mut model, &x_fit, &yn, &w, &cfg.hyper, cfg.batch_size, &mut opt, rng,
            )?;
        }
    }

    let latent = latent_structure_report(&model, &x_train, &yn_train)?;
    let metrics = RunMetrics {
        base_max: stats::percentile(&trainset.properties, 100.0)?,
        base_p75: stats::percentile(&trainset.properties, 75.0)?,
        base_p95: stats::percentile(&trainset.properties, 95.0)?,
        iterations,
        latent,
    };
    Ok(RunOutcome {
        metrics,
        model,
        iteration_scores,
    })
}

fn degenerate(iteration: usize, source: Error) -> Error {
    Error::DegenerateWeights {
        iteration,
        message: source.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{GmmOracle, LookupOracle, Oracle};

    fn tiny_arch(input: usize) -> VaeArch {
        VaeArch {
            latent_dim: 2,
            encoder_hidden: vec![12],
            decoder_hidden: vec![12],
            leaky_slope: 0.01,
            kind: crate::vae::DecoderKind::GaussianContinuous {
                dim: input,
                stddev: 1.0,
            },
        }
    }

    fn tiny_gmm_setup() -> (Oracle, Dataset) {
        let oracle = GmmOracle::default();
        let mut rng = Rng::new(100);
        let designs = Matrix::from_fn(16, 1, |_, _| 0.4 * rng.normal());
        let y: Vec<f64> = (0..16).map(|r| oracle.eval(designs.at(r, 0))).collect();
        let ds = Dataset::from_continuous("toy", designs, y).unwrap();
        (Oracle::Gmm(oracle), ds)
    }

    fn fast_cfg(scheme: WeightScheme) -> MboConfig {
        let mut cfg = MboConfig::for_scheme(scheme);
        cfg.samples_per_iter = 8;
        cfg.iterations = 2;
        cfg.initial_epochs = 2;
        cfg.iter_epochs = 1;
        cfg.batch_size = 8;
        cfg
    }

    #[test]
    fn scaler_round_trips_and_standardizes() {
        let mut rng = Rng::new(55);
        let x = Matrix::from_fn(40, 3, |_, c| 5.0 * rng.normal() + c as f64 * 10.0);
        let scaler = InputScaler::fit(&x);
        let scaled = scaler.transform(&x).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..40).map(|r| scaled.at(r, c)).collect();
            assert!(stats::mean(&col).abs() < 1e-12, "column {c} centered");
            assert!((stats::sample_std(&col) - 1.0).abs() < 1e-12, "column {c} unit scale");
        }
        let back = scaler.inverse(&scaled).unwrap();
        for r in 0..40 {
            for c in 0..3 {
                assert!((back.at(r, c) - x.at(r, c)).abs() < 1e-9, "round trip");
            }
        }

        // A constant column must survive the round trip too.
        let x = Matrix::from_fn(5, 1, |_, _| 3.25);
        let scaler = InputScaler::fit(&x);
        let back = scaler.inverse(&scaler.transform(&x).unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn single_iteration_run_has_consistent_metrics() {
        let (oracle, ds) = tiny_gmm_setup();
        let mut cfg = fast_cfg(WeightScheme::Pgvae);
        cfg.iterations = 1;
        let out = run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(1)).unwrap();
        assert_eq!(out.metrics.iterations.len(), 1);
        assert_eq!(out.iteration_scores.len(), 1);
        assert_eq!(out.iteration_scores[0].len(), 8);
        let it = &out.metrics.iterations[0];
        // One batch: union statistics coincide with the batch statistics.
        assert_eq!(it.max, it.cumulative_max);
        assert_eq!(it.p75, it.cumulative_p75);
        assert_eq!(it.p95, it.cumulative_p95);
        assert!(it.p75 <= it.p95 && it.p95 <= it.max);
    }

    #[test]
    fn runs_are_deterministic_for_a_fixed_seed() {
        let (oracle, ds) = tiny_gmm_setup();
        for scheme in [
            WeightScheme::Pgvae,
            WeightScheme::Rwr { gamma: 10.0 },
            WeightScheme::FwRwr { gamma: 10.0 },
            WeightScheme::Cbas { quantile: 75.0 },
        ] {
            let cfg = fast_cfg(scheme);
            let a = run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(9)).unwrap();
            let b = run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(9)).unwrap();
            assert_eq!(a.metrics, b.metrics, "scheme {}", scheme.label());
            assert_eq!(a.iteration_scores, b.iteration_scores);
            assert_eq!(a.model, b.model);
        }
    }

    #[test]
    fn cumulative_metrics_never_decrease_and_bound_the_batch() {
        let (oracle, ds) = tiny_gmm_setup();
        let mut cfg = fast_cfg(WeightScheme::Rwr { gamma: 10.0 });
        cfg.iterations = 4;
        let out = run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(3)).unwrap();
        let mut last = f64::NEG_INFINITY;
        for it in &out.metrics.iterations {
            assert!(it.cumulative_max >= last, "cumulative max decreased");
            assert!(it.cumulative_max >= it.max, "union contains the batch");
            last = it.cumulative_max;
        }
    }

    #[test]
    fn uniform_scheme_reports_exact_effective_size() {
        let (oracle, ds) = tiny_gmm_setup();
        let cfg = fast_cfg(WeightScheme::Pgvae);
        let out = run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(4)).unwrap();
        for it in &out.metrics.iterations {
            assert_eq!(it.n_eff, 8.0, "uniform weights over K samples");
        }
    }

    #[test]
    fn reward_scheme_concentrates_weight_below_full_size() {
        let (oracle, ds) = tiny_gmm_setup();
        let cfg = fast_cfg(WeightScheme::Rwr { gamma: 10.0 });
        let out = run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(5)).unwrap();
        for it in &out.metrics.iterations {
            assert!(it.n_eff >= 1.0 && it.n_eff <= 8.0, "within bounds");
            assert!(it.n_eff < 8.0, "non-trivial scores should concentrate weight");
        }
    }

    #[test]
    fn cold_start_refits_still_work() {
        let (oracle, ds) = tiny_gmm_setup();
        let mut cfg = fast_cfg(WeightScheme::Rwr { gamma: 10.0 });
        cfg.warm_start = false;
        run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(6)).unwrap();
    }

    #[test]
    fn sequence_datasets_run_end_to_end() {
        let seqs: Vec<Vec<u8>> = (0..8)
            .map(|i| vec![i as u8 % 4, (i / 4) as u8 % 4, 1])
            .collect();
        let y: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let ds = Dataset::from_sequences("toy-seq", seqs, 4, y).unwrap();
        let oracle = Oracle::Lookup(LookupOracle::from_dataset(&ds).unwrap());
        let arch = VaeArch {
            latent_dim: 2,
            encoder_hidden: vec![8],
            decoder_hidden: vec![8],
            leaky_slope: 0.01,
            kind: crate::vae::DecoderKind::CategoricalSequence {
                positions: 3,
                alphabet: 4,
            },
        };
        let cfg = fast_cfg(WeightScheme::Pgvae);
        let out = run_mbo(&arch, &oracle, &ds, &cfg, &mut Rng::new(7)).unwrap();
        assert_eq!(out.metrics.iterations.len(), 2);
        for scores in &out.iteration_scores {
            assert!(scores.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn config_validation_rejects_mismatched_schemes() {
        let mut cfg = MboConfig::for_scheme(WeightScheme::Pgvae);
        cfg.hyper.lambda_rel = 0.0;
        assert!(cfg.validate().is_err(), "guided scheme without guidance");

        let mut cfg = MboConfig::for_scheme(WeightScheme::Rwr { gamma: 10.0 });
        cfg.hyper.lambda_rel = 1.0;
        assert!(cfg.validate().is_err(), "baseline with guidance on");

        let mut cfg = MboConfig::for_scheme(WeightScheme::Pgvae);
        cfg.samples_per_iter = 1;
        assert!(cfg.validate().is_err(), "K < 2");

        let cfg = MboConfig::for_scheme(WeightScheme::Rwr { gamma: 0.0 });
        assert!(cfg.validate().is_err(), "gamma must be positive");

        let cfg = MboConfig::for_scheme(WeightScheme::Cbas { quantile: 100.0 });
        assert!(cfg.validate().is_err(), "quantile at the closed end");
    }

    #[test]
    fn constant_training_properties_are_rejected() {
        let designs = Matrix::from_fn(6, 1, |r, _| r as f64);
        let ds = Dataset::from_continuous("flat", designs, vec![2.0; 6]).unwrap();
        let (oracle, _) = tiny_gmm_setup();
        let cfg = fast_cfg(WeightScheme::Pgvae);
        let err = run_mbo(&tiny_arch(1), &oracle, &ds, &cfg, &mut Rng::new(8))
            .unwrap_err()
            .to_string();
        assert!(err.contains("constant"), "{err}");
    }
}
