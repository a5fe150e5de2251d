//! Release-gate gradient checks.
//!
//! Every registered training loss is compared against central finite
//! differences on a small fixed problem (batch 4, step 1e-5, fixed seeds, a
//! non-uniform weight vector). Registered losses: the weighted ELBO alone,
//! the latent pair term alone, and the full combined objective — each for
//! both decoder kinds. The pair term has no closed-form check of its own in
//! the library, so it is isolated here as the difference between the guided
//! and unguided objectives evaluated with the same reparameterization noise;
//! its analytic gradient is the difference of the two gradient sets, which
//! is exact because the objective is affine in the guidance coefficient.
//! The finite-difference side amplifies the guidance coefficient before
//! subtracting so cancellation noise scales with the pair term rather than
//! with the full objective.
//!
//! Exit behavior: 0 when every check's maximum relative error stays under
//! 1e-4, 1 otherwise, with the failing loss and worst parameter named.

use anyhow::{anyhow, Result};

use pgvae::data::one_hot_encode;
use pgvae::nn::{finite_diff_gradcheck, FlatParams, Mlp};
use pgvae::vae::{
    pgvae_objective_with_noise, DecoderKind, PgvaeHyper, VaeArch, VaeModel,
};
use pgvae::{Matrix, Rng};

const GATE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const BATCH: usize = 4;

/// One check's outcome.
pub struct CheckOutcome {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub pass: bool,
}

/// A fixed small problem: model, inputs, properties, weights, noise.
struct Problem {
    model: VaeModel,
    x: Matrix,
    y: Vec<f64>,
    w: Vec<f64>,
    eps: Matrix,
}

fn continuous_problem() -> Result<Problem> {
    let mut rng = Rng::new(401);
    let arch = VaeArch {
        latent_dim: 2,
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        leaky_slope: 0.01,
        kind: DecoderKind::GaussianContinuous { dim: 3, stddev: 1.0 },
    };
    let model = VaeModel::init(&arch, &mut rng)?;
    let x = Matrix::from_fn(BATCH, 3, |_, _| rng.normal());
    let y: Vec<f64> = (0..BATCH).map(|_| rng.uniform()).collect();
    let eps = Matrix::from_fn(BATCH, 2, |_, _| rng.normal());
    Ok(Problem {
        model,
        x,
        y,
        w: vec![0.35, 0.15, 0.3, 0.2],
        eps,
    })
}

fn categorical_problem() -> Result<Problem> {
    let mut rng = Rng::new(402);
    let arch = VaeArch {
        latent_dim: 2,
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        leaky_slope: 0.01,
        kind: DecoderKind::CategoricalSequence { positions: 3, alphabet: 4 },
    };
    let model = VaeModel::init(&arch, &mut rng)?;
    let seqs: Vec<Vec<u8>> = (0..BATCH)
        .map(|_| (0..3).map(|_| rng.below(4) as u8).collect())
        .collect();
    let x = one_hot_encode(&seqs, 4)?;
    let y: Vec<f64> = (0..BATCH).map(|_| rng.uniform()).collect();
    let eps = Matrix::from_fn(BATCH, 2, |_, _| rng.normal());
    Ok(Problem {
        model,
        x,
        y,
        w: vec![0.35, 0.15, 0.3, 0.2],
        eps,
    })
}

fn hyper(lambda_rel: f64) -> PgvaeHyper {
    PgvaeHyper { tau: 5.0, lambda_rel }
}

/// Packs a gradient set into a model-shaped container so the finite
/// difference driver can walk it with the same flat indexing.
fn grads_as_model(model: &VaeModel, enc: pgvae::nn::MlpParams, dec: pgvae::nn::MlpParams) -> VaeModel {
    VaeModel {
        encoder: Mlp {
            spec: model.encoder.spec.clone(),
            params: enc,
        },
        decoder: Mlp {
            spec: model.decoder.spec.clone(),
            params: dec,
        },
        latent_dim: model.latent_dim,
        kind: model.kind,
    }
}

/// Analytic gradient of a single objective (guided or not).
fn objective_grads(p: &Problem, lambda_rel: f64) -> Result<VaeModel> {
    let (_, g) = pgvae_objective_with_noise(&p.model, &p.x, &p.y, &p.w, &hyper(lambda_rel), &p.eps)?;
    Ok(grads_as_model(&p.model, g.encoder, g.decoder))
}

/// Analytic gradient of the isolated pair term: guided minus unguided.
fn pair_term_grads(p: &Problem) -> Result<VaeModel> {
    let g1 = objective_grads(p, 1.0)?;
    let g0 = objective_grads(p, 0.0)?;
    let mut diff = g1.clone();
    for i in 0..diff.flat_len() {
        diff.set_flat(i, g1.get_flat(i) - g0.get_flat(i));
    }
    Ok(diff)
}

fn run_check(
    name: &'static str,
    p: &Problem,
    analytic: VaeModel,
    loss: impl Fn(&VaeModel) -> pgvae::Result<f64>,
    corrupt: bool,
) -> Result<CheckOutcome> {
    let mut analytic = analytic;
    if corrupt {
        // Test hook: damage one analytic coordinate so the check must fail.
        analytic.set_flat(0, analytic.get_flat(0) + 1.0);
    }
    let report = finite_diff_gradcheck(&p.model, &analytic, loss, FD_STEP)
        .map_err(|e| anyhow!("{name}: {e}"))?;
    Ok(CheckOutcome {
        name,
        max_rel_err: report.max_rel_err,
        worst_param: report.worst_param,
        pass: report.max_rel_err < GATE,
    })
}

/// Runs the whole suite. `corrupt` damages the named check's analytic
/// gradient (a test hook for the failure path). Returns the outcomes and
/// whether everything passed.
pub fn run_all(corrupt: Option<&str>) -> Result<(Vec<CheckOutcome>, bool)> {
    let names = [
        "weighted-elbo-gaussian",
        "weighted-elbo-categorical",
        "pair-term-gaussian",
        "pair-term-categorical",
        "full-objective-gaussian",
        "full-objective-categorical",
    ];
    if let Some(c) = corrupt {
        if !names.contains(&c) {
            return Err(anyhow!(
                "unknown loss '{c}' (registered: {})",
                names.join(", ")
            ));
        }
    }
    let hit = |name: &str| corrupt == Some(name);

    let mut out = Vec::with_capacity(names.len());
    for (problem, tag) in [(continuous_problem()?, "gaussian"), (categorical_problem()?, "categorical")] {
        let p = &problem;
        let elbo_name: &'static str = if tag == "gaussian" {
            "weighted-elbo-gaussian"
        } else {
            "weighted-elbo-categorical"
        };
        out.push(run_check(
            elbo_name,
            p,
            objective_grads(p, 0.0)?,
            |m| pgvae_objective_with_noise(m, &p.x, &p.y, &p.w, &hyper(0.0), &p.eps).map(|(b, _)| b.total),
            hit(elbo_name),
        )?);

        let pair_name: &'static str = if tag == "gaussian" {
            "pair-term-gaussian"
        } else {
            "pair-term-categorical"
        };
        out.push(run_check(
            pair_name,
            p,
            pair_term_grads(p)?,
            |m| {
                // The objective is affine in the guidance coefficient, so
                // (obj(S) - obj(0)) / S equals the unit pair term for any S.
                // A large S makes the pair term dominate the subtraction,
                // which keeps cancellation noise proportional to the pair
                // term itself instead of the full objective.
                const S: f64 = 1e4;
                let guided =
                    pgvae_objective_with_noise(m, &p.x, &p.y, &p.w, &hyper(S), &p.eps)?.0.total;
                let plain =
                    pgvae_objective_with_noise(m, &p.x, &p.y, &p.w, &hyper(0.0), &p.eps)?.0.total;
                Ok((guided - plain) / S)
            },
            hit(pair_name),
        )?);

        let full_name: &'static str = if tag == "gaussian" {
            "full-objective-gaussian"
        } else {
            "full-objective-categorical"
        };
        out.push(run_check(
            full_name,
            p,
            objective_grads(p, 1.0)?,
            |m| pgvae_objective_with_noise(m, &p.x, &p.y, &p.w, &hyper(1.0), &p.eps).map(|(b, _)| b.total),
            hit(full_name),
        )?);
    }

    let all_pass = out.iter().all(|c| c.pass);
    Ok((out, all_pass))
}

/// Prints the outcome table and returns the process exit code.
pub fn cmd_gradcheck(corrupt: Option<&str>) -> Result<i32> {
    let (outcomes, all_pass) = run_all(corrupt)?;
    println!("{:<28} {:>12}  {:<28} status", "loss", "max rel err", "worst parameter");
    for c in &outcomes {
        println!(
            "{:<28} {:>12.3e}  {:<28} {}",
            c.name,
            c.max_rel_err,
            c.worst_param,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    if all_pass {
        println!("all {} gradient checks passed (gate {GATE:.0e})", outcomes.len());
        Ok(0)
    } else {
        let failed: Vec<&str> = outcomes.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        eprintln!("gradient check failed: {}", failed.join(", "));
        Ok(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_suite_passes() {
        let (outcomes, all_pass) = run_all(None).unwrap();
        assert_eq!(outcomes.len(), 6);
        assert!(
            all_pass,
            "failures: {:?}",
            outcomes
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{} {:.2e}", c.name, c.max_rel_err))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn corruption_hook_fails_only_the_named_loss() {
        let (outcomes, all_pass) = run_all(Some("pair-term-gaussian")).unwrap();
        assert!(!all_pass);
        for c in &outcomes {
            assert_eq!(c.pass, c.name != "pair-term-gaussian", "{}", c.name);
        }
    }

    #[test]
    fn unknown_corruption_target_is_rejected() {
        assert!(run_all(Some("nonsense")).is_err());
    }
}
