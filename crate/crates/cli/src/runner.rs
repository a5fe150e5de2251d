//! Cell execution and results plumbing.
//!
//! Each cell (one dataset-axis point x scheme x seed) runs a full
//! optimization and yields flat CSV rows. `execute` drives a whole
//! experiment: sequentially for `jobs = 1`, else through a worker pool.
//! Either way the writer emits cells in their canonical order and flushes
//! after each one, so output bytes are identical for any job count and an
//! interrupted run leaves a valid file covering every completed cell.
//!
//! `results.csv` rows: one per (metric, iteration). Iteration 0 carries the
//! trainset reference metrics (`base_max`, `base_p75`, `base_p95`);
//! iterations 1..=T carry the per-batch and cumulative metrics plus the
//! effective sample size; the final iteration also carries the latent
//! geometry summary (`latent_spearman`, `latent_slope`, `latent_intercept`,
//! `latent_residual_rms`, `latent_degenerate`).
//!
//! `latent.csv` rows: one per trainset sample, holding the 2-d projection of
//! the posterior means under the final model, the latent preference score
//! `-||mu||^2`, and the raw property value.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use pgvae::mbo::run_mbo;
use pgvae::Rng;

use crate::config::{materialize, Cell, Experiment};

/// One flat results row; every cell identifier repeats on every row so the
/// file is self-describing and order-independent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub scheme: String,
    pub rho: f64,
    /// Mode separation; empty for corpus datasets.
    pub delta_mu: String,
    /// First-mode spread; empty for corpus datasets.
    pub sigma1: String,
    /// Sampling interval `start..end`; empty for corpus datasets.
    pub si: String,
    /// High property range `p<lo>..<hi>` or `v<lo>..<hi>`; empty for
    /// mixture-landscape datasets.
    pub hr: String,
    pub n_s: usize,
    pub seed: u64,
    pub metric: String,
    pub iteration: usize,
    pub value: f64,
}

/// One trainset sample's latent coordinates under a cell's final model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatentRow {
    pub dataset: String,
    pub scheme: String,
    pub rho: f64,
    pub delta_mu: String,
    pub sigma1: String,
    pub si: String,
    pub hr: String,
    pub n_s: usize,
    pub seed: u64,
    pub id: usize,
    pub pc1: f64,
    pub pc2: f64,
    pub neg_sq_norm: f64,
    pub y: f64,
}

/// Everything one cell produces.
pub struct CellOutput {
    pub results: Vec<ResultRow>,
    pub latent: Vec<LatentRow>,
}

/// Runs one cell start to finish. The run stream is independent of the
/// trainset stream, and both derive from the cell seed only.
pub fn run_cell(cell: &Cell) -> Result<CellOutput> {
    let (oracle, trainset) = materialize(cell)?;
    let arch = cell.arch.materialize(&trainset.designs)?;
    let mut rng = Rng::new(cell.id.seed).sub("run");
    let outcome = run_mbo(&arch, &oracle, &trainset, &cell.mbo, &mut rng)
        .with_context(|| format!("running {}", cell.id.describe()))?;

    let id = &cell.id;
    let row = |metric: &str, iteration: usize, value: f64| ResultRow {
        dataset: id.dataset.clone(),
        scheme: id.scheme.clone(),
        rho: id.rho,
        delta_mu: id.delta_mu_str(),
        sigma1: id.sigma1_str(),
        si: id.si_str(),
        hr: id.hr_str(),
        n_s: id.n_s,
        seed: id.seed,
        metric: metric.to_string(),
        iteration,
        value,
    };

    let m = &outcome.metrics;
    let mut results = Vec::with_capacity(3 + 7 * m.iterations.len() + 5);
    results.push(row("base_max", 0, m.base_max));
    results.push(row("base_p75", 0, m.base_p75));
    results.push(row("base_p95", 0, m.base_p95));
    for (i, it) in m.iterations.iter().enumerate() {
        let t = i + 1;
        results.push(row("max", t, it.max));
        results.push(row("p75", t, it.p75));
        results.push(row("p95", t, it.p95));
        results.push(row("cum_max", t, it.cumulative_max));
        results.push(row("cum_p75", t, it.cumulative_p75));
        results.push(row("cum_p95", t, it.cumulative_p95));
        results.push(row("n_eff", t, it.n_eff));
    }
    let last = m.iterations.len();
    results.push(row("latent_spearman", last, m.latent.spearman));
    results.push(row("latent_slope", last, m.latent.slope));
    results.push(row("latent_intercept", last, m.latent.intercept));
    results.push(row("latent_residual_rms", last, m.latent.residual_rms));
    results.push(row(
        "latent_degenerate",
        last,
        if m.latent.degenerate { 1.0 } else { 0.0 },
    ));

    let proj = &m.latent.projection;
    let mut latent = Vec::with_capacity(trainset.len());
    for i in 0..trainset.len() {
        latent.push(LatentRow {
            dataset: id.dataset.clone(),
            scheme: id.scheme.clone(),
            rho: id.rho,
            delta_mu: id.delta_mu_str(),
            sigma1: id.sigma1_str(),
            si: id.si_str(),
            hr: id.hr_str(),
            n_s: id.n_s,
            seed: id.seed,
            id: i,
            pc1: proj.at(i, 0),
            pc2: proj.at(i, 1),
            neg_sq_norm: m.latent.neg_sq_norms[i],
            y: trainset.properties[i],
        });
    }

    Ok(CellOutput { results, latent })
}

/// Paths the runner writes.
pub struct OutputPaths {
    pub results: PathBuf,
    pub latent: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path) -> Self {
        OutputPaths {
            results: dir.join("results.csv"),
            latent: dir.join("latent.csv"),
        }
    }
}

/// Runs every cell of the experiment and writes both CSVs. `jobs` bounds the
/// worker thread count; results are committed in canonical cell order
/// regardless, flushing after each cell.
pub fn execute(exp: &Experiment, jobs: usize) -> Result<OutputPaths> {
    std::fs::create_dir_all(&exp.output_dir)
        .with_context(|| format!("creating output dir {}", exp.output_dir.display()))?;
    let paths = OutputPaths::new(&exp.output_dir);
    let mut results = csv::Writer::from_writer(BufWriter::new(
        File::create(&paths.results)
            .with_context(|| format!("creating {}", paths.results.display()))?,
    ));
    let mut latent = csv::Writer::from_writer(BufWriter::new(
        File::create(&paths.latent)
            .with_context(|| format!("creating {}", paths.latent.display()))?,
    ));

    let total = exp.cells.len();
    let jobs = jobs.max(1).min(total.max(1));
    let started = std::time::Instant::now();
    let mut write_cell = |index: usize, out: CellOutput| -> Result<()> {
        for r in &out.results {
            results.serialize(r)?;
        }
        for l in &out.latent {
            latent.serialize(l)?;
        }
        results.flush()?;
        latent.flush()?;
        log::info!(
            "[{}/{}] {} ({:.1}s elapsed)",
            index + 1,
            total,
            exp.cells[index].id.describe(),
            started.elapsed().as_secs_f64()
        );
        Ok(())
    };

    if jobs <= 1 {
        for (i, cell) in exp.cells.iter().enumerate() {
            let out = run_cell(cell)?;
            write_cell(i, out)?;
        }
        return Ok(paths);
    }

    // Worker pool over a shared queue; the receiver commits outputs in cell
    // order, holding any cell that finishes before its predecessors.
    let queue = Arc::new(Mutex::new(
        (0..exp.cells.len()).collect::<std::collections::VecDeque<usize>>(),
    ));
    let (tx, rx) = mpsc::channel::<(usize, Result<CellOutput>)>();
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..jobs {
            let queue = queue.clone();
            let tx = tx.clone();
            let cells = &exp.cells;
            scope.spawn(move || loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some(i) = next else { break };
                let out = run_cell(&cells[i]);
                if tx.send((i, out)).is_err() {
                    break; // receiver gone: an earlier cell failed
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, CellOutput> = BTreeMap::new();
        let mut next_expected = 0;
        for (i, out) in rx {
            match out {
                Ok(out) => {
                    pending.insert(i, out);
                }
                Err(e) => {
                    // Stop dispatching and fail; committed cells stay valid.
                    queue.lock().expect("queue lock").clear();
                    return Err(e);
                }
            }
            while let Some(out) = pending.remove(&next_expected) {
                write_cell(next_expected, out)?;
                next_expected += 1;
            }
        }
        Ok(())
    })?;

    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;

    fn tiny_experiment(dir: &Path, schemes: &str, seeds: &str) -> Experiment {
        let text = format!(
            r#"
            name = "tiny"
            output_dir = "{}"
            seeds = {seeds}
            schemes = {schemes}

            [dataset]
            kind = "gmm"
            n = 60
            rho = [0.2]
            delta_mu = [15.0]
            w2 = 2.5
            sigma1 = [0.25]

            [mbo]
            samples_per_iter = [16]
            iterations = 2
            initial_epochs = 3
            iter_epochs = 1
            batch_size = 8
            "#,
            dir.display()
        );
        let path = dir.join("exp.toml");
        std::fs::write(&path, text).unwrap();
        config::load(&path).unwrap()
    }

    #[test]
    fn run_cell_emits_expected_rows() {
        let dir = tempfile::tempdir().unwrap();
        let exp = tiny_experiment(dir.path(), r#"[{ name = "pgvae" }]"#, "[0]");
        let out = run_cell(&exp.cells[0]).unwrap();
        // 3 base + 2 iterations x 7 metrics + 5 latent summary rows.
        assert_eq!(out.results.len(), 3 + 14 + 5);
        assert_eq!(out.results[0].metric, "base_max");
        assert_eq!(out.results[0].iteration, 0);
        let metrics: Vec<&str> = out
            .results
            .iter()
            .filter(|r| r.iteration == 1)
            .map(|r| r.metric.as_str())
            .collect();
        assert_eq!(
            metrics,
            ["max", "p75", "p95", "cum_max", "cum_p75", "cum_p95", "n_eff"]
        );
        // Trainset: 60 low + 12 high rows.
        assert_eq!(out.latent.len(), 72);
        assert!(out.latent.iter().all(|l| l.y.is_finite()));
        // Uniform weights by definition for the guided scheme.
        let n_eff: Vec<f64> = out
            .results
            .iter()
            .filter(|r| r.metric == "n_eff")
            .map(|r| r.value)
            .collect();
        assert_eq!(n_eff, [16.0, 16.0]);
    }

    #[test]
    fn execute_writes_both_csvs_in_cell_order() {
        let dir = tempfile::tempdir().unwrap();
        let exp = tiny_experiment(
            dir.path(),
            r#"[{ name = "pgvae" }, { name = "rwr" }]"#,
            "[0, 1]",
        );
        let paths = execute(&exp, 1).unwrap();
        let text = std::fs::read_to_string(&paths.results).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "dataset,scheme,rho,delta_mu,sigma1,si,hr,n_s,seed,metric,iteration,value"
        );
        // 4 cells x 22 rows.
        assert_eq!(lines.count(), 4 * 22);
        let latent_text = std::fs::read_to_string(&paths.latent).unwrap();
        assert!(latent_text
            .starts_with("dataset,scheme,rho,delta_mu,sigma1,si,hr,n_s,seed,id,pc1,pc2,neg_sq_norm,y"));
        // Cell order: scheme-major then seed (canonical enumeration order).
        let seeds: Vec<&str> = text
            .lines()
            .skip(1)
            .step_by(22)
            .map(|l| l.split(',').nth(8).unwrap())
            .collect();
        assert_eq!(seeds, ["0", "1", "0", "1"]);
    }

    #[test]
    fn parallel_execution_matches_sequential_bytes() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let exp1 = tiny_experiment(
            dir1.path(),
            r#"[{ name = "pgvae" }, { name = "rwr" }]"#,
            "[0, 1]",
        );
        let exp2 = tiny_experiment(
            dir2.path(),
            r#"[{ name = "pgvae" }, { name = "rwr" }]"#,
            "[0, 1]",
        );
        let p1 = execute(&exp1, 1).unwrap();
        let p2 = execute(&exp2, 3).unwrap();
        let a = std::fs::read(&p1.results).unwrap();
        let b = std::fs::read(&p2.results).unwrap();
        assert_eq!(a, b, "results bytes must not depend on the job count");
        let a = std::fs::read(&p1.latent).unwrap();
        let b = std::fs::read(&p2.latent).unwrap();
        assert_eq!(a, b, "latent bytes must not depend on the job count");
    }
}
