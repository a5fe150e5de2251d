//! Experiment configuration: the TOML schema, validation, and expansion of
//! grid axes into a flat list of runnable cells.
//!
//! A config file declares one experiment: a dataset recipe (with optional
//! grid axes), the weighting schemes to compare, the seeds to repeat over,
//! and the optimization settings. `load` parses and validates it;
//! [`Experiment::cells`] holds the Cartesian product of every grid axis,
//! ordered deterministically (dataset axes outermost, then samples-per-
//! iteration, then scheme, then seed), so that a rerun enumerates cells in
//! the same order.
//!
//! # Schema
//!
//! ```toml
//! name = "gmm"                # experiment label, first CSV column
//! output_dir = "out/gmm"      # optional; else $PGVAE_OUT, else "."
//! seeds = [0, 1, 2]
//!
//! [[schemes]]
//! name = "pgvae"              # or rwr / fw-rwr / cbas
//! # gamma = 10.0              # rwr, fw-rwr (default 10)
//! # quantile = 90.0           # cbas (default 90)
//!
//! [dataset]
//! kind = "gmm"                # or "csv" | "semi-synthetic"
//! # ... kind-specific fields, see the preset files under configs/
//!
//! [model]                     # optional; preset inferred from the dataset
//! # preset = "continuous-landscape" | "sequence" | "field"
//! # or explicit: latent_dim, encoder_hidden, decoder_hidden, leaky_slope
//!
//! [mbo]                       # optional; every field has a default
//! samples_per_iter = [200]    # grid axis
//! iterations = 20
//! # initial_epochs, iter_epochs, batch_size, warm_start, tau, lambda_rel,
//! # learning_rate, threshold, sample_noise, cbas_mc_samples
//! ```
//!
//! Relative paths inside the config (dataset CSVs, oracle grids) resolve
//! against the config file's directory, so a config stays valid no matter
//! where the tool runs from. `output_dir` resolves against the working
//! directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use pgvae::data::synth::{SamplingInterval, SplitThreshold, TagSpec};
use pgvae::data::{Dataset, DesignBatch, ImbalanceSpec, RangeKind, RangeSpec};
use pgvae::mbo::{MboConfig, WeightScheme};
use pgvae::nn::AdamHyper;
use pgvae::oracle::{GmmOracle, LookupOracle, Oracle, ReferenceFieldOracle};
use pgvae::vae::{DecoderKind, PgvaeHyper, VaeArch};
use pgvae::Rng;

/// Environment variable consulted when a config omits `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "PGVAE_OUT";

// ---------------------------------------------------------------------------
// Raw TOML shape (serde target). Kept private; `load` converts it into the
// validated `Experiment`.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    output_dir: Option<PathBuf>,
    seeds: Vec<u64>,
    schemes: Vec<RawScheme>,
    dataset: RawDataset,
    #[serde(default)]
    oracle: Option<RawOracle>,
    #[serde(default)]
    model: Option<RawModel>,
    #[serde(default)]
    mbo: RawMbo,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    name: String,
    gamma: Option<f64>,
    quantile: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawDataset {
    /// Two-mode mixture landscape; the oracle parameters double as the
    /// trainset sampler parameters.
    Gmm {
        /// Low-mode sample count N; the high block adds `round(rho * n)`.
        #[serde(default = "default_gmm_n")]
        n: usize,
        rho: Vec<f64>,
        delta_mu: Vec<f64>,
        #[serde(default = "default_w1")]
        w1: f64,
        w2: f64,
        sigma1: Vec<f64>,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
        /// Sampling-interval pairs `(gamma_s, gamma_e)`.
        #[serde(default = "default_si")]
        si: Vec<[f64; 2]>,
    },
    /// User-supplied corpus; trainsets are imbalanced subsets.
    Csv {
        path: PathBuf,
        low: RangeSpec,
        high: Vec<RangeSpec>,
        rho: Vec<f64>,
        n_low: usize,
    },
    /// Generated sequence corpus with a planted additive property and a
    /// motif tag marking the high split.
    SemiSynthetic {
        n: usize,
        seq_len: usize,
        #[serde(default = "default_alphabet")]
        alphabet: usize,
        h_tag: Vec<u8>,
        split: RawSplit,
        /// Seed for corpus generation and tagging; fixed across cells so
        /// every run optimizes the same world.
        #[serde(default)]
        corpus_seed: u64,
        low: RangeSpec,
        high: Vec<RangeSpec>,
        rho: Vec<f64>,
        n_low: usize,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    percentile: Option<f64>,
    absolute: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawOracle {
    /// Exact lookup over the corpus; unknown designs score zero. The default
    /// for csv and semi-synthetic datasets.
    Lookup,
    /// Weighted-MSE match against a reference grid (`reference,weight` CSV,
    /// one row per cell); corpus properties are rescored through it so the
    /// oracle and the trainset agree.
    ReferenceField { reference: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    preset: Option<String>,
    latent_dim: Option<usize>,
    encoder_hidden: Option<Vec<usize>>,
    decoder_hidden: Option<Vec<usize>>,
    leaky_slope: Option<f64>,
    /// Gaussian decoder observation stddev (continuous designs only).
    stddev: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMbo {
    samples_per_iter: Option<Vec<usize>>,
    iterations: Option<usize>,
    initial_epochs: Option<usize>,
    iter_epochs: Option<usize>,
    batch_size: Option<usize>,
    warm_start: Option<bool>,
    tau: Option<f64>,
    lambda_rel: Option<f64>,
    learning_rate: Option<f64>,
    threshold: Option<f64>,
    sample_noise: Option<bool>,
    cbas_mc_samples: Option<usize>,
}

fn default_gmm_n() -> usize {
    1000
}
fn default_w1() -> f64 {
    1.0
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_si() -> Vec<[f64; 2]> {
    vec![[0.5, 1.0]]
}
fn default_alphabet() -> usize {
    20
}

// ---------------------------------------------------------------------------
// Validated experiment
// ---------------------------------------------------------------------------

/// A fully validated experiment: every grid cell enumerated, every referenced
/// file loaded, every sub-config checked.
#[derive(Debug)]
pub struct Experiment {
    pub name: String,
    pub output_dir: PathBuf,
    pub cells: Vec<Cell>,
}

/// How one cell obtains its oracle and trainset.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Sample a fresh mixture-landscape trainset with the cell's seed.
    Gmm {
        oracle: GmmOracle,
        n: usize,
        rho: f64,
        si: SamplingInterval,
    },
    /// Draw an imbalanced subset of a shared corpus with the cell's seed.
    Corpus {
        corpus: Arc<Dataset>,
        oracle: Arc<Oracle>,
        spec: ImbalanceSpec,
    },
}

/// Identifier columns naming a cell in the results CSV. Axes that do not
/// apply to the dataset kind are `None` and print as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CellId {
    pub dataset: String,
    pub scheme: String,
    pub rho: f64,
    pub delta_mu: Option<f64>,
    pub sigma1: Option<f64>,
    pub si: Option<[f64; 2]>,
    pub hr: Option<RangeSpec>,
    pub n_s: usize,
    pub seed: u64,
}

impl CellId {
    pub fn delta_mu_str(&self) -> String {
        self.delta_mu.map(fmt_num).unwrap_or_default()
    }
    pub fn sigma1_str(&self) -> String {
        self.sigma1.map(fmt_num).unwrap_or_default()
    }
    pub fn si_str(&self) -> String {
        self.si
            .map(|[s, e]| format!("{}..{}", fmt_num(s), fmt_num(e)))
            .unwrap_or_default()
    }
    pub fn hr_str(&self) -> String {
        self.hr.map(|r| fmt_range(&r)).unwrap_or_default()
    }

    /// Human-readable cell label for progress logging.
    pub fn describe(&self) -> String {
        let mut s = format!("{} {} rho={}", self.dataset, self.scheme, self.rho);
        if let Some(d) = self.delta_mu {
            s.push_str(&format!(" dmu={d}"));
        }
        if let Some(v) = self.sigma1 {
            s.push_str(&format!(" s1={v}"));
        }
        if self.si.is_some() {
            s.push_str(&format!(" si={}", self.si_str()));
        }
        if self.hr.is_some() {
            s.push_str(&format!(" hr={}", self.hr_str()));
        }
        s.push_str(&format!(" ns={} seed={}", self.n_s, self.seed));
        s
    }
}

/// Plain positional formatting; `15.0` prints as `15`, matching TOML input.
fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Range column format: `p<lo>..<hi>` for percentile bounds, `v<lo>..<hi>`
/// for absolute value bounds (comma-free so CSV needs no quoting).
pub fn fmt_range(r: &RangeSpec) -> String {
    let tag = match r.kind {
        RangeKind::Percentile => 'p',
        RangeKind::Absolute => 'v',
    };
    format!("{tag}{}..{}", fmt_num(r.lo), fmt_num(r.hi))
}

/// One runnable unit: a (dataset-axes, scheme, seed) point of the grid.
#[derive(Debug, Clone)]
pub struct Cell {
    pub id: CellId,
    pub source: DataSource,
    pub arch: ArchSpec,
    pub mbo: MboConfig,
}

/// Architecture recipe; the input dimension comes from the materialized
/// trainset, so only the free parameters are stored.
#[derive(Debug, Clone)]
pub enum ArchSpec {
    ContinuousLandscape,
    Sequence,
    Field,
    Explicit {
        latent_dim: usize,
        encoder_hidden: Vec<usize>,
        decoder_hidden: Vec<usize>,
        leaky_slope: f64,
        stddev: f64,
    },
}

impl ArchSpec {
    /// Resolves to a concrete architecture for a trainset's design shape.
    pub fn materialize(&self, designs: &DesignBatch) -> Result<VaeArch> {
        let arch = match (self, designs) {
            (ArchSpec::ContinuousLandscape, DesignBatch::Continuous(m)) => {
                VaeArch::continuous_landscape(m.cols())
            }
            (ArchSpec::Field, DesignBatch::Continuous(m)) => VaeArch::field(m.cols()),
            (ArchSpec::Sequence, DesignBatch::Sequences { seqs, alphabet }) => {
                let positions = seqs.first().map(|s| s.len()).unwrap_or(0);
                VaeArch::sequence(positions, *alphabet)
            }
            (ArchSpec::Explicit { latent_dim, encoder_hidden, decoder_hidden, leaky_slope, stddev }, d) => {
                let kind = match d {
                    DesignBatch::Continuous(m) => DecoderKind::GaussianContinuous {
                        dim: m.cols(),
                        stddev: *stddev,
                    },
                    DesignBatch::Sequences { seqs, alphabet } => DecoderKind::CategoricalSequence {
                        positions: seqs.first().map(|s| s.len()).unwrap_or(0),
                        alphabet: *alphabet,
                    },
                };
                VaeArch {
                    latent_dim: *latent_dim,
                    encoder_hidden: encoder_hidden.clone(),
                    decoder_hidden: decoder_hidden.clone(),
                    leaky_slope: *leaky_slope,
                    kind,
                }
            }
            (ArchSpec::Sequence, DesignBatch::Continuous(_)) => {
                bail!("sequence architecture preset given a continuous dataset")
            }
            (_, DesignBatch::Sequences { .. }) => {
                bail!("continuous architecture preset given a sequence dataset")
            }
        };
        Ok(arch)
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Parses, validates, and expands a config file. Every error is a config
/// error (the caller maps it to exit code 2).
pub fn load(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let raw: RawConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    build(raw, base_dir)
}

fn build(raw: RawConfig, base_dir: &Path) -> Result<Experiment> {
    if raw.name.is_empty() {
        bail!("experiment name must be non-empty");
    }
    if raw.seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let mut seen = HashSet::new();
    for &s in &raw.seeds {
        if !seen.insert(s) {
            bail!("duplicate seed {s}");
        }
    }
    let schemes = parse_schemes(&raw.schemes)?;
    let output_dir = raw
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    // Dataset-axis combinations, each with its data source recipe.
    let axes = expand_dataset(&raw, base_dir)?;

    let arch = parse_model(raw.model.as_ref(), &raw.dataset)?;
    let n_s_grid = raw
        .mbo
        .samples_per_iter
        .clone()
        .unwrap_or_else(|| vec![200]);
    if n_s_grid.is_empty() {
        bail!("samples_per_iter grid must be non-empty");
    }

    let mut cells = Vec::new();
    for (axis, source) in &axes {
        for &n_s in &n_s_grid {
            for scheme in &schemes {
                let mbo = build_mbo(&raw.mbo, *scheme, n_s)
                    .with_context(|| format!("mbo settings for scheme {}", scheme.label()))?;
                for &seed in &raw.seeds {
                    cells.push(Cell {
                        id: CellId {
                            dataset: raw.name.clone(),
                            scheme: scheme.label().to_string(),
                            rho: axis.rho,
                            delta_mu: axis.delta_mu,
                            sigma1: axis.sigma1,
                            si: axis.si,
                            hr: axis.hr,
                            n_s,
                            seed,
                        },
                        source: source.clone(),
                        arch: arch.clone(),
                        mbo,
                    });
                }
            }
        }
    }

    Ok(Experiment {
        name: raw.name,
        output_dir,
        cells,
    })
}

fn parse_schemes(raw: &[RawScheme]) -> Result<Vec<WeightScheme>> {
    if raw.is_empty() {
        bail!("at least one scheme is required");
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut labels = HashSet::new();
    for s in raw {
        let scheme = match s.name.as_str() {
            "pgvae" => {
                reject_param(s.gamma, "pgvae", "gamma")?;
                reject_param(s.quantile, "pgvae", "quantile")?;
                WeightScheme::Pgvae
            }
            "rwr" => {
                reject_param(s.quantile, "rwr", "quantile")?;
                WeightScheme::Rwr {
                    gamma: s.gamma.unwrap_or(10.0),
                }
            }
            "fw-rwr" => {
                reject_param(s.quantile, "fw-rwr", "quantile")?;
                WeightScheme::FwRwr {
                    gamma: s.gamma.unwrap_or(10.0),
                }
            }
            "cbas" => {
                reject_param(s.gamma, "cbas", "gamma")?;
                WeightScheme::Cbas {
                    quantile: s.quantile.unwrap_or(90.0),
                }
            }
            other => bail!("unknown scheme '{other}' (expected pgvae, rwr, fw-rwr, or cbas)"),
        };
        scheme.validate().map_err(|e| anyhow!("scheme {}: {e}", s.name))?;
        if !labels.insert(scheme.label().to_string()) {
            bail!("scheme '{}' listed twice", s.name);
        }
        out.push(scheme);
    }
    Ok(out)
}

fn reject_param(value: Option<f64>, scheme: &str, param: &str) -> Result<()> {
    if value.is_some() {
        bail!("scheme {scheme} takes no '{param}' parameter");
    }
    Ok(())
}

/// One point of the dataset grid with the identifier values it fixes.
struct AxisPoint {
    rho: f64,
    delta_mu: Option<f64>,
    sigma1: Option<f64>,
    si: Option<[f64; 2]>,
    hr: Option<RangeSpec>,
}

fn expand_dataset(raw: &RawConfig, base_dir: &Path) -> Result<Vec<(AxisPoint, DataSource)>> {
    let mut out: Vec<(AxisPoint, DataSource)> = Vec::new();
    match &raw.dataset {
        RawDataset::Gmm {
            n,
            rho,
            delta_mu,
            w1,
            w2,
            sigma1,
            sigma2,
            si,
        } => {
            if raw.oracle.is_some() {
                bail!("gmm datasets define their own oracle; remove the [oracle] table");
            }
            require_nonempty(rho, "rho")?;
            require_nonempty(delta_mu, "delta_mu")?;
            require_nonempty(sigma1, "sigma1")?;
            require_nonempty(si, "si")?;
            for &dmu in delta_mu {
                for &s1 in sigma1 {
                    let oracle = GmmOracle::new(*w1, *w2, 0.0, dmu, s1, *sigma2)
                        .map_err(|e| anyhow!("oracle for delta_mu={dmu}, sigma1={s1}: {e}"))?;
                    for &[gs, ge] in si {
                        let interval = SamplingInterval { start: gs, end: ge };
                        interval
                            .validate()
                            .map_err(|e| anyhow!("sampling interval ({gs}, {ge}): {e}"))?;
                        for &r in rho {
                            out.push((
                                AxisPoint {
                                    rho: r,
                                    delta_mu: Some(dmu),
                                    sigma1: Some(s1),
                                    si: Some([gs, ge]),
                                    hr: None,
                                },
                                DataSource::Gmm {
                                    oracle,
                                    n: *n,
                                    rho: r,
                                    si: interval,
                                },
                            ));
                        }
                    }
                }
            }
        }
        RawDataset::Csv {
            path,
            low,
            high,
            rho,
            n_low,
        } => {
            require_nonempty(high, "high")?;
            require_nonempty(rho, "rho")?;
            let full = base_dir.join(path);
            let corpus = pgvae::data::load_dataset_csv(&full)
                .map_err(|e| anyhow!("dataset {}: {e}", full.display()))?;
            let (corpus, oracle) = corpus_oracle(corpus, raw.oracle.as_ref(), base_dir)?;
            push_corpus_cells(&mut out, corpus, oracle, *low, high, rho, *n_low)?;
        }
        RawDataset::SemiSynthetic {
            n,
            seq_len,
            alphabet,
            h_tag,
            split,
            corpus_seed,
            low,
            high,
            rho,
            n_low,
        } => {
            require_nonempty(high, "high")?;
            require_nonempty(rho, "rho")?;
            if raw.oracle.is_some() {
                bail!("semi-synthetic datasets use the lookup oracle; remove the [oracle] table");
            }
            let threshold = match (split.percentile, split.absolute) {
                (Some(p), None) => SplitThreshold::Percentile(p),
                (None, Some(v)) => SplitThreshold::Absolute(v),
                _ => bail!("split must set exactly one of 'percentile' or 'absolute'"),
            };
            let mut rng = Rng::new(*corpus_seed).sub("corpus");
            let base = pgvae::data::synthetic_sequence_dataset(*n, *seq_len, *alphabet, &mut rng)
                .map_err(|e| anyhow!("generating sequence corpus: {e}"))?;
            let tag = TagSpec { h_tag: h_tag.clone() };
            let corpus = pgvae::data::semi_synthetic_transform(&base, &tag, threshold, &mut rng)
                .map_err(|e| anyhow!("tagging sequence corpus: {e}"))?;
            let oracle = Arc::new(Oracle::Lookup(
                LookupOracle::from_dataset(&corpus).map_err(|e| anyhow!("corpus oracle: {e}"))?,
            ));
            push_corpus_cells(&mut out, Arc::new(corpus), oracle, *low, high, rho, *n_low)?;
        }
    }
    Ok(out)
}

/// Builds the oracle for a csv corpus and rescopes the corpus properties when
/// a reference-field oracle is configured (so trainset labels and oracle
/// scores agree).
fn corpus_oracle(
    corpus: Dataset,
    oracle: Option<&RawOracle>,
    base_dir: &Path,
) -> Result<(Arc<Dataset>, Arc<Oracle>)> {
    match oracle {
        None | Some(RawOracle::Lookup) => {
            let table = LookupOracle::from_dataset(&corpus)
                .map_err(|e| anyhow!("corpus oracle: {e}"))?;
            Ok((Arc::new(corpus), Arc::new(Oracle::Lookup(table))))
        }
        Some(RawOracle::ReferenceField { reference }) => {
            let ref_path = base_dir.join(reference);
            let oracle = ReferenceFieldOracle::from_csv(&ref_path)
                .map_err(|e| anyhow!("reference field {}: {e}", ref_path.display()))?;
            let oracle = Oracle::ReferenceField(oracle);
            let rescored = oracle
                .score_batch(&corpus.designs)
                .map_err(|e| anyhow!("rescoring corpus through the reference field: {e}"))?;
            let corpus = Dataset::new(&corpus.name, corpus.designs.clone(), rescored)
                .map_err(|e| anyhow!("rescored corpus: {e}"))?;
            Ok((Arc::new(corpus), Arc::new(oracle)))
        }
    }
}

fn push_corpus_cells(
    out: &mut Vec<(AxisPoint, DataSource)>,
    corpus: Arc<Dataset>,
    oracle: Arc<Oracle>,
    low: RangeSpec,
    high: &[RangeSpec],
    rho: &[f64],
    n_low: usize,
) -> Result<()> {
    for &hr in high {
        for &r in rho {
            let spec = ImbalanceSpec {
                low,
                high: hr,
                rho: r,
                n_low,
            };
            spec.validate()
                .map_err(|e| anyhow!("imbalance spec (hr={}, rho={r}): {e}", fmt_range(&hr)))?;
            out.push((
                AxisPoint {
                    rho: r,
                    delta_mu: None,
                    sigma1: None,
                    si: None,
                    hr: Some(hr),
                },
                DataSource::Corpus {
                    corpus: corpus.clone(),
                    oracle: oracle.clone(),
                    spec,
                },
            ));
        }
    }
    Ok(())
}

fn require_nonempty<T>(list: &[T], what: &str) -> Result<()> {
    if list.is_empty() {
        bail!("grid axis '{what}' must be non-empty");
    }
    Ok(())
}

fn parse_model(raw: Option<&RawModel>, dataset: &RawDataset) -> Result<ArchSpec> {
    let default_preset = match dataset {
        RawDataset::Gmm { .. } => ArchSpec::ContinuousLandscape,
        RawDataset::SemiSynthetic { .. } => ArchSpec::Sequence,
        // A csv corpus could be either kind; pick by content later would be
        // ambiguous in reports, so default continuous corpora to the wider
        // field net and sequence corpora to the sequence net.
        RawDataset::Csv { .. } => ArchSpec::Field,
    };
    let Some(m) = raw else {
        return Ok(default_preset);
    };
    let explicit = m.latent_dim.is_some()
        || m.encoder_hidden.is_some()
        || m.decoder_hidden.is_some()
        || m.leaky_slope.is_some()
        || m.stddev.is_some();
    match (&m.preset, explicit) {
        (Some(_), true) => bail!("model: give either a preset or explicit dimensions, not both"),
        (Some(p), false) => match p.as_str() {
            "continuous-landscape" => Ok(ArchSpec::ContinuousLandscape),
            "sequence" => Ok(ArchSpec::Sequence),
            "field" => Ok(ArchSpec::Field),
            other => bail!(
                "unknown model preset '{other}' (expected continuous-landscape, sequence, or field)"
            ),
        },
        (None, true) => {
            let latent_dim = m
                .latent_dim
                .ok_or_else(|| anyhow!("explicit model needs latent_dim"))?;
            if latent_dim == 0 {
                bail!("latent_dim must be >= 1");
            }
            let stddev = m.stddev.unwrap_or(1.0);
            if !(stddev.is_finite() && stddev > 0.0) {
                bail!("model stddev must be positive, got {stddev}");
            }
            Ok(ArchSpec::Explicit {
                latent_dim,
                encoder_hidden: m.encoder_hidden.clone().unwrap_or_else(|| vec![64]),
                decoder_hidden: m.decoder_hidden.clone().unwrap_or_else(|| vec![64]),
                leaky_slope: m.leaky_slope.unwrap_or(0.01),
                stddev,
            })
        }
        (None, false) => Ok(default_preset),
    }
}

fn build_mbo(raw: &RawMbo, scheme: WeightScheme, n_s: usize) -> Result<MboConfig> {
    let mut cfg = MboConfig::for_scheme(scheme);
    cfg.samples_per_iter = n_s;
    if let Some(v) = raw.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = raw.initial_epochs {
        cfg.initial_epochs = v;
    }
    if let Some(v) = raw.iter_epochs {
        cfg.iter_epochs = v;
    }
    if let Some(v) = raw.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = raw.warm_start {
        cfg.warm_start = v;
    }
    if let Some(v) = raw.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = raw.sample_noise {
        cfg.sample_noise = v;
    }
    if let Some(v) = raw.cbas_mc_samples {
        cfg.cbas_mc_samples = v;
    }
    if let Some(lr) = raw.learning_rate {
        cfg.adam = AdamHyper {
            lr,
            ..AdamHyper::default()
        };
    }
    let tau = raw.tau.unwrap_or(5.0);
    // Only the guided scheme trains with the latent pair term; baselines
    // always run a plain weighted fit.
    let lambda_rel = match scheme {
        WeightScheme::Pgvae => raw.lambda_rel.unwrap_or(1.0),
        _ => 0.0,
    };
    cfg.hyper = PgvaeHyper { tau, lambda_rel };
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(cfg)
}

/// Materializes a cell's oracle and trainset. The trainset stream is derived
/// from the cell seed alone, so every scheme sees the identical trainset for
/// a given seed and the comparison is paired.
pub fn materialize(cell: &Cell) -> Result<(Arc<Oracle>, Dataset)> {
    let mut rng = Rng::new(cell.id.seed).sub("trainset");
    match &cell.source {
        DataSource::Gmm { oracle, n, rho, si } => {
            let trainset = pgvae::data::sample_gmm_trainset(oracle, *n, *rho, *si, &mut rng)
                .map_err(|e| anyhow!("sampling trainset for {}: {e}", cell.id.describe()))?;
            Ok((Arc::new(Oracle::Gmm(*oracle)), trainset))
        }
        DataSource::Corpus {
            corpus,
            oracle,
            spec,
        } => {
            let trainset = pgvae::data::build_imbalanced_subset(corpus, spec, &mut rng)
                .map_err(|e| anyhow!("subsetting corpus for {}: {e}", cell.id.describe()))?;
            Ok((oracle.clone(), trainset))
        }
    }
}
