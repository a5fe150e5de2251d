//! Cross-seed aggregation of results CSVs and static SVG plots.
//!
//! `aggregate` reads any number of results files (the schema `runner.rs`
//! writes), groups rows by cell identifiers x metric x iteration, and
//! reduces the per-seed values to mean and 95% confidence half-width
//! (Student-t). Input order never matters: rows are grouped by key and the
//! output is sorted. Feeding the same (cell, seed) twice is an error, since
//! it would silently double-count a run.
//!
//! `write_svg_plots` renders one line chart per (dataset, grid axis) pair:
//! the final-iteration cumulative max per scheme against the axis, with
//! whiskers for the confidence interval and a gray reference series for the
//! trainset's own max ("base"). Charts are self-contained SVG with no
//! external references.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use pgvae::stats::mean_and_ci95;

use crate::runner::ResultRow;

/// Everything that names an aggregation group: one cell of the sweep grid
/// (minus the seed) plus the metric coordinates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub dataset: String,
    pub scheme: String,
    /// Stored as the CSV string so float formatting round-trips exactly.
    pub rho: String,
    pub delta_mu: String,
    pub sigma1: String,
    pub si: String,
    pub hr: String,
    pub n_s: usize,
    pub metric: String,
    pub iteration: usize,
}

/// One aggregated line: seed count, mean, and CI half-width (`None` for a
/// single seed, where a t-interval is undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub key: GroupKey,
    pub n_seeds: usize,
    pub mean: f64,
    pub ci95: Option<f64>,
}

/// Reads and groups every input file. Errors on schema mismatches, on
/// non-finite values, and on duplicate (cell, metric, iteration, seed) rows.
pub fn aggregate(paths: &[PathBuf]) -> Result<Vec<AggregateRow>> {
    if paths.is_empty() {
        bail!("at least one results CSV is required");
    }
    let mut groups: BTreeMap<GroupKey, BTreeMap<u64, f64>> = BTreeMap::new();
    for path in paths {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut any = false;
        for (i, record) in reader.deserialize::<ResultRow>().enumerate() {
            let row = record
                .with_context(|| format!("{} row {}: schema mismatch", path.display(), i + 2))?;
            if !row.value.is_finite() {
                bail!(
                    "{} row {}: non-finite value for metric {}",
                    path.display(),
                    i + 2,
                    row.metric
                );
            }
            any = true;
            let key = GroupKey {
                dataset: row.dataset,
                scheme: row.scheme,
                rho: fmt_f64(row.rho),
                delta_mu: row.delta_mu,
                sigma1: row.sigma1,
                si: row.si,
                hr: row.hr,
                n_s: row.n_s,
                metric: row.metric,
                iteration: row.iteration,
            };
            if groups
                .entry(key.clone())
                .or_default()
                .insert(row.seed, row.value)
                .is_some()
            {
                bail!(
                    "{}: duplicate row for {} {} metric {} iteration {} seed {} \
                     (same results file given twice?)",
                    path.display(),
                    key.dataset,
                    key.scheme,
                    key.metric,
                    key.iteration,
                    row.seed
                );
            }
        }
        if !any {
            bail!("{} holds no result rows", path.display());
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for (key, by_seed) in groups {
        let values: Vec<f64> = by_seed.values().copied().collect();
        let (mean, ci95) = mean_and_ci95(&values);
        out.push(AggregateRow {
            key,
            n_seeds: values.len(),
            mean,
            ci95,
        });
    }
    Ok(out)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes the aggregate as CSV to `out` (same identifier columns as the
/// results schema, plus `n_seeds`, `mean`, `ci95`; `ci95` is empty for
/// single-seed groups).
pub fn write_aggregate_csv<W: std::io::Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset", "scheme", "rho", "delta_mu", "sigma1", "si", "hr", "n_s", "metric",
        "iteration", "n_seeds", "mean", "ci95",
    ])?;
    for r in rows {
        let k = &r.key;
        w.write_record([
            k.dataset.as_str(),
            k.scheme.as_str(),
            k.rho.as_str(),
            k.delta_mu.as_str(),
            k.sigma1.as_str(),
            k.si.as_str(),
            k.hr.as_str(),
            &k.n_s.to_string(),
            k.metric.as_str(),
            &k.iteration.to_string(),
            &r.n_seeds.to_string(),
            &fmt_f64(r.mean),
            &r.ci95.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// SVG plotting
// ---------------------------------------------------------------------------

/// The grid axes a chart can run over.
const AXES: [&str; 6] = ["rho", "delta_mu", "sigma1", "si", "hr", "n_s"];

/// Renders one chart per (dataset, axis with >1 distinct value), fixing the
/// remaining axes at each of their values (one file per combination).
/// Returns the written paths.
pub fn write_svg_plots(rows: &[AggregateRow], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();

    let datasets: Vec<String> = unique(rows.iter().map(|r| r.key.dataset.clone()));
    for dataset in &datasets {
        // Final-iteration cumulative max per scheme, plus the trainset max.
        let finals = final_cum_max(rows, dataset);
        let bases: Vec<&AggregateRow> = rows
            .iter()
            .filter(|r| &r.key.dataset == dataset && r.key.metric == "base_max")
            .collect();
        for axis in AXES {
            let values = unique(finals.iter().map(|r| axis_value(&r.key, axis)));
            if values.len() < 2 {
                continue;
            }
            let others: Vec<&str> = AXES.iter().filter(|a| **a != axis).copied().collect();
            let combos = unique(
                finals
                    .iter()
                    .map(|r| others.iter().map(|a| axis_value(&r.key, a)).collect::<Vec<_>>()),
            );
            for combo in &combos {
                let select = |r: &&AggregateRow| {
                    others
                        .iter()
                        .zip(combo)
                        .all(|(a, v)| &axis_value(&r.key, a) == v)
                };
                let chart_rows: Vec<&AggregateRow> =
                    finals.iter().copied().filter(select).collect();
                if chart_rows.is_empty() {
                    continue;
                }
                let base_rows: Vec<&AggregateRow> =
                    bases.iter().copied().filter(select).collect();
                let suffix = fixed_suffix(&others, combo);
                let name = format!("{dataset}-cum_max-vs-{axis}{suffix}.svg");
                let path = dir.join(sanitize(&name));
                let fixed = fixed_title(&others, combo);
                let svg = render_chart(&chart_rows, &base_rows, axis, dataset, &fixed)?;
                std::fs::write(&path, svg)
                    .with_context(|| format!("writing {}", path.display()))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// The final-iteration `cum_max` rows of one dataset.
fn final_cum_max<'a>(rows: &'a [AggregateRow], dataset: &str) -> Vec<&'a AggregateRow> {
    let last = rows
        .iter()
        .filter(|r| r.key.dataset == dataset && r.key.metric == "cum_max")
        .map(|r| r.key.iteration)
        .max()
        .unwrap_or(0);
    rows.iter()
        .filter(|r| {
            r.key.dataset == dataset && r.key.metric == "cum_max" && r.key.iteration == last
        })
        .collect()
}

fn axis_value(key: &GroupKey, axis: &str) -> String {
    match axis {
        "rho" => key.rho.clone(),
        "delta_mu" => key.delta_mu.clone(),
        "sigma1" => key.sigma1.clone(),
        "si" => key.si.clone(),
        "hr" => key.hr.clone(),
        "n_s" => key.n_s.to_string(),
        _ => unreachable!("unknown axis {axis}"),
    }
}

fn unique<T: Ord + Clone>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = it.collect();
    v.sort();
    v.dedup();
    v
}

fn fixed_suffix(others: &[&str], combo: &[String]) -> String {
    let mut s = String::new();
    for (a, v) in others.iter().zip(combo) {
        if !v.is_empty() {
            s.push_str(&format!("-{a}_{v}"));
        }
    }
    s
}

/// Human-readable version of the fixed axes for chart titles, e.g.
/// " (delta_mu=15, sigma1=0.25)".
fn fixed_title(others: &[&str], combo: &[String]) -> String {
    let parts: Vec<String> = others
        .iter()
        .zip(combo)
        .filter(|(_, v)| !v.is_empty())
        .map(|(a, v)| format!("{a}={v}"))
        .collect();
    if parts.is_empty() {
        String::new()
    } else {
        format!(" ({})", parts.join(", "))
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Fixed series palette; the reference series is always gray and dashed.
fn scheme_color(label: &str) -> &'static str {
    match label {
        "pgvae" => "#1f77b4",
        "rwr" => "#ff7f0e",
        "fw-rwr" => "#2ca02c",
        "cbas" => "#d62728",
        _ => "#9467bd",
    }
}

struct Series {
    label: String,
    color: &'static str,
    dashed: bool,
    /// (x tick index, mean, ci half-width)
    points: Vec<(usize, f64, Option<f64>)>,
}

/// Lays out and renders one chart. `axis` supplies x tick labels (numeric
/// values keep numeric order; interval labels sort lexically).
fn render_chart(
    rows: &[&AggregateRow],
    base_rows: &[&AggregateRow],
    axis: &str,
    dataset: &str,
    suffix: &str,
) -> Result<String> {
    let mut ticks = unique(rows.iter().map(|r| axis_value(&r.key, axis)));
    ticks.sort_by(|a, b| {
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => x.partial_cmp(&y).expect("finite tick values"),
            _ => a.cmp(b),
        }
    });
    let tick_index = |v: &str| ticks.iter().position(|t| t == v).expect("tick exists");

    let mut series: Vec<Series> = Vec::new();
    for scheme in unique(rows.iter().map(|r| r.key.scheme.clone())) {
        let mut points: Vec<(usize, f64, Option<f64>)> = rows
            .iter()
            .filter(|r| r.key.scheme == scheme)
            .map(|r| (tick_index(&axis_value(&r.key, axis)), r.mean, r.ci95))
            .collect();
        points.sort_by_key(|p| p.0);
        series.push(Series {
            color: scheme_color(&scheme),
            label: scheme,
            dashed: false,
            points,
        });
    }
    // Trainset reference: the base max varies along dataset axes but not
    // along n_s; reuse per-tick means when present.
    if !base_rows.is_empty() {
        let mut points: Vec<(usize, f64, Option<f64>)> = Vec::new();
        for (i, t) in ticks.iter().enumerate() {
            let vals: Vec<f64> = base_rows
                .iter()
                .filter(|r| &axis_value(&r.key, axis) == t)
                .map(|r| r.mean)
                .collect();
            if !vals.is_empty() {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                points.push((i, m, None));
            }
        }
        if !points.is_empty() {
            series.push(Series {
                label: "base".to_string(),
                color: "#7f7f7f",
                dashed: true,
                points,
            });
        }
    }

    // Y range over every drawn value including whisker ends.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &series {
        for &(_, m, ci) in &s.points {
            let half = ci.unwrap_or(0.0);
            lo = lo.min(m - half);
            hi = hi.max(m + half);
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        bail!("chart for {dataset} vs {axis} has no finite values");
    }
    if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (y_min, y_max) = (lo - pad, hi + pad);

    // Layout: fixed canvas, plot area inset for axes and legend.
    let (width, height) = (640.0, 440.0);
    let (left, right, top, bottom) = (70.0, 140.0, 44.0, 56.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let x_of = |i: usize| {
        if ticks.len() == 1 {
            left + plot_w / 2.0
        } else {
            left + plot_w * i as f64 / (ticks.len() - 1) as f64
        }
    };
    let y_of = |v: f64| top + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    let mut svg = String::with_capacity(8 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    let title = format!("{dataset}: cumulative max vs {axis}{suffix}");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        left + plot_w / 2.0,
        escape(&title)
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h
    ));
    // Y ticks: 5 evenly spaced.
    for k in 0..=4 {
        let v = y_min + (y_max - y_min) * k as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\n",
            left - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            left - 9.0,
            y + 4.0,
            format_tick(v)
        ));
    }
    // X ticks at every category.
    for (i, t) in ticks.iter().enumerate() {
        let x = x_of(i);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            top + plot_h,
            top + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            top + plot_h + 20.0,
            escape(t)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        left + plot_w / 2.0,
        height - 12.0,
        escape(axis)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">cumulative max</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    ));

    // Series: whiskers under lines under markers.
    for s in &series {
        for &(i, m, ci) in &s.points {
            if let Some(half) = ci {
                if half > 0.0 {
                    let x = x_of(i);
                    let (y1, y2) = (y_of(m - half), y_of(m + half));
                    svg.push_str(&format!(
                        "<line x1=\"{x}\" y1=\"{y1}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"{}\" stroke-width=\"1\"/>\n",
                        s.color
                    ));
                    for y in [y1, y2] {
                        svg.push_str(&format!(
                            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"1\"/>\n",
                            x - 3.0,
                            x + 3.0,
                            s.color
                        ));
                    }
                }
            }
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(i, m, _)| format!("{},{}", x_of(i), y_of(m)))
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{dash}/>\n",
            pts.join(" "),
            s.color
        ));
        for &(i, m, _) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3.5\" fill=\"{}\"/>\n",
                x_of(i),
                y_of(m),
                s.color
            ));
        }
    }

    // Legend.
    for (row, s) in series.iter().enumerate() {
        let y = top + 10.0 + row as f64 * 20.0;
        let x = left + plot_w + 16.0;
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"2\"{dash}/>\n",
            x + 24.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            x + 30.0,
            y + 4.0,
            escape(&s.label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (0.01..10_000.0).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Full report command: aggregate inputs, write the CSV to `out_path` (or
/// stdout), render charts when `svg_dir` is given.
pub fn cmd_report(
    inputs: &[PathBuf],
    out_path: Option<&Path>,
    svg_dir: Option<&Path>,
) -> Result<()> {
    let rows = aggregate(inputs)?;
    match out_path {
        Some(p) => {
            let file = std::fs::File::create(p)
                .with_context(|| format!("creating {}", p.display()))?;
            write_aggregate_csv(&rows, std::io::BufWriter::new(file))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_aggregate_csv(&rows, &mut lock)?;
            lock.flush()?;
        }
    }
    if let Some(dir) = svg_dir {
        let written = write_svg_plots(&rows, dir)?;
        log::info!("wrote {} chart(s) to {}", written.len(), dir.display());
    }
    Ok(())
}
