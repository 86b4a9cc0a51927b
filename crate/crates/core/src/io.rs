//! Dataset manifests, delimited-text matrices, the synthetic generator and
//! run reports.
//!
//! A manifest is a TOML file:
//!
//! ```toml
//! name = "HW"
//! n = 2000
//! labels = "labels.txt"      # optional, one integer per line
//! delimiter = ","            # optional, whitespace when absent
//!
//! [[views]]
//! path = "fourier.txt"       # n rows (samples) x dim columns
//! dim = 76
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusStep;
use crate::error::{Error, Result};
use crate::graph::ViewMatrix;
use crate::metrics::MetricsReport;
use crate::pipeline::{LabelSource, PipelineConfig, PipelineResult, StageTimings};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub name: String,
    pub views: Vec<ViewMatrix>,
    /// Ground truth, remapped to `0..c` in sorted order of the raw values.
    pub labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(name: impl Into<String>, views: Vec<ViewMatrix>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = views
            .first()
            .map(|v| v.n_samples())
            .ok_or_else(|| Error::InvalidInput("dataset has no views".into()))?;
        if let Some(v) = views.iter().position(|v| v.n_samples() != n) {
            return Err(Error::InvalidInput(format!(
                "view {v} has {} samples, view 0 has {n}",
                views[v].n_samples()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidInput(format!("{} labels for {n} samples", l.len())));
            }
        }
        Ok(Self {
            name: name.into(),
            views,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].n_samples()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.dim()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub path: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<String>,
    pub views: Vec<ViewEntry>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            field: toml_error_field(&text, &e),
            reason: e.message().trim().to_string(),
        })?;
        m.validate(path)?;
        Ok(m)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |field: &str, reason: String| Error::Manifest {
            path: path.to_path_buf(),
            field: field.to_string(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty".into()));
        }
        if self.n < 2 {
            return Err(bad("n", format!("need at least 2 samples, got {}", self.n)));
        }
        if self.views.is_empty() {
            return Err(bad("views", "at least one view is required".into()));
        }
        for (v, entry) in self.views.iter().enumerate() {
            if entry.dim == 0 {
                return Err(bad(&format!("views[{v}].dim"), "must be positive".into()));
            }
            if entry.path.trim().is_empty() {
                return Err(bad(&format!("views[{v}].path"), "must not be empty".into()));
            }
        }
        if let Some(d) = &self.delimiter {
            if d.chars().count() != 1 {
                return Err(bad("delimiter", format!("must be a single character, got {d:?}")));
            }
        }
        Ok(())
    }

    fn delimiter(&self) -> Option<char> {
        self.delimiter.as_ref().and_then(|d| d.chars().next())
    }
}

/// Best guess at the key a TOML error refers to: the named field for
/// missing/unknown-field errors, else the key on the line the error points at.
fn toml_error_field(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message();
    let quoted = msg.split('`').nth(1);
    if msg.starts_with("missing field") || msg.starts_with("unknown field") {
        if let Some(name) = quoted {
            return name.to_string();
        }
    }
    let line = e.span().and_then(|span| {
        let start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
        text[start..].lines().next()
    });
    match line {
        Some(l) if l.contains('=') => l.split('=').next().unwrap_or("").trim().to_string(),
        Some(l) if l.trim_start().starts_with('[') => l.trim().trim_matches(|c| c == '[' || c == ']').to_string(),
        _ => quoted.unwrap_or("<document>").to_string(),
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Reads a delimited numeric matrix, one sample per line. Returns rows.
pub fn read_matrix(path: &Path, delimiter: Option<char>) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (line_no, line) in content_lines(&text) {
        let cells: Vec<&str> = match delimiter {
            Some(d) => line.split(d).map(str::trim).collect(),
            None => line.split_whitespace().collect(),
        };
        let row = cells
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        row: line_no,
                        col: col + 1,
                        cell: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads one integer label per line and remaps the distinct values to
/// `0..c` in sorted order.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw = content_lines(&text)
        .map(|(line_no, l)| {
            l.parse::<i64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: line_no,
                col: 1,
                cell: l.to_string(),
            })
        })
        .collect::<Result<Vec<i64>>>()?;
    let mut values = raw.clone();
    values.sort_unstable();
    values.dedup();
    Ok(raw
        .iter()
        .map(|v| values.binary_search(v).expect("present"))
        .collect())
}

pub fn load_dataset(manifest_path: &Path) -> Result<MultiViewDataset> {
    let m = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut views = Vec::with_capacity(m.views.len());
    for (v, entry) in m.views.iter().enumerate() {
        let path = resolve(base, &entry.path);
        let rows = read_matrix(&path, m.delimiter())?;
        if rows.len() != m.n {
            return Err(Error::Shape {
                path,
                expected: format!("{} rows (n)", m.n),
                found: format!("{} rows", rows.len()),
            });
        }
        if let Some((r, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != entry.dim) {
            return Err(Error::Shape {
                path,
                expected: format!("{} columns (dim) on every row", entry.dim),
                found: format!("{} columns on data row {}", row.len(), r + 1),
            });
        }
        // samples become columns
        let data = DMatrix::from_fn(entry.dim, m.n, |f, s| rows[s][f]);
        views.push(ViewMatrix::new(data, v)?);
    }
    let labels = match &m.labels {
        Some(p) => {
            let path = resolve(base, p);
            let l = read_labels(&path)?;
            if l.len() != m.n {
                return Err(Error::Shape {
                    path,
                    expected: format!("{} labels (n)", m.n),
                    found: format!("{} labels", l.len()),
                });
            }
            Some(l)
        }
        None => None,
    };
    MultiViewDataset::new(m.name, views, labels)
}

/// Writes `manifest.toml`, one `view_<v>.txt` per view and `labels.txt`
/// (when present) into `dir`. Returns the manifest path.
pub fn save_dataset(ds: &MultiViewDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = ds.n_samples();
    let mut entries = Vec::new();
    for (v, view) in ds.views.iter().enumerate() {
        let name = format!("view_{v}.txt");
        let mut out = String::new();
        for s in 0..n {
            let row: Vec<String> = view.data().column(s).iter().map(|x| x.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let path = dir.join(&name);
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        entries.push(ViewEntry {
            path: name,
            dim: view.dim(),
        });
    }
    let labels = match &ds.labels {
        Some(l) => {
            write_labels(&dir.join("labels.txt"), l)?;
            Some("labels.txt".to_string())
        }
        None => None,
    };
    let manifest = DatasetManifest {
        name: ds.name.clone(),
        n,
        labels,
        delimiter: Some(",".into()),
        views: entries,
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Settings for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_cluster: usize,
    pub clusters: usize,
    pub views: usize,
    /// Distance of each latent cluster center from the origin.
    pub separation: f64,
    /// Per-view additive noise standard deviation; the last entry repeats
    /// when there are more views than entries.
    pub noise: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_cluster: 50,
            clusters: 3,
            views: 3,
            separation: 6.0,
            noise: vec![0.5],
            seed: 7,
        }
    }
}

/// Gaussian clusters in a `clusters`-dimensional latent space (unit
/// within-cluster spread, centers on scaled coordinate axes). View `v` is an
/// independent random linear map to `4 + 2v` features plus that view's noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultiViewDataset> {
    if spec.n_per_cluster == 0 || spec.clusters == 0 || spec.views == 0 {
        return Err(Error::InvalidInput("synthetic sizes must be positive".into()));
    }
    if spec.n_per_cluster * spec.clusters < 2 {
        return Err(Error::InvalidInput("synthetic data needs at least 2 samples".into()));
    }
    if spec.noise.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput("noise levels must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let c = spec.clusters;
    let latent_dim = c.max(2);
    let n = spec.n_per_cluster * c;

    let labels: Vec<usize> = (0..n).map(|i| i / spec.n_per_cluster).collect();
    let latent = DMatrix::from_fn(latent_dim, n, |r, s| {
        let center = if r == labels[s] { spec.separation } else { 0.0 };
        center + std.sample(&mut rng)
    });

    let mut views = Vec::with_capacity(spec.views);
    for v in 0..spec.views {
        let dim = 4 + 2 * v;
        let scale = 1.0 / (latent_dim as f64).sqrt();
        let map = DMatrix::from_fn(dim, latent_dim, |_, _| std.sample(&mut rng) * scale);
        let noise = spec
            .noise
            .get(v)
            .or(spec.noise.last())
            .copied()
            .unwrap_or(0.0);
        let mut x = &map * &latent;
        if noise > 0.0 {
            x.iter_mut().for_each(|e| *e += noise * std.sample(&mut rng));
        }
        views.push(ViewMatrix::new(x, v)?);
    }
    MultiViewDataset::new(format!("synthetic-seed{}", spec.seed), views, Some(labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub embedding_converged: bool,
    pub embedding_iterations: usize,
    pub consensus_converged: bool,
    pub consensus_sweeps: usize,
    pub consensus_components: usize,
    pub labels: LabelSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTraces {
    pub embedding: Vec<f64>,
    pub consensus: Vec<ConsensusStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub n: usize,
    pub view_dims: Vec<usize>,
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub convergence: ConvergenceSummary,
    pub traces: ObjectiveTraces,
    /// Seconds per stage, rounded to milliseconds.
    pub timing: StageTimings,
    pub labels_path: String,
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

impl RunReport {
    pub fn new(
        data: &MultiViewDataset,
        cfg: &PipelineConfig,
        result: &PipelineResult,
        labels_path: impl Into<String>,
    ) -> Self {
        let t = result.timings;
        Self {
            dataset: data.name.clone(),
            n: data.n_samples(),
            view_dims: data.view_dims(),
            config: cfg.clone(),
            metrics: result.metrics,
            convergence: ConvergenceSummary {
                embedding_converged: result.step2_converged,
                embedding_iterations: result.step2_trace.len(),
                consensus_converged: result.consensus_converged,
                consensus_sweeps: result.consensus_trace.len(),
                consensus_components: result.consensus_components,
                labels: result.label_source,
            },
            traces: ObjectiveTraces {
                embedding: result.step2_trace.clone(),
                consensus: result.consensus_trace.clone(),
            },
            timing: StageTimings {
                graphs: round3(t.graphs),
                normalize: round3(t.normalize),
                embedding: round3(t.embedding),
                consensus: round3(t.consensus),
                labels: round3(t.labels),
            },
            labels_path: labels_path.into(),
        }
    }

    /// Aligned plain-text rendering; metrics rounded to four decimals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset   {} (n = {}, views = {:?})", self.dataset, self.n, self.view_dims);
        let _ = writeln!(
            out,
            "config    k = {}, c = {}, norm = {}, gamma = {}, rho = {}, lambda = {}, seed = {}",
            self.config.k,
            self.config.clusters,
            self.config.norm,
            self.config.gamma.get(),
            self.config.rho,
            self.config.lambda_for(self.n),
            self.config.seed
        );
        if let Some(m) = &self.metrics {
            let _ = writeln!(out);
            out.push_str(&metrics_table(&[(self.config.norm.to_string(), Some(*m))]));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "timing (s)");
        for (name, v) in [
            ("graphs", self.timing.graphs),
            ("normalize", self.timing.normalize),
            ("embedding", self.timing.embedding),
            ("consensus", self.timing.consensus),
            ("labels", self.timing.labels),
            ("total", self.timing.total()),
        ] {
            let _ = writeln!(out, "  {name:<10} {v:>9.3}");
        }
        let _ = writeln!(
            out,
            "\nconverged embedding = {} ({} it), consensus = {} ({} sweeps, {} components)",
            self.convergence.embedding_converged,
            self.convergence.embedding_iterations,
            self.convergence.consensus_converged,
            self.convergence.consensus_sweeps,
            self.convergence.consensus_components
        );
        let _ = writeln!(out, "labels    {}", self.labels_path);
        out
    }
}

/// Fixed-column metric table, one row per entry.
pub fn metrics_table(rows: &[(String, Option<MetricsReport>)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}", "Method");
    for c in MetricsReport::COLUMNS {
        let _ = write!(out, " {c:>9}");
    }
    out.push('\n');
    for (label, m) in rows {
        let _ = write!(out, "{label:<width$}");
        match m {
            Some(m) => {
                for v in m.values() {
                    let _ = write!(out, " {v:>9.4}");
                }
            }
            None => {
                for _ in 0..7 {
                    let _ = write!(out, " {:>9}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `report.json` (full precision) and `report.txt` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    let txt = dir.join("report.txt");
    fs::write(&json, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&json, e))?;
    fs::write(&txt, report.to_table()).map_err(|e| Error::io(&txt, e))?;
    Ok((json, txt))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One configuration of a parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub norm: String,
    pub gamma: f64,
    pub rho: f64,
    pub lambda: f64,
    #[serde(default)]
    pub metrics: Option<MetricsReport>,
    pub embedding_iterations: usize,
    pub consensus_converged: bool,
    pub seconds: f64,
}

impl BenchRow {
    pub fn label(&self) -> String {
        format!("{} g={} r={}", self.norm, self.gamma, self.rho)
    }
}

/// Writes `bench.json` and `bench.txt` into `dir`.
pub fn emit_bench(rows: &[BenchRow], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("bench.json");
    let txt = dir.join("bench.txt");
    fs::write(&json, serde_json::to_string_pretty(rows)?).map_err(|e| Error::io(&json, e))?;
    let table_rows: Vec<(String, Option<MetricsReport>)> = rows.iter().map(|r| (r.label(), r.metrics)).collect();
    let mut text = metrics_table(&table_rows);
    let _ = writeln!(text);
    for r in rows {
        let _ = writeln!(text, "{:<28} {:>9.3} s", r.label(), r.seconds);
    }
    fs::write(&txt, text).map_err(|e| Error::io(&txt, e))?;
    Ok((json, txt))
}
