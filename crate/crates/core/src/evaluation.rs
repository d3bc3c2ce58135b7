//! WCSS metrics and the parameter sweep over k-NN size, granularity and
//! clustering algorithm.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::condense::{condense, Algorithm, CondensedGraph};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, normalize};
use crate::ingest::{build_vocabulary, encode_features, labeling_for, PoiRecord};
use crate::matrix::{squared_euclidean, FeatureMatrix};
use crate::propagation::{propagate, HopWeights};

/// `Σ_i ‖x_i − centers[assignment[i]]‖²`.
pub fn wcss(points: &FeatureMatrix, centers: &FeatureMatrix, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != points.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} points",
            assignment.len(),
            points.n()
        )));
    }
    if centers.d() != points.d() {
        return Err(Error::DimensionMismatch(format!(
            "centers have {} columns, points have {}",
            centers.d(),
            points.d()
        )));
    }
    let mut total = 0.0;
    for (i, (x, &a)) in points.rows().zip(assignment).enumerate() {
        if a >= centers.n() {
            return Err(Error::InvalidInput(format!(
                "point {i} assigned to center {a}, only {} centers",
                centers.n()
            )));
        }
        total += squared_euclidean(x, centers.row(a));
    }
    Ok(total)
}

/// WCSS of every original node against the centroid of its place.
pub fn total_wcss(condensed: &CondensedGraph, features: &FeatureMatrix) -> f64 {
    condensed
        .places
        .iter()
        .map(|p| {
            p.members
                .iter()
                .map(|&i| squared_euclidean(features.row(i), &p.centroid))
                .sum::<f64>()
        })
        .sum()
}

/// Replaces the reduction ratio for cells matching every given field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioOverride {
    #[serde(default)]
    pub knn_k: Option<usize>,
    #[serde(default)]
    pub granularity: Option<String>,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub knn_ks: Vec<usize>,
    pub granularities: Vec<String>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub r: f64,
    pub alphas: HopWeights,
    pub category_levels: usize,
    #[serde(default)]
    pub overrides: Vec<RatioOverride>,
}

impl SweepConfig {
    fn ratio_for(&self, knn_k: usize, granularity: &str, algorithm: Algorithm) -> f64 {
        self.overrides
            .iter()
            .rev()
            .find(|o| {
                o.knn_k.is_none_or(|k| k == knn_k)
                    && o.granularity.as_deref().is_none_or(|g| g == granularity)
                    && o.algorithm.is_none_or(|a| a == algorithm)
            })
            .map_or(self.r, |o| o.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub values: Vec<f64>,
}

impl CellStats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        CellStats {
            mean,
            std: var.sqrt(),
            values,
        }
    }

    pub fn seeds(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub knn_k: usize,
    pub granularity: String,
    pub algorithm: Algorithm,
    pub r: f64,
    pub outcome: std::result::Result<CellStats, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, knn_k: usize, granularity: &str, algorithm: Algorithm) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.knn_k == knn_k && c.granularity == granularity && c.algorithm == algorithm)
    }

    /// The `knn_k` with the lowest mean WCSS for a (granularity, algorithm)
    /// column; ties go to the smaller k.
    pub fn best_knn_k(&self, granularity: &str, algorithm: Algorithm) -> Option<usize> {
        self.cells
            .iter()
            .filter(|c| c.granularity == granularity && c.algorithm == algorithm)
            .filter_map(|c| c.outcome.as_ref().ok().map(|s| (c.knn_k, s.mean)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(k, _)| k)
    }

    /// Mean of the cell means and of the cell stds down one column.
    pub fn column_average(&self, granularity: &str, algorithm: Algorithm) -> Option<(f64, f64)> {
        let stats: Vec<&CellStats> = self
            .cells
            .iter()
            .filter(|c| c.granularity == granularity && c.algorithm == algorithm)
            .filter_map(|c| c.outcome.as_ref().ok())
            .collect();
        if stats.is_empty() {
            return None;
        }
        let n = stats.len() as f64;
        Some((
            stats.iter().map(|s| s.mean).sum::<f64>() / n,
            stats.iter().map(|s| s.std).sum::<f64>() / n,
        ))
    }

    pub fn failed(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }
}

/// One-hot category features for the dataset.
pub fn category_features(records: &[PoiRecord], levels: usize) -> Result<FeatureMatrix> {
    let vocab = build_vocabulary(records, levels)?;
    encode_features(records, &vocab)
}

/// Runs graph → propagation → condensation → WCSS for every cell and seed.
/// A failing cell is recorded and the sweep moves on.
pub fn run_sweep(records: &[PoiRecord], config: &SweepConfig) -> Result<SweepResult> {
    if config.knn_ks.is_empty()
        || config.granularities.is_empty()
        || config.algorithms.is_empty()
        || config.seeds.is_empty()
    {
        return Err(Error::InvalidInput("sweep grid lists must be non-empty".into()));
    }
    let x = category_features(records, config.category_levels)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let mut cells = Vec::new();

    for &k in &config.knn_ks {
        let propagated = build_knn_graph(records, k)
            .and_then(|g| propagate(&normalize(&g), &x, &config.alphas))
            .map_err(|e| e.to_string());
        for granularity in &config.granularities {
            let labeling = labeling_for(records, granularity).map_err(|e| e.to_string());
            for &algorithm in &config.algorithms {
                let r = config.ratio_for(k, granularity, algorithm);
                let outcome = match (&propagated, &labeling) {
                    (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                    (Ok(f), Ok(l)) => config
                        .seeds
                        .iter()
                        .map(|&seed| condense(f, l, &ids, r, algorithm, seed).map(|c| total_wcss(&c, f)))
                        .collect::<Result<Vec<f64>>>()
                        .map(CellStats::from_values)
                        .map_err(|e| e.to_string()),
                };
                cells.push(SweepCell {
                    knn_k: k,
                    granularity: granularity.clone(),
                    algorithm,
                    r,
                    outcome,
                });
            }
        }
    }
    Ok(SweepResult {
        config: config.clone(),
        cells,
    })
}

/// `knn_k,granularity,algorithm,mean_wcss,std_wcss,seeds`; failed cells have
/// empty statistics and zero seeds.
pub fn write_sweep_csv<W: Write>(w: W, result: &SweepResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["knn_k", "granularity", "algorithm", "mean_wcss", "std_wcss", "seeds"])?;
    for c in &result.cells {
        let (mean, std, seeds) = match &c.outcome {
            Ok(s) => (s.mean.to_string(), s.std.to_string(), s.seeds()),
            Err(_) => (String::new(), String::new(), 0),
        };
        wtr.write_record([
            c.knn_k.to_string(),
            c.granularity.clone(),
            c.algorithm.to_string(),
            mean,
            std,
            seeds.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}

fn algorithm_label(a: Algorithm) -> &'static str {
    match a {
        Algorithm::KMeans => "K-Means",
        Algorithm::KMedoids => "K-Medoids",
    }
}

/// Text table: one row per k-NN size, one column per (granularity,
/// algorithm), then an `Average` row (mean of means ± mean of stds). `*`
/// marks the algorithm with the lowest average in each granularity.
pub fn format_sweep_table(result: &SweepResult) -> String {
    let cfg = &result.config;
    let cols: Vec<(&str, Algorithm)> = cfg
        .granularities
        .iter()
        .flat_map(|g| cfg.algorithms.iter().map(move |&a| (g.as_str(), a)))
        .collect();
    let w = 22;
    let mut out = String::new();

    let _ = write!(out, "{:<10}", "k-NN");
    for g in &cfg.granularities {
        let span = w * cfg.algorithms.len();
        let _ = write!(out, "{:^span$}", g);
    }
    out.push('\n');
    let _ = write!(out, "{:<10}", "");
    for &(_, a) in &cols {
        let _ = write!(out, "{:^w$}", algorithm_label(a));
    }
    out.push('\n');
    out.push_str(&"-".repeat(10 + w * cols.len()));
    out.push('\n');

    for &k in &cfg.knn_ks {
        let _ = write!(out, "{:<10}", format!("k={k}"));
        for &(g, a) in &cols {
            let cell = match result.cell(k, g, a).map(|c| &c.outcome) {
                Some(Ok(s)) => format!("{:.4}±{:.4}", s.mean, s.std),
                _ => "failed".to_string(),
            };
            let _ = write!(out, "{:^w$}", cell);
        }
        out.push('\n');
    }
    out.push_str(&"-".repeat(10 + w * cols.len()));
    out.push('\n');

    let _ = write!(out, "{:<10}", "Average");
    for &(g, a) in &cols {
        let best = cfg
            .algorithms
            .iter()
            .filter_map(|&b| result.column_average(g, b).map(|m| (b, m.0)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|x| x.0);
        let cell = match result.column_average(g, a) {
            Some((m, s)) => {
                let mark = if best == Some(a) && cfg.algorithms.len() > 1 {
                    "*"
                } else {
                    ""
                };
                format!("{mark}{m:.4}±{s:.4}")
            }
            None => "failed".to_string(),
        };
        let _ = write!(out, "{:^w$}", cell);
    }
    out.push('\n');

    let _ = write!(out, "{:<10}", "best k");
    for &(g, a) in &cols {
        let cell = result
            .best_knn_k(g, a)
            .map_or_else(|| "-".to_string(), |k| format!("k={k}"));
        let _ = write!(out, "{:^w$}", cell);
    }
    out.push('\n');

    for c in result.failed() {
        let _ = writeln!(
            out,
            "failed: k={} {} {}: {}",
            c.knn_k,
            c.granularity,
            c.algorithm,
            c.outcome.as_ref().err().map(String::as_str).unwrap_or("")
        );
    }
    out
}
