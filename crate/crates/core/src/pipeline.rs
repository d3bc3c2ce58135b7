//! End-to-end embedding run: POIs → k-NN graph → propagated features →
//! per-class condensation → place embedding files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::condense::{condense, Algorithm, CondensedGraph};
use crate::error::{Error, Result};
use crate::evaluation::{category_features, total_wcss};
use crate::graph::{build_knn_graph, normalize, write_edge_list};
use crate::ingest::{concat_aux_features, labeling_for, load_aux_features, PoiFormat, PoiRecord};
use crate::matrix::FeatureMatrix;
use crate::propagation::{propagate, HopWeights, DEFAULT_HOPS};

pub const DEFAULT_KNN_K: usize = 5;
pub const DEFAULT_RATIO: f64 = 0.01;
pub const DEFAULT_CATEGORY_LEVELS: usize = 3;

fn default_knn_k() -> usize {
    DEFAULT_KNN_K
}
fn default_hops() -> usize {
    DEFAULT_HOPS
}
fn default_granularity() -> String {
    "state".into()
}
fn default_ratio() -> f64 {
    DEFAULT_RATIO
}
fn default_algorithm() -> Algorithm {
    Algorithm::KMeans
}
fn default_levels() -> usize {
    DEFAULT_CATEGORY_LEVELS
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Settings of an embedding run. Missing keys take their defaults when read
/// from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<PoiFormat>,
    #[serde(default)]
    pub aux_features: Option<PathBuf>,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    #[serde(default = "default_hops")]
    pub hops: usize,
    /// `None` means uniform `1 / (hops + 1)`.
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default = "default_granularity")]
    pub granularity: String,
    #[serde(default = "default_ratio")]
    pub r: f64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub category_levels: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dump_features: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn hop_weights(&self) -> Result<HopWeights> {
        match &self.alphas {
            None => Ok(HopWeights::uniform(self.hops)),
            Some(a) if a.len() == self.hops + 1 => HopWeights::new(a.clone()),
            Some(a) => Err(Error::InvalidInput(format!(
                "{} alphas given for {} hops (need {})",
                a.len(),
                self.hops,
                self.hops + 1
            ))),
        }
    }

    /// The same configuration with every derived value spelled out.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        out.alphas = Some(self.hop_weights()?.alphas().to_vec());
        if let (None, Some(input)) = (&out.format, &out.input) {
            out.format = Some(PoiFormat::from_path(input));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub features_s: f64,
    pub graph_s: f64,
    pub propagation_s: f64,
    pub condensation_s: f64,
}

/// Deterministic counts of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub feature_dim: usize,
    pub edges: usize,
    pub granularity: String,
    pub classes: usize,
    pub n_prime: usize,
    pub places_emitted: usize,
    pub total_wcss: f64,
}

pub struct EmbedRun {
    pub features: FeatureMatrix,
    pub condensed: CondensedGraph,
    pub manifest: Manifest,
    pub timings: StageTimings,
}

/// Runs the pipeline over an in-memory dataset (ascending-id order).
pub fn embed(records: &[PoiRecord], cfg: &PipelineConfig) -> Result<EmbedRun> {
    let weights = cfg.hop_weights()?;
    // Fail on a missing granularity before the expensive stages.
    let labeling = labeling_for(records, &cfg.granularity)?;

    let t = Instant::now();
    let mut x = category_features(records, cfg.category_levels)?;
    if let Some(aux) = &cfg.aux_features {
        x = concat_aux_features(&x, &load_aux_features(aux, records)?)?;
    }
    let features_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let graph = build_knn_graph(records, cfg.knn_k)?;
    let graph_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let features = propagate(&normalize(&graph), &x, &weights)?;
    let propagation_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let condensed = condense(&features, &labeling, &ids, cfg.r, cfg.algorithm, cfg.seed)?;
    let condensation_s = t.elapsed().as_secs_f64();

    let manifest = Manifest {
        n: records.len(),
        feature_dim: features.d(),
        edges: graph.num_edges(),
        granularity: cfg.granularity.clone(),
        classes: labeling.num_classes(),
        n_prime: condensed.plan.n_prime,
        places_emitted: condensed.places.len(),
        total_wcss: total_wcss(&condensed, &features),
    };
    Ok(EmbedRun {
        features,
        condensed,
        manifest,
        timings: StageTimings {
            features_s,
            graph_s,
            propagation_s,
            condensation_s,
        },
    })
}

#[derive(Serialize)]
struct EmbeddingLine<'a> {
    place_id: &'a str,
    granularity: &'a str,
    class: &'a str,
    centroid: &'a [f64],
    member_count: usize,
    member_ids: &'a [String],
}

pub fn write_embeddings_jsonl<W: Write>(mut w: W, condensed: &CondensedGraph) -> Result<()> {
    for p in &condensed.places {
        let line = EmbeddingLine {
            place_id: &p.place_id,
            granularity: &condensed.granularity,
            class: &condensed.classes[p.class_index],
            centroid: &p.centroid,
            member_count: p.member_count(),
            member_ids: &p.member_ids,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io("<embeddings>", e))?;
    }
    Ok(())
}

/// `place_id,granularity,class,member_count,f0..f{d-1}`.
pub fn write_embeddings_csv<W: Write>(w: W, condensed: &CondensedGraph) -> Result<()> {
    let d = condensed.places.first().map_or(0, |p| p.centroid.len());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "place_id".to_string(),
        "granularity".into(),
        "class".into(),
        "member_count".into(),
    ];
    header.extend((0..d).map(|j| format!("f{j}")));
    wtr.write_record(&header)?;
    for p in &condensed.places {
        let mut row = vec![
            p.place_id.clone(),
            condensed.granularity.clone(),
            condensed.classes[p.class_index].clone(),
            p.member_count().to_string(),
        ];
        row.extend(p.centroid.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<embeddings csv>", e))?;
    Ok(())
}

/// `id,f0..f{d-1}`, one row per node.
pub fn write_features_csv<W: Write>(w: W, features: &FeatureMatrix, ids: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend((0..features.d()).map(|j| format!("f{j}")));
    wtr.write_record(&header)?;
    for (id, row) in ids.iter().zip(features.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<features csv>", e))?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// File names written by [`write_embed_outputs`].
pub fn embeddings_path(dir: &Path, granularity: &str) -> PathBuf {
    dir.join(format!("places_{granularity}.jsonl"))
}

/// Writes embeddings (JSONL + CSV), the resolved config, the manifest and the
/// stage timings into `cfg.output_dir`. Returns the embeddings JSONL path.
pub fn write_embed_outputs(run: &EmbedRun, records: &[PoiRecord], cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = &cfg.output_dir;
    let g = &cfg.granularity;
    let jsonl = embeddings_path(dir, g);
    let mut w = create_file(&jsonl)?;
    write_embeddings_jsonl(&mut w, &run.condensed)?;
    w.flush().map_err(|e| Error::io(&jsonl, e))?;

    let csv_path = dir.join(format!("places_{g}.csv"));
    write_embeddings_csv(create_file(&csv_path)?, &run.condensed)?;

    if cfg.dump_features {
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        write_features_csv(create_file(&dir.join("features.csv"))?, &run.features, &ids)?;
    }
    write_json(&dir.join(format!("resolved_config_{g}.json")), &cfg.resolved()?)?;
    write_json(&dir.join(format!("manifest_{g}.json")), &run.manifest)?;
    write_json(&dir.join(format!("timings_{g}.json")), &run.timings)?;
    Ok(jsonl)
}

pub fn dump_graph(records: &[PoiRecord], k: usize, out: &Path) -> Result<usize> {
    let g = build_knn_graph(records, k)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let mut w = create_file(out)?;
    write_edge_list(&mut w, &g, &ids)?;
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(g.num_edges())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.knn_k, 5);
        assert_eq!(c.hops, 2);
        assert_eq!(c.algorithm, Algorithm::KMeans);
        assert_eq!(c.hop_weights().unwrap(), HopWeights::uniform(2));
        let r = c.resolved().unwrap();
        assert_eq!(r.alphas.as_deref(), Some(&[1.0 / 3.0; 3][..]));
    }

    #[test]
    fn alpha_count_must_match_hops() {
        let c: PipelineConfig = serde_json::from_str(r#"{"hops": 1, "alphas": [1, 0, 0]}"#).unwrap();
        assert!(c.hop_weights().is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"knn": 3}"#).is_err());
    }
}
