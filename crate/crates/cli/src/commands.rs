use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use placefm_core::evaluation::{format_sweep_table, run_sweep, write_sweep_csv, RatioOverride, SweepConfig};
use placefm_core::fusion::{spatial_join_with_report, write_fused, JoinConfig};
use placefm_core::ingest::{load_pois, write_pois_csv, write_pois_jsonl, PoiFormat, PoiRecord};
use placefm_core::pipeline::{self, create_file, write_json, PipelineConfig};
use placefm_core::synth::{generate, SynthConfig};
use placefm_core::{Algorithm, HopWeights};

use crate::{EmbedArgs, FuseArgs, GraphDumpArgs, SweepArgs, SynthArgs};

fn parse_format(s: &str) -> Result<PoiFormat> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(PoiFormat::Csv),
        "jsonl" | "json" => Ok(PoiFormat::Jsonl),
        other => bail!("unknown POI format `{other}` (expected csv or jsonl)"),
    }
}

fn load(path: &Path, format: Option<PoiFormat>) -> Result<Vec<PoiRecord>> {
    let format = format.unwrap_or_else(|| PoiFormat::from_path(path));
    let records = load_pois(path, format)?;
    eprintln!("loaded {} POIs from {}", records.len(), path.display());
    Ok(records)
}

pub fn fuse(a: FuseArgs) -> Result<()> {
    let primary = load(&a.primary, None)?;
    let secondary = load(&a.secondary, None)?;
    let cfg = JoinConfig {
        radius_m: a.radius_m,
        min_similarity: a.min_similarity,
        inclusive: a.inclusive,
    };
    let (fused, report) = spatial_join_with_report(&primary, &secondary, &cfg)?;

    let mut w = create_file(&a.out)?;
    write_fused(&mut w, &fused, PoiFormat::from_path(&a.out))?;
    w.flush().with_context(|| format!("writing {}", a.out.display()))?;
    let report_path = a.report.unwrap_or_else(|| a.out.with_extension("report.json"));
    write_json(&report_path, &report)?;

    println!(
        "matched {}/{} primary POIs (rate {:.4}), {} candidates within {} m",
        report.matched, report.primary_count, report.match_rate, report.candidates_within_radius, cfg.radius_m
    );
    if let Some(d) = report.mean_distance_m {
        println!("mean match distance {d:.2} m");
    }
    println!("wrote {} and {}", a.out.display(), report_path.display());
    Ok(())
}

fn embed_config(a: EmbedArgs) -> Result<PipelineConfig> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_json_file(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = a.input {
        cfg.input = Some(v);
    }
    if let Some(v) = a.format {
        cfg.format = Some(parse_format(&v)?);
    }
    if let Some(v) = a.aux_features {
        cfg.aux_features = Some(v);
    }
    if let Some(v) = a.knn_k {
        cfg.knn_k = v;
    }
    if let Some(v) = a.hops {
        cfg.hops = v;
        if a.alphas.is_none() {
            cfg.alphas = None;
        }
    }
    if let Some(v) = a.alphas {
        cfg.alphas = Some(v);
    }
    if let Some(v) = a.granularity {
        cfg.granularity = v;
    }
    if let Some(v) = a.r {
        cfg.r = v;
    }
    if let Some(v) = a.algorithm {
        cfg.algorithm = v.parse()?;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.category_levels {
        cfg.category_levels = v;
    }
    if let Some(v) = a.out_dir {
        cfg.output_dir = v;
    }
    if a.dump_features {
        cfg.dump_features = true;
    }
    Ok(cfg)
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let cfg = embed_config(a)?;
    let input = cfg
        .input
        .clone()
        .context("no input file: pass --input or set `input` in the config")?;
    let records = load(&input, cfg.format)?;
    let run = pipeline::embed(&records, &cfg)?;
    let path = pipeline::write_embed_outputs(&run, &records, &cfg)?;
    let m = &run.manifest;
    println!(
        "{} POIs, {} edges, {} {} classes -> {} places (total WCSS {:.6})",
        m.n, m.edges, m.classes, m.granularity, m.places_emitted, m.total_wcss
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn default_knn_ks() -> Vec<usize> {
    vec![2, 5, 10]
}
fn default_granularities() -> Vec<String> {
    vec!["zip".into(), "city".into(), "state".into()]
}
fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::KMeans, Algorithm::KMedoids]
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_ratio() -> f64 {
    pipeline::DEFAULT_RATIO
}
fn default_hops() -> usize {
    placefm_core::propagation::DEFAULT_HOPS
}
fn default_levels() -> usize {
    pipeline::DEFAULT_CATEGORY_LEVELS
}
fn default_sweep_dir() -> PathBuf {
    PathBuf::from("sweep_out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    #[serde(default)]
    input: Option<PathBuf>,
    #[serde(default)]
    format: Option<PoiFormat>,
    #[serde(default = "default_knn_ks")]
    knn_ks: Vec<usize>,
    #[serde(default = "default_granularities")]
    granularities: Vec<String>,
    #[serde(default = "default_algorithms")]
    algorithms: Vec<Algorithm>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_ratio")]
    r: f64,
    #[serde(default = "default_hops")]
    hops: usize,
    #[serde(default)]
    alphas: Option<Vec<f64>>,
    #[serde(default = "default_levels")]
    category_levels: usize,
    #[serde(default)]
    overrides: Vec<RatioOverride>,
    #[serde(default = "default_sweep_dir")]
    output_dir: PathBuf,
}

fn sweep_config(a: SweepArgs) -> Result<SweepFile> {
    let mut cfg: SweepFile = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => serde_json::from_str("{}")?,
    };
    if let Some(v) = a.input {
        cfg.input = Some(v);
    }
    if let Some(v) = a.format {
        cfg.format = Some(parse_format(&v)?);
    }
    if let Some(v) = a.knn_ks {
        cfg.knn_ks = v;
    }
    if let Some(v) = a.granularities {
        cfg.granularities = v;
    }
    if let Some(v) = a.algorithms {
        cfg.algorithms = v.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    }
    if let Some(v) = a.seeds {
        cfg.seeds = v;
    }
    if let Some(n) = a.num_seeds {
        cfg.seeds = (0..n).collect();
    }
    if let Some(v) = a.r {
        cfg.r = v;
    }
    if let Some(v) = a.hops {
        cfg.hops = v;
        if a.alphas.is_none() {
            cfg.alphas = None;
        }
    }
    if let Some(v) = a.alphas {
        cfg.alphas = Some(v);
    }
    if let Some(v) = a.category_levels {
        cfg.category_levels = v;
    }
    if let Some(v) = a.out_dir {
        cfg.output_dir = v;
    }
    Ok(cfg)
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let mut file = sweep_config(a)?;
    let input = file
        .input
        .clone()
        .context("no input file: pass --input or set `input` in the config")?;
    let alphas = match &file.alphas {
        None => HopWeights::uniform(file.hops),
        Some(v) if v.len() == file.hops + 1 => HopWeights::new(v.clone())?,
        Some(v) => bail!("{} alphas given for {} hops", v.len(), file.hops),
    };
    file.alphas = Some(alphas.alphas().to_vec());
    let records = load(&input, file.format)?;
    let config = SweepConfig {
        knn_ks: file.knn_ks.clone(),
        granularities: file.granularities.clone(),
        algorithms: file.algorithms.clone(),
        seeds: file.seeds.clone(),
        r: file.r,
        alphas,
        category_levels: file.category_levels,
        overrides: file.overrides.clone(),
    };

    let t = Instant::now();
    let result = run_sweep(&records, &config)?;
    let elapsed = t.elapsed().as_secs_f64();

    let dir = &file.output_dir;
    let csv_path = dir.join("sweep.csv");
    let mut w = create_file(&csv_path)?;
    write_sweep_csv(&mut w, &result)?;
    w.flush()?;
    let table = format_sweep_table(&result);
    let mut w = create_file(&dir.join("sweep_table.txt"))?;
    w.write_all(table.as_bytes())?;
    w.flush()?;
    write_json(&dir.join("sweep.json"), &result)?;
    write_json(&dir.join("resolved_sweep_config.json"), &file)?;
    write_json(
        &dir.join("sweep_timings.json"),
        &serde_json::json!({ "total_s": elapsed }),
    )?;

    print!("{table}");
    let failed = result.failed().count();
    println!(
        "{} cells ({} failed) in {:.1}s; wrote {}",
        result.cells.len(),
        failed,
        elapsed,
        csv_path.display()
    );
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let records = generate(&SynthConfig::new(
        a.n,
        a.states,
        a.cities_per_state,
        a.blobs_per_city,
        a.seed,
    ))?;
    let mut w = create_file(&a.out)?;
    match PoiFormat::from_path(&a.out) {
        PoiFormat::Csv => write_pois_csv(&mut w, &records, &[])?,
        PoiFormat::Jsonl => write_pois_jsonl(&mut w, &records)?,
    }
    w.flush()?;
    println!("wrote {} POIs to {}", records.len(), a.out.display());
    Ok(())
}

pub fn graph_dump(a: GraphDumpArgs) -> Result<()> {
    let format = a.format.as_deref().map(parse_format).transpose()?;
    let records = load(&a.input, format)?;
    let edges = pipeline::dump_graph(&records, a.k, &a.out)?;
    println!("wrote {edges} edges to {}", a.out.display());
    Ok(())
}
