//! Python bindings for the placefm pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use placefm_core::fusion::spatial_join_with_report;
use placefm_core::graph::build_knn_graph_from_points;
use placefm_core::ingest::PoiFormat;
use placefm_core::pipeline::{self, PipelineConfig};
use placefm_core::{Algorithm, Clustering, FeatureMatrix, GeoPoint, HopWeights, JoinConfig, PoiRecord};

fn to_py(e: placefm_core::Error) -> PyErr {
    match e {
        placefm_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(&rows).map_err(to_py)
}

fn rows(m: &FeatureMatrix) -> Vec<Vec<f64>> {
    m.rows().map(<[f64]>::to_vec).collect()
}

fn points(coords: &[(f64, f64)]) -> PyResult<Vec<GeoPoint>> {
    coords
        .iter()
        .map(|&(lon, lat)| GeoPoint::new(lon, lat).map_err(to_py))
        .collect()
}

/// A POI record.
#[pyclass(name = "Poi", module = "placefm", from_py_object)]
#[derive(Clone)]
pub struct PyPoi {
    inner: PoiRecord,
}

#[pymethods]
impl PyPoi {
    #[new]
    #[pyo3(signature = (id, name, lon, lat, category, state=None, city=None, zip=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        id: String,
        name: String,
        lon: f64,
        lat: f64,
        category: String,
        state: Option<String>,
        city: Option<String>,
        zip: Option<String>,
    ) -> PyResult<Self> {
        let mut admin = std::collections::BTreeMap::new();
        for (k, v) in [("state", state), ("city", city), ("zip", zip)] {
            if let Some(v) = v {
                admin.insert(k.to_string(), v);
            }
        }
        Ok(PyPoi {
            inner: PoiRecord {
                id,
                name,
                location: GeoPoint::new(lon, lat).map_err(to_py)?,
                category_path: placefm_core::ingest::split_category(&category),
                admin,
                extra: Default::default(),
            },
        })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn lon(&self) -> f64 {
        self.inner.location.lon()
    }

    #[getter]
    fn lat(&self) -> f64 {
        self.inner.location.lat()
    }

    #[getter]
    fn category_path(&self) -> Vec<String> {
        self.inner.category_path.clone()
    }

    fn admin(&self, level: &str) -> Option<String> {
        self.inner.admin.get(level).cloned()
    }

    fn __repr__(&self) -> String {
        format!(
            "Poi(id={:?}, name={:?}, lon={}, lat={})",
            self.inner.id,
            self.inner.name,
            self.inner.location.lon(),
            self.inner.location.lat()
        )
    }
}

/// Result of a clustering run.
#[pyclass(name = "Clustering", module = "placefm", get_all)]
pub struct PyClustering {
    centers: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    objective: f64,
    history: Vec<f64>,
    iterations: usize,
}

impl From<Clustering> for PyClustering {
    fn from(c: Clustering) -> Self {
        PyClustering {
            centers: rows(&c.centers),
            assignment: c.assignment,
            objective: c.objective,
            history: c.history,
            iterations: c.iterations,
        }
    }
}

/// One condensed place.
#[pyclass(name = "Place", module = "placefm", get_all)]
pub struct PyPlace {
    place_id: String,
    class_name: String,
    centroid: Vec<f64>,
    member_ids: Vec<String>,
}

#[pymethods]
impl PyPlace {
    fn __len__(&self) -> usize {
        self.member_ids.len()
    }

    fn __repr__(&self) -> String {
        format!("Place({:?}, members={})", self.place_id, self.member_ids.len())
    }
}

/// Output of `embed`.
#[pyclass(name = "Embedding", module = "placefm", get_all)]
pub struct PyEmbedding {
    granularity: String,
    places: Vec<Py<PyPlace>>,
    features: Vec<Vec<f64>>,
    edges: usize,
    total_wcss: f64,
}

#[pyfunction]
fn haversine_m(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    let p = points(&[a, b])?;
    Ok(placefm_core::haversine_m(p[0], p[1]))
}

#[pyfunction]
fn name_similarity(a: &str, b: &str) -> f64 {
    placefm_core::name_similarity(a, b)
}

#[pyfunction]
#[pyo3(signature = (path, format=None))]
fn load_pois(path: PathBuf, format: Option<&str>) -> PyResult<Vec<PyPoi>> {
    let format = match format {
        None => PoiFormat::from_path(&path),
        Some("csv") => PoiFormat::Csv,
        Some("jsonl") => PoiFormat::Jsonl,
        Some(other) => return Err(PyValueError::new_err(format!("unknown format `{other}`"))),
    };
    let records = placefm_core::load_pois(&path, format).map_err(to_py)?;
    Ok(records.into_iter().map(|inner| PyPoi { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (n, states=3, cities_per_state=4, blobs_per_city=3, seed=0))]
fn synth(n: usize, states: usize, cities_per_state: usize, blobs_per_city: usize, seed: u64) -> PyResult<Vec<PyPoi>> {
    let cfg = placefm_core::synth::SynthConfig::new(n, states, cities_per_state, blobs_per_city, seed);
    let records = placefm_core::synth::generate(&cfg).map_err(to_py)?;
    Ok(records.into_iter().map(|inner| PyPoi { inner }).collect())
}

/// Edges `(i, j)` with `i < j` of the symmetric k-NN graph over `(lon, lat)` pairs.
#[pyfunction]
fn knn_edges(coords: Vec<(f64, f64)>, k: usize) -> PyResult<Vec<(usize, usize)>> {
    let g = build_knn_graph_from_points(&points(&coords)?, k).map_err(to_py)?;
    Ok(g.edges().collect())
}

/// `Σ α_h Â^h X` over the k-NN graph of `coords`.
#[pyfunction]
#[pyo3(signature = (coords, features, k, alphas))]
fn propagate(coords: Vec<(f64, f64)>, features: Vec<Vec<f64>>, k: usize, alphas: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let g = build_knn_graph_from_points(&points(&coords)?, k).map_err(to_py)?;
    let w = HopWeights::new(alphas).map_err(to_py)?;
    let out = placefm_core::propagate(&placefm_core::normalize(&g), &matrix(features)?, &w).map_err(to_py)?;
    Ok(rows(&out))
}

#[pyfunction]
#[pyo3(signature = (points, m, seed=0, algorithm="kmeans"))]
fn cluster(points: Vec<Vec<f64>>, m: usize, seed: u64, algorithm: &str) -> PyResult<PyClustering> {
    let algo: Algorithm = algorithm.parse().map_err(to_py)?;
    let c = algo.run(&matrix(points)?, m, seed).map_err(to_py)?;
    Ok(c.into())
}

#[pyfunction]
fn allocate_clusters(class_sizes: Vec<usize>, r: f64) -> PyResult<Vec<usize>> {
    Ok(placefm_core::allocate_clusters(&class_sizes, r)
        .map_err(to_py)?
        .clusters_per_class)
}

/// `(primary_ids, secondary_ids, distances_m, match_rate)`.
type JoinSummary = (Vec<String>, Vec<String>, Vec<f64>, f64);

/// Nearest-within-radius join filtered by name similarity.
#[pyfunction]
#[pyo3(signature = (primary, secondary, radius_m=111.0, min_similarity=0.5, inclusive=false))]
fn fuse(
    primary: Vec<PyPoi>,
    secondary: Vec<PyPoi>,
    radius_m: f64,
    min_similarity: f64,
    inclusive: bool,
) -> PyResult<JoinSummary> {
    let p: Vec<PoiRecord> = primary.into_iter().map(|p| p.inner).collect();
    let s: Vec<PoiRecord> = secondary.into_iter().map(|p| p.inner).collect();
    let cfg = JoinConfig {
        radius_m,
        min_similarity,
        inclusive,
    };
    let (fused, report) = spatial_join_with_report(&p, &s, &cfg).map_err(to_py)?;
    Ok((
        fused.iter().map(|f| f.primary_id.clone()).collect(),
        fused.iter().map(|f| f.secondary_id.clone()).collect(),
        fused.iter().map(|f| f.distance_m).collect(),
        report.match_rate,
    ))
}

#[pyfunction]
#[pyo3(signature = (pois, granularity="state", knn_k=5, hops=2, r=0.01, algorithm="kmeans", seed=0, category_levels=3))]
#[allow(clippy::too_many_arguments)]
fn embed(
    py: Python<'_>,
    pois: Vec<PyPoi>,
    granularity: &str,
    knn_k: usize,
    hops: usize,
    r: f64,
    algorithm: &str,
    seed: u64,
    category_levels: usize,
) -> PyResult<PyEmbedding> {
    let mut records: Vec<PoiRecord> = pois.into_iter().map(|p| p.inner).collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let cfg = PipelineConfig {
        knn_k,
        hops,
        granularity: granularity.to_string(),
        r,
        algorithm: algorithm.parse().map_err(to_py)?,
        seed,
        category_levels,
        ..PipelineConfig::default()
    };
    let run = py.detach(|| pipeline::embed(&records, &cfg)).map_err(to_py)?;
    let c = &run.condensed;
    let places = c
        .places
        .iter()
        .map(|p| {
            Py::new(
                py,
                PyPlace {
                    place_id: p.place_id.clone(),
                    class_name: c.classes[p.class_index].clone(),
                    centroid: p.centroid.clone(),
                    member_ids: p.member_ids.clone(),
                },
            )
        })
        .collect::<PyResult<_>>()?;
    Ok(PyEmbedding {
        granularity: c.granularity.clone(),
        places,
        features: rows(&run.features),
        edges: run.manifest.edges,
        total_wcss: run.manifest.total_wcss,
    })
}

#[pymodule]
fn placefm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPoi>()?;
    m.add_class::<PyClustering>()?;
    m.add_class::<PyPlace>()?;
    m.add_class::<PyEmbedding>()?;
    m.add_function(wrap_pyfunction!(haversine_m, m)?)?;
    m.add_function(wrap_pyfunction!(name_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(load_pois, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(knn_edges, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    Ok(())
}
