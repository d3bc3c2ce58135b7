//! Per-class clustering condensation of propagated features into place
//! embeddings.
//!
//! Each class of a granularity labeling keeps `M_k = clamp(round(r·n_k), 1, n_k)`
//! synthetic nodes. The clustering only sees the feature rows of that class;
//! graph topology is not consulted. A place is a cluster of POIs and its
//! embedding is the cluster center.

mod kmeans;
mod kmedoids;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, kmeans_with, KMeansParams};
pub use kmedoids::{kmedoids, kmedoids_with, DEFAULT_MAX_SWAP_ROUNDS};

use crate::error::{Error, Result};
use crate::ingest::GranularityLabeling;
use crate::matrix::{squared_euclidean, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    KMedoids,
}

impl Algorithm {
    pub fn run(self, points: &FeatureMatrix, m: usize, seed: u64) -> Result<Clustering> {
        match self {
            Algorithm::KMeans => kmeans(points, m, seed),
            Algorithm::KMedoids => kmedoids(points, m, seed),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::KMedoids => "kmedoids",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "kmeans" => Ok(Algorithm::KMeans),
            "kmedoids" | "pam" => Ok(Algorithm::KMedoids),
            _ => Err(Error::InvalidInput(format!("unknown clustering algorithm `{s}`"))),
        }
    }
}

/// Output of one clustering run over a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centers: FeatureMatrix,
    /// Center index for every input point.
    pub assignment: Vec<usize>,
    /// Sum of squared distances from points to their assigned centers.
    pub objective: f64,
    /// Objective after each assignment step (k-means) or accepted swap (PAM).
    pub history: Vec<f64>,
    pub iterations: usize,
}

pub(crate) fn check_cluster_count(points: usize, clusters: usize) -> Result<()> {
    if clusters == 0 || clusters > points {
        return Err(Error::TooManyClusters { clusters, points });
    }
    Ok(())
}

pub(crate) fn objective(points: &FeatureMatrix, centers: &FeatureMatrix, assignment: &[usize]) -> f64 {
    points
        .rows()
        .zip(assignment)
        .map(|(x, &a)| squared_euclidean(x, centers.row(a)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensePlan {
    pub ratio: f64,
    pub clusters_per_class: Vec<usize>,
    pub n_prime: usize,
}

/// `M_k = clamp(round_half_up(r · n_k), 1, n_k)`.
pub fn allocate_clusters(class_sizes: &[usize], r: f64) -> Result<CondensePlan> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidRatio(r));
    }
    if let Some(k) = class_sizes.iter().position(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("class {k} is empty")));
    }
    let clusters_per_class: Vec<usize> = class_sizes
        .iter()
        .map(|&n| ((r * n as f64 + 0.5).floor() as usize).clamp(1, n))
        .collect();
    Ok(CondensePlan {
        ratio: r,
        n_prime: clusters_per_class.iter().sum(),
        clusters_per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceEmbedding {
    pub place_id: String,
    pub class_index: usize,
    pub centroid: Vec<f64>,
    pub member_ids: Vec<String>,
    /// Node indices of the members, ascending.
    #[serde(skip)]
    pub members: Vec<usize>,
}

impl PlaceEmbedding {
    pub fn member_count(&self) -> usize {
        self.member_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensedGraph {
    pub granularity: String,
    pub classes: Vec<String>,
    pub algorithm: Algorithm,
    pub plan: CondensePlan,
    pub places: Vec<PlaceEmbedding>,
    /// Class index of each place.
    pub labels: Vec<usize>,
    /// Place index of each original node.
    pub provenance: Vec<usize>,
    /// Clustering objective of each class.
    pub class_objectives: Vec<f64>,
}

impl CondensedGraph {
    pub fn place_of(&self, node: usize) -> &PlaceEmbedding {
        &self.places[self.provenance[node]]
    }

    pub fn objective(&self) -> f64 {
        self.class_objectives.iter().sum()
    }
}

/// Clusters each class of `labeling` independently and returns the centers as
/// place embeddings. Class `k` is clustered with seed `seed ^ k`.
pub fn condense(
    features: &FeatureMatrix,
    labeling: &GranularityLabeling,
    ids: &[String],
    r: f64,
    algorithm: Algorithm,
    seed: u64,
) -> Result<CondensedGraph> {
    let n = features.n();
    if labeling.assignment.len() != n || ids.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} feature rows, {} labels, {} ids",
            labeling.assignment.len(),
            ids.len()
        )));
    }
    if let Some(&bad) = labeling.assignment.iter().find(|&&c| c >= labeling.num_classes()) {
        return Err(Error::InvalidInput(format!("label {bad} has no class")));
    }
    let members = labeling.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let plan = allocate_clusters(&sizes, r)?;

    let runs: Vec<Clustering> = members
        .par_iter()
        .zip(plan.clusters_per_class.par_iter())
        .enumerate()
        .map(|(k, (idx, &m))| algorithm.run(&features.select_rows(idx), m, seed ^ k as u64))
        .collect::<Result<_>>()?;

    let mut places = Vec::with_capacity(plan.n_prime);
    let mut labels = Vec::with_capacity(plan.n_prime);
    let mut provenance = vec![usize::MAX; n];
    for (k, (run, idx)) in runs.iter().zip(&members).enumerate() {
        let base = places.len();
        let mut grouped: Vec<Vec<usize>> = vec![Vec::new(); run.centers.n()];
        for (&node, &c) in idx.iter().zip(&run.assignment) {
            grouped[c].push(node);
            provenance[node] = base + c;
        }
        for (c, nodes) in grouped.into_iter().enumerate() {
            places.push(PlaceEmbedding {
                place_id: format!("{}:{}:{}", labeling.granularity_name, labeling.classes[k], c),
                class_index: k,
                centroid: run.centers.row(c).to_vec(),
                member_ids: nodes.iter().map(|&i| ids[i].clone()).collect(),
                members: nodes,
            });
            labels.push(k);
        }
    }
    Ok(CondensedGraph {
        granularity: labeling.granularity_name.clone(),
        classes: labeling.classes.clone(),
        algorithm,
        plan,
        places,
        labels,
        provenance,
        class_objectives: runs.iter().map(|r| r.objective).collect(),
    })
}
