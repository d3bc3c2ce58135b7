use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_cluster_count, Clustering};
use crate::error::Result;
use crate::matrix::{squared_euclidean, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    /// Stop once no center moves by more than this (squared Euclidean).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

/// Draws an index with probability proportional to `weights`, given a total
/// `sum > 0`.
pub(crate) fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64], sum: f64) -> usize {
    let target = rng.random::<f64>() * sum;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

/// k-means++ seeding: returns the indices of the chosen seed points.
pub(crate) fn plus_plus_indices(points: &FeatureMatrix, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.n();
    let mut chosen = Vec::with_capacity(m);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| squared_euclidean(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < m {
        let sum: f64 = d2.iter().sum();
        let next = if sum > 0.0 {
            sample_weighted(rng, &d2, sum)
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        let c = points.row(next);
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let v = squared_euclidean(points.row(i), c);
            if v < *d {
                *d = v;
            }
        });
    }
    chosen
}

/// Nearest center per point (ties to the lower center index) and its distance.
pub(crate) fn assign_nearest(points: &FeatureMatrix, centers: &FeatureMatrix) -> Vec<(usize, f64)> {
    (0..points.n())
        .into_par_iter()
        .map(|i| {
            let x = points.row(i);
            let mut best = (0, f64::INFINITY);
            for (j, c) in centers.rows().enumerate() {
                let d = squared_euclidean(x, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

fn means(points: &FeatureMatrix, assignment: &[usize], m: usize) -> FeatureMatrix {
    let d = points.d();
    let mut sums = vec![0.0; m * d];
    let mut counts = vec![0usize; m];
    for (x, &a) in points.rows().zip(assignment) {
        counts[a] += 1;
        for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            for s in &mut sums[j * d..(j + 1) * d] {
                *s /= c as f64;
            }
        }
    }
    FeatureMatrix::new(m, d, sums).expect("means of finite points are finite")
}

/// Gives every empty cluster the point farthest from its current center,
/// taken from a cluster that keeps at least one member. The emptied center is
/// moved onto that point.
fn repair_empty(points: &FeatureMatrix, centers: &mut FeatureMatrix, assign: &mut [(usize, f64)]) {
    let m = centers.n();
    let mut counts = vec![0usize; m];
    for &(a, _) in assign.iter() {
        counts[a] += 1;
    }
    let d = points.d();
    for j in 0..m {
        if counts[j] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, &(a, dist)) in assign.iter().enumerate() {
            if counts[a] > 1 && far.is_none_or(|(_, fd)| dist > fd) {
                far = Some((i, dist));
            }
        }
        let (i, _) = far.expect("fewer clusters than points");
        counts[assign[i].0] -= 1;
        counts[j] += 1;
        assign[i] = (j, 0.0);
        centers.values_mut()[j * d..(j + 1) * d].copy_from_slice(points.row(i));
    }
}

pub fn kmeans(points: &FeatureMatrix, m: usize, seed: u64) -> Result<Clustering> {
    kmeans_with(points, m, seed, &KMeansParams::default())
}

/// Lloyd's algorithm from a k-means++ start.
///
/// `history` holds the objective after every assignment step and is
/// non-increasing. Returned centers are the means of their clusters.
pub fn kmeans_with(points: &FeatureMatrix, m: usize, seed: u64, params: &KMeansParams) -> Result<Clustering> {
    check_cluster_count(points.n(), m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = plus_plus_indices(points, m, &mut rng);
    let mut centers = points.select_rows(&seeds);

    let mut assign = assign_nearest(points, &centers);
    repair_empty(points, &mut centers, &mut assign);
    let mut history = vec![assign.iter().map(|a| a.1).sum::<f64>()];
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let labels: Vec<usize> = assign.iter().map(|a| a.0).collect();
        let next = means(points, &labels, m);
        let movement = centers
            .rows()
            .zip(next.rows())
            .map(|(a, b)| squared_euclidean(a, b))
            .fold(0.0, f64::max);
        centers = next;

        let mut reassigned = assign_nearest(points, &centers);
        repair_empty(points, &mut centers, &mut reassigned);
        history.push(reassigned.iter().map(|a| a.1).sum());
        let changed = reassigned.iter().zip(&assign).any(|(a, b)| a.0 != b.0);
        assign = reassigned;
        if !changed || movement < params.tol {
            break;
        }
    }

    let assignment: Vec<usize> = assign.iter().map(|a| a.0).collect();
    let centers = means(points, &assignment, m);
    let objective = super::objective(points, &centers, &assignment);
    Ok(Clustering {
        centers,
        assignment,
        objective,
        history,
        iterations,
    })
}
