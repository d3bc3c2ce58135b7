//! Partitioning Around Medoids with squared-Euclidean cost.
//!
//! Each swap round evaluates every (medoid, non-medoid) exchange and applies
//! the single best one, as in classic PAM. The cost change of all exchanges
//! for one candidate is accumulated in a single pass over the points using
//! cached nearest and second-nearest medoid distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kmeans::sample_weighted;
use super::{check_cluster_count, Clustering};
use crate::error::Result;
use crate::matrix::{squared_euclidean, FeatureMatrix};

pub const DEFAULT_MAX_SWAP_ROUNDS: usize = 100;

/// Nearest medoid slot, its distance, and the second-nearest distance.
#[derive(Debug, Clone, Copy)]
struct Nearest {
    slot: usize,
    near: f64,
    second: f64,
}

fn nearest_two(points: &FeatureMatrix, medoids: &[usize]) -> Vec<Nearest> {
    (0..points.n())
        .into_par_iter()
        .map(|i| {
            let x = points.row(i);
            let mut n = Nearest {
                slot: 0,
                near: f64::INFINITY,
                second: f64::INFINITY,
            };
            for (s, &m) in medoids.iter().enumerate() {
                let d = squared_euclidean(x, points.row(m));
                if d < n.near {
                    n.second = n.near;
                    n.near = d;
                    n.slot = s;
                } else if d < n.second {
                    n.second = d;
                }
            }
            n
        })
        .collect()
}

/// Greedy D²-weighted choice of `m` distinct points.
fn build(points: &FeatureMatrix, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.n();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut is_medoid = vec![false; n];
    is_medoid[chosen[0]] = true;
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < m {
        let weights: Vec<f64> = d2
            .iter()
            .zip(&is_medoid)
            .map(|(&d, &med)| if med { 0.0 } else { d })
            .collect();
        let sum: f64 = weights.iter().sum();
        let next = if sum > 0.0 {
            sample_weighted(rng, &weights, sum)
        } else {
            // Every remaining point duplicates a medoid; pick any of them.
            let free: Vec<usize> = (0..n).filter(|&i| !is_medoid[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        is_medoid[next] = true;
        let c = points.row(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_euclidean(points.row(i), c));
        }
    }
    chosen
}

/// Best exchange `(delta, candidate, slot)` for one candidate point `h`.
fn best_swap_for(points: &FeatureMatrix, cache: &[Nearest], m: usize, h: usize) -> (f64, usize, usize) {
    let xh = points.row(h);
    let mut shared = 0.0;
    let mut per_slot = vec![0.0; m];
    for (o, c) in cache.iter().enumerate() {
        let d_oh = squared_euclidean(points.row(o), xh);
        // Medoid of `o` stays: o moves to h only if h is closer.
        let keep = (d_oh - c.near).min(0.0);
        shared += keep;
        // Medoid of `o` is swapped out: o goes to h or to its second choice.
        per_slot[c.slot] += d_oh.min(c.second) - c.near - keep;
    }
    let (slot, delta) = per_slot
        .iter()
        .enumerate()
        .map(|(s, &v)| (s, shared + v))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("at least one medoid");
    (delta, h, slot)
}

pub fn kmedoids(points: &FeatureMatrix, m: usize, seed: u64) -> Result<Clustering> {
    kmedoids_with(points, m, seed, DEFAULT_MAX_SWAP_ROUNDS)
}

/// k-medoids: D² build phase, then best-improvement swaps until no exchange
/// lowers the cost or `max_rounds` swaps were made. Centers are input rows.
pub fn kmedoids_with(points: &FeatureMatrix, m: usize, seed: u64, max_rounds: usize) -> Result<Clustering> {
    check_cluster_count(points.n(), m)?;
    let n = points.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = build(points, m, &mut rng);
    let mut cache = nearest_two(points, &medoids);
    let mut cost: f64 = cache.iter().map(|c| c.near).sum();
    let mut history = vec![cost];
    let mut rounds = 0;

    while rounds < max_rounds {
        let mut is_medoid = vec![false; n];
        for &md in &medoids {
            is_medoid[md] = true;
        }
        let best = (0..n)
            .into_par_iter()
            .filter(|&h| !is_medoid[h])
            .map(|h| best_swap_for(points, &cache, m, h))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let Some((delta, h, slot)) = best else { break };
        if delta.is_nan() || delta >= -1e-12 * (1.0 + cost) {
            break;
        }
        let previous = std::mem::replace(&mut medoids[slot], h);
        let next_cache = nearest_two(points, &medoids);
        let next: f64 = next_cache.iter().map(|c| c.near).sum();
        if next >= cost {
            // The predicted gain was lost to rounding.
            medoids[slot] = previous;
            break;
        }
        rounds += 1;
        cache = next_cache;
        cost = next;
        history.push(cost);
    }

    let mut assignment: Vec<usize> = cache.iter().map(|c| c.slot).collect();
    // Duplicate-valued medoids tie at distance 0; keep each medoid in its own cluster.
    for (s, &md) in medoids.iter().enumerate() {
        assignment[md] = s;
    }
    let centers = points.select_rows(&medoids);
    let objective = super::objective(points, &centers, &assignment);
    Ok(Clustering {
        centers,
        assignment,
        objective,
        history,
        iterations: rounds,
    })
}
