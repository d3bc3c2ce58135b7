//! Symmetric-union k-NN graph over POIs and its self-looped, symmetrically
//! normalized adjacency.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, SpatialIndex};
use crate::ingest::PoiRecord;
use crate::matrix::FeatureMatrix;

/// Unweighted undirected graph in compressed row form; no self edges.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    k: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Undirected edges as `(i, j)` with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |i| self.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Builds a graph from neighbour lists, taking the symmetric union.
    pub fn from_neighbor_lists(k: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let n = lists.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, l) in lists.iter().enumerate() {
            for &j in l {
                if j >= n {
                    return Err(Error::InvalidInput(format!("neighbour {j} out of range for {n} nodes")));
                }
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(&row);
            indptr.push(indices.len());
        }
        Ok(KnnGraph { k, indptr, indices })
    }
}

/// k-NN graph over `points`, with equidistant ties broken by the matching
/// entry of `rank` (lower first).
fn build_ranked(points: &[GeoPoint], rank: &[usize], k: usize) -> Result<KnnGraph> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "a k-NN graph needs at least 2 nodes, got {n}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    // Index ids are ranks; map back to node indices afterwards.
    let mut node_of_rank = vec![0; n];
    for (i, &r) in rank.iter().enumerate() {
        node_of_rank[r] = i;
    }
    let index = SpatialIndex::new(rank.iter().zip(points).map(|(&r, &p)| (r, p)));
    let lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            index
                .k_nearest(points[i], k, Some(rank[i]))
                .into_iter()
                .map(|(r, _)| node_of_rank[r])
                .collect()
        })
        .collect();
    KnnGraph::from_neighbor_lists(k, &lists)
}

/// Graph over points in the given order; ties resolve by lower index.
pub fn build_knn_graph_from_points(points: &[GeoPoint], k: usize) -> Result<KnnGraph> {
    let rank: Vec<usize> = (0..points.len()).collect();
    build_ranked(points, &rank, k)
}

/// Edge `{i, j}` exists iff `j` is among the `k` nearest neighbours of `i` or
/// vice versa. Node `i` is `records[i]`; ties resolve by ascending record id.
pub fn build_knn_graph(records: &[PoiRecord], k: usize) -> Result<KnnGraph> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id).then(a.cmp(&b)));
    let mut rank = vec![0; records.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let points: Vec<GeoPoint> = records.iter().map(|r| r.location).collect();
    build_ranked(&points, &rank, k)
}

/// `D^-1/2 (A + I) D^-1/2` in compressed row form, `D` the degrees of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.indptr.len() - 1
    }

    /// Stored `(column, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// `self · x`, rows computed independently (in parallel) in a fixed order.
    pub fn mul_dense(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.n() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} nodes, features have {} rows",
                self.n(),
                x.n()
            )));
        }
        let d = x.d();
        let mut out = FeatureMatrix::zeros(x.n(), d);
        if d == 0 {
            return Ok(out);
        }
        out.values_mut().par_chunks_mut(d).enumerate().for_each(|(i, dst)| {
            for (j, a) in self.row(i) {
                for (o, s) in dst.iter_mut().zip(x.row(j)) {
                    *o += a * s;
                }
            }
        });
        Ok(out)
    }
}

pub fn normalize(g: &KnnGraph) -> NormalizedAdjacency {
    let n = g.n();
    let deg: Vec<f64> = (0..n).map(|i| (g.degree(i) + 1) as f64).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(g.indices.len() + n);
    let mut values = Vec::with_capacity(g.indices.len() + n);
    indptr.push(0);
    for i in 0..n {
        let nb = g.neighbors(i);
        let split = nb.partition_point(|&j| j < i);
        let cols = nb[..split].iter().chain(std::iter::once(&i)).chain(&nb[split..]);
        for &j in cols {
            indices.push(j);
            values.push(1.0 / (deg[i] * deg[j]).sqrt());
        }
        indptr.push(indices.len());
    }
    NormalizedAdjacency {
        indptr,
        indices,
        values,
    }
}

/// Edge list, one undirected edge per line as `src<TAB>dst` with `src < dst`
/// by id, lines sorted.
pub fn write_edge_list<W: Write>(mut w: W, g: &KnnGraph, ids: &[String]) -> Result<()> {
    let mut lines: Vec<(&str, &str)> = g
        .edges()
        .map(|(i, j)| {
            let (a, b) = (ids[i].as_str(), ids[j].as_str());
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    lines.sort_unstable();
    for (a, b) in lines {
        writeln!(w, "{a}\t{b}").map_err(|e| Error::io("<edge list>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pts(coords: &[(f64, f64)]) -> Vec<GeoPoint> {
        coords.iter().map(|&(x, y)| GeoPoint::new(x, y).unwrap()).collect()
    }

    fn random_points(seed: u64, n: usize) -> Vec<GeoPoint> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| GeoPoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).unwrap())
            .collect()
    }

    #[test]
    fn collinear_k1() {
        let g = build_knn_graph_from_points(&pts(&[(0.0, 0.0), (0.001, 0.0), (0.002, 0.0)]), 1).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!((g.degree(0), g.degree(1), g.degree(2)), (1, 2, 1));
    }

    #[test]
    fn two_nodes_single_edge() {
        for k in [1, 2, 7] {
            let g = build_knn_graph_from_points(&pts(&[(0.0, 0.0), (1.0, 1.0)]), k).unwrap();
            assert_eq!(g.num_edges(), 1);
            assert_eq!((g.degree(0), g.degree(1)), (1, 1));
        }
    }

    #[test]
    fn large_k_is_complete() {
        let p = random_points(3, 9);
        let g = build_knn_graph_from_points(&p, 8).unwrap();
        assert_eq!(g.num_edges(), 9 * 8 / 2);
        let g = build_knn_graph_from_points(&p, 50).unwrap();
        assert_eq!(g.num_edges(), 9 * 8 / 2);
    }

    #[test]
    fn needs_two_nodes() {
        assert!(build_knn_graph_from_points(&pts(&[(0.0, 0.0)]), 1).is_err());
        assert!(build_knn_graph_from_points(&pts(&[(0.0, 0.0), (1.0, 0.0)]), 0).is_err());
    }

    #[test]
    fn two_node_normalization() {
        let g = build_knn_graph_from_points(&pts(&[(0.0, 0.0), (1.0, 1.0)]), 1).unwrap();
        let a = normalize(&g);
        assert_eq!(a.to_dense(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        // 6-cycle: every node has degree 2.
        let lists: Vec<Vec<usize>> = (0..6).map(|i| vec![(i + 1) % 6]).collect();
        let g = KnnGraph::from_neighbor_lists(1, &lists).unwrap();
        assert!((0..6).all(|i| g.degree(i) == 2));
        let a = normalize(&g);
        for i in 0..6 {
            let s: f64 = a.row(i).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_list_sorted_by_id() {
        let g = build_knn_graph_from_points(&pts(&[(0.0, 0.0), (0.001, 0.0), (0.002, 0.0)]), 1).unwrap();
        let ids = vec!["c".to_string(), "a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        write_edge_list(&mut buf, &g, &ids).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a\tb\na\tc\n");
    }

    proptest! {
        #[test]
        fn structural_invariants(seed in 0u64..500, n in 2usize..60, k in 1usize..8) {
            let g = build_knn_graph_from_points(&random_points(seed, n), k).unwrap();
            for i in 0..n {
                prop_assert!(g.degree(i) >= k.min(n - 1));
                prop_assert!(g.degree(i) < n);
                prop_assert!(!g.has_edge(i, i));
                for &j in g.neighbors(i) {
                    prop_assert!(g.has_edge(j, i));
                }
            }
            let a = normalize(&g);
            for i in 0..n {
                for (j, v) in a.row(i) {
                    prop_assert!(v > 0.0 && v <= 1.0);
                    prop_assert_eq!(v, a.get(j, i));
                }
            }
        }

        #[test]
        fn relabeling_conjugates_adjacency(seed in 0u64..200, n in 2usize..40, k in 1usize..6) {
            use rand::seq::SliceRandom;
            let p = random_points(seed, n);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
            // Node perm[i] of the permuted set is original node i; ranks follow the originals.
            let mut permuted = vec![p[0]; n];
            let mut rank = vec![0; n];
            for i in 0..n {
                permuted[perm[i]] = p[i];
                rank[perm[i]] = i;
            }
            let g = build_knn_graph_from_points(&p, k).unwrap();
            let h = build_ranked(&permuted, &rank, k).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(g.has_edge(i, j), h.has_edge(perm[i], perm[j]));
                }
            }
        }
    }
}
