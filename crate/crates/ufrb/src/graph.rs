//! Euclidean kNN neighborhood graph and geodesic distance estimation by
//! shortest paths, following the usual isomap construction: edge weights are
//! Euclidean distances, and the geodesic between non-neighbors is the
//! shortest weighted path through the graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::{Error, Result};

/// Undirected kNN graph. Symmetrized by union: an edge survives when either
/// endpoint selects the other among its `epsilon` nearest neighbors.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    n: usize,
    epsilon: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
    zero_weight_edges: usize,
}

impl NeighborGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> usize {
        self.epsilon
    }

    /// Neighbors of node `i` as `(index, Euclidean weight)`, sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Number of zero-weight edges (duplicate points).
    pub fn zero_weight_edges(&self) -> usize {
        self.zero_weight_edges
    }
}

/// Connected components of a neighbor graph, ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentReport {
    components: Vec<Vec<usize>>,
}

impl ComponentReport {
    pub fn is_connected(&self) -> bool {
        self.components.len() == 1
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.len()).collect()
    }
}

impl fmt::Display for ComponentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} component(s) with sizes {:?}",
            self.components.len(),
            self.sizes()
        )
    }
}

/// Symmetric matrix of estimated manifold distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicMatrix {
    d: Array2<f64>,
}

/// Shortest-path algorithm selection. `Auto` uses Floyd-Warshall up to
/// n = 512 and per-source Dijkstra beyond; both produce the same matrix, the
/// per-source route is just faster on sparse kNN graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Auto,
    FloydWarshall,
    PerSource,
}

const FLOYD_WARSHALL_MAX_N: usize = 512;

impl GeodesicMatrix {
    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.d
    }

    /// A "geodesic" matrix holding plain Euclidean input distances; this is
    /// the reference matrix for the Sammon objective.
    pub fn euclidean(dataset: &Dataset) -> Self {
        let n = dataset.n();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = dataset.euclidean(i, j);
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        Self { d }
    }

    /// Build directly from a full matrix; validates symmetry, zero diagonal,
    /// non-negativity and finiteness.
    pub fn from_matrix(d: Array2<f64>) -> Result<Self> {
        let n = d.nrows();
        if d.ncols() != n {
            return Err(Error::InvalidArgument("distance matrix must be square".into()));
        }
        for i in 0..n {
            if d[[i, i]] != 0.0 {
                return Err(Error::InvalidArgument("distance matrix diagonal must be zero".into()));
            }
            for j in (i + 1)..n {
                let v = d[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(
                        "distance matrix entries must be finite and non-negative".into(),
                    ));
                }
                if (v - d[[j, i]]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::InvalidArgument("distance matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self { d })
    }

    /// Write the binary cache: magic `GDM1`, little-endian u64 n, then n^2
    /// little-endian f64 values row-major.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let n = self.n();
        let mut bytes = Vec::with_capacity(4 + 8 + n * n * 8);
        bytes.extend_from_slice(b"GDM1");
        bytes.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.d.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Read a binary cache written by [`write_cache`](Self::write_cache).
    pub fn read_cache(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let fail = |msg: &str| Error::ModelFormat(format!("{}: {msg}", path.display()));
        if bytes.len() < 12 || &bytes[0..4] != b"GDM1" {
            return Err(fail("not a GDM1 geodesic cache"));
        }
        let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let expected = 12 + n * n * 8;
        if bytes.len() != expected {
            return Err(fail("truncated geodesic cache"));
        }
        let mut data = Vec::with_capacity(n * n);
        for chunk in bytes[12..].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        let d = Array2::from_shape_vec((n, n), data).expect("length checked");
        Self::from_matrix(d).map_err(|e| fail(&e.to_string()))
    }
}

/// Default neighbor count: 1% of the instances, rounded, at least 1.
pub fn default_epsilon(n: usize) -> usize {
    ((0.01 * n as f64).round() as usize).max(1)
}

/// Connect each point to its `epsilon` nearest Euclidean neighbors (ties
/// broken by lower index), then symmetrize by union.
pub fn build_knn_graph(dataset: &Dataset, epsilon: usize) -> Result<NeighborGraph> {
    let n = dataset.n();
    if epsilon < 1 || epsilon >= n {
        return Err(Error::InvalidArgument(format!(
            "epsilon must satisfy 1 <= epsilon < n (epsilon={epsilon}, n={n})"
        )));
    }

    // Nearest lists per node, computed independently.
    let nearest: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dist: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dataset.euclidean(i, j), j))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dist.truncate(epsilon);
            dist.into_iter().map(|(d, j)| (j, d)).collect()
        })
        .collect();

    // Union symmetrization.
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in nearest.iter().enumerate() {
        for &(j, w) in list {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    let mut zero_weight_edges = 0;
    for (i, list) in adjacency.iter_mut().enumerate() {
        list.sort_by(|a, b| a.0.cmp(&b.0));
        list.dedup_by(|a, b| a.0 == b.0);
        zero_weight_edges += list.iter().filter(|&&(j, w)| w == 0.0 && j > i).count();
    }
    if zero_weight_edges > 0 {
        log::warn!(
            "neighborhood graph has {zero_weight_edges} zero-weight edge(s): duplicate points"
        );
    }

    Ok(NeighborGraph {
        n,
        epsilon,
        adjacency,
        zero_weight_edges,
    })
}

/// Connected components by breadth-first search.
pub fn check_connectivity(graph: &NeighborGraph) -> ComponentReport {
    let n = graph.n;
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        let mut comp = Vec::new();
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &(v, _) in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    ComponentReport { components }
}

/// All-pairs shortest-path distances over the neighbor graph. Fails with the
/// component report when the graph is disconnected, so no infinities leak
/// out.
pub fn geodesic_all_pairs(graph: &NeighborGraph, algorithm: Algorithm) -> Result<GeodesicMatrix> {
    let report = check_connectivity(graph);
    if !report.is_connected() {
        return Err(Error::Disconnected(report));
    }
    let n = graph.n;
    let use_floyd = match algorithm {
        Algorithm::FloydWarshall => true,
        Algorithm::PerSource => false,
        Algorithm::Auto => n <= FLOYD_WARSHALL_MAX_N,
    };
    let d = if use_floyd {
        floyd_warshall(graph)
    } else {
        per_source_dijkstra(graph)
    };
    Ok(GeodesicMatrix { d })
}

fn floyd_warshall(graph: &NeighborGraph) -> Array2<f64> {
    let n = graph.n;
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
        for &(j, w) in graph.neighbors(i) {
            d[i * n + j] = w;
        }
    }
    for k in 0..n {
        // Row k is fixed during this pass, so split the borrow once.
        let row_k = d[k * n..(k + 1) * n].to_vec();
        for i in 0..n {
            let dik = d[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            let row_i = &mut d[i * n..(i + 1) * n];
            for j in 0..n {
                let via = dik + row_k[j];
                if via < row_i[j] {
                    row_i[j] = via;
                }
            }
        }
    }
    Array2::from_shape_vec((n, n), d).expect("n*n layout")
}

fn dijkstra(graph: &NeighborGraph, source: usize) -> Vec<f64> {
    let n = graph.n;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(HeapDist, usize)>> = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((HeapDist(0.0), source)));
    while let Some(Reverse((HeapDist(du), u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in graph.neighbors(u) {
            let alt = du + w;
            if alt < dist[v] {
                dist[v] = alt;
                heap.push(Reverse((HeapDist(alt), v)));
            }
        }
    }
    dist
}

fn per_source_dijkstra(graph: &NeighborGraph) -> Array2<f64> {
    let n = graph.n;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| dijkstra(graph, s))
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            d[[i, j]] = v;
        }
    }
    d
}

/// Finite f64 wrapper giving the total order a binary heap needs.
#[derive(PartialEq)]
struct HeapDist(f64);

impl Eq for HeapDist {}

impl PartialOrd for HeapDist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapDist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
