use std::collections::BTreeMap;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Target membership sum per point is `log2(k)`.
const SIGMA_TOLERANCE: f64 = 1e-3;
const SIGMA_ITERATIONS: usize = 200;

/// Symmetric fuzzy k-nearest-neighbor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    /// Per point: `(neighbor, membership)` sorted by neighbor index.
    adjacency: Vec<Vec<(usize, f64)>>,
    k: usize,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(n, _)| n)
            .map(|pos| self.adjacency[i][pos].1)
            .unwrap_or(0.0)
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, w) in list {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn directed_edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

/// Fuzzy set union `a + b − ab`.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact k nearest neighbors (excluding the point itself), ties broken by index.
pub fn exact_knn(data: &Tensor, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = data.rows();
    (0..n)
        .map(|i| {
            let xi = data.row_slice(i);
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, squared_distance(xi, data.row_slice(j)).sqrt()))
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Bandwidth such that `Σ exp(−(dᵢ − ρ)/σ) ≈ target`.
fn solve_sigma(dists: &[f64], rho: f64, target: f64) -> f64 {
    let total = |sigma: f64| -> f64 {
        dists
            .iter()
            .map(|&d| (-((d - rho).max(0.0)) / sigma).exp())
            .sum()
    };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut sigma = 1.0;
    for _ in 0..SIGMA_ITERATIONS {
        let s = total(sigma);
        if (s - target).abs() < SIGMA_TOLERANCE {
            break;
        }
        if s > target {
            hi = sigma;
            sigma = (lo + hi) / 2.0;
        } else {
            lo = sigma;
            sigma = if hi.is_finite() { (lo + hi) / 2.0 } else { sigma * 2.0 };
        }
    }
    sigma.max(1e-12)
}

/// Build the symmetric fuzzy neighbor graph of the rows of `data`.
///
/// Construction is exact and deterministic; `_seed` is accepted for
/// interface stability with approximate builders.
pub fn build_graph(data: &Tensor, k: usize, _seed: u64) -> Result<NeighborGraph> {
    let n = data.rows();
    if k == 0 || k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let first = data.row_slice(0);
    if (1..n).all(|i| data.row_slice(i) == first) {
        return Err(Error::DegenerateData);
    }
    let knn = exact_knn(data, k);
    let target = (k as f64).log2();
    let mut directed: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (i, neigh) in knn.iter().enumerate() {
        let dists: Vec<f64> = neigh.iter().map(|&(_, d)| d).collect();
        let rho = dists[0];
        let sigma = solve_sigma(&dists, rho, target);
        for &(j, d) in neigh {
            let w = (-((d - rho).max(0.0)) / sigma).exp();
            directed[i].insert(j, w);
        }
    }
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (&j, &w) in &directed[i] {
            let back = directed[j].get(&i).copied().unwrap_or(0.0);
            merged.insert(j, fuzzy_union(w, back));
        }
        for j in 0..n {
            if let Some(&w) = directed[j].get(&i) {
                merged
                    .entry(j)
                    .or_insert_with(|| fuzzy_union(w, directed[i].get(&j).copied().unwrap_or(0.0)));
            }
        }
        adjacency[i] = merged.into_iter().filter(|&(_, w)| w > 0.0).collect();
    }
    Ok(NeighborGraph { adjacency, k })
}
