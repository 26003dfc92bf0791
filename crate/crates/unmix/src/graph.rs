//! KNN heat-kernel affinity graph over pixels.
//!
//! Each pixel is connected to its k nearest neighbors by Euclidean
//! distance between raw spectra, with edge weight
//! `exp(-||x_j - x_l||^2 / sigma)`. The directed KNN relation is
//! symmetrized by elementwise max, which preserves the heat-kernel
//! value and keeps weights in `[0, 1]`. The graph Laplacian
//! `Lap = D - W` is never materialized densely; the solver consumes
//! row-wise products `S*W` and the degree vector.

use std::io::Write;

use ndarray::{Array2, ArrayView2};

use crate::error::{Result, UnmixError};
use crate::model::{AbundanceMatrix, ObservationMatrix};

/// Bandwidth selection for the heat kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    /// Use the given bandwidth (squared-distance units).
    Fixed(f64),
    /// Median of squared distances over all selected (pixel, neighbor)
    /// pairs; self-tuning across data scales.
    MedianHeuristic,
}

impl std::fmt::Display for SigmaPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmaPolicy::Fixed(v) => write!(f, "fixed:{v}"),
            SigmaPolicy::MedianHeuristic => f.write_str("median-heuristic"),
        }
    }
}

/// Sparse symmetric affinity graph with precomputed degrees.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    num_pixels: usize,
    k: usize,
    sigma: f64,
    // CSR over rows; cols sorted within each row.
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
}

impl AffinityGraph {
    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Heat-kernel bandwidth actually used.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Number of stored entries (each undirected edge appears twice).
    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// All stored entries `(j, l, w)`, both directions.
    pub fn iter_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_pixels).flat_map(move |j| {
            (self.row_ptr[j]..self.row_ptr[j + 1])
                .map(move |idx| (j, self.cols[idx] as usize, self.weights[idx]))
        })
    }

    /// Computes `S * W` without forming W densely.
    pub(crate) fn right_multiply(&self, s: ArrayView2<'_, f64>) -> Array2<f64> {
        let p = s.nrows();
        let mut out = Array2::zeros((p, self.num_pixels));
        for j in 0..self.num_pixels {
            for idx in self.row_ptr[j]..self.row_ptr[j + 1] {
                let l = self.cols[idx] as usize;
                let w = self.weights[idx];
                for q in 0..p {
                    out[[q, j]] += w * s[[q, l]];
                }
            }
        }
        out
    }

    /// `Tr(S * Lap * S^T)` via the edge list.
    pub(crate) fn quadratic_raw(&self, s: ArrayView2<'_, f64>) -> f64 {
        let p = s.nrows();
        let mut acc = 0.0;
        for (j, l, w) in self.iter_edges() {
            let mut d2 = 0.0;
            for q in 0..p {
                let d = s[[q, j]] - s[[q, l]];
                d2 += d * d;
            }
            acc += w * d2;
        }
        0.5 * acc
    }

    /// Writes the undirected edge list as CSV rows `j,l,weight` with
    /// 0-based indices, each edge once (`j < l`).
    pub fn write_edge_list_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "j,l,weight")?;
        for (j, l, w) in self.iter_edges() {
            if j < l {
                writeln!(out, "{j},{l},{w}")?;
            }
        }
        Ok(())
    }
}

/// Builds the KNN heat-kernel graph over the pixels of `x`.
///
/// Neighbor ties at equal distance break toward the smaller pixel
/// index. Under [`SigmaPolicy::MedianHeuristic`] the bandwidth is the
/// median squared distance among all selected (pixel, neighbor) pairs;
/// if that median is zero (all pixels identical) the bandwidth falls
/// back to 1 with a warning.
pub fn build_knn_graph(
    x: &ObservationMatrix,
    k: usize,
    sigma_policy: SigmaPolicy,
) -> Result<AffinityGraph> {
    let n = x.num_pixels();
    if k < 1 {
        return Err(UnmixError::Parameter("knn k must be at least 1".into()));
    }
    if k >= n {
        return Err(UnmixError::Parameter(format!(
            "knn k = {k} must be smaller than the pixel count {n}"
        )));
    }
    if let SigmaPolicy::Fixed(s) = sigma_policy {
        if !(s > 0.0) {
            return Err(UnmixError::Parameter(format!(
                "fixed sigma must be positive, got {s}"
            )));
        }
    }

    // Pixels as contiguous rows for fast Gram blocks.
    let pts = x.data().t().to_owned();
    let norms: Vec<f64> = pts
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();

    // Directed k-nearest edges as (pixel, neighbor, squared distance).
    let mut directed: Vec<(u32, u32, f64)> = Vec::with_capacity(n * k);
    let block = 128.min(n);
    let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(n);
    let mut b0 = 0;
    while b0 < n {
        let b1 = (b0 + block).min(n);
        let gram = pts.slice(ndarray::s![b0..b1, ..]).dot(&pts.t());
        for j in b0..b1 {
            scratch.clear();
            let g_row = gram.row(j - b0);
            for l in 0..n {
                if l == j {
                    continue;
                }
                let d2 = (norms[j] + norms[l] - 2.0 * g_row[l]).max(0.0);
                scratch.push((d2, l as u32));
            }
            let cmp = |a: &(f64, u32), b: &(f64, u32)| {
                a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
            };
            scratch.select_nth_unstable_by(k - 1, cmp);
            for &(d2, l) in scratch[..k].iter() {
                directed.push((j as u32, l, d2));
            }
        }
        b0 = b1;
    }

    let sigma = match sigma_policy {
        SigmaPolicy::Fixed(s) => s,
        SigmaPolicy::MedianHeuristic => {
            let mut d2s: Vec<f64> = directed.iter().map(|&(_, _, d2)| d2).collect();
            d2s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = d2s.len();
            let median = if m % 2 == 1 {
                d2s[m / 2]
            } else {
                0.5 * (d2s[m / 2 - 1] + d2s[m / 2])
            };
            if median > 0.0 {
                median
            } else {
                log::warn!("median KNN distance is zero (identical pixels); falling back to sigma = 1");
                1.0
            }
        }
    };

    // Heat-kernel weights, symmetrized by max. Mirrored entries carry the
    // same weight, so the max reduces to deduplication.
    let mut entries: Vec<(u32, u32, f64)> = Vec::with_capacity(directed.len() * 2);
    for &(j, l, d2) in &directed {
        let w = (-d2 / sigma).exp();
        entries.push((j, l, w));
        entries.push((l, j, w));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cols: Vec<u32> = Vec::with_capacity(entries.len());
    let mut weights: Vec<f64> = Vec::with_capacity(entries.len());
    let mut counts = vec![0usize; n];
    let mut prev: Option<(u32, u32)> = None;
    for &(j, l, w) in &entries {
        if prev == Some((j, l)) {
            let last = weights.last_mut().unwrap();
            *last = f64::max(*last, w);
        } else {
            cols.push(l);
            weights.push(w);
            counts[j as usize] += 1;
            prev = Some((j, l));
        }
    }
    let mut row_ptr = vec![0usize; n + 1];
    for j in 0..n {
        row_ptr[j + 1] = row_ptr[j] + counts[j];
    }

    let degrees: Vec<f64> = (0..n)
        .map(|j| weights[row_ptr[j]..row_ptr[j + 1]].iter().sum())
        .collect();

    Ok(AffinityGraph {
        num_pixels: n,
        k,
        sigma,
        row_ptr,
        cols,
        weights,
        degrees,
    })
}

/// `Tr(S * Lap * S^T) = 0.5 * sum_{j,l} W_jl ||s_j - s_l||^2`, always
/// nonnegative (Laplacian positive semidefiniteness).
pub fn graph_quadratic(s: &AbundanceMatrix, graph: &AffinityGraph) -> Result<f64> {
    if s.num_pixels() != graph.num_pixels() {
        return Err(UnmixError::Shape(format!(
            "abundances have {} pixels, graph has {}",
            s.num_pixels(),
            graph.num_pixels()
        )));
    }
    Ok(graph.quadratic_raw(s.data().view()))
}
