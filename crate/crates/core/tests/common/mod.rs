#![allow(dead_code)]

use heatconv::graph::Edge;
use heatconv::Graph;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected graph: a random spanning tree plus extra random edges.
pub fn connected_graph(n: usize, seed: u64, extra: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<Edge> = (1..n).map(|i| (i, rng.random_range(0..i), None)).collect();
    for _ in 0..extra {
        let p = rng.random_range(0..n);
        let q = rng.random_range(0..n);
        edges.push((p, q, None));
    }
    Graph::from_edges(&edges, n).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

/// Rows moved so that old row `p` lands at `perm[p]`.
pub fn permute_rows(x: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (p, &t) in perm.iter().enumerate() {
        out.row_mut(t).assign(&x.row(p));
    }
    out
}

pub fn frob(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_frob(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    frob(&(a - b)) / frob(b).max(f64::MIN_POSITIVE)
}

/// Dense `I - D^{-1/2} A D^{-1/2}` straight from the edge list.
pub fn dense_laplacian(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes();
    let mut a = Array2::<f64>::zeros((n, n));
    for (p, q, w) in g.edges() {
        a[[p, q]] = w;
        a[[q, p]] = w;
    }
    let d: Vec<f64> = (0..n).map(|p| a.row(p).sum()).collect();
    Array2::from_shape_fn((n, n), |(p, q)| {
        let off = if d[p] > 0.0 && d[q] > 0.0 {
            a[[p, q]] / (d[p] * d[q]).sqrt()
        } else {
            0.0
        };
        if p == q {
            1.0 - off
        } else {
            -off
        }
    })
}

pub fn graph_params(max_n: usize) -> impl Strategy<Value = (usize, u64, usize)> {
    (2..=max_n, any::<u64>(), 0..40usize)
}
