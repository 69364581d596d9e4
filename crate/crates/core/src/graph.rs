//! Undirected weighted graphs in compressed-row form, the symmetric normalized
//! Laplacian, and the sparse-times-dense product that drives every polynomial
//! recurrence.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{dims, input, DataError, Error, Result};

/// One input edge `(p, q, weight)`; a missing weight means 1.0.
pub type Edge = (usize, usize, Option<f64>);

/// Square sparse matrix in compressed-row layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from per-row `(column, value)` maps. Rows are already sorted.
    fn from_rows(rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in rows {
            for (c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Sparse copy of a dense square matrix, keeping exact nonzeros only.
    pub fn from_dense(m: ArrayView2<'_, f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return dims(
                "SparseMatrix::from_dense",
                "square matrix",
                format!("{:?}", m.dim()),
            );
        }
        let rows = m
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(rows))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `p`, in ascending column order.
    pub fn row(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[p]..self.row_offsets[p + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        let span = self.row_offsets[p]..self.row_offsets[p + 1];
        match self.col_indices[span.clone()].binary_search(&q) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for p in 0..self.n {
            for (q, v) in self.row(p) {
                out[[p, q]] = v;
            }
        }
        out
    }

    /// Exact product `self · x` for a dense `N×d` matrix.
    ///
    /// Each output row is reduced in ascending column order, so results are
    /// bit-reproducible.
    pub fn spmm(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return dims(
                "spmm",
                format!("{} rows", self.n),
                format!("{} rows", x.nrows()),
            );
        }
        let d = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = Array2::<f64>::zeros((self.n, d));
        {
            let os = out.as_slice_mut().expect("fresh array is contiguous");
            for p in 0..self.n {
                let orow = &mut os[p * d..(p + 1) * d];
                for k in self.row_offsets[p]..self.row_offsets[p + 1] {
                    let v = self.values[k];
                    let xrow = &xs[self.col_indices[k] * d..(self.col_indices[k] + 1) * d];
                    for (o, xv) in orow.iter_mut().zip(xrow) {
                        *o += v * xv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest `|a_pq - a_qp|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for p in 0..self.n {
            for (q, v) in self.row(p) {
                worst = worst.max((v - self.get(q, p)).abs());
            }
        }
        worst
    }
}

/// Undirected graph with nonnegative edge weights and no self-loops.
///
/// Adjacency is stored symmetrically: `(p, q)` is present iff `(q, p)` is,
/// with the same weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: SparseMatrix,
}

impl Graph {
    /// Builds a graph from an edge list.
    ///
    /// Every edge is inserted in both directions. Repeated entries for the same
    /// unordered pair keep the largest weight, so an edge list that already
    /// lists both directions does not double its weights. Self-loops are dropped.
    pub fn from_edges(edges: &[Edge], num_nodes: usize) -> Result<Self> {
        if num_nodes == 0 {
            return input("graph must have at least one node");
        }
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); num_nodes];
        for (i, &(p, q, w)) in edges.iter().enumerate() {
            if p >= num_nodes || q >= num_nodes {
                return input(format!(
                    "edge {i} = ({p}, {q}) references a node outside 0..{num_nodes}"
                ));
            }
            let w = w.unwrap_or(1.0);
            if !w.is_finite() || w < 0.0 {
                return input(format!("edge {i} = ({p}, {q}) has invalid weight {w}"));
            }
            if p == q {
                continue;
            }
            for (a, b) in [(p, q), (q, p)] {
                let slot = rows[a].entry(b).or_insert(w);
                *slot = slot.max(w);
            }
        }
        Ok(Self {
            adjacency: SparseMatrix::from_rows(rows),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.dim()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn neighbors(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency.row(p)
    }

    /// Each undirected edge once, as `(p, q, w)` with `p < q`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        (0..self.num_nodes())
            .flat_map(|p| {
                self.neighbors(p)
                    .filter(move |&(q, _)| p < q)
                    .map(move |(q, w)| (p, q, w))
            })
            .collect()
    }

    /// Weighted degree `d_p = Σ_q A_pq`.
    pub fn degree_vector(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|p| self.neighbors(p).map(|(_, w)| w).sum())
            .collect()
    }

    /// `I - D^{-1/2} A D^{-1/2}`.
    ///
    /// Zero-degree nodes take `D^{-1/2} = 0`, which leaves their row equal to the
    /// identity row.
    pub fn normalized_laplacian(&self) -> SparseMatrix {
        let inv_sqrt: Vec<f64> = self
            .degree_vector()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let rows = (0..self.num_nodes())
            .map(|p| {
                let mut row: BTreeMap<usize, f64> = self
                    .neighbors(p)
                    .map(|(q, w)| (q, -w * inv_sqrt[p] * inv_sqrt[q]))
                    .collect();
                row.insert(p, 1.0);
                row
            })
            .collect();
        SparseMatrix::from_rows(rows)
    }

    /// Relabels nodes so that old node `p` becomes node `perm[p]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return dims("Graph::relabel", n, perm.len());
        }
        let mut seen = vec![false; n];
        for &t in perm {
            if t >= n || std::mem::replace(&mut seen[t], true) {
                return input("relabeling is not a permutation");
            }
        }
        let edges: Vec<Edge> = self
            .edges()
            .into_iter()
            .map(|(p, q, w)| (perm[p], perm[q], Some(w)))
            .collect();
        Self::from_edges(&edges, n)
    }
}

/// Parses an edge-list file body: `p<TAB>q[<TAB>weight]` per line, `#` comments.
pub fn parse_edge_list(text: &str, file: &Path) -> Result<Vec<Edge>> {
    Ok(parse_edge_lines(text, file)?
        .into_iter()
        .map(|(_, e)| e)
        .collect())
}

/// Like [`parse_edge_list`] but keeps the 1-based source line of each edge.
fn parse_edge_lines(text: &str, file: &Path) -> Result<Vec<(usize, Edge)>> {
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |what: &'static str| {
            Error::Data(DataError::Parse {
                file: file.to_path_buf(),
                line: i + 1,
                what,
                text: raw.to_string(),
            })
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err("edge (expected 2 or 3 tab-separated fields)"));
        }
        let p = fields[0].parse().map_err(|_| parse_err("node id"))?;
        let q = fields[1].parse().map_err(|_| parse_err("node id"))?;
        let w = match fields.get(2) {
            Some(f) => Some(f.parse::<f64>().map_err(|_| parse_err("edge weight"))?),
            None => None,
        };
        edges.push((i + 1, (p, q, w)));
    }
    Ok(edges)
}

/// Reads an edge-list file and builds a graph on `num_nodes` nodes.
///
/// Out-of-range node ids are reported with the offending line number.
pub fn read_edge_list(path: &Path, num_nodes: usize) -> Result<Graph> {
    let text = crate::datasets::read_text(path)?;
    let lines = parse_edge_lines(&text, path)?;
    for &(line, (p, q, _)) in &lines {
        if let Some(id) = [p, q].into_iter().find(|&id| id >= num_nodes) {
            return Err(DataError::IndexOutOfRange {
                file: path.to_path_buf(),
                line,
                id,
                num_nodes,
            }
            .into());
        }
    }
    let edges: Vec<Edge> = lines.into_iter().map(|(_, e)| e).collect();
    Graph::from_edges(&edges, num_nodes)
}

/// Serializes a graph as an edge list, one undirected edge per line.
pub fn format_edge_list(g: &Graph) -> String {
    let mut out = String::from("# p\tq\tweight\n");
    for (p, q, w) in g.edges() {
        let _ = writeln!(out, "{p}\t{q}\t{w:?}");
    }
    out
}
