//! Text dataset formats, loaders and seeded synthetic generators.
//!
//! A node dataset directory holds four tab-separated files:
//!
//! | file | line format |
//! |------|-------------|
//! | `edges.tsv` | `p<TAB>q[<TAB>weight]` |
//! | `features.tsv` | one node per line, tab-separated decimals; line order is node order |
//! | `labels.tsv` | `node_id<TAB>class` |
//! | `splits.tsv` | `node_id<TAB>{train,val,test}` |
//!
//! A graph population is a manifest of `label<TAB>edge_file<TAB>feature_file`
//! lines, paths relative to the manifest. Lines starting with `#` are comments
//! in every file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{input, DataError, Error, Result};
use crate::graph::{format_edge_list, read_edge_list, Edge, Graph};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.tsv";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf()).into()
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf()).into()
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

fn parse_error(file: &Path, line: usize, what: &'static str, text: &str) -> Error {
    DataError::Parse {
        file: file.to_path_buf(),
        line,
        what,
        text: text.to_string(),
    }
    .into()
}

/// Node partition used for training, model selection and evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub const NAMES: [&'static str; 3] = ["train", "val", "test"];

    fn parts(&self) -> [&Vec<usize>; 3] {
        [&self.train, &self.val, &self.test]
    }

    fn sort(&mut self) {
        self.train.sort_unstable();
        self.val.sort_unstable();
        self.test.sort_unstable();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDataset {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl NodeDataset {
    /// Validates and assembles a dataset; split lists are sorted.
    pub fn new(
        graph: Graph,
        features: Array2<f64>,
        labels: Vec<usize>,
        mut split: Split,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.nrows() != n || labels.len() != n {
            return input(format!(
                "dataset parts disagree: graph has {n} nodes, features {} rows, labels {}",
                features.nrows(),
                labels.len()
            ));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return input("non-finite feature value");
        }
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            return input(format!("label {bad} out of range for {n} nodes"));
        }
        split.sort();
        let mut owner = vec![None; n];
        for (name, part) in Split::NAMES.iter().zip(split.parts()) {
            for &p in part.iter() {
                if p >= n {
                    return input(format!("split node {p} out of range for {n} nodes"));
                }
                if let Some(first) = owner[p].replace(*name) {
                    return input(format!("node {p} in both '{first}' and '{name}' splits"));
                }
            }
        }
        Ok(Self {
            graph,
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// `N × |J|` one-hot label matrix.
    pub fn one_hot(&self) -> Array2<f64> {
        one_hot(&self.labels, self.num_classes)
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), num_classes));
    for (p, &l) in labels.iter().enumerate() {
        y[[p, l]] = 1.0;
    }
    y
}

fn parse_features(text: &str, file: &Path) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, raw) in content_lines(text) {
        let row = raw
            .trim()
            .split('\t')
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_error(file, line, "feature value", raw)),
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(DataError::RaggedFeatures {
                    file: file.to_path_buf(),
                    line,
                    expected: first.len(),
                    found: row.len(),
                }
                .into());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Invalid(format!("{}: no feature rows", file.display())).into());
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.concat();
    Ok(Array2::from_shape_vec((flat.len() / d, d), flat).expect("rectangular rows"))
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    parse_features(&read_text(path)?, path)
}

pub fn format_features(x: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in x.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

/// Splits a `node_id<TAB>value` line, checking the id against `n`.
fn keyed_line<'a>(
    file: &Path,
    line: usize,
    raw: &'a str,
    n: usize,
    what: &'static str,
) -> Result<(usize, &'a str)> {
    let fields: Vec<&str> = raw.trim().split('\t').map(str::trim).collect();
    if fields.len() != 2 {
        return Err(parse_error(file, line, what, raw));
    }
    let id: usize = fields[0]
        .parse()
        .map_err(|_| parse_error(file, line, "node id", raw))?;
    if id >= n {
        return Err(DataError::IndexOutOfRange {
            file: file.to_path_buf(),
            line,
            id,
            num_nodes: n,
        }
        .into());
    }
    Ok((id, fields[1]))
}

fn parse_labels(text: &str, file: &Path, n: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; n];
    for (line, raw) in content_lines(text) {
        let (id, value) = keyed_line(
            file,
            line,
            raw,
            n,
            "label line (expected node_id<TAB>class)",
        )?;
        let label: i64 = value
            .parse()
            .map_err(|_| parse_error(file, line, "class label", raw))?;
        if label < 0 || label as u64 >= n as u64 {
            return Err(DataError::LabelOutOfRange {
                file: file.to_path_buf(),
                line,
                label,
                limit: n,
            }
            .into());
        }
        if labels[id].replace(label as usize).is_some() {
            return Err(parse_error(file, line, "label (node labelled twice)", raw));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(node, l)| {
            l.ok_or_else(|| {
                DataError::MissingLabel {
                    file: file.to_path_buf(),
                    node,
                }
                .into()
            })
        })
        .collect()
}

fn parse_splits(text: &str, file: &Path, n: usize) -> Result<Split> {
    let mut owner: Vec<Option<&'static str>> = vec![None; n];
    let mut split = Split::default();
    for (line, raw) in content_lines(text) {
        let (id, value) = keyed_line(file, line, raw, n, "split line (expected node_id<TAB>name)")?;
        let (name, part) = match value {
            "train" => (Split::NAMES[0], &mut split.train),
            "val" => (Split::NAMES[1], &mut split.val),
            "test" => (Split::NAMES[2], &mut split.test),
            _ => {
                return Err(parse_error(
                    file,
                    line,
                    "split name (train, val or test)",
                    raw,
                ))
            }
        };
        if let Some(first) = owner[id].replace(name) {
            return Err(DataError::OverlappingSplits {
                file: file.to_path_buf(),
                line,
                node: id,
                first: first.to_string(),
                second: name.to_string(),
            }
            .into());
        }
        part.push(id);
    }
    split.sort();
    Ok(split)
}

/// Loads `edges.tsv`, `features.tsv`, `labels.tsv` and `splits.tsv` from `dir`.
pub fn load_node_dataset(dir: &Path) -> Result<NodeDataset> {
    let features_path = dir.join(FEATURES_FILE);
    let features = read_features(&features_path)?;
    let n = features.nrows();
    let graph = read_edge_list(&dir.join(EDGES_FILE), n)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = parse_labels(&read_text(&labels_path)?, &labels_path, n)?;
    let splits_path = dir.join(SPLITS_FILE);
    let split = parse_splits(&read_text(&splits_path)?, &splits_path, n)?;
    NodeDataset::new(graph, features, labels, split)
}

/// Writes the four dataset files into `dir`, creating it if needed.
pub fn save_node_dataset(ds: &NodeDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_text(&dir.join(EDGES_FILE), &format_edge_list(&ds.graph))?;
    write_text(&dir.join(FEATURES_FILE), &format_features(&ds.features))?;
    let mut labels = String::from("# node\tclass\n");
    for (p, l) in ds.labels.iter().enumerate() {
        let _ = writeln!(labels, "{p}\t{l}");
    }
    write_text(&dir.join(LABELS_FILE), &labels)?;
    let mut splits = String::from("# node\tsplit\n");
    for (name, part) in Split::NAMES.iter().zip(ds.split.parts()) {
        for p in part.iter() {
            let _ = writeln!(splits, "{p}\t{name}");
        }
    }
    write_text(&dir.join(SPLITS_FILE), &splits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub label: usize,
}

/// Labelled graphs on a shared node set.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPopulation {
    pub samples: Vec<GraphSample>,
    pub num_classes: usize,
}

impl GraphPopulation {
    pub fn new(samples: Vec<GraphSample>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return input("empty graph population");
        };
        let n = first.graph.num_nodes();
        let d = first.features.ncols();
        for (t, s) in samples.iter().enumerate() {
            if s.graph.num_nodes() != n || s.features.nrows() != n || s.features.ncols() != d {
                return input(format!(
                    "sample {t}: expected {n} nodes with {d} features, found {} nodes and {:?} features",
                    s.graph.num_nodes(),
                    s.features.dim()
                ));
            }
        }
        let num_classes = samples.iter().map(|s| s.label).max().unwrap_or(0) + 1;
        let counts = class_counts(samples.iter().map(|s| s.label), num_classes);
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return input(format!("class {empty} has no samples"));
        }
        Ok(Self {
            samples,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.samples[0].graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].features.ncols()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(self.samples.iter().map(|s| s.label), self.num_classes)
    }
}

fn class_counts(labels: impl Iterator<Item = usize>, num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for l in labels {
        counts[l] += 1;
    }
    counts
}

/// Loads a population manifest.
pub fn load_graph_population(manifest: &Path) -> Result<GraphPopulation> {
    let text = read_text(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let entries: Vec<(usize, &str)> = content_lines(&text).collect();
    if entries.is_empty() {
        return Err(DataError::EmptyManifest(manifest.to_path_buf()).into());
    }
    let limit = entries.len();
    let mut samples = Vec::with_capacity(limit);
    let mut reference: Option<(PathBuf, usize)> = None;
    for (line, raw) in entries {
        let fields: Vec<&str> = raw.trim().split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_error(
                manifest,
                line,
                "manifest line (expected label<TAB>edge_file<TAB>feature_file)",
                raw,
            ));
        }
        let label: i64 = fields[0]
            .parse()
            .map_err(|_| parse_error(manifest, line, "class label", raw))?;
        // Every class needs a sample, so there are at most as many classes as lines.
        if label < 0 || label as u64 >= limit as u64 {
            return Err(DataError::LabelOutOfRange {
                file: manifest.to_path_buf(),
                line,
                label,
                limit,
            }
            .into());
        }
        let feature_path = base.join(fields[2]);
        let features = read_features(&feature_path)?;
        let n = features.nrows();
        match &reference {
            None => reference = Some((feature_path.clone(), n)),
            Some((first, first_n)) if *first_n != n => {
                return Err(DataError::InconsistentNodeCount {
                    first: first.clone(),
                    first_n: *first_n,
                    second: feature_path,
                    second_n: n,
                }
                .into())
            }
            Some(_) => {}
        }
        let graph = read_edge_list(&base.join(fields[1]), n)?;
        samples.push(GraphSample {
            graph,
            features,
            label: label as usize,
        });
    }
    GraphPopulation::new(samples).map_err(|e| match e {
        Error::Input(msg) => DataError::Invalid(format!("{}: {msg}", manifest.display())).into(),
        other => other,
    })
}

/// Writes `manifest.tsv` plus one edge and feature file per sample into `dir`.
/// Returns the manifest path.
pub fn save_graph_population(pop: &GraphPopulation, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = String::from("# label\tedge_file\tfeature_file\n");
    for (t, s) in pop.samples.iter().enumerate() {
        let edges = format!("sample{t:04}.edges.tsv");
        let feats = format!("sample{t:04}.features.tsv");
        write_text(&dir.join(&edges), &format_edge_list(&s.graph))?;
        write_text(&dir.join(&feats), &format_features(&s.features))?;
        let _ = writeln!(manifest, "{}\t{edges}\t{feats}", s.label);
    }
    let path = dir.join("manifest.tsv");
    write_text(&path, &manifest)?;
    Ok(path)
}

/// Parameters of the block-model node task.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmParams {
    pub n_per_block: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub feat_shift: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            n_per_block: 100,
            blocks: 2,
            p_in: 0.1,
            p_out: 0.01,
            feat_dim: 16,
            feat_shift: 1.0,
            seed: 0,
        }
    }
}

/// Stratified 60/20/20 split of each class after a seeded shuffle.
fn stratified_split(labels: &[usize], num_classes: usize, rng: &mut ChaCha8Rng) -> Split {
    let mut split = Split::default();
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&p| labels[p] == class).collect();
        members.shuffle(rng);
        let n = members.len();
        let n_train = (0.6 * n as f64).round() as usize;
        let n_val = (0.2 * n as f64).round() as usize;
        let n_val = n_val.min(n - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split
            .val
            .extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.sort();
    split
}

/// Stochastic block model with block-shifted Gaussian features.
///
/// Node `p` belongs to block `p / n_per_block`. Feature `j` of a node in
/// block `k` is `N(0, 1) + feat_shift · [j mod blocks == k]`.
pub fn gen_sbm_node(params: &SbmParams) -> Result<NodeDataset> {
    let SbmParams {
        n_per_block,
        blocks,
        p_in,
        p_out,
        feat_dim,
        feat_shift,
        seed,
    } = *params;
    if !(0.0 <= p_out && p_out < p_in && p_in <= 1.0) {
        return input(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={p_in} p_out={p_out}"
        ));
    }
    if n_per_block == 0 || blocks == 0 || feat_dim == 0 {
        return input("block size, block count and feature dimension must be positive");
    }
    if !feat_shift.is_finite() {
        return input("feature shift must be finite");
    }
    let n = n_per_block * blocks;
    let labels: Vec<usize> = (0..n).map(|p| p / n_per_block).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<Edge> = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            let prob = if labels[p] == labels[q] { p_in } else { p_out };
            if rng.random::<f64>() < prob {
                edges.push((p, q, None));
            }
        }
    }
    let graph = Graph::from_edges(&edges, n)?;
    let mut features = Array2::zeros((n, feat_dim));
    for p in 0..n {
        for j in 0..feat_dim {
            let noise: f64 = rng.sample(StandardNormal);
            let shift = if j % blocks == labels[p] {
                feat_shift
            } else {
                0.0
            };
            features[[p, j]] = noise + shift;
        }
    }
    let split = stratified_split(&labels, blocks, &mut rng);
    NodeDataset::new(graph, features, labels, split)
}

/// Parameters of the synthetic graph population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationParams {
    pub samples_per_class: usize,
    pub n_nodes: usize,
    /// Erdős–Rényi edge probability per class.
    pub edge_prob_by_class: Vec<f64>,
    /// Mean of the first feature channel per class.
    pub feat_shift_by_class: Vec<f64>,
    pub seed: u64,
}

impl Default for PopulationParams {
    fn default() -> Self {
        Self {
            samples_per_class: 20,
            n_nodes: 16,
            edge_prob_by_class: vec![0.1, 0.5],
            feat_shift_by_class: vec![0.0, 1.0],
            seed: 0,
        }
    }
}

impl PopulationParams {
    pub fn num_classes(&self) -> usize {
        self.edge_prob_by_class.len()
    }
}

/// Random graphs with class-dependent density on a fixed node set.
///
/// Each node carries two features: `N(shift_class, 1)` and a constant 1.
/// Samples are ordered class by class.
pub fn gen_synthetic_population(params: &PopulationParams) -> Result<GraphPopulation> {
    let classes = params.num_classes();
    if params.n_nodes < 2 {
        return input(format!(
            "population graphs need at least 2 nodes, got {}",
            params.n_nodes
        ));
    }
    if classes == 0 || params.feat_shift_by_class.len() != classes {
        return input(format!(
            "per-class parameter lists must be non-empty and equal length, got {} edge probabilities and {} shifts",
            classes,
            params.feat_shift_by_class.len()
        ));
    }
    if params.samples_per_class == 0 {
        return input("samples_per_class must be positive");
    }
    if let Some(p) = params
        .edge_prob_by_class
        .iter()
        .find(|p| !(0.0..=1.0).contains(*p))
    {
        return input(format!("edge probability {p} outside [0, 1]"));
    }
    let n = params.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples = Vec::with_capacity(classes * params.samples_per_class);
    for class in 0..classes {
        let prob = params.edge_prob_by_class[class];
        let shift = params.feat_shift_by_class[class];
        for _ in 0..params.samples_per_class {
            let mut edges: Vec<Edge> = Vec::new();
            for p in 0..n {
                for q in p + 1..n {
                    if rng.random::<f64>() < prob {
                        edges.push((p, q, None));
                    }
                }
            }
            let mut features = Array2::zeros((n, 2));
            for p in 0..n {
                let noise: f64 = rng.sample(StandardNormal);
                features[[p, 0]] = noise + shift;
                features[[p, 1]] = 1.0;
            }
            samples.push(GraphSample {
                graph: Graph::from_edges(&edges, n)?,
                features,
                label: class,
            });
        }
    }
    GraphPopulation::new(samples)
}

/// Normalized degree histogram with `bins` buckets over `[0, n-1]`.
pub fn degree_histogram(g: &Graph, bins: usize) -> Vec<f64> {
    let n = g.num_nodes();
    let mut hist = vec![0.0; bins];
    let top = (n.max(2) - 1) as f64;
    for p in 0..n {
        let deg = g.neighbors(p).count() as f64;
        let b = ((deg / top) * bins as f64).floor() as usize;
        hist[b.min(bins - 1)] += 1.0 / n as f64;
    }
    hist
}

/// Mapping from node id to an arbitrary per-node string, e.g. region names.
pub fn read_name_file(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    Ok(content_lines(&text)
        .map(|(_, l)| l.trim().to_string())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_degenerate_probabilities_give_cliques() {
        let ds = gen_sbm_node(&SbmParams {
            n_per_block: 4,
            blocks: 2,
            p_in: 1.0,
            p_out: 0.0,
            feat_dim: 3,
            feat_shift: 1.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(ds.graph.num_edges(), 12);
        for (p, q, _) in ds.graph.edges() {
            assert_eq!(p / 4, q / 4);
        }
    }

    #[test]
    fn sbm_is_seeded() {
        let a = gen_sbm_node(&SbmParams::default()).unwrap();
        let b = gen_sbm_node(&SbmParams::default()).unwrap();
        assert_eq!(a, b);
        let c = gen_sbm_node(&SbmParams {
            seed: 9,
            ..SbmParams::default()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sbm_split_is_stratified() {
        let ds = gen_sbm_node(&SbmParams::default()).unwrap();
        assert_eq!(ds.split.train.len(), 120);
        assert_eq!(ds.split.val.len(), 40);
        assert_eq!(ds.split.test.len(), 40);
        let in_train = ds
            .split
            .train
            .iter()
            .filter(|&&p| ds.labels[p] == 0)
            .count();
        assert_eq!(in_train, 60);
    }

    #[test]
    fn sbm_rejects_bad_probabilities() {
        let bad = SbmParams {
            p_in: 0.1,
            p_out: 0.2,
            ..SbmParams::default()
        };
        assert!(gen_sbm_node(&bad).is_err());
    }

    #[test]
    fn population_validation() {
        let tiny = PopulationParams {
            n_nodes: 1,
            ..PopulationParams::default()
        };
        assert!(gen_synthetic_population(&tiny).is_err());
        let uneven = PopulationParams {
            feat_shift_by_class: vec![0.0],
            ..PopulationParams::default()
        };
        assert!(gen_synthetic_population(&uneven).is_err());
        let pop = gen_synthetic_population(&PopulationParams::default()).unwrap();
        assert_eq!(pop.len(), 40);
        assert_eq!(pop.class_counts(), vec![20, 20]);
        assert_eq!(pop.feature_dim(), 2);
    }

    #[test]
    fn dataset_rejects_overlap() {
        let g = Graph::from_edges(&[(0, 1, None)], 2).unwrap();
        let split = Split {
            train: vec![0],
            val: vec![0],
            test: vec![1],
        };
        assert!(NodeDataset::new(g, Array2::zeros((2, 1)), vec![0, 1], split).is_err());
    }

    #[test]
    fn histogram_sums_to_one() {
        let pop = gen_synthetic_population(&PopulationParams::default()).unwrap();
        let h = degree_histogram(&pop.samples[0].graph, 8);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
