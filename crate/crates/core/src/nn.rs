//! Heat-diffusion convolution network with hand-written reverse mode.
//!
//! Layer `k` computes
//!
//! ```text
//! M_k = dropout(H_{k-1}) W_k
//! Z_k = Σ_n diag(c_{s,n}) P_n(L) M_k
//! H_k = σ_k(Z_k)
//! ```
//!
//! with one scale vector `s` shared by every layer. The graph task flattens
//! `H_K` row-major and applies a two-layer ReLU perceptron. Softmax lives in
//! the loss, so the forward pass returns logits.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dims, input, Error, Result};
use crate::graph::{Graph, SparseMatrix};
use crate::kernel::{
    basis_sequence, build_coefficient_table, combine_rows, heat_conv_adjoint, CoefficientTable,
    Family, PolynomialBasis, ScaleVector,
};
use crate::spectral::{ExactKernel, SpectralDecomposition, DEFAULT_MAX_NODES};

pub mod checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiplies `g` in place by `σ'(z)`.
    fn backprop(self, z: &Array2<f64>, g: &mut Array2<f64>) {
        if self == Activation::Relu {
            Zip::from(g).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

/// How the diffusion operator is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Polynomial(PolynomialBasis),
    /// Dense eigendecomposition, `U diag(e^{-s_p λ}) Uᵀ` row by row.
    Exact,
}

impl Backend {
    pub fn name(&self) -> String {
        match self {
            Backend::Polynomial(b) => b.family().to_string(),
            Backend::Exact => "exact".to_string(),
        }
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            Backend::Polynomial(b) => Some(b.family()),
            Backend::Exact => None,
        }
    }
}

/// Per-graph operator state: the Laplacian and, for the exact backend, its
/// decomposition.
#[derive(Debug, Clone)]
pub struct GraphOperator {
    pub laplacian: SparseMatrix,
    pub spectrum: Option<SpectralDecomposition>,
}

impl GraphOperator {
    pub fn new(graph: &Graph, backend: &Backend) -> Result<Self> {
        Self::with_limit(graph, backend, DEFAULT_MAX_NODES)
    }

    /// Like [`GraphOperator::new`], refusing exact decompositions above `max_n` nodes.
    pub fn with_limit(graph: &Graph, backend: &Backend, max_n: usize) -> Result<Self> {
        let laplacian = graph.normalized_laplacian();
        let spectrum = match backend {
            Backend::Exact => Some(SpectralDecomposition::of_sparse(&laplacian, max_n)?),
            Backend::Polynomial(_) => None,
        };
        Ok(Self {
            laplacian,
            spectrum,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.laplacian.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub activation: Activation,
}

/// Two-layer perceptron `relu(flat · w1) · w2` over the flattened node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub scales: ScaleVector,
    pub backend: Backend,
    pub dropout: f64,
    pub readout: Option<Readout>,
}

/// Architecture and initialization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Widths of the hidden convolution layers.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub backend: Backend,
    pub dropout: f64,
    /// Width of the readout hidden layer; `Some` builds a graph-level model.
    pub readout_hidden: Option<usize>,
    pub initial_scale: f64,
    pub s_min: f64,
    pub s_max: f64,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
}

impl Model {
    /// Builds a model for graphs with `num_nodes` nodes.
    ///
    /// Node models get `hidden.len() + 1` convolution layers, the last one
    /// producing class logits. Graph models get `hidden.len()` ReLU
    /// convolution layers followed by the readout.
    pub fn new(config: &ModelConfig, num_nodes: usize, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.num_classes == 0 || config.hidden.contains(&0) {
            return input("layer widths must be positive");
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return input(format!("dropout must be in [0, 1), got {}", config.dropout));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![config.input_dim];
        widths.extend_from_slice(&config.hidden);
        let readout = config.readout_hidden.is_some();
        if !readout {
            widths.push(config.num_classes);
        }
        if widths.len() < 2 {
            return input("a graph model needs at least one convolution layer");
        }
        let k = widths.len() - 1;
        let layers = (0..k)
            .map(|i| Layer {
                weight: glorot(widths[i], widths[i + 1], &mut rng),
                activation: if i + 1 == k && !readout {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            })
            .collect();
        let readout = match config.readout_hidden {
            Some(0) => return input("readout width must be positive"),
            Some(h) => {
                let flat = num_nodes * widths[k];
                Some(Readout {
                    w1: glorot(flat, h, &mut rng),
                    w2: glorot(h, config.num_classes, &mut rng),
                })
            }
            None => None,
        };
        let scales = ScaleVector::new(
            vec![config.initial_scale; num_nodes],
            config.s_min,
            config.s_max,
        )?;
        Ok(Self {
            layers,
            scales,
            backend: config.backend,
            dropout: config.dropout,
            readout,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.scales.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        match &self.readout {
            Some(r) => r.w2.ncols(),
            None => self.layers.last().map_or(0, |l| l.weight.ncols()),
        }
    }

    /// Total number of weight entries.
    pub fn num_weights(&self) -> usize {
        let conv: usize = self.layers.iter().map(|l| l.weight.len()).sum();
        conv + self.readout.as_ref().map_or(0, |r| r.w1.len() + r.w2.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Terms {
    /// `[P_0(L) M, ..., P_m(L) M]`.
    Polynomial(Vec<Array2<f64>>),
    /// `Uᵀ M`.
    Exact(Array2<f64>),
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Layer input after dropout.
    input: Array2<f64>,
    mask: Option<Array2<f64>>,
    terms: Terms,
    pre: Array2<f64>,
}

#[derive(Debug, Clone)]
struct ReadoutCache {
    flat: Array2<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
}

enum Propagation<'a> {
    Polynomial {
        lap: &'a SparseMatrix,
        basis: PolynomialBasis,
        table: CoefficientTable,
    },
    Exact(ExactKernel<'a>),
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache<'a> {
    prop: Propagation<'a>,
    layers: Vec<LayerCache>,
    readout: Option<ReadoutCache>,
    logits: Array2<f64>,
    /// Wall time spent inside the diffusion operator.
    pub kernel_time: Duration,
}

impl ForwardCache<'_> {
    /// Node task: `N × |J|`; graph task: `1 × |J|`.
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    /// Output of the last convolution layer.
    pub fn embeddings(&self) -> Option<&Array2<f64>> {
        self.layers.last().map(|l| &l.pre)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Array2<f64>>,
    pub scales: Array1<f64>,
    pub readout: Option<(Array2<f64>, Array2<f64>)>,
    pub input: Array2<f64>,
    pub kernel_time: Duration,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        let readout_ok = self
            .readout
            .as_ref()
            .is_none_or(|(a, b)| a.iter().chain(b.iter()).all(|v| v.is_finite()));
        readout_ok
            && self.scales.iter().all(|v| v.is_finite())
            && self.layers.iter().all(|w| w.iter().all(|v| v.is_finite()))
    }
}

fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    })
}

fn run_layers<'a>(
    model: &Model,
    op: &'a GraphOperator,
    x: ArrayView2<'_, f64>,
    mode: Mode,
    seed: u64,
) -> Result<(Propagation<'a>, Vec<LayerCache>, Duration)> {
    let n = model.num_nodes();
    if op.num_nodes() != n {
        return input(format!(
            "graph has {} nodes but the model was built for {n}",
            op.num_nodes()
        ));
    }
    if x.nrows() != n || x.ncols() != model.input_dim() {
        return dims(
            "forward",
            format!("{n}x{}", model.input_dim()),
            format!("{}x{}", x.nrows(), x.ncols()),
        );
    }
    let started = Instant::now();
    let prop = match (&model.backend, &op.spectrum) {
        (Backend::Polynomial(basis), _) => Propagation::Polynomial {
            lap: &op.laplacian,
            basis: *basis,
            table: build_coefficient_table(&model.scales, basis)?,
        },
        (Backend::Exact, Some(dec)) => Propagation::Exact(ExactKernel::new(dec, &model.scales)?),
        (Backend::Exact, None) => {
            return Err(Error::Usage(
                "exact backend needs a graph operator built with a decomposition".into(),
            ))
        }
    };
    let mut kernel_time = started.elapsed();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let use_dropout = mode == Mode::Train && model.dropout > 0.0;
    let mut h = x.to_owned();
    let mut caches = Vec::with_capacity(model.layers.len());
    for (k, layer) in model.layers.iter().enumerate() {
        let mask = use_dropout.then(|| dropout_mask(h.dim(), model.dropout, &mut rng));
        let input = match &mask {
            Some(m) => &h * m,
            None => h,
        };
        let m = input.dot(&layer.weight);
        let started = Instant::now();
        let (terms, pre) = match &prop {
            Propagation::Polynomial { lap, basis, table } => {
                let seq = basis_sequence(lap, m.view(), basis)?;
                let z = combine_rows(&table.coeffs, &seq)?;
                (Terms::Polynomial(seq), z)
            }
            Propagation::Exact(kernel) => {
                let proj = kernel.project(m.view())?;
                let z = kernel.apply_projected(&proj);
                (Terms::Exact(proj), z)
            }
        };
        kernel_time += started.elapsed();
        if pre.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite activation in layer {}",
                k + 1
            )));
        }
        h = layer.activation.apply(&pre);
        caches.push(LayerCache {
            input,
            mask,
            terms,
            pre,
        });
    }
    Ok((prop, caches, kernel_time))
}

fn last_activation(model: &Model, caches: &[LayerCache]) -> Array2<f64> {
    let (layer, cache) = (model.layers.last().unwrap(), caches.last().unwrap());
    layer.activation.apply(&cache.pre)
}

/// Node-level forward pass; returns `N × |J|` logits.
pub fn forward_node<'a>(
    model: &Model,
    op: &'a GraphOperator,
    x: ArrayView2<'_, f64>,
    mode: Mode,
    seed: u64,
) -> Result<ForwardCache<'a>> {
    if model.readout.is_some() {
        return Err(Error::Usage(
            "forward_node called on a graph-level model".into(),
        ));
    }
    let (prop, layers, kernel_time) = run_layers(model, op, x, mode, seed)?;
    let logits = last_activation(model, &layers);
    Ok(ForwardCache {
        prop,
        layers,
        readout: None,
        logits,
        kernel_time,
    })
}

/// Graph-level forward pass; returns `1 × |J|` logits.
pub fn forward_graph<'a>(
    model: &Model,
    op: &'a GraphOperator,
    x: ArrayView2<'_, f64>,
    mode: Mode,
    seed: u64,
) -> Result<ForwardCache<'a>> {
    let Some(readout) = &model.readout else {
        return Err(Error::Usage(
            "forward_graph needs a model with a readout".into(),
        ));
    };
    let (prop, layers, kernel_time) = run_layers(model, op, x, mode, seed)?;
    let h = last_activation(model, &layers);
    let len = h.len();
    let flat = h
        .into_shape_with_order((1, len))
        .expect("standard layout flattens row-major");
    let z1 = flat.dot(&readout.w1);
    let a1 = z1.mapv(|v| v.max(0.0));
    let z2 = a1.dot(&readout.w2);
    Ok(ForwardCache {
        prop,
        layers,
        readout: Some(ReadoutCache { flat, z1, a1 }),
        logits: z2,
        kernel_time,
    })
}

fn check_cache(model: &Model, cache: &ForwardCache<'_>) -> Result<()> {
    let shapes_match =
        cache.layers.len() == model.layers.len()
            && cache.layers.iter().zip(&model.layers).all(|(c, l)| {
                c.input.ncols() == l.weight.nrows() && c.pre.ncols() == l.weight.ncols()
            })
            && cache.readout.is_some() == model.readout.is_some()
            && cache
                .layers
                .first()
                .is_none_or(|c| c.input.nrows() == model.num_nodes());
    if shapes_match {
        Ok(())
    } else {
        Err(Error::Usage(
            "forward cache does not match the model".into(),
        ))
    }
}

/// Weight gradients, scale gradient, gradient at the input, kernel time.
type StackGradients = (Vec<Array2<f64>>, Array1<f64>, Array2<f64>, Duration);

/// Reverse mode through the convolution stack from `∂loss/∂H_K`.
fn backward_layers(
    model: &Model,
    cache: &ForwardCache<'_>,
    mut grad_h: Array2<f64>,
) -> Result<StackGradients> {
    let n = model.num_nodes();
    let mut ds = Array1::<f64>::zeros(n);
    let mut dws = vec![Array2::zeros((0, 0)); model.layers.len()];
    let mut kernel_time = Duration::ZERO;
    for (k, (layer, lc)) in model.layers.iter().zip(&cache.layers).enumerate().rev() {
        let mut g = grad_h;
        layer.activation.backprop(&lc.pre, &mut g);
        let started = Instant::now();
        let dm = match (&cache.prop, &lc.terms) {
            (Propagation::Polynomial { lap, basis, table }, Terms::Polynomial(seq)) => {
                for (n_ord, term) in seq.iter().enumerate() {
                    let dots = (&g * term).sum_axis(Axis(1));
                    Zip::from(&mut ds)
                        .and(&dots)
                        .and(table.dcoeffs.column(n_ord))
                        .for_each(|d, &dot, &dc| *d += dc * dot);
                }
                heat_conv_adjoint(lap, g.view(), table, basis)?
            }
            (Propagation::Exact(kernel), Terms::Exact(proj)) => {
                ds += &kernel.scale_gradient(proj, g.view());
                kernel.adjoint(g.view())?
            }
            _ => return Err(Error::Usage("forward cache mixes backends".into())),
        };
        kernel_time += started.elapsed();
        dws[k] = lc.input.t().dot(&dm);
        let mut dh = dm.dot(&layer.weight.t());
        if let Some(mask) = &lc.mask {
            dh *= mask;
        }
        grad_h = dh;
    }
    Ok((dws, ds, grad_h, kernel_time))
}

/// Gradients of a node-level loss with respect to every parameter, given
/// `∂loss/∂logits`.
pub fn backward_node_from(
    model: &Model,
    cache: &ForwardCache<'_>,
    dlogits: Array2<f64>,
) -> Result<Gradients> {
    check_cache(model, cache)?;
    if cache.readout.is_some() {
        return Err(Error::Usage(
            "backward_node called with a graph-level cache".into(),
        ));
    }
    if dlogits.dim() != cache.logits.dim() {
        return dims(
            "backward_node",
            format!("{:?}", cache.logits.dim()),
            format!("{:?}", dlogits.dim()),
        );
    }
    let (layers, scales, input, kernel_time) = backward_layers(model, cache, dlogits)?;
    Ok(Gradients {
        layers,
        scales,
        readout: None,
        input,
        kernel_time,
    })
}

/// Masked softmax cross-entropy of a node-level forward pass and its gradients.
pub fn backward_node(
    model: &Model,
    cache: &ForwardCache<'_>,
    y_true: ArrayView2<'_, f64>,
    mask: &[usize],
) -> Result<(f64, Gradients)> {
    let (loss, dlogits) = softmax_cross_entropy(cache.logits.view(), y_true, mask)?;
    Ok((loss, backward_node_from(model, cache, dlogits)?))
}

/// Gradients of a graph-level loss given `∂loss/∂logits` (`1 × |J|`).
pub fn backward_graph_from(
    model: &Model,
    cache: &ForwardCache<'_>,
    dlogits: Array2<f64>,
) -> Result<Gradients> {
    check_cache(model, cache)?;
    let (Some(readout), Some(rc)) = (&model.readout, &cache.readout) else {
        return Err(Error::Usage(
            "backward_graph needs a graph-level cache".into(),
        ));
    };
    if dlogits.dim() != cache.logits.dim() {
        return dims(
            "backward_graph",
            format!("{:?}", cache.logits.dim()),
            format!("{:?}", dlogits.dim()),
        );
    }
    let g2 = dlogits;
    let dw2 = rc.a1.t().dot(&g2);
    let mut g1 = g2.dot(&readout.w2.t());
    Activation::Relu.backprop(&rc.z1, &mut g1);
    let dw1 = rc.flat.t().dot(&g1);
    let dflat = g1.dot(&readout.w1.t());
    let last = cache.layers.last().expect("at least one layer");
    let grad_h = dflat
        .into_shape_with_order(last.pre.raw_dim())
        .expect("row-major unflatten");
    let (layers, scales, input, kernel_time) = backward_layers(model, cache, grad_h)?;
    Ok(Gradients {
        layers,
        scales,
        readout: Some((dw1, dw2)),
        input,
        kernel_time,
    })
}

/// Softmax cross-entropy of one graph against its one-hot label, and gradients.
pub fn backward_graph(
    model: &Model,
    cache: &ForwardCache<'_>,
    y_true: &[f64],
) -> Result<(f64, Gradients)> {
    let y = ArrayView2::from_shape((1, y_true.len()), y_true)
        .map_err(|_| Error::Input("label vector shape".into()))?;
    let (loss, dlogits) = softmax_cross_entropy(cache.logits.view(), y, &[0])?;
    Ok((loss, backward_graph_from(model, cache, dlogits)?))
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Mean cross-entropy over the rows in `mask` and its gradient
/// `(softmax - y) / |mask|` on those rows, zero elsewhere.
pub fn softmax_cross_entropy(
    logits: ArrayView2<'_, f64>,
    y_true: ArrayView2<'_, f64>,
    mask: &[usize],
) -> Result<(f64, Array2<f64>)> {
    if mask.is_empty() {
        return input("cross-entropy over an empty node set");
    }
    if logits.dim() != y_true.dim() {
        return dims(
            "softmax_cross_entropy",
            format!("{:?}", logits.dim()),
            format!("{:?}", y_true.dim()),
        );
    }
    if let Some(&p) = mask.iter().find(|&&p| p >= logits.nrows()) {
        return input(format!(
            "mask row {p} out of range for {} rows",
            logits.nrows()
        ));
    }
    let scale = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for &p in mask {
        let row = logits.row(p);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let y = y_true.row(p);
        for j in 0..row.len() {
            loss -= y[j] * (row[j] - lse);
            grad[[p, j]] = ((row[j] - lse).exp() - y[j]) * scale;
        }
    }
    Ok((loss * scale, grad))
}
