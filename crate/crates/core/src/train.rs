//! Training loops, the regularized objective, the scale projection step and
//! a finite-difference gradient checker.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{GraphPopulation, NodeDataset};
use crate::error::{input, Error, Result};
use crate::kernel::ScaleVector;
use crate::nn::{
    backward_graph, backward_node, forward_graph, forward_node, softmax_cross_entropy, Backend,
    Gradients, GraphOperator, Mode, Model, ModelConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightOptimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_w: f64,
    pub beta_s: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub initial_scale: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub hidden_dims: Vec<usize>,
    pub folds: usize,
    pub dropout: f64,
    /// Readout hidden width for the graph task.
    pub readout_hidden: usize,
    pub optimizer: WeightOptimizer,
}

impl TrainConfig {
    pub fn node_default() -> Self {
        Self {
            lr_w: 0.01,
            beta_s: 1.0,
            alpha: 0.1,
            epochs: 200,
            patience: 50,
            seed: 0,
            initial_scale: ScaleVector::DEFAULT_INITIAL,
            s_min: ScaleVector::DEFAULT_MIN,
            s_max: ScaleVector::DEFAULT_MAX,
            hidden_dims: vec![64],
            folds: 5,
            dropout: 0.5,
            readout_hidden: 16,
            optimizer: WeightOptimizer::Adam,
        }
    }

    pub fn graph_default() -> Self {
        Self {
            alpha: 1.0,
            epochs: 100,
            hidden_dims: vec![16, 16],
            ..Self::node_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_w > 0.0
            && self.beta_s >= 0.0
            && self.alpha >= 0.0
            && self.patience >= 1
            && self.s_min > 0.0
            && self.s_min <= self.s_max
            && (self.s_min..=self.s_max).contains(&self.initial_scale)
            && (0.0..1.0).contains(&self.dropout);
        if ok {
            Ok(())
        } else {
            input(format!(
                "invalid training configuration: need lr_w > 0, beta_s >= 0, alpha >= 0, patience >= 1, \
                 0 < s_min <= initial_scale <= s_max, 0 <= dropout < 1; got {self:?}"
            ))
        }
    }

    fn model_config(
        &self,
        input_dim: usize,
        num_classes: usize,
        backend: Backend,
        readout: bool,
    ) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden: self.hidden_dims.clone(),
            num_classes,
            backend,
            dropout: self.dropout,
            readout_hidden: readout.then_some(self.readout_hidden),
            initial_scale: self.initial_scale,
            s_min: self.s_min,
            s_max: self.s_max,
        }
    }
}

/// `err + α Σ_p |s_p|`.
pub fn total_loss(err_loss: f64, scales: &ScaleVector, alpha: f64) -> f64 {
    err_loss + alpha * scales.as_slice().iter().map(|s| s.abs()).sum::<f64>()
}

/// Gradient of the regularizer, `α sign(s_p)`.
pub fn regularizer_gradient(scales: &ScaleVector, alpha: f64) -> Array1<f64> {
    scales
        .as_slice()
        .iter()
        .map(|&s| alpha * s.signum())
        .collect()
}

/// Weight optimizer state plus the projected scale update.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: WeightOptimizer,
    lr_w: f64,
    beta_s: f64,
    alpha: f64,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn weights_mut(model: &mut Model) -> Vec<&mut Array2<f64>> {
    let mut out: Vec<&mut Array2<f64>> = model.layers.iter_mut().map(|l| &mut l.weight).collect();
    if let Some(r) = &mut model.readout {
        out.push(&mut r.w1);
        out.push(&mut r.w2);
    }
    out
}

fn weight_grads(grads: &Gradients) -> Vec<&Array2<f64>> {
    let mut out: Vec<&Array2<f64>> = grads.layers.iter().collect();
    if let Some((a, b)) = &grads.readout {
        out.push(a);
        out.push(b);
    }
    out
}

impl Optimizer {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            kind: config.optimizer,
            lr_w: config.lr_w,
            beta_s: config.beta_s,
            alpha: config.alpha,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// `W ← W − lr·update(dW)`, `s ← clamp(s − β_s (ds + α sign(s)))`.
    ///
    /// `grads.scales` is the error-loss gradient only; the regularizer term is
    /// added here.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        let gws = weight_grads(grads);
        let mut ws = weights_mut(model);
        if gws.len() != ws.len() || gws.iter().zip(&ws).any(|(g, w)| g.dim() != w.dim()) {
            return Err(Error::Usage("gradients do not match the model".into()));
        }
        match self.kind {
            WeightOptimizer::Sgd => {
                for (w, g) in ws.iter_mut().zip(&gws) {
                    w.scaled_add(-self.lr_w, g);
                }
            }
            WeightOptimizer::Adam => {
                if self.m.is_empty() {
                    self.m = gws.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.t);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t);
                for (((w, g), m), v) in ws.iter_mut().zip(&gws).zip(&mut self.m).zip(&mut self.v) {
                    ndarray::Zip::from(&mut **w)
                        .and(*g)
                        .and(m)
                        .and(v)
                        .for_each(|w, &g, m, v| {
                            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                            *w -= self.lr_w * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                        });
                }
            }
        }
        let reg = regularizer_gradient(&model.scales, self.alpha);
        let updated: Vec<f64> = model
            .scales
            .as_slice()
            .iter()
            .zip(grads.scales.iter().zip(&reg))
            .map(|(&s, (&ds, &r))| s - self.beta_s * (ds + r))
            .collect();
        model.scales.assign_clamped(updated);
        Ok(())
    }
}

/// Accuracy plus macro-averaged precision and recall.
///
/// Averages run over classes present in the true labels; a class that is
/// never predicted has precision 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn classification_metrics(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Metrics {
    let total = y_true.len();
    if total == 0 {
        return Metrics {
            accuracy: 0.0,
            precision: 0.0,
            recall: 0.0,
        };
    }
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut actual = vec![0usize; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        actual[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let present: Vec<usize> = (0..num_classes).filter(|&c| actual[c] > 0).collect();
    let k = present.len() as f64;
    let precision = present
        .iter()
        .map(|&c| {
            if predicted[c] == 0 {
                0.0
            } else {
                tp[c] as f64 / predicted[c] as f64
            }
        })
        .sum::<f64>()
        / k;
    let recall = present
        .iter()
        .map(|&c| tp[c] as f64 / actual[c] as f64)
        .sum::<f64>()
        / k;
    Metrics {
        accuracy: tp.iter().sum::<usize>() as f64 / total as f64,
        precision,
        recall,
    }
}

/// Row-wise argmax, first index on ties.
pub fn argmax_rows(logits: ArrayView2<'_, f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.len() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
    pub kernel_time: Duration,
    pub total_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Epoch 0 holds the metrics of the initial model.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test: Metrics,
    pub scales: Vec<f64>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    /// One tab-separated record per epoch followed by `#` summary lines.
    /// With `timing == false` the two wall-clock columns are omitted.
    pub fn to_tsv(&self, timing: bool) -> String {
        let mut out = String::from("# epoch\ttrain_loss\tval_acc\tval_loss");
        out.push_str(if timing {
            "\tkernel_ms\ttotal_ms\n"
        } else {
            "\n"
        });
        for r in &self.epochs {
            let _ = write!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}",
                r.epoch, r.train_loss, r.val_acc, r.val_loss
            );
            if timing {
                let _ = write!(out, "\t{:.3}\t{:.3}", ms(r.kernel_time), ms(r.total_time));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "# best_epoch\t{}", self.best_epoch);
        let _ = writeln!(
            out,
            "# test_accuracy\t{:.6}\ttest_precision\t{:.6}\ttest_recall\t{:.6}",
            self.test.accuracy, self.test.precision, self.test.recall
        );
        out
    }
}

/// Seed for the dropout masks of one epoch (and one sample for the graph task).
fn dropout_seed(seed: u64, epoch: usize, sample: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (sample as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

struct Evaluation {
    loss: f64,
    metrics: Metrics,
    kernel_time: Duration,
}

fn evaluate_nodes(
    model: &Model,
    op: &GraphOperator,
    ds: &NodeDataset,
    y: &Array2<f64>,
    nodes: &[usize],
) -> Result<Evaluation> {
    let cache = forward_node(model, op, ds.features.view(), Mode::Eval, 0)?;
    let (loss, _) = softmax_cross_entropy(cache.logits().view(), y.view(), nodes)?;
    let pred = argmax_rows(cache.logits().view());
    let t: Vec<usize> = nodes.iter().map(|&p| ds.labels[p]).collect();
    let p: Vec<usize> = nodes.iter().map(|&p| pred[p]).collect();
    Ok(Evaluation {
        loss,
        metrics: classification_metrics(&t, &p, ds.num_classes),
        kernel_time: cache.kernel_time,
    })
}

/// Full-batch node classification with early stopping on validation accuracy
/// (ties broken by lower validation loss). The returned model is the best
/// checkpoint.
pub fn train_node(
    ds: &NodeDataset,
    config: &TrainConfig,
    backend: Backend,
) -> Result<(Model, TrainReport)> {
    let op = GraphOperator::new(&ds.graph, &backend)?;
    train_node_with(ds, config, backend, &op)
}

/// [`train_node`] with a prebuilt graph operator.
pub fn train_node_with(
    ds: &NodeDataset,
    config: &TrainConfig,
    backend: Backend,
    op: &GraphOperator,
) -> Result<(Model, TrainReport)> {
    config.validate()?;
    let split = &ds.split;
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return input("node training needs non-empty train, val and test sets");
    }
    let mut owner = vec![false; ds.num_nodes()];
    for &p in split.train.iter().chain(&split.val).chain(&split.test) {
        if p >= owner.len() || std::mem::replace(&mut owner[p], true) {
            return input(format!(
                "node {p} appears in more than one split (or is out of range)"
            ));
        }
    }
    let y = ds.one_hot();
    let model_cfg = config.model_config(ds.feature_dim(), ds.num_classes, backend, false);
    let mut model = Model::new(&model_cfg, ds.num_nodes(), config.seed)?;
    let mut opt = Optimizer::new(config);

    let started = Instant::now();
    let train_eval = evaluate_nodes(&model, op, ds, &y, &split.train)?;
    let val = evaluate_nodes(&model, op, ds, &y, &split.val)?;
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_loss: total_loss(train_eval.loss, &model.scales, config.alpha),
        val_acc: val.metrics.accuracy,
        val_loss: val.loss,
        kernel_time: train_eval.kernel_time + val.kernel_time,
        total_time: started.elapsed(),
    }];
    let mut best = (model.clone(), 0usize, val.metrics.accuracy, val.loss);
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let cache = forward_node(
            &model,
            op,
            ds.features.view(),
            Mode::Train,
            dropout_seed(config.seed, epoch, 0),
        )?;
        let (err, grads) = backward_node(&model, &cache, y.view(), &split.train)?;
        let train_loss = total_loss(err, &model.scales, config.alpha);
        let kernel = cache.kernel_time + grads.kernel_time;
        drop(cache);
        opt.step(&mut model, &grads)?;
        let val = evaluate_nodes(&model, op, ds, &y, &split.val)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_acc: val.metrics.accuracy,
            val_loss: val.loss,
            kernel_time: kernel,
            total_time: started.elapsed(),
        });
        let improved =
            val.metrics.accuracy > best.2 || (val.metrics.accuracy == best.2 && val.loss < best.3);
        if improved {
            best = (model.clone(), epoch, val.metrics.accuracy, val.loss);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (model, best_epoch, _, _) = best;
    let test = evaluate_nodes(&model, op, ds, &y, &split.test)?.metrics;
    let report = TrainReport {
        epochs,
        best_epoch,
        test,
        scales: model.scales.as_slice().to_vec(),
    };
    Ok((model, report))
}

/// Stratified fold assignment: each class is shuffled with the seed and dealt
/// round-robin into `folds` folds. Returns the fold of every sample.
pub fn stratified_folds(
    labels: &[usize],
    num_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return input(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == class).collect();
        if members.len() < folds {
            return input(format!(
                "class {class} has {} samples, fewer than {folds} folds",
                members.len()
            ));
        }
        members.shuffle(&mut rng);
        for (i, &t) in members.iter().enumerate() {
            assignment[t] = i % folds;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub report: TrainReport,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
}

impl CrossValidation {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# fold\taccuracy\tprecision\trecall\ttrain_size\ttest_size\n");
        for (f, r) in self.folds.iter().enumerate() {
            let m = r.report.test;
            let _ = writeln!(
                out,
                "{f}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                m.accuracy,
                m.precision,
                m.recall,
                r.train.len(),
                r.test.len()
            );
        }
        for (name, s) in [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
        ] {
            let _ = writeln!(
                out,
                "# mean_{name}\t{:.6}\tstd_{name}\t{:.6}",
                s.mean, s.std
            );
        }
        out
    }
}

struct PreparedSample<'a> {
    op: GraphOperator,
    features: &'a Array2<f64>,
    target: Vec<f64>,
    label: usize,
}

fn graph_metrics(
    model: &Model,
    samples: &[PreparedSample<'_>],
    idx: &[usize],
    num_classes: usize,
) -> Result<(f64, Metrics, Duration)> {
    let mut loss = 0.0;
    let mut kernel = Duration::ZERO;
    let mut preds = Vec::with_capacity(idx.len());
    let mut truth = Vec::with_capacity(idx.len());
    for &t in idx {
        let s = &samples[t];
        let cache = forward_graph(model, &s.op, s.features.view(), Mode::Eval, 0)?;
        let y = ArrayView2::from_shape((1, num_classes), &s.target).expect("1 x J");
        loss += softmax_cross_entropy(cache.logits().view(), y, &[0])?.0;
        preds.push(argmax_rows(cache.logits().view())[0]);
        truth.push(s.label);
        kernel += cache.kernel_time;
    }
    let n = idx.len().max(1) as f64;
    Ok((
        loss / n,
        classification_metrics(&truth, &preds, num_classes),
        kernel,
    ))
}

fn accumulate(total: &mut Option<Gradients>, g: Gradients) {
    match total {
        None => *total = Some(g),
        Some(t) => {
            for (a, b) in t.layers.iter_mut().zip(&g.layers) {
                *a += b;
            }
            t.scales += &g.scales;
            if let (Some((a1, a2)), Some((b1, b2))) = (&mut t.readout, &g.readout) {
                *a1 += b1;
                *a2 += b2;
            }
            t.input += &g.input;
            t.kernel_time += g.kernel_time;
        }
    }
}

fn scale_gradients(g: &mut Gradients, factor: f64) {
    for a in &mut g.layers {
        *a *= factor;
    }
    g.scales *= factor;
    if let Some((a, b)) = &mut g.readout {
        *a *= factor;
        *b *= factor;
    }
    g.input *= factor;
}

/// k-fold cross-validated graph classification. Each fold trains a fresh model
/// for `config.epochs` full-batch epochs on the remaining folds and is scored
/// on the held-out fold.
pub fn train_graph(
    pop: &GraphPopulation,
    config: &TrainConfig,
    backend: Backend,
) -> Result<CrossValidation> {
    config.validate()?;
    let labels = pop.labels();
    let assignment = stratified_folds(&labels, pop.num_classes, config.folds, config.seed)?;
    let samples = pop
        .samples
        .iter()
        .map(|s| {
            let mut target = vec![0.0; pop.num_classes];
            target[s.label] = 1.0;
            Ok(PreparedSample {
                op: GraphOperator::new(&s.graph, &backend)?,
                features: &s.features,
                target,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut folds = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let train: Vec<usize> = (0..pop.len()).filter(|&t| assignment[t] != fold).collect();
        let test: Vec<usize> = (0..pop.len()).filter(|&t| assignment[t] == fold).collect();
        let report = train_fold(pop, config, backend, &samples, &train, &test, fold)?;
        folds.push(FoldResult {
            report,
            train,
            test,
        });
    }
    let pick = |f: fn(&Metrics) -> f64| {
        MeanStd::of(&folds.iter().map(|r| f(&r.report.test)).collect::<Vec<_>>())
    };
    Ok(CrossValidation {
        accuracy: pick(|m| m.accuracy),
        precision: pick(|m| m.precision),
        recall: pick(|m| m.recall),
        folds,
    })
}

fn train_fold(
    pop: &GraphPopulation,
    config: &TrainConfig,
    backend: Backend,
    samples: &[PreparedSample<'_>],
    train: &[usize],
    test: &[usize],
    fold: usize,
) -> Result<TrainReport> {
    let model_cfg = config.model_config(pop.feature_dim(), pop.num_classes, backend, true);
    let fold_seed = config.seed.wrapping_add(fold as u64);
    let mut model = Model::new(&model_cfg, pop.num_nodes(), fold_seed)?;
    let mut opt = Optimizer::new(config);

    let started = Instant::now();
    let (train_loss, _, k1) = graph_metrics(&model, samples, train, pop.num_classes)?;
    let (val_loss, val, k2) = graph_metrics(&model, samples, test, pop.num_classes)?;
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_loss: total_loss(train_loss, &model.scales, config.alpha),
        val_acc: val.accuracy,
        val_loss,
        kernel_time: k1 + k2,
        total_time: started.elapsed(),
    }];
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut total: Option<Gradients> = None;
        let mut err = 0.0;
        let mut kernel = Duration::ZERO;
        for (i, &t) in train.iter().enumerate() {
            let s = &samples[t];
            let cache = forward_graph(
                &model,
                &s.op,
                s.features.view(),
                Mode::Train,
                dropout_seed(fold_seed, epoch, i),
            )?;
            let (loss, g) = backward_graph(&model, &cache, &s.target)?;
            kernel += cache.kernel_time + g.kernel_time;
            err += loss;
            accumulate(&mut total, g);
        }
        let mut grads = total.expect("non-empty training fold");
        let inv = 1.0 / train.len() as f64;
        scale_gradients(&mut grads, inv);
        let train_loss = total_loss(err * inv, &model.scales, config.alpha);
        opt.step(&mut model, &grads)?;
        let (val_loss, val, _) = graph_metrics(&model, samples, test, pop.num_classes)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_acc: val.accuracy,
            val_loss,
            kernel_time: kernel,
            total_time: started.elapsed(),
        });
    }
    let (_, test_metrics, _) = graph_metrics(&model, samples, test, pop.num_classes)?;
    Ok(TrainReport {
        best_epoch: epochs.len() - 1,
        epochs,
        test: test_metrics,
        scales: model.scales.as_slice().to_vec(),
    })
}

/// One input for [`grad_check`].
pub enum GradSample<'a> {
    Node {
        op: &'a GraphOperator,
        features: ArrayView2<'a, f64>,
        targets: ArrayView2<'a, f64>,
        mask: &'a [usize],
    },
    Graph {
        op: &'a GraphOperator,
        features: ArrayView2<'a, f64>,
        target: &'a [f64],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub checked: usize,
    /// Largest analytic gradient magnitude in the group.
    pub max_abs: f64,
    pub max_rel: f64,
    pub mean_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub warnings: Vec<String>,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.groups.iter().fold(0.0, |m, g| m.max(g.max_rel))
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel() < tolerance
    }
}

/// Entries checked per weight matrix.
pub const GRADCHECK_SAMPLES: usize = 64;

fn sample_loss(model: &Model, sample: &GradSample<'_>) -> Result<f64> {
    match sample {
        GradSample::Node {
            op,
            features,
            targets,
            mask,
        } => {
            let cache = forward_node(model, op, *features, Mode::Eval, 0)?;
            Ok(softmax_cross_entropy(cache.logits().view(), *targets, mask)?.0)
        }
        GradSample::Graph {
            op,
            features,
            target,
        } => {
            let cache = forward_graph(model, op, *features, Mode::Eval, 0)?;
            let y = ArrayView2::from_shape((1, target.len()), target)
                .map_err(|_| Error::Input("target shape".into()))?;
            Ok(softmax_cross_entropy(cache.logits().view(), y, &[0])?.0)
        }
    }
}

fn analytic(model: &Model, sample: &GradSample<'_>) -> Result<Gradients> {
    match sample {
        GradSample::Node {
            op,
            features,
            targets,
            mask,
        } => {
            let cache = forward_node(model, op, *features, Mode::Eval, 0)?;
            Ok(backward_node(model, &cache, *targets, mask)?.1)
        }
        GradSample::Graph {
            op,
            features,
            target,
        } => {
            let cache = forward_graph(model, op, *features, Mode::Eval, 0)?;
            Ok(backward_graph(model, &cache, target)?.1)
        }
    }
}

/// Relative errors with a group-scale floor, so entries whose true gradient is
/// tiny compared with the rest of the group do not dominate.
fn summarize(name: String, pairs: &[(f64, f64)]) -> GroupError {
    let scale = pairs
        .iter()
        .fold(0.0_f64, |m, &(a, n)| m.max(a.abs()).max(n.abs()));
    let floor = 1e-3 * scale;
    let rels: Vec<f64> = pairs
        .iter()
        .map(|&(a, n)| {
            let denom = a.abs().max(n.abs()).max(floor);
            if denom == 0.0 {
                0.0
            } else {
                (a - n).abs() / denom
            }
        })
        .collect();
    GroupError {
        name,
        checked: rels.len(),
        max_abs: pairs.iter().fold(0.0, |m: f64, &(a, _)| m.max(a.abs())),
        max_rel: rels.iter().fold(0.0, |m: f64, &r| m.max(r)),
        mean_rel: if rels.is_empty() {
            0.0
        } else {
            rels.iter().sum::<f64>() / rels.len() as f64
        },
    }
}

/// Central-difference check of every scale and a seeded subsample of each
/// weight matrix against the analytic gradients of the error loss (dropout off).
pub fn grad_check(
    model: &Model,
    sample: &GradSample<'_>,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return input(format!("finite-difference step must be positive, got {h}"));
    }
    let mut warnings = Vec::new();
    if h < 1e-8 {
        warnings.push(format!(
            "step h={h:e} is below 1e-8: floating-point cancellation will inflate the finite-difference error"
        ));
    }
    let grads = analytic(model, sample)?;
    let mut work = model.clone();
    let mut groups = Vec::new();

    let (s_min, s_max) = model.scales.bounds();
    let base: Vec<f64> = model.scales.as_slice().to_vec();
    let mut pairs = Vec::with_capacity(base.len());
    for p in 0..base.len() {
        let eval = |work: &mut Model, v: f64| -> Result<f64> {
            let mut vals = base.clone();
            vals[p] = v;
            work.scales = ScaleVector::new(vals, s_min.min(v), s_max.max(v))?;
            sample_loss(work, sample)
        };
        let up = eval(&mut work, base[p] + h)?;
        let down = eval(&mut work, base[p] - h)?;
        pairs.push((grads.scales[p], (up - down) / (2.0 * h)));
    }
    work.scales = model.scales.clone();
    groups.push(summarize("scales".into(), &pairs));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gws: Vec<(String, Array2<f64>)> = {
        let mut v: Vec<(String, Array2<f64>)> = grads
            .layers
            .iter()
            .enumerate()
            .map(|(k, g)| (format!("W{}", k + 1), g.clone()))
            .collect();
        if let Some((a, b)) = &grads.readout {
            v.push(("W_R1".into(), a.clone()));
            v.push(("W_R2".into(), b.clone()));
        }
        v
    };
    for (gi, (name, g)) in gws.iter().enumerate() {
        let count = g.len();
        let picks: Vec<usize> = if count <= GRADCHECK_SAMPLES {
            (0..count).collect()
        } else {
            let mut idx = rand::seq::index::sample(&mut rng, count, GRADCHECK_SAMPLES).into_vec();
            idx.sort_unstable();
            idx
        };
        let cols = g.ncols();
        let mut pairs = Vec::with_capacity(picks.len());
        for flat in picks {
            let (i, j) = (flat / cols, flat % cols);
            let orig = weights_mut(&mut work)[gi][[i, j]];
            weights_mut(&mut work)[gi][[i, j]] = orig + h;
            let up = sample_loss(&work, sample)?;
            weights_mut(&mut work)[gi][[i, j]] = orig - h;
            let down = sample_loss(&work, sample)?;
            weights_mut(&mut work)[gi][[i, j]] = orig;
            pairs.push((g[[i, j]], (up - down) / (2.0 * h)));
        }
        groups.push(summarize(name.clone(), &pairs));
    }
    for g in &groups {
        if g.max_abs == 0.0 {
            warnings.push(format!(
                "group {} has an identically zero gradient; its check is vacuous",
                g.name
            ));
        }
    }
    Ok(GradCheckReport { groups, warnings })
}
