use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use heatconv::datasets::{
    gen_sbm_node, gen_synthetic_population, load_graph_population, load_node_dataset,
    read_name_file, save_graph_population, save_node_dataset, NodeDataset, PopulationParams,
    SbmParams,
};
use heatconv::kernel::{max_kernel_error, Family};
use heatconv::nn::{
    backward_node, checkpoint, forward_node, Backend, GraphOperator, Mode, Model, ModelConfig,
};
use heatconv::train::{grad_check, train_graph, train_node, GradSample, Optimizer, TrainConfig};
use heatconv::{PolynomialBasis, ScaleVector};

use crate::config::{self, backend_for, BasisArg, Task};
use crate::{ApproxArgs, BenchArgs, ExportArgs, GenerateCommand, GradcheckArgs, TrainCommonArgs};

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn backend_line(run: &config::RunConfig) -> String {
    match run.backend {
        Backend::Polynomial(b) => format!("{} (order {})", run.backend.name(), b.order()),
        Backend::Exact => run.backend.name(),
    }
}

pub fn train_node_cmd(args: &TrainCommonArgs) -> anyhow::Result<ExitCode> {
    let run = config::resolve(&args.io, &args.backend, &args.train, Task::Node)?;
    let dir = run
        .dataset
        .clone()
        .context("train-node needs --dataset (or `dataset` in --config)")?;
    let ds = load_node_dataset(&dir)?;
    create_out(&run.out)?;
    log::info!(
        "training {} on {} nodes",
        run.backend.name(),
        ds.num_nodes()
    );
    let (model, report) = train_node(&ds, &run.train, run.backend)?;

    write(&run.out, "report.tsv", &report.to_tsv(false))?;
    write(&run.out, "timing.tsv", &report.to_tsv(true))?;
    checkpoint::save(&model, &run.out.join("model.bin"))?;

    let mut summary = String::from("# train-node summary\n");
    let _ = writeln!(summary, "backend\t{}", backend_line(&run));
    if let Backend::Polynomial(b) = &run.backend {
        if b.family() == Family::Chebyshev {
            let _ = writeln!(summary, "b\t{}", b.b());
        }
    }
    let _ = writeln!(summary, "nodes\t{}", ds.num_nodes());
    let _ = writeln!(summary, "epochs_run\t{}", report.epochs.len() - 1);
    let _ = writeln!(summary, "best_epoch\t{}", report.best_epoch);
    let _ = writeln!(summary, "test_accuracy\t{:.2}", report.test.accuracy);
    let _ = writeln!(summary, "test_precision\t{:.2}", report.test.precision);
    let _ = writeln!(summary, "test_recall\t{:.2}", report.test.recall);
    if run.b_defaulted {
        let _ = writeln!(
            summary,
            "note\tno --b given; using the default chebyshev domain b=2.0"
        );
    }
    write(&run.out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn manifest_path(p: PathBuf) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.tsv")
    } else {
        p
    }
}

pub fn train_graph_cmd(args: &TrainCommonArgs) -> anyhow::Result<ExitCode> {
    let run = config::resolve(&args.io, &args.backend, &args.train, Task::Graph)?;
    let manifest = manifest_path(
        run.dataset
            .clone()
            .context("train-graph needs --dataset (or `dataset` in --config)")?,
    );
    let pop = load_graph_population(&manifest)?;
    create_out(&run.out)?;
    log::info!(
        "{}-fold CV of {} on {} graphs",
        run.train.folds,
        run.backend.name(),
        pop.len()
    );
    let cv = train_graph(&pop, &run.train, run.backend)?;

    write(&run.out, "cv.tsv", &cv.to_tsv())?;
    for (k, fold) in cv.folds.iter().enumerate() {
        write(
            &run.out,
            &format!("fold{k}_report.tsv"),
            &fold.report.to_tsv(false),
        )?;
    }
    let mut summary = String::from("# train-graph summary (mean ± sample std over folds)\n");
    let _ = writeln!(summary, "backend\t{}", backend_line(&run));
    let _ = writeln!(summary, "graphs\t{}", pop.len());
    let _ = writeln!(summary, "folds\t{}", cv.folds.len());
    for (name, s) in [
        ("accuracy", cv.accuracy),
        ("precision", cv.precision),
        ("recall", cv.recall),
    ] {
        let _ = writeln!(summary, "{name}\t{:.2} ± {:.2}", s.mean, s.std);
    }
    if run.b_defaulted {
        let _ = writeln!(
            summary,
            "note\tno --b given; using the default chebyshev domain b=2.0"
        );
    }
    write(&run.out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

pub const APPROX_GRID: usize = 2001;

pub fn approx_error_cmd(args: &ApproxArgs) -> anyhow::Result<ExitCode> {
    let families: Vec<Family> = match args.basis {
        Some(BasisArg::Exact) => {
            bail!("approx-error compares polynomial expansions; --basis exact has no expansion")
        }
        Some(b) => vec![b.family().expect("polynomial basis")],
        None => vec![Family::Chebyshev, Family::Hermite, Family::Laguerre],
    };
    if args.s.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        bail!("every --s value must be positive and finite");
    }
    let mut out = format!(
        "# max |exp(-s*lambda) - sum_n c_n P_n(lambda)| over {APPROX_GRID} uniform points on [0, 2]\n\
         # family\torder\tb\ts\tmax_abs_error\n"
    );
    for family in families {
        let orders = args
            .order
            .clone()
            .unwrap_or_else(|| vec![family.default_order()]);
        for &m in &orders {
            // m = 0 evaluates an order-1 basis truncated after P_0.
            let basis = PolynomialBasis::new(family, m.max(1), args.b)?;
            for &s in &args.s {
                let err = max_kernel_error(s, &basis, m, APPROX_GRID)?;
                let b = if family == Family::Chebyshev {
                    format!("{}", args.b)
                } else {
                    "-".into()
                };
                let _ = writeln!(out, "{family}\t{m}\t{b}\t{s}\t{err:.6e}");
            }
        }
    }
    create_out(&args.out)?;
    write(&args.out, "approx_error.tsv", &out)?;
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

/// Deterministic spread of scales over `[0.5, 3]` so the check is not run at a
/// single uniform value.
fn spread_scales(n: usize) -> anyhow::Result<ScaleVector> {
    let golden = 0.618_033_988_749_894_9;
    let values = (0..n)
        .map(|p| 0.5 + 2.5 * ((p as f64 + 1.0) * golden).fract())
        .collect();
    Ok(ScaleVector::new(
        values,
        ScaleVector::DEFAULT_MIN,
        ScaleVector::DEFAULT_MAX,
    )?)
}

pub fn gradcheck_cmd(args: &GradcheckArgs) -> anyhow::Result<ExitCode> {
    let basis_list: Vec<BasisArg> = match args.basis {
        Some(b) => vec![b],
        None => BasisArg::ALL.to_vec(),
    };
    let node_ds = match &args.dataset {
        Some(dir) => load_node_dataset(dir)?,
        None => gen_sbm_node(&SbmParams {
            n_per_block: 15,
            blocks: 2,
            p_in: 0.3,
            p_out: 0.05,
            feat_dim: 8,
            seed: args.seed,
            ..SbmParams::default()
        })?,
    };
    let pop = gen_synthetic_population(&PopulationParams {
        samples_per_class: 1,
        n_nodes: 12,
        seed: args.seed,
        ..PopulationParams::default()
    })?;
    let graph_sample = &pop.samples[0];
    let target: Vec<f64> = (0..pop.num_classes)
        .map(|c| if c == graph_sample.label { 1.0 } else { 0.0 })
        .collect();
    let node_targets = node_ds.one_hot();

    let mut table = format!(
        "# central differences, h = {:e}; relative error floored at 1e-3 x group max\n\
         # task\tbackend\tgroup\tchecked\tmax_abs_grad\tmax_rel_err\tmean_rel_err\n",
        args.h
    );
    let mut worst = 0.0_f64;
    let mut warnings = Vec::new();
    for basis in basis_list {
        let backend = backend_for(
            basis,
            args.order,
            (basis == BasisArg::Chebyshev).then_some(args.b),
        )?;
        for task in [Task::Node, Task::Graph] {
            let (report, name) = match task {
                Task::Node => {
                    let op = GraphOperator::new(&node_ds.graph, &backend)?;
                    let mut model = Model::new(
                        &ModelConfig {
                            input_dim: node_ds.feature_dim(),
                            hidden: args.hidden.clone(),
                            num_classes: node_ds.num_classes,
                            backend,
                            dropout: 0.0,
                            readout_hidden: None,
                            initial_scale: ScaleVector::DEFAULT_INITIAL,
                            s_min: ScaleVector::DEFAULT_MIN,
                            s_max: ScaleVector::DEFAULT_MAX,
                        },
                        node_ds.num_nodes(),
                        args.seed,
                    )?;
                    model.scales = spread_scales(node_ds.num_nodes())?;
                    let sample = GradSample::Node {
                        op: &op,
                        features: node_ds.features.view(),
                        targets: node_targets.view(),
                        mask: &node_ds.split.train,
                    };
                    (grad_check(&model, &sample, args.h, args.seed)?, "node")
                }
                Task::Graph => {
                    let op = GraphOperator::new(&graph_sample.graph, &backend)?;
                    let mut model = Model::new(
                        &ModelConfig {
                            input_dim: pop.feature_dim(),
                            hidden: args.graph_hidden.clone(),
                            num_classes: pop.num_classes,
                            backend,
                            dropout: 0.0,
                            readout_hidden: Some(args.readout_hidden),
                            initial_scale: ScaleVector::DEFAULT_INITIAL,
                            s_min: ScaleVector::DEFAULT_MIN,
                            s_max: ScaleVector::DEFAULT_MAX,
                        },
                        pop.num_nodes(),
                        args.seed,
                    )?;
                    model.scales = spread_scales(pop.num_nodes())?;
                    let sample = GradSample::Graph {
                        op: &op,
                        features: graph_sample.features.view(),
                        target: &target,
                    };
                    (grad_check(&model, &sample, args.h, args.seed)?, "graph")
                }
            };
            for g in &report.groups {
                let _ = writeln!(
                    table,
                    "{name}\t{}\t{}\t{}\t{:.3e}\t{:.3e}\t{:.3e}",
                    backend.name(),
                    g.name,
                    g.checked,
                    g.max_abs,
                    g.max_rel,
                    g.mean_rel
                );
            }
            for w in report.warnings {
                let line = format!("{name}/{}: {w}", backend.name());
                if !warnings.contains(&line) {
                    warnings.push(line);
                }
            }
            worst = worst.max(report.groups.iter().fold(0.0, |m, g| m.max(g.max_rel)));
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
        let _ = writeln!(table, "# warning\t{w}");
    }
    let pass = worst < args.threshold;
    let _ = writeln!(
        table,
        "# max_rel_err\t{worst:.3e}\tthreshold\t{:e}\t{}",
        args.threshold,
        if pass { "PASS" } else { "FAIL" }
    );
    create_out(&args.out)?;
    write(&args.out, "gradcheck.tsv", &table)?;
    print!("{table}");
    if pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "gradcheck failed: max relative error {worst:.3e} >= {:e}",
            args.threshold
        );
        Ok(ExitCode::FAILURE)
    }
}

#[derive(Debug, Clone)]
struct Stats {
    median: f64,
    min: f64,
    max: f64,
}

fn stats(samples: &[Duration]) -> Stats {
    let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    let n = ms.len();
    let median = if n % 2 == 1 {
        ms[n / 2]
    } else {
        0.5 * (ms[n / 2 - 1] + ms[n / 2])
    };
    Stats {
        median,
        min: ms[0],
        max: ms[n - 1],
    }
}

/// Exact-backend decomposition policy for the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decomposition {
    None,
    Amortized,
    PerEpoch,
}

impl Decomposition {
    fn name(self) -> &'static str {
        match self {
            Self::None => "-",
            Self::Amortized => "amortized",
            Self::PerEpoch => "per_epoch",
        }
    }
}

struct BenchRow {
    n: usize,
    backend: String,
    decomposition: Decomposition,
    setup: Duration,
    kernel: Stats,
    epoch: Stats,
}

/// One warm-up epoch then `repeats` timed full-batch training steps.
fn bench_backend(
    ds: &NodeDataset,
    cfg: &TrainConfig,
    backend: Backend,
    decomposition: Decomposition,
    repeats: usize,
) -> anyhow::Result<BenchRow> {
    let model_cfg = ModelConfig {
        input_dim: ds.feature_dim(),
        hidden: cfg.hidden_dims.clone(),
        num_classes: ds.num_classes,
        backend,
        dropout: cfg.dropout,
        readout_hidden: None,
        initial_scale: cfg.initial_scale,
        s_min: cfg.s_min,
        s_max: cfg.s_max,
    };
    let mut model = Model::new(&model_cfg, ds.num_nodes(), cfg.seed)?;
    let mut opt = Optimizer::new(cfg);
    let y = ds.one_hot();

    let started = Instant::now();
    let shared = GraphOperator::new(&ds.graph, &backend)?;
    let setup = if decomposition == Decomposition::PerEpoch {
        Duration::ZERO
    } else {
        started.elapsed()
    };

    let mut kernel_times = Vec::with_capacity(repeats);
    let mut epoch_times = Vec::with_capacity(repeats);
    for epoch in 0..=repeats {
        let started = Instant::now();
        let (op, decomposition_time) = if decomposition == Decomposition::PerEpoch {
            let op = GraphOperator::new(&ds.graph, &backend)?;
            (Some(op), started.elapsed())
        } else {
            (None, Duration::ZERO)
        };
        let op_ref = op.as_ref().unwrap_or(&shared);
        let cache = forward_node(
            &model,
            op_ref,
            ds.features.view(),
            Mode::Train,
            cfg.seed ^ epoch as u64,
        )?;
        let (_, grads) = backward_node(&model, &cache, y.view(), &ds.split.train)?;
        let kernel = decomposition_time + cache.kernel_time + grads.kernel_time;
        drop(cache);
        opt.step(&mut model, &grads)?;
        if epoch > 0 {
            kernel_times.push(kernel);
            epoch_times.push(started.elapsed());
        }
    }
    Ok(BenchRow {
        n: ds.num_nodes(),
        backend: backend.name(),
        decomposition,
        setup,
        kernel: stats(&kernel_times),
        epoch: stats(&epoch_times),
    })
}

/// SBM with mean degree near 10, independent of size.
fn bench_graph(n: usize, seed: u64) -> anyhow::Result<NodeDataset> {
    if n < 10 {
        bail!("bench sizes must be at least 10 nodes, got {n}");
    }
    let per_block = n / 2;
    Ok(gen_sbm_node(&SbmParams {
        n_per_block: per_block,
        blocks: 2,
        p_in: (8.0 / per_block as f64).min(1.0),
        p_out: (2.0 / per_block as f64).min(1.0),
        seed,
        ..SbmParams::default()
    })?)
}

pub fn bench_cmd(args: &BenchArgs) -> anyhow::Result<ExitCode> {
    if args.repeats < 10 {
        bail!("--repeats must be at least 10, got {}", args.repeats);
    }
    let mut cfg = TrainConfig::node_default();
    cfg.seed = args.seed;
    cfg.hidden_dims = args.hidden.clone();
    let datasets = match &args.dataset {
        Some(dir) => vec![load_node_dataset(dir)?],
        None => args
            .sizes
            .iter()
            .map(|&n| bench_graph(n, args.seed))
            .collect::<anyhow::Result<_>>()?,
    };
    let basis_list: Vec<BasisArg> = match args.basis {
        Some(b) => vec![b],
        None => BasisArg::ALL.to_vec(),
    };

    let mut rows = Vec::new();
    for ds in &datasets {
        for &basis in &basis_list {
            let backend = backend_for(
                basis,
                args.order,
                (basis == BasisArg::Chebyshev).then_some(args.b),
            )?;
            let policies: &[Decomposition] = if basis == BasisArg::Exact {
                &[Decomposition::Amortized, Decomposition::PerEpoch]
            } else {
                &[Decomposition::None]
            };
            for &policy in policies {
                log::info!(
                    "bench n={} {} {}",
                    ds.num_nodes(),
                    backend.name(),
                    policy.name()
                );
                rows.push(bench_backend(ds, &cfg, backend, policy, args.repeats)?);
            }
        }
    }

    let mut out = format!(
        "# wall-clock milliseconds over {} epochs after one warm-up epoch; kernel = heat-kernel convolution \
         (forward and backward, plus decomposition for per_epoch); setup = one-off decomposition\n\
         # n\tbackend\tdecomposition\tsetup_ms\tkernel_median_ms\tkernel_min_ms\tkernel_max_ms\tepoch_median_ms\tepoch_min_ms\tepoch_max_ms\n",
        args.repeats
    );
    for r in &rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
            r.n,
            r.backend,
            r.decomposition.name(),
            r.setup.as_secs_f64() * 1e3,
            r.kernel.median,
            r.kernel.min,
            r.kernel.max,
            r.epoch.median,
            r.epoch.min,
            r.epoch.max
        );
    }
    for exact in rows
        .iter()
        .filter(|r| r.decomposition == Decomposition::PerEpoch)
    {
        for r in rows
            .iter()
            .filter(|r| r.n == exact.n && r.decomposition == Decomposition::None)
        {
            let _ = writeln!(
                out,
                "# speedup\tn={}\t{} vs exact per_epoch\tkernel {:.2}x\tepoch {:.2}x",
                r.n,
                r.backend,
                exact.kernel.median / r.kernel.median,
                exact.epoch.median / r.epoch.median
            );
        }
    }
    create_out(&args.out)?;
    write(&args.out, "bench.tsv", &out)?;
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

pub fn export_scales_cmd(args: &ExportArgs) -> anyhow::Result<ExitCode> {
    let model = checkpoint::load(&args.checkpoint)?;
    let scales = model.scales.as_slice();
    let names = match &args.names {
        Some(path) => {
            let names = read_name_file(path)?;
            if names.len() != scales.len() {
                return Err(heatconv::Error::Input(format!(
                    "name file {} has {} entries but the checkpoint has {} nodes",
                    path.display(),
                    names.len(),
                    scales.len()
                ))
                .into());
            }
            Some(names)
        }
        None => None,
    };
    let mut order: Vec<usize> = (0..scales.len()).collect();
    order.sort_by(|&a, &b| scales[a].total_cmp(&scales[b]));
    let mut out =
        String::from("# learned per-node diffusion scales, ascending (ties by node id)\n");
    out.push_str(if names.is_some() {
        "# rank\tnode\tname\tscale\n"
    } else {
        "# rank\tnode\tscale\n"
    });
    for (rank, &p) in order.iter().enumerate() {
        match &names {
            Some(names) => {
                let _ = writeln!(out, "{rank}\t{p}\t{}\t{:?}", names[p], scales[p]);
            }
            None => {
                let _ = writeln!(out, "{rank}\t{p}\t{:?}", scales[p]);
            }
        }
    }
    create_out(&args.out)?;
    write(&args.out, "scales.tsv", &out)?;
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

pub fn generate_cmd(cmd: &GenerateCommand) -> anyhow::Result<ExitCode> {
    match cmd {
        GenerateCommand::Sbm(a) => {
            let ds = gen_sbm_node(&SbmParams {
                n_per_block: a.nodes_per_block,
                blocks: a.blocks,
                p_in: a.p_in,
                p_out: a.p_out,
                feat_dim: a.feat_dim,
                feat_shift: a.feat_shift,
                seed: a.seed,
            })?;
            save_node_dataset(&ds, &a.out)?;
            println!(
                "wrote {} nodes, {} edges, {} classes to {}",
                ds.num_nodes(),
                ds.graph.num_edges(),
                ds.num_classes,
                a.out.display()
            );
        }
        GenerateCommand::Population(a) => {
            let pop = gen_synthetic_population(&PopulationParams {
                samples_per_class: a.samples_per_class,
                n_nodes: a.nodes,
                edge_prob_by_class: a.edge_probs.clone(),
                feat_shift_by_class: a.feat_shifts.clone(),
                seed: a.seed,
            })?;
            let manifest = save_graph_population(&pop, &a.out)?;
            println!(
                "wrote {} graphs of {} nodes to {}",
                pop.len(),
                pop.num_nodes(),
                manifest.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
