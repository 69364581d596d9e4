//! Flag, config-file and default resolution. Flags win over the `--config`
//! file, which wins over the built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use heatconv::kernel::{Family, DEFAULT_CHEBYSHEV_B};
use heatconv::nn::Backend;
use heatconv::train::TrainConfig;
use heatconv::PolynomialBasis;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Chebyshev,
    Hermite,
    Laguerre,
    Exact,
}

impl BasisArg {
    pub const ALL: [BasisArg; 4] = [Self::Chebyshev, Self::Hermite, Self::Laguerre, Self::Exact];

    pub fn family(self) -> Option<Family> {
        match self {
            Self::Chebyshev => Some(Family::Chebyshev),
            Self::Hermite => Some(Family::Hermite),
            Self::Laguerre => Some(Family::Laguerre),
            Self::Exact => None,
        }
    }
}

/// Keys accepted in a `--config` TOML file. Names match the long flags with
/// dashes replaced by underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub basis: Option<String>,
    pub order: Option<usize>,
    pub b: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub lr: Option<f64>,
    pub scale_lr: Option<f64>,
    pub alpha: Option<f64>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub folds: Option<usize>,
    pub readout_hidden: Option<usize>,
    pub initial_scale: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn basis(&self) -> anyhow::Result<Option<BasisArg>> {
        self.basis
            .as_deref()
            .map(|s| {
                BasisArg::from_str(s, true).map_err(|e| anyhow::anyhow!("config key basis: {e}"))
            })
            .transpose()
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct IoArgs {
    /// Dataset directory (node task) or population manifest or its directory (graph task)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Directory receiving every artifact [default: out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed for initialization, dropout and fold assignment [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with defaults for any of these flags (keys use underscores)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct BackendArgs {
    /// Kernel backend [default: chebyshev]
    #[arg(long, value_enum)]
    pub basis: Option<BasisArg>,
    /// Polynomial order m [default: 20, 30 for hermite]
    #[arg(long)]
    pub order: Option<usize>,
    /// Chebyshev spectral domain length [default: 2.0]
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    /// Hidden widths, comma separated [default: 64 for train-node, 16,16 for train-graph]
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Weight learning rate (Adam) [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Scale learning rate [default: 1.0]
    #[arg(long = "scale-lr")]
    pub scale_lr: Option<f64>,
    /// l1 weight on the scales [default: 0.1 for train-node, 1.0 for train-graph]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Dropout probability [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Maximum epochs [default: 200 for train-node, 100 for train-graph]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs [default: 50]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Cross-validation folds [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Readout hidden width for the graph task [default: 16]
    #[arg(long = "readout-hidden")]
    pub readout_hidden: Option<usize>,
    /// Starting diffusion scale of every node [default: 2.0]
    #[arg(long = "initial-scale")]
    pub initial_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Node,
    Graph,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub backend: Backend,
    /// Chebyshev selected without an explicit `b`.
    pub b_defaulted: bool,
    pub train: TrainConfig,
}

pub fn load_file(io: &IoArgs) -> anyhow::Result<FileConfig> {
    match &io.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

pub fn backend_for(
    basis: BasisArg,
    order: Option<usize>,
    b: Option<f64>,
) -> anyhow::Result<Backend> {
    Ok(match basis.family() {
        Some(family) => {
            if b.is_some() && family != Family::Chebyshev {
                log::warn!("--b only applies to chebyshev; ignored for {family}");
            }
            let order = order.unwrap_or(family.default_order());
            Backend::Polynomial(PolynomialBasis::new(
                family,
                order,
                b.unwrap_or(DEFAULT_CHEBYSHEV_B),
            )?)
        }
        None => Backend::Exact,
    })
}

pub fn resolve_backend(
    args: &BackendArgs,
    file: &FileConfig,
) -> anyhow::Result<(BasisArg, Backend, bool)> {
    let basis = match args.basis {
        Some(b) => b,
        None => file.basis()?.unwrap_or(BasisArg::Chebyshev),
    };
    let b = args.b.or(file.b);
    let backend = backend_for(basis, args.order.or(file.order), b)?;
    Ok((basis, backend, basis == BasisArg::Chebyshev && b.is_none()))
}

pub fn resolve(
    io: &IoArgs,
    backend: &BackendArgs,
    train: &TrainArgs,
    task: Task,
) -> anyhow::Result<RunConfig> {
    let file = load_file(io)?;
    let (_, backend, b_defaulted) = resolve_backend(backend, &file)?;
    let mut cfg = match task {
        Task::Node => TrainConfig::node_default(),
        Task::Graph => TrainConfig::graph_default(),
    };
    macro_rules! merge {
        ($field:ident, $flag:expr, $key:expr) => {
            if let Some(v) = $flag.clone().or($key.clone()) {
                cfg.$field = v;
            }
        };
    }
    merge!(seed, io.seed, file.seed);
    merge!(hidden_dims, train.hidden, file.hidden);
    merge!(lr_w, train.lr, file.lr);
    merge!(beta_s, train.scale_lr, file.scale_lr);
    merge!(alpha, train.alpha, file.alpha);
    merge!(dropout, train.dropout, file.dropout);
    merge!(epochs, train.epochs, file.epochs);
    merge!(patience, train.patience, file.patience);
    merge!(folds, train.folds, file.folds);
    merge!(readout_hidden, train.readout_hidden, file.readout_hidden);
    merge!(initial_scale, train.initial_scale, file.initial_scale);
    if cfg.hidden_dims.is_empty() || cfg.hidden_dims.contains(&0) {
        bail!("--hidden needs at least one positive width");
    }
    cfg.validate()?;
    Ok(RunConfig {
        dataset: io.dataset.clone().or(file.dataset),
        out: io
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        backend,
        b_defaulted,
        train: cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "lr = 0.05\nalpha = 0.3\nbasis = \"laguerre\"\nhidden = [8, 4]\n",
        )
        .unwrap();
        let io = IoArgs {
            config: Some(path),
            ..IoArgs::default()
        };
        let train = TrainArgs {
            lr: Some(0.2),
            ..TrainArgs::default()
        };
        let run = resolve(&io, &BackendArgs::default(), &train, Task::Node).unwrap();
        assert_eq!(run.train.lr_w, 0.2);
        assert_eq!(run.train.alpha, 0.3);
        assert_eq!(run.train.hidden_dims, vec![8, 4]);
        assert_eq!(run.train.dropout, 0.5);
        assert_eq!(run.backend.family(), Some(Family::Laguerre));
        assert!(!run.b_defaulted);
        assert_eq!(run.out, PathBuf::from("out"));
    }

    #[test]
    fn unknown_config_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "learning_rate = 0.1\n").unwrap();
        assert!(FileConfig::load(&path).is_err());
    }

    #[test]
    fn chebyshev_default_b_is_flagged() {
        let run = resolve(
            &IoArgs::default(),
            &BackendArgs::default(),
            &TrainArgs::default(),
            Task::Graph,
        )
        .unwrap();
        assert!(run.b_defaulted);
        assert_eq!(run.train.alpha, 1.0);
        let with_b = BackendArgs {
            b: Some(1.48),
            ..BackendArgs::default()
        };
        let run = resolve(
            &IoArgs::default(),
            &with_b,
            &TrainArgs::default(),
            Task::Node,
        )
        .unwrap();
        assert!(!run.b_defaulted);
    }
}
