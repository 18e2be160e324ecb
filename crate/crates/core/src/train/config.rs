use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allset::Variant;
use crate::dataset::{load_dataset, load_dataset_dir, DatasetBundle, DatasetPaths};
use crate::error::{Error, Result};
use crate::propagation::HnhnParams;

use super::features::SYNTHETIC_DIM;
use super::split::SplitFractions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AllsetTransformer,
    AllsetDeepsets,
    Mlp,
    Hgnn,
    Hnhn,
    Hcha,
    Hypergcn,
    Hypersage,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::AllsetTransformer,
        ModelKind::AllsetDeepsets,
        ModelKind::Mlp,
        ModelKind::Hgnn,
        ModelKind::Hnhn,
        ModelKind::Hcha,
        ModelKind::Hypergcn,
        ModelKind::Hypersage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AllsetTransformer => "allset_transformer",
            ModelKind::AllsetDeepsets => "allset_deepsets",
            ModelKind::Mlp => "mlp",
            ModelKind::Hgnn => "hgnn",
            ModelKind::Hnhn => "hnhn",
            ModelKind::Hcha => "hcha",
            ModelKind::Hypergcn => "hypergcn",
            ModelKind::Hypersage => "hypersage",
        }
    }
}

/// A bundle directory or explicit file paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Dir { dir: PathBuf },
    Paths(DatasetPaths),
}

impl DatasetSource {
    pub fn load(&self) -> Result<DatasetBundle> {
        match self {
            DatasetSource::Dir { dir } => load_dataset_dir(dir),
            DatasetSource::Paths(p) => load_dataset(p),
        }
    }

    /// Resolves relative paths against `base`.
    pub fn relative_to(&self, base: &Path) -> Self {
        let join = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        match self {
            DatasetSource::Dir { dir } => DatasetSource::Dir { dir: join(dir) },
            DatasetSource::Paths(p) => DatasetSource::Paths(DatasetPaths {
                hypergraph: join(&p.hypergraph),
                features: p.features.as_ref().map(join),
                labels: join(&p.labels),
                meta: p.meta.as_ref().map(join),
                features_header: p.features_header,
            }),
        }
    }
}

/// Node features read from the dataset or synthesized from the labels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSource {
    #[default]
    Dataset,
    /// Padded one-hot labels plus Gaussian noise, drawn once from the base
    /// seed and shared by all runs.
    Gaussian {
        sigma: f64,
        #[serde(default = "synthetic_dim")]
        dim: usize,
    },
}

fn synthetic_dim() -> usize {
    SYNTHETIC_DIM
}

macro_rules! default_fns {
    ($($name:ident: $t:ty = $v:expr;)*) => {
        $(fn $name() -> $t { $v })*
    };
}

default_fns! {
    d_hidden: usize = 64;
    d_heads: usize = 1;
    d_layers: usize = 1;
    d_lr: f64 = 1e-3;
    d_epochs: usize = 500;
    d_patience: usize = 100;
    d_runs: usize = 20;
    d_power: f64 = 1.0;
    yes: bool = true;
}

/// Everything that determines an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub features: FeatureSource,
    pub model: ModelKind,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_heads")]
    pub heads: usize,
    #[serde(default = "d_layers")]
    pub layers: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default)]
    pub wd: f64,
    /// Rate applied to the input and after every hidden activation.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub row_normalize: bool,
    /// Linear projection of the raw features to `hidden` before the first
    /// AllSet layer.
    #[serde(default = "yes")]
    pub input_projection: bool,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub hnhn: HnhnParams,
    #[serde(default = "d_power")]
    pub hypersage_power: f64,
}

impl TrainConfig {
    /// A config with every optional field at its default.
    pub fn new(dataset: DatasetSource, model: ModelKind) -> Self {
        Self {
            dataset,
            features: FeatureSource::default(),
            model,
            hidden: d_hidden(),
            heads: d_heads(),
            layers: d_layers(),
            lr: d_lr(),
            wd: 0.0,
            dropout: 0.0,
            epochs: d_epochs(),
            patience: d_patience(),
            runs: d_runs(),
            seed: 0,
            split: SplitFractions::default(),
            row_normalize: false,
            input_projection: true,
            variant: Variant::default(),
            hnhn: HnhnParams::default(),
            hypersage_power: d_power(),
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths are taken relative to
    /// the file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            cfg.dataset = cfg.dataset.relative_to(base);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.hidden == 0 || self.heads == 0 || self.layers == 0 || self.runs == 0 {
            return bad("hidden, heads, layers and runs must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!("{} heads do not divide hidden width {}", self.heads, self.hidden));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.wd >= 0.0 && self.wd.is_finite()) {
            return bad(format!("learning rate {} / weight decay {} out of range", self.lr, self.wd));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.patience == 0 {
            return bad("patience must be positive".into());
        }
        if !(self.hypersage_power >= 1.0 && self.hypersage_power.is_finite()) {
            return bad(format!("power-mean exponent must be >= 1, got {}", self.hypersage_power));
        }
        if let FeatureSource::Gaussian { sigma, dim } = self.features {
            if !(sigma >= 0.0 && sigma.is_finite()) || dim == 0 {
                return bad(format!("gaussian features need sigma >= 0 and dim > 0, got {sigma}, {dim}"));
            }
        }
        self.split.validate()
    }

    /// Hex SHA-256 of the canonical JSON form, defaults included.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Seed of run `index`.
    pub fn run_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in_and_hash_is_stable() {
        let cfg = TrainConfig::from_json(r#"{"dataset": {"dir": "data/zoo"}, "model": "allset_transformer"}"#, "c").unwrap();
        assert_eq!(cfg, TrainConfig::new(DatasetSource::Dir { dir: "data/zoo".into() }, ModelKind::AllsetTransformer));
        assert_eq!((cfg.epochs, cfg.patience, cfg.runs, cfg.dropout), (500, 100, 20, 0.0));
        assert_eq!(cfg.hash().len(), 64);
        let round: TrainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.lr = 0.01;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn explicit_paths_and_features() {
        let cfg = TrainConfig::from_json(
            r#"{"dataset": {"hypergraph": "a.hg", "labels": "a.labels"},
                "features": {"kind": "gaussian", "sigma": 0.6},
                "model": "hgnn", "runs": 1}"#,
            "c",
        )
        .unwrap();
        assert!(matches!(cfg.dataset, DatasetSource::Paths(_)));
        assert_eq!(cfg.features, FeatureSource::Gaussian { sigma: 0.6, dim: 100 });
        let moved = cfg.dataset.relative_to(Path::new("/x"));
        let DatasetSource::Paths(p) = moved else { unreachable!() };
        assert_eq!(p.hypergraph, PathBuf::from("/x/a.hg"));
    }

    #[test]
    fn invalid_configs() {
        let base = r#"{"dataset": {"dir": "d"}, "model": "mlp""#;
        for extra in [r#","heads": 3"#, r#","dropout": 1.0"#, r#","runs": 0"#, r#","lr": -1"#] {
            let e = TrainConfig::from_json(&format!("{base}{extra}}}"), "c").unwrap_err();
            assert_eq!(e.kind(), "InvalidConfig", "{extra}");
        }
        let e = TrainConfig::from_json(&format!("{base},\"bogus\": 1}}"), "c").unwrap_err();
        assert_eq!(e.kind(), "ParseError");
    }
}
