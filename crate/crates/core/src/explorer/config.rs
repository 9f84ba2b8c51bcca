use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::evaluate::{ChannelMode, EvalContext};
use super::rank::{Constraints, Metric, Priority};
use super::space::Grids;
use crate::data::{three_class_2d, Dataset};
use crate::error::{Error, Result};
use crate::inference::ExitMode;
use crate::mapping::HardwareModel;
use crate::metrics::DEFAULT_ECE_BINS;
use crate::netspec::{default_head_template, load_network_file, zoo, NetworkSpec};
use crate::tensor::TrainParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Seeded three-class Gaussian blobs in 2-D.
    #[serde(rename = "three_class_2d")]
    ThreeClass2d { train_per_class: usize, test_per_class: usize },
    /// Labeled CSV files (label first, then features).
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        input_shape: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainParams::default();
        TrainSettings {
            lr: d.lr,
            epochs: d.epochs,
            batch: d.batch,
        }
    }
}

fn default_priority() -> Priority {
    Priority::single(Metric::Accuracy)
}
fn one() -> usize {
    1
}
fn eight() -> usize {
    8
}
fn ece_bins() -> usize {
    DEFAULT_ECE_BINS
}
fn noise_count() -> usize {
    200
}
fn block_width() -> usize {
    16
}

/// Exploration config file. `seed` drives data generation, training and
/// MC sampling alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreConfig {
    /// Plain network file; without one, a three-block MLP sized to the data.
    #[serde(default)]
    pub network: Option<PathBuf>,
    #[serde(default = "block_width")]
    pub block_width: usize,
    pub data: DataSource,
    pub grids: Grids,
    pub constraints: Constraints,
    #[serde(default = "default_priority")]
    pub priority: Priority,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "one")]
    pub dropout_depth: usize,
    /// Masks per Masksembles layer; must exceed every scale in the grid.
    #[serde(default = "eight")]
    pub num_masks: usize,
    #[serde(default)]
    pub channel_mode: ChannelMode,
    #[serde(default)]
    pub exit_mode: ExitMode,
    #[serde(default = "ece_bins")]
    pub ece_bins: usize,
    #[serde(default = "noise_count")]
    pub noise_count: usize,
    #[serde(default)]
    pub hardware: Option<HardwareModel>,
}

impl ExploreConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExploreConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {}", path.display(), m)),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(n) = cfg.network.as_mut() {
            fix(n);
        }
        if let DataSource::Csv { train, test, .. } = &mut cfg.data {
            fix(train);
            fix(test);
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if !self.constraints.is_active() {
            return Err(Error::precondition("at least one constraint must be set"));
        }
        self.priority.check()?;
        if let Some(hw) = &self.hardware {
            hw.check()?;
        }
        Ok(())
    }

    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSource::ThreeClass2d {
                train_per_class,
                test_per_class,
            } => Ok((
                three_class_2d(*train_per_class, self.seed),
                three_class_2d(*test_per_class, self.seed.wrapping_add(1)),
            )),
            DataSource::Csv {
                train,
                test,
                input_shape,
            } => {
                let tr = Dataset::load_csv(train, input_shape.clone())?;
                let te = Dataset::load_csv(test, input_shape.clone())?;
                if tr.input_shape != te.input_shape {
                    return Err(Error::precondition("train and test inputs differ in shape"));
                }
                Ok((tr, te))
            }
        }
    }

    /// Resolves data, network and hardware into an evaluation context. A
    /// hardware model passed here overrides the one in the file.
    pub fn context(&self, hw_override: Option<HardwareModel>) -> Result<EvalContext> {
        let (train, test) = self.datasets()?;
        let classes = train.class_count.max(test.class_count);
        let base_net: NetworkSpec = match &self.network {
            Some(p) => load_network_file(p)?,
            None => {
                if train.input_shape.len() != 1 {
                    return Err(Error::precondition("the default network needs flat inputs"));
                }
                zoo::block_mlp(train.input_shape[0], self.block_width, 3, classes)
            }
        };
        let hw = hw_override.or_else(|| self.hardware.clone()).unwrap_or_default();
        hw.check()?;
        Ok(EvalContext {
            noise: train.noise_spec(self.noise_count, self.seed ^ 0x6E01_5E00),
            base_net,
            head_template: default_head_template(),
            train,
            test,
            hw,
            train_params: TrainParams {
                lr: self.train.lr,
                epochs: self.train.epochs,
                batch: self.train.batch,
                seed: self.seed,
            },
            dropout_depth: self.dropout_depth,
            num_masks: self.num_masks,
            channel_mode: self.channel_mode,
            exit_mode: self.exit_mode,
            ece_bins: self.ece_bins,
            seed: self.seed,
        })
    }
}
