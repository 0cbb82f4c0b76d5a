//! Width sweeps driven by a TOML config.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cnvb_core::network::{Example, Label};
use cnvb_core::train::{run_experiment, synth_dataset, ExperimentRecord, SweepSpec, TaskSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::cifar::{self, load_cifar10_binary};
use crate::error::{io_err, Error, Result};
use crate::report::{emit_figures, emit_report, ReportFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub data: DataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSpec {
    /// Seed of the synthetic generator.
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub task: TaskSpec,
    /// CIFAR-10 classes of the two-class task; the first becomes `+1`.
    pub classes: [u8; 2],
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_train: 400,
            n_test: 1000,
            task: TaskSpec::default(),
            classes: [3, 5],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("experiment config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Synth,
    /// A CIFAR-10 binary file, or a directory holding `data_batch_*.bin` and `test_batch.bin`.
    Cifar(PathBuf),
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            _ if s == "synth" => Ok(DataSource::Synth),
            Some(("cifar", p)) if !p.is_empty() => Ok(DataSource::Cifar(PathBuf::from(p))),
            _ => Err(Error::Usage(format!("--data must be `synth` or `cifar:PATH`, got {s:?}"))),
        }
    }
}

/// First `per_class` examples of each binary label, in file order, and the rest.
fn split_balanced(data: Vec<Example>, per_class: usize) -> (Vec<Example>, Vec<Example>) {
    let (mut pos, mut neg) = (0, 0);
    let mut first = Vec::new();
    let mut rest = Vec::new();
    for ex in data {
        let slot = if ex.y == Label::Binary(1) { &mut pos } else { &mut neg };
        if *slot < per_class {
            *slot += 1;
            first.push(ex);
        } else {
            rest.push(ex);
        }
    }
    (first, rest)
}

fn load_cifar(spec: &DataSpec, path: &Path, chi: f64) -> Result<(Vec<Example>, Vec<Example>)> {
    let classes = spec.classes;
    let bin = |v| cifar::to_binary(v, classes[0] as usize);
    if path.is_dir() {
        let mut train = Vec::new();
        for i in 1..=5 {
            let f = path.join(format!("data_batch_{i}.bin"));
            if f.exists() {
                train.extend(load_cifar10_binary(&f, Some(&classes), None, chi)?);
            }
        }
        let test = load_cifar10_binary(path.join("test_batch.bin"), Some(&classes), Some(spec.n_test / 2), chi)?;
        let (train, _) = split_balanced(bin(train), spec.n_train / 2);
        Ok((train, bin(test)))
    } else {
        let all = bin(load_cifar10_binary(path, Some(&classes), None, chi)?);
        let (train, rest) = split_balanced(all, spec.n_train / 2);
        let (test, _) = split_balanced(rest, spec.n_test / 2);
        Ok((train, test))
    }
}

/// Training and test sets for a sweep.
pub fn load_data(config: &ExperimentConfig, source: &DataSource) -> Result<(Vec<Example>, Vec<Example>)> {
    let spec = &config.data;
    let (train, test) = match source {
        DataSource::Synth => {
            let mut all = synth_dataset(spec.seed, spec.n_train + spec.n_test, config.sweep.input_size, &spec.task)?;
            let test = all.split_off(spec.n_train);
            (all, test)
        }
        DataSource::Cifar(path) => {
            if config.sweep.input_size != cifar::SIDE {
                return Err(Error::Usage(format!(
                    "CIFAR-10 inputs are {0}x{0}; set sweep.input_size = {0}",
                    cifar::SIDE
                )));
            }
            load_cifar(spec, path, spec.task.chi)?
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Usage("the data source produced an empty training or test set".into()));
    }
    Ok((train, test))
}

pub fn run_sweep(config: &ExperimentConfig, source: &DataSource) -> Result<Vec<ExperimentRecord>> {
    config.train.validate()?;
    let (train, test) = load_data(config, source)?;
    Ok(run_experiment(&config.sweep, &config.train, &train, &test)?)
}

pub const RECORDS_CSV: &str = "records.csv";
pub const RECORDS_JSON: &str = "records.json";

/// Records as CSV and JSON plus the figure datasets, all under `dir`.
pub fn write_outputs(records: &[ExperimentRecord], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    emit_report(records, ReportFormat::Csv, dir.join(RECORDS_CSV))?;
    emit_report(records, ReportFormat::Json, dir.join(RECORDS_JSON))?;
    emit_figures(records, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_source_parsing() {
        assert_eq!("synth".parse::<DataSource>().unwrap(), DataSource::Synth);
        assert_eq!("cifar:/x/y".parse::<DataSource>().unwrap(), DataSource::Cifar("/x/y".into()));
        assert!("cifar:".parse::<DataSource>().is_err());
        assert!("mnist".parse::<DataSource>().is_err());
    }

    #[test]
    fn shipped_config_parses() {
        let text = include_str!("../../../configs/desk_sweep.toml");
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert!(cfg.train.widths.len() >= 6);
        assert_eq!(cfg.sweep.seeds.len(), 3);
    }

    #[test]
    fn balanced_split() {
        let ex = |y| Example { x: vec![0.0], y: Label::Binary(y) };
        let (a, b) = split_balanced(vec![ex(1), ex(1), ex(-1), ex(1), ex(-1), ex(-1)], 2);
        assert_eq!(a.len(), 4);
        assert_eq!(b.len(), 2);
    }
}
