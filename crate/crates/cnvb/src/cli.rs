//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 when a verification suite finds a violation, 2 on usage,
//! format or I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use cnvb_core::bounds::{nonuniform_bound, scenario_eval, theorem1_bounds, theorem2_bounds, BoundInput, BoundReport, Scenario};
use cnvb_core::network::Setting;
use cnvb_core::norms::{n_dist_with, sigma_dist_with, vec_l1_dist, InitPair, LayerNorms, ParamSet};
use cnvb_core::tensor::spectral_norm;
use serde_json::json;

use crate::cache::NormCache;
use crate::error::{io_err, Error, Result};
use crate::experiment::{run_sweep, write_outputs, DataSource, ExperimentConfig};
use crate::report::fmt_num;
use crate::snapshot::{read_snapshot, Snapshot};
use crate::suites::{run_suite, Suite};

#[derive(Debug, Parser)]
#[command(name = "cnvb", version, about = "Spectral norms, distances from initialization and generalization bounds for convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Sigma,
    N,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TheoremArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Nonuniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    ConvEps,
    Hadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    LipschitzBasic,
    LipschitzGeneral,
    Cover,
    Gradient,
    Opnorm,
    McRate,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::LipschitzBasic => Suite::LipschitzBasic,
            SuiteArg::LipschitzGeneral => Suite::LipschitzGeneral,
            SuiteArg::Cover => Suite::Cover,
            SuiteArg::Gradient => Suite::Gradient,
            SuiteArg::Opnorm => Suite::Opnorm,
            SuiteArg::McRate => Suite::McRate,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Operator norm of one layer (convolutions first, then fully connected).
    Opnorm {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance between the current parameters and the initialization.
    Dist {
        #[arg(long)]
        snapshot: PathBuf,
        /// Snapshot whose current parameters are the initialization; defaults
        /// to the initialization stored in `--snapshot`.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, value_enum)]
        norm: NormArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a generalization bound at the snapshot's distance from initialization.
    Bound {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, value_enum)]
        theorem: TheoremArg,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        lambda: f64,
        /// Leading constant of the bound.
        #[arg(long = "C", default_value_t = 1.0)]
        constant: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long = "train-loss", default_value_t = 0.0)]
        train_loss: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Side-by-side bounds on a constructed scenario.
    Compare {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        /// `c=..,d=..,k=..,L=..[,eps=..]` for conv-eps; `D=..,L=..` for hadamard.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 50_000.0)]
        n: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a numerical verification suite.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Width sweep: train one network per (width, seed) and write reports.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `synth` or `cifar:PATH`.
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Outcome {
    Done,
    Failed,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn initial_params(snap: &Snapshot, init: Option<&Path>) -> Result<ParamSet> {
    match init {
        Some(p) => Ok(read_snapshot(p)?.params),
        None => snap
            .initial
            .clone()
            .ok_or_else(|| Error::Usage("snapshot has no initialization; pass --init".into())),
    }
}

fn report_table(out: &mut impl Write, reports: &[BoundReport]) -> std::io::Result<()> {
    for r in reports {
        writeln!(out, "{:<28} {:>24}  {}", r.name, fmt_num(r.value), if r.applicable() { "applicable" } else { "not applicable" })?;
        for f in &r.flags {
            writeln!(out, "    [{}] {}", if f.holds { "x" } else { " " }, f.condition)?;
        }
        for (name, v) in &r.terms {
            writeln!(out, "    {name:<24} {}", fmt_num(*v))?;
        }
    }
    Ok(())
}

fn parse_dims(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--dims entry {kv:?} is not KEY=VALUE")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("--dims value {v:?} is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn dim(dims: &[(String, f64)], key: &str) -> Option<f64> {
    dims.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
}

fn count(dims: &[(String, f64)], key: &str) -> Result<usize> {
    let v = dim(dims, key).ok_or_else(|| Error::Usage(format!("--dims needs {key}=..")))?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Usage(format!("--dims {key} must be a nonnegative integer")));
    }
    Ok(v as usize)
}

fn scenario_from(arg: ScenarioArg, dims: &str) -> Result<Scenario> {
    let d = parse_dims(dims)?;
    let known: &[&str] = match arg {
        ScenarioArg::ConvEps => &["c", "d", "k", "L", "eps"],
        ScenarioArg::Hadamard => &["D", "L"],
    };
    if let Some((k, _)) = d.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(Error::Usage(format!("unknown --dims key {k:?}")));
    }
    Ok(match arg {
        ScenarioArg::ConvEps => Scenario::ConvEps {
            eps: dim(&d, "eps").unwrap_or(0.01),
            channels: count(&d, "c")?,
            input_size: count(&d, "d")?,
            kernel_size: count(&d, "k")?,
            depth: count(&d, "L")?,
        },
        ScenarioArg::Hadamard => Scenario::Hadamard {
            dim: count(&d, "D")?,
            depth: count(&d, "L")?,
        },
    })
}

fn execute(cmd: Command, out: &mut impl Write) -> Result<Outcome> {
    let io = |e: std::io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match cmd {
        Command::Opnorm { snapshot, layer, out: json_out } => {
            let snap = read_snapshot(&snapshot)?;
            let p = &snap.params;
            let cache = NormCache::new();
            let lc = p.conv.len();
            let (kind, shape, norm, dist) = if layer < lc {
                let d = p.conv_input_sizes[layer];
                let k = &p.conv[layer];
                let dist = match &snap.initial {
                    Some(init) => Some(cache.conv_norm(&k.try_sub(&init.conv[layer])?, d)?),
                    None => None,
                };
                let [k1, k2, ci, co] = k.dims();
                ("conv", format!("{k1}x{k2}x{ci}x{co} on {d}x{d}"), cache.conv_norm(k, d)?, dist)
            } else if layer < lc + p.fc.len() {
                let m = &p.fc[layer - lc];
                let dist = match &snap.initial {
                    Some(init) => Some(spectral_norm(&m.try_sub(&init.fc[layer - lc])?)?),
                    None => None,
                };
                ("fc", format!("{}x{}", m.rows(), m.cols()), spectral_norm(m)?, dist)
            } else {
                return Err(Error::Usage(format!("layer {layer} out of range: snapshot has {} layers", lc + p.fc.len())));
            };
            writeln!(out, "layer {layer} ({kind} {shape})").map_err(io)?;
            writeln!(out, "operator_norm            {}", fmt_num(norm)).map_err(io)?;
            if let Some(v) = dist {
                writeln!(out, "distance_from_init      {}", fmt_num(v)).map_err(io)?;
            }
            if let Some(path) = json_out {
                write_json(&path, &json!({"layer": layer, "kind": kind, "shape": shape, "operator_norm": norm, "distance_from_init": dist}))?;
            }
        }
        Command::Dist { snapshot, init, norm, out: json_out } => {
            let snap = read_snapshot(&snapshot)?;
            let initial = initial_params(&snap, init.as_deref())?;
            let pair = InitPair::new(&snap.params, &initial)?;
            let cache = NormCache::new();
            let (name, v) = match norm {
                NormArg::Sigma => ("sigma", sigma_dist_with(&pair, &cache)?),
                NormArg::N => ("n", n_dist_with(&pair, &cache)?),
                NormArg::L1 => ("l1", vec_l1_dist(&pair)?),
            };
            writeln!(out, "{name}\t{v}").map_err(io)?;
            if let Some(path) = json_out {
                write_json(&path, &json!({"norm": name, "distance": v}))?;
            }
        }
        Command::Bound {
            snapshot,
            init,
            theorem,
            n,
            delta,
            lambda,
            constant,
            eta,
            train_loss,
            out: json_out,
        } => {
            let snap = read_snapshot(&snapshot)?;
            let initial = initial_params(&snap, init.as_deref())?;
            let pair = InitPair::new(&snap.params, &initial)?;
            let cache = NormCache::new();
            let cfg = &snap.config;
            if theorem != TheoremArg::Two && cfg.setting != Setting::Basic {
                return Err(Error::Usage("theorem 1 and the nonuniform bound need a basic-setting snapshot".into()));
            }
            let beta = match theorem {
                TheoremArg::Two => n_dist_with(&pair, &cache)?,
                _ => sigma_dist_with(&pair, &cache)?,
            };
            let input = BoundInput {
                beta,
                params: cfg.trainable_params() as f64,
                n,
                delta,
                lambda,
                eta,
                constant,
                loss_range: cfg.loss_range,
                chi: cfg.chi,
                nu: cfg.nu,
                depth: cfg.depth(),
                train_loss,
            };
            let reports: Vec<BoundReport> = match theorem {
                TheoremArg::One => theorem1_bounds(&input)?.to_vec(),
                TheoremArg::Two => theorem2_bounds(&input)?.to_vec(),
                TheoremArg::Nonuniform => nonuniform_bound(beta, &input)?.to_vec(),
            };
            writeln!(out, "beta {}  W {}  n {n}  delta {delta}  lambda {lambda}", fmt_num(beta), input.params).map_err(io)?;
            report_table(out, &reports).map_err(io)?;
            if let Some(path) = json_out {
                write_json(&path, &json!({"input": input, "reports": reports}))?;
            }
        }
        Command::Compare {
            scenario,
            dims,
            lambda,
            n,
            delta,
            out: json_out,
        } => {
            let table = scenario_eval(scenario_from(scenario, &dims)?, lambda, n, delta)?;
            writeln!(out, "{:?}", table.scenario).map_err(io)?;
            writeln!(out, "{:<20} {:>24}", "quantity", "value").map_err(io)?;
            for (k, v) in &table.quantities {
                writeln!(out, "{k:<20} {v:>24.12}").map_err(io)?;
            }
            writeln!(out, "{:<20} {:>24}", "bound", "value").map_err(io)?;
            for (k, v) in &table.bounds {
                writeln!(out, "{k:<20} {v:>24.12}").map_err(io)?;
            }
            if let Some(path) = json_out {
                write_json(&path, &table)?;
            }
        }
        Command::Verify {
            suite,
            trials,
            seed,
            out: json_out,
        } => {
            let outcome = run_suite(suite.into(), trials, seed)?;
            write!(out, "{}", outcome.table()).map_err(io)?;
            if let Some(path) = json_out {
                write_json(&path, &outcome)?;
            }
            if !outcome.passed {
                return Ok(Outcome::Failed);
            }
        }
        Command::Train { config, data, out: dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let source: DataSource = data.parse()?;
            let records = run_sweep(&cfg, &source)?;
            write_outputs(&records, &dir)?;
            writeln!(out, "{:>6} {:>8} {:>6} {:>10} {:>10} {:>10} {:>12}", "width", "W", "seed", "train_err", "test_err", "gap", "beta").map_err(io)?;
            for r in &records {
                writeln!(
                    out,
                    "{:>6} {:>8} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>12.6}",
                    r.width, r.params, r.seed, r.train_error, r.test_error, r.gap, r.beta
                )
                .map_err(io)?;
            }
            writeln!(out, "reports written to {}", dir.display()).map_err(io)?;
        }
    }
    Ok(Outcome::Done)
}

/// Parse `argv` (program name first), run the command and return the exit code.
pub fn run<I, T>(argv: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match execute(cli.command, out) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::Failed) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}
