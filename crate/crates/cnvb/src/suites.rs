//! Standard verification grids behind `cnvb verify`.

use std::fmt;
use std::str::FromStr;

use cnvb_core::network::{Activation, ConvLayerConfig, NetworkConfig, Pooling, Readout, Setting};
use cnvb_core::verify::{
    log_spaced, mc_gap_rate, verify_all_layers, verify_cover, verify_general, verify_gradients, verify_opnorm,
    verify_single_layer, GapClass, LipschitzTrialReport, NormKind,
};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest accepted relative deviation between the two operator norm paths.
pub const OPNORM_TOL: f64 = 1e-9;
/// A constructed instance must reach this ratio for a Lipschitz suite to count.
pub const NONVACUOUS_RATIO: f64 = 0.3;
pub const RATE_SLOPE: (f64, f64) = (-0.65, -0.35);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    LipschitzBasic,
    LipschitzGeneral,
    Cover,
    Gradient,
    Opnorm,
    McRate,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::LipschitzBasic,
        Suite::LipschitzGeneral,
        Suite::Cover,
        Suite::Gradient,
        Suite::Opnorm,
        Suite::McRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LipschitzBasic => "lipschitz-basic",
            Suite::LipschitzGeneral => "lipschitz-general",
            Suite::Cover => "cover",
            Suite::Gradient => "gradient",
            Suite::Opnorm => "opnorm",
            Suite::McRate => "mc-rate",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub check: String,
    pub case: String,
    pub trials: usize,
    pub violations: usize,
    /// The row's headline number: worst ratio, deviation, error or slope.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constructed_ratio: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub seed: u64,
    pub rows: Vec<SuiteRow>,
    pub passed: bool,
}

impl SuiteOutcome {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<20} {:<34} {:>7} {:>5} {:>24} {:>12}  ok\n",
            "check", "case", "trials", "viol", "value", "constructed"
        );
        for r in &self.rows {
            let c = r.constructed_ratio.map_or("-".to_string(), |v| format!("{v:.6}"));
            s.push_str(&format!(
                "{:<20} {:<34} {:>7} {:>5} {:>24.16e} {:>12}  {}\n",
                r.check,
                r.case,
                r.trials,
                r.violations,
                r.value,
                c,
                if r.passed { "yes" } else { "NO" }
            ));
        }
        s.push_str(&format!("suite {}: {}\n", self.suite, if self.passed { "PASS" } else { "FAIL" }));
        s
    }
}

fn lipschitz_row(r: &LipschitzTrialReport, case: String) -> SuiteRow {
    SuiteRow {
        check: r.suite.clone(),
        case,
        trials: r.trials,
        violations: r.violations + r.audit_failures,
        value: r.max_ratio,
        constructed_ratio: Some(r.constructed_ratio),
        passed: r.passed(),
    }
}

/// Every row passes and every check has a constructed ratio of at least
/// [`NONVACUOUS_RATIO`] somewhere in the grid.
fn lipschitz_passed(rows: &[SuiteRow]) -> bool {
    rows.iter().all(|r| r.passed)
        && rows.iter().all(|r| {
            rows.iter()
                .filter(|o| o.check == r.check)
                .any(|o| o.constructed_ratio.unwrap_or(0.0) >= NONVACUOUS_RATIO)
        })
}

/// `(beta, lambda, activation)` grid of the basic-setting audits.
pub const BASIC_GRID: [(f64, f64, Activation); 3] =
    [(0.5, 1.0, Activation::Tanh), (1.0, 2.0, Activation::Relu), (5.0, 1.0, Activation::Relu)];

/// `(beta, nu, chi, lambda, pooling, classes)` grid of the general-setting audits.
pub const GENERAL_GRID: [(f64, f64, f64, f64, Pooling, usize); 3] = [
    (0.5, 0.1, 2.0, 1.0, Pooling::None, 1),
    (1.0, 0.0, 1.0, 3.0, Pooling::Max2x2, 3),
    (5.0, 0.5, 1.5, 1.0, Pooling::Average2x2, 2),
];

pub fn general_config(nu: f64, chi: f64, lambda: f64, pooling: Pooling, classes: usize) -> NetworkConfig {
    NetworkConfig {
        setting: Setting::General,
        input_size: 4,
        input_channels: 2,
        conv: vec![
            ConvLayerConfig {
                out_channels: 3,
                kernel_size: 3,
                pooling,
            },
            ConvLayerConfig {
                out_channels: 2,
                kernel_size: 2,
                pooling: Pooling::None,
            },
        ],
        fc_widths: vec![6, classes],
        activation: Activation::Relu,
        readout: Readout::Ones,
        chi,
        nu,
        lambda,
        loss_range: 1.0,
    }
}

pub const COVER_CASES: [(f64, f64); 3] = [(1.0, 0.5), (1.0, 0.25), (2.0, 0.5)];

/// Sample sizes, grid points and reference class of the rate check.
pub fn rate_sample_sizes() -> Vec<usize> {
    log_spaced(100, 10_000, 9)
}
pub const RATE_GRID: usize = 201;

/// Run one suite. `trials` means trials per grid point for the Lipschitz
/// suites, samples per cover, random layers or networks for the oracle
/// suites, and repetitions per sample size for the rate check.
pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteOutcome> {
    if trials == 0 {
        return Err(Error::Usage("--trials must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let passed = match suite {
        Suite::LipschitzBasic => {
            for (i, &(beta, lambda, act)) in BASIC_GRID.iter().enumerate() {
                let cfg = NetworkConfig::basic(6, 2, 3, 3, act)
                    .with_readout(Readout::AlternatingSigns)
                    .with_lambda(lambda);
                let case = format!("beta={beta} lambda={lambda} {act:?}").to_lowercase();
                let s = 2 * i as u64;
                rows.push(lipschitz_row(&verify_single_layer(&cfg, beta, trials, seed.wrapping_add(s))?, case.clone()));
                rows.push(lipschitz_row(&verify_all_layers(&cfg, beta, trials, seed.wrapping_add(s + 1))?, case));
            }
            lipschitz_passed(&rows)
        }
        Suite::LipschitzGeneral => {
            for (i, &(beta, nu, chi, lambda, pooling, classes)) in GENERAL_GRID.iter().enumerate() {
                let cfg = general_config(nu, chi, lambda, pooling, classes);
                let case = format!("beta={beta} nu={nu} chi={chi} lambda={lambda} m={classes}");
                let r = verify_general(&cfg, beta, trials, seed.wrapping_add(i as u64))?;
                for rep in [&r.conv_layer, &r.fc_layer, &r.full] {
                    rows.push(lipschitz_row(rep, case.clone()));
                }
            }
            lipschitz_passed(&rows)
        }
        Suite::Cover => {
            for dim in 1..=3 {
                for &(radius, eps) in &COVER_CASES {
                    for norm in [NormKind::L2, NormKind::Linf] {
                        let r = verify_cover(radius, eps, dim, norm, trials, seed)?;
                        rows.push(SuiteRow {
                            check: format!("cover-{norm:?}").to_lowercase(),
                            case: format!("d={dim} radius={radius} eps={eps} size={}", r.cover_size),
                            trials: r.sampled,
                            violations: r.uncovered,
                            value: r.cover_size as f64 / r.bound,
                            constructed_ratio: None,
                            passed: r.passed(),
                        });
                    }
                }
            }
            rows.iter().all(|r| r.passed)
        }
        Suite::Gradient => {
            let r = verify_gradients(trials, seed)?;
            rows.push(SuiteRow {
                check: "finite-difference".into(),
                case: format!("{} coordinates", r.coordinates),
                trials: r.trials,
                violations: r.failures,
                value: r.max_rel_err,
                constructed_ratio: None,
                passed: r.passed(),
            });
            r.passed()
        }
        Suite::Opnorm => {
            let r = verify_opnorm(trials, seed)?;
            let [d, k, ci, co] = r.worst;
            let ok = r.passed(OPNORM_TOL);
            rows.push(SuiteRow {
                check: "fft-vs-dense".into(),
                case: format!("worst d={d} k={k} c_in={ci} c_out={co}"),
                trials: r.trials,
                violations: usize::from(!ok),
                value: r.max_rel_dev,
                constructed_ratio: None,
                passed: ok,
            });
            ok
        }
        Suite::McRate => {
            let ns = rate_sample_sizes();
            let r = mc_gap_rate(GapClass::Ramp, &ns, RATE_GRID, trials, seed)?;
            let slope = r.slope.unwrap_or(f64::NAN);
            let ok = slope >= RATE_SLOPE.0 && slope <= RATE_SLOPE.1;
            rows.push(SuiteRow {
                check: "log-log-slope".into(),
                case: format!("n={}..{} grid={RATE_GRID}", ns[0], ns[ns.len() - 1]),
                trials,
                violations: usize::from(!ok),
                value: slope,
                constructed_ratio: None,
                passed: ok,
            });
            ok
        }
    };
    Ok(SuiteOutcome {
        suite: suite.name().into(),
        seed,
        rows,
        passed,
    })
}
