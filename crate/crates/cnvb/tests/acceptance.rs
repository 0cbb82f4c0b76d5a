//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cnvb::experiment::{run_sweep, write_outputs, DataSource, ExperimentConfig, RECORDS_CSV};
use cnvb::report::read_report_csv;
use cnvb::snapshot::{decode_snapshot, encode_snapshot, read_snapshot, write_snapshot, Metadata, Snapshot};
use cnvb::suites::{run_suite, Suite, NONVACUOUS_RATIO};
use cnvb::Error;
use cnvb_core::bounds::{
    nonuniform_bound, radius_index, scenario_eval, theorem1_bounds, theorem2_bounds, BoundInput, Scenario,
};
use cnvb_core::convspec::{kernel_operator_norm, operator_21_norm, ConvLayerSpec};
use cnvb_core::linalg::singular_values;
use cnvb_core::network::{Activation, ConvLayerConfig, NetworkConfig, Pooling, Readout, Setting};
use cnvb_core::norms::{sigma_dist, vec_l1_dist, InitPair, ParamSet};
use cnvb_core::rng::SeededRng;
use cnvb_core::tensor::{RealMatrix, RealTensor4};
use cnvb_core::train::{init_params, median_beta_by_width, spearman};
use cnvb_core::verify::{build_cover, NormKind};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn top_singular(m: &RealMatrix) -> f64 {
    singular_values(m).unwrap().into_iter().fold(0.0, f64::max)
}

/// `op(K)` built entry by entry from the circular correlation
/// `out[p,q,o] = sum K[a,b,i,o] x[(p+a)%d, (q+b)%d, i]`.
fn dense_operator(k: &RealTensor4, d: usize) -> RealMatrix {
    let [k1, k2, cin, cout] = k.dims();
    let mut m = RealMatrix::zeros(d * d * cout, d * d * cin);
    for p in 0..d {
        for q in 0..d {
            for o in 0..cout {
                for a in 0..k1 {
                    for b in 0..k2 {
                        for i in 0..cin {
                            let row = (p * d + q) * cout + o;
                            let col = (((p + a) % d) * d + (q + b) % d) * cin + i;
                            m.add_at(row, col, k.get(a, b, i, o));
                        }
                    }
                }
            }
        }
    }
    m
}

fn c1_opnorm_oracle() -> Check {
    let start = Instant::now();
    let root = SeededRng::new(0xc1);
    let mut worst: f64 = 0.0;
    for t in 0..200 {
        let mut rng = root.split(t);
        let d = 2 + rng.below(7);
        let k = 1 + rng.below(d);
        let (cin, cout) = (1 + rng.below(3), 1 + rng.below(3));
        let kernel = RealTensor4::gaussian([k, k, cin, cout], &mut rng);
        let fast = kernel_operator_norm(&kernel, d).unwrap();
        let dense = top_singular(&dense_operator(&kernel, d));
        worst = worst.max((fast - dense).abs() / dense);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, || format!("max rel. deviation {worst:e}"))?;
    ensure(secs <= 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!("200 layers, max rel. deviation {worst:.2e}, {secs:.1}s"))
}

fn all_eps(k: usize, c: usize, eps: f64) -> RealTensor4 {
    RealTensor4::from_fn([k, k, c, c], |_, _, _, _| eps)
}

fn c2_all_eps_closed_form() -> Check {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in 1..=3usize {
        for eps in [1e-3, 1e-2, 1.0 / (k * k) as f64] {
            for c in 1..=3usize {
                for d in [4, 8] {
                    let got = kernel_operator_norm(&all_eps(k, c, eps), d).unwrap();
                    let want = eps * (c * k * k) as f64;
                    worst = worst.max((got - want).abs());
                    cases += 1;
                }
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max abs. error {worst:e}"))?;
    Ok(format!("{cases} kernels, max abs. error {worst:.2e}"))
}

fn c3_conv_eps_identities() -> Check {
    let (mut e_op, mut e_sigma, mut e_21): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for c in 1..=3usize {
        for k in 1..=3usize {
            for d in [4usize, 8] {
                for eps in [1.0 / (k * k) as f64, 0.01, 0.1] {
                    let depth = 3;
                    let k0 = RealTensor4::delta_identity(k, c);
                    let kk = k0.try_add(&all_eps(k, c, eps)).unwrap();
                    let op = kernel_operator_norm(&kk, d).unwrap();
                    e_op = e_op.max((op - (1.0 + eps * (k * k * c) as f64)).abs());
                    let cur = ParamSet::new(vec![kk.clone(); depth], vec![d; depth], vec![], None).unwrap();
                    let init = ParamSet::new(vec![k0.clone(); depth], vec![d; depth], vec![], None).unwrap();
                    let s = sigma_dist(&InitPair::new(&cur, &init).unwrap()).unwrap();
                    e_sigma = e_sigma.max((s - eps * (k * k * c * depth) as f64).abs());
                    let dense21 = operator_21_norm(
                        &ConvLayerSpec::new(kk.clone(), d).unwrap(),
                        &ConvLayerSpec::new(k0, d).unwrap(),
                    )
                    .unwrap();
                    let want21 = eps * (c as f64).powf(1.5) * (d * d * k) as f64;
                    e_21 = e_21.max((dense21 - want21).abs());
                    let table = scenario_eval(
                        Scenario::ConvEps {
                            eps,
                            channels: c,
                            input_size: d,
                            kernel_size: k,
                            depth,
                        },
                        1.0,
                        1e4,
                        0.05,
                    )
                    .unwrap();
                    e_op = e_op.max((table.quantity("op_norm").unwrap() - op).abs());
                    e_sigma = e_sigma.max((table.quantity("sigma_dist").unwrap() - s).abs());
                    e_21 = e_21.max((table.quantity("op21_diff").unwrap() - want21).abs());
                }
            }
        }
    }
    ensure(e_op <= 1e-9 && e_sigma <= 1e-9, || format!("op error {e_op:e}, sigma error {e_sigma:e}"))?;
    ensure(e_21 <= 1e-6, || format!("(2,1) error {e_21:e}"))?;
    let t = scenario_eval(
        Scenario::ConvEps {
            eps: 1.0 / 9.0,
            channels: 2,
            input_size: 8,
            kernel_size: 3,
            depth: 3,
        },
        1.0,
        1e4,
        0.05,
    )
    .unwrap();
    let (op, s) = (t.quantity("op_norm").unwrap(), t.quantity("sigma_dist").unwrap());
    ensure((op - 3.0).abs() <= 1e-9 && (s - 6.0).abs() <= 1e-9, || format!("worked case op {op}, sigma {s}"))?;
    let (ours, bft) = (t.bound("this_main").unwrap(), t.bound("bft_main").unwrap());
    ensure(ours < bft, || format!("main term {ours} not below competitor {bft}"))?;
    Ok(format!(
        "max errors: op {e_op:.1e}, sigma {e_sigma:.1e}, (2,1) {e_21:.1e}; worked case op=3 sigma=6, main {ours:.1} < {bft:.1}"
    ))
}

fn c4_hadamard_identities() -> Check {
    let mut worst: f64 = 0.0;
    for dim in [2usize, 4, 8, 16, 32] {
        let s = 1.0 / (dim as f64).sqrt();
        let h = RealMatrix::from_fn(dim, dim, |i, j| if (i & j).count_ones() % 2 == 0 { s } else { -s });
        let v = RealMatrix::from_fn(dim, dim, |i, j| h.get(i, j) + if i == j { 1.0 } else { 0.0 });
        let n21: f64 = (0..dim).map(|j| (0..dim).map(|i| h.get(i, j).powi(2)).sum::<f64>().sqrt()).sum();
        let direct = [top_singular(&v), top_singular(&h), n21];
        let t = scenario_eval(Scenario::Hadamard { dim, depth: 3 }, 1.0, 1e4, 0.05).unwrap();
        let piped = [
            t.quantity("op_norm").unwrap(),
            t.quantity("layer_dist").unwrap(),
            t.quantity("op21_diff").unwrap(),
        ];
        for (got, want) in direct.iter().chain(&piped).zip([2.0, 1.0, dim as f64].iter().cycle()) {
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max abs. error {worst:e}"))?;
    Ok(format!("D in 2..32, max abs. error {worst:.2e}"))
}

fn c5_norm_domination() -> Check {
    let root = SeededRng::new(0xc5);
    let mut violations = 0;
    let mut equal = 0;
    let mut tightest: f64 = 0.0;
    for t in 0..1000 {
        let mut rng = root.split(t);
        let d = 2 + rng.below(7);
        let k = 1 + rng.below(d.min(4));
        let c = 1 + rng.below(3);
        let depth = 1 + rng.below(3);
        let cfg = NetworkConfig::basic(d, c, k, depth, Activation::Relu);
        let a = init_params(&cfg, &mut rng).unwrap();
        let mut b = a.clone();
        let scale = rng.uniform_in(1e-3, 10.0);
        for v in b.trainable_mut() {
            *v += scale * rng.gaussian();
        }
        let pair = InitPair::new(&b, &a).unwrap();
        let (s, l1) = (sigma_dist(&pair).unwrap(), vec_l1_dist(&pair).unwrap());
        // equality holds for same-sign single-channel kernels; the two sums
        // then differ only by rounding
        if s > l1 * (1.0 + 1e-12) {
            violations += 1;
        } else if s >= l1 * (1.0 - 1e-12) {
            equal += 1;
        }
        tightest = tightest.max(s / l1);
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("1000 pairs, 0 violations, {equal} at equality to rounding, largest sigma/l1 {tightest:.16}"))
}

fn c6_lipschitz_suites() -> Check {
    let start = Instant::now();
    let mut lines = Vec::new();
    for suite in [Suite::LipschitzBasic, Suite::LipschitzGeneral] {
        let out = run_suite(suite, 1000, 0x6).map_err(|e| e.to_string())?;
        let mut checks: Vec<&str> = Vec::new();
        for r in &out.rows {
            if !checks.contains(&r.check.as_str()) {
                checks.push(&r.check);
            }
        }
        for check in checks {
            let rows: Vec<_> = out.rows.iter().filter(|r| r.check == check).collect();
            let viol: usize = rows.iter().map(|r| r.violations).sum();
            let trials: usize = rows.iter().map(|r| r.trials).sum();
            let worst = rows.iter().map(|r| r.value).fold(0.0, f64::max);
            let built = rows.iter().filter_map(|r| r.constructed_ratio).fold(0.0, f64::max);
            ensure(viol == 0, || format!("{check}: {viol} violations"))?;
            ensure(built >= NONVACUOUS_RATIO, || format!("{check}: constructed ratio {built}"))?;
            lines.push(format!("{check} {trials} trials max {worst:.3} built {built:.3}"));
        }
        ensure(out.passed, || format!("{} failed", out.suite))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs <= 300.0, || format!("took {secs:.0}s"))?;
    Ok(format!("{}; {secs:.1}s", lines.join(", ")))
}

fn c7_gradients() -> Check {
    let out = run_suite(Suite::Gradient, 20, 0x7).map_err(|e| e.to_string())?;
    let r = &out.rows[0];
    ensure(out.passed && r.trials == 20, || format!("{r:?}"))?;
    Ok(format!("20 networks, {}, max rel. error {:.2e}", r.case, r.value))
}

fn c8_covers() -> Check {
    let out = run_suite(Suite::Cover, 10_000, 0x8).map_err(|e| e.to_string())?;
    ensure(out.passed, || format!("{:?}", out.rows.iter().find(|r| !r.passed)))?;
    let mut largest: f64 = 0.0;
    for dim in 1..=3 {
        for (kappa, eps) in [(1.0, 0.5), (1.0, 0.25), (2.0, 0.5)] {
            for norm in [NormKind::L2, NormKind::Linf] {
                let size = build_cover(kappa, eps, dim, norm).unwrap().centers.len() as f64;
                let cap = (3.0 * kappa / eps as f64).powi(dim as i32);
                ensure(size <= cap, || format!("d={dim} kappa={kappa} eps={eps}: {size} > {cap}"))?;
                largest = largest.max(size / cap);
            }
        }
    }
    Ok(format!("{} covers, 1e4 samples each, all covered; largest size/cap {largest:.3}", out.rows.len()))
}

fn c9_gap_rate() -> Check {
    let seed = 0x9a9;
    let out = run_suite(Suite::McRate, 100, seed).map_err(|e| e.to_string())?;
    let slope = out.rows[0].value;
    ensure((-0.65..=-0.35).contains(&slope), || format!("slope {slope}"))?;
    Ok(format!("slope {slope:.3} (seed {seed:#x}, 100 reps)"))
}

fn c10_desk_experiment() -> Check {
    let start = Instant::now();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk_sweep.toml");
    let cfg = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
    let widths = cfg.train.widths.clone();
    ensure(widths.len() >= 6 && cfg.sweep.seeds.len() >= 3, || "sweep too small".into())?;
    let records = run_sweep(&cfg, &DataSource::Synth).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_outputs(&records, dir.path()).map_err(|e| e.to_string())?;
    let rows = read_report_csv(dir.path().join(RECORDS_CSV)).map_err(|e| e.to_string())?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let wb: Vec<f64> = rows.iter().map(|r| r.w_times_beta).collect();
    let rho = spearman(&gaps, &wb).unwrap();
    let direct = spearman(
        &records.iter().map(|r| r.gap).collect::<Vec<_>>(),
        &records.iter().map(|r| r.w_times_beta()).collect::<Vec<_>>(),
    )
    .unwrap();
    ensure(rho.to_bits() == direct.to_bits(), || format!("re-parsed spearman {rho} != {direct}"))?;
    ensure(rho >= 0.3, || format!("spearman {rho:.3}"))?;
    let medians = median_beta_by_width(&records);
    let top = &medians[medians.len() - medians.len() / 2 - medians.len() % 2..];
    let shown: Vec<String> = top.iter().map(|(w, b)| format!("{w}:{b:.2}")).collect();
    ensure(top.windows(2).all(|p| p[1].1 <= p[0].1), || format!("median beta not nonincreasing: {shown:?}"))?;
    let secs = start.elapsed().as_secs_f64();
    Ok(format!(
        "{} runs, spearman(gap, W*beta) {rho:.3}, top-half median beta {}, {secs:.0}s",
        records.len(),
        shown.join(" ")
    ))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn c11_bound_evaluators() -> Check {
    let base = BoundInput {
        beta: 5.0,
        params: 20.0,
        n: 100.0,
        delta: (-1.0f64).exp(),
        lambda: 1.0,
        eta: 0.0,
        constant: 1.0,
        train_loss: 0.0,
        ..BoundInput::default()
    };
    let t1 = theorem1_bounds(&base).unwrap();
    let want = [
        (20.0 * (5.0 + 100f64.ln()) + 1.0) / 100.0,
        1.01f64.sqrt(),
        5.0 * (0.2f64).sqrt() + 0.1,
    ];
    for (r, w) in t1.iter().zip(want) {
        ensure(close(r.value, w), || format!("{} = {} want {w}", r.name, r.value))?;
    }
    let zero = theorem1_bounds(&BoundInput { beta: 0.0, ..base }).unwrap();
    ensure(close(zero[2].value, 0.1), || format!("beta=0 linear {}", zero[2].value))?;

    let t2_in = BoundInput { depth: 4, ..base };
    let t2 = theorem2_bounds(&t2_in).unwrap();
    let hand = ((20.0 * (5.0 + 5f64.ln()) + 1.0) / 100.0).sqrt();
    ensure(close(t2[1].value, hand), || format!("theorem2 sqrt {} want {hand}", t2[1].value))?;
    let lip = 5.0 * (1.0 + 5.0 / 4.0f64).powi(4);
    ensure(close(t2[2].value, lip * 0.2f64.sqrt() + 0.1), || format!("theorem2 linear {}", t2[2].value))?;
    let z2 = theorem2_bounds(&BoundInput { beta: 0.0, ..t2_in }).unwrap();
    ensure(close(z2[2].value, 0.1), || format!("beta=0 theorem2 linear {}", z2[2].value))?;

    for (beta, above) in [(5.0 - 1e-9, false), (5.0, true), (5.0 + 1e-9, true)] {
        let r = theorem1_bounds(&BoundInput { beta, ..base }).unwrap();
        ensure(r[1].applicable() == above && r[2].applicable() != above, || format!("theorem1 flags at {beta}"))?;
    }
    // chi = lambda = 1, nu = 0, L = 1: lipschitz constant beta (1 + beta) crosses 5 at (sqrt 21 - 1) / 2
    let star = (21f64.sqrt() - 1.0) / 2.0;
    for (beta, above) in [(star - 1e-9, false), (star + 1e-9, true)] {
        let r = theorem2_bounds(&BoundInput { beta, depth: 1, ..base }).unwrap();
        ensure(r[1].applicable() == above && r[2].applicable() != above, || format!("theorem2 flags at {beta}"))?;
    }
    ensure(radius_index(4.0) == 0 && radius_index(12.0) == 2, || "radius grid".into())?;
    let nu = nonuniform_bound(12.0, &base).unwrap();
    ensure(nu.iter().all(|r| r.value.is_finite() && r.value > 0.0), || "nonuniform".into())?;
    Ok(format!("worked examples to 1e-12 (theorem2 sqrt display = {hand:.6}); flags flip at beta = 5 and at lipschitz constant 5"))
}

fn random_snapshot(rng: &mut SeededRng, i: usize) -> Snapshot {
    let act = if rng.below(2) == 0 { Activation::Relu } else { Activation::Tanh };
    let config = if i % 2 == 0 {
        let d = 2 + rng.below(5);
        NetworkConfig::basic(d, 1 + rng.below(3), 1 + rng.below(d), 1 + rng.below(3), act)
            .with_readout(Readout::Gaussian { seed: rng.next_u64() })
            .with_lambda(1.0 + 10.0 * rng.uniform())
    } else {
        NetworkConfig {
            setting: Setting::General,
            input_size: 4,
            input_channels: 1 + rng.below(3),
            conv: vec![ConvLayerConfig {
                out_channels: 1 + rng.below(3),
                kernel_size: 1 + rng.below(3),
                pooling: [Pooling::None, Pooling::Average2x2, Pooling::Max2x2][rng.below(3)],
            }],
            fc_widths: vec![1 + rng.below(4), 1 + rng.below(3)],
            activation: act,
            readout: Readout::Ones,
            chi: rng.uniform_in(0.5, 3.0),
            nu: rng.uniform(),
            lambda: 1.0 + rng.uniform(),
            loss_range: 1.0,
        }
    };
    let init = init_params(&config, rng).unwrap();
    let mut cur = init.clone();
    for v in cur.trainable_mut() {
        *v += rng.gaussian() * 10f64.powi(rng.below(20) as i32 - 10);
    }
    let mut snap = Snapshot::new(config, cur, (rng.below(3) > 0).then_some(init)).unwrap();
    snap.metadata = Metadata {
        seed: Some(rng.next_u64()),
        epoch: (rng.below(2) == 0).then(|| rng.next_u64() % 1000),
        created: None,
    };
    snap
}

fn bits(p: &ParamSet) -> Vec<u64> {
    let mut v: Vec<u64> = p.trainable().map(|x| x.to_bits()).collect();
    v.extend(p.readout.iter().flatten().map(|x| x.to_bits()));
    v
}

fn c12_snapshots() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = SeededRng::new(0xc12);
    for i in 0..10 {
        let s = random_snapshot(&mut root.split(i as u64), i);
        let path = dir.path().join(format!("s{i}.cnvb"));
        write_snapshot(&path, &s).map_err(|e| e.to_string())?;
        let back = read_snapshot(&path).map_err(|e| e.to_string())?;
        ensure(back == s, || format!("snapshot {i} differs after round trip"))?;
        ensure(bits(&back.params) == bits(&s.params), || format!("snapshot {i} parameters not bit-identical"))?;
        ensure(
            back.initial.as_ref().map(bits) == s.initial.as_ref().map(bits),
            || format!("snapshot {i} initialization not bit-identical"),
        )?;
        ensure(back.config.chi.to_bits() == s.config.chi.to_bits(), || format!("snapshot {i} config"))?;
        let bytes = std::fs::read(&path).unwrap();
        ensure(encode_snapshot(&back).unwrap() == bytes, || format!("snapshot {i} re-encodes differently"))?;
    }
    let good = encode_snapshot(&random_snapshot(&mut root.split(99), 0)).unwrap();
    let hl = u64::from_le_bytes(good[8..16].try_into().unwrap()) as usize;
    let mut bad_magic = good.clone();
    bad_magic[3] ^= 0xff;
    let mut huge_header = good.clone();
    huge_header[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
    let mut trailing = good.clone();
    trailing.extend_from_slice(&[0; 8]);
    let mut nan = good.clone();
    let at = 16 + hl;
    nan[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
    let cases: [(&str, Vec<u8>, fn(&Error) -> bool); 6] = [
        ("bad magic", bad_magic, |e| matches!(e, Error::Format(_))),
        ("header overrun", huge_header, |e| matches!(e, Error::Format(_))),
        ("broken header", good[..16 + hl / 2].to_vec(), |e| matches!(e, Error::Format(_))),
        ("truncated payload", good[..16 + hl + 12].to_vec(), |e| matches!(e, Error::Format(m) if m.contains("current.conv.0"))),
        ("trailing bytes", trailing, |e| matches!(e, Error::Format(_))),
        ("nan payload", nan, |e| matches!(e, Error::Numeric(_))),
    ];
    for (name, bytes, expect) in cases {
        match decode_snapshot(&bytes) {
            Err(e) if expect(&e) => {}
            other => return Err(format!("{name}: got {other:?}")),
        }
    }
    Ok("10 fuzzed snapshots bit-identical; 6 malformed files rejected with the expected error class".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("operator-norm oracle equivalence", c1_opnorm_oracle),
        ("all-eps kernel closed form", c2_all_eps_closed_form),
        ("conv-eps scenario identities", c3_conv_eps_identities),
        ("hadamard identities", c4_hadamard_identities),
        ("sigma distance below l1 distance", c5_norm_domination),
        ("lipschitz lemma suites", c6_lipschitz_suites),
        ("gradient correctness", c7_gradients),
        ("covering construction", c8_covers),
        ("monte-carlo gap rate", c9_gap_rate),
        ("desk-scale width sweep", c10_desk_experiment),
        ("bound evaluators", c11_bound_evaluators),
        ("snapshot round trip", c12_snapshots),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
