use cnvb_core::network::{Activation, ConvLayerConfig, NetworkConfig, Pooling, Readout, Setting};
use cnvb_core::verify::{
    build_cover, mc_gap_rate, verify_all_layers, verify_cover, verify_general, verify_single_layer,
    log_spaced, GapClass, NormKind,
};

fn general(nu: f64, chi: f64, lambda: f64, pooling: Pooling, classes: usize) -> NetworkConfig {
    NetworkConfig {
        setting: Setting::General,
        input_size: 4,
        input_channels: 2,
        conv: vec![
            ConvLayerConfig { out_channels: 3, kernel_size: 3, pooling },
            ConvLayerConfig { out_channels: 2, kernel_size: 2, pooling: Pooling::None },
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

#[test]
fn basic_suites_have_no_violations() {
    for (beta, lambda, act) in [(1.0, 2.0, Activation::Relu), (0.5, 1.0, Activation::Tanh), (5.0, 1.0, Activation::Relu)] {
        let mut cfg = NetworkConfig::basic(6, 2, 3, 3, act).with_readout(Readout::AlternatingSigns);
        cfg.lambda = lambda;
        let single = verify_single_layer(&cfg, beta, 200, 11).unwrap();
        let all = verify_all_layers(&cfg, beta, 200, 12).unwrap();
        println!("{single:?}\n{all:?}");
        assert!(single.passed() && all.passed());
        assert!(single.max_ratio <= 1.0 + 1e-9 && all.max_ratio <= 1.0 + 1e-9);
    }
}

#[test]
fn constructed_instances_are_tight() {
    let cfg = NetworkConfig::basic(6, 2, 3, 3, Activation::Relu);
    let single = verify_single_layer(&cfg, 0.5, 1, 0).unwrap();
    assert!((single.constructed_ratio - (-0.5f64).exp()).abs() < 1e-12);
    let all = verify_all_layers(&cfg, 0.5, 1, 0).unwrap();
    println!("all-layers constructed {}", all.constructed_ratio);
    assert!(all.constructed_ratio >= 0.5);
    let g = verify_general(&general(0.1, 2.0, 1.0, Pooling::None, 1), 0.5, 1, 0).unwrap();
    let a = 1.1 + 0.5 / 4.0;
    for r in [g.conv_layer.constructed_ratio, g.full.constructed_ratio] {
        assert!((r - 1.0 / (2.0 * a)).abs() < 1e-12, "{r}");
    }
    println!("fc constructed {}", g.fc_layer.constructed_ratio);
    assert!((g.fc_layer.constructed_ratio - 1.0 / (2.0 * a)).abs() < 1e-12);
}

#[test]
fn general_suites_have_no_violations() {
    for (nu, chi, lambda, pooling, classes) in [
        (0.1, 2.0, 1.0, Pooling::None, 1),
        (0.0, 1.0, 3.0, Pooling::Max2x2, 3),
        (0.5, 1.5, 1.0, Pooling::Average2x2, 2),
    ] {
        let cfg = general(nu, chi, lambda, pooling, classes);
        let r = verify_general(&cfg, 1.0, 200, 5).unwrap();
        println!("{r:?}");
        assert!(r.conv_layer.passed() && r.fc_layer.passed() && r.full.passed());
    }
}

#[test]
fn covers_cover() {
    for dim in 1..=3 {
        for (k, e) in [(1.0, 0.5), (1.0, 0.25), (2.0, 0.5)] {
            for norm in [NormKind::L2, NormKind::Linf] {
                let r = verify_cover(k, e, dim, norm, 10_000, 3).unwrap();
                println!("{r:?}");
                assert!(r.passed(), "{r:?}");
            }
        }
    }
    assert!(build_cover(1.0, 0.5, 2, NormKind::Linf).unwrap().centers.len() <= 36);
}

#[test]
fn gap_rate_slope() {
    let ns = log_spaced(100, 10_000, 9);
    let r = mc_gap_rate(GapClass::Ramp, &ns, 201, 40, 0x9a9).unwrap();
    println!("{r:?}");
    let s = r.slope.unwrap();
    assert!((-0.65..=-0.35).contains(&s), "{s}");
}
