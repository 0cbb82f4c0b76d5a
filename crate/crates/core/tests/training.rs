use cnvb_core::network::{Activation, Readout};
use cnvb_core::train::{run_single, synth_dataset, Objective, Schedule, SweepSpec, TaskSpec, TrainConfig};

fn sweep(depth: usize) -> SweepSpec {
    SweepSpec {
        input_size: 8,
        depth,
        kernel_size: 3,
        activation: Activation::Relu,
        readout: Readout::Gaussian { seed: 5 },
        seeds: vec![1],
    }
}

fn config(epochs: usize, objective: Objective, lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        schedule: Schedule::Constant,
        batch_size: 16,
        epochs,
        seed: 0,
        lambda: 8.0,
        objective,
        widths: vec![],
    }
}

#[test]
fn separable_task_is_fit_within_fifty_epochs() {
    let task = TaskSpec { noise: 0.0, ..TaskSpec::default() };
    let data = synth_dataset(11, 200, 8, &task).unwrap();
    let (tr, te) = data.split_at(100);
    let r = run_single(&sweep(2), &config(50, Objective::Hinge, 0.3), 2, 1, tr, te).unwrap();
    assert_eq!(r.train_error, 0.0);
    assert_eq!(r.loss_trace.len(), 51);
}

#[test]
fn width_eight_generalizes_at_default_noise() {
    let data = synth_dataset(11, 700, 8, &TaskSpec::default()).unwrap();
    let (tr, te) = data.split_at(200);
    let r = run_single(&sweep(2), &config(30, Objective::Hinge, 0.3), 8, 1, tr, te).unwrap();
    assert!(r.test_error <= 0.1, "test error {}", r.test_error);
    assert!(r.loss_trace.last().unwrap() <= &r.loss_trace[0]);
    // on this clean task the distance from initialization never shrinks
    assert!(r.beta_trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", r.beta_trace);
    assert!(r.beta > 0.0);
}

#[test]
fn runs_are_deterministic() {
    let data = synth_dataset(3, 80, 8, &TaskSpec::default()).unwrap();
    let (tr, te) = data.split_at(40);
    let cfg = config(5, Objective::Ramp, 0.5);
    let a = run_single(&sweep(1), &cfg, 3, 9, tr, te).unwrap();
    let b = run_single(&sweep(1), &cfg, 3, 9, tr, te).unwrap();
    assert_eq!(a, b);
    let c = run_single(&sweep(1), &cfg, 3, 10, tr, te).unwrap();
    assert_ne!(a.beta_trace, c.beta_trace);
}

#[test]
fn beta_trace_is_nondecreasing_across_widths() {
    let data = synth_dataset(7, 600, 8, &TaskSpec::default()).unwrap();
    let (tr, te) = data.split_at(200);
    for c in [2, 4, 8, 16] {
        for seed in [1, 2] {
            let r = run_single(&sweep(2), &config(30, Objective::Hinge, 0.3), c, seed, tr, te).unwrap();
            assert_eq!(r.beta_trace.len(), 30);
            let drops = r.beta_trace.windows(2).filter(|w| w[1] < w[0]).count();
            assert_eq!(drops, 0, "width {c} seed {seed}: {:?}", r.beta_trace);
        }
    }
}
