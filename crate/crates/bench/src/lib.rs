//! Fixtures shared by the criterion benches.

pub use earlyexit::exit::{baseline_infer, early_exit_infer, forced_exit_infer, ExitCriterion};
pub use earlyexit::harness::{Split, SynthSpec, SynthWorld, Utterance};
pub use earlyexit::model::{build_model, Model, ModelConfig};
pub use earlyexit::{Rng, Tensor};

/// Desk-sized model (untrained) plus a handful of synthetic utterances.
pub fn desk_fixture(count: usize) -> (Model, Vec<Utterance>) {
    let spec = SynthSpec::default();
    let world = SynthWorld::new(&spec).expect("default synth spec is valid");
    let model = build_model(&ModelConfig::desk()).expect("desk config is valid");
    (model, world.sample(&spec, Split::Test, count))
}

pub fn random_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect())
        .expect("shape matches data")
}
