//! Fixtures shared by the benchmarks in `benches/`.

use gar_core::synth::{generate, SynthInstance, SynthSpec};

/// A synthetic collection of `num_queries * 80` documents.
pub fn instance(num_queries: usize) -> SynthInstance {
    generate(&SynthSpec {
        num_queries,
        ..SynthSpec::default()
    })
    .expect("default synth spec is valid")
}
