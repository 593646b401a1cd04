//! Trial container, synthetic data generation and rest-probe splicing.

mod synth;
mod trialset;

pub use synth::{splice_rest_probe, synth_generate, SynthConfig};
pub use trialset::{TrialSet, N_CLASSES, TRIALSET_MAGIC};
