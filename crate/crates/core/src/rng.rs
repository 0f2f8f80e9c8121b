//! Seeded PCG32 streams.
//!
//! Every random draw in the crate comes from a [`Pcg32`] built here. A seed
//! fans out into independent streams by purpose, so e.g. changing how many
//! dropout masks are drawn never perturbs parameter initialisation.

use rand_distr::{Distribution, StandardNormal};

pub use rand_pcg::Pcg32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Synth = 4,
    Folds = 5,
    Gradcheck = 6,
}

pub fn pcg(seed: u64, stream: Stream) -> Pcg32 {
    Pcg32::new(seed, stream as u64)
}

pub fn standard_normal(rng: &mut Pcg32) -> f64 {
    StandardNormal.sample(rng)
}
