//! Counter-based Gaussian sampling.
//!
//! A draw is a pure function of `(master_seed, sample_index, step_index,
//! stream_tag)`: the four words form the 256-bit key of a ChaCha8 stream, so
//! distinct contexts read from independent keystreams and any partition of
//! the work across threads reproduces the serial output exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::spectral::{SpectralField, SpectrumSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StreamTag {
    Gamma1,
    Gamma2,
    OuExact,
    Initial,
}

impl StreamTag {
    fn word(self) -> u64 {
        // arbitrary distinct constants
        match self {
            StreamTag::Gamma1 => 0x9e37_79b9_7f4a_7c15,
            StreamTag::Gamma2 => 0xbf58_476d_1ce4_e5b9,
            StreamTag::OuExact => 0x94d0_49bb_1331_11eb,
            StreamTag::Initial => 0xd6e8_feb8_6659_fd93,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedContext {
    pub master_seed: u64,
    pub sample_index: u64,
    pub step_index: u64,
    pub stream_tag: StreamTag,
}

impl SeedContext {
    pub fn new(master_seed: u64, sample_index: u64, step_index: u64, stream_tag: StreamTag) -> Self {
        Self {
            master_seed,
            sample_index,
            step_index,
            stream_tag,
        }
    }

    pub fn with_step(self, step_index: u64, stream_tag: StreamTag) -> Self {
        Self {
            step_index,
            stream_tag,
            ..self
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        let words = [
            self.master_seed,
            self.sample_index,
            self.step_index,
            self.stream_tag.word(),
        ];
        let mut key = [0u8; 32];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// Fills `out` with i.i.d. standard normals determined by the context.
    pub fn fill_standard_normal(&self, out: &mut [f64]) {
        let mut rng = self.rng();
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
}

/// Truncated cylindrical Gaussian: J i.i.d. standard normal coefficients.
pub fn sample_cylindrical(spec: &SpectrumSpec, ctx: SeedContext) -> SpectralField {
    let mut v = vec![0.0; spec.modes()];
    ctx.fill_standard_normal(&mut v);
    SpectralField::from_vec(v)
}

/// A draw from the invariant law `N(0, Lambda^{-1})` of the fast process.
pub fn sample_invariant_measure(spec: &SpectrumSpec, ctx: SeedContext) -> SpectralField {
    let g = sample_cylindrical(spec, ctx);
    spec.apply_fractional_power(-0.5, &g)
        .expect("dimensions agree by construction")
}
