//! Splittable random streams.
//!
//! A master seed and a domain tag select a ChaCha key; the stream index picks
//! one of 2^64 independent ChaCha streams under that key. Draws for individual
//! `k` therefore never depend on how many draws other individuals made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream families derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Candidate points of the infection Poisson random measure.
    InfectionPrm,
    /// Per-individual law draws (periods, infectivity, susceptibility).
    Individual,
    /// Initial-condition draws (ages, residual periods).
    Initial,
    /// Births and other auxiliary Poisson clocks.
    Auxiliary,
    /// Migration clocks.
    Migration,
    /// Monte Carlo panels and Gaussian driver sampling.
    Panel,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::InfectionPrm => 0x1f3a_5b7c_9d0e_2f41,
            Domain::Individual => 0x2c4e_6a8b_0d1f_3e52,
            Domain::Initial => 0x3d5f_7b9c_1e20_4f63,
            Domain::Auxiliary => 0x4e60_8cad_2f31_5074,
            Domain::Migration => 0x5f71_9dbe_3042_6185,
            Domain::Panel => 0x6082_aecf_4153_7296,
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the RNG for stream `index` of `domain` under `master`.
pub fn stream(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = master ^ domain.tag();
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}
