//! Counter-based Gaussian noise.
//!
//! Each trajectory owns a ChaCha8 stream keyed by
//! `seed = master_seed ^ splitmix64(trajectory_index)` (the 64-bit seed is
//! expanded with `SeedableRng::seed_from_u64`). Gaussian number `k` is built by
//! Box-Muller from the two `u64` words at word position `4k` of stream 0, so
//! it is a pure function of `(master_seed, trajectory_index, k)` regardless of
//! the order in which numbers are requested. Uniform number `k` is the `u64`
//! at word position `2k` of stream 1.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Source of Wiener increments addressed by counter.
pub trait NoiseSource {
    /// Standard normal variate number `counter`.
    fn gaussian(&mut self, counter: u64) -> f64;

    /// Uniform variate in `[0, 1)` number `counter`.
    fn uniform(&mut self, counter: u64) -> f64;

    /// Wiener increment of variance `dt`.
    fn increment(&mut self, counter: u64, dt: f64) -> f64 {
        self.gaussian(counter) * dt.sqrt()
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trajectory_seed(master_seed: u64, trajectory_index: u64) -> u64 {
    master_seed ^ splitmix64(trajectory_index)
}

fn unit_open(x: u64) -> f64 {
    // (0, 1]
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn unit_half_open(x: u64) -> f64 {
    // [0, 1)
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic Wiener stream for one trajectory.
#[derive(Clone, Debug)]
pub struct WienerStream {
    master_seed: u64,
    trajectory_index: u64,
    counter: u64,
    gauss: ChaCha8Rng,
    unif: ChaCha8Rng,
    next_gauss: u64,
    next_unif: u64,
}

impl WienerStream {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        let seed = trajectory_seed(master_seed, trajectory_index);
        let gauss = ChaCha8Rng::seed_from_u64(seed);
        let mut unif = gauss.clone();
        unif.set_stream(1);
        unif.set_word_pos(0);
        WienerStream {
            master_seed,
            trajectory_index,
            counter: 0,
            gauss,
            unif,
            next_gauss: 0,
            next_unif: 0,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trajectory_index(&self) -> u64 {
        self.trajectory_index
    }

    pub fn seed(&self) -> u64 {
        trajectory_seed(self.master_seed, self.trajectory_index)
    }

    /// Cursor used by [`WienerStream::next_increment`].
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// Increment at the internal cursor, then advances the cursor.
    pub fn next_increment(&mut self, dt: f64) -> f64 {
        let c = self.counter;
        self.counter += 1;
        self.increment(c, dt)
    }
}

impl NoiseSource for WienerStream {
    fn gaussian(&mut self, counter: u64) -> f64 {
        if counter != self.next_gauss {
            self.gauss.set_word_pos(4 * counter as u128);
        }
        self.next_gauss = counter + 1;
        let u1 = unit_open(self.gauss.next_u64());
        let u2 = unit_half_open(self.gauss.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn uniform(&mut self, counter: u64) -> f64 {
        if counter != self.next_unif {
            self.unif.set_word_pos(2 * counter as u128);
        }
        self.next_unif = counter + 1;
        unit_half_open(self.unif.next_u64())
    }
}

/// Replays a fixed list of standard-normal variates (by counter); used to
/// drive steps from recorded increments.
#[derive(Clone, Debug)]
pub struct ReplayNoise {
    gaussians: Vec<f64>,
}

impl ReplayNoise {
    /// `increments[k]` are Wiener increments of variance `dt`.
    pub fn from_increments(increments: &[f64], dt: f64) -> Self {
        let s = dt.sqrt();
        ReplayNoise { gaussians: increments.iter().map(|w| w / s).collect() }
    }
}

impl NoiseSource for ReplayNoise {
    fn gaussian(&mut self, counter: u64) -> f64 {
        self.gaussians.get(counter as usize).copied().unwrap_or(0.0)
    }

    fn uniform(&mut self, _counter: u64) -> f64 {
        0.5
    }

    fn increment(&mut self, counter: u64, dt: f64) -> f64 {
        self.gaussian(counter) * dt.sqrt()
    }
}
