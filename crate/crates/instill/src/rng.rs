//! Self-contained pseudo-random number generation.
//!
//! The generator is xoshiro256** seeded through splitmix64, written out in
//! full so that a port in another language can reproduce every stream from
//! the seed alone. A run derives independent streams from one master seed by
//! xoring a per-purpose salt into it before seeding:
//!
//! * `STREAM_DATA` for dataset sampling,
//! * `STREAM_TRAIN` for training-time noise (times, latents, perturbations),
//! * `STREAM_INIT` for network weight initialization,
//! * `STREAM_EVAL` for evaluation draws.
//!
//! Uniform floats take the top 53 bits of a `u64` (`(x >> 11) * 2^-53`), and
//! normals come from the Box-Muller transform applied to two consecutive
//! uniforms, with the first mapped into (0, 1] so the logarithm is finite.
//! Normals are produced in pairs; the second member is cached and returned
//! by the next call.

/// Salt for the dataset-sampling stream.
pub const STREAM_DATA: u64 = 0xd5a5_7a11_ab1e_0001;
/// Salt for the training-noise stream.
pub const STREAM_TRAIN: u64 = 0xd5a5_7a11_ab1e_0002;
/// Salt for the weight-initialization stream.
pub const STREAM_INIT: u64 = 0xd5a5_7a11_ab1e_0003;
/// Salt for the evaluation stream.
pub const STREAM_EVAL: u64 = 0xd5a5_7a11_ab1e_0004;

/// splitmix64 stepper, used only to expand a 64-bit seed into generator state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// xoshiro256** generator.
#[derive(Debug, Clone)]
pub struct Xoshiro256 {
    s: [u64; 4],
    spare_normal: Option<f64>,
}

impl Xoshiro256 {
    /// Seed by drawing four words from splitmix64 started at `seed`.
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        Xoshiro256 {
            s: [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()],
            spare_normal: None,
        }
    }

    /// Seed the stream identified by `salt` under a master seed.
    pub fn stream(master_seed: u64, salt: u64) -> Self {
        Self::seed_from_u64(master_seed ^ salt)
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Standard normal draw via Box-Muller on two consecutive uniforms.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * angle.sin());
        r * angle.cos()
    }

    /// Vector of independent standard normals.
    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}
