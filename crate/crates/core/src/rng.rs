//! Counter-based deterministic random streams.
//!
//! Every random draw in the simulator is addressed, not sequenced: a stream
//! is a pure function of (seed, purpose, node, round) and the draw index,
//! so any draw can be recomputed in isolation, in any order, on any thread,
//! and two runs with the same config and seed are bit-identical. This is
//! what lets an oracle replay a run's gradients without the engine having
//! to log them in lock-step, and what makes parallel sweeps reproducible.
//!
//! The generator is SplitMix64 evaluated at an arbitrary counter: the
//! stream key is the SplitMix64 seed and draw `i` is the finalizer applied
//! to `key + (i+1)*GAMMA`. Normal variates use Box-Muller on consecutive
//! counter pairs, with the log argument mapped into (0, 1] so it never
//! sees zero.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

// Purpose tags keep draws for different roles on disjoint keys even when
// seed, node, and round coincide.
const TAG_GRADIENT: u64 = 0x67_72_61_64; // "grad"
const TAG_TARGETS: u64 = 0x74_61_72_67; // "targ"
const TAG_INIT_POINT: u64 = 0x69_6E_69_74; // "init"
const TAG_DERIVE: u64 = 0x73_77_70_73; // "swps"

/// SplitMix64 finalizer. Full-avalanche 64-bit mix.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds one key field into a stream state. Multiplying by an odd constant
/// before the xor keeps absorption order-sensitive, so (a, b) and (b, a)
/// land on different streams.
#[inline]
fn absorb(state: u64, value: u64) -> u64 {
    mix(state.wrapping_mul(GAMMA) ^ value)
}

/// An immutable handle addressing one lazily-evaluated sequence of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    key: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { key: mix(seed) }
    }

    /// Narrows the stream by one key field.
    pub fn substream(self, value: u64) -> Self {
        RandomStream {
            key: absorb(self.key, value),
        }
    }

    /// Raw 64-bit draw at counter `index`.
    #[inline]
    pub fn bits_at(self, index: u64) -> u64 {
        mix(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform_at(self, index: u64) -> f64 {
        (self.bits_at(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Box-Muller pair from counters (2q, 2q+1). The radial uniform lives in
    /// (0, 1] so the logarithm is always finite.
    fn normal_pair(self, q: u64) -> (f64, f64) {
        let u1 = ((self.bits_at(2 * q) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform_at(2 * q + 1);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Standard normal draw at `index`. Independent of evaluation order:
    /// `normal_at(k)` for k = 0..n equals filling a buffer of length n.
    #[inline]
    pub fn normal_at(self, index: u64) -> f64 {
        let (z0, z1) = self.normal_pair(index / 2);
        if index % 2 == 0 {
            z0
        } else {
            z1
        }
    }

    /// Fills `out` with standard normals at counters 0..out.len().
    pub fn fill_standard_normal(self, out: &mut [f64]) {
        let mut i = 0;
        while i + 1 < out.len() {
            let (z0, z1) = self.normal_pair((i as u64) / 2);
            out[i] = z0;
            out[i + 1] = z1;
            i += 2;
        }
        if i < out.len() {
            out[i] = self.normal_at(i as u64);
        }
    }
}

// ---------------------------------------------------------------------------
// Purpose-keyed constructors
// ---------------------------------------------------------------------------

/// Stream for node `node`'s stochastic-gradient noise at `round`.
pub fn gradient_stream(run_seed: u64, node: usize, round: u64) -> RandomStream {
    RandomStream::new(run_seed)
        .substream(TAG_GRADIENT)
        .substream(node as u64)
        .substream(round)
}

/// Stream for node `node`'s target vector when synthesizing a problem.
pub fn target_stream(problem_seed: u64, node: usize) -> RandomStream {
    RandomStream::new(problem_seed)
        .substream(TAG_TARGETS)
        .substream(node as u64)
}

/// Stream for a randomized common starting point.
pub fn init_point_stream(seed: u64) -> RandomStream {
    RandomStream::new(seed).substream(TAG_INIT_POINT)
}

/// Hashes a (base seed, axis, value, repeat) tuple into a run seed, so sweep
/// entries get decorrelated seeds that do not depend on execution order.
pub fn derive_run_seed(base: u64, axis: &str, value: &str, repeat: u64) -> u64 {
    let mut s = RandomStream::new(base).substream(TAG_DERIVE);
    for b in axis.bytes() {
        s = s.substream(b as u64);
    }
    s = s.substream(0xFF); // field separator
    for b in value.bytes() {
        s = s.substream(b as u64);
    }
    s = s.substream(repeat);
    s.bits_at(0)
}
