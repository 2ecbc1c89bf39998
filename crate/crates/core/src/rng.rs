//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 keystream: the 256-bit key is expanded from the
//! 64-bit run seed with `SeedableRng::seed_from_u64` (PCG32 expansion, as
//! specified by `rand_core`), and the 64-bit stream id is the ChaCha nonce.
//! Streams are therefore counter-based: a given `(seed, stream_id)` produces
//! the same sequence on every platform, and distinct ids select disjoint
//! keystreams under the same key.
//!
//! Stream ids are allocated as `run << 44 | segment << 3 | lane`, so a worker
//! simulating one segment never touches another segment's randomness and the
//! result does not depend on how segments are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const LANE_BITS: u32 = 3;
const RUN_SHIFT: u32 = 44;

/// Independent randomness consumers within one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    /// Pair generation and optical routing (QM), or the common intensity factor (PCSFT).
    Source = 0,
    NoiseHerald = 1,
    NoiseSignal1 = 2,
    NoiseSignal2 = 3,
    HeraldField = 4,
    SignalField = 5,
}

impl Lane {
    pub const NOISE: [Lane; 3] = [Lane::NoiseHerald, Lane::NoiseSignal1, Lane::NoiseSignal2];
}

/// Packs `(run, segment, lane)` into a stream id.
///
/// `segment` must stay below 2^41 and `run` below 2^20.
pub fn stream_id(run: u32, segment: u64, lane: Lane) -> u64 {
    debug_assert!(segment < 1 << (RUN_SHIFT - LANE_BITS));
    debug_assert!(run < 1 << 20);
    (u64::from(run) << RUN_SHIFT) | (segment << LANE_BITS) | lane as u64
}

pub fn rng_stream(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniforms(seed: u64, id: u64, n: usize) -> Vec<f64> {
        let mut rng = rng_stream(seed, id);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn same_seed_and_stream_are_bit_identical() {
        let a: Vec<u64> = {
            let mut r = rng_stream(42, 0);
            (0..1000).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = rng_stream(42, 0);
            (0..1000).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn seed_changes_sequence() {
        assert_ne!(uniforms(42, 0, 16), uniforms(43, 0, 16));
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 1_000_000;
        let x = uniforms(42, 0, n);
        let y = uniforms(42, 1, n);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&x), mean(&y));
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(&y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx).powi(2);
            syy += (b - my).powi(2);
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!(r.abs() < 0.01, "r = {r}");
    }

    #[test]
    fn stream_ids_do_not_collide() {
        let mut seen = std::collections::HashSet::new();
        for run in 0..4 {
            for seg in 0..64 {
                for lane in [
                    Lane::Source,
                    Lane::NoiseHerald,
                    Lane::NoiseSignal1,
                    Lane::NoiseSignal2,
                    Lane::HeraldField,
                    Lane::SignalField,
                ] {
                    assert!(seen.insert(stream_id(run, seg, lane)));
                }
            }
        }
    }

    #[test]
    fn known_first_output_is_stable() {
        // Pins the generator algorithm; a change here breaks reproducibility of stored runs.
        assert_eq!(rng_stream(0, 0).random::<u64>(), 0xb585_f767_a79a_3b6c);
        assert_eq!(rng_stream(42, 5).random::<u64>(), 0x5a4c_b496_8c34_03e3);
    }
}
