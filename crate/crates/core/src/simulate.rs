//! Segment-parallel click generation under either theory.
//!
//! Each segment draws from its own random streams (see [`crate::rng`]), so the
//! output depends only on `(config, run)`, never on the worker count.

use rayon::prelude::*;

use crate::coincidence::{accumulate, CoincidenceCounts};
use crate::config::{ExperimentConfig, Theory};
use crate::error::Result;
use crate::pcsft;
use crate::qm::{self, bernoulli_hits, PairSampler};
use crate::rng::{rng_stream, stream_id, Lane};
use crate::streams::{Channel, ClickStreams};

/// Simulates segment `segment` of `run`; bins are segment-local.
pub fn simulate_segment(cfg: &ExperimentConfig, run: u32, segment: u64) -> ClickStreams {
    let sampler = PairSampler::new(cfg.source.pair_mean_per_bin, cfg.source.mode_count);
    segment_with(cfg, &sampler, run, segment)
}

fn segment_with(cfg: &ExperimentConfig, sampler: &PairSampler, run: u32, segment: u64) -> ClickStreams {
    let len = cfg.segment_len(segment);
    let mut out = ClickStreams::new(len, cfg.detectors.bin_width);
    match cfg.theory {
        Theory::Qm => qm::fill_source(cfg, sampler, run, segment, &mut out),
        Theory::Pcsft => pcsft::fill_source(cfg, run, segment, &mut out),
    }
    for (ch, lane) in Channel::ALL.into_iter().zip(Lane::NOISE) {
        let mut rng = rng_stream(cfg.seed, stream_id(run, segment, lane));
        let p = cfg.detectors.noise_probability(ch as usize);
        bernoulli_hits(p, len, &mut rng, |i| out.set(ch, i));
    }
    out
}

/// Full click record for `cfg` (validated first).
pub fn simulate_run(cfg: &ExperimentConfig) -> Result<ClickStreams> {
    simulate_run_indexed(cfg, 0)
}

/// As [`simulate_run`], with an explicit run index selecting disjoint random streams.
pub fn simulate_run_indexed(cfg: &ExperimentConfig, run: u32) -> Result<ClickStreams> {
    cfg.validate()?;
    let sampler = PairSampler::new(cfg.source.pair_mean_per_bin, cfg.source.mode_count);
    let parts: Vec<ClickStreams> = (0..cfg.n_segments())
        .into_par_iter()
        .map(|s| segment_with(cfg, &sampler, run, s))
        .collect();
    ClickStreams::concat(cfg.detectors.bin_width, parts)
}

/// Coincidence counts of the run, without keeping the click record.
///
/// Equal to `accumulate(&simulate_run_indexed(cfg, run)?, cfg.segment_bins)`.
pub fn simulate_counts(cfg: &ExperimentConfig, run: u32) -> Result<CoincidenceCounts> {
    simulate_counts_until(cfg, run, u64::MAX)
}

/// Simulates whole segments in order until the running triple count reaches
/// `target_triples` or the run's `n_bins` is exhausted.
///
/// Segments are generated in parallel batches but the stop decision is made
/// in segment order, so the result is independent of scheduling.
pub fn simulate_counts_until(cfg: &ExperimentConfig, run: u32, target_triples: u64) -> Result<CoincidenceCounts> {
    cfg.validate()?;
    let sampler = PairSampler::new(cfg.source.pair_mean_per_bin, cfg.source.mode_count);
    let batch = (4 * rayon::current_num_threads()).max(16) as u64;
    let n_segments = cfg.n_segments();
    let mut out = CoincidenceCounts::empty(cfg.detectors.bin_width);
    out.segment_bins = cfg.segment_bins;
    let mut start = 0;
    while start < n_segments {
        let end = (start + batch).min(n_segments);
        let counted: Vec<CoincidenceCounts> = (start..end)
            .into_par_iter()
            .map(|s| accumulate(&segment_with(cfg, &sampler, run, s), cfg.segment_bins))
            .collect();
        for seg in counted.iter().flat_map(|c| &c.segments) {
            out.push_segment(seg.tallies);
            if out.totals.n_h12 >= target_triples {
                return Ok(out);
            }
        }
        start = end;
    }
    Ok(out)
}
