//! Simulation and analysis of heralded second-order correlation (`g2(0)`)
//! measurements on a pair source, under standard quantum optics and under a
//! classical threshold-field detection model.
//!
//! Pipeline: [`ExperimentConfig`] → [`simulate_run`] / [`simulate_counts`] →
//! [`accumulate`] → [`heralded_g2`] and friends → [`weighted_linear_fit`] over
//! an attenuation sweep.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coincidence;
pub mod config;
pub mod error;
pub mod pcsft;
pub mod qm;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod streams;
pub mod sweep;

pub use analysis::{
    background_subtract, corrected_rate, corrected_totals, heralded_g2, klyshko_efficiency, klyshko_herald_efficiency,
    segmented_g2, weighted_linear_fit, CorrectedTallies, Efficiency, FitPoint, FitResult, G2Estimate,
};
pub use coincidence::{accumulate, brute_force_counts, merge, CoincidenceCounts, Field, SegmentCounts, Tallies};
pub use config::{validate_config, DetectorConfig, ExperimentConfig, OpticsConfig, PcsftConfig, SourceConfig, Theory};
pub use error::{ConfigIssue, Error, Result};
pub use pcsft::{bound_counts, bound_energy, mean_first_passage, simulate_first_passage, PassageResult};
pub use qm::{g_factor, pair_prob, qm_band, qm_g2_predicted, sample_pair_count, PairSampler};
pub use report::{build_report, read_counts, write_counts, CountsSummary, PointInput, PointReport, Report};
pub use rng::{rng_stream, stream_id, Lane, SimRng};
pub use simulate::{simulate_counts, simulate_counts_until, simulate_run, simulate_run_indexed, simulate_segment};
pub use streams::{Channel, ClickStreams};
pub use sweep::{run_sweep, SweepPlan};
