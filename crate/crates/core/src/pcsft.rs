//! Threshold-field (PCSFT) detection model.
//!
//! A detector clicks when the field energy `W^2` first reaches the threshold
//! `E_d`, where the amplitude `W` starts at 0 and diffuses with variance
//! `power * dt` per step. Exiting `[-sqrt(E_d), sqrt(E_d)]` has mean time
//! `E_d / power`.
//!
//! The walk is Euler-discretized on the `dt` grid. Far from the barrier the
//! walker advances `m` steps at once with a single `N(0, m)` draw, where `m`
//! is chosen so the remaining distance is at least [`SAFE_SIGMAS`] block
//! standard deviations; by Levy's maximal inequality the chance that the
//! skipped steps would have crossed is below `4 * Phi(-8) < 3e-15`. Near the
//! barrier the walk takes single steps, so hit times stay on the `dt` grid.
//! The Euler walk misses crossings between grid points, which delays hits by
//! `O(sqrt(dt))` relative to continuous time.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::qm::g_factor;
use crate::rng::{rng_stream, stream_id, Lane};
use crate::streams::{Channel, ClickStreams};

/// Distance to the barrier, in block standard deviations, required to skip.
pub const SAFE_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageResult {
    /// Time of the first threshold crossing, if it happened within the horizon.
    pub hit_time: Option<f64>,
}

impl PassageResult {
    pub fn hit(&self) -> bool {
        self.hit_time.is_some()
    }
}

/// Mean first-passage time `E_d / sigma^2`.
pub fn mean_first_passage(threshold_energy: f64, power: f64) -> Result<f64> {
    if !(threshold_energy > 0.0) {
        return Err(Error::Domain(format!(
            "threshold energy {threshold_energy} must be > 0"
        )));
    }
    if !(power > 0.0) {
        return Err(Error::Domain(format!(
            "power {power} gives an infinite mean first-passage time"
        )));
    }
    Ok(threshold_energy / power)
}

/// Steps-to-hit of a unit-variance Gaussian walk against `|x| >= barrier`,
/// within `max_steps` steps.
pub(crate) fn passage_steps<R: Rng + ?Sized>(barrier: f64, max_steps: u64, rng: &mut R) -> Option<u64> {
    if !barrier.is_finite() {
        return None;
    }
    if barrier <= 0.0 {
        return (max_steps > 0).then_some(1);
    }
    let mut x = 0.0f64;
    let mut k = 0u64;
    while k < max_steps {
        let room = barrier - x.abs();
        let block = ((room / SAFE_SIGMAS).powi(2)).floor();
        let remaining = max_steps - k;
        if block >= 2.0 {
            let m = (block as u64).min(remaining);
            let z: f64 = rng.sample(StandardNormal);
            x += (m as f64).sqrt() * z;
            k += m;
        } else {
            let z: f64 = rng.sample(StandardNormal);
            x += z;
            k += 1;
        }
        if x.abs() >= barrier {
            return Some(k);
        }
    }
    None
}

/// Plain one-step-at-a-time version of [`passage_steps`].
pub(crate) fn passage_steps_stepwise<R: Rng + ?Sized>(barrier: f64, max_steps: u64, rng: &mut R) -> Option<u64> {
    if !barrier.is_finite() {
        return None;
    }
    let mut x = 0.0f64;
    for k in 1..=max_steps {
        let z: f64 = rng.sample(StandardNormal);
        x += z;
        if x.abs() >= barrier {
            return Some(k);
        }
    }
    None
}

/// Barrier in units of the per-step amplitude standard deviation.
fn barrier_in_steps(threshold_energy: f64, power: f64, dt: f64) -> f64 {
    if power <= 0.0 {
        f64::INFINITY
    } else {
        (threshold_energy / (power * dt)).sqrt()
    }
}

fn horizon_steps(t_max: f64, dt: f64) -> u64 {
    // Tolerate t_max being a float multiple of dt.
    (t_max / dt * (1.0 + 1e-12)).floor() as u64
}

fn check_passage_args(threshold_energy: f64, power: f64, dt: f64, t_max: f64) -> Result<()> {
    if !(threshold_energy > 0.0) || !(power >= 0.0) || !(dt > 0.0) || !(t_max >= dt) {
        return Err(Error::Domain(format!(
            "need E_d > 0, power >= 0, 0 < dt <= t_max (got {threshold_energy}, {power}, {dt}, {t_max})"
        )));
    }
    Ok(())
}

/// First time the field energy reaches `threshold_energy`, or a miss after `t_max`.
pub fn simulate_first_passage<R: Rng + ?Sized>(
    threshold_energy: f64,
    power: f64,
    dt: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<PassageResult> {
    check_passage_args(threshold_energy, power, dt, t_max)?;
    let steps = passage_steps(
        barrier_in_steps(threshold_energy, power, dt),
        horizon_steps(t_max, dt),
        rng,
    );
    Ok(PassageResult {
        hit_time: steps.map(|k| k as f64 * dt),
    })
}

/// Reference stepping without block skipping; same law as [`simulate_first_passage`].
pub fn simulate_first_passage_stepwise<R: Rng + ?Sized>(
    threshold_energy: f64,
    power: f64,
    dt: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<PassageResult> {
    check_passage_args(threshold_energy, power, dt, t_max)?;
    let steps = passage_steps_stepwise(
        barrier_in_steps(threshold_energy, power, dt),
        horizon_steps(t_max, dt),
        rng,
    );
    Ok(PassageResult {
        hit_time: steps.map(|k| k as f64 * dt),
    })
}

/// Upper bound on `g2(0)` from pulse energy: `(2 delta / dt_bin) * E_pulse / E_d`.
pub fn bound_energy(pulse_duration: f64, bin_width: f64, pulse_energy: f64, threshold_energy: f64) -> f64 {
    (2.0 * pulse_duration / bin_width) * (pulse_energy / threshold_energy)
}

/// Upper bound on `g2(0)` from detector counts: `(2 delta^2 / dt_bin) (N1 + N2) / T`.
pub fn bound_counts(pulse_duration: f64, bin_width: f64, n1: f64, n2: f64, total_time: f64) -> Result<f64> {
    if !(total_time > 0.0) {
        return Err(Error::Domain(format!("integration time {total_time} must be > 0")));
    }
    if n1 < 0.0 || n2 < 0.0 {
        return Err(Error::Domain("counts must be non-negative".into()));
    }
    Ok((2.0 * pulse_duration * pulse_duration / bin_width) * (n1 + n2) / total_time)
}

/// Fills `out` (segment-local bins) with threshold-field clicks for segment `segment` of `run`.
///
/// Herald arm: one passage within the pulse window at power `sigma^2 eta_h X`.
/// Signal arm: one field at power `sigma^2 alpha X`; each crossing deposits a
/// threshold quantum, the field restarts from zero, and the quantum is
/// detected by D1 with probability `splitter * eta_1`, by D2 with probability
/// `(1 - splitter) * eta_2`, or lost. `X` is 1, or a per-bin Gamma(M, 1/M)
/// draw when `common_fluctuation` is set.
pub(crate) fn fill_source(cfg: &ExperimentConfig, run: u32, segment: u64, out: &mut ClickStreams) {
    let p = cfg.pcsft.as_ref().expect("validated PCSFT config has a [pcsft] block");
    let o = &cfg.optics;
    let dt = p.diffusion_step;
    let window = horizon_steps(p.pulse_duration, dt);
    let to_d1 = o.splitter_ratio * o.eta_1;
    let to_d2 = to_d1 + (1.0 - o.splitter_ratio) * o.eta_2;

    let herald_barrier = barrier_in_steps(p.threshold_energy, p.incident_power * o.eta_h, dt);
    let signal_barrier = barrier_in_steps(p.threshold_energy, p.incident_power * o.attenuation, dt);

    let modes = f64::from(cfg.source.mode_count);
    let fluctuation = p
        .common_fluctuation
        .then(|| Gamma::new(modes, 1.0 / modes).expect("mode_count >= 1"));
    debug_assert!(g_factor(cfg.source.mode_count) >= 1.0);

    let mut src = rng_stream(cfg.seed, stream_id(run, segment, Lane::Source));
    let mut herald_rng = rng_stream(cfg.seed, stream_id(run, segment, Lane::HeraldField));
    let mut signal_rng = rng_stream(cfg.seed, stream_id(run, segment, Lane::SignalField));

    for bin in 0..out.n_bins() {
        // Power scales the barrier (in step units) by 1/sqrt(X).
        let scale = fluctuation.as_ref().map_or(1.0, |g| 1.0 / g.sample(&mut src).sqrt());

        if passage_steps(herald_barrier * scale, window, &mut herald_rng).is_some() {
            out.set(Channel::Herald, bin);
        }

        let (mut c1, mut c2) = (false, false);
        let mut remaining = window;
        while remaining > 0 && !(c1 && c2) {
            let Some(k) = passage_steps(signal_barrier * scale, remaining, &mut signal_rng) else {
                break;
            };
            remaining -= k;
            let u: f64 = signal_rng.random();
            if u < to_d1 {
                c1 = true;
            } else if u < to_d2 {
                c2 = true;
            }
        }
        if c1 {
            out.set(Channel::Signal1, bin);
        }
        if c2 {
            out.set(Channel::Signal2, bin);
        }
    }
}
