//! Standard quantum-mechanical model of the heralded source.
//!
//! Pairs per bin follow the multimode thermal (negative-binomial) law; every
//! pair feeds one photon to each arm. Losses are per-photon binomial thinning
//! and the detectors are threshold (click / no-click) devices.

use rand::Rng;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::rng::{rng_stream, stream_id, Lane};
use crate::streams::{Channel, ClickStreams};

/// Double-pair factor `G = 1 + 1/M` in `P(2) ~ (G/2) P(1)^2`.
pub fn g_factor(mode_count: u32) -> f64 {
    1.0 + 1.0 / f64::from(mode_count)
}

/// Probability of exactly `n` pairs in a bin for `M` thermal modes of total mean `mu`.
///
/// Sum of `M` Bose-Einstein variates of mean `mu/M`:
/// `P(n) = C(n+M-1, n) q^n (1-q)^M` with `q = mu / (M + mu)`.
pub fn pair_prob(mu: f64, mode_count: u32, n: u64) -> f64 {
    assert!(mu >= 0.0 && mode_count >= 1);
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let m = f64::from(mode_count);
    let q = mu / (m + mu);
    let mut p = (-m * (mu / m).ln_1p()).exp();
    for k in 0..n {
        p *= (m + k as f64) / (k as f64 + 1.0) * q;
        if p == 0.0 {
            break;
        }
    }
    p
}

/// Exact inverse-CDF sampler for the pair-number law.
#[derive(Debug, Clone)]
pub struct PairSampler {
    modes: f64,
    q: f64,
    /// `cdf[k] = P(n <= k)` for the tabulated prefix.
    cdf: Vec<f64>,
    pmf_last: f64,
}

impl PairSampler {
    pub fn new(mu: f64, mode_count: u32) -> Self {
        assert!(mu >= 0.0 && mode_count >= 1);
        let modes = f64::from(mode_count);
        let q = mu / (modes + mu);
        let mut pmf = pair_prob(mu, mode_count, 0);
        let mut cdf = vec![pmf];
        let mut acc = pmf;
        let mut k = 0.0;
        while 1.0 - acc > 1e-15 && cdf.len() < 4096 && mu > 0.0 {
            pmf *= (modes + k) / (k + 1.0) * q;
            k += 1.0;
            acc += pmf;
            cdf.push(acc);
        }
        Self {
            modes,
            q,
            cdf,
            pmf_last: pmf,
        }
    }

    pub fn p_zero(&self) -> f64 {
        self.cdf[0]
    }

    /// `ln P(n = 0) = -M ln(1 + mu/M)`, accurate for tiny `mu`.
    pub fn ln_p_zero(&self) -> f64 {
        if self.q == 0.0 {
            0.0
        } else {
            // 1 - q = M / (M + mu)  =>  ln(1-q) = ln_1p(-q)
            self.modes * (-self.q).ln_1p()
        }
    }

    /// Smallest `n` with `P(N <= n) > u`.
    fn invert(&self, u: f64) -> u64 {
        let idx = self.cdf.partition_point(|&c| c <= u);
        if idx < self.cdf.len() {
            return idx as u64;
        }
        // Beyond the table (u within ~1e-15 of 1): continue the recurrence.
        let mut k = (self.cdf.len() - 1) as f64;
        let mut acc = *self.cdf.last().expect("table is never empty");
        let mut pmf = self.pmf_last;
        loop {
            pmf *= (self.modes + k) / (k + 1.0) * self.q;
            k += 1.0;
            acc += pmf;
            if acc > u || pmf == 0.0 {
                return k as u64;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.invert(rng.random::<f64>())
    }

    /// Draw conditioned on `n >= 1`.
    pub fn sample_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let p0 = self.p_zero();
        let u = p0 + rng.random::<f64>() * (1.0 - p0);
        self.invert(u).max(1)
    }
}

/// One draw of the number of pairs in a bin.
pub fn sample_pair_count<R: Rng + ?Sized>(mu: f64, mode_count: u32, rng: &mut R) -> u64 {
    PairSampler::new(mu, mode_count).sample(rng)
}

/// Number of failures before the first success of a Bernoulli process whose
/// failure probability has logarithm `ln_fail` (`ln_fail < 0`).
#[inline]
pub(crate) fn geometric_gap<R: Rng + ?Sized>(ln_fail: f64, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite.
    let u: f64 = rng.random();
    ((1.0 - u).ln() / ln_fail).floor()
}

/// Calls `hit(i)` for each `i < len` selected independently with probability `p`.
pub(crate) fn bernoulli_hits<R: Rng + ?Sized>(p: f64, len: u64, rng: &mut R, mut hit: impl FnMut(u64)) {
    if p <= 0.0 || len == 0 {
        return;
    }
    if p >= 1.0 {
        (0..len).for_each(hit);
        return;
    }
    let ln_fail = (-p).ln_1p();
    let mut pos = 0u64;
    loop {
        let gap = geometric_gap(ln_fail, rng);
        if gap >= (len - pos) as f64 {
            return;
        }
        pos += gap as u64;
        hit(pos);
        pos += 1;
        if pos >= len {
            return;
        }
    }
}

/// Heralded `g2(0)` from the double-pair rate: `2 P(2)/P(1) (1-(1-eta_h)^2)/eta_h`
/// with `P(2) = (G/2) P(1)^2`, i.e. `G P(1) (2 - eta_h)`.
pub fn qm_g2_predicted(p1: f64, eta_h: f64, g: f64) -> Result<f64> {
    if !(eta_h > 0.0 && eta_h <= 1.0) {
        return Err(Error::Domain(format!("herald efficiency {eta_h} must be in (0, 1]")));
    }
    if p1 < 0.0 {
        return Err(Error::Domain(format!("single-pair probability {p1} is negative")));
    }
    let p2 = g / 2.0 * p1 * p1;
    if p1 == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p2 / p1 * (1.0 - (1.0 - eta_h).powi(2)) / eta_h)
}

/// QM expectation band: many modes (`G = 1`) to a single thermal mode (`G = 2`).
pub fn qm_band(p1: f64, eta_h: f64) -> Result<(f64, f64)> {
    Ok((qm_g2_predicted(p1, eta_h, 1.0)?, qm_g2_predicted(p1, eta_h, 2.0)?))
}

/// Fills `out` (segment-local bins) with QM source clicks for segment `segment` of `run`.
pub(crate) fn fill_source(
    cfg: &ExperimentConfig,
    sampler: &PairSampler,
    run: u32,
    segment: u64,
    out: &mut ClickStreams,
) {
    let len = out.n_bins();
    let ln_p0 = sampler.ln_p_zero();
    if ln_p0 == 0.0 || len == 0 {
        return;
    }
    let o = &cfg.optics;
    let to_d1 = o.attenuation * o.splitter_ratio * o.eta_1;
    let to_d2 = to_d1 + o.attenuation * (1.0 - o.splitter_ratio) * o.eta_2;
    let mut rng = rng_stream(cfg.seed, stream_id(run, segment, Lane::Source));

    let mut bin = 0u64;
    loop {
        let gap = geometric_gap(ln_p0, &mut rng);
        if gap >= (len - bin) as f64 {
            break;
        }
        bin += gap as u64;
        let n = sampler.sample_nonzero(&mut rng);

        let mut herald = false;
        for _ in 0..n {
            if rng.random::<f64>() < o.eta_h {
                herald = true;
                break;
            }
        }
        let (mut c1, mut c2) = (false, false);
        for _ in 0..n {
            let u: f64 = rng.random();
            if u < to_d1 {
                c1 = true;
            } else if u < to_d2 {
                c2 = true;
            }
        }
        if herald {
            out.set(Channel::Herald, bin);
        }
        if c1 {
            out.set(Channel::Signal1, bin);
        }
        if c2 {
            out.set(Channel::Signal2, bin);
        }

        bin += 1;
        if bin >= len {
            break;
        }
    }
}
