//! Heralded g2(0) estimation, efficiency calibration, background correction
//! and the weighted power-dependence fit.
//!
//! Counts are treated as independent Poisson variables; covariances between
//! the numerator and denominator counts of the estimator are neglected, which
//! is accurate for g2 well below 1.

use serde::{Deserialize, Serialize};

use crate::coincidence::{BackgroundRun, CoincidenceCounts, Field, Tallies};
use crate::config::OpticsConfig;
use crate::error::{Error, Result};

/// Default number of consecutive segments pooled into one block by [`segmented_g2`].
pub const DEFAULT_BLOCK_SEGMENTS: usize = 100;

/// Count values after optional background correction, with their variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedTallies {
    pub bins: u64,
    pub values: [f64; 7],
    pub variances: [f64; 7],
    /// Fields whose corrected value went negative and was clamped to 0.
    pub clamped: [bool; 7],
}

impl CorrectedTallies {
    pub fn raw(t: &Tallies) -> Self {
        let values = Field::ALL.map(|f| t[f] as f64);
        Self {
            bins: t.bins,
            values,
            variances: values,
            clamped: [false; 7],
        }
    }

    pub fn get(&self, f: Field) -> f64 {
        self.values[f as usize]
    }

    pub fn variance(&self, f: Field) -> f64 {
        self.variances[f as usize]
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }

    /// Subtracts the expected contribution of an independent background.
    ///
    /// Per-bin probabilities combine to first order: a coincidence on channel
    /// set `S` is the sum over splits `S = A + B` of (source on `A`) times
    /// (background on `B`). Solving for the source-only term gives
    /// `s_S = N_S / bins - sum_{A strictly inside S} s_A * b_{S \ A}`.
    pub fn subtract(t: &Tallies, bg: &BackgroundRun) -> Self {
        let bins = t.bins as f64;
        let bg_bins = bg.totals.bins as f64;
        if t.bins == 0 || bg.totals.bins == 0 {
            return Self::raw(t);
        }
        // Indexed by channel mask 1..=7; slot 0 is the empty set.
        let mut b = [1.0f64; 8];
        let mut b_count = [0.0f64; 8];
        let mut s = [1.0f64; 8];
        for f in Field::ALL {
            let m = f.mask() as usize;
            b_count[m] = bg.totals[f] as f64;
            b[m] = b_count[m] / bg_bins;
        }
        let mut out = Self::raw(t);
        for size in 1..=3u32 {
            for mask in 1u8..8 {
                if mask.count_ones() != size {
                    continue;
                }
                let f = Field::from_mask(mask);
                let m = mask as usize;
                let mut rate = t[f] as f64 / bins;
                let mut var = t[f] as f64;
                // Proper subsets A of the mask (including the empty set).
                let mut a = (mask - 1) & mask;
                loop {
                    let rest = (mask & !a) as usize;
                    rate -= s[a as usize] * b[rest];
                    let scale = bins * s[a as usize] / bg_bins;
                    var += scale * scale * b_count[rest];
                    if a == 0 {
                        break;
                    }
                    a = (a - 1) & mask;
                }
                let i = f as usize;
                if rate < 0.0 {
                    out.clamped[i] = true;
                    rate = 0.0;
                }
                s[m] = rate;
                out.values[i] = rate * bins;
                out.variances[i] = var;
            }
        }
        out
    }
}

/// Counts of `counts` over a range of segments, background-corrected if a background is attached.
fn corrected(t: &Tallies, bg: Option<&BackgroundRun>) -> CorrectedTallies {
    match bg {
        Some(b) => CorrectedTallies::subtract(t, b),
        None => CorrectedTallies::raw(t),
    }
}

/// Whole-run counts used by the estimators.
pub fn corrected_totals(counts: &CoincidenceCounts) -> CorrectedTallies {
    corrected(&counts.totals, counts.background.as_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub value: f64,
    pub sigma: f64,
    /// No triples: `value` is 0 and `sigma` is the one-triple upper-limit scale.
    pub upper_limit: bool,
    /// Background-corrected counts went negative somewhere and were clamped.
    pub clamped: bool,
    pub counts: CorrectedTallies,
    /// Corrected signal-arm rate (events/s), when optics are known.
    pub x_rate: Option<f64>,
}

impl G2Estimate {
    pub fn with_rate(mut self, x_rate: f64) -> Self {
        self.x_rate = Some(x_rate);
        self
    }
}

fn g2_from(c: CorrectedTallies) -> Result<G2Estimate> {
    let (nh, n1, n2, n12) = (c.get(Field::H), c.get(Field::H1), c.get(Field::H2), c.get(Field::H12));
    if !(n1 > 0.0 && n2 > 0.0 && nh > 0.0) {
        return Err(Error::InsufficientStatistics(format!(
            "heralded g2 needs N_H, N_H1, N_H2 > 0 (got {nh}, {n1}, {n2})"
        )));
    }
    let rel = |v: f64, var: f64| var / (v * v);
    let base = rel(n1, c.variance(Field::H1)) + rel(n2, c.variance(Field::H2)) + rel(nh, c.variance(Field::H));
    let (value, sigma, upper_limit) = if n12 > 0.0 {
        let g = nh * n12 / (n1 * n2);
        (g, g * (base + rel(n12, c.variance(Field::H12))).sqrt(), false)
    } else {
        // One triple stands in for the missing ones.
        let g1 = nh / (n1 * n2);
        (0.0, g1 * (base + 1.0).sqrt(), true)
    };
    Ok(G2Estimate {
        value,
        sigma,
        upper_limit,
        clamped: c.any_clamped(),
        counts: c,
        x_rate: None,
    })
}

/// `g2 = N_H N_H12 / (N_H1 N_H2)` with Poisson error propagation.
pub fn heralded_g2(counts: &CoincidenceCounts) -> Result<G2Estimate> {
    g2_from(corrected_totals(counts))
}

/// g2 from raw tallies, ignoring any attached background.
pub fn heralded_g2_tallies(t: &Tallies) -> Result<G2Estimate> {
    g2_from(CorrectedTallies::raw(t))
}

/// Inverse-variance pooling of per-block estimates, each block spanning
/// `block_segments` consecutive segments.
///
/// Block weights use the expected triple count under the whole-run value
/// rather than each block's own (noisy) triple count, which would bias the
/// pooled value low. A single block reproduces [`heralded_g2`].
pub fn segmented_g2(counts: &CoincidenceCounts, block_segments: usize) -> Result<G2Estimate> {
    if block_segments == 0 {
        return Err(Error::Domain("block size must be at least one segment".into()));
    }
    let whole = heralded_g2(counts)?;
    let bg = counts.background.as_ref();
    let blocks: Vec<CorrectedTallies> = counts
        .segments
        .chunks(block_segments)
        .map(|chunk| corrected(&chunk.iter().map(|s| s.tallies).sum(), bg))
        .collect();
    if blocks.len() <= 1 || whole.value == 0.0 {
        return Ok(whole);
    }
    let g_ref = whole.value;
    let (mut sw, mut swg) = (0.0, 0.0);
    let mut clamped = false;
    for c in &blocks {
        let (nh, n1, n2) = (c.get(Field::H), c.get(Field::H1), c.get(Field::H2));
        if !(nh > 0.0 && n1 > 0.0 && n2 > 0.0) {
            continue;
        }
        let g = nh * c.get(Field::H12) / (n1 * n2);
        let expected_triples = g_ref * n1 * n2 / nh;
        let rel = 1.0 / expected_triples
            + c.variance(Field::H1) / (n1 * n1)
            + c.variance(Field::H2) / (n2 * n2)
            + c.variance(Field::H) / (nh * nh);
        let w = 1.0 / (g_ref * g_ref * rel);
        sw += w;
        swg += w * g;
        clamped |= c.any_clamped();
    }
    if sw == 0.0 {
        return Err(Error::InsufficientStatistics(
            "no block has nonzero heralded pair counts".into(),
        ));
    }
    Ok(G2Estimate {
        value: swg / sw,
        sigma: sw.recip().sqrt(),
        upper_limit: false,
        clamped,
        counts: whole.counts,
        x_rate: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub value: f64,
    pub sigma: f64,
}

impl Efficiency {
    fn binomial(successes: f64, trials: f64) -> Self {
        let value = successes / trials;
        Self {
            value,
            sigma: (value * (1.0 - value) / trials).max(0.0).sqrt(),
        }
    }
}

/// Correlated-photon calibration of the two signal detectors: `eta_i = N_Hi / N_H`.
///
/// The estimate includes the optics in front of detector `i` (attenuation and
/// splitter share).
pub fn klyshko_efficiency(counts: &CoincidenceCounts) -> Result<(Efficiency, Efficiency)> {
    let c = corrected_totals(counts);
    let nh = c.get(Field::H);
    if !(nh > 0.0) {
        return Err(Error::InsufficientStatistics("no herald clicks".into()));
    }
    Ok((
        Efficiency::binomial(c.get(Field::H1), nh),
        Efficiency::binomial(c.get(Field::H2), nh),
    ))
}

/// Herald-arm efficiency from the signal side: `(N_H1 + N_H2) / (N_1 + N_2)`.
pub fn klyshko_herald_efficiency(counts: &CoincidenceCounts) -> Result<Efficiency> {
    let c = corrected_totals(counts);
    let trials = c.get(Field::D1) + c.get(Field::D2);
    if !(trials > 0.0) {
        return Err(Error::InsufficientStatistics("no signal clicks".into()));
    }
    Ok(Efficiency::binomial(c.get(Field::H1) + c.get(Field::H2), trials))
}

/// Attaches a source-off run; estimators then subtract its scaled singles and
/// accidental coincidences from every aggregate they use.
pub fn background_subtract(signal: &CoincidenceCounts, background: &CoincidenceCounts) -> Result<CoincidenceCounts> {
    if signal.bin_width != background.bin_width {
        return Err(Error::BinWidthMismatch(signal.bin_width, background.bin_width));
    }
    let mut out = signal.clone();
    out.background = Some(BackgroundRun {
        bin_width: background.bin_width,
        totals: background.totals,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Slope (s, i.e. g2 per unit rate).
    pub slope: f64,
    pub intercept: f64,
    /// `[[var(A), cov(A,B)], [cov(A,B), var(B)]]`.
    pub covariance: [[f64; 2]; 2],
    pub reduced_chi2: f64,
    pub dof: usize,
}

impl FitResult {
    pub fn slope_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn intercept_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// Weighted least squares for `y = A x + B`.
pub fn weighted_linear_fit(points: &[FitPoint]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Rank(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.sigma > 0.0) || !p.x.is_finite() || !p.y.is_finite())
    {
        return Err(Error::Domain(format!("point ({}, {}) has sigma {}", p.x, p.y, p.sigma)));
    }
    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect();
    let s: f64 = w.iter().sum();
    let xbar = points.iter().zip(&w).map(|(p, w)| w * p.x).sum::<f64>() / s;
    let ybar = points.iter().zip(&w).map(|(p, w)| w * p.y).sum::<f64>() / s;
    let stt: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.x - xbar).powi(2)).sum();
    let scale = points.iter().map(|p| (p.x - xbar).abs()).fold(0.0, f64::max);
    if stt <= 0.0 || scale <= 1e-12 * xbar.abs() {
        return Err(Error::Rank("all x values are equal".into()));
    }
    let slope = points
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.x - xbar) * (p.y - ybar))
        .sum::<f64>()
        / stt;
    let intercept = ybar - slope * xbar;
    let chi2: f64 = points
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.y - slope * p.x - intercept).powi(2))
        .sum();
    let dof = points.len() - 2;
    let var_a = 1.0 / stt;
    let cov = -xbar / stt;
    let var_b = 1.0 / s + xbar * xbar / stt;
    Ok(FitResult {
        slope,
        intercept,
        covariance: [[var_a, cov], [cov, var_b]],
        reduced_chi2: chi2 / dof as f64,
        dof,
    })
}

/// Heralded photon rate incident on the signal arm, before detector losses:
/// `(N_H1 / eta_1 + N_H2 / eta_2) / T`.
///
/// Each detected heralded signal photon stands for `1 / eta_i` photons on its
/// path; summing both paths undoes the splitter.
pub fn corrected_rate(counts: &CoincidenceCounts, optics: &OpticsConfig, total_time: f64) -> Result<f64> {
    if !(total_time > 0.0) {
        return Err(Error::Domain(format!("total time {total_time} must be > 0")));
    }
    if !(optics.eta_1 > 0.0 && optics.eta_2 > 0.0) {
        return Err(Error::Domain("signal detector efficiencies must be > 0".into()));
    }
    let c = corrected_totals(counts);
    Ok((c.get(Field::H1) / optics.eta_1 + c.get(Field::H2) / optics.eta_2) / total_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coincidence::SegmentCounts;

    fn counts_of(t: Tallies) -> CoincidenceCounts {
        let mut c = CoincidenceCounts::empty(1e-8);
        c.segment_bins = t.bins;
        c.push_segment(t);
        c
    }

    fn tallies(bins: u64, v: [u64; 7]) -> Tallies {
        Tallies {
            bins,
            n_h: v[0],
            n_1: v[1],
            n_2: v[2],
            n_h1: v[3],
            n_h2: v[4],
            n_12: v[5],
            n_h12: v[6],
        }
    }

    #[test]
    fn uncorrelated_constructed_case() {
        let g = heralded_g2(&counts_of(tallies(1000, [100, 100, 100, 10, 10, 10, 1]))).unwrap();
        assert_eq!(g.value, 1.0);
        let expected = (1.0f64 + 0.1 + 0.1 + 0.01).sqrt();
        assert!((g.sigma - expected).abs() < 1e-15);
        assert!(!g.upper_limit);
    }

    #[test]
    fn zero_triples_give_upper_limit() {
        let g = heralded_g2(&counts_of(tallies(1000, [100, 100, 100, 10, 10, 10, 0]))).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.upper_limit);
        assert!((g.sigma - (1.21f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_is_insufficient() {
        let r = heralded_g2(&counts_of(tallies(1000, [100, 100, 100, 0, 10, 10, 0])));
        assert!(matches!(r, Err(Error::InsufficientStatistics(_))));
    }

    #[test]
    fn single_block_is_whole_run() {
        let mut c = counts_of(tallies(1000, [300, 100, 120, 30, 40, 10, 5]));
        c.push_segment(tallies(1000, [310, 90, 100, 31, 35, 12, 7]));
        assert_eq!(segmented_g2(&c, 2).unwrap(), heralded_g2(&c).unwrap());
        assert_eq!(segmented_g2(&c, 100).unwrap(), heralded_g2(&c).unwrap());
    }

    #[test]
    fn klyshko_lossless() {
        let c = counts_of(tallies(1000, [100, 100, 100, 100, 100, 100, 100]));
        let (e1, e2) = klyshko_efficiency(&c).unwrap();
        assert_eq!((e1.value, e1.sigma, e2.value), (1.0, 0.0, 1.0));
        assert!(klyshko_efficiency(&counts_of(tallies(10, [0; 7]))).is_err());
    }

    #[test]
    fn empty_background_is_identity() {
        let t = tallies(1000, [100, 90, 80, 10, 9, 8, 2]);
        let zero = counts_of(tallies(5000, [0; 7]));
        let c = background_subtract(&counts_of(t), &zero).unwrap();
        let ct = corrected_totals(&c);
        assert_eq!(ct.values, CorrectedTallies::raw(&t).values);
        assert_eq!(
            heralded_g2(&c).unwrap().value,
            heralded_g2(&counts_of(t)).unwrap().value
        );
    }

    #[test]
    fn self_subtraction_is_zero() {
        let t = tallies(10_000, [500, 400, 300, 30, 20, 15, 3]);
        let c = background_subtract(&counts_of(t), &counts_of(t)).unwrap();
        let ct = corrected_totals(&c);
        for v in ct.values {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn subtraction_removes_accidentals() {
        // Source only on the herald; the background adds independent signal clicks.
        let bins = 1_000_000u64;
        let bg = tallies(bins, [0, 1000, 1000, 0, 0, 1, 0]);
        // Expected: H 10000, accidental H1 = 10000 * 1e-3 = 10.
        let sig = tallies(bins, [10_000, 1000, 1000, 10, 10, 1, 0]);
        let c = background_subtract(&counts_of(sig), &counts_of(bg)).unwrap();
        let ct = corrected_totals(&c);
        assert!((ct.get(Field::H) - 10_000.0).abs() < 1e-9);
        assert!(ct.get(Field::D1).abs() < 1e-9);
        assert!(ct.get(Field::H1).abs() < 1e-9);
        assert!(ct.variance(Field::H1) > 10.0);
    }

    #[test]
    fn negative_corrections_clamp_and_flag() {
        let sig = tallies(1000, [10, 10, 10, 0, 0, 0, 0]);
        let bg = tallies(1000, [20, 10, 10, 0, 0, 0, 0]);
        let c = background_subtract(&counts_of(sig), &counts_of(bg)).unwrap();
        let ct = corrected_totals(&c);
        assert_eq!(ct.get(Field::H), 0.0);
        assert!(ct.clamped[Field::H as usize]);
    }

    #[test]
    fn background_needs_matching_bin_width() {
        let a = counts_of(tallies(10, [0; 7]));
        let mut b = a.clone();
        b.bin_width = 2e-8;
        assert!(matches!(
            background_subtract(&a, &b),
            Err(Error::BinWidthMismatch(_, _))
        ));
    }

    fn pts(v: &[(f64, f64, f64)]) -> Vec<FitPoint> {
        v.iter().map(|&(x, y, sigma)| FitPoint { x, y, sigma }).collect()
    }

    #[test]
    fn exact_line_is_interpolated() {
        let p = pts(&[
            (0.0, 0.001, 0.1),
            (1.0, 2.001, 0.3),
            (2.0, 4.001, 0.2),
            (5.0, 10.001, 1.0),
        ]);
        let f = weighted_linear_fit(&p).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 0.001).abs() < 1e-12);
        assert!(f.reduced_chi2 < 1e-20);
        assert_eq!(f.dof, 2);
        assert_eq!(f.covariance[0][1], f.covariance[1][0]);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(matches!(
            weighted_linear_fit(&pts(&[(1.0, 1.0, 1.0), (2.0, 2.0, 1.0)])),
            Err(Error::Rank(_))
        ));
        assert!(matches!(
            weighted_linear_fit(&pts(&[(1.0, 1.0, 1.0), (1.0, 2.0, 1.0), (1.0, 3.0, 1.0)])),
            Err(Error::Rank(_))
        ));
        assert!(weighted_linear_fit(&pts(&[(1.0, 1.0, 0.0), (2.0, 2.0, 1.0), (3.0, 3.0, 1.0)])).is_err());
    }

    #[test]
    fn fit_matches_normal_equations() {
        // Oracle: solve the 2x2 normal equations directly.
        let p = pts(&[
            (1.0, 1.2, 0.1),
            (2.0, 1.9, 0.2),
            (3.0, 3.2, 0.15),
            (4.0, 3.9, 0.3),
            (5.0, 5.3, 0.25),
        ]);
        let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for q in &p {
            let w = 1.0 / (q.sigma * q.sigma);
            s += w;
            sx += w * q.x;
            sxx += w * q.x * q.x;
            sy += w * q.y;
            sxy += w * q.x * q.y;
        }
        let det = s * sxx - sx * sx;
        let a = (s * sxy - sx * sy) / det;
        let b = (sxx * sy - sx * sxy) / det;
        let f = weighted_linear_fit(&p).unwrap();
        assert!((f.slope - a).abs() < 1e-12);
        assert!((f.intercept - b).abs() < 1e-12);
        assert!((f.covariance[0][0] - s / det).abs() < 1e-12);
        assert!((f.covariance[1][1] - sxx / det).abs() < 1e-12);
        assert!((f.covariance[0][1] + sx / det).abs() < 1e-12);
    }

    #[test]
    fn corrected_rate_lossless_identity() {
        let c = counts_of(tallies(1_000_000, [1000, 600, 500, 300, 250, 10, 5]));
        let optics = OpticsConfig {
            attenuation: 1.0,
            splitter_ratio: 0.5,
            eta_h: 1.0,
            eta_1: 1.0,
            eta_2: 1.0,
        };
        let t = c.duration();
        assert!((corrected_rate(&c, &optics, t).unwrap() - 550.0 / t).abs() < 1e-6);
        assert!(corrected_rate(&c, &optics, 0.0).is_err());
        let lossy = OpticsConfig { eta_2: 0.0, ..optics };
        assert!(corrected_rate(&c, &lossy, t).is_err());
    }

    #[test]
    fn segment_indices_survive_pooling_inputs() {
        let c = counts_of(tallies(10, [1, 1, 1, 1, 1, 1, 1]));
        assert_eq!(
            c.segments,
            vec![SegmentCounts {
                index: 0,
                tallies: tallies(10, [1; 7])
            }]
        );
    }
}
