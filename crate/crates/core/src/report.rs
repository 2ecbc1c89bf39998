//! On-disk counts files and the analysis report shared by `sweep` and `analyze`.
//!
//! A counts file is a JSON summary (`counts.json`) next to a per-segment CSV;
//! the summary embeds the run's configuration so a report can be rebuilt from
//! files alone. Report JSON and CSV carry one entry per attenuation point.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    corrected_rate, corrected_totals, heralded_g2, klyshko_efficiency, segmented_g2, weighted_linear_fit, Efficiency,
    FitPoint, G2Estimate, DEFAULT_BLOCK_SEGMENTS,
};
use crate::coincidence::{CoincidenceCounts, Field, Tallies};
use crate::config::{ExperimentConfig, Theory};
use crate::error::{Error, Result};
use crate::pcsft::{bound_counts, bound_energy};
use crate::qm::qm_band;

pub const COUNTS_FORMAT: &str = "g2sim-counts";
pub const REPORT_FORMAT: &str = "g2sim-report";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRates {
    #[serde(rename = "H")]
    pub herald: f64,
    #[serde(rename = "1")]
    pub signal_1: f64,
    #[serde(rename = "2")]
    pub signal_2: f64,
}

/// JSON summary of a counts run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsSummary {
    pub format: String,
    pub version: u32,
    /// Per-segment CSV, relative to the summary's directory.
    pub counts_csv: String,
    pub bin_width: f64,
    pub segment_bins: u64,
    pub n_segments: u64,
    pub duration: f64,
    pub totals: Tallies,
    /// Singles rates in clicks per second.
    pub rates: ChannelRates,
    pub config: ExperimentConfig,
}

impl CountsSummary {
    pub fn new(counts: &CoincidenceCounts, config: &ExperimentConfig, counts_csv: &str) -> Self {
        let t = counts.duration();
        let rate = |n: u64| if t > 0.0 { n as f64 / t } else { 0.0 };
        Self {
            format: COUNTS_FORMAT.into(),
            version: FORMAT_VERSION,
            counts_csv: counts_csv.into(),
            bin_width: counts.bin_width,
            segment_bins: counts.segment_bins,
            n_segments: counts.segments.len() as u64,
            duration: t,
            totals: counts.totals,
            rates: ChannelRates {
                herald: rate(counts.totals.n_h),
                signal_1: rate(counts.totals.n_1),
                signal_2: rate(counts.totals.n_2),
            },
            config: config.clone(),
        }
    }
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`; returns the JSON path.
pub fn write_counts(dir: &Path, stem: &str, counts: &CoincidenceCounts, config: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_name = format!("{stem}.csv");
    counts.write_csv(fs::File::create(dir.join(&csv_name))?)?;
    let json_path = dir.join(format!("{stem}.json"));
    let summary = CountsSummary::new(counts, config, &csv_name);
    let mut f = fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    Ok(json_path)
}

/// Reads a counts summary and its CSV, checking that they agree.
pub fn read_counts(json_path: &Path) -> Result<(CountsSummary, CoincidenceCounts)> {
    let summary: CountsSummary = serde_json::from_reader(fs::File::open(json_path)?)?;
    if summary.format != COUNTS_FORMAT {
        return Err(Error::Format(format!(
            "{} is not a counts summary",
            json_path.display()
        )));
    }
    if summary.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported counts version {}", summary.version)));
    }
    let csv_path = json_path.parent().unwrap_or(Path::new(".")).join(&summary.counts_csv);
    let counts = CoincidenceCounts::read_csv(fs::File::open(&csv_path)?, summary.bin_width, summary.segment_bins)?;
    if counts.totals != summary.totals {
        return Err(Error::Format(format!(
            "{} totals disagree with {}",
            csv_path.display(),
            json_path.display()
        )));
    }
    Ok((summary, counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Summary {
    pub value: f64,
    pub sigma: f64,
    pub upper_limit: bool,
    pub clamped: bool,
}

impl From<&G2Estimate> for G2Summary {
    fn from(g: &G2Estimate) -> Self {
        Self {
            value: g.value,
            sigma: g.sigma,
            upper_limit: g.upper_limit,
            clamped: g.clamped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub x: f64,
    pub lower: f64,
    pub upper: f64,
}

/// One attenuation point of a sweep (or one counts file given to `analyze`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub attenuation: f64,
    pub bins: u64,
    pub duration: f64,
    pub totals: Tallies,
    pub raw: Option<G2Summary>,
    /// Present only when a background run was supplied.
    pub subtracted: Option<G2Summary>,
    /// Block-pooled estimate of the primary series.
    pub segmented: Option<G2Summary>,
    pub x_rate: Option<f64>,
    /// Single-pair probability inferred from the herald rate, `N_H / (eta_H bins)`.
    pub p1_estimate: Option<f64>,
    pub qm_band: Option<BandSample>,
    pub bound_counts: Option<f64>,
    pub bound_energy: Option<f64>,
    pub eta_1: Option<Efficiency>,
    pub eta_2: Option<Efficiency>,
    pub error: Option<String>,
}

impl PointReport {
    fn failed(attenuation: f64, message: String) -> Self {
        Self {
            attenuation,
            bins: 0,
            duration: 0.0,
            totals: Tallies::default(),
            raw: None,
            subtracted: None,
            segmented: None,
            x_rate: None,
            p1_estimate: None,
            qm_band: None,
            bound_counts: None,
            bound_energy: None,
            eta_1: None,
            eta_2: None,
            error: Some(message),
        }
    }

    /// The series the fit uses: background-subtracted when available, else raw.
    pub fn primary(&self) -> Option<&G2Summary> {
        self.subtracted.as_ref().or(self.raw.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub slope_sigma: f64,
    pub intercept: f64,
    pub intercept_sigma: f64,
    pub covariance: [[f64; 2]; 2],
    pub reduced_chi2: f64,
    pub dof: usize,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub theory: Theory,
    /// `"subtracted"` if every fitted point had a background run, else `"raw"`.
    pub series: String,
    pub points: Vec<PointReport>,
    pub fit: Option<FitSummary>,
    pub notes: Vec<String>,
}

/// Input to [`build_report`]: a run's counts (background attached or not) and its configuration.
pub struct PointInput {
    pub config: ExperimentConfig,
    pub counts: Result<CoincidenceCounts>,
}

pub fn analyze_point(config: &ExperimentConfig, counts: &CoincidenceCounts) -> PointReport {
    let o = &config.optics;
    let mut p = PointReport::failed(o.attenuation, String::new());
    p.error = None;
    p.bins = counts.n_bins();
    p.duration = counts.duration();
    p.totals = counts.totals;

    let raw_counts = CoincidenceCounts {
        background: None,
        ..counts.clone()
    };
    let mut errors = Vec::new();
    match heralded_g2(&raw_counts) {
        Ok(g) => p.raw = Some((&g).into()),
        Err(e) => errors.push(format!("raw: {e}")),
    }
    if counts.background.is_some() {
        match heralded_g2(counts) {
            Ok(g) => p.subtracted = Some((&g).into()),
            Err(e) => errors.push(format!("subtracted: {e}")),
        }
    }
    if p.primary().is_some() {
        if let Ok(g) = segmented_g2(counts, DEFAULT_BLOCK_SEGMENTS) {
            p.segmented = Some((&g).into());
        }
    }
    match corrected_rate(counts, o, p.duration) {
        Ok(x) => p.x_rate = Some(x),
        Err(e) => errors.push(format!("rate: {e}")),
    }
    let c = corrected_totals(counts);
    if p.bins > 0 && o.eta_h > 0.0 {
        let p1 = c.get(Field::H) / (o.eta_h * p.bins as f64);
        p.p1_estimate = Some(p1);
        if let (Ok((lower, upper)), Some(x)) = (qm_band(p1, o.eta_h), p.x_rate) {
            p.qm_band = Some(BandSample { x, lower, upper });
        }
    }
    let delta = config.pcsft.as_ref().map_or(counts.bin_width, |q| q.pulse_duration);
    p.bound_counts = bound_counts(
        delta,
        counts.bin_width,
        counts.totals.n_1 as f64,
        counts.totals.n_2 as f64,
        p.duration,
    )
    .ok();
    p.bound_energy = config.pcsft.as_ref().map(|q| {
        bound_energy(
            q.pulse_duration,
            counts.bin_width,
            q.pulse_energy(o.attenuation),
            q.threshold_energy,
        )
    });
    if let Ok((e1, e2)) = klyshko_efficiency(counts) {
        p.eta_1 = Some(e1);
        p.eta_2 = Some(e2);
    }
    if !errors.is_empty() {
        p.error = Some(errors.join("; "));
    }
    p
}

/// Per-point estimates plus the weighted fit of the primary series against `x_rate`.
pub fn build_report(theory: Theory, inputs: &[PointInput]) -> Report {
    let points: Vec<PointReport> = inputs
        .iter()
        .map(|inp| match &inp.counts {
            Ok(c) => analyze_point(&inp.config, c),
            Err(e) => PointReport::failed(inp.config.optics.attenuation, e.to_string()),
        })
        .collect();
    let mut notes = Vec::new();
    let usable: Vec<(&PointReport, FitPoint)> = points
        .iter()
        .filter_map(|p| {
            let g = p.primary()?;
            let x = p.x_rate?;
            (g.sigma > 0.0 && !g.upper_limit).then_some((
                p,
                FitPoint {
                    x,
                    y: g.value,
                    sigma: g.sigma,
                },
            ))
        })
        .collect();
    let series = if !usable.is_empty() && usable.iter().all(|(p, _)| p.subtracted.is_some()) {
        "subtracted"
    } else {
        "raw"
    };
    let fit_points: Vec<FitPoint> = usable
        .iter()
        .map(|(p, fp)| {
            let g = if series == "subtracted" { p.subtracted } else { p.raw };
            let g = g.expect("usable point has the chosen series");
            FitPoint {
                y: g.value,
                sigma: g.sigma,
                ..*fp
            }
        })
        .collect();
    let fit = if fit_points.len() < 3 {
        notes.push(format!(
            "insufficient points: the fit needs at least 3 points with estimates, have {}",
            fit_points.len()
        ));
        None
    } else {
        match weighted_linear_fit(&fit_points) {
            Ok(f) => Some(FitSummary {
                slope: f.slope,
                slope_sigma: f.slope_sigma(),
                intercept: f.intercept,
                intercept_sigma: f.intercept_sigma(),
                covariance: f.covariance,
                reduced_chi2: f.reduced_chi2,
                dof: f.dof,
                n_points: fit_points.len(),
            }),
            Err(e) => {
                notes.push(format!("fit skipped: {e}"));
                None
            }
        }
    };
    if points.iter().all(|p| p.subtracted.is_none()) {
        notes.push("no background run: raw estimates only".into());
    }
    Report {
        format: REPORT_FORMAT.into(),
        version: FORMAT_VERSION,
        theory,
        series: series.into(),
        points,
        fit,
        notes,
    }
}

impl Report {
    pub fn failed_points(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let r: Report = serde_json::from_reader(fs::File::open(path)?)?;
        if r.format != REPORT_FORMAT || r.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{} is not a version {FORMAT_VERSION} report",
                path.display()
            )));
        }
        Ok(r)
    }

    /// One row per point with the plotted quantities; missing values are empty cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "attenuation",
            "x_rate",
            "g2_raw",
            "sigma_raw",
            "g2_subtracted",
            "sigma_subtracted",
            "qm_lower",
            "qm_upper",
            "bound_counts",
            "bound_energy",
            "triples",
            "bins",
        ])?;
        let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for p in &self.points {
            out.write_record([
                p.attenuation.to_string(),
                cell(p.x_rate),
                cell(p.raw.map(|g| g.value)),
                cell(p.raw.map(|g| g.sigma)),
                cell(p.subtracted.map(|g| g.value)),
                cell(p.subtracted.map(|g| g.sigma)),
                cell(p.qm_band.map(|b| b.lower)),
                cell(p.qm_band.map(|b| b.upper)),
                cell(p.bound_counts),
                cell(p.bound_energy),
                p.totals.n_h12.to_string(),
                p.bins.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate_counts;

    fn small_cfg(alpha: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.source.pair_mean_per_bin = 0.1;
        cfg.optics.attenuation = alpha;
        cfg.optics.eta_h = 0.5;
        cfg.optics.eta_1 = 0.8;
        cfg.optics.eta_2 = 0.8;
        cfg.n_bins = 200_000;
        cfg.segment_bins = 20_000;
        cfg
    }

    #[test]
    fn single_point_skips_fit() {
        let cfg = small_cfg(1.0);
        let c = simulate_counts(&cfg, 0).unwrap();
        let r = build_report(
            Theory::Qm,
            &[PointInput {
                config: cfg,
                counts: Ok(c),
            }],
        );
        assert!(r.fit.is_none());
        assert!(r.notes.iter().any(|n| n.starts_with("insufficient points")));
        assert!(r.points[0].raw.is_some());
        assert!(r.points[0].subtracted.is_none());
        assert_eq!(r.series, "raw");
    }

    #[test]
    fn failed_point_is_recorded() {
        let cfg = small_cfg(1.0);
        let r = build_report(
            Theory::Qm,
            &[PointInput {
                config: cfg,
                counts: Err(Error::Domain("boom".into())),
            }],
        );
        assert_eq!(r.failed_points(), 1);
    }

    #[test]
    fn counts_files_round_trip() {
        let dir = std::env::temp_dir().join(format!("g2sim-report-test-{}", std::process::id()));
        let cfg = small_cfg(0.5);
        let c = simulate_counts(&cfg, 0).unwrap();
        let path = write_counts(&dir, "counts", &c, &cfg).unwrap();
        let (summary, back) = read_counts(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(summary.config, cfg);
        fs::remove_dir_all(&dir).unwrap();
    }
}
