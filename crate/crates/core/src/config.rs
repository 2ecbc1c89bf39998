//! Experiment configuration: domain types, invariant checks and the INI dialect.
//!
//! ```ini
//! [source]
//! pair_mean_per_bin = 0.05
//! mode_count = 100
//!
//! [optics]
//! attenuation = 1.0
//! splitter_ratio = 0.5
//! eta_h = 0.26
//! eta_1 = 0.075
//! eta_2 = 0.055
//!
//! [detectors]
//! bin_width = 20.83e-9
//! dark_rate = 150          ; all channels, or dark_rate_h / dark_rate_1 / dark_rate_2
//! background_rate = 0      ; likewise background_rate_h / _1 / _2
//!
//! [pcsft]
//! threshold_energy = 1.0
//! pulse_duration = 20.83e-9
//! incident_power = 7.2e7
//! diffusion_step = 20.83e-12   ; optional, defaults to pulse_duration / 1000
//! common_fluctuation = false   ; optional per-bin Gamma(M, 1/M) power factor
//!
//! [run]
//! theory = qm              ; or pcsft
//! n_bins = 4800000
//! segment_bins = 48000
//! seed = 42
//! ```
//!
//! All dimensioned values are SI (seconds, events per second). Unknown
//! sections and keys are rejected.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigIssue, Error, Result};

pub const DEFAULT_BIN_WIDTH: f64 = 20.83e-9;
pub const DEFAULT_DARK_RATE: f64 = 150.0;
/// Roughly 1 ms of 20.83 ns bins.
pub const DEFAULT_SEGMENT_BINS: u64 = 48_000;

/// Per-bin probabilities at or above this are rejected (`p = rate * bin_width`).
pub const MAX_BIN_PROBABILITY: f64 = 0.1;
/// Above this mean pair number per bin the source is no longer a heralded single-photon source.
pub const HERALDED_REGIME_MU: f64 = 0.2;
/// Minimum number of diffusion steps per pulse window.
pub const MIN_STEPS_PER_PULSE: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theory {
    Qm,
    Pcsft,
}

impl FromStr for Theory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qm" => Ok(Theory::Qm),
            "pcsft" => Ok(Theory::Pcsft),
            other => Err(Error::ConfigParse(format!(
                "unknown theory {other:?} (expected qm or pcsft)"
            ))),
        }
    }
}

impl std::fmt::Display for Theory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Theory::Qm => "qm",
            Theory::Pcsft => "pcsft",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Mean number of pairs per time bin.
    pub pair_mean_per_bin: f64,
    /// Number of thermal modes; the double-pair factor is `G = 1 + 1/M`.
    pub mode_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    /// Transmittance of the signal-arm variable attenuator.
    pub attenuation: f64,
    /// Fraction of the signal beam sent toward detector 1.
    pub splitter_ratio: f64,
    pub eta_h: f64,
    pub eta_1: f64,
    pub eta_2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Dark-count rates (1/s) for herald, detector 1, detector 2.
    pub dark_rate: [f64; 3],
    /// Background rates (1/s) for herald, detector 1, detector 2.
    pub background_rate: [f64; 3],
    /// Time-bin width in seconds.
    pub bin_width: f64,
}

impl DetectorConfig {
    /// Per-bin probability of a noise click on `channel` (dark OR background).
    pub fn noise_probability(&self, channel: usize) -> f64 {
        let pd = self.dark_rate[channel] * self.bin_width;
        let pb = self.background_rate[channel] * self.bin_width;
        pd + pb - pd * pb
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsftConfig {
    /// Detector threshold energy `E_d` (arbitrary energy units).
    pub threshold_energy: f64,
    /// Pulse duration within each bin (s).
    pub pulse_duration: f64,
    /// Power reaching the detector tree before the splitter, energy per second.
    pub incident_power: f64,
    /// Euler step of the field diffusion (s).
    pub diffusion_step: f64,
    /// Apply a per-bin Gamma(M, 1/M) factor common to all channels' power.
    #[serde(default)]
    pub common_fluctuation: bool,
}

impl PcsftConfig {
    pub fn new(threshold_energy: f64, pulse_duration: f64, incident_power: f64) -> Self {
        Self {
            threshold_energy,
            pulse_duration,
            incident_power,
            diffusion_step: pulse_duration / MIN_STEPS_PER_PULSE,
            common_fluctuation: false,
        }
    }

    /// Mean pulse energy reaching the tree after an attenuator of transmittance `attenuation`.
    pub fn pulse_energy(&self, attenuation: f64) -> f64 {
        self.incident_power * attenuation * self.pulse_duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub optics: OpticsConfig,
    pub detectors: DetectorConfig,
    pub pcsft: Option<PcsftConfig>,
    pub theory: Theory,
    pub n_bins: u64,
    pub segment_bins: u64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: SourceConfig {
                pair_mean_per_bin: 0.01,
                mode_count: 100,
            },
            optics: OpticsConfig {
                attenuation: 1.0,
                splitter_ratio: 0.5,
                eta_h: 0.26,
                eta_1: 0.075,
                eta_2: 0.055,
            },
            detectors: DetectorConfig {
                dark_rate: [DEFAULT_DARK_RATE; 3],
                background_rate: [0.0; 3],
                bin_width: DEFAULT_BIN_WIDTH,
            },
            pcsft: None,
            theory: Theory::Qm,
            n_bins: DEFAULT_SEGMENT_BINS * 100,
            segment_bins: DEFAULT_SEGMENT_BINS,
            seed: 0,
        }
    }
}

fn check_unit(issues: &mut Vec<ConfigIssue>, field: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        issues.push(ConfigIssue::new(field, format!("{v} is outside [0, 1]")));
    }
}

fn check_positive(issues: &mut Vec<ConfigIssue>, field: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        issues.push(ConfigIssue::new(field, format!("{v} must be finite and > 0")));
    }
}

fn check_nonnegative(issues: &mut Vec<ConfigIssue>, field: &str, v: f64) {
    if !(v.is_finite() && v >= 0.0) {
        issues.push(ConfigIssue::new(field, format!("{v} must be finite and >= 0")));
    }
}

const CHANNEL_SUFFIX: [&str; 3] = ["h", "1", "2"];

impl ExperimentConfig {
    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();

        check_nonnegative(&mut issues, "source.pair_mean_per_bin", self.source.pair_mean_per_bin);
        if self.source.mode_count < 1 {
            issues.push(ConfigIssue::new("source.mode_count", "must be >= 1"));
        }

        let o = &self.optics;
        check_unit(&mut issues, "optics.attenuation", o.attenuation);
        check_unit(&mut issues, "optics.splitter_ratio", o.splitter_ratio);
        check_unit(&mut issues, "optics.eta_h", o.eta_h);
        check_unit(&mut issues, "optics.eta_1", o.eta_1);
        check_unit(&mut issues, "optics.eta_2", o.eta_2);

        let d = &self.detectors;
        check_positive(&mut issues, "detectors.bin_width", d.bin_width);
        for (c, sfx) in CHANNEL_SUFFIX.iter().enumerate() {
            for (name, rate) in [("dark_rate", d.dark_rate[c]), ("background_rate", d.background_rate[c])] {
                let field = format!("detectors.{name}_{sfx}");
                check_nonnegative(&mut issues, &field, rate);
                let p = rate * d.bin_width;
                if p >= MAX_BIN_PROBABILITY {
                    issues.push(ConfigIssue::new(
                        field,
                        format!("per-bin probability {p} must be < {MAX_BIN_PROBABILITY}"),
                    ));
                }
            }
        }

        if let Some(p) = &self.pcsft {
            check_positive(&mut issues, "pcsft.threshold_energy", p.threshold_energy);
            check_positive(&mut issues, "pcsft.pulse_duration", p.pulse_duration);
            check_nonnegative(&mut issues, "pcsft.incident_power", p.incident_power);
            check_positive(&mut issues, "pcsft.diffusion_step", p.diffusion_step);
            if p.pulse_duration > d.bin_width * (1.0 + 1e-12) {
                issues.push(ConfigIssue::new(
                    "pcsft.pulse_duration",
                    format!("{} s exceeds the bin width {} s", p.pulse_duration, d.bin_width),
                ));
            }
            if p.diffusion_step * MIN_STEPS_PER_PULSE > p.pulse_duration * (1.0 + 1e-9) {
                issues.push(ConfigIssue::new(
                    "pcsft.diffusion_step",
                    format!(
                        "{} s is coarser than pulse_duration / {MIN_STEPS_PER_PULSE}",
                        p.diffusion_step
                    ),
                ));
            }
        } else if self.theory == Theory::Pcsft {
            issues.push(ConfigIssue::new("pcsft", "theory = pcsft requires a [pcsft] section"));
        }

        if self.n_bins == 0 {
            issues.push(ConfigIssue::new("run.n_bins", "must be >= 1"));
        }
        if self.segment_bins == 0 {
            issues.push(ConfigIssue::new("run.segment_bins", "must be >= 1"));
        } else if self.segment_bins > self.n_bins {
            issues.push(ConfigIssue::new(
                "run.segment_bins",
                format!("{} exceeds n_bins = {}", self.segment_bins, self.n_bins),
            ));
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.source.pair_mean_per_bin > HERALDED_REGIME_MU {
            w.push(format!(
                "source.pair_mean_per_bin = {} is above {HERALDED_REGIME_MU}; multi-pair events dominate",
                self.source.pair_mean_per_bin
            ));
        }
        w
    }

    pub fn n_segments(&self) -> u64 {
        self.n_bins.div_ceil(self.segment_bins)
    }

    /// Length in bins of segment `index`; the final segment may be short.
    pub fn segment_len(&self, index: u64) -> u64 {
        let start = index * self.segment_bins;
        self.segment_bins.min(self.n_bins.saturating_sub(start))
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        parse_experiment(&ini)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    /// Renders the configuration in the INI dialect accepted by [`from_ini_str`](Self::from_ini_str).
    pub fn to_ini_string(&self) -> String {
        let mut s = String::new();
        let d = &self.detectors;
        let o = &self.optics;
        let _ = writeln!(s, "[source]");
        let _ = writeln!(s, "pair_mean_per_bin = {:?}", self.source.pair_mean_per_bin);
        let _ = writeln!(s, "mode_count = {}", self.source.mode_count);
        let _ = writeln!(s, "\n[optics]");
        let _ = writeln!(s, "attenuation = {:?}", o.attenuation);
        let _ = writeln!(s, "splitter_ratio = {:?}", o.splitter_ratio);
        let _ = writeln!(s, "eta_h = {:?}", o.eta_h);
        let _ = writeln!(s, "eta_1 = {:?}", o.eta_1);
        let _ = writeln!(s, "eta_2 = {:?}", o.eta_2);
        let _ = writeln!(s, "\n[detectors]");
        let _ = writeln!(s, "bin_width = {:?}", d.bin_width);
        for (c, sfx) in CHANNEL_SUFFIX.iter().enumerate() {
            let _ = writeln!(s, "dark_rate_{sfx} = {:?}", d.dark_rate[c]);
            let _ = writeln!(s, "background_rate_{sfx} = {:?}", d.background_rate[c]);
        }
        if let Some(p) = &self.pcsft {
            let _ = writeln!(s, "\n[pcsft]");
            let _ = writeln!(s, "threshold_energy = {:?}", p.threshold_energy);
            let _ = writeln!(s, "pulse_duration = {:?}", p.pulse_duration);
            let _ = writeln!(s, "incident_power = {:?}", p.incident_power);
            let _ = writeln!(s, "diffusion_step = {:?}", p.diffusion_step);
            let _ = writeln!(s, "common_fluctuation = {}", p.common_fluctuation);
        }
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "theory = {}", self.theory);
        let _ = writeln!(s, "n_bins = {}", self.n_bins);
        let _ = writeln!(s, "segment_bins = {}", self.segment_bins);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// Returns `cfg` unchanged if every invariant holds.
pub fn validate_config(cfg: ExperimentConfig) -> Result<ExperimentConfig> {
    cfg.validate()?;
    Ok(cfg)
}

/// Collects `key = value` pairs of one section and reports unknown keys.
pub(crate) struct SectionReader<'a> {
    section: &'a str,
    entries: Vec<(&'a str, &'a str)>,
    used: Vec<bool>,
}

impl<'a> SectionReader<'a> {
    pub(crate) fn new(section: &'a str, props: &'a ini::Properties) -> Self {
        let entries: Vec<_> = props.iter().collect();
        let used = vec![false; entries.len()];
        Self { section, entries, used }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        let mut found = None;
        for (i, (k, v)) in self.entries.iter().enumerate() {
            if *k == key {
                self.used[i] = true;
                found = Some(*v);
            }
        }
        found
    }

    pub(crate) fn get<T: FromStr>(&mut self, key: &str, issues: &mut Vec<ConfigIssue>) -> Option<T> {
        let raw = self.raw(key)?;
        match raw.trim().parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                issues.push(ConfigIssue::new(
                    format!("{}.{key}", self.section),
                    format!("cannot parse {raw:?}"),
                ));
                None
            }
        }
    }

    pub(crate) fn get_str(&mut self, key: &str) -> Option<&'a str> {
        self.raw(key).map(str::trim)
    }

    pub(crate) fn finish(self, issues: &mut Vec<ConfigIssue>) {
        for ((k, _), used) in self.entries.iter().zip(self.used) {
            if !used {
                issues.push(ConfigIssue::new(format!("{}.{k}", self.section), "unknown key"));
            }
        }
    }
}

fn parse_experiment(ini: &Ini) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut issues = Vec::new();
    let mut segment_bins_given = false;

    for (section, props) in ini.iter() {
        let Some(name) = section else {
            if let Some((k, _)) = props.iter().next() {
                issues.push(ConfigIssue::new(k, "key outside of any section"));
            }
            continue;
        };
        let mut r = SectionReader::new(name, props);
        match name {
            "source" => {
                if let Some(v) = r.get("pair_mean_per_bin", &mut issues) {
                    cfg.source.pair_mean_per_bin = v;
                }
                if let Some(v) = r.get("mode_count", &mut issues) {
                    cfg.source.mode_count = v;
                }
            }
            "optics" => {
                let o = &mut cfg.optics;
                for (key, slot) in [
                    ("attenuation", &mut o.attenuation),
                    ("splitter_ratio", &mut o.splitter_ratio),
                    ("eta_h", &mut o.eta_h),
                    ("eta_1", &mut o.eta_1),
                    ("eta_2", &mut o.eta_2),
                ] {
                    if let Some(v) = r.get(key, &mut issues) {
                        *slot = v;
                    }
                }
            }
            "detectors" => {
                let d = &mut cfg.detectors;
                if let Some(v) = r.get("bin_width", &mut issues) {
                    d.bin_width = v;
                }
                for (base, arr) in [
                    ("dark_rate", &mut d.dark_rate),
                    ("background_rate", &mut d.background_rate),
                ] {
                    if let Some(v) = r.get::<f64>(base, &mut issues) {
                        *arr = [v; 3];
                    }
                    for (c, sfx) in CHANNEL_SUFFIX.iter().enumerate() {
                        if let Some(v) = r.get(&format!("{base}_{sfx}"), &mut issues) {
                            arr[c] = v;
                        }
                    }
                }
            }
            "pcsft" => {
                let mut p = PcsftConfig::new(f64::NAN, f64::NAN, f64::NAN);
                for key in ["threshold_energy", "pulse_duration", "incident_power"] {
                    match r.get::<f64>(key, &mut issues) {
                        Some(v) => match key {
                            "threshold_energy" => p.threshold_energy = v,
                            "pulse_duration" => p.pulse_duration = v,
                            _ => p.incident_power = v,
                        },
                        None => {
                            if !issues.iter().any(|i| i.field == format!("pcsft.{key}")) {
                                issues.push(ConfigIssue::new(format!("pcsft.{key}"), "missing key"));
                            }
                        }
                    }
                }
                p.diffusion_step = r
                    .get("diffusion_step", &mut issues)
                    .unwrap_or(p.pulse_duration / MIN_STEPS_PER_PULSE);
                if let Some(v) = r.get("common_fluctuation", &mut issues) {
                    p.common_fluctuation = v;
                }
                cfg.pcsft = Some(p);
            }
            "run" => {
                if let Some(t) = r.get_str("theory") {
                    match t.parse() {
                        Ok(t) => cfg.theory = t,
                        Err(e) => issues.push(ConfigIssue::new("run.theory", e.to_string())),
                    }
                }
                if let Some(v) = r.get("n_bins", &mut issues) {
                    cfg.n_bins = v;
                }
                if let Some(v) = r.get("segment_bins", &mut issues) {
                    cfg.segment_bins = v;
                    segment_bins_given = true;
                }
                if let Some(v) = r.get("seed", &mut issues) {
                    cfg.seed = v;
                }
            }
            other => {
                issues.push(ConfigIssue::new(other, "unknown section"));
                continue;
            }
        }
        r.finish(&mut issues);
    }

    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    // The default segment length applies only to runs that are at least one segment long.
    if !segment_bins_given {
        cfg.segment_bins = DEFAULT_SEGMENT_BINS.min(cfg.n_bins).max(1);
    }
    Ok(cfg)
}
