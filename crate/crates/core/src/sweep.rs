//! Attenuation sweeps: one simulated run per attenuation, each stopped at a
//! triple-coincidence target or a bin cap, followed by the full analysis.
//!
//! ```ini
//! [sweep]
//! attenuations = 1.0, 0.72, 0.52, 0.37, 0.27, 0.19, 0.14, 0.1
//! target_triples = 10000     ; optional, default 10000
//! max_bins = 100000000       ; optional, default: the base config's n_bins
//! theory = qm                ; optional, default: the base config's theory
//! background_bins = 0        ; optional source-off run per point, 0 = none
//! ```

use std::path::Path;

use ini::Ini;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::background_subtract;
use crate::coincidence::CoincidenceCounts;
use crate::config::{ExperimentConfig, SectionReader, Theory};
use crate::error::{ConfigIssue, Error, Result};
use crate::report::{build_report, PointInput, Report};
use crate::simulate::simulate_counts_until;

pub const DEFAULT_TARGET_TRIPLES: u64 = 10_000;

/// Run indices at and above this select background (source-off) streams.
const BACKGROUND_RUN_BASE: u32 = 1 << 19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub attenuations: Vec<f64>,
    pub target_triples: u64,
    /// Per-point bin cap; `None` uses the base config's `n_bins`.
    pub max_bins: Option<u64>,
    /// `None` keeps the base config's theory.
    pub theory: Option<Theory>,
    pub background_bins: u64,
}

impl SweepPlan {
    pub fn new(attenuations: Vec<f64>) -> Self {
        Self {
            attenuations,
            target_triples: DEFAULT_TARGET_TRIPLES,
            max_bins: None,
            theory: None,
            background_bins: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.attenuations.is_empty() {
            issues.push(ConfigIssue::new("sweep.attenuations", "list is empty"));
        }
        for (i, a) in self.attenuations.iter().enumerate() {
            if !(*a > 0.0 && *a <= 1.0) {
                issues.push(ConfigIssue::new(
                    format!("sweep.attenuations[{i}]"),
                    format!("{a} is outside (0, 1]"),
                ));
            }
        }
        if self.target_triples < 1 {
            issues.push(ConfigIssue::new("sweep.target_triples", "must be at least 1"));
        }
        if self.max_bins == Some(0) {
            issues.push(ConfigIssue::new("sweep.max_bins", "must be at least 1"));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.attenuations.windows(2).any(|p| p[1] >= p[0]) {
            w.push("sweep.attenuations: list is not strictly decreasing".to_string());
        }
        w
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let mut issues = Vec::new();
        let mut plan = None;
        for (section, props) in ini.iter() {
            match section {
                Some("sweep") => {
                    let mut r = SectionReader::new("sweep", props);
                    let attenuations = match r.get_str("attenuations") {
                        Some(list) => list
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(|s| {
                                s.parse::<f64>().map_err(|_| {
                                    ConfigIssue::new("sweep.attenuations", format!("cannot parse '{s}' as a number"))
                                })
                            })
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .unwrap_or_else(|e| {
                                issues.push(e);
                                Vec::new()
                            }),
                        None => {
                            issues.push(ConfigIssue::new("sweep.attenuations", "missing key"));
                            Vec::new()
                        }
                    };
                    let mut p = SweepPlan::new(attenuations);
                    if let Some(t) = r.get("target_triples", &mut issues) {
                        p.target_triples = t;
                    }
                    p.max_bins = r.get("max_bins", &mut issues);
                    p.theory = r.get("theory", &mut issues);
                    if let Some(b) = r.get("background_bins", &mut issues) {
                        p.background_bins = b;
                    }
                    r.finish(&mut issues);
                    plan = Some(p);
                }
                Some(other) => issues.push(ConfigIssue::new(other, "unknown section")),
                None if !props.is_empty() => {
                    issues.push(ConfigIssue::new("(top level)", "keys must be inside [sweep]"));
                }
                None => {}
            }
        }
        let Some(plan) = plan else {
            issues.push(ConfigIssue::new("sweep", "missing [sweep] section"));
            return Err(Error::Config(issues));
        };
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_ini_str(&text)
    }

    /// Configuration of point `index`: base config at that attenuation with the plan's theory and bin cap.
    pub fn point_config(&self, base: &ExperimentConfig, index: usize) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.optics.attenuation = self.attenuations[index];
        if let Some(t) = self.theory {
            cfg.theory = t;
        }
        if let Some(m) = self.max_bins {
            cfg.n_bins = m;
        }
        cfg.segment_bins = cfg.segment_bins.min(cfg.n_bins);
        cfg
    }

    /// Source-off configuration for the background run of point `index`.
    pub fn background_config(&self, base: &ExperimentConfig, index: usize) -> ExperimentConfig {
        let mut cfg = self.point_config(base, index);
        cfg.source.pair_mean_per_bin = 0.0;
        if let Some(p) = cfg.pcsft.as_mut() {
            p.incident_power = 0.0;
        }
        cfg.n_bins = self.background_bins;
        cfg.segment_bins = cfg.segment_bins.min(cfg.n_bins);
        cfg
    }
}

/// Counts for point `index`, background attached when the plan asks for one.
pub fn run_point(base: &ExperimentConfig, plan: &SweepPlan, index: usize) -> Result<CoincidenceCounts> {
    let cfg = plan.point_config(base, index);
    let run = u32::try_from(index).map_err(|_| Error::Domain("too many sweep points".into()))?;
    let counts = simulate_counts_until(&cfg, run, plan.target_triples)?;
    if plan.background_bins == 0 {
        return Ok(counts);
    }
    let bg = simulate_counts_until(
        &plan.background_config(base, index),
        BACKGROUND_RUN_BASE + run,
        u64::MAX,
    )?;
    background_subtract(&counts, &bg)
}

pub struct SweepOutcome {
    pub report: Report,
    /// Per-point counts in plan order (errors for failed points).
    pub counts: Vec<Result<CoincidenceCounts>>,
}

/// Runs every point (concurrently) and analyzes the lot.
pub fn run_sweep(base: &ExperimentConfig, plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    plan.point_config(base, 0).validate()?;
    let counts: Vec<Result<CoincidenceCounts>> = (0..plan.attenuations.len())
        .into_par_iter()
        .map(|i| run_point(base, plan, i))
        .collect();
    let theory = plan.theory.unwrap_or(base.theory);
    let inputs: Vec<PointInput> = counts
        .iter()
        .enumerate()
        .map(|(i, c)| PointInput {
            config: plan.point_config(base, i),
            counts: match c {
                Ok(c) => Ok(c.clone()),
                Err(e) => Err(Error::Domain(e.to_string())),
            },
        })
        .collect();
    let report = build_report(theory, &inputs);
    Ok(SweepOutcome { report, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plan() {
        let p = SweepPlan::from_ini_str("[sweep]\nattenuations = 1.0, 0.5 ,0.25\ntarget_triples = 50\n").unwrap();
        assert_eq!(p.attenuations, vec![1.0, 0.5, 0.25]);
        assert_eq!(p.target_triples, 50);
        assert_eq!(p.max_bins, None);
        assert!(p.warnings().is_empty());
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(SweepPlan::from_ini_str("[sweep]\nattenuations = \n").is_err());
        assert!(SweepPlan::from_ini_str("[sweep]\nattenuations = 1.5\n").is_err());
        assert!(SweepPlan::from_ini_str("[sweep]\nattenuations = 1\nbogus = 2\n").is_err());
        assert!(SweepPlan::from_ini_str("[sweep]\nattenuations = 1\ntarget_triples = 0\n").is_err());
        assert!(SweepPlan::from_ini_str("[other]\nx = 1\n").is_err());
        let e = SweepPlan::from_ini_str("[sweep]\nattenuations = 1, x\n").unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn warns_on_increasing_list() {
        assert_eq!(SweepPlan::new(vec![0.5, 1.0]).warnings().len(), 1);
    }

    #[test]
    fn background_run_is_source_off() {
        let mut plan = SweepPlan::new(vec![1.0]);
        plan.background_bins = 1000;
        let base = ExperimentConfig::default();
        let bg = plan.background_config(&base, 0);
        assert_eq!(bg.source.pair_mean_per_bin, 0.0);
        assert_eq!(bg.n_bins, 1000);
        assert!(bg.validate().is_ok());
    }
}
