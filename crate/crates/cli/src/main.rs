//! `g2sim`: simulate heralded g2(0) experiments, run attenuation sweeps,
//! analyze stored counts and plot reports.
//!
//! Exit codes: 0 success, 1 runtime or statistics failure, 2 configuration error.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use g2sim_core::report::{build_report, read_counts, write_counts, PointInput, Report};
use g2sim_core::{
    accumulate, background_subtract, bound_counts, bound_energy, simulate_run, ClickStreams, Error, ExperimentConfig,
    SweepPlan,
};

#[derive(Parser)]
#[command(name = "g2sim", version, about = "Heralded g2(0) simulation and analysis")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run; writes streams.pstm, counts.csv and counts.json.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an attenuation sweep and analyze it; writes report.json, report.csv and per-point counts.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep plan (INI with a [sweep] section).
        #[arg(long)]
        sweep: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze counts summaries (counts.json) or stored streams (.pstm, needs --config).
    Analyze {
        /// One input per attenuation point.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Source-off counts summary subtracted from every input.
        #[arg(long)]
        background: Option<PathBuf>,
        /// Configuration for .pstm inputs.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for report.json and report.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a report as SVG.
    Plot {
        /// report.json from sweep or analyze
        report: PathBuf,
        /// SVG file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy bound on g2(0): (2 delta / bin_width) * pulse_energy / threshold.
    BoundEnergy {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        bin_width: f64,
        #[arg(long)]
        pulse_energy: f64,
        #[arg(long)]
        threshold: f64,
    },
    /// Count-rate bound on g2(0): (2 delta^2 / bin_width) * (n1 + n2) / time.
    BoundCounts {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        bin_width: f64,
        #[arg(long)]
        n1: f64,
        #[arg(long)]
        n2: f64,
        #[arg(long)]
        time: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (INI).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured number of bins (per point, for sweeps).
    #[arg(long)]
    bins: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg =
            ExperimentConfig::load(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = self.bins {
            cfg.n_bins = b;
            cfg.segment_bins = cfg.segment_bins.min(b);
        }
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(g2sim_core::validate_config(cfg)?)
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut fs::File) -> g2sim_core::Result<()>) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write(&mut f).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_report(dir: &Path, report: &Report) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    write_file(&dir.join("report.json"), |f| report.write_json(f))?;
    write_file(&dir.join("report.csv"), |f| report.write_csv(f))?;
    Ok(())
}

fn print_report(report: &Report) {
    let mut out = std::io::stdout().lock();
    for p in &report.points {
        let g = p
            .primary()
            .map_or("-".to_string(), |g| format!("{:.6e} +- {:.2e}", g.value, g.sigma));
        let x = p.x_rate.map_or("-".to_string(), |x| format!("{x:.4e}"));
        let _ = writeln!(
            out,
            "alpha {:<8} bins {:<12} triples {:<8} g2 {g}  x {x}{}",
            p.attenuation,
            p.bins,
            p.totals.n_h12,
            p.error.as_ref().map_or(String::new(), |e| format!("  error: {e}"))
        );
    }
    match &report.fit {
        Some(f) => {
            let _ = writeln!(
                out,
                "fit ({}): slope {:.4e} +- {:.4e} s, intercept {:.6e} +- {:.2e}, reduced chi2 {:.3} (dof {})",
                report.series, f.slope, f.slope_sigma, f.intercept, f.intercept_sigma, f.reduced_chi2, f.dof
            );
        }
        None => {
            for n in &report.notes {
                let _ = writeln!(out, "note: {n}");
            }
        }
    }
}

fn simulate(run: &RunArgs, out: &Path) -> anyhow::Result<()> {
    let cfg = run.load()?;
    let streams = simulate_run(&cfg)?;
    let counts = accumulate(&streams, cfg.segment_bins);
    fs::create_dir_all(out)?;
    write_file(&out.join("streams.pstm"), |f| {
        streams.write_pstm(std::io::BufWriter::new(f))
    })?;
    let json = write_counts(out, "counts", &counts, &cfg)?;
    let t = counts.totals;
    let dur = counts.duration();
    println!(
        "theory {}  seed {}  bins {}  duration {:.6e} s",
        cfg.theory, cfg.seed, t.bins, dur
    );
    println!(
        "singles  N_H {}  N_1 {}  N_2 {}  (rates {:.4e}, {:.4e}, {:.4e} /s)",
        t.n_h,
        t.n_1,
        t.n_2,
        t.n_h as f64 / dur,
        t.n_1 as f64 / dur,
        t.n_2 as f64 / dur
    );
    println!("pairs    N_H1 {}  N_H2 {}  N_12 {}", t.n_h1, t.n_h2, t.n_12);
    println!("triples  N_H12 {}", t.n_h12);
    println!("wrote {}", json.display());
    Ok(())
}

/// Returns whether every point succeeded.
fn sweep(run: &RunArgs, plan_path: &Path, out: &Path) -> anyhow::Result<bool> {
    let base = run.load()?;
    let mut plan = SweepPlan::load(plan_path).with_context(|| format!("reading {}", plan_path.display()))?;
    if run.bins.is_some() {
        plan.max_bins = run.bins;
    }
    for w in plan.warnings() {
        eprintln!("warning: {w}");
    }
    let outcome = g2sim_core::run_sweep(&base, &plan)?;
    fs::create_dir_all(out)?;
    for (i, c) in outcome.counts.iter().enumerate() {
        if let Ok(c) = c {
            write_counts(out, &format!("point_{i:03}"), c, &plan.point_config(&base, i))?;
        }
    }
    write_report(out, &outcome.report)?;
    print_report(&outcome.report);
    Ok(outcome.report.failed_points() == 0)
}

fn analyze(inputs: &[PathBuf], background: Option<&Path>, config: Option<&Path>, out: &Path) -> anyhow::Result<bool> {
    let bg = background
        .map(|p| read_counts(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let mut points = Vec::new();
    for path in inputs {
        let (cfg, counts) = if path.extension().is_some_and(|e| e == "pstm") {
            let Some(cp) = config else {
                bail!("{}: stream inputs need --config", path.display());
            };
            let cfg = g2sim_core::validate_config(ExperimentConfig::load(cp)?)?;
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let streams = ClickStreams::read_pstm(std::io::BufReader::new(file))?;
            (cfg.clone(), accumulate(&streams, cfg.segment_bins))
        } else {
            let (summary, counts) = read_counts(path).with_context(|| format!("reading {}", path.display()))?;
            (summary.config, counts)
        };
        let counts = match &bg {
            Some((_, b)) => background_subtract(&counts, b),
            None => Ok(counts),
        };
        points.push(PointInput { config: cfg, counts });
    }
    let theory = points[0].config.theory;
    let report = build_report(theory, &points);
    write_report(out, &report)?;
    print_report(&report);
    Ok(report.failed_points() == 0)
}

fn plot(report: &Path, out: &Path) -> anyhow::Result<()> {
    let r = Report::read_json(report).with_context(|| format!("reading {}", report.display()))?;
    let svg = plot::render_svg(&r)?;
    fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Simulate { run, out } => simulate(&run, &out).map(|_| true),
        Command::Sweep { run, sweep: plan, out } => sweep(&run, &plan, &out),
        Command::Analyze {
            inputs,
            background,
            config,
            out,
        } => analyze(&inputs, background.as_deref(), config.as_deref(), &out),
        Command::Plot { report, out } => plot(&report, &out).map(|_| true),
        Command::BoundEnergy {
            delta,
            bin_width,
            pulse_energy,
            threshold,
        } => {
            if [delta, bin_width, pulse_energy, threshold].iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Domain("all arguments must be > 0".into()).into());
            }
            println!("{}", bound_energy(delta, bin_width, pulse_energy, threshold));
            Ok(true)
        }
        Command::BoundCounts {
            delta,
            bin_width,
            n1,
            n2,
            time,
        } => {
            println!("{}", bound_counts(delta, bin_width, n1, n2, time)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
