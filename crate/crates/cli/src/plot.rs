//! SVG rendering of a report: g2 against corrected rate with 1-sigma error
//! bars, the QM band, and the fitted line.

use std::fmt::Write as _;

use g2sim_core::report::{G2Summary, Report};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 70.0;

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Round step (1, 2 or 5 times a power of ten) giving about `n` ticks over `span`.
fn tick_step(span: f64, n: f64) -> f64 {
    let raw = span / n;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo, 5.0);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders `report`; fails when no point carries an estimate and a rate.
pub fn render_svg(report: &Report) -> anyhow::Result<String> {
    let pts: Vec<(f64, Option<G2Summary>, Option<G2Summary>)> = report
        .points
        .iter()
        .filter_map(|p| Some((p.x_rate?, p.raw, p.subtracted)))
        .filter(|(_, r, s)| r.is_some() || s.is_some())
        .collect();
    if pts.is_empty() {
        anyhow::bail!("report has no points to plot");
    }
    let mut band: Vec<_> = report.points.iter().filter_map(|p| p.qm_band).collect();
    band.sort_by(|a, b| a.x.total_cmp(&b.x));

    let xs = pts.iter().map(|p| p.0).chain(band.iter().map(|b| b.x));
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let pad = if xmax > xmin {
        0.05 * (xmax - xmin)
    } else {
        0.5 * xmax.abs().max(1.0)
    };
    let series = pts.iter().flat_map(|p| [p.1, p.2]).flatten();
    let ymax = series
        .map(|g| g.value + g.sigma)
        .chain(band.iter().map(|b| b.upper))
        .fold(0.0f64, f64::max);
    let axes = Axes {
        x0: (xmin - pad).max(0.0),
        x1: xmax + pad,
        y0: 0.0,
        y1: if ymax > 0.0 { ymax * 1.1 } else { 1.0 },
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(
        s,
        "<style>.qm-band{{fill:#9ecae1;fill-opacity:0.5;stroke:none}} .fit-line{{stroke:#d62728;stroke-width:1.5}} \
         .errorbar{{stroke:#333;stroke-width:1}} .raw{{fill:#1f77b4}} .subtracted{{fill:#ff7f0e}} .axis{{stroke:#000}}</style>"
    )?;
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;

    if !band.is_empty() {
        let mut path: Vec<String> = band
            .iter()
            .map(|b| format!("{:.2},{:.2}", axes.px(b.x), axes.py(b.upper)))
            .collect();
        path.extend(
            band.iter()
                .rev()
                .map(|b| format!("{:.2},{:.2}", axes.px(b.x), axes.py(b.lower))),
        );
        writeln!(s, r#"<polygon class="qm-band" points="{}"/>"#, path.join(" "))?;
    }

    if let Some(fit) = &report.fit {
        let (a, b) = (fit.slope, fit.intercept);
        writeln!(
            s,
            r#"<line class="fit-line" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            axes.px(axes.x0),
            axes.py(a * axes.x0 + b),
            axes.px(axes.x1),
            axes.py(a * axes.x1 + b)
        )?;
    }

    for &(x, raw, sub) in &pts {
        let cx = axes.px(x);
        for g in [raw, sub].into_iter().flatten() {
            writeln!(
                s,
                r#"<line class="errorbar" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#,
                axes.py((g.value - g.sigma).max(axes.y0)),
                axes.py(g.value + g.sigma)
            )?;
        }
        if let Some(g) = raw {
            writeln!(
                s,
                r#"<circle class="point raw" cx="{cx:.2}" cy="{:.2}" r="4"/>"#,
                axes.py(g.value)
            )?;
        }
        if let Some(g) = sub {
            writeln!(
                s,
                r#"<rect class="point subtracted" x="{:.2}" y="{:.2}" width="8" height="8"/>"#,
                cx - 4.0,
                axes.py(g.value) - 4.0
            )?;
        }
    }

    let (bx, by) = (axes.px(axes.x0), axes.py(axes.y0));
    writeln!(
        s,
        r#"<line class="axis" x1="{bx:.2}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}"/>"#,
        axes.px(axes.x1)
    )?;
    writeln!(
        s,
        r#"<line class="axis" x1="{bx:.2}" y1="{by:.2}" x2="{bx:.2}" y2="{:.2}"/>"#,
        axes.py(axes.y1)
    )?;
    for t in ticks(axes.x0, axes.x1) {
        let x = axes.px(t);
        writeln!(
            s,
            r#"<line class="axis" x1="{x:.2}" y1="{by:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
            by + 5.0
        )?;
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            by + 20.0,
            label(t)
        )?;
    }
    for t in ticks(axes.y0, axes.y1) {
        let y = axes.py(t);
        writeln!(
            s,
            r#"<line class="axis" x1="{:.2}" y1="{y:.2}" x2="{bx:.2}" y2="{y:.2}"/>"#,
            bx - 5.0
        )?;
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            bx - 8.0,
            y + 4.0,
            label(t)
        )?;
    }
    writeln!(
        s,
        r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">corrected signal-arm rate (photons/s)</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 20.0
    )?;
    writeln!(
        s,
        r#"<text class="axis-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">heralded g2(0) (dimensionless)</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0
    )?;
    s.push_str("</svg>\n");
    Ok(s)
}
