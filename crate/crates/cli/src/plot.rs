//! Static SVG rendering of the figure tables. Reads only files listed in the
//! manifest; nothing is simulated here.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use zeno_drag::sme::unconditioned_mean;

use crate::campaign::{write_file, Manifest};
use crate::error::CampaignError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2a,
    Fig3,
    Fig4,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Fig2a, Figure::Fig3, Figure::Fig4];
}

/// Columns of a CSV table, keyed by header name. Empty cells become `None`.
struct Table {
    columns: BTreeMap<String, Vec<Option<f64>>>,
    rows: usize,
}

impl Table {
    fn read(out: &Path, manifest: &Manifest, kind: &str) -> Result<Self, CampaignError> {
        let entry = manifest.find(kind).ok_or_else(|| CampaignError::MissingInput(format!("{kind} table")))?;
        let path = out.join(&entry.path);
        if !path.exists() {
            return Err(CampaignError::MissingInput(path.display().to_string()));
        }
        let mut reader = csv::Reader::from_path(&path).map_err(|e| CampaignError::MissingInput(e.to_string()))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CampaignError::MissingInput(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns: BTreeMap<String, Vec<Option<f64>>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        let mut rows = 0;
        for rec in reader.records() {
            let rec = rec.map_err(|e| CampaignError::MissingInput(e.to_string()))?;
            for (h, cell) in headers.iter().zip(rec.iter()) {
                if let Some(c) = columns.get_mut(h) {
                    c.push(cell.parse().ok());
                }
            }
            rows += 1;
        }
        Ok(Self { columns, rows })
    }

    fn get(&self, col: &str, row: usize) -> Option<f64> {
        self.columns.get(col).and_then(|c| c.get(row).copied().flatten())
    }

    fn num(&self, col: &str, row: usize) -> f64 {
        self.get(col, row).unwrap_or(f64::NAN)
    }

    /// Row indices grouped by the value of `col`, in first-seen order.
    fn groups(&self, col: &str) -> Vec<(f64, Vec<usize>)> {
        let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
        for r in 0..self.rows {
            let k = self.num(col, r);
            match out.iter_mut().find(|(v, _)| *v == k) {
                Some((_, rows)) => rows.push(r),
                None => out.push((k, vec![r])),
            }
        }
        out
    }
}

fn color(i: usize, n: usize) -> String {
    let hue = 300.0 * i as f64 / n.max(2).saturating_sub(1) as f64;
    format!("hsl({hue:.0},70%,42%)")
}

/// Linear map from data coordinates onto a pixel rectangle.
#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, svg: &mut String, xlabel: &str, ylabel: &str, ticks: usize) {
        let _ = writeln!(
            svg,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            self.x0, self.y0, self.w, self.h
        );
        for k in 0..=ticks {
            let f = k as f64 / ticks as f64;
            let xv = self.xr.0 + f * (self.xr.1 - self.xr.0);
            let yv = self.yr.0 + f * (self.yr.1 - self.yr.0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                self.px(xv),
                self.y0 + self.h + 14.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                self.x0 - 4.0,
                self.py(yv) + 3.0,
                fmt_tick(yv)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{xlabel}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 + self.h + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{ylabel}</text>"#,
            self.x0 - 34.0,
            self.y0 + self.h / 2.0,
            self.x0 - 34.0,
            self.y0 + self.h / 2.0
        );
    }

    fn polyline(&self, svg: &mut String, pts: &[(f64, f64)], stroke: &str, extra: &str) {
        let d: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{stroke}" {extra}/>"#, d.join(" "));
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.2}", v);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn svg_doc(width: f64, height: f64, title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n{body}</svg>\n",
        width / 2.0
    )
}

/// Mean XY states per velocity and readout time, with the closed-form
/// unconditioned trajectories overlaid.
fn fig2a(out: &Path, manifest: &Manifest) -> Result<String, CampaignError> {
    let t = Table::read(out, manifest, "fig2a-data")?;
    let c = &manifest.campaign;
    let f = Frame { x0: 60.0, y0: 40.0, w: 480.0, h: 480.0, xr: (-1.05, 1.05), yr: (-1.05, 1.05) };
    let mut svg = String::new();
    f.axes(&mut svg, "x", "y", 6);
    let circle: Vec<(f64, f64)> = (0..=200).map(|k| 2.0 * PI * k as f64 / 200.0).map(|a| (a.cos(), a.sin())).collect();
    f.polyline(&mut svg, &circle, "#999", r#"stroke-dasharray="4 3""#);
    let groups = t.groups("v_khz");
    let horizon = c.horizon_us() * 1e-6;
    for (gi, (v, rows)) in groups.iter().enumerate() {
        let col = color(gi, groups.len());
        let exp = c.experiment(*v, 0);
        let theory: Vec<(f64, f64)> =
            (0..=200).map(|k| unconditioned_mean(&exp, horizon * k as f64 / 200.0)).map(|s| (s.x, s.y)).collect();
        f.polyline(&mut svg, &theory, &col, r#"stroke-width="1" opacity="0.6""#);
        for &r in rows {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{col}"><title>{v} kHz, {} us</title></circle>"#,
                f.px(t.num("x", r)),
                f.py(t.num("y", r)),
                t.num("t_us", r)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="560" y="{:.1}" font-size="10" fill="{col}">{v} kHz</text>"#,
            50.0 + 13.0 * gi as f64
        );
    }
    Ok(svg_doc(640.0, 560.0, "Mean state in the XY plane", &svg))
}

fn wedge(cx: f64, cy: f64, r0: f64, r1: f64, a0: f64, a1: f64) -> String {
    // y is flipped in screen space
    let p = |r: f64, a: f64| (cx + r * a.cos(), cy - r * a.sin());
    let (p1, p2, p3, p4) = (p(r0, a0), p(r1, a0), p(r1, a1), p(r0, a1));
    format!(
        "M{:.2},{:.2} L{:.2},{:.2} A{r1:.2},{r1:.2} 0 0 0 {:.2},{:.2} L{:.2},{:.2} A{r0:.2},{r0:.2} 0 0 1 {:.2},{:.2} Z",
        p1.0, p1.1, p2.0, p2.1, p3.0, p3.1, p4.0, p4.1, p1.0, p1.1
    )
}

/// Histogram grid of state clouds, one row per velocity and one panel per
/// time slice, with the measurement axis (white) and jump axis (red).
fn fig3(out: &Path, manifest: &Manifest) -> Result<String, CampaignError> {
    let hist = Table::read(out, manifest, "fig3-histogram")?;
    let axes = Table::read(out, manifest, "fig3-axes")?;
    let c = &manifest.campaign;
    let (nb_a, nb_r) = (c.angle_bins, c.radius_bins);
    let panel = 150.0;
    let radius = 65.0;
    let mut svg = String::new();
    let vel = hist.groups("v_khz");
    let mut ncols = 0;
    for (row, (v, rows)) in vel.iter().enumerate() {
        let mut slices: Vec<(f64, Vec<usize>)> = Vec::new();
        for &r in rows {
            let t = hist.num("t_us", r);
            match slices.iter_mut().find(|(s, _)| *s == t) {
                Some((_, v)) => v.push(r),
                None => slices.push((t, vec![r])),
            }
        }
        ncols = ncols.max(slices.len());
        for (col, (t_us, cells)) in slices.iter().enumerate() {
            let cx = 20.0 + panel * col as f64 + panel / 2.0;
            let cy = 40.0 + panel * row as f64 + panel / 2.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="black"/>"#,
                cx - panel / 2.0 + 2.0,
                cy - panel / 2.0 + 2.0,
                panel - 4.0,
                panel - 4.0
            );
            let max = cells.iter().map(|&r| hist.num("count", r)).fold(1.0, f64::max);
            for &r in cells {
                let n = hist.num("count", r);
                if n <= 0.0 {
                    continue;
                }
                let ai = hist.num("angle_bin", r);
                let ri = hist.num("radius_bin", r);
                let a0 = -PI + 2.0 * PI * ai / nb_a as f64;
                let a1 = a0 + 2.0 * PI / nb_a as f64;
                let r0 = radius * ri / nb_r as f64;
                let r1 = radius * (ri + 1.0) / nb_r as f64;
                let level = (n / max).sqrt();
                let _ = writeln!(
                    svg,
                    r#"<path d="{}" fill="rgb({:.0},{:.0},{:.0})"/>"#,
                    wedge(cx, cy, r0, r1, a0, a1),
                    255.0 * level,
                    180.0 * level,
                    40.0 + 60.0 * level
                );
            }
            let _ = writeln!(svg, r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="{radius:.1}" fill="none" stroke="#555"/>"##);
            let axis_row = (0..axes.rows).find(|&r| axes.num("v_khz", r) == *v && axes.num("t_us", r) == *t_us);
            if let Some(ar) = axis_row {
                let mut line = |angle: f64, stroke: &str| {
                    let (dx, dy) = (radius * angle.cos(), -radius * angle.sin());
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}" stroke-width="1.5"/>"#,
                        cx - dx,
                        cy - dy,
                        cx + dx,
                        cy + dy
                    );
                };
                line(axes.num("measurement_axis_rad", ar), "white");
                if let Some(j) = axes.get("jump_axis_rad", ar) {
                    line(j, "red");
                }
            }
            let _ = writeln!(
                svg,
                r#"<text x="{cx:.1}" y="{:.1}" font-size="10" fill="white" text-anchor="middle">{v} kHz, {t_us} us</text>"#,
                cy + panel / 2.0 - 8.0
            );
        }
    }
    let width = 40.0 + panel * ncols.max(1) as f64;
    let height = 60.0 + panel * vel.len().max(1) as f64;
    Ok(svg_doc(width, height, "State histograms (white: measurement axis, red: jump axis)", &svg))
}

/// Jump-frame decay curves for each Zeno-regime velocity.
fn fig3_decay(out: &Path, manifest: &Manifest) -> Result<String, CampaignError> {
    let t = Table::read(out, manifest, "fig3-decay")?;
    let horizon = manifest.campaign.horizon_us();
    let mut svg = String::new();
    let groups = t.groups("v_khz");
    for (panel, (col_name, label)) in [("perp", "perpendicular"), ("along", "along jump axis")].iter().enumerate() {
        let f = Frame {
            x0: 60.0 + 380.0 * panel as f64,
            y0: 40.0,
            w: 300.0,
            h: 260.0,
            xr: (0.0, horizon),
            yr: (-0.2, 1.0),
        };
        f.axes(&mut svg, "t (us)", label, 5);
        for (gi, (_, rows)) in groups.iter().enumerate() {
            let pts: Vec<(f64, f64)> = rows.iter().map(|&r| (t.num("t_us", r), t.num(col_name, r))).collect();
            f.polyline(&mut svg, &pts, &color(gi, groups.len()), r#"stroke-width="1.2""#);
        }
    }
    for (gi, (v, _)) in groups.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="340" font-size="10" fill="{}">{v} kHz</text>"#,
            60.0 + 60.0 * gi as f64,
            color(gi, groups.len())
        );
    }
    Ok(svg_doc(780.0, 360.0, "Ensemble mean in the jump-axis frame", &svg))
}

/// Fidelity versus post-selection threshold; hollow markers flag bins with
/// few survivors, crosses flag empty bins.
fn fig4(out: &Path, manifest: &Manifest) -> Result<String, CampaignError> {
    let t = Table::read(out, manifest, "fig4-data")?;
    let f = Frame { x0: 60.0, y0: 40.0, w: 480.0, h: 360.0, xr: (-1.0, 1.0), yr: (0.4, 1.0) };
    let mut svg = String::new();
    f.axes(&mut svg, "normalized post-selection threshold", "fidelity", 4);
    let groups = t.groups("v_khz");
    for (gi, (v, rows)) in groups.iter().enumerate() {
        let col = color(gi, groups.len());
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|&&r| t.num("low_stats_flag", r) == 0.0)
            .map(|&r| (t.num("threshold", r), t.num("fidelity", r)))
            .collect();
        f.polyline(&mut svg, &pts, &col, r#"stroke-width="1.2""#);
        for &r in rows {
            let (x, low) = (f.px(t.num("threshold", r)), t.num("low_stats_flag", r) != 0.0);
            match t.get("fidelity", r) {
                Some(fid) if low => {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="none" stroke="{col}"/>"#,
                        f.py(fid.clamp(f.yr.0, f.yr.1))
                    );
                }
                Some(_) => {}
                None => {
                    let y = f.py(f.yr.0) - 4.0;
                    let _ =
                        writeln!(svg, r#"<path d="M{:.2},{:.2} l6,6 m0,-6 l-6,6" stroke="{col}"/>"#, x - 3.0, y - 3.0);
                }
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="560" y="{:.1}" font-size="10" fill="{col}">{v} kHz</text>"#,
            50.0 + 13.0 * gi as f64
        );
    }
    Ok(svg_doc(640.0, 450.0, "Post-selected fidelity", &svg))
}

/// Renders `figure` from the tables of a finished campaign and records the
/// SVG files in the manifest.
pub fn plot_emit(out: &Path, figure: Figure) -> Result<Vec<String>, CampaignError> {
    let mut manifest = Manifest::load(out)?;
    let docs: Vec<(&str, String)> = match figure {
        Figure::Fig2a => vec![("figures/fig2a.svg", fig2a(out, &manifest)?)],
        Figure::Fig3 => {
            vec![("figures/fig3.svg", fig3(out, &manifest)?), ("figures/fig3_decay.svg", fig3_decay(out, &manifest)?)]
        }
        Figure::Fig4 => vec![("figures/fig4.svg", fig4(out, &manifest)?)],
    };
    let hash = manifest.campaign_hash.clone();
    let seed = manifest.campaign.seed;
    let mut written = Vec::new();
    for (rel, doc) in docs {
        write_file(out, rel, doc.as_bytes())?;
        manifest.add(out, rel, "figure", &hash, seed)?;
        written.push(rel.to_string());
    }
    manifest.save(out)?;
    Ok(written)
}
