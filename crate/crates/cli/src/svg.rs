//! Hand-emitted SVG plots with a fixed 960x540 viewBox, deterministic
//! element ordering, and fixed-precision coordinates, so CI can diff plot
//! output byte for byte.

use cordmetrics_core::drift::{DriftReport, ScalingFactorTable};

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 540.0;

const COLOR_BASE: &str = "#5778a4";
const COLOR_CANDIDATE: &str = "#e49444";
const COLOR_AXIS: &str = "#333333";
const COLOR_GRID: &str = "#dddddd";

fn f(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Default)]
pub struct SvgDoc {
    elements: Vec<String>,
}

impl SvgDoc {
    pub fn new() -> Self {
        SvgDoc::default()
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.elements.push(format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            f(x1),
            f(y1),
            f(x2),
            f(y2),
            f(width),
        ));
    }

    pub fn dashed_line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.elements.push(format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}" stroke-dasharray="6,4"/>"#,
            f(x1),
            f(y1),
            f(x2),
            f(y2),
            f(width),
        ));
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        self.elements.push(format!(
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
            f(cx),
            f(cy),
            f(r),
        ));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", f(*x), f(*y)))
            .collect();
        self.elements.push(format!(
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
            pts.join(" "),
            f(width),
        ));
    }

    pub fn polygon(&mut self, points: &[(f64, f64)], fill: &str, opacity: f64) {
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", f(*x), f(*y)))
            .collect();
        self.elements.push(format!(
            r#"<polygon points="{}" fill="{fill}" fill-opacity="{}" stroke="none"/>"#,
            pts.join(" "),
            f(opacity),
        ));
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        self.elements.push(format!(
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif" text-anchor="{anchor}" fill="{COLOR_AXIS}">{}</text>"#,
            f(x),
            f(y),
            f(size),
            escape(content),
        ));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n"
        ));
        out.push_str("<rect x=\"0\" y=\"0\" width=\"960\" height=\"540\" fill=\"#ffffff\"/>\n");
        for e in &self.elements {
            out.push_str(e);
            out.push('\n');
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Maps data coordinates onto a pixel frame (y grows upward in data space).
struct Frame {
    px0: f64,
    py0: f64,
    px1: f64,
    py1: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let t = (v - self.xmin) / (self.xmax - self.xmin).max(f64::MIN_POSITIVE);
        self.px0 + t * (self.px1 - self.px0)
    }

    fn y(&self, v: f64) -> f64 {
        let t = (v - self.ymin) / (self.ymax - self.ymin).max(f64::MIN_POSITIVE);
        self.py0 - t * (self.py0 - self.py1)
    }
}

/// Round ticks covering [min, max] with a 1/2/5 step ladder.
fn ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    let span = (max - min).max(f64::MIN_POSITIVE);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(mag * 10.0);
    let start = (min / step).ceil() * step;
    let mut out = Vec::new();
    let mut v = start;
    while v <= max + step * 1e-9 {
        out.push(v);
        v += step;
    }
    out
}

fn draw_axes(doc: &mut SvgDoc, frame: &Frame, x_label: &str, y_label: &str, y_ticks: bool) {
    doc.line(frame.px0, frame.py0, frame.px1, frame.py0, COLOR_AXIS, 1.5);
    doc.line(frame.px0, frame.py0, frame.px0, frame.py1, COLOR_AXIS, 1.5);
    if y_ticks {
        for t in ticks(frame.ymin, frame.ymax, 6) {
            let y = frame.y(t);
            doc.line(frame.px0, y, frame.px1, y, COLOR_GRID, 0.5);
            doc.text(frame.px0 - 8.0, y + 4.0, 12.0, "end", &format!("{t:.3}"));
        }
    }
    doc.text(
        (frame.px0 + frame.px1) / 2.0,
        frame.py0 + 40.0,
        14.0,
        "middle",
        x_label,
    );
    doc.text(frame.px0, frame.py1 - 12.0, 14.0, "start", y_label);
}

/// Strip plot of per-subject CSA-STD for the base and candidate versions,
/// with a mean bar per version (the variability-drift view).
pub fn csa_std_strip(report: &DriftReport) -> String {
    let mut doc = SvgDoc::new();
    doc.text(
        WIDTH / 2.0,
        28.0,
        18.0,
        "middle",
        &format!(
            "CSA STD across contrasts per subject ({} vs {})",
            report.base_version, report.candidate_version
        ),
    );

    let values: Vec<f64> = report
        .base
        .per_subject_csa_std
        .values()
        .chain(report.candidate.per_subject_csa_std.values())
        .copied()
        .collect();
    if values.is_empty() {
        doc.text(WIDTH / 2.0, HEIGHT / 2.0, 16.0, "middle", "no data");
        return doc.render();
    }
    let ymax = values.iter().cloned().fold(0.0, f64::max).max(1e-9) * 1.15;
    let frame = Frame {
        px0: 90.0,
        py0: 470.0,
        px1: 900.0,
        py1: 60.0,
        xmin: 0.0,
        xmax: 2.0,
        ymin: 0.0,
        ymax,
    };
    draw_axes(&mut doc, &frame, "model version", "CSA STD (mm^2)", true);

    for (slot, (version, stats, color)) in [
        (&report.base_version, &report.base, COLOR_BASE),
        (
            &report.candidate_version,
            &report.candidate,
            COLOR_CANDIDATE,
        ),
    ]
    .iter()
    .enumerate()
    {
        let cx = frame.x(slot as f64 + 0.5);
        let n = stats.per_subject_csa_std.len().max(1);
        for (idx, std) in stats.per_subject_csa_std.values().enumerate() {
            // Deterministic horizontal spread by subject index.
            let offset = (idx as f64 - (n as f64 - 1.0) / 2.0) * (160.0 / n as f64).min(24.0);
            doc.circle(cx + offset, frame.y(*std), 4.0, color);
        }
        let my = frame.y(stats.mean_csa_std);
        doc.line(cx - 90.0, my, cx + 90.0, my, color, 2.5);
        doc.text(cx, frame.py0 + 20.0, 13.0, "middle", version);
        doc.text(
            cx + 96.0,
            my + 4.0,
            11.0,
            "start",
            &format!("mean {:.3}", stats.mean_csa_std),
        );
    }
    doc.render()
}

/// Scatter of per-subject CSA under two contrasts with the identity line;
/// base and candidate versions drawn as separate series.
pub fn agreement_scatter(report: &DriftReport, pair: &[String; 2]) -> String {
    let mut doc = SvgDoc::new();
    doc.text(
        WIDTH / 2.0,
        28.0,
        18.0,
        "middle",
        &format!(
            "{} vs {} CSA agreement at {}",
            pair[0], pair[1], report.level_key
        ),
    );

    let find = |stats: &cordmetrics_core::drift::VersionStats| {
        stats
            .contrast_agreement
            .iter()
            .find(|a| {
                (a.contrast_a == pair[0] && a.contrast_b == pair[1])
                    || (a.contrast_a == pair[1] && a.contrast_b == pair[0])
            })
            .cloned()
    };
    let base = find(&report.base);
    let cand = find(&report.candidate);

    let mut all = Vec::new();
    for stats in [&base, &cand].into_iter().flatten() {
        for p in &stats.pairs {
            all.push(p.value_a);
            all.push(p.value_b);
        }
    }
    if all.is_empty() {
        doc.text(WIDTH / 2.0, HEIGHT / 2.0, 16.0, "middle", "no data");
        return doc.render();
    }
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.08).max(1.0);
    let frame = Frame {
        px0: 110.0,
        py0: 470.0,
        px1: 880.0,
        py1: 60.0,
        xmin: lo - pad,
        xmax: hi + pad,
        ymin: lo - pad,
        ymax: hi + pad,
    };
    draw_axes(
        &mut doc,
        &frame,
        &format!("{} CSA (mm^2)", pair[0]),
        &format!("{} CSA (mm^2)", pair[1]),
        true,
    );
    // Perfect agreement is the dashed identity line.
    doc.dashed_line(
        frame.x(frame.xmin),
        frame.y(frame.xmin),
        frame.x(frame.xmax),
        frame.y(frame.xmax),
        "#000000",
        1.5,
    );

    for (stats, color, label, ty) in [
        (&base, COLOR_BASE, &report.base_version, 60.0),
        (&cand, COLOR_CANDIDATE, &report.candidate_version, 80.0),
    ] {
        if let Some(stats) = stats {
            for p in &stats.pairs {
                doc.circle(frame.x(p.value_a), frame.y(p.value_b), 5.0, color);
            }
            let r = stats
                .pearson_r
                .map(|r| format!("r={r:.4}"))
                .unwrap_or_else(|| "r undefined".to_string());
            doc.circle(720.0, ty - 4.0, 5.0, color);
            doc.text(732.0, ty, 12.0, "start", &format!("{label} ({r})"));
        }
    }
    doc.render()
}

/// One subject-contrast point for the version-agreement scatter.
pub struct VersionPoint {
    pub subject_id: String,
    pub contrast: String,
    pub base_value: f64,
    pub candidate_value: f64,
}

/// Scatter of per-scan level-range CSA, base version on x and candidate
/// on y, with the dashed identity line. A candidate that uniformly
/// over-segments sits above the line.
pub fn version_scatter(report: &DriftReport, points: &[VersionPoint]) -> String {
    let mut doc = SvgDoc::new();
    doc.text(
        WIDTH / 2.0,
        28.0,
        18.0,
        "middle",
        &format!(
            "{} vs {} CSA at {}",
            report.base_version, report.candidate_version, report.level_key
        ),
    );
    if points.is_empty() {
        doc.text(WIDTH / 2.0, HEIGHT / 2.0, 16.0, "middle", "no data");
        return doc.render();
    }
    let all: Vec<f64> = points
        .iter()
        .flat_map(|p| [p.base_value, p.candidate_value])
        .collect();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.08).max(1.0);
    let frame = Frame {
        px0: 110.0,
        py0: 470.0,
        px1: 880.0,
        py1: 60.0,
        xmin: lo - pad,
        xmax: hi + pad,
        ymin: lo - pad,
        ymax: hi + pad,
    };
    draw_axes(
        &mut doc,
        &frame,
        &format!("{} CSA (mm^2)", report.base_version),
        &format!("{} CSA (mm^2)", report.candidate_version),
        true,
    );
    doc.dashed_line(
        frame.x(frame.xmin),
        frame.y(frame.xmin),
        frame.x(frame.xmax),
        frame.y(frame.xmax),
        "#000000",
        1.5,
    );
    for p in points {
        doc.circle(
            frame.x(p.base_value),
            frame.y(p.candidate_value),
            5.0,
            COLOR_CANDIDATE,
        );
    }
    doc.render()
}

/// Per-slice mean metric values (both versions) as input for the
/// two-panel scaling plot.
pub struct SlicePanel {
    pub metric_name: String,
    pub slice_indices: Vec<usize>,
    pub base_mean: Vec<f64>,
    pub candidate_mean: Vec<f64>,
}

/// Two panels: per-slice metric curves for both versions on top, the
/// per-slice scaling-factor band (mean +/- std, reference line at 1)
/// below.
pub fn scaling_band(
    report: &DriftReport,
    panel: &SlicePanel,
    table: &ScalingFactorTable,
) -> String {
    let mut doc = SvgDoc::new();
    doc.text(
        WIDTH / 2.0,
        26.0,
        18.0,
        "middle",
        &format!(
            "Per-slice {} and scaling factor ({} / {})",
            panel.metric_name, report.candidate_version, report.base_version
        ),
    );

    let slice_rows: Vec<(usize, f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.metric.name() == panel.metric_name)
        .filter_map(|r| {
            r.level_key
                .strip_prefix("slice-")
                .and_then(|s| s.parse::<usize>().ok())
                .map(|k| (k, r.mean_ratio, r.std_ratio))
        })
        .collect();
    if panel.slice_indices.is_empty() || slice_rows.is_empty() {
        doc.text(WIDTH / 2.0, HEIGHT / 2.0, 16.0, "middle", "no data");
        return doc.render();
    }

    let xmin = *panel.slice_indices.first().unwrap() as f64;
    let xmax = *panel.slice_indices.last().unwrap() as f64;
    let vmax = panel
        .base_mean
        .iter()
        .chain(&panel.candidate_mean)
        .cloned()
        .fold(0.0, f64::max)
        * 1.15;

    // Top panel: metric curves.
    let top = Frame {
        px0: 90.0,
        py0: 255.0,
        px1: 900.0,
        py1: 55.0,
        xmin,
        xmax,
        ymin: 0.0,
        ymax: vmax.max(1e-9),
    };
    draw_axes(
        &mut doc,
        &top,
        "",
        &format!("{} (per-slice mean)", panel.metric_name),
        true,
    );
    for (series, color, label, ly) in [
        (&panel.base_mean, COLOR_BASE, &report.base_version, 70.0),
        (
            &panel.candidate_mean,
            COLOR_CANDIDATE,
            &report.candidate_version,
            90.0,
        ),
    ] {
        let pts: Vec<(f64, f64)> = panel
            .slice_indices
            .iter()
            .zip(series.iter())
            .map(|(&k, &v)| (top.x(k as f64), top.y(v)))
            .collect();
        doc.polyline(&pts, color, 2.0);
        doc.circle(720.0, ly - 4.0, 5.0, color);
        doc.text(732.0, ly, 12.0, "start", label);
    }

    // Bottom panel: ratio band around the mean with the 1.0 reference.
    let ratios: Vec<f64> = slice_rows.iter().map(|r| r.1).collect();
    let stds: Vec<f64> = slice_rows.iter().map(|r| r.2).collect();
    let rmin = ratios
        .iter()
        .zip(&stds)
        .map(|(m, s)| m - s)
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let rmax = ratios
        .iter()
        .zip(&stds)
        .map(|(m, s)| m + s)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1.0);
    let rpad = ((rmax - rmin) * 0.15).max(0.01);
    let bottom = Frame {
        px0: 90.0,
        py0: 480.0,
        px1: 900.0,
        py1: 305.0,
        xmin,
        xmax,
        ymin: rmin - rpad,
        ymax: rmax + rpad,
    };
    draw_axes(
        &mut doc,
        &bottom,
        "slice index (I-S axis)",
        "scaling factor",
        true,
    );

    let mut band: Vec<(f64, f64)> = slice_rows
        .iter()
        .map(|&(k, m, s)| (bottom.x(k as f64), bottom.y(m + s)))
        .collect();
    band.extend(
        slice_rows
            .iter()
            .rev()
            .map(|&(k, m, s)| (bottom.x(k as f64), bottom.y(m - s))),
    );
    doc.polygon(&band, COLOR_CANDIDATE, 0.25);
    let mean_pts: Vec<(f64, f64)> = slice_rows
        .iter()
        .map(|&(k, m, _)| (bottom.x(k as f64), bottom.y(m)))
        .collect();
    doc.polyline(&mean_pts, COLOR_CANDIDATE, 2.0);
    doc.dashed_line(
        bottom.x(xmin),
        bottom.y(1.0),
        bottom.x(xmax),
        bottom.y(1.0),
        "#000000",
        1.0,
    );
    doc.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_well_formed_and_deterministic() {
        let mut doc = SvgDoc::new();
        doc.line(0.0, 0.0, 10.0, 10.0, "#000000", 1.0);
        doc.circle(5.0, 5.0, 2.0, "#ff0000");
        doc.text(1.0, 1.0, 12.0, "start", "a < b & c");
        let a = doc.render();
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("a &lt; b &amp; c"));
        let mut doc2 = SvgDoc::new();
        doc2.line(0.0, 0.0, 10.0, 10.0, "#000000", 1.0);
        doc2.circle(5.0, 5.0, 2.0, "#ff0000");
        doc2.text(1.0, 1.0, 12.0, "start", "a < b & c");
        assert_eq!(a, doc2.render());
    }

    #[test]
    fn ticks_cover_the_range_with_round_steps() {
        let t = ticks(0.0, 10.0, 5);
        assert!(t.contains(&0.0) && t.contains(&10.0));
        let t = ticks(0.0, 0.037, 6);
        assert!(!t.is_empty());
        assert!(t.iter().all(|&v| (0.0..=0.0371).contains(&v)));
    }
}
