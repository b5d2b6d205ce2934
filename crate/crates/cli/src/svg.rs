//! Self-contained SVG figures: line charts and grid heat maps.
//!
//! Every number is written with a fixed number of decimals so that the
//! output is byte-stable across runs and platforms.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const N_TICKS: usize = 5;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick label with as few decimals as the tick spacing needs.
fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 || step <= 0.0 {
        0
    } else {
        (-step.log10()).ceil().min(8.0) as usize
    };
    let s = format!("{v:.decimals$}");
    // Avoid "-0".
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_owned()
    } else {
        s
    }
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let (x0, x1) = extent(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = extent(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

        let mut out = header(WIDTH, HEIGHT);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24.0" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_LEFT:.1}" y="{MARGIN_TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#000000"/>"##
        );
        let x_step = (x1 - x0) / N_TICKS as f64;
        let y_step = (y1 - y0) / N_TICKS as f64;
        for k in 0..=N_TICKS {
            let xv = x0 + x_step * k as f64;
            let yv = y0 + y_step * k as f64;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
                sx(xv),
                MARGIN_TOP + plot_h + 16.0,
                tick_label(xv, x_step)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{}</text>"#,
                MARGIN_LEFT - 6.0,
                sy(yv) + 4.0,
                tick_label(yv, y_step)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18.0" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 18.0 {:.1})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
            let lx = WIDTH - MARGIN_RIGHT - 150.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{ly:.1}" font-size="11">{}</text>"#,
                lx + 26.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// A lat/lon grid of values drawn row 0 at the bottom. Cells without a value
/// are left blank.
#[derive(Debug, Clone)]
pub struct HeatMap {
    pub title: String,
    pub legend_label: String,
    pub n_lat: usize,
    pub n_lon: usize,
    pub values: Vec<Option<f64>>,
}

/// White to `base` linear ramp.
fn ramp(t: f64, base: (u8, u8, u8)) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |c: u8| (255.0 + (f64::from(c) - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(base.0), mix(base.1), mix(base.2))
}

impl HeatMap {
    /// Colors span this map's own minimum and maximum.
    pub fn render(&self, base: (u8, u8, u8)) -> String {
        assert_eq!(self.values.len(), self.n_lat * self.n_lon, "heat map shape");
        let (lo, hi) = extent(self.values.iter().flatten().copied());
        let legend_w = 90.0;
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT - legend_w;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let cell = (plot_w / self.n_lon.max(1) as f64).min(plot_h / self.n_lat.max(1) as f64);
        let top = MARGIN_TOP + plot_h;

        let mut out = header(WIDTH, HEIGHT);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24.0" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for lat in 0..self.n_lat {
            for lon in 0..self.n_lon {
                let Some(v) = self.values[lat * self.n_lon + lon] else {
                    continue;
                };
                let fill = ramp((v - lo) / (hi - lo), base);
                let _ = writeln!(
                    out,
                    r##"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}" stroke="#999999" stroke-width="0.5"><title>lat {lat} lon {lon}: {}</title></rect>"##,
                    MARGIN_LEFT + lon as f64 * cell,
                    top - (lat + 1) as f64 * cell,
                    tick_label(v, 1.0 / 1000.0)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">longitude index</text>"#,
            MARGIN_LEFT + self.n_lon as f64 * cell / 2.0,
            top + 24.0
        );
        let _ = writeln!(
            out,
            r#"<text x="18.0" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 18.0 {:.1})">latitude index</text>"#,
            top - self.n_lat as f64 * cell / 2.0,
            top - self.n_lat as f64 * cell / 2.0
        );

        let lx = WIDTH - MARGIN_RIGHT - legend_w + 20.0;
        let steps = 10;
        let band = plot_h / steps as f64;
        for k in 0..steps {
            let t = (k as f64 + 0.5) / steps as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{lx:.1}" y="{:.2}" width="16.0" height="{band:.2}" fill="{}"/>"#,
                top - (k + 1) as f64 * band,
                ramp(t, base)
            );
        }
        let step = (hi - lo) / steps as f64;
        for (v, y) in [(lo, top), (hi, MARGIN_TOP)] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                lx + 20.0,
                y + 4.0,
                tick_label(v, step)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{:.1}" font-size="11">{}</text>"#,
            top + 24.0,
            escape(&self.legend_label)
        );
        out.push_str("</svg>\n");
        out
    }
}

/// Distinct base color per region, chosen by the region's position.
pub fn region_color(index: usize) -> (u8, u8, u8) {
    const BASES: [(u8, u8, u8); 6] = [
        (0x08, 0x30, 0x6b),
        (0x67, 0x00, 0x0d),
        (0x00, 0x44, 0x1b),
        (0x3f, 0x00, 0x7d),
        (0x7f, 0x27, 0x04),
        (0x25, 0x25, 0x25),
    ];
    BASES[index % BASES.len()]
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> LineChart {
        LineChart {
            title: "loss <train>".into(),
            x_label: "epoch".into(),
            y_label: "loss".into(),
            series: vec![Series {
                label: "train".into(),
                points: vec![(1.0, 3.0), (2.0, 2.0), (3.0, 1.5)],
            }],
        }
    }

    #[test]
    fn line_chart_is_well_formed_and_escaped() {
        let svg = chart().render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("loss &lt;train&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg, chart().render());
    }

    #[test]
    fn constant_series_do_not_divide_by_zero() {
        let mut c = chart();
        c.series[0].points = vec![(1.0, 0.0), (1.0, 0.0)];
        let svg = c.render();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn heat_map_draws_only_present_cells() {
        let map = HeatMap {
            title: "t".into(),
            legend_label: "events".into(),
            n_lat: 2,
            n_lon: 3,
            values: vec![Some(1.0), None, Some(3.0), None, None, Some(0.0)],
        };
        let svg = map.render(region_color(0));
        assert_eq!(svg.matches("<title>").count(), 3);
        assert!(svg.contains("fill=\"#ffffff\" stroke"));
        assert!(svg.contains("fill=\"#08306b\" stroke"));
    }

    #[test]
    fn tick_labels_are_fixed_decimal() {
        assert_eq!(tick_label(0.126, 0.05), "0.13");
        assert_eq!(tick_label(-0.0001, 0.5), "0.0");
        assert_eq!(tick_label(1234.4, 100.0), "1234");
    }
}
