//! Mollweide plots of rotation sets. A rotation is drawn at its axis direction; the rotation angle
//! picks the hue and the weight picks the marker area.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt::Write;

use posedistrib_core::rotkit::Rotation;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
/// Upper bound on drawn points per layer; larger sets are thinned with a fixed stride.
pub const MAX_DRAWN: usize = 4000;

/// Mollweide coordinates in `[-2√2, 2√2] x [-√2, √2]`.
pub fn mollweide(lon: f64, lat: f64) -> (f64, f64) {
    let mut theta = lat;
    if (lat.abs() - FRAC_PI_2).abs() > 1e-12 {
        for _ in 0..50 {
            let f = 2.0 * theta + (2.0 * theta).sin() - PI * lat.sin();
            let d = 2.0 + 2.0 * (2.0 * theta).cos();
            if d.abs() < 1e-15 {
                break;
            }
            let step = f / d;
            theta -= step;
            if step.abs() < 1e-12 {
                break;
            }
        }
    }
    (2.0 * SQRT_2 / PI * lon * theta.cos(), SQRT_2 * theta.sin())
}

/// Axis direction as (longitude, latitude) and the rotation angle.
pub fn axis_coords(r: &Rotation<f64>) -> (f64, f64, f64) {
    let v = r.to_axis_angle();
    let angle = v.norm();
    if angle < 1e-12 {
        return (0.0, 0.0, 0.0);
    }
    let a = v / angle;
    (a.y.atan2(a.x), a.z.clamp(-1.0, 1.0).asin(), angle)
}

fn to_px(x: f64, y: f64) -> (f64, f64) {
    let sx = (WIDTH / 2.0 - 10.0) / (2.0 * SQRT_2);
    let sy = (HEIGHT / 2.0 - 10.0) / SQRT_2;
    (WIDTH / 2.0 + x * sx, HEIGHT / 2.0 - y * sy)
}

/// Hue in degrees for a rotation angle in `[0, π]`.
fn hue(angle: f64) -> f64 {
    300.0 * (angle / PI).clamp(0.0, 1.0)
}

pub struct Layer<'a> {
    pub label: &'a str,
    pub rotations: &'a [Rotation<f64>],
    /// Per-rotation weights; `None` draws equal small markers.
    pub weights: Option<&'a [f64]>,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub manifest_sha256: &'a str,
    pub layers: Vec<Layer<'a>>,
    pub ground_truth: &'a [Rotation<f64>],
    pub banner: Option<&'a str>,
}

impl Plot<'_> {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{h}" viewBox="0 0 {WIDTH} {h}">"#,
            h = HEIGHT + 30.0
        );
        let _ = writeln!(s, "<!-- manifest_sha256={} -->", self.manifest_sha256);
        let _ = writeln!(s, r#"<metadata>{}</metadata>"#, self.manifest_sha256);
        let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
        let (cx, cy) = to_px(0.0, 0.0);
        let (ex, _) = to_px(2.0 * SQRT_2, 0.0);
        let (_, ey) = to_px(0.0, SQRT_2);
        let _ = writeln!(
            s,
            r##"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" fill="none" stroke="#888888"/>"##,
            ex - cx,
            cy - ey
        );
        for lat in [-60.0f64, -30.0, 0.0, 30.0, 60.0] {
            let (x0, y0) = to_px_ll(-PI, lat.to_radians());
            let (x1, y1) = to_px_ll(PI, lat.to_radians());
            let _ = writeln!(s, r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="#dddddd"/>"##);
        }
        for layer in &self.layers {
            let n = layer.rotations.len();
            let stride = n.div_ceil(MAX_DRAWN).max(1);
            let drawn = n.div_ceil(stride);
            let wmax = layer.weights.map(|w| w.iter().copied().fold(f64::MIN_POSITIVE, f64::max));
            let _ = writeln!(s, r#"<g class="{}" data-count="{n}" data-drawn="{drawn}">"#, layer.label);
            for i in (0..n).step_by(stride) {
                let (lon, lat, angle) = axis_coords(&layer.rotations[i]);
                let (x, y) = to_px_ll(lon, lat);
                let r = match (layer.weights, wmax) {
                    (Some(w), Some(m)) => 2.0 + 6.0 * (w[i].max(0.0) / m).sqrt(),
                    _ => 1.2,
                };
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="hsl({:.1},80%,45%)" fill-opacity="0.7"/>"#,
                    hue(angle)
                );
            }
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(s, r#"<g class="ground_truth" data-count="{}">"#, self.ground_truth.len());
        for r in self.ground_truth {
            let (lon, lat, _) = axis_coords(r);
            let (x, y) = to_px_ll(lon, lat);
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="9" fill="none" stroke="#000000" stroke-width="1.2"/>"##);
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<text x="10" y="{:.0}" font-family="monospace" font-size="13">{}</text>"#, HEIGHT + 20.0, escape(self.title));
        if let Some(b) = self.banner {
            let _ = writeln!(s, r##"<rect x="0" y="0" width="{WIDTH}" height="24" fill="#c62828"/>"##);
            let _ = writeln!(s, r##"<text x="10" y="17" font-family="monospace" font-size="14" fill="#ffffff">{}</text>"##, escape(b));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn to_px_ll(lon: f64, lat: f64) -> (f64, f64) {
    let (x, y) = mollweide(lon, lat);
    to_px(x, y)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
