use std::fmt::Write;

use diffckm::grid::Grid;
use diffckm::gridworld::{EnvironmentScene, Obstacle};
use serde_json::json;

/// Viridis-like anchor colors from low to high gain.
const STOPS: [[u8; 3]; 5] = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
const CANVAS_PX: f64 = 512.0;
const TRACK_COLORS: [&str; 6] = ["#ff3b30", "#ffffff", "#ff9500", "#00c7ff", "#ff2d92", "#a2ff00"];

/// Linear map from dB onto the color stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Palette {
    pub db_min: f64,
    pub db_max: f64,
}

impl Palette {
    pub fn spanning(values: &Grid<f64>) -> Self {
        let (lo, hi) =
            values.data().iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if lo.is_finite() {
            Self { db_min: lo, db_max: hi }
        } else {
            Self { db_min: 0.0, db_max: 0.0 }
        }
    }

    pub fn rgb(&self, db: f64) -> [u8; 3] {
        let span = self.db_max - self.db_min;
        let t = if span > 0.0 { ((db - self.db_min) / span).clamp(0.0, 1.0) } else { 0.0 };
        let x = t * (STOPS.len() - 1) as f64;
        let i = (x.floor() as usize).min(STOPS.len() - 2);
        let f = x - i as f64;
        let mut out = [0u8; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let (a, b) = (STOPS[i][k] as f64, STOPS[i + 1][k] as f64);
            *o = (a + f * (b - a)).round() as u8;
        }
        out
    }

    /// Description stored next to the heatmap so the colors can be read back as dB.
    pub fn notes(&self) -> serde_json::Value {
        json!({
            "palette": "linear in dB between db_min and db_max, piecewise-linear through the stops",
            "db_min": self.db_min,
            "db_max": self.db_max,
            "stops_rgb": STOPS,
        })
    }
}

/// Markers drawn over the heatmap.
#[derive(Debug, Clone, Default)]
pub struct Overlay {
    pub trajectories: Vec<Vec<[f64; 2]>>,
    pub obstacles: Vec<Obstacle>,
    /// Added to each obstacle radius for the dashed keep-out ring.
    pub clearance_m: f64,
    pub title: Option<String>,
}

struct Frame {
    px_per_m: f64,
    depth_m: f64,
}

impl Frame {
    fn xy(&self, q: [f64; 2]) -> (f64, f64) {
        (q[0] * self.px_per_m, (self.depth_m - q[1]) * self.px_per_m)
    }
}

/// Heatmap of `db` (rows along x, columns along y, y pointing up) with `overlay` on top.
pub fn heatmap_svg(scene: &EnvironmentScene, db: &Grid<f64>, palette: &Palette, overlay: &Overlay) -> String {
    let (rows, cols) = db.shape();
    let res = scene.resolution_m;
    let frame = Frame { px_per_m: CANVAS_PX / (rows.max(cols) as f64 * res), depth_m: cols as f64 * res };
    let cell = res * frame.px_per_m;
    let (w, h) = (rows as f64 * cell, cols as f64 * cell);
    let mut s = String::with_capacity(rows * cols * 64);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}" shape-rendering="crispEdges">"#
    );
    if let Some(t) = &overlay.title {
        let _ = writeln!(s, "<title>{}</title>", escape(t));
    }
    s.push_str("<g id=\"heatmap\">\n");
    for r in 0..rows {
        for c in 0..cols {
            let [cr, cg, cb] = palette.rgb(*db.get(r, c));
            let _ = writeln!(
                s,
                r##"<rect x="{:.3}" y="{:.3}" width="{cell:.3}" height="{cell:.3}" fill="#{cr:02x}{cg:02x}{cb:02x}"/>"##,
                r as f64 * cell,
                (cols - 1 - c) as f64 * cell,
            );
        }
    }
    s.push_str("</g>\n<g id=\"obstacles\" fill=\"none\" stroke=\"#000000\">\n");
    for o in &overlay.obstacles {
        let (x, y) = frame.xy(o.center_xy);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" stroke-width="1"/>"#, o.radius_m * frame.px_per_m);
        if overlay.clearance_m > 0.0 {
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" stroke-width="0.6" stroke-dasharray="3,2"/>"#,
                (o.radius_m + overlay.clearance_m) * frame.px_per_m
            );
        }
    }
    s.push_str("</g>\n");
    let (bx, by) = frame.xy(scene.bs_xy);
    let _ = writeln!(
        s,
        r##"<polygon id="bs" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#ffffff" stroke="#000000"/>"##,
        bx,
        by - 7.0,
        bx - 6.0,
        by + 5.0,
        bx + 6.0,
        by + 5.0
    );
    s.push_str("<g id=\"trajectories\">\n");
    for (u, path) in overlay.trajectories.iter().enumerate() {
        let color = TRACK_COLORS[u % TRACK_COLORS.len()];
        let points: Vec<String> = path
            .iter()
            .map(|q| {
                let (x, y) = frame.xy(*q);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, points.join(" "));
        for q in path {
            let (x, y) = frame.xy(*q);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{color}"/>"#);
        }
        if let (Some(first), Some(last)) = (path.first(), path.last()) {
            let (x, y) = frame.xy(*first);
            let _ = writeln!(s, r##"<circle class="start" cx="{x:.2}" cy="{y:.2}" r="5" fill="{color}" stroke="#000000"/>"##);
            let (x, y) = frame.xy(*last);
            let _ = writeln!(
                s,
                r##"<rect class="end" x="{:.2}" y="{:.2}" width="9" height="9" fill="{color}" stroke="#000000"/>"##,
                x - 4.5,
                y - 4.5
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffckm::gridworld::Footprint;

    fn scene() -> EnvironmentScene {
        let fp = Footprint { row0: 2, col0: 2, rows: 2, cols: 2, height_m: 60.0 };
        EnvironmentScene::from_footprints(80.0, 80.0, 10.0, vec![fp], [70.0, 70.0], 25.0, 100.0, 0).unwrap()
    }

    #[test]
    fn palette_endpoints_and_clamping() {
        let p = Palette { db_min: -100.0, db_max: -60.0 };
        assert_eq!(p.rgb(-100.0), STOPS[0]);
        assert_eq!(p.rgb(-60.0), STOPS[4]);
        assert_eq!(p.rgb(-500.0), STOPS[0]);
        assert_eq!(p.rgb(-80.0), STOPS[2]);
        let flat = Palette { db_min: -3.0, db_max: -3.0 };
        assert_eq!(flat.rgb(-3.0), STOPS[0]);
    }

    #[test]
    fn one_rect_per_cell_and_markers() {
        let s = scene();
        let db = Grid::from_vec(8, 8, (0..64).map(|i| -100.0 + i as f64).collect()).unwrap();
        let overlay = Overlay {
            trajectories: vec![vec![[5.0, 5.0], [40.0, 10.0], [75.0, 75.0]]],
            obstacles: s.obstacles.clone(),
            clearance_m: 5.0,
            title: Some("a < b".into()),
        };
        let svg = heatmap_svg(&s, &db, &Palette::spanning(&db), &overlay);
        assert_eq!(svg.matches("<rect x=").count(), 64);
        assert_eq!(svg.matches("class=\"start\"").count(), 1);
        assert_eq!(svg.matches("class=\"end\"").count(), 1);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn y_axis_points_up() {
        let f = Frame { px_per_m: 2.0, depth_m: 100.0 };
        assert_eq!(f.xy([0.0, 0.0]), (0.0, 200.0));
        assert_eq!(f.xy([10.0, 100.0]), (20.0, 0.0));
    }
}
