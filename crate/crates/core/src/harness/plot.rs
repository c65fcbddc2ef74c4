//! Top-down SVG of a mission: scene boxes, trajectory and reach events.

use std::fmt::Write as _;
use std::path::Path;

use super::mission::MissionLog;
use crate::geometry::Aabb;
use crate::sim::Scene;

const PX_PER_M: f64 = 100.0;
const MARGIN: f64 = 10.0;

struct Frame {
    min_x: f64,
    max_y: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.min_x) * PX_PER_M
    }

    // SVG y grows downward; world y grows upward
    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.max_y - y) * PX_PER_M
    }

    fn rect(&self, out: &mut String, b: &Aabb, fill: &str, stroke: &str, class: &str) {
        let _ = writeln!(
            out,
            r#"<rect class="{class}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="{stroke}"/>"#,
            self.x(b.min[0]),
            self.y(b.max[1]),
            (b.max[0] - b.min[0]) * PX_PER_M,
            (b.max[1] - b.min[1]) * PX_PER_M,
        );
    }
}

pub fn render_svg(log: &MissionLog, scene: &Scene) -> String {
    let b = scene.bounds;
    let f = Frame {
        min_x: b.min[0],
        max_y: b.max[1],
    };
    let w = (b.max[0] - b.min[0]) * PX_PER_M + 2.0 * MARGIN;
    let h = (b.max[1] - b.min[1]) * PX_PER_M + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    f.rect(&mut s, &b, "#ffffff", "#000000", "bounds");
    f.rect(&mut s, &scene.task_box, "none", "#999999", "task-box");
    for o in &scene.obstacles {
        f.rect(&mut s, o, "#555555", "none", "obstacle");
    }
    for o in &scene.objects {
        let (fill, class) = if o.is_target {
            ("#e4572e", "target")
        } else {
            ("#9bc1bc", "object")
        };
        f.rect(&mut s, &o.bbox, fill, "#222222", class);
    }
    if log.poses.len() >= 2 {
        let pts: Vec<String> = log
            .poses
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.x(p.position[0]), f.y(p.position[1])))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline class="trajectory" points="{}" fill="none" stroke="#1d3557" stroke-width="2"/>"##,
            pts.join(" ")
        );
    }
    if let (Some(first), Some(last)) = (log.poses.first(), log.poses.last()) {
        let _ = writeln!(
            s,
            r##"<circle class="start" cx="{:.2}" cy="{:.2}" r="5" fill="#2a9d8f"/>"##,
            f.x(first.position[0]),
            f.y(first.position[1])
        );
        let _ = writeln!(
            s,
            r##"<rect class="end" x="{:.2}" y="{:.2}" width="10" height="10" fill="#1d3557"/>"##,
            f.x(last.position[0]) - 5.0,
            f.y(last.position[1]) - 5.0
        );
    }
    for e in &log.reach_events {
        let _ = writeln!(
            s,
            r##"<circle class="reach" cx="{:.2}" cy="{:.2}" r="7" fill="none" stroke="#e9c46a" stroke-width="2"><title>object {} within {} m at t={:.1}s</title></circle>"##,
            f.x(e.position[0]),
            f.y(e.position[1]),
            e.object_id,
            e.threshold,
            e.t
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_plot(log: &MissionLog, scene: &Scene, out_path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(out_path, render_svg(log, scene))
}
