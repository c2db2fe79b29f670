use std::fmt::Write;

use super::log::{LogEvent, LogRow};
use super::Scenario;
use crate::controller::EventKind;
use crate::world::Shape;

const CANVAS: f64 = 640.0;
const MARGIN: f64 = 24.0;

fn event_color(kind: EventKind) -> &'static str {
    match kind {
        EventKind::ObstacleDetected => "#d62728",
        EventKind::AvoidStart => "#ff7f0e",
        EventKind::AvoidEnd => "#2ca02c",
        EventKind::Arrived => "#1f77b4",
        EventKind::Failed => "#000000",
    }
}

/// Top-down SVG of the arena with the trajectory and event markers. Output
/// depends only on the inputs.
pub fn render_plot(rows: &[LogRow], events: &[LogEvent], scn: &Scenario) -> String {
    let b = scn.world.bounds;
    let (w, h) = (b.max.x - b.min.x, b.max.y - b.min.y);
    let scale = (CANVAS - 2.0 * MARGIN) / w.max(h);
    let px = |x: f64| MARGIN + (x - b.min.x) * scale;
    let py = |y: f64| MARGIN + (b.max.y - y) * scale;
    let (width, height) = (w * scale + 2.0 * MARGIN, h * scale + 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    if !scn.label.is_empty() {
        let _ = writeln!(s, "<title>{}</title>", escape(&scn.label));
    }
    let _ = writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#ffffff" stroke="#444444" stroke-width="2"/>"##,
        px(b.min.x),
        py(b.max.y),
        w * scale,
        h * scale
    );

    for o in &scn.world.obstacles {
        match o.shape {
            Shape::Disc { center, radius } => {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#e04040" fill-opacity="0.7"><title>{}</title></circle>"##,
                    px(center.x),
                    py(center.y),
                    radius * scale,
                    escape(&o.id)
                );
            }
            Shape::Rect(r) => {
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#e04040" fill-opacity="0.7"><title>{}</title></rect>"##,
                    px(r.min.x),
                    py(r.max.y),
                    (r.max.x - r.min.x) * scale,
                    (r.max.y - r.min.y) * scale,
                    escape(&o.id)
                );
            }
        }
    }

    for d in &scn.world.devices {
        let (cx, cy) = (px(d.position.x), py(d.position.y));
        let _ = writeln!(
            s,
            r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#9467bd"><title>{}</title></polygon>"##,
            cx,
            cy - 7.0,
            cx + 7.0,
            cy,
            cx,
            cy + 7.0,
            cx - 7.0,
            cy,
            escape(&d.id)
        );
    }

    for t in &scn.targets {
        let (cx, cy) = (px(t.x), py(t.y));
        let _ = writeln!(
            s,
            r##"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#1f77b4" stroke-width="2"/>"##,
            cx - 6.0,
            cy - 6.0,
            cx + 6.0,
            cy + 6.0,
            cx - 6.0,
            cy + 6.0,
            cx + 6.0,
            cy - 6.0
        );
    }

    match rows {
        [] => {}
        [only] => {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#333333"/>"##,
                px(only.x),
                py(only.y)
            );
        }
        _ => {
            let mut points = String::new();
            for r in rows {
                let _ = write!(points, "{:.2},{:.2} ", px(r.x), py(r.y));
            }
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#333333" stroke-width="1.5"/>"##,
                points.trim_end()
            );
            let first = &rows[0];
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#333333"/>"##,
                px(first.x),
                py(first.y)
            );
        }
    }

    for e in events {
        // Place each marker at the last row not later than the event.
        let idx = rows.partition_point(|r| r.t <= e.t + 1e-9);
        if let Some(r) = idx.checked_sub(1).and_then(|i| rows.get(i)) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"><title>{} t={:.2}</title></circle>"#,
                px(r.x),
                py(r.y),
                event_color(e.kind),
                e.kind.label(),
                e.t
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{parse_scenario, run};

    #[test]
    fn single_row_plot_has_point_marker() {
        let scn = parse_scenario("bounds 0 0 4 4\nmrp 1 1 0 0.15\ntarget 1 1\n").unwrap();
        let r = run(&scn);
        assert_eq!(r.log.rows.len(), 1);
        let svg = render_plot(&r.log.rows, &r.log.events, &scn);
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn plot_is_deterministic_and_shows_obstacle() {
        let scn =
            parse_scenario("label a<b\nbounds -1 -1 6 6\nrect 2 2 3 3\ntarget 5 5\n").unwrap();
        let r = run(&scn);
        let a = render_plot(&r.log.rows, &r.log.events, &scn);
        let b = render_plot(&r.log.rows, &r.log.events, &scn);
        assert_eq!(a, b);
        assert!(a.contains("<polyline"));
        assert!(a.contains("a&lt;b"));
        assert!(a.contains("obs1"));
    }
}
