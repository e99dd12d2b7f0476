//! Static SVG of the sorted residual view.
//!
//! Output depends only on the analysis, so repeated renders are
//! byte-identical. Groups are told apart by color and dash pattern.

use std::fmt::Write;

use crate::indicators::SegmentStats;
use crate::knee::{KneeKind, KneePair, KneePoint, Scope};
use crate::report::Analysis;
use crate::residuals::{Group, SortedCurve};

use super::{downsample_indices, MAX_CURVE_POINTS};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const GLOBAL_COLOR: &str = "#444444";
const GROUP_COLORS: [&str; 2] = ["#0072B2", "#D55E00"];
const GROUP_DASH: [&str; 2] = ["none", "6 3"];

struct Frame;

impl Frame {
    fn x(rank: f64) -> f64 {
        MARGIN_LEFT + rank * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(residual: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        MARGIN_TOP + (1.0 - residual) / 2.0 * h
    }

    fn right() -> f64 {
        WIDTH - MARGIN_RIGHT
    }

    fn bottom() -> f64 {
        HEIGHT - MARGIN_BOTTOM
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn scope_name(scope: Scope) -> &'static str {
    match scope {
        Scope::Global => "global",
        Scope::Group0 => "group0",
        Scope::Group1 => "group1",
    }
}

fn scope_color(scope: Scope) -> &'static str {
    match scope {
        Scope::Global => GLOBAL_COLOR,
        Scope::Group0 => GROUP_COLORS[0],
        Scope::Group1 => GROUP_COLORS[1],
    }
}

fn segments(out: &mut String, stats: &SegmentStats) {
    out.push_str("  <g class=\"segments\">\n");
    for (i, s) in stats.segments.iter().enumerate() {
        let fill = if i % 2 == 0 { "#f3f3f3" } else { "#e7e7e7" };
        let gap = s.gap.map_or("n/a".to_string(), |g| format!("{g:.3}"));
        let _ = writeln!(
            out,
            "    <rect class=\"segment\" x=\"{:.2}\" y=\"{MARGIN_TOP:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"><title>ranks ({:.3}, {:.3}]: gap {gap}</title></rect>",
            Frame::x(s.lo),
            Frame::x(s.hi) - Frame::x(s.lo),
            Frame::bottom() - MARGIN_TOP,
            s.lo,
            s.hi,
        );
    }
    out.push_str("  </g>\n");
}

fn axes(out: &mut String) {
    let (l, r, t, b) = (MARGIN_LEFT, Frame::right(), MARGIN_TOP, Frame::bottom());
    let _ = writeln!(out, "  <g class=\"axes\" stroke=\"#000000\" stroke-width=\"1\">");
    let _ = writeln!(out, "    <line x1=\"{l:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\"/>");
    let _ = writeln!(out, "    <line x1=\"{l:.2}\" y1=\"{t:.2}\" x2=\"{l:.2}\" y2=\"{b:.2}\"/>");
    out.push_str("  </g>\n");
    let _ = writeln!(
        out,
        "  <line class=\"zero-axis\" x1=\"{l:.2}\" y1=\"{y:.2}\" x2=\"{r:.2}\" y2=\"{y:.2}\" stroke=\"#000000\" stroke-width=\"1.5\"/>",
        y = Frame::y(0.0)
    );
    out.push_str("  <g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n");
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            out,
            "    <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{v:.2}</text>",
            Frame::x(v),
            b + 16.0
        );
        let res = -1.0 + 2.0 * v;
        let _ = writeln!(
            out,
            "    <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{res:.1}</text>",
            l - 6.0,
            Frame::y(res) + 4.0
        );
    }
    let _ = writeln!(
        out,
        "    <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">normalized rank</text>",
        Frame::x(0.5),
        b + 36.0
    );
    let _ = writeln!(
        out,
        "    <text transform=\"translate(16 {:.2}) rotate(-90)\" text-anchor=\"middle\">signed residual</text>",
        Frame::y(0.0)
    );
    out.push_str("  </g>\n");
}

fn polyline(out: &mut String, points: &[(f64, f64)], class: &str, color: &str, width: f64, dash: &str) {
    let mut coords = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            coords.push(' ');
        }
        let _ = write!(coords, "{:.2},{:.2}", Frame::x(*x), Frame::y(*y));
    }
    let dash_attr = if dash == "none" {
        String::new()
    } else {
        format!(" stroke-dasharray=\"{dash}\"")
    };
    let _ = writeln!(
        out,
        "  <polyline class=\"{class}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash_attr} points=\"{coords}\"/>"
    );
}

fn group_points(global: &SortedCurve, group: Group) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = global
        .rank_positions()
        .iter()
        .zip(global.residuals())
        .zip(global.group_tags())
        .filter(|(_, &g)| g == group)
        .map(|((&x, &y), _)| (x, y))
        .collect();
    downsample_indices(pts.len(), MAX_CURVE_POINTS)
        .into_iter()
        .map(|i| pts[i])
        .collect()
}

fn curves(out: &mut String, global: &SortedCurve) {
    let all: Vec<(f64, f64)> = downsample_indices(global.len(), MAX_CURVE_POINTS)
        .into_iter()
        .map(|i| (global.rank_positions()[i], global.residuals()[i]))
        .collect();
    polyline(out, &all, "curve curve-global", "#999999", 1.0, "none");
    for g in Group::BOTH {
        let pts = group_points(global, g);
        let class = format!("curve curve-group{}", g.index());
        polyline(out, &pts, &class, GROUP_COLORS[g.index()], 1.8, GROUP_DASH[g.index()]);
    }
}

fn rulers(out: &mut String, a: &Analysis) {
    let m = &a.medians;
    let items = [
        ("global", m.m_global, GLOBAL_COLOR, "none"),
        ("group0", m.m_group0, GROUP_COLORS[0], "2 2"),
        ("group1", m.m_group1, GROUP_COLORS[1], "6 3"),
    ];
    out.push_str("  <g class=\"median-rulers\">\n");
    for (name, value, color, dash) in items {
        let dash_attr = if dash == "none" {
            String::new()
        } else {
            format!(" stroke-dasharray=\"{dash}\"")
        };
        let _ = writeln!(
            out,
            "    <line class=\"median-ruler ruler-{name}\" x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"1\"{dash_attr}><title>median {name} {value:.3}</title></line>",
            MARGIN_LEFT,
            Frame::right(),
            y = Frame::y(value),
        );
    }
    out.push_str("  </g>\n");
}

fn diamond(cx: f64, cy: f64) -> String {
    let r = 6.0;
    format!(
        "{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}",
        cx,
        cy - r,
        cx + r,
        cy,
        cx,
        cy + r,
        cx - r,
        cy
    )
}

fn star(cx: f64, cy: f64) -> String {
    let (outer, inner) = (7.5, 3.2);
    let mut s = String::new();
    for k in 0..10 {
        let r = if k % 2 == 0 { outer } else { inner };
        let angle = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.2},{:.2}", cx + r * angle.cos(), cy + r * angle.sin());
    }
    s
}

fn marker(out: &mut String, scope: Scope, knee: &KneePoint) {
    let Some(loc) = knee.location else { return };
    let (cx, cy) = (Frame::x(loc.percentile), Frame::y(loc.residual));
    let (kind, points) = match knee.kind {
        KneeKind::ConvexLeft => ("convex", diamond(cx, cy)),
        KneeKind::ConcaveRight => ("concave", star(cx, cy)),
    };
    let name = scope_name(scope);
    let _ = writeln!(
        out,
        "    <polygon class=\"knee-marker knee-{kind} scope-{name}\" points=\"{points}\" fill=\"{}\" stroke=\"#000000\" stroke-width=\"0.8\"><title>{name} {kind} knee: rank {:.3}, residual {:.3}</title></polygon>",
        scope_color(scope),
        loc.percentile,
        loc.residual,
    );
}

fn markers(out: &mut String, pairs: [&KneePair; 3]) {
    out.push_str("  <g class=\"knee-markers\">\n");
    for pair in pairs {
        marker(out, pair.scope, &pair.left);
        marker(out, pair.scope, &pair.right);
    }
    out.push_str("  </g>\n");
}

fn legend(out: &mut String, a: &Analysis) {
    let x = Frame::right() + 14.0;
    let mut y = MARGIN_TOP + 10.0;
    out.push_str("  <g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n");
    for g in Group::BOTH {
        let i = g.index();
        let dash = if GROUP_DASH[i] == "none" {
            String::new()
        } else {
            format!(" stroke-dasharray=\"{}\"", GROUP_DASH[i])
        };
        let _ = writeln!(
            out,
            "    <line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"1.8\"{dash}/>",
            x + 22.0,
            GROUP_COLORS[i]
        );
        let _ = writeln!(out, "    <text x=\"{:.2}\" y=\"{:.2}\">group {i}</text>", x + 28.0, y + 4.0);
        y += 18.0;
    }
    let r = &a.report;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    let lines = [
        format!("n = {}", r.n_total),
        format!("Acc {:.3}", r.acc),
        format!("DP {}", fmt(r.dp.value)),
        format!("MD {}", fmt(r.md.value)),
        format!("F_mean {}", fmt(r.f_mean.value)),
        format!("F_shift {}", fmt(r.f_shift.value)),
        format!("F_acc {}", fmt(r.f_acc.value)),
    ];
    y += 8.0;
    for l in lines {
        let _ = writeln!(out, "    <text x=\"{x:.2}\" y=\"{y:.2}\">{}</text>", escape(&l));
        y += 16.0;
    }
    out.push_str("  </g>\n");
}

/// Render one selection's sorted residual view.
pub fn render_svg(a: &Analysis) -> String {
    let sel = &a.report.selection;
    let title = format!("{} / {} / env {}", sel.run_id, sel.attribute, sel.environment);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        out,
        "  <text x=\"{MARGIN_LEFT:.2}\" y=\"24.00\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        escape(&title)
    );
    segments(&mut out, &a.segments);
    axes(&mut out);
    rulers(&mut out, a);
    curves(&mut out, &a.global);
    markers(&mut out, a.knees.pairs());
    legend(&mut out, a);
    out.push_str("</svg>\n");
    out
}
