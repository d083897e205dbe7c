//! SVG drawings of scenes, structures and rays. Geometry is black, the
//! structure blue and rays red.

use crate::accel::{brute_force_closest, Bvh, BvhNode, KdNode, RopedKdTree};
use crate::geometry::{Aabb, Point, Ray, SegmentKind};
use crate::scene::Scene;
use crate::trimesh::Triangulation;
use std::fmt::Write;

/// Drawing size of the longest scene side, in SVG user units.
const SIZE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, Default)]
pub enum Overlay<'a> {
    #[default]
    None,
    Triangulation(&'a Triangulation),
    BvhLeaves(&'a Bvh),
    KdLeaves(&'a RopedKdTree),
}

struct View {
    min: Point,
    max_y: f64,
    scale: f64,
}

impl View {
    fn map(&self, p: Point) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, (self.max_y - p.y) * self.scale)
    }
}

fn line(s: &mut String, v: &View, a: Point, b: Point) {
    let (x1, y1) = v.map(a);
    let (x2, y2) = v.map(b);
    let _ = writeln!(s, r#"<line x1="{x1:.4}" y1="{y1:.4}" x2="{x2:.4}" y2="{y2:.4}"/>"#);
}

fn rect(s: &mut String, v: &View, b: &Aabb) {
    let (x, y) = v.map(Point::new(b.min.x, b.max.y));
    let (w, h) = (b.width() * v.scale, b.height() * v.scale);
    let _ = writeln!(s, r#"<rect x="{x:.4}" y="{y:.4}" width="{w:.4}" height="{h:.4}"/>"#);
}

/// Draws `scene` with an optional structure overlay and `rays`, each ray
/// ending at its closest hit or at the scene bounds.
pub fn render_svg(scene: &Scene, overlay: Overlay, rays: &[Ray]) -> String {
    let b = scene.bounds();
    let ext = b.width().max(b.height()).max(f64::MIN_POSITIVE);
    let v = View {
        min: b.min,
        max_y: b.max.y,
        scale: SIZE / ext,
    };
    let (w, h) = (b.width() * v.scale, b.height() * v.scale);
    let pad = 0.01 * SIZE;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="{:.4} {:.4} {:.4} {:.4}" width="{:.0}" height="{:.0}">"#,
        -pad,
        -pad,
        w + 2.0 * pad,
        h + 2.0 * pad,
        w + 2.0 * pad,
        h + 2.0 * pad
    );
    let _ = writeln!(s, "<title>{}</title>", xml_escape(&scene.name));

    let _ = writeln!(s, r#"<g id="structure" fill="none" stroke="blue" stroke-width="0.6">"#);
    match overlay {
        Overlay::None => {}
        Overlay::Triangulation(t) => {
            for tri in t.triangle_ids() {
                let pts: Vec<String> = t
                    .tri_points(tri)
                    .iter()
                    .map(|&p| {
                        let (x, y) = v.map(p);
                        format!("{x:.4},{y:.4}")
                    })
                    .collect();
                let _ = writeln!(s, r#"<polygon points="{}"/>"#, pts.join(" "));
            }
        }
        Overlay::BvhLeaves(bvh) => {
            for n in &bvh.nodes {
                if let BvhNode::Leaf { bbox, .. } = n {
                    rect(&mut s, &v, bbox);
                }
            }
        }
        Overlay::KdLeaves(kd) => {
            for n in &kd.nodes {
                if let KdNode::Leaf { cell, .. } = n {
                    rect(&mut s, &v, cell);
                }
            }
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="geometry" stroke="black" stroke-width="1.5" stroke-linecap="round">"#);
    for seg in &scene.segments {
        if seg.kind == SegmentKind::Boundary {
            line(&mut s, &v, seg.a, seg.b);
        }
    }
    for (_, seg) in scene.geometry() {
        line(&mut s, &v, seg.a, seg.b);
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="rays" stroke="red" stroke-width="1">"#);
    for r in rays {
        let end = match brute_force_closest(scene, r) {
            Some(hit) => hit.point,
            None => b.ray_interval(r, f64::INFINITY).map_or(r.origin, |(_, t1)| r.at(t1)),
        };
        line(&mut s, &v, r.origin, end);
        let (cx, cy) = v.map(r.origin);
        let _ = writeln!(s, r#"<circle cx="{cx:.4}" cy="{cy:.4}" r="2" fill="red"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
