//! Importing line geometry from SVG drawings.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Segment, UniformGrid};
use crate::scene::{find_crossings, normalize_scene, Scene, CROSSING_TOL};
use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;
use svgtypes::{PointsParser, SimplePathSegment, SimplifyingPathParser, Transform};

/// Margin added around imported geometry before normalizing, relative to
/// its extent.
pub const SVG_MARGIN: f64 = 0.05;

/// Deepest Bézier subdivision level.
const MAX_DEPTH: u32 = 24;

/// Subtrees that never render directly.
const SKIPPED: [&str; 8] = ["defs", "clipPath", "mask", "symbol", "marker", "pattern", "metadata", "title"];

fn compose(parent: &Transform, child: &Transform) -> Transform {
    Transform::new(
        parent.a * child.a + parent.c * child.b,
        parent.b * child.a + parent.d * child.b,
        parent.a * child.c + parent.c * child.d,
        parent.b * child.c + parent.d * child.d,
        parent.a * child.e + parent.c * child.f + parent.e,
        parent.b * child.e + parent.d * child.f + parent.f,
    )
}

fn apply(t: &Transform, x: f64, y: f64) -> Point {
    Point::new(t.a * x + t.c * y + t.e, t.b * x + t.d * y + t.f)
}

fn chord_deviation(ctrl: &[Point]) -> f64 {
    let chord = Segment::geometry(ctrl[0], ctrl[ctrl.len() - 1]);
    ctrl[1..ctrl.len() - 1]
        .iter()
        .map(|&p| chord.distance_to(p))
        .fold(0.0, f64::max)
}

/// Appends the end points of a flattened Bézier curve with control polygon
/// `ctrl` (3 or 4 points). A piece is emitted as its chord once every control
/// point is within `tol` of it; the curve lies in the hull of its control
/// points, so the curve is then within `tol` of the chord too.
fn flatten(ctrl: &[Point], tol: f64, depth: u32, out: &mut Vec<Point>) {
    if depth >= MAX_DEPTH || chord_deviation(ctrl) < tol {
        out.push(ctrl[ctrl.len() - 1]);
        return;
    }
    // de Casteljau split at the middle
    let mut levels = vec![ctrl.to_vec()];
    while levels.last().unwrap().len() > 1 {
        let prev = levels.last().unwrap();
        levels.push(prev.windows(2).map(|w| w[0].midpoint(w[1])).collect());
    }
    let left: Vec<Point> = levels.iter().map(|l| l[0]).collect();
    let right: Vec<Point> = levels.iter().rev().map(|l| l[l.len() - 1]).collect();
    flatten(&left, tol, depth + 1, out);
    flatten(&right, tol, depth + 1, out);
}

fn attr_f64(node: &roxmltree::Node, name: &str) -> Result<f64> {
    let v = node.attribute(name).unwrap_or("0");
    svgtypes::Number::from_str(v)
        .map(|n| n.0)
        .map_err(|e| Error::Svg(format!("bad {name} attribute {v:?}: {e}")))
}

fn path_segments(d: &str, tf: &Transform, tol: f64, out: &mut Vec<(Point, Point)>) -> Result<()> {
    let mut cur = Point::default();
    let mut start = Point::default();
    let mut pts = Vec::new();
    for seg in SimplifyingPathParser::from(d) {
        let seg = seg.map_err(|e| Error::Svg(format!("bad path data: {e}")))?;
        match seg {
            SimplePathSegment::MoveTo { x, y } => {
                cur = apply(tf, x, y);
                start = cur;
            }
            SimplePathSegment::LineTo { x, y } => {
                let p = apply(tf, x, y);
                out.push((cur, p));
                cur = p;
            }
            SimplePathSegment::Quadratic { x1, y1, x, y } => {
                pts.clear();
                flatten(&[cur, apply(tf, x1, y1), apply(tf, x, y)], tol, 0, &mut pts);
                for &p in &pts {
                    out.push((cur, p));
                    cur = p;
                }
            }
            SimplePathSegment::CurveTo { x1, y1, x2, y2, x, y } => {
                pts.clear();
                let ctrl = [cur, apply(tf, x1, y1), apply(tf, x2, y2), apply(tf, x, y)];
                flatten(&ctrl, tol, 0, &mut pts);
                for &p in &pts {
                    out.push((cur, p));
                    cur = p;
                }
            }
            SimplePathSegment::ClosePath => {
                out.push((cur, start));
                cur = start;
            }
        }
    }
    Ok(())
}

fn points_segments(list: &str, tf: &Transform, closed: bool, out: &mut Vec<(Point, Point)>) {
    let pts: Vec<Point> = PointsParser::from(list).map(|(x, y)| apply(tf, x, y)).collect();
    out.extend(pts.windows(2).map(|w| (w[0], w[1])));
    if closed && pts.len() > 2 {
        out.push((pts[pts.len() - 1], pts[0]));
    }
}

fn walk(node: roxmltree::Node, parent: &Transform, tol: f64, out: &mut Vec<(Point, Point)>) -> Result<()> {
    let tf = match node.attribute("transform") {
        Some(s) => {
            let t = Transform::from_str(s).map_err(|e| Error::Svg(format!("bad transform {s:?}: {e}")))?;
            compose(parent, &t)
        }
        None => *parent,
    };
    match node.tag_name().name() {
        "path" => path_segments(node.attribute("d").unwrap_or(""), &tf, tol, out)?,
        "line" => out.push((
            apply(&tf, attr_f64(&node, "x1")?, attr_f64(&node, "y1")?),
            apply(&tf, attr_f64(&node, "x2")?, attr_f64(&node, "y2")?),
        )),
        "polyline" => points_segments(node.attribute("points").unwrap_or(""), &tf, false, out),
        "polygon" => points_segments(node.attribute("points").unwrap_or(""), &tf, true, out),
        "svg" | "g" | "a" | "switch" => {
            for c in node.children().filter(|c| c.is_element()) {
                walk(c, &tf, tol, out)?;
            }
        }
        name if SKIPPED.contains(&name) => {}
        name => log::warn!("skipping unsupported svg element <{name}>"),
    }
    Ok(())
}

/// Segments of every path, line, polyline and polygon in an SVG document, in
/// document coordinates with transforms applied and curves flattened to
/// within `flatten_tol`. Zero-length pieces are kept.
pub fn svg_segments(text: &str, flatten_tol: f64) -> Result<Vec<(Point, Point)>> {
    if !(flatten_tol > 0.0) {
        return Err(Error::Config(format!("flatten tolerance must be positive, got {flatten_tol}")));
    }
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Svg(e.to_string()))?;
    let mut out = Vec::new();
    walk(doc.root_element(), &Transform::default(), flatten_tol, &mut out)?;
    Ok(out)
}

/// Snaps endpoints closer than `merge_tol` onto a shared vertex (the first one
/// seen) and drops segments that become degenerate or duplicate.
pub fn merge_endpoints(segments: &[(Point, Point)], merge_tol: f64) -> Vec<(Point, Point)> {
    let mut grid = UniformGrid::new(merge_tol.max(1e-9));
    let mut verts: Vec<Point> = Vec::new();
    let mut snap = |p: Point| -> u32 {
        if let Some(&id) = grid.query(p, merge_tol).iter().min() {
            return id;
        }
        let id = verts.len() as u32;
        verts.push(p);
        grid.insert(id, p);
        id
    };
    let ids: Vec<(u32, u32)> = segments.iter().map(|&(a, b)| (snap(a), snap(b))).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (a, b) in ids {
        if a != b && seen.insert((a.min(b), a.max(b))) {
            out.push((verts[a as usize], verts[b as usize]));
        }
    }
    out
}

/// Splits segments at vertices of other segments that lie within `tol` of
/// their interior, so T-junctions become shared vertices.
pub fn split_t_junctions(segments: &[(Point, Point)], tol: f64) -> Vec<(Point, Point)> {
    let mut verts: Vec<Point> = segments.iter().flat_map(|&(a, b)| [a, b]).collect();
    verts.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    verts.dedup();
    let mean = segments.iter().map(|&(a, b)| a.dist(b)).sum::<f64>() / segments.len().max(1) as f64;
    let span = mean.max(tol).max(1e-12);
    let grid = UniformGrid::with_points(span, verts.iter().enumerate().map(|(i, &p)| (i as u32, p)));
    let mut out = Vec::with_capacity(segments.len());
    for &(a, b) in segments {
        let seg = Segment::geometry(a, b);
        let mut cuts: Vec<(f64, Point)> = grid
            .query(a.midpoint(b), 0.5 * a.dist(b) + tol)
            .into_iter()
            .map(|i| verts[i as usize])
            .filter(|&p| p != a && p != b && seg.distance_to(p) <= tol)
            .map(|p| (seg.project_param(p), p))
            .filter(|&(u, _)| u > 0.0 && u < 1.0)
            .collect();
        cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut prev = a;
        for (_, p) in cuts {
            out.push((prev, p));
            prev = p;
        }
        out.push((prev, b));
    }
    out
}

/// Parses an SVG document into a normalized scene. Curves are flattened to
/// within `flatten_tol` (in SVG units), nearby endpoints are merged,
/// T-junctions are split, the y axis is flipped to point up and a margin
/// rectangle is added. Crossing segments are an error naming each pair and
/// where it meets.
pub fn import_svg_str(text: &str, name: &str, flatten_tol: f64, merge_tol: f64) -> Result<Scene> {
    let raw = svg_segments(text, flatten_tol)?;
    let flipped: Vec<(Point, Point)> = raw
        .iter()
        .map(|&(a, b)| (Point::new(a.x, -a.y), Point::new(b.x, -b.y)))
        .collect();
    let geometry = merge_endpoints(&split_t_junctions(&merge_endpoints(&flipped, merge_tol), merge_tol), 0.0);
    if geometry.is_empty() {
        return Err(Error::Svg("no line geometry found".into()));
    }
    let segs: Vec<Segment> = geometry.iter().map(|&(a, b)| Segment::geometry(a, b)).collect();
    let crossings = find_crossings(&segs, CROSSING_TOL);
    if !crossings.is_empty() {
        let list: Vec<String> = crossings
            .iter()
            .take(20)
            .map(|&(i, j)| {
                let at = meeting_point(&segs[i], &segs[j]);
                format!("{i}x{j} at ({:.6}, {:.6})", at.x, -at.y)
            })
            .collect();
        return Err(Error::Svg(format!(
            "{} crossing segment pairs: {}",
            crossings.len(),
            list.join(", ")
        )));
    }
    let mut bb = Aabb::EMPTY;
    for s in &segs {
        bb.grow(s.a);
        bb.grow(s.b);
    }
    let m = SVG_MARGIN * bb.width().max(bb.height());
    let rect = Aabb::new(bb.min - Point::new(m, m), bb.max + Point::new(m, m));
    normalize_scene(&Scene::in_rect(name, format!("import_svg {name}"), geometry, rect))
}

pub fn import_svg(path: &Path, flatten_tol: f64, merge_tol: f64) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("svg");
    let mut scene = import_svg_str(&text, name, flatten_tol, merge_tol)?;
    scene.provenance = format!("import_svg {} flatten_tol={flatten_tol} merge_tol={merge_tol}", path.display());
    Ok(scene)
}

/// Intersection of the supporting lines, or the closest endpoint pair for
/// parallel segments.
fn meeting_point(s: &Segment, t: &Segment) -> Point {
    let (d, e) = (s.b - s.a, t.b - t.a);
    let den = d.cross(e);
    if den.abs() > 1e-300 {
        let u = ((t.a - s.a).cross(e) / den).clamp(0.0, 1.0);
        return s.at(u);
    }
    [s.a, s.b]
        .into_iter()
        .min_by(|&p, &q| t.distance_to(p).total_cmp(&t.distance_to(q)))
        .unwrap()
}
