//! Text serialization: Triangle-compatible `.node`/`.ele`/`.poly` files and a
//! native format that also stores neighbour links and edge flags.

use super::{Dof, EdgeFlag, EdgeKey, TriId, Triangle, Triangulation, VertId, Vertex};
use crate::geometry::{signed_area2, Point};
use crate::scene::Scene;
use crate::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

pub const NATIVE_HEADER: &str = "# ccsp-triangulation v1";

/// Contents of a Triangle-style file set. Empty strings stand for missing files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleFiles {
    pub node: String,
    pub ele: String,
    pub poly: Option<String>,
}

impl TriangleFiles {
    /// Reads `<base>.node`, `<base>.ele` and, if present, `<base>.poly`.
    pub fn load(base: &Path) -> Result<Self> {
        let read = |ext: &str| std::fs::read_to_string(base.with_extension(ext));
        let node = read("node").map_err(|_| Error::MissingSection(".node".into()))?;
        let ele = read("ele").map_err(|_| Error::MissingSection(".ele".into()))?;
        Ok(Self {
            node,
            ele,
            poly: read("poly").ok(),
        })
    }

    pub fn save(&self, base: &Path) -> Result<()> {
        std::fs::write(base.with_extension("node"), &self.node)?;
        std::fs::write(base.with_extension("ele"), &self.ele)?;
        if let Some(p) = &self.poly {
            std::fs::write(base.with_extension("poly"), p)?;
        }
        Ok(())
    }
}

const TAG_FREE: i64 = 0;
const TAG_FIXED: i64 = 1;
const TAG_ON_SEGMENT: i64 = 2;

/// Writes the triangulation as Triangle files. Each node carries one
/// attribute (0 free, 1 fixed, 2 on-segment) and a marker holding the host
/// segment id plus one (0 when none). Segments in `.poly` are the
/// constrained edges, marked with their segment id plus one.
pub fn write_triangle_files(t: &Triangulation) -> TriangleFiles {
    let mut t = t.clone();
    t.compact();
    let mut node = String::new();
    writeln!(node, "{} 2 1 1", t.vertex_count()).unwrap();
    for v in t.vertex_ids() {
        let p = t.pos(v);
        let (tag, marker) = match t.dof(v) {
            Dof::Free => (TAG_FREE, 0),
            Dof::Fixed => (TAG_FIXED, t.vertex_segments(v).first().map_or(0, |s| *s as i64 + 1)),
            Dof::OnSegment(s) => (TAG_ON_SEGMENT, s as i64 + 1),
        };
        writeln!(node, "{} {} {} {} {}", v, p.x, p.y, tag, marker).unwrap();
    }
    let mut ele = String::new();
    writeln!(ele, "{} 3 0", t.triangle_count()).unwrap();
    for tr in t.triangle_ids() {
        let [a, b, c] = t.tri(tr).v;
        writeln!(ele, "{tr} {a} {b} {c}").unwrap();
    }
    let segs: Vec<(VertId, VertId, u32)> = t
        .edges()
        .filter_map(|e| {
            t.edge_flag(e).segment().map(|s| {
                let (a, b) = t.edge_endpoints(e);
                (a, b, s)
            })
        })
        .collect();
    let mut poly = String::new();
    writeln!(poly, "0 2 0 1").unwrap();
    writeln!(poly, "{} 1", segs.len()).unwrap();
    for (i, (a, b, s)) in segs.iter().enumerate() {
        writeln!(poly, "{i} {a} {b} {}", s + 1).unwrap();
    }
    writeln!(poly, "0").unwrap();
    TriangleFiles {
        node,
        ele,
        poly: Some(poly),
    }
}

/// Non-comment, non-empty lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn parse<T: std::str::FromStr>(tok: Option<&&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?
    .parse()
    .map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what}"),
    })
}

/// Reads Triangle files against a scene. Node attributes, if present, give
/// each vertex's degrees of freedom; otherwise they are inferred from the
/// scene. Constrained edges come from `.poly` markers when available.
pub fn read_triangle_files(scene: Arc<Scene>, files: &TriangleFiles) -> Result<Triangulation> {
    if files.node.trim().is_empty() {
        return Err(Error::MissingSection(".node".into()));
    }
    if files.ele.trim().is_empty() {
        return Err(Error::MissingSection(".ele".into()));
    }
    let mut lines = data_lines(&files.node);
    let (hl, head) = lines.next().ok_or_else(|| Error::MissingSection(".node header".into()))?;
    let n: usize = parse(head.first(), hl, "vertex count")?;
    let nattr: usize = head.get(2).map(|t| parse(Some(t), hl, "attribute count")).transpose()?.unwrap_or(0);
    let nmark: usize = head.get(3).map(|t| parse(Some(t), hl, "marker count")).transpose()?.unwrap_or(0);
    let mut raw = Vec::with_capacity(n);
    let mut base = None;
    for _ in 0..n {
        let (l, tok) = lines.next().ok_or(Error::Parse {
            line: hl,
            msg: format!("expected {n} vertices"),
        })?;
        let id: i64 = parse(tok.first(), l, "vertex id")?;
        base.get_or_insert(id);
        let x: f64 = parse(tok.get(1), l, "x")?;
        let y: f64 = parse(tok.get(2), l, "y")?;
        let tag: Option<i64> = if nattr >= 1 { Some(parse(tok.get(3), l, "attribute")?) } else { None };
        let marker: i64 = if nmark >= 1 { parse(tok.get(3 + nattr), l, "marker")? } else { 0 };
        raw.push((Point::new(x, y), tag, marker, l));
    }
    let base = base.unwrap_or(0);
    let nseg = scene.segments.len() as i64;
    let mut verts = Vec::with_capacity(n);
    for &(p, tag, marker, l) in &raw {
        let seg = (marker >= 1 && marker <= nseg).then(|| (marker - 1) as u32);
        let dof = match tag {
            Some(TAG_FIXED) => Dof::Fixed,
            Some(TAG_ON_SEGMENT) => Dof::OnSegment(seg.ok_or(Error::Parse {
                line: l,
                msg: "on-segment vertex without a valid segment marker".into(),
            })?),
            Some(TAG_FREE) => Dof::Free,
            Some(other) => {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("unknown vertex tag {other}"),
                })
            }
            None => infer_dof(&scene, p),
        };
        verts.push(Vertex { pos: p, dof });
    }

    let mut lines = data_lines(&files.ele);
    let (hl, head) = lines.next().ok_or_else(|| Error::MissingSection(".ele header".into()))?;
    let m: usize = parse(head.first(), hl, "triangle count")?;
    let mut tris = Vec::with_capacity(m);
    let idx = |v: i64, l: usize| -> Result<VertId> {
        let k = v - base;
        if k < 0 || k as usize >= n {
            return Err(Error::Parse {
                line: l,
                msg: format!("vertex index {v} out of range"),
            });
        }
        Ok(k as VertId)
    };
    for _ in 0..m {
        let (l, tok) = lines.next().ok_or(Error::Parse {
            line: hl,
            msg: format!("expected {m} triangles"),
        })?;
        let a = idx(parse(tok.get(1), l, "vertex")?, l)?;
        let b = idx(parse(tok.get(2), l, "vertex")?, l)?;
        let c = idx(parse(tok.get(3), l, "vertex")?, l)?;
        let [pa, pb, pc] = [a, b, c].map(|v| verts[v as usize].pos);
        tris.push(if signed_area2(pa, pb, pc) < 0.0 { [a, c, b] } else { [a, b, c] });
    }
    let mut t = Triangulation::from_parts(scene.clone(), verts, &tris)?;

    if let Some(poly) = files.poly.as_deref().filter(|p| !p.trim().is_empty()) {
        let mut lines = data_lines(poly);
        let (hl, head) = lines.next().ok_or_else(|| Error::MissingSection(".poly header".into()))?;
        let pn: usize = parse(head.first(), hl, "vertex count")?;
        for _ in 0..pn {
            lines.next();
        }
        let (sl, shead) = lines.next().ok_or_else(|| Error::MissingSection(".poly segments".into()))?;
        let ns: usize = parse(shead.first(), sl, "segment count")?;
        let mut wanted: HashMap<EdgeKey, EdgeFlag> = HashMap::new();
        for _ in 0..ns {
            let (l, tok) = lines.next().ok_or(Error::Parse {
                line: sl,
                msg: format!("expected {ns} segments"),
            })?;
            let a = idx(parse(tok.get(1), l, "endpoint")?, l)?;
            let b = idx(parse(tok.get(2), l, "endpoint")?, l)?;
            let marker: i64 = parse(tok.get(3), l, "segment marker")?;
            if marker < 1 || marker > nseg {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("segment marker {marker} does not name a scene segment"),
                });
            }
            wanted.insert(EdgeKey::new(a, b), EdgeFlag::Constrained((marker - 1) as u32));
        }
        let ids: Vec<TriId> = t.triangle_ids().collect();
        for tr in ids {
            for i in 0..3 {
                let key = t.edge_key(super::EdgeRef::new(tr, i));
                t.tri_mut(tr).flags[i] = wanted.get(&key).copied().unwrap_or(EdgeFlag::Internal);
            }
        }
        register_fixed_from_flags(&mut t);
    }
    Ok(t)
}

fn infer_dof(scene: &Scene, p: Point) -> Dof {
    if scene.segments.iter().any(|s| s.a == p || s.b == p) {
        return Dof::Fixed;
    }
    match scene
        .segments
        .iter()
        .position(|s| s.distance_to(p) <= super::ON_SEGMENT_TOL)
    {
        Some(s) => Dof::OnSegment(s as u32),
        None => Dof::Free,
    }
}

fn register_fixed_from_flags(t: &mut Triangulation) {
    let mut segs: HashMap<VertId, Vec<u32>> = HashMap::new();
    for v in t.vertex_ids() {
        if t.dof(v) == Dof::Fixed {
            segs.insert(v, t.vertex_segments(v).to_vec());
        }
    }
    let edges: Vec<_> = t.edges().collect();
    for e in edges {
        if let EdgeFlag::Constrained(s) = t.edge_flag(e) {
            let (a, b) = t.edge_endpoints(e);
            for v in [a, b] {
                if let Some(l) = segs.get_mut(&v) {
                    if !l.contains(&s) {
                        l.push(s);
                    }
                }
            }
        }
    }
    for (v, s) in segs {
        t.register_fixed(v, s);
    }
}

/// Native text format: vertex table with dof tags, triangle table with
/// neighbour indices and edge flags.
pub fn write_native(t: &Triangulation) -> String {
    let mut t = t.clone();
    t.compact();
    let mut out = String::new();
    writeln!(out, "{NATIVE_HEADER}").unwrap();
    writeln!(out, "scene {}", t.scene().name).unwrap();
    writeln!(out, "vertices {}", t.vertex_count()).unwrap();
    for v in t.vertex_ids() {
        let p = t.pos(v);
        let tag = match t.dof(v) {
            Dof::Fixed => "fixed".to_string(),
            Dof::Free => "free".to_string(),
            Dof::OnSegment(s) => format!("seg:{s}"),
        };
        writeln!(out, "{} {} {}", p.x, p.y, tag).unwrap();
    }
    writeln!(out, "triangles {}", t.triangle_count()).unwrap();
    for tr in t.triangle_ids() {
        let x = t.tri(tr);
        let n = x.nbr.map(|n| n.map_or(-1, |n| n as i64));
        let f = x.flags.map(|f| match f {
            EdgeFlag::Internal => "-".to_string(),
            EdgeFlag::Constrained(s) => s.to_string(),
        });
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            x.v[0], x.v[1], x.v[2], n[0], n[1], n[2], f[0], f[1], f[2]
        )
        .unwrap();
    }
    out
}

pub fn read_native(scene: Arc<Scene>, text: &str) -> Result<Triangulation> {
    let body: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let &(_, head) = body.first().ok_or_else(|| Error::MissingSection("header".into()))?;
    if head != NATIVE_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {NATIVE_HEADER:?}"),
        });
    }
    let vpos = body
        .iter()
        .position(|(_, l)| l.starts_with("vertices"))
        .ok_or_else(|| Error::MissingSection("vertices".into()))?;
    let (vl, vline) = body[vpos];
    let nv: usize = parse(vline.split_whitespace().collect::<Vec<_>>().get(1), vl, "vertex count")?;
    let vstart = vpos + 1;
    let mut t = Triangulation::empty(scene.clone());
    let nseg = scene.segments.len() as u32;
    for &(l, line) in body.iter().skip(vstart).take(nv) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let x: f64 = parse(tok.first(), l, "x")?;
        let y: f64 = parse(tok.get(1), l, "y")?;
        let tag = tok.get(2).copied().unwrap_or("");
        let dof = match tag {
            "fixed" => Dof::Fixed,
            "free" => Dof::Free,
            s if s.starts_with("seg:") => {
                let id: u32 = s[4..].parse().map_err(|_| Error::Parse {
                    line: l,
                    msg: "bad segment id".into(),
                })?;
                if id >= nseg {
                    return Err(Error::Parse {
                        line: l,
                        msg: format!("segment {id} not in scene"),
                    });
                }
                Dof::OnSegment(id)
            }
            _ => {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("bad vertex tag {tag:?}"),
                })
            }
        };
        t.push_vertex(Vertex { pos: Point::new(x, y), dof });
    }
    if body.len() < vstart + nv {
        return Err(Error::MissingSection("vertices".into()));
    }
    let (tl, tline) = body[vstart + nv];
    let ttok: Vec<&str> = tline.split_whitespace().collect();
    if ttok.first() != Some(&"triangles") {
        return Err(Error::MissingSection("triangles".into()));
    }
    let nt: usize = parse(ttok.get(1), tl, "triangle count")?;
    let rows = &body[vstart + nv + 1..];
    if rows.len() < nt {
        return Err(Error::Parse {
            line: tl,
            msg: format!("expected {nt} triangles"),
        });
    }
    for &(l, line) in rows.iter().take(nt) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let mut v = [0u32; 3];
        let mut nbr = [None; 3];
        let mut flags = [EdgeFlag::Internal; 3];
        for i in 0..3 {
            let x: u32 = parse(tok.get(i), l, "vertex")?;
            if x as usize >= nv {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("vertex {x} out of range"),
                });
            }
            v[i] = x;
            let n: i64 = parse(tok.get(3 + i), l, "neighbour")?;
            nbr[i] = (n >= 0).then_some(n as TriId);
            let f = tok.get(6 + i).copied().ok_or(Error::Parse {
                line: l,
                msg: "missing edge flag".into(),
            })?;
            flags[i] = if f == "-" {
                EdgeFlag::Internal
            } else {
                EdgeFlag::Constrained(parse(Some(&f), l, "edge flag")?)
            };
        }
        t.push_triangle(Triangle { v, nbr, flags });
    }
    t.recompute_fixed_segments();
    register_fixed_from_flags(&mut t);
    Ok(t)
}

impl Triangulation {
    pub fn save_native(&self, path: &Path) -> Result<()> {
        std::fs::write(path, write_native(self))?;
        Ok(())
    }

    pub fn load_native(scene: Arc<Scene>, path: &Path) -> Result<Triangulation> {
        read_native(scene, &std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trimesh::{build_cdt, refine_cdt};

    fn scene20() -> Scene {
        crate::trimesh::cdt_test_scene(20, 3)
    }

    fn connectivity(t: &Triangulation) -> Vec<[VertId; 3]> {
        let mut v: Vec<[VertId; 3]> = t
            .triangle_ids()
            .map(|tr| {
                let x = t.tri(tr).v;
                let k = (0..3).min_by_key(|&i| x[i]).unwrap();
                [x[k], x[(k + 1) % 3], x[(k + 2) % 3]]
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn triangle_round_trip() {
        let s = scene20();
        let t = refine_cdt(&build_cdt(&s).unwrap(), 20.0, f64::INFINITY).unwrap();
        let files = write_triangle_files(&t);
        let r = read_triangle_files(t.scene_arc(), &files).unwrap();
        assert_eq!(connectivity(&t), connectivity(&r));
        assert!(r.validate().is_empty(), "{}", r.validate());
        for v in t.vertex_ids() {
            assert_eq!(t.vertex(v), r.vertex(v));
        }
        assert_eq!(write_triangle_files(&r), files);
    }

    #[test]
    fn native_round_trip() {
        let s = scene20();
        let t = refine_cdt(&build_cdt(&s).unwrap(), 20.0, f64::INFINITY).unwrap();
        let text = write_native(&t);
        let r = read_native(t.scene_arc(), &text).unwrap();
        assert!(r.validate().is_empty(), "{}", r.validate());
        assert_eq!(write_native(&r), text);
        assert_eq!(r.total_edge_length(), t.total_edge_length());
    }

    #[test]
    fn missing_ele_is_named() {
        let t = build_cdt(&scene20()).unwrap();
        let mut files = write_triangle_files(&t);
        files.ele.clear();
        match read_triangle_files(t.scene_arc(), &files) {
            Err(Error::MissingSection(s)) => assert!(s.contains(".ele")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_error_has_line() {
        let t = build_cdt(&scene20()).unwrap();
        let mut files = write_triangle_files(&t);
        files.node = files.node.replacen(" 1 ", " x ", 1);
        assert!(matches!(
            read_triangle_files(t.scene_arc(), &files),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn hand_built_fixture_with_markers() {
        // unit square with one interior segment, 1-based ids, no attributes
        let scene = Arc::new(Scene::in_unit_square(
            "fixture",
            "t",
            vec![(Point::new(0.25, 0.5), Point::new(0.75, 0.5))],
        ));
        let node = "\
# hand written
6 2 0 1
1 0 0 1
2 1 0 1
3 1 1 1
4 0 1 1
5 0.25 0.5 0
6 0.75 0.5 0
";
        let ele = "\
6 3 0
1 1 2 6
2 2 3 6
3 3 4 6
4 4 5 6
5 4 1 5
6 1 6 5
";
        let poly = "\
0 2 0 1
5 1
1 1 2 2
2 2 3 3
3 3 4 4
4 4 1 5
5 5 6 1
0
";
        let files = TriangleFiles {
            node: node.into(),
            ele: ele.into(),
            poly: Some(poly.into()),
        };
        let t = read_triangle_files(scene, &files).unwrap();
        assert!(t.validate().is_empty(), "{}", t.validate());
        assert_eq!(t.constrained_edges(0).len(), 1);
        assert_eq!(t.edges().filter(|&e| t.edge_flag(e).is_constrained()).count(), 5);
        assert!(t.vertex_ids().all(|v| t.dof(v) == Dof::Fixed));
    }
}
