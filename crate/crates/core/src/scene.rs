//! Line-segment scenes: geometry plus an enclosing boundary, the versioned
//! text format, normalization and the crossing-free check.

use crate::error::{Error, Result};
use crate::geometry::{segments_cross, Aabb, Point, Segment, SegmentKind};
use std::collections::HashMap;
use std::fmt::Write as _;

pub const SCENE_FORMAT_HEADER: &str = "# ccsp-scene v1";

/// Tolerance used when deciding whether two segments touch or cross.
pub const CROSSING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    /// Generator name and parameters, or the source file.
    pub provenance: String,
    /// Geometry and boundary segments; segment ids are indices into this list.
    pub segments: Vec<Segment>,
}

impl Scene {
    pub fn new(name: impl Into<String>, provenance: impl Into<String>, segments: Vec<Segment>) -> Self {
        Self {
            name: name.into(),
            provenance: provenance.into(),
            segments,
        }
    }

    /// Geometry inside the unit square bounded by four boundary segments.
    pub fn in_unit_square(name: impl Into<String>, provenance: impl Into<String>, geometry: Vec<(Point, Point)>) -> Self {
        let rect = Aabb::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        Self::in_rect(name, provenance, geometry, rect)
    }

    pub fn in_rect(
        name: impl Into<String>,
        provenance: impl Into<String>,
        geometry: Vec<(Point, Point)>,
        rect: Aabb,
    ) -> Self {
        let mut segments: Vec<Segment> = geometry.into_iter().map(|(a, b)| Segment::geometry(a, b)).collect();
        segments.extend(rect_boundary(&rect));
        Self::new(name, provenance, segments)
    }

    pub fn geometry(&self) -> impl Iterator<Item = (usize, &Segment)> {
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SegmentKind::SceneGeometry)
    }

    pub fn geometry_count(&self) -> usize {
        self.geometry().count()
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for s in &self.segments {
            b.grow(s.a);
            b.grow(s.b);
        }
        b
    }

    pub fn total_geometry_length(&self) -> f64 {
        self.geometry().map(|(_, s)| s.length()).sum()
    }

    /// Unique segment endpoints (exact coordinate matches merged).
    pub fn vertices(&self) -> Vec<Point> {
        let mut seen: HashMap<(u64, u64), ()> = HashMap::new();
        let mut out = Vec::new();
        for s in &self.segments {
            for p in [s.a, s.b] {
                if seen.insert((p.x.to_bits(), p.y.to_bits()), ()).is_none() {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Pairs of segment ids that cross, overlap or duplicate each other.
    /// Sharing an endpoint exactly is allowed.
    pub fn crossings(&self) -> Vec<(usize, usize)> {
        find_crossings(&self.segments, CROSSING_TOL)
    }

    pub fn check(&self) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.a.is_finite() && s.b.is_finite()) {
                return Err(Error::InvalidScene(format!("segment {i} has non-finite coordinates")));
            }
            if s.a == s.b {
                return Err(Error::InvalidScene(format!("segment {i} has zero length")));
            }
        }
        if let Some(&(i, j)) = self.crossings().first() {
            let (a, b) = (&self.segments[i], &self.segments[j]);
            let near = |p: Point, q: Point| p.dist(q) <= CROSSING_TOL;
            if (near(a.a, b.a) && near(a.b, b.b)) || (near(a.a, b.b) && near(a.b, b.a)) {
                return Err(Error::DuplicateSegments(i, j));
            }
            return Err(Error::CrossingSegments(i, j));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{SCENE_FORMAT_HEADER}").unwrap();
        writeln!(s, "name {}", self.name).unwrap();
        writeln!(s, "provenance {}", self.provenance).unwrap();
        writeln!(s, "segments {}", self.segments.len()).unwrap();
        for seg in &self.segments {
            let kind = match seg.kind {
                SegmentKind::SceneGeometry => "g",
                SegmentKind::Boundary => "b",
            };
            writeln!(s, "{} {} {} {} {}", seg.a.x, seg.a.y, seg.b.x, seg.b.y, kind).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Scene> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        match lines.next() {
            Some((_, l)) if l.trim() == SCENE_FORMAT_HEADER => {}
            Some((i, _)) => return Err(parse_err(i, "missing scene header")),
            None => return Err(parse_err(0, "empty scene file")),
        }
        let mut name = String::new();
        let mut provenance = String::new();
        let mut expected = None;
        let mut segments = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("name") {
                name = rest.trim().to_string();
            } else if let Some(rest) = line.strip_prefix("provenance") {
                provenance = rest.trim().to_string();
            } else if let Some(rest) = line.strip_prefix("segments") {
                expected = Some(rest.trim().parse::<usize>().map_err(|_| parse_err(i, "bad segment count"))?);
            } else if line.starts_with('#') {
                continue;
            } else {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 5 {
                    return Err(parse_err(i, "expected `x1 y1 x2 y2 kind`"));
                }
                let num = |k: usize| f[k].parse::<f64>().map_err(|_| parse_err(i, "bad coordinate"));
                let kind = match f[4] {
                    "g" => SegmentKind::SceneGeometry,
                    "b" => SegmentKind::Boundary,
                    _ => return Err(parse_err(i, "segment kind must be g or b")),
                };
                segments.push(Segment::new(Point::new(num(0)?, num(1)?), Point::new(num(2)?, num(3)?), kind));
            }
        }
        if let Some(n) = expected {
            if n != segments.len() {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("header announces {n} segments, found {}", segments.len()),
                });
            }
        }
        Ok(Scene {
            name,
            provenance,
            segments,
        })
    }
}

pub fn rect_boundary(r: &Aabb) -> [Segment; 4] {
    let p00 = r.min;
    let p10 = Point::new(r.max.x, r.min.y);
    let p11 = r.max;
    let p01 = Point::new(r.min.x, r.max.y);
    [
        Segment::boundary(p00, p10),
        Segment::boundary(p10, p11),
        Segment::boundary(p11, p01),
        Segment::boundary(p01, p00),
    ]
}

/// Uniform scale and translation so that the largest dimension of the scene
/// spans `[0, 1]`. The boundary is rebuilt as the normalized bounding
/// rectangle (the bounding box of the geometry if the scene has no boundary).
pub fn normalize_scene(scene: &Scene) -> Result<Scene> {
    if scene.segments.is_empty() {
        return Err(Error::InvalidScene("cannot normalize an empty scene".into()));
    }
    let b = scene.bounds();
    let ext = b.width().max(b.height());
    if !(ext > 0.0) || !ext.is_finite() {
        return Err(Error::InvalidScene("scene has zero extent".into()));
    }
    let map = |p: Point| Point::new((p.x - b.min.x) / ext, (p.y - b.min.y) / ext);
    let geometry: Vec<(Point, Point)> = scene.geometry().map(|(_, s)| (map(s.a), map(s.b))).collect();
    let rect = Aabb::new(map(b.min), map(b.max));
    Ok(Scene::in_rect(scene.name.clone(), scene.provenance.clone(), geometry, rect))
}

/// Grid-accelerated all-pairs crossing test.
pub fn find_crossings(segments: &[Segment], tol: f64) -> Vec<(usize, usize)> {
    if segments.len() < 2 {
        return Vec::new();
    }
    let mut bounds = Aabb::EMPTY;
    for s in segments {
        bounds.grow(s.a);
        bounds.grow(s.b);
    }
    let ext = bounds.width().max(bounds.height()).max(1e-300);
    let n = segments.len();
    let res = ((n as f64).sqrt().ceil() as i64).clamp(1, 512);
    let cell = ext / res as f64;
    let cell_of = |x: f64, y: f64| {
        (
            ((x - bounds.min.x) / cell).floor() as i64,
            ((y - bounds.min.y) / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut out = Vec::new();
    let mut candidates: Vec<usize> = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        let bb = s.bbox();
        let lo = cell_of(bb.min.x - tol, bb.min.y - tol);
        let hi = cell_of(bb.max.x + tol, bb.max.y + tol);
        candidates.clear();
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                if let Some(v) = grid.get(&(cx, cy)) {
                    candidates.extend_from_slice(v);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        for &j in &candidates {
            let t = &segments[j];
            if segments_cross(t.a, t.b, s.a, s.b, tol) {
                out.push((j, i));
            }
        }
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                grid.entry((cx, cy)).or_default().push(i);
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn text_round_trip() {
        let s = Scene::in_unit_square("t", "test", vec![(p(0.1, 0.2), p(0.3, 0.4))]);
        let back = Scene::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = Scene::from_text("# ccsp-scene v1\nname x\n0 0 1 1 q\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn normalize_identity_and_scale() {
        let s = Scene::in_unit_square("t", "test", vec![(p(0.1, 0.2), p(0.3, 0.4)), (p(0.5, 0.5), p(0.9, 0.1))]);
        let n = normalize_scene(&s).unwrap();
        for (a, b) in s.segments.iter().zip(&n.segments) {
            assert!(a.a.dist(b.a) <= 1e-15 && a.b.dist(b.b) <= 1e-15);
        }
        let mut doubled = s.clone();
        for seg in &mut doubled.segments {
            seg.a = seg.a * 2.0;
            seg.b = seg.b * 2.0;
        }
        assert_eq!(normalize_scene(&doubled).unwrap(), n);
        let mut moved = s.clone();
        for seg in &mut moved.segments {
            seg.a = seg.a * 3.0 + p(3.0, -1.0);
            seg.b = seg.b * 3.0 + p(3.0, -1.0);
        }
        let m = normalize_scene(&moved).unwrap();
        for (a, b) in m.segments.iter().zip(&n.segments) {
            assert!(a.a.dist(b.a) <= 1e-14 && a.b.dist(b.b) <= 1e-14);
        }
    }

    #[test]
    fn normalize_preserves_length_ratios() {
        let s = Scene::new(
            "t",
            "test",
            vec![Segment::geometry(p(1.0, 1.0), p(4.0, 5.0)), Segment::geometry(p(2.0, 7.0), p(3.0, 7.5))],
        );
        let n = normalize_scene(&s).unwrap();
        let r0 = s.segments[0].length() / s.segments[1].length();
        let r1 = n.segments[0].length() / n.segments[1].length();
        assert!((r0 - r1).abs() <= 1e-12 * r0);
        let b = n.bounds();
        assert!((b.width().max(b.height()) - 1.0).abs() < 1e-15);
        assert_eq!(n.segments.iter().filter(|s| s.kind == SegmentKind::Boundary).count(), 4);
    }

    #[test]
    fn degenerate_normalize_fails() {
        let s = Scene::new("t", "t", vec![]);
        assert!(normalize_scene(&s).is_err());
    }

    #[test]
    fn crossing_check_finds_pair() {
        let s = Scene::in_unit_square(
            "t",
            "t",
            vec![(p(0.1, 0.1), p(0.9, 0.9)), (p(0.1, 0.9), p(0.9, 0.1)), (p(0.2, 0.3), p(0.2, 0.4))],
        );
        assert_eq!(s.crossings(), vec![(0, 1)]);
        assert!(matches!(s.check(), Err(Error::CrossingSegments(0, 1))));
    }
}
