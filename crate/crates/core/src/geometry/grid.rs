use super::Point;
use std::collections::HashMap;

type Cell = (i64, i64);

/// Uniform bucket grid over vertex positions, updated incrementally as vertices
/// move. Used for fixed-radius neighbour queries.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    cell: f64,
    buckets: HashMap<Cell, Vec<u32>>,
    slots: Vec<Option<(Cell, Point)>>,
}

impl UniformGrid {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && cell_size.is_finite(), "bad grid cell size {cell_size}");
        Self {
            cell: cell_size,
            buckets: HashMap::new(),
            slots: Vec::new(),
        }
    }

    pub fn with_points<I: IntoIterator<Item = (u32, Point)>>(cell_size: f64, pts: I) -> Self {
        let mut g = Self::new(cell_size);
        for (id, p) in pts {
            g.insert(id, p);
        }
        g
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    #[inline]
    fn cell_of(&self, p: Point) -> Cell {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    pub fn insert(&mut self, id: u32, p: Point) {
        let i = id as usize;
        if i >= self.slots.len() {
            self.slots.resize(i + 1, None);
        }
        if self.slots[i].is_some() {
            self.remove(id);
        }
        let c = self.cell_of(p);
        self.buckets.entry(c).or_default().push(id);
        self.slots[i] = Some((c, p));
    }

    pub fn remove(&mut self, id: u32) -> bool {
        let Some(slot) = self.slots.get_mut(id as usize) else {
            return false;
        };
        let Some((c, _)) = slot.take() else {
            return false;
        };
        if let Some(bucket) = self.buckets.get_mut(&c) {
            if let Some(k) = bucket.iter().position(|&v| v == id) {
                bucket.swap_remove(k);
            }
            if bucket.is_empty() {
                self.buckets.remove(&c);
            }
        }
        true
    }

    /// Updates the stored position, moving the id between buckets if needed.
    pub fn move_to(&mut self, id: u32, p: Point) {
        let i = id as usize;
        match self.slots.get(i).copied().flatten() {
            Some((c, _)) if c == self.cell_of(p) => self.slots[i] = Some((c, p)),
            _ => self.insert(id, p),
        }
    }

    pub fn position(&self, id: u32) -> Option<Point> {
        self.slots.get(id as usize).copied().flatten().map(|(_, p)| p)
    }

    /// Re-buckets everything with a new cell size.
    pub fn rebuild(&mut self, cell_size: f64) {
        let pts: Vec<(u32, Point)> = self
            .slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|(_, p)| (i as u32, p)))
            .collect();
        *self = Self::with_points(cell_size, pts);
    }

    /// All stored ids within Euclidean distance `radius` of `center` (inclusive).
    pub fn query(&self, center: Point, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        self.query_into(center, radius, &mut out);
        out
    }

    pub fn query_into(&self, center: Point, radius: f64, out: &mut Vec<u32>) {
        out.clear();
        if radius < 0.0 {
            return;
        }
        let lo = self.cell_of(Point::new(center.x - radius, center.y - radius));
        let hi = self.cell_of(Point::new(center.x + radius, center.y + radius));
        let r2 = radius * radius;
        let ncells = (hi.0 - lo.0 + 1) as f64 * (hi.1 - lo.1 + 1) as f64;
        if ncells > 4.0 * self.buckets.len() as f64 {
            // sparse grid relative to the query window: scan buckets instead
            for (c, ids) in &self.buckets {
                if c.0 < lo.0 || c.0 > hi.0 || c.1 < lo.1 || c.1 > hi.1 {
                    continue;
                }
                self.collect(ids, center, r2, out);
            }
            return;
        }
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                if let Some(ids) = self.buckets.get(&(cx, cy)) {
                    self.collect(ids, center, r2, out);
                }
            }
        }
    }

    fn collect(&self, ids: &[u32], center: Point, r2: f64, out: &mut Vec<u32>) {
        for &id in ids {
            if let Some((_, p)) = self.slots[id as usize] {
                let d = p - center;
                if d.x * d.x + d.y * d.y <= r2 {
                    out.push(id);
                }
            }
        }
    }

    /// Checks that every stored id sits in the bucket matching its position.
    pub fn is_consistent(&self) -> bool {
        let mut seen = 0usize;
        for (c, ids) in &self.buckets {
            for &id in ids {
                match self.slots.get(id as usize).copied().flatten() {
                    Some((sc, p)) if sc == *c && self.cell_of(p) == *c => seen += 1,
                    _ => return false,
                }
            }
        }
        seen == self.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(pts: &[(u32, Point)], c: Point, r: f64) -> Vec<u32> {
        let mut v: Vec<u32> = pts
            .iter()
            .filter(|(_, p)| {
                let d = *p - c;
                d.x * d.x + d.y * d.y <= r * r
            })
            .map(|(i, _)| *i)
            .collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn empty_grid() {
        let g = UniformGrid::new(0.1);
        assert!(g.query(Point::new(0.5, 0.5), 10.0).is_empty());
    }

    #[test]
    fn boundary_inclusive() {
        let mut g = UniformGrid::new(0.1);
        g.insert(7, Point::new(0.3, 0.4));
        assert_eq!(g.query(Point::new(0.0, 0.0), 0.5), vec![7]);
    }

    #[test]
    fn matches_brute_force_with_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..1000 {
            let n = if case == 0 { 100 } else { rng.gen_range(0..60) };
            let cell = rng.gen_range(0.01..0.3);
            let mut pts: Vec<(u32, Point)> = (0..n)
                .map(|i| (i as u32, Point::new(rng.gen(), rng.gen())))
                .collect();
            let mut g = UniformGrid::with_points(cell, pts.iter().copied());
            // random moves, removals and reinserts
            for _ in 0..n / 3 {
                let k = rng.gen_range(0..pts.len());
                let np = Point::new(rng.gen(), rng.gen());
                pts[k].1 = np;
                g.move_to(pts[k].0, np);
            }
            if n > 2 {
                let (id, _) = pts.swap_remove(0);
                assert!(g.remove(id));
            }
            assert!(g.is_consistent());
            let c = Point::new(rng.gen(), rng.gen());
            let r = if case == 0 { 0.1 } else { rng.gen_range(0.0..0.5) };
            let mut got = g.query(c, r);
            got.sort_unstable();
            assert_eq!(got, brute(&pts, c, r));
        }
    }

    #[test]
    fn rebuild_keeps_contents() {
        let mut g = UniformGrid::new(0.05);
        for i in 0..50u32 {
            g.insert(i, Point::new(i as f64 / 50.0, 0.5));
        }
        g.rebuild(0.2);
        assert_eq!(g.cell_size(), 0.2);
        assert_eq!(g.len(), 50);
        assert!(g.is_consistent());
        assert_eq!(g.query(Point::new(0.0, 0.5), 0.05).len(), 3);
    }
}
