//! Uniform-grid bucket index for exact nearest and radius queries in 2-D.

use crate::path::Point;

#[derive(Debug, Clone)]
pub struct GridIndex {
    origin: Point,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
    points: Vec<Point>,
}

#[inline]
fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

impl GridIndex {
    /// Covers `[lower, upper]` with square cells of side `cell`.
    pub fn new(lower: Point, upper: Point, cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let cols = (((upper[0] - lower[0]) / cell).ceil() as usize).max(1);
        let rows = (((upper[1] - lower[1]) / cell).ceil() as usize).max(1);
        Self {
            origin: lower,
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let cx = ((p[0] - self.origin[0]) / self.cell).floor();
        let cy = ((p[1] - self.origin[1]) / self.cell).floor();
        (
            (cx.max(0.0) as usize).min(self.cols - 1),
            (cy.max(0.0) as usize).min(self.rows - 1),
        )
    }

    /// Stores `p`; its id is the insertion order.
    pub fn insert(&mut self, p: Point) -> usize {
        let id = self.points.len();
        let (cx, cy) = self.cell_of(p);
        self.buckets[cy * self.cols + cx].push(id);
        self.points.push(p);
        id
    }

    /// Euclidean nearest point; ties go to the lowest id.
    pub fn nearest(&self, p: Point) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let (cx, cy) = self.cell_of(p);
        let max_ring = self.cols.max(self.rows);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..=max_ring {
            self.visit_ring(cx, cy, ring, |id| {
                let d = dist2(self.points[id], p);
                let better = match best {
                    None => true,
                    Some((bd, bid)) => d < bd || (d == bd && id < bid),
                };
                if better {
                    best = Some((d, id));
                }
            });
            if let Some((bd, _)) = best {
                // Cells in ring + 1 lie at least ring * cell away (p may sit
                // anywhere in its own cell).
                let reach = ring as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best.map(|(_, id)| id)
    }

    /// Ids within `radius` of `p` (inclusive), ascending.
    pub fn within(&self, p: Point, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let rings = (radius / self.cell).ceil() as isize;
        let (cx, cy) = self.cell_of(p);
        let mut out = Vec::new();
        for dy in -rings..=rings {
            let y = cy as isize + dy;
            if y < 0 || y >= self.rows as isize {
                continue;
            }
            for dx in -rings..=rings {
                let x = cx as isize + dx;
                if x < 0 || x >= self.cols as isize {
                    continue;
                }
                for &id in &self.buckets[y as usize * self.cols + x as usize] {
                    if dist2(self.points[id], p) <= r2 {
                        out.push(id);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn visit_ring(&self, cx: usize, cy: usize, ring: usize, mut f: impl FnMut(usize)) {
        let r = ring as isize;
        let (cx, cy) = (cx as isize, cy as isize);
        let mut cell = |x: isize, y: isize| {
            if x >= 0 && y >= 0 && (x as usize) < self.cols && (y as usize) < self.rows {
                for &id in &self.buckets[y as usize * self.cols + x as usize] {
                    f(id);
                }
            }
        };
        if r == 0 {
            cell(cx, cy);
            return;
        }
        for x in (cx - r)..=(cx + r) {
            cell(x, cy - r);
            cell(x, cy + r);
        }
        for y in (cy - r + 1)..=(cy + r - 1) {
            cell(cx - r, y);
            cell(cx + r, y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(points: &[Point], p: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in points.iter().enumerate() {
            let d = dist2(*q, p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut index = GridIndex::new([-10.0, -10.0], [10.0, 10.0], 0.35);
        let mut points = Vec::new();
        for _ in 0..2000 {
            let p = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            index.insert(p);
            points.push(p);
        }
        for _ in 0..500 {
            let q = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            assert_eq!(index.nearest(q), Some(brute_nearest(&points, q)));
            let r = rng.random_range(0.05..0.7);
            let brute: Vec<usize> = (0..points.len())
                .filter(|&i| dist2(points[i], q) <= r * r)
                .collect();
            assert_eq!(index.within(q, r), brute);
        }
    }

    #[test]
    fn sparse_index_finds_far_points() {
        let mut index = GridIndex::new([-10.0, -10.0], [10.0, 10.0], 0.35);
        assert_eq!(index.nearest([0.0, 0.0]), None);
        index.insert([-9.9, -9.9]);
        index.insert([9.9, 9.9]);
        assert_eq!(index.nearest([5.0, 4.0]), Some(1));
        assert_eq!(index.nearest([10.0, -10.0]), Some(0));
    }

    #[test]
    fn ties_prefer_lowest_id() {
        let mut index = GridIndex::new([0.0, 0.0], [4.0, 4.0], 1.0);
        index.insert([3.0, 2.0]);
        index.insert([1.0, 2.0]);
        assert_eq!(index.nearest([2.0, 2.0]), Some(0));
    }
}
