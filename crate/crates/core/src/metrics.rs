//! Arc length and the area enclosed between two paths.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::path::{distance, Path, Point};

/// Default tolerance on start/end mismatch between compared paths.
pub const DEFAULT_ENDPOINT_TOL: f64 = 0.5;

pub fn arc_length(path: &Path) -> f64 {
    path.waypoints()
        .windows(2)
        .map(|w| distance(w[0], w[1]))
        .sum()
}

/// Two paths whose starts and ends agree within a tolerance.
#[derive(Debug, Clone)]
pub struct PolylinePair<'a> {
    a: &'a Path,
    b: &'a Path,
}

impl<'a> PolylinePair<'a> {
    pub fn new(a: &'a Path, b: &'a Path) -> Result<Self> {
        Self::with_tolerance(a, b, DEFAULT_ENDPOINT_TOL)
    }

    pub fn with_tolerance(a: &'a Path, b: &'a Path, tolerance: f64) -> Result<Self> {
        for p in [a, b] {
            if p.len() < 2 {
                return Err(Error::InvalidPath(
                    "area comparison needs paths with at least two waypoints".into(),
                ));
            }
        }
        for (pa, pb) in [(a.first(), b.first()), (a.last(), b.last())] {
            let d = distance(pa, pb);
            if d > tolerance {
                return Err(Error::EndpointMismatch {
                    distance: d,
                    tolerance,
                });
            }
        }
        Ok(Self { a, b })
    }
}

fn lexicographic(a: &Path, b: &Path) -> Ordering {
    let key = |p: &Path| {
        p.waypoints()
            .iter()
            .flat_map(|w| [w[0], w[1]])
            .collect::<Vec<_>>()
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    ka.len().cmp(&kb.len())
}

/// Absolute shoelace area of the loop `a` followed by `b` reversed. Endpoint
/// gaps are closed by straight segments. Opposite-orientation lobes of a
/// self-intersecting loop cancel.
pub fn area_between(pair: &PolylinePair<'_>) -> f64 {
    // The traversal cancels analytically but not always in floating point.
    if pair.a.waypoints() == pair.b.waypoints() {
        return 0.0;
    }
    // Fixed evaluation order makes the result exactly symmetric.
    let (first, second) = match lexicographic(pair.a, pair.b) {
        Ordering::Greater => (pair.b, pair.a),
        _ => (pair.a, pair.b),
    };
    let origin = first.first();
    let ring: Vec<Point> = first
        .waypoints()
        .iter()
        .chain(second.waypoints().iter().rev())
        .map(|p| [p[0] - origin[0], p[1] - origin[1]])
        .collect();
    let n = ring.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let p = ring[i];
            let q = ring[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice.abs()
}

/// Validates the pair with the default tolerance and measures the area.
pub fn area_between_paths(a: &Path, b: &Path) -> Result<f64> {
    Ok(area_between(&PolylinePair::new(a, b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(points: &[Point]) -> Path {
        Path::new(points.to_vec()).unwrap()
    }

    #[test]
    fn arc_length_examples() {
        assert_eq!(arc_length(&path(&[[0.0, 0.0], [3.0, 4.0]])), 5.0);
        assert_eq!(arc_length(&path(&[[1.0, 1.0]])), 0.0);
        assert_eq!(
            arc_length(&path(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])),
            2.0
        );
    }

    #[test]
    fn area_examples() {
        let a = path(&[[0.0, 0.0], [1.0, 0.0]]);
        let square = path(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        assert_eq!(area_between_paths(&a, &square).unwrap(), 1.0);
        assert_eq!(area_between_paths(&a, &a).unwrap(), 0.0);

        let base = path(&[[0.0, 0.0], [2.0, 0.0]]);
        let tri = path(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]);
        assert_eq!(area_between_paths(&base, &tri).unwrap(), 1.0);
    }

    #[test]
    fn small_endpoint_gaps_are_closed() {
        let a = path(&[[0.0, 0.0], [2.0, 0.0]]);
        let b = path(&[[0.0, 0.2], [2.0, 0.2]]);
        let area = area_between_paths(&a, &b).unwrap();
        assert!((area - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_or_degenerate_pairs() {
        let a = path(&[[0.0, 0.0], [2.0, 0.0]]);
        let far = path(&[[0.0, 0.0], [2.0, 3.0]]);
        assert!(matches!(
            area_between_paths(&a, &far),
            Err(Error::EndpointMismatch { .. })
        ));
        let point = path(&[[0.0, 0.0]]);
        assert!(area_between_paths(&a, &point).is_err());
    }

    #[test]
    fn figure_eight_lobes_cancel() {
        let a = path(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]);
        let b = path(&[[0.0, 0.0], [1.0, -1.0], [2.0, 0.0]]);
        assert_eq!(area_between_paths(&a, &b).unwrap(), 2.0);
        let c = path(&[[0.0, 0.0], [0.5, 0.5], [1.0, 0.0], [1.5, -0.5], [2.0, 0.0]]);
        let straight = path(&[[0.0, 0.0], [2.0, 0.0]]);
        assert!(area_between_paths(&c, &straight).unwrap() < 1e-12);
    }

    fn arb_path_pair() -> impl Strategy<Value = (Path, Path)> {
        let interior = || prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 0..8);
        (interior(), interior()).prop_map(|(ia, ib)| {
            let build = |inner: Vec<(f64, f64)>| {
                let mut pts = vec![[-8.0, -7.0]];
                pts.extend(inner.into_iter().map(|(x, y)| [x, y]));
                pts.push([8.0, 7.0]);
                Path::from_points_dedup(pts).unwrap()
            };
            (build(ia), build(ib))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn area_is_symmetric_and_translation_invariant((a, b) in arb_path_pair(),
                                                       dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let ab = area_between_paths(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, area_between_paths(&b, &a).unwrap());
            let moved = area_between_paths(&a.translated([dx, dy]), &b.translated([dx, dy])).unwrap();
            prop_assert!((moved - ab).abs() < 1e-9);
        }
    }
}
