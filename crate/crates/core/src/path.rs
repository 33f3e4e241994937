//! Planar polylines and their CSV form.

use std::io::Write;

use crate::cost_field::ConfigSpace;
use crate::error::{Error, Result};
use crate::Num;

pub type Point = [f64; 2];

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Ordered waypoints, at least one, no two consecutive ones equal.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    waypoints: Vec<Point>,
}

impl Path {
    pub fn new(waypoints: Vec<Point>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidPath(
                "a path needs at least one waypoint".into(),
            ));
        }
        if let Some(p) = waypoints
            .iter()
            .find(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(Error::InvalidPath(format!("non-finite waypoint {p:?}")));
        }
        if let Some(i) = waypoints.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidPath(format!(
                "waypoints {i} and {} coincide",
                i + 1
            )));
        }
        Ok(Self { waypoints })
    }

    /// Drops consecutive duplicates instead of rejecting them.
    pub fn from_points_dedup(points: impl IntoIterator<Item = Point>) -> Result<Self> {
        let mut waypoints: Vec<Point> = Vec::new();
        for p in points {
            if waypoints.last() != Some(&p) {
                waypoints.push(p);
            }
        }
        Self::new(waypoints)
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn first(&self) -> Point {
        self.waypoints[0]
    }

    pub fn last(&self) -> Point {
        *self.waypoints.last().expect("non-empty path")
    }

    /// Appends `p` unless the path already ends there.
    pub fn with_endpoint(&self, p: Point) -> Self {
        let mut waypoints = self.waypoints.clone();
        if waypoints.last() != Some(&p) {
            waypoints.push(p);
        }
        Self { waypoints }
    }

    pub fn translated(&self, by: Point) -> Self {
        Self {
            waypoints: self
                .waypoints
                .iter()
                .map(|p| [p[0] + by[0], p[1] + by[1]])
                .collect(),
        }
    }

    pub fn check_inside(&self, space: &ConfigSpace) -> Result<()> {
        match self.waypoints.iter().find(|p| !space.contains(&p[..])) {
            Some(p) => Err(Error::OutOfBounds(p.to_vec())),
            None => Ok(()),
        }
    }

    /// `x,y` header then one waypoint per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y")?;
        for p in &self.waypoints {
            writeln!(out, "{},{}", Num(p[0]), Num(p[1]))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads `x,y` rows; a header row and `#` comments are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut waypoints = Vec::new();
        let mut header_allowed = true;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() < 2 {
                return Err(Error::Parse(format!("line {}: expected x,y", idx + 1)));
            }
            let first = std::mem::replace(&mut header_allowed, false);
            match (cells[0].parse::<f64>(), cells[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => waypoints.push([x, y]),
                _ if first => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: cannot parse {line:?} as x,y",
                        idx + 1
                    )))
                }
            }
        }
        Self::new(waypoints)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_input() {
        assert!(Path::new(vec![]).is_err());
        assert!(Path::new(vec![[0.0, 0.0], [0.0, 0.0]]).is_err());
        assert!(Path::new(vec![[f64::NAN, 0.0]]).is_err());
        let p = Path::from_points_dedup([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let p = Path::new(vec![
            [0.1, -3.25],
            [1.0 / 3.0, 2.0],
            [9.999_999_999_9, 1e-17],
        ])
        .unwrap();
        let back = Path::from_csv_str(&p.to_csv_string()).unwrap();
        assert_eq!(back, p);
        let commented = format!("# note\n{}", p.to_csv_string());
        assert_eq!(Path::from_csv_str(&commented).unwrap(), p);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = Path::from_csv_str("x,y\n0,0\n1,oops\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn endpoint_append_is_idempotent() {
        let p = Path::new(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(p.with_endpoint([1.0, 1.0]).len(), 2);
        assert_eq!(p.with_endpoint([2.0, 1.0]).len(), 3);
    }
}
