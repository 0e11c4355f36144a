use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::BinaryMask;

/// Foreground pixels with a 4-neighbour that is background or off-image,
/// as `(x, y)` pixel centres in row-major order.
pub fn boundary_points(m: &BinaryMask) -> Result<Vec<(i64, i64)>> {
    if m.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = (m.width(), m.height());
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && m.get(x as usize, y as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            if !(inside(xi - 1, yi) && inside(xi + 1, yi) && inside(xi, yi - 1) && inside(xi, yi + 1)) {
                out.push((x as i64, y as i64));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryErrors {
    /// Symmetric Hausdorff distance between the two boundaries.
    pub he: f64,
    /// Mean of the two directed mean boundary distances.
    pub mae: f64,
}

/// Nearest-neighbour lookup over a point set bucketed by row.
struct RowIndex {
    y0: i64,
    rows: Vec<Vec<i64>>,
}

impl RowIndex {
    fn new(points: &[(i64, i64)]) -> Self {
        let y0 = points.iter().map(|p| p.1).min().unwrap_or(0);
        let y1 = points.iter().map(|p| p.1).max().unwrap_or(0);
        let mut rows = vec![Vec::new(); (y1 - y0 + 1) as usize];
        for &(x, y) in points {
            rows[(y - y0) as usize].push(x);
        }
        rows.iter_mut().for_each(|r| r.sort_unstable());
        RowIndex { y0, rows }
    }

    fn row_best(&self, y: i64, x: i64) -> Option<i64> {
        let r = self.rows.get(usize::try_from(y - self.y0).ok()?)?;
        let i = r.partition_point(|&c| c < x);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| r.get(j))
            .map(|&c| (c - x) * (c - x))
            .min()
    }

    /// Squared distance from `(x, y)` to the nearest indexed point.
    fn nearest_sq(&self, x: i64, y: i64) -> i64 {
        let mut best = i64::MAX;
        let span = self.rows.len() as i64;
        for dy in 0.. {
            if dy * dy >= best {
                break;
            }
            let above = y - dy;
            let below = y + dy;
            if above < self.y0 && below >= self.y0 + span {
                break;
            }
            for row in if dy == 0 { vec![y] } else { vec![above, below] } {
                if let Some(dx2) = self.row_best(row, x) {
                    best = best.min(dx2 + dy * dy);
                }
            }
        }
        best
    }
}

fn directed(from: &[(i64, i64)], to: &RowIndex) -> (f64, f64) {
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    for &(x, y) in from {
        let d = (to.nearest_sq(x, y) as f64).sqrt();
        max = max.max(d);
        sum += d;
    }
    (max, sum / from.len() as f64)
}

/// Hausdorff and mean boundary distances between prediction `a` and
/// ground truth `g`, in pixels.
pub fn boundary_errors(a: &BinaryMask, g: &BinaryMask) -> Result<BoundaryErrors> {
    if (a.width(), a.height()) != (g.width(), g.height()) {
        return Err(Error::shape("boundary_errors", "mask dimensions differ"));
    }
    let ba = boundary_points(a)?;
    let bg = boundary_points(g)?;
    let (max_ag, mean_ag) = directed(&ba, &RowIndex::new(&bg));
    let (max_ga, mean_ga) = directed(&bg, &RowIndex::new(&ba));
    Ok(BoundaryErrors { he: max_ag.max(max_ga), mae: (mean_ag + mean_ga) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_is_its_own_boundary() {
        let m = BinaryMask::from_fn(5, 5, |x, y| (x, y) == (2, 3));
        assert_eq!(boundary_points(&m).unwrap(), vec![(2, 3)]);
    }

    #[test]
    fn filled_square_has_eight_perimeter_pixels() {
        let m = BinaryMask::from_fn(7, 7, |x, y| (2..5).contains(&x) && (2..5).contains(&y));
        let b = boundary_points(&m).unwrap();
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&(3, 3)));
    }

    #[test]
    fn full_frame_boundary_is_the_frame() {
        let m = BinaryMask::from_fn(4, 3, |_, _| true);
        let b = boundary_points(&m).unwrap();
        assert_eq!(b.len(), 10);
        assert!(!b.contains(&(1, 1)) && !b.contains(&(2, 1)));
    }

    #[test]
    fn empty_masks_are_rejected() {
        let e = BinaryMask::empty(4, 4);
        let one = BinaryMask::from_fn(4, 4, |x, y| x == y);
        assert!(matches!(boundary_points(&e), Err(Error::EmptyMask)));
        assert!(boundary_errors(&e, &one).is_err());
        assert!(boundary_errors(&one, &e).is_err());
    }

    #[test]
    fn single_points_three_four_five() {
        let a = BinaryMask::from_fn(8, 8, |x, y| (x, y) == (0, 0));
        let g = BinaryMask::from_fn(8, 8, |x, y| (x, y) == (3, 4));
        assert_eq!(boundary_errors(&a, &g).unwrap(), BoundaryErrors { he: 5.0, mae: 5.0 });
        assert_eq!(boundary_errors(&g, &g).unwrap(), BoundaryErrors { he: 0.0, mae: 0.0 });
    }
}
