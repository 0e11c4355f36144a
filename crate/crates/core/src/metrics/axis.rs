use crate::error::{Error, Result};

use super::BinaryMask;

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull (monotone chain) of lattice points, counter-clockwise.
fn hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Largest Euclidean distance between two foreground pixel centres.
///
/// The diameter of a point set is attained between convex-hull vertices, and
/// every hull vertex is the leftmost or rightmost pixel of its row.
pub fn longest_axis(g: &BinaryMask) -> Result<f64> {
    let mut extremes = Vec::new();
    for y in 0..g.height() {
        let row = &g.bits()[y * g.width()..(y + 1) * g.width()];
        if let (Some(l), Some(r)) = (row.iter().position(|&b| b), row.iter().rposition(|&b| b)) {
            extremes.push((l as i64, y as i64));
            extremes.push((r as i64, y as i64));
        }
    }
    if extremes.is_empty() {
        return Err(Error::EmptyMask);
    }
    let h = hull(extremes);
    let mut best = 0i64;
    for (i, &p) in h.iter().enumerate() {
        for &q in &h[i + 1..] {
            best = best.max((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2));
        }
    }
    Ok((best as f64).sqrt())
}

/// Small-tumour criterion: longest axis at most `threshold` pixels.
pub fn is_small(g: &BinaryMask, threshold: f64) -> Result<bool> {
    Ok(longest_axis(g)? <= threshold)
}
