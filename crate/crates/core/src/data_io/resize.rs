//! Image and mask resampling with half-pixel-centre alignment.

use crate::metrics::BinaryMask;

/// Bilinear resampling of a row-major `sw x sh` plane to `tw x th`.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, tw: usize, th: usize) -> Vec<f64> {
    let coord = |t: usize, s: usize, n: usize| -> (usize, usize, f64) {
        let pos = ((t as f64 + 0.5) * s as f64 / n as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = pos.floor() as usize;
        (i0, (i0 + 1).min(s - 1), pos - i0 as f64)
    };
    let mut out = Vec::with_capacity(tw * th);
    for ty in 0..th {
        let (y0, y1, fy) = coord(ty, sh, th);
        for tx in 0..tw {
            let (x0, x1, fx) = coord(tx, sw, tw);
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bottom = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Nearest-neighbour resampling; every output pixel copies one source pixel.
pub fn resize_nearest(mask: &BinaryMask, tw: usize, th: usize) -> BinaryMask {
    let (sw, sh) = (mask.width(), mask.height());
    BinaryMask::from_fn(tw, th, |x, y| {
        let sx = ((2 * x + 1) * sw / (2 * tw)).min(sw - 1);
        let sy = ((2 * y + 1) * sh / (2 * th)).min(sh - 1);
        mask.get(sx, sy)
    })
}
