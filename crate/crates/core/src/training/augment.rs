use rand::Rng;

use crate::data_io::{GrayImage, Sample};
use crate::metrics::BinaryMask;

/// Translates image and mask by `(dx, dy)` whole pixels; vacated pixels
/// become 0 / background.
pub fn shift_sample(sample: &Sample, dx: isize, dy: isize) -> Sample {
    let (w, h) = sample.size();
    let src = |x: usize, y: usize| -> Option<usize> {
        let sx = x as isize - dx;
        let sy = y as isize - dy;
        (sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h).then(|| sy as usize * w + sx as usize)
    };
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| src(x, y).map_or(0.0, |i| sample.image.data[i]))
        .collect();
    let mask = BinaryMask::from_fn(w, h, |x, y| src(x, y).is_some_and(|i| sample.mask.bits()[i]));
    Sample { image: GrayImage { width: w, height: h, data }, mask, ..sample.clone() }
}

/// Random width/height shift with offsets uniform in
/// `[-floor(f * size), floor(f * size)]` per axis.
pub fn augment_shift<R: Rng + ?Sized>(sample: &Sample, shift_fraction: f64, rng: &mut R) -> Sample {
    let (w, h) = sample.size();
    let max_x = (shift_fraction * w as f64).floor() as i64;
    let max_y = (shift_fraction * h as f64).floor() as i64;
    let dx = rng.random_range(-max_x..=max_x) as isize;
    let dy = rng.random_range(-max_y..=max_y) as isize;
    shift_sample(sample, dx, dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::Origin;

    fn sample() -> Sample {
        let mask = BinaryMask::from_fn(20, 16, |x, y| (6..10).contains(&x) && (5..9).contains(&y));
        Sample {
            id: "t".into(),
            image: GrayImage { width: 20, height: 16, data: (0..320).map(|i| i as f64 / 320.0).collect() },
            mask,
            origin: Origin::File { image: "a".into(), mask: "b".into() },
            native_size: (20, 16),
        }
    }

    fn centroid(m: &BinaryMask) -> (f64, f64) {
        let pts = m.points();
        let n = pts.len() as f64;
        (pts.iter().map(|p| p.0 as f64).sum::<f64>() / n, pts.iter().map(|p| p.1 as f64).sum::<f64>() / n)
    }

    #[test]
    fn zero_shift_is_identity() {
        let s = sample();
        assert_eq!(shift_sample(&s, 0, 0), s);
    }

    #[test]
    fn column_shift_moves_centroid_by_five() {
        let s = sample();
        let t = shift_sample(&s, 5, 0);
        let (a, b) = (centroid(&s.mask), centroid(&t.mask));
        assert_eq!(b.0 - a.0, 5.0);
        assert_eq!(b.1, a.1);
        assert_eq!(t.mask.count(), s.mask.count());
    }

    #[test]
    fn shift_back_restores_the_kept_region() {
        let s = sample();
        let back = shift_sample(&shift_sample(&s, 3, -2), -3, 2);
        for y in 2..16 {
            for x in 0..17 {
                assert_eq!(back.image.data[y * 20 + x], s.image.data[y * 20 + x]);
            }
        }
    }

    #[test]
    fn zero_fraction_never_moves() {
        let s = sample();
        let mut rng = crate::rng::stream(1, &[]);
        assert_eq!(augment_shift(&s, 0.0, &mut rng), s);
    }
}
