#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use stan_core::autodiff::{dice_loss_value, Graph};
use stan_core::metrics::BinaryMask;
use stan_core::model::Model;
use stan_core::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Values bounded away from zero, so relu has no kink within `h`.
pub fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = r.random_range(0.05..1.0);
        if r.random_bool(0.5) { m } else { -m }
    })
}

/// Distinct values with gaps of at least 1e-3 so a max never flips under
/// a 1e-5 perturbation.
pub fn distinct(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 1e-3).collect();
    for i in (1..n).rev() {
        vals.swap(i, r.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), vals).unwrap()
}

pub fn binary(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::from_fn(shape, |_| if r.random_bool(0.4) { 1.0 } else { 0.0 });
    t.data_mut()[0] = 1.0;
    t
}

pub fn random_mask(w: usize, h: usize, density: f64, r: &mut ChaCha8Rng) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| r.random_bool(density))
}

/// Central-difference check of the dice loss of `model` on `(x, target)` with
/// respect to the listed `(layer, is_bias, element)` parameters. The numeric
/// side runs the eager forward, not the graph.
pub fn model_param_check(
    model: &Model,
    x: &Tensor,
    target: &Tensor,
    picks: &[(usize, bool, usize)],
    h: f64,
) -> f64 {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let (p, leaves) = model.forward_graph(&mut g, xv).unwrap();
    let loss = g.dice_loss(p, target).unwrap();
    g.backward(loss).unwrap();
    let grads: Vec<(Tensor, Tensor)> =
        leaves.iter().map(|&(w, b)| (g.take_grad(w).unwrap(), g.take_grad(b).unwrap())).collect();

    let mut probe = model.clone();
    let eval = |m: &Model| dice_loss_value(&m.forward(x).unwrap(), target).unwrap();
    let mut worst: f64 = 0.0;
    for &(layer, is_bias, i) in picks {
        let orig = *slot(&mut probe, layer, is_bias, i);
        *slot(&mut probe, layer, is_bias, i) = orig + h;
        let up = eval(&probe);
        *slot(&mut probe, layer, is_bias, i) = orig - h;
        let down = eval(&probe);
        *slot(&mut probe, layer, is_bias, i) = orig;
        let numeric = (up - down) / (2.0 * h);
        let (gw, gb) = &grads[layer];
        let a = if is_bias { gb.data()[i] } else { gw.data()[i] };
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    worst
}

fn slot(m: &mut Model, layer: usize, is_bias: bool, i: usize) -> &mut f64 {
    let p = &mut m.params_mut()[layer];
    let t = if is_bias { &mut p.bias } else { &mut p.weight };
    &mut t.data_mut()[i]
}

/// Every `(layer, is_bias, element)` of `model`.
pub fn all_params(model: &Model) -> Vec<(usize, bool, usize)> {
    let mut out = Vec::new();
    for (l, p) in model.params().iter().enumerate() {
        out.extend((0..p.weight.numel()).map(|i| (l, false, i)));
        out.extend((0..p.bias.numel()).map(|i| (l, true, i)));
    }
    out
}

/// Up to `weights` weight elements and `biases` bias elements from every
/// layer, so each op in the network is on some checked path.
pub fn per_layer_sample(model: &Model, weights: usize, biases: usize, seed: u64) -> Vec<(usize, bool, usize)> {
    use rand::seq::index::sample;
    let mut r = rng(seed);
    let mut out = Vec::new();
    for (l, p) in model.params().iter().enumerate() {
        let (nw, nb) = (p.weight.numel(), p.bias.numel());
        out.extend(sample(&mut r, nw, weights.min(nw)).into_iter().map(|i| (l, false, i)));
        out.extend(sample(&mut r, nb, biases.min(nb)).into_iter().map(|i| (l, true, i)));
    }
    out
}

/// Zero biases put pre-activations fed by dead relus exactly on the relu
/// kink, where one-sided and central differences disagree. Moving biases to
/// generic values keeps the check away from that set.
pub fn generic_biases(model: &mut Model, seed: u64) {
    let mut r = rng(seed);
    for p in model.params_mut() {
        for b in p.bias.data_mut() {
            *b = r.random_range(0.02..0.1) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
}

// ---- parameter counts from the layer list ----

fn conv(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

fn deconv(cin: usize, cout: usize) -> usize {
    cin * cout * 4 + cout
}

/// Hand count of the two-branch network for base width `f`.
pub fn stan_count(f: usize) -> usize {
    let width = |k: u32| f * 2usize.pow(k - 1);
    let mut total = 0;
    let mut cin = 1;
    for k in 1..=4 {
        let fk = width(k);
        let h = fk / 2;
        total += conv(cin, fk, 3) + conv(fk, fk, 3);
        total += conv(cin, h, 1) + conv(h, h, 3);
        total += conv(cin, h, 5) + conv(h, h, 3);
        cin = fk;
    }
    let f5 = 16 * f;
    total += conv(8 * f, f5 / 2, 5) + conv(f5 / 2, f5 / 2, 5);
    total += conv(8 * f, f5 / 4, 1) + conv(f5 / 4, f5 / 4, 1);
    total += conv(8 * f, f5 / 4, 3) + conv(f5 / 4, f5 / 4, 3);
    let mut u = f5;
    for k in (1..=4).rev() {
        let fk = width(k);
        total += deconv(u, fk);
        total += conv(2 * fk, fk, 3);
        total += conv(fk, fk / 2, 5);
        total += conv(fk + fk / 2, fk, 3);
        u = 2 * fk;
    }
    total + conv(u, 1, 1)
}

pub fn unet_count(f: usize) -> usize {
    let width = |k: u32| f * 2usize.pow(k - 1);
    let mut total = 0;
    let mut cin = 1;
    for k in 1..=4 {
        let fk = width(k);
        total += conv(cin, fk, 3) + conv(fk, fk, 3);
        cin = fk;
    }
    total += conv(8 * f, 16 * f, 3) + conv(16 * f, 16 * f, 3);
    let mut u = 16 * f;
    for k in (1..=4).rev() {
        let fk = width(k);
        total += deconv(u, fk) + conv(2 * fk, fk, 3) + conv(fk, fk, 3);
        u = fk;
    }
    total + conv(u, 1, 1)
}

// ---- metric oracles written from the definitions ----

pub struct Brute {
    pub tpr: f64,
    pub fpr: f64,
    pub ji: f64,
    pub dsc: f64,
    pub aer: f64,
}

pub fn brute_region(a: &BinaryMask, g: &BinaryMask) -> Brute {
    let (mut ai, mut gi, mut both, mut either) = (0usize, 0usize, 0usize, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (pa, pg) = (a.get(x, y), g.get(x, y));
            ai += pa as usize;
            gi += pg as usize;
            both += (pa && pg) as usize;
            either += (pa || pg) as usize;
        }
    }
    let (a_f, g_f, i_f, u_f) = (ai as f64, gi as f64, both as f64, either as f64);
    Brute {
        tpr: i_f / g_f,
        fpr: (a_f - i_f) / g_f,
        ji: i_f / u_f,
        dsc: 2.0 * i_f / (a_f + g_f),
        aer: (u_f - i_f) / g_f,
    }
}

/// Foreground pixels with a 4-neighbour outside the mask or the image.
pub fn brute_boundary(m: &BinaryMask) -> Vec<(f64, f64)> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && m.get(x as usize, y as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if fg(x, y) && !(fg(x - 1, y) && fg(x + 1, y) && fg(x, y - 1) && fg(x, y + 1)) {
                out.push((x as f64, y as f64));
            }
        }
    }
    out
}

/// All-pairs Hausdorff and mean absolute boundary distance.
pub fn brute_he_mae(a: &BinaryMask, g: &BinaryMask) -> (f64, f64) {
    let (ba, bg) = (brute_boundary(a), brute_boundary(g));
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> Vec<f64> {
        from.iter()
            .map(|p| to.iter().map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let ag = directed(&ba, &bg);
    let ga = directed(&bg, &ba);
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (max(&ag).max(max(&ga)), (mean(&ag) + mean(&ga)) / 2.0)
}

pub fn brute_longest_axis(m: &BinaryMask) -> f64 {
    let pts = m.points();
    let mut best = 0i64;
    for p in &pts {
        for q in &pts {
            best = best.max((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2));
        }
    }
    (best as f64).sqrt()
}
