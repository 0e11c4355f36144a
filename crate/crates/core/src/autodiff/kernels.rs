//! Forward and backward numerical kernels on NCHW tensors.
//!
//! Convolutions lower to GEMM through a row-chunked im2col buffer so peak
//! scratch memory stays bounded at 256x256 inputs. Work is split per batch
//! sample; parameter gradients are summed over samples in index order.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

/// Upper bound on im2col scratch elements per sample (2 MiB of f64).
const COLS_BUDGET: usize = 1 << 18;

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: A out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: B out of bounds");
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: C out of bounds");
    // SAFETY: every index touched by the kernel is bounded by the asserts
    // above, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
}

impl ConvGeom {
    fn pad(&self) -> usize {
        (self.k - 1) / 2
    }
    fn kk(&self) -> usize {
        self.cin * self.k * self.k
    }
    fn rows_per_chunk(&self) -> usize {
        (COLS_BUDGET / (self.kk() * self.w)).clamp(1, self.h)
    }
}

/// Fills `cols` (`cin*k*k` rows by `rows*w` columns) for output rows `r0..r0+rows`.
fn im2col(x: &[f64], g: ConvGeom, r0: usize, rows: usize, cols: &mut [f64]) {
    let (k, w, h, p) = (g.k, g.w, g.h, g.pad());
    let n = rows * w;
    for ci in 0..g.cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * n..][..n];
                for r in 0..rows {
                    let dst = &mut row[r * w..(r + 1) * w];
                    let iy = (r0 + r + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    // Output column c reads input column c + kx - p.
                    let lo = p.saturating_sub(kx).min(w);
                    let hi = (w + p).saturating_sub(kx).min(w);
                    dst[..lo].fill(0.0);
                    if hi > lo {
                        dst[lo..hi].copy_from_slice(&src[lo + kx - p..hi + kx - p]);
                    }
                    dst[hi.max(lo)..].fill(0.0);
                }
            }
        }
    }
}

/// Scatter-adds `cols` back into `dx`; the adjoint of [`im2col`].
fn col2im(cols: &[f64], g: ConvGeom, r0: usize, rows: usize, dx: &mut [f64]) {
    let (k, w, h, p) = (g.k, g.w, g.h, g.pad());
    let n = rows * w;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * n..][..n];
                for r in 0..rows {
                    let iy = (r0 + r + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &row[r * w..(r + 1) * w];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let lo = p.saturating_sub(kx).min(w);
                    let hi = (w + p).saturating_sub(kx).min(w);
                    for c in lo..hi {
                        dst[c + kx - p] += src[c];
                    }
                }
            }
        }
    }
}

fn check_conv(x: &Tensor, wt: &Tensor, b: &Tensor) -> Result<([usize; 4], ConvGeom)> {
    let [bs, cin, h, w] = x.dims4("conv2d")?;
    let [cout, wcin, k, k2] = wt.dims4("conv2d")?;
    if k != k2 || k % 2 == 0 {
        return Err(Error::shape("conv2d", format!("kernel must be square and odd, got {k}x{k2}")));
    }
    if wcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!("channel axis: input has {cin}, weights expect {wcin}"),
        ));
    }
    if b.shape() != [cout] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?}, expected [{cout}]", b.shape()),
        ));
    }
    Ok(([bs, cin, h, w], ConvGeom { cin, cout, h, w, k }))
}

/// Same-padded stride-1 convolution. Weights are `[cout, cin, k, k]`, `k` odd.
pub fn conv2d(x: &Tensor, wt: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ([bs, _, h, w], g) = check_conv(x, wt, b)?;
    let hw = h * w;
    let in_len = g.cin * hw;
    let mut out = vec![0.0; bs * g.cout * hw];
    let (xd, wd, bd) = (x.data(), wt.data(), b.data());
    par::for_each_chunk_mut(&mut out, g.cout * hw, |s, out_s| {
        let x_s = &xd[s * in_len..(s + 1) * in_len];
        if g.k == 1 {
            gemm(g.cout, g.cin, hw, wd, g.cin, 1, x_s, hw, 1, 0.0, out_s, hw, 1);
        } else {
            let rpc = g.rows_per_chunk();
            let mut cols = vec![0.0; g.kk() * rpc * w];
            let mut r0 = 0;
            while r0 < h {
                let rows = rpc.min(h - r0);
                let n = rows * w;
                im2col(x_s, g, r0, rows, &mut cols);
                gemm(g.cout, g.kk(), n, wd, g.kk(), 1, &cols, n, 1, 0.0, &mut out_s[r0 * w..], hw, 1);
                r0 += rows;
            }
        }
        for (co, plane) in out_s.chunks_mut(hw).enumerate() {
            let bias = bd[co];
            plane.iter_mut().for_each(|v| *v += bias);
        }
    });
    Tensor::new(vec![bs, g.cout, h, w], out)
}

/// Gradients of a convolution-like layer with respect to input, weight and bias.
pub struct ParamGrads {
    pub dx: Option<Tensor>,
    pub dw: Tensor,
    pub db: Tensor,
}

/// Sums per-sample `(dw, db)` partials in sample order.
fn reduce_partials(parts: Vec<(Vec<f64>, Vec<f64>)>, w_shape: &[usize], b_len: usize) -> Result<(Tensor, Tensor)> {
    let mut dw = vec![0.0; w_shape.iter().product()];
    let mut db = vec![0.0; b_len];
    for (pw, pb) in parts {
        dw.iter_mut().zip(&pw).for_each(|(a, v)| *a += v);
        db.iter_mut().zip(&pb).for_each(|(a, v)| *a += v);
    }
    Ok((Tensor::new(w_shape.to_vec(), dw)?, Tensor::new(vec![b_len], db)?))
}

/// Given upstream `dy`, returns `(dx, dw, db)`; `dx` only when `need_dx`.
pub fn conv2d_backward(x: &Tensor, wt: &Tensor, b: &Tensor, dy: &Tensor, need_dx: bool) -> Result<ParamGrads> {
    let ([bs, _, h, w], g) = check_conv(x, wt, b)?;
    let hw = h * w;
    let in_len = g.cin * hw;
    let out_len = g.cout * hw;
    let (xd, wd, dyd) = (x.data(), wt.data(), dy.data());
    let kk = g.kk();

    let sample = |s: usize, dx_s: Option<&mut [f64]>| -> (Vec<f64>, Vec<f64>) {
        let x_s = &xd[s * in_len..(s + 1) * in_len];
        let dy_s = &dyd[s * out_len..(s + 1) * out_len];
        let mut dw = vec![0.0; g.cout * kk];
        let db: Vec<f64> = dy_s.chunks(hw).map(|p| p.iter().sum()).collect();
        if g.k == 1 {
            gemm(g.cout, hw, g.cin, dy_s, hw, 1, x_s, 1, hw, 0.0, &mut dw, g.cin, 1);
            if let Some(dx_s) = dx_s {
                gemm(g.cin, g.cout, hw, wd, 1, g.cin, dy_s, hw, 1, 0.0, dx_s, hw, 1);
            }
        } else {
            let rpc = g.rows_per_chunk();
            let mut cols = vec![0.0; kk * rpc * w];
            let mut dcols = if dx_s.is_some() { vec![0.0; kk * rpc * w] } else { Vec::new() };
            let mut dx_s = dx_s;
            let mut r0 = 0;
            while r0 < h {
                let rows = rpc.min(h - r0);
                let n = rows * w;
                im2col(x_s, g, r0, rows, &mut cols);
                gemm(g.cout, n, kk, &dy_s[r0 * w..], hw, 1, &cols, 1, n, 1.0, &mut dw, kk, 1);
                if let Some(dx_s) = dx_s.as_deref_mut() {
                    gemm(kk, g.cout, n, wd, 1, kk, &dy_s[r0 * w..], hw, 1, 0.0, &mut dcols, n, 1);
                    col2im(&dcols, g, r0, rows, dx_s);
                }
                r0 += rows;
            }
        }
        (dw, db)
    };

    let (parts, dx) = if need_dx {
        let mut dx = vec![0.0; bs * in_len];
        let parts = par::map_chunks_mut(&mut dx, in_len, |s, dx_s| sample(s, Some(dx_s)));
        (parts, Some(Tensor::new(x.shape().to_vec(), dx)?))
    } else {
        (par::map_range(bs, |s| sample(s, None)), None)
    };
    let (dw, db) = reduce_partials(parts, wt.shape(), g.cout)?;
    Ok(ParamGrads { dx, dw, db })
}

fn check_deconv(x: &Tensor, wt: &Tensor, b: &Tensor) -> Result<([usize; 4], usize)> {
    let [bs, cin, h, w] = x.dims4("deconv2d")?;
    let [wcin, cout, kh, kw] = wt.dims4("deconv2d")?;
    if (kh, kw) != (2, 2) {
        return Err(Error::shape("deconv2d", format!("kernel must be 2x2, got {kh}x{kw}")));
    }
    if wcin != cin {
        return Err(Error::shape(
            "deconv2d",
            format!("channel axis: input has {cin}, weights expect {wcin}"),
        ));
    }
    if b.shape() != [cout] {
        return Err(Error::shape(
            "deconv2d",
            format!("bias shape {:?}, expected [{cout}]", b.shape()),
        ));
    }
    Ok(([bs, cin, h, w], cout))
}

/// Transposed convolution, 2x2 kernel, stride 2, no padding: exact 2x upsampling.
/// Weights are `[cin, cout, 2, 2]`.
pub fn deconv2d(x: &Tensor, wt: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ([bs, cin, h, w], cout) = check_deconv(x, wt, b)?;
    let hw = h * w;
    let c4 = cout * 4;
    let (ow, ohw) = (2 * w, 4 * hw);
    let mut out = vec![0.0; bs * cout * ohw];
    let (xd, wd, bd) = (x.data(), wt.data(), b.data());
    par::for_each_chunk_mut(&mut out, cout * ohw, |s, out_s| {
        let x_s = &xd[s * cin * hw..(s + 1) * cin * hw];
        let mut tmp = vec![0.0; c4 * hw];
        gemm(c4, cin, hw, wd, 1, c4, x_s, hw, 1, 0.0, &mut tmp, hw, 1);
        for co in 0..cout {
            let plane = &mut out_s[co * ohw..(co + 1) * ohw];
            for tap in 0..4 {
                let (dy, dx) = (tap / 2, tap % 2);
                let src = &tmp[(co * 4 + tap) * hw..][..hw];
                for i in 0..h {
                    for j in 0..w {
                        plane[(2 * i + dy) * ow + 2 * j + dx] = src[i * w + j] + bd[co];
                    }
                }
            }
        }
    });
    Tensor::new(vec![bs, cout, 2 * h, 2 * w], out)
}

pub fn deconv2d_backward(x: &Tensor, wt: &Tensor, b: &Tensor, dy: &Tensor, need_dx: bool) -> Result<ParamGrads> {
    let ([bs, cin, h, w], cout) = check_deconv(x, wt, b)?;
    let hw = h * w;
    let c4 = cout * 4;
    let (ow, ohw) = (2 * w, 4 * hw);
    let (xd, wd, dyd) = (x.data(), wt.data(), dy.data());

    let sample = |s: usize, dx_s: Option<&mut [f64]>| -> (Vec<f64>, Vec<f64>) {
        let x_s = &xd[s * cin * hw..(s + 1) * cin * hw];
        let dy_s = &dyd[s * cout * ohw..(s + 1) * cout * ohw];
        let mut dtmp = vec![0.0; c4 * hw];
        for co in 0..cout {
            let plane = &dy_s[co * ohw..(co + 1) * ohw];
            for tap in 0..4 {
                let (ty, tx) = (tap / 2, tap % 2);
                let dst = &mut dtmp[(co * 4 + tap) * hw..][..hw];
                for i in 0..h {
                    for j in 0..w {
                        dst[i * w + j] = plane[(2 * i + ty) * ow + 2 * j + tx];
                    }
                }
            }
        }
        let db: Vec<f64> = dtmp.chunks(4 * hw).map(|c| c.iter().sum()).collect();
        let mut dw = vec![0.0; cin * c4];
        gemm(cin, hw, c4, x_s, hw, 1, &dtmp, 1, hw, 0.0, &mut dw, c4, 1);
        if let Some(dx_s) = dx_s {
            gemm(cin, c4, hw, wd, c4, 1, &dtmp, hw, 1, 0.0, dx_s, hw, 1);
        }
        (dw, db)
    };

    let (parts, dx) = if need_dx {
        let mut dx = vec![0.0; bs * cin * hw];
        let parts = par::map_chunks_mut(&mut dx, cin * hw, |s, dx_s| sample(s, Some(dx_s)));
        (parts, Some(Tensor::new(x.shape().to_vec(), dx)?))
    } else {
        (par::map_range(bs, |s| sample(s, None)), None)
    };
    let (dw, db) = reduce_partials(parts, wt.shape(), cout)?;
    Ok(ParamGrads { dx, dw, db })
}

/// 2x2 stride-2 max pooling. Also returns, per output element, the flat input
/// index of the first maximal element in row-major window order. A NaN in a
/// window wins, so non-finite values are never hidden.
pub fn maxpool2d(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let [bs, c, h, w] = x.dims4("maxpool2d")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("maxpool2d", format!("spatial extent {h}x{w} is not even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(bs * c * oh * ow);
    let mut arg = Vec::with_capacity(bs * c * oh * ow);
    for plane in 0..bs * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for idx in [best + 1, best + w, best + w + 1] {
                    if xd[idx] > xd[best] || (xd[idx].is_nan() && !xd[best].is_nan()) {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(vec![bs, c, oh, ow], out)?, arg))
}

/// Stacks tensors along the channel axis in argument order.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
    let [bs, _, h, w] = first.dims4("concat")?;
    let mut total = 0;
    for t in xs {
        let [tb, tc, th, tw] = t.dims4("concat")?;
        if (tb, th, tw) != (bs, h, w) {
            return Err(Error::shape(
                "concat",
                format!("batch/spatial axes {:?} vs {:?}", (tb, th, tw), (bs, h, w)),
            ));
        }
        total += tc;
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(bs * total * hw);
    for s in 0..bs {
        for t in xs {
            let c = t.shape()[1];
            out.extend_from_slice(&t.data()[s * c * hw..(s + 1) * c * hw]);
        }
    }
    Tensor::new(vec![bs, total, h, w], out)
}

/// Channels `start..start+len` of an NCHW tensor.
pub fn slice_channels(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let [bs, c, h, w] = x.dims4("slice_channels")?;
    if len == 0 || start + len > c {
        return Err(Error::shape("slice_channels", format!("channels {start}..{} of {c}", start + len)));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(bs * len * hw);
    for s in 0..bs {
        out.extend_from_slice(&x.data()[(s * c + start) * hw..(s * c + start + len) * hw]);
    }
    Tensor::new(vec![bs, len, h, w], out)
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
