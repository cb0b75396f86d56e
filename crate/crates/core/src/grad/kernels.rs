//! Forward and backward kernels for every primitive operation.
//!
//! All loops are plain and sequential with a fixed summation order, so a
//! given input always produces bitwise-identical output. Short inner
//! products accumulate in the element type; reductions that can exceed a
//! few thousand terms (means, per-channel sums, the L1 loss) accumulate
//! in f64 regardless of the element type.

use super::scalar::Scalar;

/// Dot product with eight parallel accumulators reduced in a fixed order:
/// breaks the serial FP dependency chain so the loop vectorizes, while
/// keeping the summation order deterministic.
#[inline]
pub(crate) fn dot8<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::ZERO; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    let mut tail = T::ZERO;
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

// ── matmul ───────────────────────────────────────────────────────────

/// out[m,n] = a[m,k] · b[k,n]
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    out.fill(T::ZERO);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// da[m,k] += dout[m,n] · bᵀ[n,k]
pub fn matmul_back_a<T: Scalar>(dout: &[T], b: &[T], m: usize, k: usize, n: usize, da: &mut [T]) {
    for i in 0..m {
        let d_row = &dout[i * n..(i + 1) * n];
        let da_row = &mut da[i * k..(i + 1) * k];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            da_row[p] = da_row[p] + dot8(d_row, b_row);
        }
    }
}

/// db[k,n] += aᵀ[k,m] · dout[m,n]
pub fn matmul_back_b<T: Scalar>(dout: &[T], a: &[T], m: usize, k: usize, n: usize, db: &mut [T]) {
    for i in 0..m {
        let d_row = &dout[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            let db_row = &mut db[p * n..(p + 1) * n];
            for (o, &dv) in db_row.iter_mut().zip(d_row) {
                *o = *o + av * dv;
            }
        }
    }
}

// ── 2-D convolution ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvDims {
    pub fn h_out(&self) -> usize {
        (self.h_in + 2 * self.pad - self.kh) / self.stride + 1
    }
    pub fn w_out(&self) -> usize {
        (self.w_in + 2 * self.pad - self.kw) / self.stride + 1
    }
}

/// Zero-padded 2-D convolution, input (C_in,H,W), kernel (C_out,C_in,kh,kw).
/// Each output row accumulates in a local buffer while the contributing
/// input rows are hot, and the inner loops run over bounds-free subslices
/// so they vectorize.
pub fn conv2d<T: Scalar>(input: &[T], kernel: &[T], d: ConvDims, out: &mut [T]) {
    let (ho, wo) = (d.h_out(), d.w_out());
    let mut acc = vec![T::ZERO; wo];
    for co in 0..d.c_out {
        for oh in 0..ho {
            acc.fill(T::ZERO);
            for ci in 0..d.c_in {
                let in_plane = &input[ci * d.h_in * d.w_in..(ci + 1) * d.h_in * d.w_in];
                let k_base = (co * d.c_in + ci) * d.kh * d.kw;
                for kh in 0..d.kh {
                    let ih = (oh * d.stride + kh) as isize - d.pad as isize;
                    if ih < 0 || ih >= d.h_in as isize {
                        continue;
                    }
                    let row = &in_plane[ih as usize * d.w_in..(ih as usize + 1) * d.w_in];
                    for kw in 0..d.kw {
                        let kv = kernel[k_base + kh * d.kw + kw];
                        let (lo, hi) = ow_range(kw, d.pad, d.stride, d.w_in, wo);
                        if lo >= hi {
                            continue;
                        }
                        let iw0 = lo * d.stride + kw - d.pad;
                        let src = &row[iw0..];
                        if d.stride == 1 {
                            for (o, &v) in acc[lo..hi].iter_mut().zip(src) {
                                *o = *o + kv * v;
                            }
                        } else {
                            for (o, &v) in acc[lo..hi].iter_mut().zip(src.iter().step_by(d.stride))
                            {
                                *o = *o + kv * v;
                            }
                        }
                    }
                }
            }
            out[(co * ho + oh) * wo..(co * ho + oh + 1) * wo].copy_from_slice(&acc);
        }
    }
}

/// d_input for conv2d: each input row accumulates locally over every
/// (c_out, kh, kw) tap that touches it.
pub fn conv2d_back_input<T: Scalar>(dout: &[T], kernel: &[T], d: ConvDims, din: &mut [T]) {
    let (ho, wo) = (d.h_out(), d.w_out());
    let mut acc = vec![T::ZERO; d.w_in];
    for ci in 0..d.c_in {
        let din_plane = &mut din[ci * d.h_in * d.w_in..(ci + 1) * d.h_in * d.w_in];
        for ih in 0..d.h_in {
            acc.fill(T::ZERO);
            for co in 0..d.c_out {
                let dout_plane = &dout[co * ho * wo..(co + 1) * ho * wo];
                let k_base = (co * d.c_in + ci) * d.kh * d.kw;
                for kh in 0..d.kh {
                    // oh·stride = ih + pad − kh must be a valid multiple
                    let num = ih as isize + d.pad as isize - kh as isize;
                    if num < 0 || num as usize % d.stride != 0 {
                        continue;
                    }
                    let oh = num as usize / d.stride;
                    if oh >= ho {
                        continue;
                    }
                    let dout_row = &dout_plane[oh * wo..(oh + 1) * wo];
                    for kw in 0..d.kw {
                        let kv = kernel[k_base + kh * d.kw + kw];
                        let (lo, hi) = ow_range(kw, d.pad, d.stride, d.w_in, wo);
                        if lo >= hi {
                            continue;
                        }
                        let iw0 = lo * d.stride + kw - d.pad;
                        let ups = &dout_row[lo..hi];
                        if d.stride == 1 {
                            for (a, &up) in acc[iw0..iw0 + (hi - lo)].iter_mut().zip(ups) {
                                *a = *a + kv * up;
                            }
                        } else {
                            for (a, &up) in acc[iw0..].iter_mut().step_by(d.stride).zip(ups) {
                                *a = *a + kv * up;
                            }
                        }
                    }
                }
            }
            let row = &mut din_plane[ih * d.w_in..(ih + 1) * d.w_in];
            for (r, &a) in row.iter_mut().zip(&acc) {
                *r = *r + a;
            }
        }
    }
}

/// d_kernel for conv2d: per output channel, all of one input channel's
/// taps accumulate while its rows are hot.
pub fn conv2d_back_kernel<T: Scalar>(dout: &[T], input: &[T], d: ConvDims, dk: &mut [T]) {
    let (ho, wo) = (d.h_out(), d.w_out());
    let taps = d.kh * d.kw;
    let mut acc = vec![T::ZERO; d.c_in * taps];
    for co in 0..d.c_out {
        acc.fill(T::ZERO);
        let dout_plane = &dout[co * ho * wo..(co + 1) * ho * wo];
        for oh in 0..ho {
            let dout_row = &dout_plane[oh * wo..(oh + 1) * wo];
            for ci in 0..d.c_in {
                let in_plane = &input[ci * d.h_in * d.w_in..(ci + 1) * d.h_in * d.w_in];
                for kh in 0..d.kh {
                    let ih = (oh * d.stride + kh) as isize - d.pad as isize;
                    if ih < 0 || ih >= d.h_in as isize {
                        continue;
                    }
                    let in_row = &in_plane[ih as usize * d.w_in..(ih as usize + 1) * d.w_in];
                    for kw in 0..d.kw {
                        let (lo, hi) = ow_range(kw, d.pad, d.stride, d.w_in, wo);
                        if lo >= hi {
                            continue;
                        }
                        let iw0 = lo * d.stride + kw - d.pad;
                        let slot = ci * taps + kh * d.kw + kw;
                        if d.stride == 1 {
                            acc[slot] =
                                acc[slot] + dot8(&dout_row[lo..hi], &in_row[iw0..iw0 + (hi - lo)]);
                        } else {
                            let mut s = T::ZERO;
                            for (&up, &v) in
                                dout_row[lo..hi].iter().zip(in_row[iw0..].iter().step_by(d.stride))
                            {
                                s = s + up * v;
                            }
                            acc[slot] = acc[slot] + s;
                        }
                    }
                }
            }
        }
        let dst = &mut dk[co * d.c_in * taps..(co + 1) * d.c_in * taps];
        for (k, &a) in dst.iter_mut().zip(&acc) {
            *k = *k + a;
        }
    }
}

/// Valid output-column range for a kernel column: every ow in [lo, hi)
/// reads iw = ow·stride + kw − pad inside [0, w_in).
#[inline]
fn ow_range(kw: usize, pad: usize, stride: usize, w_in: usize, wo: usize) -> (usize, usize) {
    let lo = if kw >= pad { 0 } else { (pad - kw).div_ceil(stride) };
    let top = w_in + pad;
    if top <= kw {
        return (0, 0);
    }
    let hi = (((top - 1 - kw) / stride) + 1).min(wo);
    (lo, hi.max(lo))
}

// ── elementwise and broadcast ────────────────────────────────────────

pub fn bias_add<T: Scalar>(x: &[T], bias: &[T], block: usize, out: &mut [T]) {
    for (c, &b) in bias.iter().enumerate() {
        let xs = &x[c * block..(c + 1) * block];
        let os = &mut out[c * block..(c + 1) * block];
        for (o, &v) in os.iter_mut().zip(xs) {
            *o = v + b;
        }
    }
}

/// d_bias[c] += Σ_block dout  (f64 accumulation: blocks run into the tens
/// of thousands of terms)
pub fn bias_add_back_bias<T: Scalar>(dout: &[T], block: usize, dbias: &mut [T]) {
    for (c, db) in dbias.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for &v in &dout[c * block..(c + 1) * block] {
            acc += v.to_f64();
        }
        *db = *db + T::from_f64(acc);
    }
}

pub fn relu<T: Scalar>(x: &[T], out: &mut [T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = if v > T::ZERO { v } else { T::ZERO };
    }
}

pub fn relu_back<T: Scalar>(dout: &[T], x: &[T], dx: &mut [T]) {
    for ((d, &up), &v) in dx.iter_mut().zip(dout).zip(x) {
        if v > T::ZERO {
            *d = *d + up;
        }
    }
}

pub fn sigmoid<T: Scalar>(x: &[T], out: &mut [T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = T::ONE / (T::ONE + (-v).exp());
    }
}

/// dx += dout · y(1−y), where y is the forward output.
pub fn sigmoid_back<T: Scalar>(dout: &[T], y: &[T], dx: &mut [T]) {
    for ((d, &up), &yv) in dx.iter_mut().zip(dout).zip(y) {
        *d = *d + up * yv * (T::ONE - yv);
    }
}

pub fn add<T: Scalar>(a: &[T], b: &[T], out: &mut [T]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x + y;
    }
}

pub fn mul<T: Scalar>(a: &[T], b: &[T], out: &mut [T]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x * y;
    }
}

pub fn mul_back<T: Scalar>(dout: &[T], other: &[T], dx: &mut [T]) {
    for ((d, &up), &o) in dx.iter_mut().zip(dout).zip(other) {
        *d = *d + up * o;
    }
}

// ── feature-wise affine modulation ───────────────────────────────────

/// out[c,h,w] = x[c,h,w]·scale[c] + shift[c]
pub fn film<T: Scalar>(x: &[T], scale: &[T], shift: &[T], block: usize, out: &mut [T]) {
    for c in 0..scale.len() {
        let (s, t) = (scale[c], shift[c]);
        let xs = &x[c * block..(c + 1) * block];
        let os = &mut out[c * block..(c + 1) * block];
        for (o, &v) in os.iter_mut().zip(xs) {
            *o = v * s + t;
        }
    }
}

pub fn film_back<T: Scalar>(
    dout: &[T],
    x: &[T],
    scale: &[T],
    block: usize,
    dx: Option<&mut [T]>,
    dscale: Option<&mut [T]>,
    dshift: Option<&mut [T]>,
) {
    if let Some(dx) = dx {
        for c in 0..scale.len() {
            let s = scale[c];
            let ds = &mut dx[c * block..(c + 1) * block];
            let ups = &dout[c * block..(c + 1) * block];
            for (d, &up) in ds.iter_mut().zip(ups) {
                *d = *d + up * s;
            }
        }
    }
    if let Some(dscale) = dscale {
        for (c, d) in dscale.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            let xs = &x[c * block..(c + 1) * block];
            let ups = &dout[c * block..(c + 1) * block];
            for (&up, &v) in ups.iter().zip(xs) {
                acc += up.to_f64() * v.to_f64();
            }
            *d = *d + T::from_f64(acc);
        }
    }
    if let Some(dshift) = dshift {
        for (c, d) in dshift.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for &up in &dout[c * block..(c + 1) * block] {
                acc += up.to_f64();
            }
            *d = *d + T::from_f64(acc);
        }
    }
}

// ── reductions ───────────────────────────────────────────────────────

/// Per-channel mean over the trailing block (time-frequency positions).
pub fn global_mean<T: Scalar>(x: &[T], block: usize, out: &mut [T]) {
    for (c, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for &v in &x[c * block..(c + 1) * block] {
            acc += v.to_f64();
        }
        *o = T::from_f64(acc / block as f64);
    }
}

pub fn global_mean_back<T: Scalar>(dout: &[T], block: usize, dx: &mut [T]) {
    let inv = 1.0 / block as f64;
    for (c, &up) in dout.iter().enumerate() {
        let g = T::from_f64(up.to_f64() * inv);
        for d in &mut dx[c * block..(c + 1) * block] {
            *d = *d + g;
        }
    }
}

/// mean(|a − b|), f64 accumulation.
pub fn mean_abs_err<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += (x - y).to_f64().abs();
    }
    T::from_f64(acc / a.len() as f64)
}

/// Subgradient of mean|a−b|: sign(a−b)/n into da, −sign(a−b)/n into db.
/// The subgradient at a == b is taken as zero.
pub fn mean_abs_err_back<T: Scalar>(
    up: T,
    a: &[T],
    b: &[T],
    da: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let scale = up.to_f64() / a.len() as f64;
    if let Some(da) = da {
        for ((d, &x), &y) in da.iter_mut().zip(a).zip(b) {
            let s = sign((x - y).to_f64());
            *d = *d + T::from_f64(s * scale);
        }
    }
    if let Some(db) = db {
        for ((d, &x), &y) in db.iter_mut().zip(a).zip(b) {
            let s = sign((x - y).to_f64());
            *d = *d - T::from_f64(s * scale);
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Numerically stable −log softmax(logits)[target].
pub fn softmax_xent<T: Scalar>(logits: &[T], target: usize) -> T {
    let mut max = f64::NEG_INFINITY;
    for &v in logits {
        max = max.max(v.to_f64());
    }
    let mut sum = 0.0f64;
    for &v in logits {
        sum += (v.to_f64() - max).exp();
    }
    let lse = max + sum.ln();
    T::from_f64(lse - logits[target].to_f64())
}

pub fn softmax_xent_back<T: Scalar>(up: T, logits: &[T], target: usize, dx: &mut [T]) {
    let mut max = f64::NEG_INFINITY;
    for &v in logits {
        max = max.max(v.to_f64());
    }
    let mut sum = 0.0f64;
    for &v in logits {
        sum += (v.to_f64() - max).exp();
    }
    let u = up.to_f64();
    for (i, (d, &v)) in dx.iter_mut().zip(logits).enumerate() {
        let p = (v.to_f64() - max).exp() / sum;
        let onehot = if i == target { 1.0 } else { 0.0 };
        *d = *d + T::from_f64(u * (p - onehot));
    }
}

// ── shape plumbing ───────────────────────────────────────────────────

/// Nearest-neighbour 2x upsampling: (C,H,W) → (C,2H,2W).
pub fn upsample2x<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, out: &mut [T]) {
    let (h2, w2) = (2 * h, 2 * w);
    for ci in 0..c {
        for hi in 0..h {
            let src = &x[(ci * h + hi) * w..(ci * h + hi + 1) * w];
            for dh in 0..2 {
                let row = &mut out[(ci * h2 + 2 * hi + dh) * w2..(ci * h2 + 2 * hi + dh + 1) * w2];
                for (wi, &v) in src.iter().enumerate() {
                    row[2 * wi] = v;
                    row[2 * wi + 1] = v;
                }
            }
        }
    }
}

pub fn upsample2x_back<T: Scalar>(dout: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let (h2, w2) = (2 * h, 2 * w);
    for ci in 0..c {
        for hi in 0..h {
            let dst = &mut dx[(ci * h + hi) * w..(ci * h + hi + 1) * w];
            for dh in 0..2 {
                let row = &dout[(ci * h2 + 2 * hi + dh) * w2..(ci * h2 + 2 * hi + dh + 1) * w2];
                for (wi, d) in dst.iter_mut().enumerate() {
                    *d = *d + row[2 * wi] + row[2 * wi + 1];
                }
            }
        }
    }
}

/// Top-left crop: (C,H,W) → (C,h,w).
pub fn crop2d<T: Scalar>(x: &[T], c: usize, h_in: usize, w_in: usize, h: usize, w: usize, out: &mut [T]) {
    for ci in 0..c {
        for hi in 0..h {
            let src = &x[(ci * h_in + hi) * w_in..(ci * h_in + hi) * w_in + w];
            out[(ci * h + hi) * w..(ci * h + hi + 1) * w].copy_from_slice(src);
        }
    }
}

pub fn crop2d_back<T: Scalar>(dout: &[T], c: usize, h_in: usize, w_in: usize, h: usize, w: usize, dx: &mut [T]) {
    for ci in 0..c {
        for hi in 0..h {
            let up = &dout[(ci * h + hi) * w..(ci * h + hi + 1) * w];
            let dst = &mut dx[(ci * h_in + hi) * w_in..(ci * h_in + hi) * w_in + w];
            for (d, &u) in dst.iter_mut().zip(up) {
                *d = *d + u;
            }
        }
    }
}

// ── overlap-add synthesis fold ───────────────────────────────────────

/// Overlap-add of time-domain frames (F, frame_len) placed at multiples of
/// `hop` on a padded timeline, normalised by `norm` (the precomputed
/// squared-window overlap) and sliced to [offset, offset+out_len).
pub fn overlap_add<T: Scalar>(
    frames: &[T],
    n_frames: usize,
    frame_len: usize,
    hop: usize,
    norm: &[f32],
    offset: usize,
    out_len: usize,
    out: &mut [T],
) {
    let padded = norm.len();
    let mut ola = vec![T::ZERO; padded];
    for f in 0..n_frames {
        let base = f * hop;
        let frame = &frames[f * frame_len..(f + 1) * frame_len];
        for (j, &v) in frame.iter().enumerate() {
            let t = base + j;
            if t < padded {
                ola[t] = ola[t] + v;
            }
        }
    }
    for (i, o) in out.iter_mut().enumerate().take(out_len) {
        let t = offset + i;
        *o = ola[t] / T::from_f32(norm[t]);
    }
}

pub fn overlap_add_back<T: Scalar>(
    dout: &[T],
    n_frames: usize,
    frame_len: usize,
    hop: usize,
    norm: &[f32],
    offset: usize,
    out_len: usize,
    dframes: &mut [T],
) {
    let end = offset + out_len;
    for f in 0..n_frames {
        let base = f * hop;
        let dst = &mut dframes[f * frame_len..(f + 1) * frame_len];
        for (j, d) in dst.iter_mut().enumerate() {
            let t = base + j;
            if t >= offset && t < end {
                *d = *d + dout[t - offset] / T::from_f32(norm[t]);
            }
        }
    }
}
