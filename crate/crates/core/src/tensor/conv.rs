//! Convolution kernels over `[H, W, C]` images via blocked im2col + GEMM.

use super::{gemm, gemm_nt, gemm_tn};
use crate::error::{shape_err, Result};

/// Explicit zero padding in pixels on each side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pad2d {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Pad2d {
    pub fn uniform(p: usize) -> Self {
        Pad2d {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output size `ceil(in / stride)`; the odd pixel of an uneven total goes
    /// to the bottom/right.
    Same,
    Valid,
    Explicit(Pad2d),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl Conv2dSpec {
    pub fn same() -> Self {
        Conv2dSpec {
            stride: 1,
            dilation: 1,
            padding: Padding::Same,
        }
    }

    pub fn valid() -> Self {
        Conv2dSpec {
            stride: 1,
            dilation: 1,
            padding: Padding::Valid,
        }
    }

    pub fn explicit(stride: usize, pad: Pad2d) -> Self {
        Conv2dSpec {
            stride,
            dilation: 1,
            padding: Padding::Explicit(pad),
        }
    }
}

/// Output length along one axis, `None` when the kernel does not fit.
pub fn conv_out_len(n: usize, k: usize, stride: usize, dilation: usize, before: usize, after: usize) -> Option<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = n + before + after;
    if padded < span {
        None
    } else {
        Some((padded - span) / stride + 1)
    }
}

fn same_pad(n: usize, k: usize, stride: usize, dilation: usize) -> (usize, usize) {
    let out = n.div_ceil(stride);
    let span = dilation * (k - 1) + 1;
    let total = ((out - 1) * stride + span).saturating_sub(n);
    (total / 2, total - total / 2)
}

/// Fully resolved geometry of one convolution from an `[h, w, cin]` image to
/// an `[ho, wo, cout]` image.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn resolve(input: &[usize], kernel: &[usize], spec: &Conv2dSpec) -> Result<Self> {
        if input.len() != 3 {
            return Err(shape_err!("conv input must be [H, W, C], got {input:?}"));
        }
        if kernel.len() != 4 {
            return Err(shape_err!("conv kernel must be [kh, kw, Cin, Cout], got {kernel:?}"));
        }
        if spec.stride == 0 || spec.dilation == 0 {
            return Err(shape_err!("stride and dilation must be >= 1"));
        }
        let (h, w, cin) = (input[0], input[1], input[2]);
        let (kh, kw, kcin, cout) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kcin != cin {
            return Err(shape_err!("kernel expects {kcin} input channels, input has {cin}"));
        }
        let pad = match spec.padding {
            Padding::Valid => Pad2d::default(),
            Padding::Explicit(p) => p,
            Padding::Same => {
                let (t, b) = same_pad(h, kh, spec.stride, spec.dilation);
                let (l, r) = same_pad(w, kw, spec.stride, spec.dilation);
                Pad2d {
                    top: t,
                    bottom: b,
                    left: l,
                    right: r,
                }
            }
        };
        let ho = conv_out_len(h, kh, spec.stride, spec.dilation, pad.top, pad.bottom);
        let wo = conv_out_len(w, kw, spec.stride, spec.dilation, pad.left, pad.right);
        match (ho, wo) {
            (Some(ho), Some(wo)) => Ok(ConvGeom {
                h,
                w,
                cin,
                kh,
                kw,
                cout,
                stride: spec.stride,
                dilation: spec.dilation,
                pad_top: pad.top,
                pad_left: pad.left,
                ho,
                wo,
            }),
            _ => Err(shape_err!(
                "kernel {kh}x{kw} (dilation {}) does not fit input {h}x{w} with padding {pad:?}",
                spec.dilation
            )),
        }
    }

    fn col_width(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn block_rows(&self) -> usize {
        let per_row = (self.wo * self.col_width()).max(1);
        ((1 << 21) / per_row).max(1)
    }
}

/// Kernel columns `[j0, j1)` that land inside the input for output column
/// `ow`, and the input column of `j0`.
fn valid_taps(g: &ConvGeom, ow: usize) -> (usize, usize, usize) {
    let base = (ow * g.stride) as isize - g.pad_left as isize;
    let d = g.dilation as isize;
    let mut j0 = 0;
    while j0 < g.kw && base + (j0 as isize) * d < 0 {
        j0 += 1;
    }
    let mut j1 = g.kw;
    while j1 > j0 && base + (j1 as isize - 1) * d >= g.w as isize {
        j1 -= 1;
    }
    let iw0 = (base + j0 as isize * d).max(0) as usize;
    (j0, j1, iw0)
}

fn im2col(x: &[f64], g: &ConvGeom, oh0: usize, oh1: usize, col: &mut [f64]) {
    let cw = g.col_width();
    let cin = g.cin;
    for oh in oh0..oh1 {
        for ow in 0..g.wo {
            let row = &mut col[((oh - oh0) * g.wo + ow) * cw..][..cw];
            let (j0, j1, iw0) = valid_taps(g, ow);
            for i in 0..g.kh {
                let ih = (oh * g.stride + i * g.dilation) as isize - g.pad_top as isize;
                let dst = &mut row[i * g.kw * cin..(i + 1) * g.kw * cin];
                if ih < 0 || ih as usize >= g.h || j0 >= j1 {
                    dst.fill(0.0);
                    continue;
                }
                dst[..j0 * cin].fill(0.0);
                dst[j1 * cin..].fill(0.0);
                let src0 = (ih as usize * g.w + iw0) * cin;
                if g.dilation == 1 {
                    dst[j0 * cin..j1 * cin].copy_from_slice(&x[src0..src0 + (j1 - j0) * cin]);
                } else {
                    for j in j0..j1 {
                        let s = src0 + (j - j0) * g.dilation * cin;
                        dst[j * cin..(j + 1) * cin].copy_from_slice(&x[s..s + cin]);
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], g: &ConvGeom, oh0: usize, oh1: usize, x: &mut [f64]) {
    let cw = g.col_width();
    let cin = g.cin;
    for oh in oh0..oh1 {
        for ow in 0..g.wo {
            let row = &col[((oh - oh0) * g.wo + ow) * cw..][..cw];
            let (j0, j1, iw0) = valid_taps(g, ow);
            if j0 >= j1 {
                continue;
            }
            for i in 0..g.kh {
                let ih = (oh * g.stride + i * g.dilation) as isize - g.pad_top as isize;
                if ih < 0 || ih as usize >= g.h {
                    continue;
                }
                let src = &row[i * g.kw * cin..(i + 1) * g.kw * cin];
                let dst0 = (ih as usize * g.w + iw0) * cin;
                if g.dilation == 1 {
                    let n = (j1 - j0) * cin;
                    for (d, s) in x[dst0..dst0 + n].iter_mut().zip(&src[j0 * cin..j1 * cin]) {
                        *d += s;
                    }
                } else {
                    for j in j0..j1 {
                        let d0 = dst0 + (j - j0) * g.dilation * cin;
                        for (d, s) in x[d0..d0 + cin].iter_mut().zip(&src[j * cin..(j + 1) * cin]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 kernels with few channels run faster as planar shifted
/// multiply-adds than through im2col + GEMM.
fn use_direct(g: &ConvGeom) -> bool {
    g.stride == 1 && g.dilation == 1 && g.cin * g.cout <= 64
}

fn to_planar(x: &[f64], pixels: usize, c: usize) -> Vec<f64> {
    let mut p = vec![0.0; x.len()];
    for (px, chunk) in x.chunks(c).enumerate() {
        for (ch, v) in chunk.iter().enumerate() {
            p[ch * pixels + px] = *v;
        }
    }
    p
}

fn from_planar(p: &[f64], pixels: usize, c: usize) -> Vec<f64> {
    let mut x = vec![0.0; p.len()];
    for ch in 0..c {
        for (px, v) in p[ch * pixels..(ch + 1) * pixels].iter().enumerate() {
            x[px * c + ch] = *v;
        }
    }
    x
}

/// Visits every (kernel tap, output row) pair that touches the input,
/// passing the input row, column shift and the valid output column range.
fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
    for i in 0..g.kh {
        for oh in 0..g.ho {
            let ih = (oh + i) as isize - g.pad_top as isize;
            if ih < 0 || ih as usize >= g.h {
                continue;
            }
            for j in 0..g.kw {
                let lo = g.pad_left.saturating_sub(j);
                let hi = (g.w + g.pad_left).saturating_sub(j).min(g.wo);
                if lo >= hi {
                    continue;
                }
                f(i, j, oh, ih as usize, lo, hi);
            }
        }
    }
}

fn direct_forward(x: &[f64], kernel: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ip, op) = (g.h * g.w, g.ho * g.wo);
    let xp = to_planar(x, ip, g.cin);
    let mut out = vec![0.0; op * g.cout];
    for co in 0..g.cout {
        out[co * op..(co + 1) * op].fill(bias[co]);
    }
    for_each_tap(g, |i, j, oh, ih, lo, hi| {
        let shift = lo + j - g.pad_left;
        for ci in 0..g.cin {
            let src = &xp[ci * ip + ih * g.w + shift..][..hi - lo];
            for co in 0..g.cout {
                let kv = kernel[((i * g.kw + j) * g.cin + ci) * g.cout + co];
                let dst = &mut out[co * op + oh * g.wo + lo..][..hi - lo];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += kv * s;
                }
            }
        }
    });
    from_planar(&out, op, g.cout)
}

/// Dot product with independent partial sums so the loop pipelines.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn direct_backward(
    x: &[f64],
    kernel: &[f64],
    dout: &[f64],
    g: &ConvGeom,
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (ip, op) = (g.h * g.w, g.ho * g.wo);
    let xp = to_planar(x, ip, g.cin);
    let dp = to_planar(dout, op, g.cout);
    let mut dk = vec![0.0; g.col_width() * g.cout];
    let db: Vec<f64> = (0..g.cout).map(|co| dp[co * op..(co + 1) * op].iter().sum()).collect();
    let mut dxp = need_dx.then(|| vec![0.0; ip * g.cin]);
    for_each_tap(g, |i, j, oh, ih, lo, hi| {
        let shift = lo + j - g.pad_left;
        for ci in 0..g.cin {
            let xrow = &xp[ci * ip + ih * g.w + shift..][..hi - lo];
            for co in 0..g.cout {
                let drow = &dp[co * op + oh * g.wo + lo..][..hi - lo];
                let kidx = ((i * g.kw + j) * g.cin + ci) * g.cout + co;
                dk[kidx] += dot(xrow, drow);
                if let Some(dxp) = dxp.as_mut() {
                    let kv = kernel[kidx];
                    let dst = &mut dxp[ci * ip + ih * g.w + shift..][..hi - lo];
                    for (d, s) in dst.iter_mut().zip(drow) {
                        *d += kv * s;
                    }
                }
            }
        }
    });
    (dxp.map(|p| from_planar(&p, ip, g.cin)), dk, db)
}

/// `y = conv(x, k) + b`. Kernel row-major `[kh, kw, cin, cout]` is already the
/// `[kh*kw*cin, cout]` matrix the im2col product needs.
pub(crate) fn conv2d_forward(x: &[f64], kernel: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    if use_direct(g) {
        return direct_forward(x, kernel, bias, g);
    }
    let cw = g.col_width();
    let mut out = vec![0.0; g.ho * g.wo * g.cout];
    let step = g.block_rows();
    let mut col = vec![0.0; step.min(g.ho) * g.wo * cw];
    let mut oh0 = 0;
    while oh0 < g.ho {
        let oh1 = (oh0 + step).min(g.ho);
        let rows = (oh1 - oh0) * g.wo;
        im2col(x, g, oh0, oh1, &mut col);
        let dst = &mut out[oh0 * g.wo * g.cout..oh1 * g.wo * g.cout];
        gemm(rows, cw, g.cout, &col, kernel, dst, false);
        oh0 = oh1;
    }
    for px in out.chunks_mut(g.cout) {
        for (v, b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
    out
}

/// Gradients of `conv2d_forward` w.r.t. input, kernel and bias.
pub(crate) fn conv2d_backward(
    x: &[f64],
    kernel: &[f64],
    dout: &[f64],
    g: &ConvGeom,
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    if use_direct(g) {
        return direct_backward(x, kernel, dout, g, need_dx);
    }
    let cw = g.col_width();
    let mut dk = vec![0.0; cw * g.cout];
    let mut db = vec![0.0; g.cout];
    for px in dout.chunks(g.cout) {
        for (d, v) in db.iter_mut().zip(px) {
            *d += v;
        }
    }
    let mut dx = need_dx.then(|| vec![0.0; g.h * g.w * g.cin]);
    let step = g.block_rows();
    let mut col = vec![0.0; step.min(g.ho) * g.wo * cw];
    let mut oh0 = 0;
    while oh0 < g.ho {
        let oh1 = (oh0 + step).min(g.ho);
        let rows = (oh1 - oh0) * g.wo;
        let dblock = &dout[oh0 * g.wo * g.cout..oh1 * g.wo * g.cout];
        im2col(x, g, oh0, oh1, &mut col);
        gemm_tn(cw, rows, g.cout, &col, dblock, &mut dk, true);
        if let Some(dx) = dx.as_mut() {
            gemm_nt(rows, g.cout, cw, dblock, kernel, &mut col, false);
            col2im(&col, g, oh0, oh1, dx);
        }
        oh0 = oh1;
    }
    (dx, dk, db)
}

/// Geometry of a transposed convolution, expressed as the forward
/// convolution it is the adjoint of (output image -> input image).
#[derive(Clone, Copy, Debug)]
pub(crate) struct TransposedGeom {
    pub conv: ConvGeom,
}

impl TransposedGeom {
    /// Output size per axis is `(n - 1) * stride - 2 * padding + k + output_padding`.
    pub fn resolve(
        input: &[usize],
        kernel: &[usize],
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self> {
        if input.len() != 3 || kernel.len() != 4 {
            return Err(shape_err!(
                "transposed conv needs [H, W, C] input and [kh, kw, Cin, Cout] kernel, got {input:?} / {kernel:?}"
            ));
        }
        if stride == 0 {
            return Err(shape_err!("stride must be >= 1"));
        }
        if output_padding >= stride && output_padding > 0 {
            return Err(shape_err!("output_padding {output_padding} must be < stride {stride}"));
        }
        let (h, w, cin) = (input[0], input[1], input[2]);
        let (kh, kw, kcin, cout) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kcin != cin {
            return Err(shape_err!("kernel expects {kcin} input channels, input has {cin}"));
        }
        let full_h = (h - 1) * stride + kh + output_padding;
        let full_w = (w - 1) * stride + kw + output_padding;
        if full_h <= 2 * padding || full_w <= 2 * padding {
            return Err(shape_err!("padding {padding} too large for transposed conv output"));
        }
        let ho = full_h - 2 * padding;
        let wo = full_w - 2 * padding;
        let conv = ConvGeom {
            h: ho,
            w: wo,
            cin: cout,
            kh,
            kw,
            cout: cin,
            stride,
            dilation: 1,
            pad_top: padding,
            pad_left: padding,
            ho: h,
            wo: w,
        };
        Ok(TransposedGeom { conv })
    }

    pub fn out_dims(&self) -> [usize; 3] {
        [self.conv.h, self.conv.w, self.conv.cin]
    }
}

/// Reorders `[kh, kw, cin, cout]` into the `[kh*kw*cout, cin]` matrix of the
/// adjoint convolution.
fn adjoint_kernel(kernel: &[f64], g: &ConvGeom) -> Vec<f64> {
    // g is the adjoint conv: g.cin = transposed cout, g.cout = transposed cin.
    let (tcin, tcout) = (g.cout, g.cin);
    let mut out = vec![0.0; kernel.len()];
    for ij in 0..g.kh * g.kw {
        for ci in 0..tcin {
            for co in 0..tcout {
                out[(ij * tcout + co) * tcin + ci] = kernel[(ij * tcin + ci) * tcout + co];
            }
        }
    }
    out
}

fn adjoint_kernel_back(adj: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (tcin, tcout) = (g.cout, g.cin);
    let mut out = vec![0.0; adj.len()];
    for ij in 0..g.kh * g.kw {
        for ci in 0..tcin {
            for co in 0..tcout {
                out[(ij * tcin + ci) * tcout + co] = adj[(ij * tcout + co) * tcin + ci];
            }
        }
    }
    out
}

pub(crate) fn transposed_forward(x: &[f64], kernel: &[f64], bias: &[f64], tg: &TransposedGeom) -> Vec<f64> {
    let g = &tg.conv;
    let cw = g.col_width();
    let kadj = adjoint_kernel(kernel, g);
    let mut out = vec![0.0; g.h * g.w * g.cin];
    let step = g.block_rows();
    let mut col = vec![0.0; step.min(g.ho) * g.wo * cw];
    let mut r0 = 0;
    while r0 < g.ho {
        let r1 = (r0 + step).min(g.ho);
        let rows = (r1 - r0) * g.wo;
        let xb = &x[r0 * g.wo * g.cout..r1 * g.wo * g.cout];
        gemm_nt(rows, g.cout, cw, xb, &kadj, &mut col, false);
        col2im(&col, g, r0, r1, &mut out);
        r0 = r1;
    }
    for px in out.chunks_mut(g.cin) {
        for (v, b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
    out
}

pub(crate) fn transposed_backward(
    x: &[f64],
    kernel: &[f64],
    dout: &[f64],
    tg: &TransposedGeom,
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let g = &tg.conv;
    let cw = g.col_width();
    let kadj = adjoint_kernel(kernel, g);
    let mut db = vec![0.0; g.cin];
    for px in dout.chunks(g.cin) {
        for (d, v) in db.iter_mut().zip(px) {
            *d += v;
        }
    }
    let mut dkadj = vec![0.0; kadj.len()];
    let mut dx = need_dx.then(|| vec![0.0; g.ho * g.wo * g.cout]);
    let step = g.block_rows();
    let mut col = vec![0.0; step.min(g.ho) * g.wo * cw];
    let mut r0 = 0;
    while r0 < g.ho {
        let r1 = (r0 + step).min(g.ho);
        let rows = (r1 - r0) * g.wo;
        im2col(dout, g, r0, r1, &mut col);
        let xb = &x[r0 * g.wo * g.cout..r1 * g.wo * g.cout];
        gemm_tn(cw, rows, g.cout, &col, xb, &mut dkadj, true);
        if let Some(dx) = dx.as_mut() {
            let dst = &mut dx[r0 * g.wo * g.cout..r1 * g.wo * g.cout];
            gemm(rows, cw, g.cout, &col, &kadj, dst, false);
        }
        r0 = r1;
    }
    (dx, adjoint_kernel_back(&dkadj, g), db)
}

pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

pub(crate) fn reflect_pad_forward(x: &[f64], dims: [usize; 3], pad: Pad2d) -> (Vec<f64>, [usize; 3]) {
    let [h, w, c] = dims;
    let (ho, wo) = (h + pad.top + pad.bottom, w + pad.left + pad.right);
    let mut out = vec![0.0; ho * wo * c];
    for oh in 0..ho {
        let ih = reflect_index(oh as isize - pad.top as isize, h);
        for ow in 0..wo {
            let iw = reflect_index(ow as isize - pad.left as isize, w);
            let src = (ih * w + iw) * c;
            out[(oh * wo + ow) * c..][..c].copy_from_slice(&x[src..src + c]);
        }
    }
    (out, [ho, wo, c])
}

pub(crate) fn reflect_pad_backward(dout: &[f64], dims: [usize; 3], pad: Pad2d) -> Vec<f64> {
    let [h, w, c] = dims;
    let (ho, wo) = (h + pad.top + pad.bottom, w + pad.left + pad.right);
    let mut dx = vec![0.0; h * w * c];
    for oh in 0..ho {
        let ih = reflect_index(oh as isize - pad.top as isize, h);
        for ow in 0..wo {
            let iw = reflect_index(ow as isize - pad.left as isize, w);
            let dst = (ih * w + iw) * c;
            for k in 0..c {
                dx[dst + k] += dout[(oh * wo + ow) * c + k];
            }
        }
    }
    dx
}
