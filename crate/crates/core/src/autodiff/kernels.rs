//! Numeric kernels behind the tape primitives.
//!
//! Convolutions never materialise an im2col buffer. A row of a padded input,
//! read as `x[offset + row * rs + col * cs]` with overlapping strides, already
//! is the Toeplitz/Hankel operand of the product, so each kernel slice becomes
//! one strided GEMM call.

use crate::error::{Error, Result};

#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

pub(crate) struct ViewMut<'a> {
    pub data: &'a mut [f64],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

fn last_index(offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    offset + (rows - 1) * rs + (cols - 1) * cs
}

/// `c = a * b + beta * c` with `a: m×k`, `b: k×n`, `c: m×n`.
///
/// `c` must not have two logical elements sharing one address; `a` and `b` may.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: View, b: View, beta: f64, c: ViewMut) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k > 0);
    assert!(last_index(a.offset, m, k, a.rs, a.cs) < a.data.len());
    assert!(last_index(b.offset, k, n, b.rs, b.cs) < b.data.len());
    assert!(last_index(c.offset, m, n, c.rs, c.cs) < c.data.len());
    // SAFETY: every index reachable through the strides was bounds-checked
    // above, `c` is uniquely borrowed, and the strides fit in isize because
    // the checked extents are within live allocations.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Zero padding on the two spatial axes, `(before, after)` per axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Padding2d {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding2d {
    pub const VALID: Padding2d = Padding2d {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    pub fn symmetric(ph: usize, pw: usize) -> Self {
        Self {
            top: ph,
            bottom: ph,
            left: pw,
            right: pw,
        }
    }

    /// Padding that keeps the spatial size under unit stride. Odd excess goes after.
    pub fn same(kh: usize, kw: usize) -> Self {
        let (th, tw) = (kh.saturating_sub(1), kw.saturating_sub(1));
        Self {
            top: th / 2,
            bottom: th - th / 2,
            left: tw / 2,
            right: tw - tw / 2,
        }
    }

    fn is_zero(&self) -> bool {
        *self == Self::VALID
    }
}

/// Fully resolved geometry of a grouped 2-d cross-correlation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub groups: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad: Padding2d,
    pub hp: usize,
    pub wp: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeometry {
    pub fn new(
        op: &'static str,
        input: [usize; 4],
        kernel: [usize; 4],
        groups: usize,
        stride: (usize, usize),
        pad: Padding2d,
    ) -> Result<Self> {
        let [n, c, h, w] = input;
        let [f, cin_g, kh, kw] = kernel;
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::invalid(op, "stride must be positive"));
        }
        if groups == 0 || c % groups != 0 || f % groups != 0 {
            return Err(Error::shape(
                op,
                format!("{groups} groups do not divide {c} input and {f} output channels"),
            ));
        }
        if cin_g != c / groups {
            return Err(Error::shape(
                op,
                format!(
                    "kernel expects {cin_g} input channels per group, input provides {}",
                    c / groups
                ),
            ));
        }
        let hp = h + pad.top + pad.bottom;
        let wp = w + pad.left + pad.right;
        if kh > hp || kw > wp {
            return Err(Error::shape(
                op,
                format!("kernel {kh}x{kw} larger than padded input {hp}x{wp}"),
            ));
        }
        let ho = (hp - kh) / stride.0 + 1;
        let wo = (wp - kw) / stride.1 + 1;
        Ok(Self {
            n,
            c,
            h,
            w,
            f,
            groups,
            kh,
            kw,
            sh: stride.0,
            sw: stride.1,
            pad,
            hp,
            wp,
            ho,
            wo,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.f, self.ho, self.wo]
    }

    fn cin_g(&self) -> usize {
        self.c / self.groups
    }

    fn fout_g(&self) -> usize {
        self.f / self.groups
    }

    fn padded_len(&self) -> usize {
        self.c * self.hp * self.wp
    }

    /// Every strided product that makes up one sample's output.
    ///
    /// `a` rows run over the group's output filters with stride `cin_g*kh*kw`,
    /// `b` columns over output positions with stride `sw`, `c` rows over
    /// filters with stride `ho*wo`.
    fn products(&self) -> Vec<Product> {
        let (cin_g, fout_g) = (self.cin_g(), self.fout_g());
        let plane = self.hp * self.wp;
        let ksz = self.kh * self.kw;
        let mut out = Vec::new();
        for g in 0..self.groups {
            let a_group = g * fout_g * cin_g * ksz;
            let c_group = g * fout_g * self.ho * self.wo;
            for oh in 0..self.ho {
                let c_off = c_group + oh * self.wo;
                let row0 = oh * self.sh;
                if self.kh == 1 && self.kw == 1 {
                    // contraction over the group's input channels
                    out.push(Product {
                        a_off: a_group,
                        b_off: g * cin_g * plane + row0 * self.wp,
                        c_off,
                        k: cin_g,
                        a_cs: 1,
                        b_rs: plane,
                    });
                    continue;
                }
                for cl in 0..cin_g {
                    let a_chan = a_group + cl * ksz;
                    let b_chan = (g * cin_g + cl) * plane + row0 * self.wp;
                    if self.kw == 1 {
                        // contraction over kernel rows
                        out.push(Product {
                            a_off: a_chan,
                            b_off: b_chan,
                            c_off,
                            k: self.kh,
                            a_cs: 1,
                            b_rs: self.wp,
                        });
                    } else {
                        for i in 0..self.kh {
                            out.push(Product {
                                a_off: a_chan + i * self.kw,
                                b_off: b_chan + i * self.wp,
                                c_off,
                                k: self.kw,
                                a_cs: 1,
                                b_rs: 1,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// One single-row filter per channel at unit stride: every output row is
    /// a plain 1-d correlation, too thin for GEMM to pay off.
    fn is_channelwise_row_filter(&self) -> bool {
        self.cin_g() == 1 && self.fout_g() == 1 && self.kh == 1 && self.kw > 1 && self.sw == 1 && self.sh == 1
    }

    fn a_rs(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }

    fn pad_sample(&self, x: &[f64], buf: &mut [f64]) {
        let p = self.pad;
        buf.fill(0.0);
        for c in 0..self.c {
            for y in 0..self.h {
                let src = &x[(c * self.h + y) * self.w..][..self.w];
                let dst = (c * self.hp + y + p.top) * self.wp + p.left;
                buf[dst..dst + self.w].copy_from_slice(src);
            }
        }
    }

    fn unpad_add_sample(&self, buf: &[f64], gx: &mut [f64]) {
        let p = self.pad;
        for c in 0..self.c {
            for y in 0..self.h {
                let dst = &mut gx[(c * self.h + y) * self.w..][..self.w];
                let src = (c * self.hp + y + p.top) * self.wp + p.left;
                for (d, s) in dst.iter_mut().zip(&buf[src..src + self.w]) {
                    *d += s;
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Product {
    a_off: usize,
    b_off: usize,
    c_off: usize,
    k: usize,
    a_cs: usize,
    b_rs: usize,
}

pub(crate) fn conv_forward(
    geom: &ConvGeometry,
    x: &[f64],
    kernel: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let out_sample = geom.f * geom.ho * geom.wo;
    let in_sample = geom.c * geom.h * geom.w;
    let mut out = vec![0.0; geom.n * out_sample];
    if geom.is_channelwise_row_filter() {
        channelwise_forward(geom, x, kernel, bias, &mut out);
        return out;
    }
    let products = geom.products();
    let fout_g = geom.fout_g();
    let mut padded = vec![0.0; geom.padded_len()];
    for s in 0..geom.n {
        let xs = &x[s * in_sample..][..in_sample];
        let src: &[f64] = if geom.pad.is_zero() {
            xs
        } else {
            geom.pad_sample(xs, &mut padded);
            &padded
        };
        let os = &mut out[s * out_sample..][..out_sample];
        if let Some(b) = bias {
            for (f, chunk) in os.chunks_mut(geom.ho * geom.wo).enumerate() {
                chunk.fill(b[f]);
            }
        }
        for p in &products {
            gemm(
                fout_g,
                p.k,
                geom.wo,
                View {
                    data: kernel,
                    offset: p.a_off,
                    rs: geom.a_rs(),
                    cs: p.a_cs,
                },
                View {
                    data: src,
                    offset: p.b_off,
                    rs: p.b_rs,
                    cs: geom.sw,
                },
                1.0,
                ViewMut {
                    data: os,
                    offset: p.c_off,
                    rs: geom.ho * geom.wo,
                    cs: 1,
                },
            );
        }
    }
    out
}

/// Padded input row `y` of channel `c` of one sample, written into `buf`.
fn padded_row<'b>(geom: &ConvGeometry, xs: &[f64], c: usize, y: usize, buf: &'b mut [f64]) -> &'b [f64] {
    let p = geom.pad;
    buf.fill(0.0);
    if let Some(src_y) = y.checked_sub(p.top).filter(|&r| r < geom.h) {
        buf[p.left..p.left + geom.w].copy_from_slice(&xs[(c * geom.h + src_y) * geom.w..][..geom.w]);
    }
    buf
}

fn channelwise_forward(geom: &ConvGeometry, x: &[f64], kernel: &[f64], bias: Option<&[f64]>, out: &mut [f64]) {
    let in_sample = geom.c * geom.h * geom.w;
    let (k, wo) = (geom.kw, geom.wo);
    let mut row = vec![0.0; geom.wp];
    for (s, os) in out.chunks_mut(geom.f * geom.ho * wo).enumerate() {
        let xs = &x[s * in_sample..][..in_sample];
        for (c, oc) in os.chunks_mut(geom.ho * wo).enumerate() {
            let w = &kernel[c * k..][..k];
            for (y, orow) in oc.chunks_mut(wo).enumerate() {
                let xr = padded_row(geom, xs, c, y, &mut row);
                orow.fill(bias.map_or(0.0, |b| b[c]));
                for (j, &wj) in w.iter().enumerate() {
                    for (o, xv) in orow.iter_mut().zip(&xr[j..j + wo]) {
                        *o += wj * xv;
                    }
                }
            }
        }
    }
}

fn channelwise_backward(
    geom: &ConvGeometry,
    x: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    mut gx: Option<&mut [f64]>,
    mut gk: Option<&mut [f64]>,
) {
    let in_sample = geom.c * geom.h * geom.w;
    let (k, wo) = (geom.kw, geom.wo);
    let p = geom.pad;
    let mut row = vec![0.0; geom.wp];
    let mut grow = vec![0.0; geom.wp];
    for (s, gs) in grad_out.chunks(geom.f * geom.ho * wo).enumerate() {
        let xs = &x[s * in_sample..][..in_sample];
        for (c, gc) in gs.chunks(geom.ho * wo).enumerate() {
            let w = &kernel[c * k..][..k];
            for (y, g) in gc.chunks(wo).enumerate() {
                if let Some(gk) = gk.as_deref_mut() {
                    let xr = padded_row(geom, xs, c, y, &mut row);
                    let acc = &mut gk[c * k..][..k];
                    for (t, &gt) in g.iter().enumerate() {
                        for (a, xv) in acc.iter_mut().zip(&xr[t..t + k]) {
                            *a += gt * xv;
                        }
                    }
                }
                if let Some(gx) = gx.as_deref_mut() {
                    let Some(src_y) = y.checked_sub(p.top).filter(|&r| r < geom.h) else {
                        continue;
                    };
                    grow.fill(0.0);
                    for (j, &wj) in w.iter().enumerate() {
                        for (a, gv) in grow[j..j + wo].iter_mut().zip(g) {
                            *a += wj * gv;
                        }
                    }
                    let dst = &mut gx[s * in_sample + (c * geom.h + src_y) * geom.w..][..geom.w];
                    for (d, v) in dst.iter_mut().zip(&grow[p.left..]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Gradients of a convolution. Each requested buffer is returned freshly allocated.
pub(crate) fn conv_backward(
    geom: &ConvGeometry,
    x: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    want_input: bool,
    want_kernel: bool,
    want_bias: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) {
    let out_sample = geom.f * geom.ho * geom.wo;
    let in_sample = geom.c * geom.h * geom.w;
    let products = geom.products();
    let fout_g = geom.fout_g();
    let a_rs = geom.a_rs();
    let c_rs = geom.ho * geom.wo;

    let mut gk = want_kernel.then(|| vec![0.0; kernel.len()]);
    let mut gx = want_input.then(|| vec![0.0; x.len()]);
    let gb = want_bias.then(|| {
        let mut gb = vec![0.0; geom.f];
        for s in 0..geom.n {
            for (f, chunk) in grad_out[s * out_sample..][..out_sample]
                .chunks(c_rs)
                .enumerate()
            {
                gb[f] += chunk.iter().sum::<f64>();
            }
        }
        gb
    });

    if geom.is_channelwise_row_filter() {
        channelwise_backward(geom, x, kernel, grad_out, gx.as_deref_mut(), gk.as_deref_mut());
        return (gx, gk, gb);
    }

    let mut padded = vec![0.0; geom.padded_len()];
    let mut gpadded = vec![0.0; geom.padded_len()];
    let mut scratch = Vec::new();
    for s in 0..geom.n {
        let gos = &grad_out[s * out_sample..][..out_sample];
        if let Some(gk) = gk.as_mut() {
            let xs = &x[s * in_sample..][..in_sample];
            let src: &[f64] = if geom.pad.is_zero() {
                xs
            } else {
                geom.pad_sample(xs, &mut padded);
                &padded
            };
            for p in &products {
                // dA += G · Bᵀ
                gemm(
                    fout_g,
                    geom.wo,
                    p.k,
                    View {
                        data: gos,
                        offset: p.c_off,
                        rs: c_rs,
                        cs: 1,
                    },
                    View {
                        data: src,
                        offset: p.b_off,
                        rs: geom.sw,
                        cs: p.b_rs,
                    },
                    1.0,
                    ViewMut {
                        data: gk,
                        offset: p.a_off,
                        rs: a_rs,
                        cs: p.a_cs,
                    },
                );
            }
        }
        if let Some(gx) = gx.as_mut() {
            gpadded.fill(0.0);
            for p in &products {
                // dB += Aᵀ · G; the B view aliases itself when the
                // contraction runs along a row, so go through scratch there.
                let aliasing = p.b_rs == 1 && p.k > 1 && geom.sw < p.k && geom.wo > 1;
                let a_t = View {
                    data: kernel,
                    offset: p.a_off,
                    rs: p.a_cs,
                    cs: a_rs,
                };
                let g = View {
                    data: gos,
                    offset: p.c_off,
                    rs: c_rs,
                    cs: 1,
                };
                if aliasing {
                    scratch.clear();
                    scratch.resize(p.k * geom.wo, 0.0);
                    gemm(
                        p.k,
                        fout_g,
                        geom.wo,
                        a_t,
                        g,
                        0.0,
                        ViewMut {
                            data: &mut scratch,
                            offset: 0,
                            rs: geom.wo,
                            cs: 1,
                        },
                    );
                    for kk in 0..p.k {
                        let row = &scratch[kk * geom.wo..][..geom.wo];
                        let base = p.b_off + kk * p.b_rs;
                        for (ow, v) in row.iter().enumerate() {
                            gpadded[base + ow * geom.sw] += v;
                        }
                    }
                } else {
                    gemm(
                        p.k,
                        fout_g,
                        geom.wo,
                        a_t,
                        g,
                        1.0,
                        ViewMut {
                            data: &mut gpadded,
                            offset: p.b_off,
                            rs: p.b_rs,
                            cs: geom.sw,
                        },
                    );
                }
            }
            let gxs = &mut gx[s * in_sample..][..in_sample];
            if geom.pad.is_zero() {
                for (d, v) in gxs.iter_mut().zip(&gpadded) {
                    *d += v;
                }
            } else {
                geom.unpad_add_sample(&gpadded, gxs);
            }
        }
    }
    (gx, gk, gb)
}

/// Geometry of an unpadded 2-d pooling window.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PoolGeometry {
    pub planes: usize,
    pub h: usize,
    pub w: usize,
    pub ph: usize,
    pub pw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl PoolGeometry {
    pub fn new(
        op: &'static str,
        input: [usize; 4],
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Self> {
        let [n, c, h, w] = input;
        let (ph, pw) = window;
        let (sh, sw) = stride;
        if ph == 0 || pw == 0 || sh == 0 || sw == 0 {
            return Err(Error::invalid(op, "window and stride must be positive"));
        }
        if ph > h || pw > w {
            return Err(Error::shape(
                op,
                format!("window {ph}x{pw} larger than input {h}x{w}"),
            ));
        }
        Ok(Self {
            planes: n * c,
            h,
            w,
            ph,
            pw,
            sh,
            sw,
            ho: (h - ph) / sh + 1,
            wo: (w - pw) / sw + 1,
        })
    }

    /// Input offsets (within one plane) covered by output cell `(oy, ox)`, row-major.
    fn window(&self, oy: usize, ox: usize) -> impl Iterator<Item = usize> + '_ {
        let (y0, x0) = (oy * self.sh, ox * self.sw);
        (0..self.ph).flat_map(move |i| (0..self.pw).map(move |j| (y0 + i) * self.w + x0 + j))
    }
}

pub(crate) fn avg_pool_forward(geom: &PoolGeometry, x: &[f64]) -> Vec<f64> {
    let inv = 1.0 / (geom.ph * geom.pw) as f64;
    let (in_plane, out_plane) = (geom.h * geom.w, geom.ho * geom.wo);
    let mut out = vec![0.0; geom.planes * out_plane];
    for p in 0..geom.planes {
        let xp = &x[p * in_plane..][..in_plane];
        for oy in 0..geom.ho {
            for ox in 0..geom.wo {
                let s: f64 = geom.window(oy, ox).map(|i| xp[i]).sum();
                out[p * out_plane + oy * geom.wo + ox] = s * inv;
            }
        }
    }
    out
}

pub(crate) fn avg_pool_backward(geom: &PoolGeometry, grad_out: &[f64]) -> Vec<f64> {
    let inv = 1.0 / (geom.ph * geom.pw) as f64;
    let (in_plane, out_plane) = (geom.h * geom.w, geom.ho * geom.wo);
    let mut gx = vec![0.0; geom.planes * in_plane];
    for p in 0..geom.planes {
        let gxp = &mut gx[p * in_plane..][..in_plane];
        for oy in 0..geom.ho {
            for ox in 0..geom.wo {
                let g = grad_out[p * out_plane + oy * geom.wo + ox] * inv;
                for i in geom.window(oy, ox) {
                    gxp[i] += g;
                }
            }
        }
    }
    gx
}

/// Returns the pooled values and, per output cell, the flat input index of
/// the first maximum in row-major window order.
pub(crate) fn max_pool_forward(geom: &PoolGeometry, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (in_plane, out_plane) = (geom.h * geom.w, geom.ho * geom.wo);
    let mut out = vec![0.0; geom.planes * out_plane];
    let mut argmax = vec![0; geom.planes * out_plane];
    for p in 0..geom.planes {
        let base = p * in_plane;
        for oy in 0..geom.ho {
            for ox in 0..geom.wo {
                let mut best = usize::MAX;
                for i in geom.window(oy, ox) {
                    if best == usize::MAX || x[base + i] > x[base + best] {
                        best = i;
                    }
                }
                let o = p * out_plane + oy * geom.wo + ox;
                out[o] = x[base + best];
                argmax[o] = base + best;
            }
        }
    }
    (out, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_splits_odd_excess_after() {
        assert_eq!(Padding2d::same(1, 125), Padding2d::symmetric(0, 62));
        let p = Padding2d::same(1, 16);
        assert_eq!((p.left, p.right), (7, 8));
    }

    #[test]
    fn gemm_reads_overlapping_hankel_view() {
        // [1,2,3,4] ⋆ [1,1] as a 1×2 · 2×3 product over one overlapping view
        let x = [1.0, 2.0, 3.0, 4.0];
        let k = [1.0, 1.0];
        let mut out = [0.0; 3];
        gemm(
            1,
            2,
            3,
            View { data: &k, offset: 0, rs: 2, cs: 1 },
            View { data: &x, offset: 0, rs: 1, cs: 1 },
            0.0,
            ViewMut { data: &mut out, offset: 0, rs: 3, cs: 1 },
        );
        assert_eq!(out, [3.0, 5.0, 7.0]);
    }
}
