//! Dense (channel, row, col) kernels on flat `f64` buffers.

/// Same-padded 2D convolution. `weight` is `[cout][cin][k][k]`; `out` is
/// overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    cout: usize,
    k: usize,
    out: &mut [f64],
) {
    let hw = h * w;
    debug_assert_eq!(x.len(), cin * hw);
    debug_assert_eq!(out.len(), cout * hw);
    debug_assert_eq!(weight.len(), cout * cin * k * k);
    let pad = (k / 2) as isize;
    for o in 0..cout {
        let out_o = &mut out[o * hw..(o + 1) * hw];
        out_o.fill(bias[o]);
        for i in 0..cin {
            let x_i = &x[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let wv = weight[((o * cin + i) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize) * w;
                        let xs = (x0 as isize + dx) as usize;
                        let dst = &mut out_o[y * w + x0..y * w + x1];
                        let row = &x_i[src + xs..src + xs + (x1 - x0)];
                        for (a, b) in dst.iter_mut().zip(row) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients of [`conv2d`] and, when `dx` is
/// given, the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    k: usize,
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    dweight: &mut [f64],
    dbias: &mut [f64],
) {
    let hw = h * w;
    let pad = (k / 2) as isize;
    for o in 0..cout {
        let d_o = &dout[o * hw..(o + 1) * hw];
        dbias[o] += d_o.iter().sum::<f64>();
        for i in 0..cin {
            let x_i = &x[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dxo = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dxo);
                    let widx = ((o * cin + i) * k + ky) * k + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize) * w + (x0 as isize + dxo) as usize;
                        let n = x1 - x0;
                        let grad = &d_o[y * w + x0..y * w + x1];
                        let row = &x_i[src..src + n];
                        for (g, v) in grad.iter().zip(row) {
                            acc += g * v;
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            let dst = &mut dx[i * hw + src..i * hw + src + n];
                            for (d, g) in dst.iter_mut().zip(grad) {
                                *d += wv * g;
                            }
                        }
                    }
                    dweight[widx] += acc;
                }
            }
        }
    }
}

/// Output positions `y` for which `y + shift` stays inside `0..len`.
fn valid_range(len: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

/// 2x2 average pooling; `h` and `w` must be even.
pub(crate) fn avgpool2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (h / 2, w / 2);
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        let src = &x[ch * h * w..];
        for y in 0..h2 {
            for xx in 0..w2 {
                let a = src[2 * y * w + 2 * xx];
                let b = src[2 * y * w + 2 * xx + 1];
                let cc = src[(2 * y + 1) * w + 2 * xx];
                let d = src[(2 * y + 1) * w + 2 * xx + 1];
                out[(ch * h2 + y) * w2 + xx] = 0.25 * (a + b + cc + d);
            }
        }
    }
    out
}

/// Gradient of [`avgpool2`]: each pooled gradient spreads a quarter to
/// every source cell. `h`, `w` are the full-resolution dims.
pub(crate) fn avgpool2_backward(dy: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (h / 2, w / 2);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                dx[(ch * h + y) * w + xx] = 0.25 * dy[(ch * h2 + y / 2) * w2 + xx / 2];
            }
        }
    }
    dx
}

/// Nearest-neighbour 2x upsampling from `(h2, w2)`.
pub(crate) fn upsample2(x: &[f64], c: usize, h2: usize, w2: usize) -> Vec<f64> {
    let (h, w) = (2 * h2, 2 * w2);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                out[(ch * h + y) * w + xx] = x[(ch * h2 + y / 2) * w2 + xx / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(dy: &[f64], c: usize, h2: usize, w2: usize) -> Vec<f64> {
    let (h, w) = (2 * h2, 2 * w2);
    let mut dx = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                dx[(ch * h2 + y / 2) * w2 + xx / 2] += dy[(ch * h + y) * w + xx];
            }
        }
    }
    dx
}

/// Multiplies each `hw`-sized channel plane by its scale.
pub(crate) fn scale_channels(x: &mut [f64], scales: &[f64], hw: usize) {
    for (plane, &s) in x.chunks_mut(hw).zip(scales) {
        if s != 1.0 {
            plane.iter_mut().for_each(|v| *v *= s);
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
