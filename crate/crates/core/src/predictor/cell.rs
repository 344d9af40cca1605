//! ConvLSTM cell with full-shape peephole weights.
//!
//! Parameter block layout: stacked gate kernels `[4*hid][cin+hid][k][k]`
//! in gate order input, forget, candidate, output; then the four gate
//! biases (`4*hid`); then the input, forget and output peepholes, each of
//! shape `[hid][h][w]`.

use super::tensor::{conv2d, conv2d_backward, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CellDims {
    pub cin: usize,
    pub hid: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl CellDims {
    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn state_len(&self) -> usize {
        self.hid * self.hw()
    }

    pub fn weight_len(&self) -> usize {
        4 * self.hid * (self.cin + self.hid) * self.k * self.k
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + 4 * self.hid + 3 * self.state_len()
    }

    pub fn fan_in(&self) -> usize {
        (self.cin + self.hid) * self.k * self.k
    }

    /// Range of the forget-gate biases within the parameter block.
    pub fn forget_bias(&self) -> std::ops::Range<usize> {
        let start = self.weight_len() + self.hid;
        start..start + self.hid
    }
}

struct Parts<'a> {
    w: &'a [f64],
    b: &'a [f64],
    wci: &'a [f64],
    wcf: &'a [f64],
    wco: &'a [f64],
}

fn split<'a>(d: &CellDims, p: &'a [f64]) -> Parts<'a> {
    debug_assert_eq!(p.len(), d.param_len());
    let n = d.state_len();
    let (w, rest) = p.split_at(d.weight_len());
    let (b, rest) = rest.split_at(4 * d.hid);
    let (wci, rest) = rest.split_at(n);
    let (wcf, wco) = rest.split_at(n);
    Parts { w, b, wci, wcf, wco }
}

#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
}

/// One time step; returns `(h, c)` and the cache needed by
/// [`step_backward`].
pub(crate) fn step(
    d: &CellDims,
    p: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, StepCache) {
    let n = d.state_len();
    let parts = split(d, p);
    let mut xh = Vec::with_capacity(x.len() + h_prev.len());
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let mut z = vec![0.0; 4 * n];
    conv2d(&xh, d.cin + d.hid, d.h, d.w, parts.w, parts.b, 4 * d.hid, d.k, &mut z);

    let mut cache = StepCache {
        xh,
        c_prev: c_prev.to_vec(),
        i: vec![0.0; n],
        f: vec![0.0; n],
        g: vec![0.0; n],
        o: vec![0.0; n],
        c: vec![0.0; n],
        tc: vec![0.0; n],
    };
    let mut h = vec![0.0; n];
    for j in 0..n {
        let cp = c_prev[j];
        let i = sigmoid(z[j] + parts.wci[j] * cp);
        let f = sigmoid(z[n + j] + parts.wcf[j] * cp);
        let g = z[2 * n + j].tanh();
        let c = f * cp + i * g;
        let o = sigmoid(z[3 * n + j] + parts.wco[j] * c);
        let tc = c.tanh();
        h[j] = o * tc;
        cache.i[j] = i;
        cache.f[j] = f;
        cache.g[j] = g;
        cache.o[j] = o;
        cache.c[j] = c;
        cache.tc[j] = tc;
    }
    let c = cache.c.clone();
    (h, c, cache)
}

/// Backpropagates `dh`, `dc` (gradients w.r.t. this step's outputs) into
/// `grad` (same layout as the parameter block). Returns the gradients for
/// `x`, `h_prev` and `c_prev`.
pub(crate) fn step_backward(
    d: &CellDims,
    p: &[f64],
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    grad: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = d.state_len();
    let parts = split(d, p);
    let (gw, rest) = grad.split_at_mut(d.weight_len());
    let (gb, rest) = rest.split_at_mut(4 * d.hid);
    let (gci, rest) = rest.split_at_mut(n);
    let (gcf, gco) = rest.split_at_mut(n);

    let mut dz = vec![0.0; 4 * n];
    let mut dc_prev = vec![0.0; n];
    for j in 0..n {
        let (i, f, g, o, c, tc) = (
            cache.i[j],
            cache.f[j],
            cache.g[j],
            cache.o[j],
            cache.c[j],
            cache.tc[j],
        );
        let cp = cache.c_prev[j];
        let dzo = dh[j] * tc * o * (1.0 - o);
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc) + dzo * parts.wco[j];
        gco[j] += dzo * c;
        let dzi = dct * g * i * (1.0 - i);
        let dzf = dct * cp * f * (1.0 - f);
        let dzg = dct * i * (1.0 - g * g);
        dc_prev[j] = dct * f + dzi * parts.wci[j] + dzf * parts.wcf[j];
        gci[j] += dzi * cp;
        gcf[j] += dzf * cp;
        dz[j] = dzi;
        dz[n + j] = dzf;
        dz[2 * n + j] = dzg;
        dz[3 * n + j] = dzo;
    }
    let mut dxh = vec![0.0; cache.xh.len()];
    conv2d_backward(
        &cache.xh,
        d.cin + d.hid,
        d.h,
        d.w,
        parts.w,
        4 * d.hid,
        d.k,
        &dz,
        Some(&mut dxh),
        gw,
        gb,
    );
    let dh_prev = dxh.split_off(d.cin * d.hw());
    (dxh, dh_prev, dc_prev)
}
