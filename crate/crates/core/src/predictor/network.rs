//! Two-resolution ConvLSTM encoder-decoder.
//!
//! Each input frame passes a 3x3 convolution + tanh at full resolution,
//! then 2x2 average pooling and a second convolution + tanh at half
//! resolution. One ConvLSTM encoder runs at each resolution. The decoder
//! cells start from the encoder's final states and are driven by the last
//! frame's features. Per output step the half-resolution decoder state is
//! upsampled, concatenated with the full-resolution one and merged by a
//! 3x3 convolution + tanh; the full-resolution decoder state is added back
//! before a 1x1 projection to one channel. The last input frame is added to
//! the projection, so the network predicts changes.
//!
//! Channel dropout sits after both encoder convolutions, on both decoder
//! outputs and after the merge. Kept channels are scaled by `1/(1-p)`.

use std::ops::Range;

use rand::Rng;

use super::cell::{self, CellDims, StepCache};
use super::tensor::{
    avgpool2, avgpool2_backward, conv2d, conv2d_backward, scale_channels, upsample2,
    upsample2_backward,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub rows: usize,
    pub cols: usize,
    /// Channels of the full-resolution input convolution.
    pub enc1: usize,
    /// Hidden channels of the full-resolution ConvLSTM cells.
    pub hid1: usize,
    /// Channels of the half-resolution input convolution.
    pub enc2: usize,
    /// Hidden channels of the half-resolution ConvLSTM cells.
    pub hid2: usize,
    pub kernel: usize,
}

impl NetConfig {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            enc1: 8,
            hid1: 8,
            enc2: 16,
            hid2: 16,
            kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 || self.rows % 2 != 0 || self.cols % 2 != 0 {
            return Err(Error::Shape(format!(
                "map dims must be even and at least 2, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Invalid(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if [self.enc1, self.hid1, self.enc2, self.hid2].contains(&0) {
            return Err(Error::Invalid("channel counts must be positive".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }

    fn full(&self) -> usize {
        self.rows * self.cols
    }

    fn half_dims(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub(crate) fn cell1(&self) -> CellDims {
        CellDims {
            cin: self.enc1,
            hid: self.hid1,
            h: self.rows,
            w: self.cols,
            k: self.kernel,
        }
    }

    pub(crate) fn cell2(&self) -> CellDims {
        let (h, w) = self.half_dims();
        CellDims {
            cin: self.enc2,
            hid: self.hid2,
            h,
            w,
            k: self.kernel,
        }
    }
}

/// Offsets of every parameter block in the flat parameter vector, in file
/// order.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub e1_w: Range<usize>,
    pub e1_b: Range<usize>,
    pub e2_w: Range<usize>,
    pub e2_b: Range<usize>,
    pub enc1: Range<usize>,
    pub enc2: Range<usize>,
    pub dec1: Range<usize>,
    pub dec2: Range<usize>,
    pub merge_w: Range<usize>,
    pub merge_b: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &NetConfig) -> Self {
        let k2 = c.kernel * c.kernel;
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let e1_w = take(c.enc1 * k2);
        let e1_b = take(c.enc1);
        let e2_w = take(c.enc2 * c.enc1 * k2);
        let e2_b = take(c.enc2);
        let enc1 = take(c.cell1().param_len());
        let enc2 = take(c.cell2().param_len());
        let dec1 = take(c.cell1().param_len());
        let dec2 = take(c.cell2().param_len());
        let merge_w = take(c.hid1 * (c.hid1 + c.hid2) * k2);
        let merge_b = take(c.hid1);
        let out_w = take(c.hid1);
        let out_b = take(1);
        Self {
            e1_w,
            e1_b,
            e2_w,
            e2_b,
            enc1,
            enc2,
            dec1,
            dec2,
            merge_w,
            merge_b,
            out_w,
            out_b,
            total: at,
        }
    }
}

/// Per-channel scale factors for the five dropout sites.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub merge: Vec<f64>,
}

impl DropoutMask {
    pub fn keep_all(c: &NetConfig) -> Self {
        Self {
            e1: vec![1.0; c.enc1],
            e2: vec![1.0; c.enc2],
            d1: vec![1.0; c.hid1],
            d2: vec![1.0; c.hid2],
            merge: vec![1.0; c.hid1],
        }
    }

    /// Drops each channel with probability `p`, scaling survivors by
    /// `1/(1-p)`.
    pub fn sample<R: Rng>(c: &NetConfig, p: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                .collect()
        };
        Self {
            e1: draw(c.enc1),
            e2: draw(c.enc2),
            d1: draw(c.hid1),
            d2: draw(c.hid2),
            merge: draw(c.hid1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetConfig,
    pub params: Vec<f64>,
}

struct FrameTrace {
    x: Vec<f64>,
    a1: Vec<f64>,
    pooled: Vec<f64>,
    a2: Vec<f64>,
}

struct OutTrace {
    cat: Vec<f64>,
    mg: Vec<f64>,
    proj: Vec<f64>,
}

struct Trace {
    frames: Vec<FrameTrace>,
    enc1: Vec<StepCache>,
    enc2: Vec<StepCache>,
    dec1: Vec<StepCache>,
    dec2: Vec<StepCache>,
    outs: Vec<OutTrace>,
}

fn tanh_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Two disjoint mutable blocks of `g`; `a` must precede `b`.
fn pair_mut(g: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

impl Network {
    /// Uniform initialisation in `±sqrt(1/fan_in)` per block, forget-gate
    /// biases set to 1.
    pub fn new<R: Rng>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let l = Layout::new(&config);
        let mut params = vec![0.0; l.total];
        let k2 = config.kernel * config.kernel;
        let mut fill = |r: Range<usize>, fan_in: usize, rng: &mut R| {
            let bound = (1.0 / fan_in as f64).sqrt();
            for v in &mut params[r] {
                *v = rng.gen_range(-bound..=bound);
            }
        };
        fill(l.e1_w.start..l.e1_b.end, k2, rng);
        fill(l.e2_w.start..l.e2_b.end, config.enc1 * k2, rng);
        fill(l.enc1.clone(), config.cell1().fan_in(), rng);
        fill(l.enc2.clone(), config.cell2().fan_in(), rng);
        fill(l.dec1.clone(), config.cell1().fan_in(), rng);
        fill(l.dec2.clone(), config.cell2().fan_in(), rng);
        fill(l.merge_w.start..l.merge_b.end, (config.hid1 + config.hid2) * k2, rng);
        fill(l.out_w.start..l.out_b.end, config.hid1, rng);
        for (block, dims) in [
            (&l.enc1, config.cell1()),
            (&l.enc2, config.cell2()),
            (&l.dec1, config.cell1()),
            (&l.dec2, config.cell2()),
        ] {
            let fb = dims.forget_bias();
            params[block.start + fb.start..block.start + fb.end].fill(1.0);
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expect = config.param_count();
        if params.len() != expect {
            return Err(Error::Shape(format!(
                "expected {expect} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_frames(&self, frames: &[Vec<f64>]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::Invalid("empty input sequence".into()));
        }
        let n = self.config.full();
        if let Some(f) = frames.iter().find(|f| f.len() != n) {
            return Err(Error::Shape(format!(
                "frame has {} cells, network expects {}x{}",
                f.len(),
                self.config.rows,
                self.config.cols
            )));
        }
        Ok(())
    }

    /// Predicts as many frames as there are inputs. Frames are flat
    /// row-major maps in normalised units.
    pub fn forward(&self, inputs: &[Vec<f64>], mask: Option<&DropoutMask>) -> Result<Vec<Vec<f64>>> {
        self.check_frames(inputs)?;
        let keep = DropoutMask::keep_all(&self.config);
        Ok(self.run(inputs, mask.unwrap_or(&keep)).0)
    }

    /// Mean squared error against `targets`.
    pub fn loss(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        mask: Option<&DropoutMask>,
    ) -> Result<f64> {
        let out = self.forward(inputs, mask)?;
        check_targets(&out, targets)?;
        Ok(mse(&out, targets))
    }

    /// Mean squared error and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        mask: Option<&DropoutMask>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_frames(inputs)?;
        let keep = DropoutMask::keep_all(&self.config);
        let m = mask.unwrap_or(&keep);
        let (out, trace) = self.run(inputs, m);
        check_targets(&out, targets)?;
        let loss = mse(&out, targets);
        let grad = self.backward(&out, targets, m, &trace);
        Ok((loss, grad))
    }

    fn run(&self, inputs: &[Vec<f64>], m: &DropoutMask) -> (Vec<Vec<f64>>, Trace) {
        let c = &self.config;
        let l = Layout::new(c);
        let p = &self.params;
        let (rows, cols, k) = (c.rows, c.cols, c.kernel);
        let hw = c.full();
        let (h2, w2) = c.half_dims();
        let hw2 = h2 * w2;
        let (d1, d2) = (c.cell1(), c.cell2());

        let mut trace = Trace {
            frames: Vec::with_capacity(inputs.len()),
            enc1: Vec::with_capacity(inputs.len()),
            enc2: Vec::with_capacity(inputs.len()),
            dec1: Vec::with_capacity(inputs.len()),
            dec2: Vec::with_capacity(inputs.len()),
            outs: Vec::with_capacity(inputs.len()),
        };
        let mut h1 = vec![0.0; d1.state_len()];
        let mut c1 = vec![0.0; d1.state_len()];
        let mut h2s = vec![0.0; d2.state_len()];
        let mut c2s = vec![0.0; d2.state_len()];
        let mut feat1 = Vec::new();
        let mut feat2 = Vec::new();
        for x in inputs {
            let mut a1 = vec![0.0; c.enc1 * hw];
            conv2d(x, 1, rows, cols, &p[l.e1_w.clone()], &p[l.e1_b.clone()], c.enc1, k, &mut a1);
            tanh_in_place(&mut a1);
            let mut a1d = a1.clone();
            scale_channels(&mut a1d, &m.e1, hw);
            let pooled = avgpool2(&a1d, c.enc1, rows, cols);
            let mut a2 = vec![0.0; c.enc2 * hw2];
            conv2d(&pooled, c.enc1, h2, w2, &p[l.e2_w.clone()], &p[l.e2_b.clone()], c.enc2, k, &mut a2);
            tanh_in_place(&mut a2);
            let mut a2d = a2.clone();
            scale_channels(&mut a2d, &m.e2, hw2);

            let (nh, nc, cache) = cell::step(&d1, &p[l.enc1.clone()], &a1d, &h1, &c1);
            (h1, c1) = (nh, nc);
            trace.enc1.push(cache);
            let (nh, nc, cache) = cell::step(&d2, &p[l.enc2.clone()], &a2d, &h2s, &c2s);
            (h2s, c2s) = (nh, nc);
            trace.enc2.push(cache);
            trace.frames.push(FrameTrace {
                x: x.clone(),
                a1,
                pooled,
                a2,
            });
            feat1 = a1d;
            feat2 = a2d;
        }

        let last = inputs.last().expect("checked non-empty");
        let mut outputs = Vec::with_capacity(inputs.len());
        for _ in 0..inputs.len() {
            let (nh, nc, cache) = cell::step(&d1, &p[l.dec1.clone()], &feat1, &h1, &c1);
            (h1, c1) = (nh, nc);
            trace.dec1.push(cache);
            let (nh, nc, cache) = cell::step(&d2, &p[l.dec2.clone()], &feat2, &h2s, &c2s);
            (h2s, c2s) = (nh, nc);
            trace.dec2.push(cache);

            let mut hd1m = h1.clone();
            scale_channels(&mut hd1m, &m.d1, hw);
            let mut hd2m = h2s.clone();
            scale_channels(&mut hd2m, &m.d2, hw2);
            let mut cat = hd1m.clone();
            cat.extend(upsample2(&hd2m, c.hid2, h2, w2));
            let mut mg = vec![0.0; c.hid1 * hw];
            conv2d(
                &cat,
                c.hid1 + c.hid2,
                rows,
                cols,
                &p[l.merge_w.clone()],
                &p[l.merge_b.clone()],
                c.hid1,
                k,
                &mut mg,
            );
            tanh_in_place(&mut mg);
            let mut proj = mg.clone();
            scale_channels(&mut proj, &m.merge, hw);
            add_into(&mut proj, &hd1m);

            let ow = &p[l.out_w.clone()];
            let mut y: Vec<f64> = last.iter().map(|v| v + p[l.out_b.start]).collect();
            for (j, plane) in proj.chunks(hw).enumerate() {
                for (yv, pv) in y.iter_mut().zip(plane) {
                    *yv += ow[j] * pv;
                }
            }
            outputs.push(y);
            trace.outs.push(OutTrace { cat, mg, proj });
        }
        (outputs, trace)
    }

    fn backward(
        &self,
        out: &[Vec<f64>],
        targets: &[Vec<f64>],
        m: &DropoutMask,
        trace: &Trace,
    ) -> Vec<f64> {
        let c = &self.config;
        let l = Layout::new(c);
        let p = &self.params;
        let (rows, cols, k) = (c.rows, c.cols, c.kernel);
        let hw = c.full();
        let (h2, w2) = c.half_dims();
        let (d1, d2) = (c.cell1(), c.cell2());
        let steps = out.len();
        let norm = 2.0 / (steps * hw) as f64;
        let mut g = vec![0.0; l.total];

        let mut dh1 = vec![0.0; d1.state_len()];
        let mut dc1 = vec![0.0; d1.state_len()];
        let mut dh2 = vec![0.0; d2.state_len()];
        let mut dc2 = vec![0.0; d2.state_len()];
        let mut dfeat1 = vec![0.0; c.enc1 * hw];
        let mut dfeat2 = vec![0.0; c.enc2 * h2 * w2];
        let ow = &p[l.out_w.clone()];
        for s in (0..steps).rev() {
            let ot = &trace.outs[s];
            let dy: Vec<f64> = out[s]
                .iter()
                .zip(&targets[s])
                .map(|(y, t)| norm * (y - t))
                .collect();
            g[l.out_b.start] += dy.iter().sum::<f64>();
            let mut dproj = vec![0.0; c.hid1 * hw];
            for (j, (plane, dplane)) in ot.proj.chunks(hw).zip(dproj.chunks_mut(hw)).enumerate() {
                let mut acc = 0.0;
                for ((pv, dv), d) in plane.iter().zip(dplane.iter_mut()).zip(&dy) {
                    acc += pv * d;
                    *dv = ow[j] * d;
                }
                g[l.out_w.start + j] += acc;
            }
            let mut dhd1m = dproj.clone();
            let mut dmg = dproj;
            scale_channels(&mut dmg, &m.merge, hw);
            for (d, v) in dmg.iter_mut().zip(&ot.mg) {
                *d *= 1.0 - v * v;
            }
            let mut dcat = vec![0.0; ot.cat.len()];
            {
                let (gw, gb) = pair_mut(&mut g, l.merge_w.clone(), l.merge_b.clone());
                conv2d_backward(
                    &ot.cat,
                    c.hid1 + c.hid2,
                    rows,
                    cols,
                    &p[l.merge_w.clone()],
                    c.hid1,
                    k,
                    &dmg,
                    Some(&mut dcat),
                    gw,
                    gb,
                );
            }
            add_into(&mut dhd1m, &dcat[..c.hid1 * hw]);
            let mut dhd2m = upsample2_backward(&dcat[c.hid1 * hw..], c.hid2, h2, w2);
            scale_channels(&mut dhd1m, &m.d1, hw);
            scale_channels(&mut dhd2m, &m.d2, h2 * w2);
            add_into(&mut dh1, &dhd1m);
            add_into(&mut dh2, &dhd2m);

            let (dx, dhp, dcp) = cell::step_backward(
                &d1,
                &p[l.dec1.clone()],
                &trace.dec1[s],
                &dh1,
                &dc1,
                &mut g[l.dec1.clone()],
            );
            add_into(&mut dfeat1, &dx);
            (dh1, dc1) = (dhp, dcp);
            let (dx, dhp, dcp) = cell::step_backward(
                &d2,
                &p[l.dec2.clone()],
                &trace.dec2[s],
                &dh2,
                &dc2,
                &mut g[l.dec2.clone()],
            );
            add_into(&mut dfeat2, &dx);
            (dh2, dc2) = (dhp, dcp);
        }

        for t in (0..steps).rev() {
            let (mut da1d, dhp, dcp) = cell::step_backward(
                &d1,
                &p[l.enc1.clone()],
                &trace.enc1[t],
                &dh1,
                &dc1,
                &mut g[l.enc1.clone()],
            );
            (dh1, dc1) = (dhp, dcp);
            let (mut da2d, dhp, dcp) = cell::step_backward(
                &d2,
                &p[l.enc2.clone()],
                &trace.enc2[t],
                &dh2,
                &dc2,
                &mut g[l.enc2.clone()],
            );
            (dh2, dc2) = (dhp, dcp);
            if t == steps - 1 {
                add_into(&mut da1d, &dfeat1);
                add_into(&mut da2d, &dfeat2);
            }
            let fr = &trace.frames[t];
            scale_channels(&mut da2d, &m.e2, h2 * w2);
            for (d, v) in da2d.iter_mut().zip(&fr.a2) {
                *d *= 1.0 - v * v;
            }
            let mut dpooled = vec![0.0; fr.pooled.len()];
            {
                let (gw, gb) = pair_mut(&mut g, l.e2_w.clone(), l.e2_b.clone());
                conv2d_backward(
                    &fr.pooled,
                    c.enc1,
                    h2,
                    w2,
                    &p[l.e2_w.clone()],
                    c.enc2,
                    k,
                    &da2d,
                    Some(&mut dpooled),
                    gw,
                    gb,
                );
            }
            add_into(&mut da1d, &avgpool2_backward(&dpooled, c.enc1, rows, cols));
            scale_channels(&mut da1d, &m.e1, hw);
            for (d, v) in da1d.iter_mut().zip(&fr.a1) {
                *d *= 1.0 - v * v;
            }
            let (gw, gb) = pair_mut(&mut g, l.e1_w.clone(), l.e1_b.clone());
            conv2d_backward(&fr.x, 1, rows, cols, &p[l.e1_w.clone()], c.enc1, k, &da1d, None, gw, gb);
        }
        g
    }
}

fn check_targets(out: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if targets.len() != out.len() || targets.iter().zip(out).any(|(t, o)| t.len() != o.len()) {
        return Err(Error::Shape(format!(
            "{} target frames do not match {} predicted frames",
            targets.len(),
            out.len()
        )));
    }
    Ok(())
}

pub(crate) fn mse(out: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (o, t) in out.iter().zip(targets) {
        for (a, b) in o.iter().zip(t) {
            sum += (a - b) * (a - b);
        }
        n += o.len();
    }
    sum / n as f64
}
