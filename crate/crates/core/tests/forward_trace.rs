//! Layer-by-layer forward trace written against the documented parameter
//! layout, using nested `[channel][row][col]` tensors.

use pasture_core::predictor::{NetConfig, Network};
use pasture_core::rng::seeded;
use rand::Rng;

type T3 = Vec<Vec<Vec<f64>>>;

fn zeros(c: usize, h: usize, w: usize) -> T3 {
    vec![vec![vec![0.0; w]; h]; c]
}

struct Reader<'a> {
    p: &'a [f64],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> &'a [f64] {
        let s = &self.p[self.at..self.at + n];
        self.at += n;
        s
    }
}

/// Same-padded convolution; `w` is `[cout][cin][k][k]` flattened.
fn conv(x: &T3, w: &[f64], b: &[f64], cout: usize, k: usize) -> T3 {
    let (cin, h, wd) = (x.len(), x[0].len(), x[0][0].len());
    let pad = (k / 2) as i64;
    let mut out = zeros(cout, h, wd);
    for o in 0..cout {
        for r in 0..h {
            for c in 0..wd {
                let mut s = b[o];
                for i in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let (yy, xx) = (r as i64 + ky as i64 - pad, c as i64 + kx as i64 - pad);
                            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < wd {
                                s += w[((o * cin + i) * k + ky) * k + kx] * x[i][yy as usize][xx as usize];
                            }
                        }
                    }
                }
                out[o][r][c] = s;
            }
        }
    }
    out
}

fn map(x: &T3, f: impl Fn(f64) -> f64) -> T3 {
    x.iter().map(|ch| ch.iter().map(|row| row.iter().map(|&v| f(v)).collect()).collect()).collect()
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

struct Cell<'a> {
    w: &'a [f64],
    b: &'a [f64],
    peep: [&'a [f64]; 3],
    hid: usize,
    k: usize,
}

impl<'a> Cell<'a> {
    fn read(r: &mut Reader<'a>, cin: usize, hid: usize, h: usize, w: usize, k: usize) -> Self {
        let wt = r.take(4 * hid * (cin + hid) * k * k);
        let b = r.take(4 * hid);
        let peep = [r.take(hid * h * w), r.take(hid * h * w), r.take(hid * h * w)];
        Cell { w: wt, b, peep, hid, k }
    }

    fn step(&self, x: &T3, h: &T3, c: &T3) -> (T3, T3) {
        let mut xh = x.clone();
        xh.extend(h.iter().cloned());
        let z = conv(&xh, self.w, self.b, 4 * self.hid, self.k);
        let (rows, cols) = (h[0].len(), h[0][0].len());
        let (mut hn, mut cn) = (zeros(self.hid, rows, cols), zeros(self.hid, rows, cols));
        for q in 0..self.hid {
            for r in 0..rows {
                for col in 0..cols {
                    let pi = (q * rows + r) * cols + col;
                    let cp = c[q][r][col];
                    let i = sig(z[q][r][col] + self.peep[0][pi] * cp);
                    let f = sig(z[self.hid + q][r][col] + self.peep[1][pi] * cp);
                    let g = z[2 * self.hid + q][r][col].tanh();
                    let cc = f * cp + i * g;
                    let o = sig(z[3 * self.hid + q][r][col] + self.peep[2][pi] * cc);
                    cn[q][r][col] = cc;
                    hn[q][r][col] = o * cc.tanh();
                }
            }
        }
        (hn, cn)
    }
}

fn pool(x: &T3) -> T3 {
    x.iter()
        .map(|ch| {
            (0..ch.len() / 2)
                .map(|r| {
                    (0..ch[0].len() / 2)
                        .map(|c| 0.25 * (ch[2 * r][2 * c] + ch[2 * r][2 * c + 1] + ch[2 * r + 1][2 * c] + ch[2 * r + 1][2 * c + 1]))
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn upsample(x: &T3) -> T3 {
    x.iter()
        .map(|ch| (0..2 * ch.len()).map(|r| (0..2 * ch[0].len()).map(|c| ch[r / 2][c / 2]).collect()).collect())
        .collect()
}

fn trace(cfg: &NetConfig, params: &[f64], frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (rows, cols, k) = (cfg.rows, cfg.cols, cfg.kernel);
    let (r2, c2) = (rows / 2, cols / 2);
    let mut rd = Reader { p: params, at: 0 };
    let e1w = rd.take(cfg.enc1 * k * k);
    let e1b = rd.take(cfg.enc1);
    let e2w = rd.take(cfg.enc2 * cfg.enc1 * k * k);
    let e2b = rd.take(cfg.enc2);
    let enc1 = Cell::read(&mut rd, cfg.enc1, cfg.hid1, rows, cols, k);
    let enc2 = Cell::read(&mut rd, cfg.enc2, cfg.hid2, r2, c2, k);
    let dec1 = Cell::read(&mut rd, cfg.enc1, cfg.hid1, rows, cols, k);
    let dec2 = Cell::read(&mut rd, cfg.enc2, cfg.hid2, r2, c2, k);
    let mw = rd.take(cfg.hid1 * (cfg.hid1 + cfg.hid2) * k * k);
    let mb = rd.take(cfg.hid1);
    let ow = rd.take(cfg.hid1);
    let ob = rd.take(1)[0];
    assert_eq!(rd.at, params.len());

    let grid = |f: &[f64]| -> T3 { vec![(0..rows).map(|r| f[r * cols..(r + 1) * cols].to_vec()).collect()] };
    let (mut h1, mut c1) = (zeros(cfg.hid1, rows, cols), zeros(cfg.hid1, rows, cols));
    let (mut h2, mut c2s) = (zeros(cfg.hid2, r2, c2), zeros(cfg.hid2, r2, c2));
    let (mut f1, mut f2) = (T3::new(), T3::new());
    for f in frames {
        let a1 = map(&conv(&grid(f), e1w, e1b, cfg.enc1, k), f64::tanh);
        let a2 = map(&conv(&pool(&a1), e2w, e2b, cfg.enc2, k), f64::tanh);
        (h1, c1) = enc1.step(&a1, &h1, &c1);
        (h2, c2s) = enc2.step(&a2, &h2, &c2s);
        (f1, f2) = (a1, a2);
    }
    let last = frames.last().unwrap();
    let mut out = Vec::new();
    for _ in frames {
        (h1, c1) = dec1.step(&f1, &h1, &c1);
        (h2, c2s) = dec2.step(&f2, &h2, &c2s);
        let mut cat = h1.clone();
        cat.extend(upsample(&h2));
        let mg = map(&conv(&cat, mw, mb, cfg.hid1, k), f64::tanh);
        let mut y = last.clone();
        for r in 0..rows {
            for c in 0..cols {
                let s: f64 = (0..cfg.hid1).map(|q| ow[q] * (mg[q][r][c] + h1[q][r][c])).sum();
                y[r * cols + c] += s + ob;
            }
        }
        out.push(y);
    }
    out
}

fn small() -> NetConfig {
    NetConfig {
        rows: 4,
        cols: 6,
        enc1: 2,
        hid1: 3,
        enc2: 3,
        hid2: 2,
        kernel: 3,
    }
}

fn assert_close(a: &[Vec<f64>], b: &[Vec<f64>]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }
}

#[test]
fn fresh_network_on_zero_input_matches_the_trace() {
    let cfg = small();
    let net = Network::new(cfg, &mut seeded(5)).unwrap();
    let zero = vec![vec![0.0; 24]; 3];
    let out = net.forward(&zero, None).unwrap();
    assert_close(&out, &trace(&cfg, &net.params, &zero));
    // zero padding makes the borders differ from the interior
    assert!(out[0].iter().any(|&v| (v - out[0][8]).abs() > 1e-9));
}

#[test]
fn random_inputs_match_the_trace() {
    let cfg = small();
    let net = Network::new(cfg, &mut seeded(6)).unwrap();
    let mut rng = seeded(7);
    let frames: Vec<Vec<f64>> = (0..4).map(|_| (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    assert_close(&net.forward(&frames, None).unwrap(), &trace(&cfg, &net.params, &frames));
}
