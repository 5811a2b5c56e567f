//! Layer primitives with explicit backward passes.

use super::encode::GridTensor;

/// Same-padded convolution with an odd square kernel. `w` is laid out
/// `[out][in][ky][kx]`.
pub fn conv_forward(x: &GridTensor, w: &[f64], b: &[f64], cout: usize, k: usize) -> GridTensor {
    let (cin, h, wd) = (x.channels, x.height, x.width);
    debug_assert_eq!(w.len(), cout * cin * k * k);
    let mut out = GridTensor::zeros(cout, h, wd);
    let pad = (k / 2) as isize;
    for o in 0..cout {
        let plane = out.plane_mut(o);
        plane.fill(b[o]);
        for i in 0..cin {
            let inp = x.plane(i);
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let wv = w[((o * cin + i) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = (0.max(-dx) as usize, (wd as isize).min(wd as isize - dx) as usize);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in 0.max(-dy) as usize..(h as isize).min(h as isize - dy) as usize {
                        let yi = (y as isize + dy) as usize;
                        let src = &inp[yi * wd + (x0 as isize + dx) as usize..][..x1 - x0];
                        let dst = &mut plane[y * wd + x0..y * wd + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients into `gw`/`gb`; returns the input gradient.
pub fn conv_backward(
    x: &GridTensor,
    w: &[f64],
    gout: &GridTensor,
    k: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    need_input_grad: bool,
) -> Option<GridTensor> {
    let (cin, h, wd) = (x.channels, x.height, x.width);
    let cout = gout.channels;
    let pad = (k / 2) as isize;
    let mut gx = need_input_grad.then(|| GridTensor::zeros(cin, h, wd));
    for o in 0..cout {
        let go = gout.plane(o);
        gb[o] += go.iter().sum::<f64>();
        for i in 0..cin {
            let inp = x.plane(i);
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let widx = ((o * cin + i) * k + ky) * k + kx;
                    let (x0, x1) = (0.max(-dx) as usize, (wd as isize).min(wd as isize - dx) as usize);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in 0.max(-dy) as usize..(h as isize).min(h as isize - dy) as usize {
                        let yi = (y as isize + dy) as usize;
                        let base = yi * wd + (x0 as isize + dx) as usize;
                        let g = &go[y * wd + x0..y * wd + x1];
                        acc += g.iter().zip(&inp[base..base + (x1 - x0)]).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gx) = gx.as_mut() {
                            let wv = w[widx];
                            for (d, s) in gx.plane_mut(i)[base..base + (x1 - x0)].iter_mut().zip(g) {
                                *d += wv * s;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    gx
}

pub fn leaky_forward(z: &GridTensor, slope: f64) -> GridTensor {
    let mut a = z.clone();
    for v in &mut a.data {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    a
}

/// `z` is the pre-activation.
pub fn leaky_backward(z: &GridTensor, gout: &GridTensor, slope: f64) -> GridTensor {
    let mut g = gout.clone();
    for (gv, &zv) in g.data.iter_mut().zip(&z.data) {
        if zv < 0.0 {
            *gv *= slope;
        }
    }
    g
}

/// 2x2 max-pool; also returns the flat input index of each output's maximum
/// (first in row-major order on ties).
pub fn maxpool_forward(x: &GridTensor) -> (GridTensor, Vec<usize>) {
    let (h, w) = (x.height / 2, x.width / 2);
    let mut out = GridTensor::zeros(x.channels, h, w);
    let mut arg = Vec::with_capacity(out.data.len());
    for c in 0..x.channels {
        for y in 0..h {
            for xx in 0..w {
                let mut best = usize::MAX;
                let mut bv = f64::NEG_INFINITY;
                for (oy, ox) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let idx = (c * x.height + 2 * y + oy) * x.width + 2 * xx + ox;
                    if x.data[idx] > bv {
                        bv = x.data[idx];
                        best = idx;
                    }
                }
                out.set(c, y, xx, bv);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(input_shape: (usize, usize, usize), arg: &[usize], gout: &GridTensor) -> GridTensor {
    let mut g = GridTensor::zeros(input_shape.0, input_shape.1, input_shape.2);
    for (&i, &v) in arg.iter().zip(&gout.data) {
        g.data[i] += v;
    }
    g
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample_forward(x: &GridTensor) -> GridTensor {
    let mut out = GridTensor::zeros(x.channels, x.height * 2, x.width * 2);
    for c in 0..x.channels {
        for y in 0..out.height {
            for xx in 0..out.width {
                out.set(c, y, xx, x.get(c, y / 2, xx / 2));
            }
        }
    }
    out
}

pub fn upsample_backward(gout: &GridTensor) -> GridTensor {
    let mut g = GridTensor::zeros(gout.channels, gout.height / 2, gout.width / 2);
    for c in 0..gout.channels {
        for y in 0..gout.height {
            for xx in 0..gout.width {
                let v = g.get(c, y / 2, xx / 2) + gout.get(c, y, xx);
                g.set(c, y / 2, xx / 2, v);
            }
        }
    }
    g
}

pub fn concat(a: &GridTensor, b: &GridTensor) -> GridTensor {
    assert_eq!((a.height, a.width), (b.height, b.width), "concat shape mismatch");
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    GridTensor {
        channels: a.channels + b.channels,
        height: a.height,
        width: a.width,
        data,
    }
}

/// Splits a gradient for `concat(a, b)` back into its two parts.
pub fn split_channels(g: &GridTensor, first: usize) -> (GridTensor, GridTensor) {
    let n = g.height * g.width * first;
    let mk = |channels, data: &[f64]| GridTensor {
        channels,
        height: g.height,
        width: g.width,
        data: data.to_vec(),
    };
    (mk(first, &g.data[..n]), mk(g.channels - first, &g.data[n..]))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over cells with `mask > 0`, computed from
/// logits. Returns the loss and its gradient with respect to the logits.
pub fn masked_bce(logits: &[f64], target: &[f64], mask: &[f64]) -> (f64, Vec<f64>) {
    let n = mask.iter().filter(|&&m| m > 0.0).count();
    let mut grad = vec![0.0; logits.len()];
    if n == 0 {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for i in 0..logits.len() {
        if mask[i] <= 0.0 {
            continue;
        }
        let (z, y) = (logits[i], target[i]);
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad[i] = (sigmoid(z) - y) / n as f64;
    }
    (loss / n as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(c: usize, h: usize, w: usize, seed: u64) -> GridTensor {
        let mut rng = crate::rng_from_seed(seed);
        let mut t = GridTensor::zeros(c, h, w);
        for v in &mut t.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        t
    }

    fn dot(a: &GridTensor, b: &GridTensor) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for k in [1, 3] {
            let x = random(2, 4, 6, 1);
            let mut rng = crate::rng_from_seed(2);
            let w: Vec<f64> = (0..3 * 2 * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = vec![0.1, -0.2, 0.3];
            let r = random(3, 4, 6, 3);
            let f = |x: &GridTensor, w: &[f64]| dot(&conv_forward(x, w, &b, 3, k), &r);
            let mut gw = vec![0.0; w.len()];
            let mut gb = vec![0.0; 3];
            let gx = conv_backward(&x, &w, &r, k, &mut gw, &mut gb, true).unwrap();
            let h = 1e-4;
            for i in 0..w.len() {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[i] += h;
                wm[i] -= h;
                assert!(rel(gw[i], (f(&x, &wp) - f(&x, &wm)) / (2.0 * h)) < 1e-6);
            }
            for i in 0..x.data.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data[i] += h;
                xm.data[i] -= h;
                assert!(rel(gx.data[i], (f(&xp, &w) - f(&xm, &w)) / (2.0 * h)) < 1e-6);
            }
            for o in 0..3 {
                assert!(rel(gb[o], r.plane(o).iter().sum()) < 1e-12);
            }
        }
    }

    #[test]
    fn leaky_gradient() {
        let z = random(1, 4, 4, 5);
        let r = random(1, 4, 4, 6);
        let g = leaky_backward(&z, &r, 0.01);
        let h = 1e-6;
        for i in 0..z.data.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp.data[i] += h;
            zm.data[i] -= h;
            let fd = (dot(&leaky_forward(&zp, 0.01), &r) - dot(&leaky_forward(&zm, 0.01), &r)) / (2.0 * h);
            assert!(rel(g.data[i], fd) < 1e-6);
        }
    }

    #[test]
    fn maxpool_routes_to_argmax_only() {
        let mut x = GridTensor::zeros(1, 2, 4);
        x.data = vec![1.0, 5.0, 2.0, 2.0, 3.0, 4.0, -1.0, 0.0];
        let (y, arg) = maxpool_forward(&x);
        assert_eq!(y.data, vec![5.0, 2.0]);
        // ties resolve to the first cell in row-major order
        assert_eq!(arg, vec![1, 2]);
        let mut g = GridTensor::zeros(1, 1, 2);
        g.data = vec![10.0, 20.0];
        let gx = maxpool_backward((1, 2, 4), &arg, &g);
        assert_eq!(gx.data, vec![0.0, 10.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn upsample_concat_gradient() {
        let a = random(2, 2, 3, 7);
        let s = random(1, 4, 6, 8);
        let r = random(3, 4, 6, 9);
        let f = |a: &GridTensor| dot(&concat(&upsample_forward(a), &s), &r);
        let (gu, _) = split_channels(&r, 2);
        let ga = upsample_backward(&gu);
        let h = 1e-5;
        for i in 0..a.data.len() {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap.data[i] += h;
            am.data[i] -= h;
            assert!(rel(ga.data[i], (f(&ap) - f(&am)) / (2.0 * h)) < 1e-7);
        }
    }

    #[test]
    fn bce_gradient_and_mask() {
        let z = vec![0.3, -2.0, 4.0, 0.0];
        let y = vec![1.0, 0.0, 0.5, 1.0];
        let m = vec![1.0, 1.0, 1.0, 0.0];
        let (l, g) = masked_bce(&z, &y, &m);
        let naive: f64 = (0..3)
            .map(|i| {
                let p = sigmoid(z[i]);
                -(y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 3.0;
        assert!((l - naive).abs() < 1e-12);
        assert_eq!(g[3], 0.0);
        let h = 1e-6;
        for i in 0..3 {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[i] += h;
            zm[i] -= h;
            let fd = (masked_bce(&zp, &y, &m).0 - masked_bce(&zm, &y, &m).0) / (2.0 * h);
            assert!(rel(g[i], fd) < 1e-6);
        }
        let (_, g2) = masked_bce(&z, &[9.0, 0.0, 0.5, -3.0], &m);
        assert_eq!(g2[3], 0.0);
    }
}
