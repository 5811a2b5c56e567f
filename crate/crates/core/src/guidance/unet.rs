use std::path::Path;

use rand::Rng;

use super::encode::{channel_count, encode_with_layout, GridTensor};
use super::layers::*;
use crate::binfmt::{ByteReader, ByteWriter};
use crate::circuit::{schedule, Circuit, GateSet};
use crate::error::{Error, Result};
use crate::sampler::AttentionMap;

const MAGIC: &[u8; 4] = b"QGNW";
const VERSION: u16 = 1;

/// Layer widths and activation constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arch {
    pub in_channels: usize,
    /// Channels of the two encoder and two decoder blocks.
    pub base: usize,
    /// Channels of the bottleneck block.
    pub mid: usize,
    pub slope: f64,
    pub dropout: f64,
}

impl Arch {
    pub fn standard(in_channels: usize) -> Self {
        Arch {
            in_channels,
            base: 16,
            mid: 32,
            slope: 0.01,
            dropout: 0.1,
        }
    }

    pub fn for_gate_set(gs: &GateSet) -> Self {
        Arch::standard(channel_count(gs))
    }

    /// `(in, out, kernel)` of every convolution in parameter order:
    /// E1a E1b E2a E2b Ba Bb D1a D1b D2a D2b head.
    pub fn convs(&self) -> [(usize, usize, usize); 11] {
        let (c, b, m) = (self.in_channels, self.base, self.mid);
        [
            (c, b, 3),
            (b, b, 3),
            (b, b, 3),
            (b, b, 3),
            (b, m, 3),
            (m, m, 3),
            (m + b, b, 3),
            (b, b, 3),
            (b + b, b, 3),
            (b, b, 3),
            (b, 1, 1),
        ]
    }

    /// Offsets of each convolution's weights; its bias follows the weights.
    fn offsets(&self) -> [usize; 12] {
        let mut off = [0; 12];
        for (i, (cin, cout, k)) in self.convs().into_iter().enumerate() {
            off[i + 1] = off[i] + cout * cin * k * k + cout;
        }
        off
    }

    pub fn param_count(&self) -> usize {
        self.offsets()[11]
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base == 0 || self.mid == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !self.slope.is_finite() {
            return Err(Error::Config("dropout must be in [0, 1) and slope finite".into()));
        }
        Ok(())
    }
}

/// Activations kept by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    conv_in: Vec<GridTensor>,
    pre: Vec<GridTensor>,
    masks: Vec<Option<Vec<f64>>>,
    pool_args: Vec<Vec<usize>>,
    pool_shapes: Vec<(usize, usize, usize)>,
    pub logits: GridTensor,
}

impl Cache {
    /// Sign of every leaky-ReLU input followed by every pooling argmax. Two
    /// passes with equal signatures ran through the same linear piece.
    pub fn branch_signature(&self) -> Vec<usize> {
        let signs = self.pre.iter().flat_map(|t| t.data.iter().map(|&v| (v > 0.0) as usize));
        signs.chain(self.pool_args.iter().flatten().copied()).collect()
    }
}

/// Forward/backward over a borrowed parameter vector.
#[derive(Clone, Copy)]
pub struct Net<'a> {
    pub arch: Arch,
    pub params: &'a [f64],
}

impl<'a> Net<'a> {
    pub fn new(arch: Arch, params: &'a [f64]) -> Self {
        assert_eq!(params.len(), arch.param_count(), "parameter count does not match architecture");
        Net { arch, params }
    }

    fn layer(&self, i: usize) -> (&'a [f64], &'a [f64], usize, usize) {
        let (cin, cout, k) = self.arch.convs()[i];
        let off = self.arch.offsets()[i];
        let nw = cout * cin * k * k;
        (&self.params[off..off + nw], &self.params[off + nw..off + nw + cout], cout, k)
    }

    fn conv(&self, i: usize, x: &GridTensor, cache: &mut Cache) -> GridTensor {
        let (w, b, cout, k) = self.layer(i);
        cache.conv_in.push(x.clone());
        conv_forward(x, w, b, cout, k)
    }

    fn block<R: Rng>(&self, first: usize, x: &GridTensor, cache: &mut Cache, rng: Option<&mut R>) -> GridTensor {
        let z = self.conv(first, x, cache);
        let a = leaky_forward(&z, self.arch.slope);
        cache.pre.push(z);
        let z = self.conv(first + 1, &a, cache);
        let mut a = leaky_forward(&z, self.arch.slope);
        cache.pre.push(z);
        let mask = match rng {
            Some(rng) if self.arch.dropout > 0.0 => {
                let keep = 1.0 / (1.0 - self.arch.dropout);
                let m: Vec<f64> = (0..a.data.len())
                    .map(|_| if rng.gen::<f64>() < self.arch.dropout { 0.0 } else { keep })
                    .collect();
                for (v, s) in a.data.iter_mut().zip(&m) {
                    *v *= s;
                }
                Some(m)
            }
            _ => None,
        };
        cache.masks.push(mask);
        a
    }

    fn pool(&self, x: &GridTensor, cache: &mut Cache) -> GridTensor {
        let (y, arg) = maxpool_forward(x);
        cache.pool_args.push(arg);
        cache.pool_shapes.push((x.channels, x.height, x.width));
        y
    }

    /// Logits for `x`. Dropout is applied only when `rng` is given.
    pub fn forward<R: Rng>(&self, x: &GridTensor, mut rng: Option<&mut R>) -> Cache {
        assert_eq!(x.channels, self.arch.in_channels, "input channels do not match the model");
        assert!(x.height.is_multiple_of(4) && x.width.is_multiple_of(4), "spatial dims must be multiples of 4");
        let mut cache = Cache {
            conv_in: Vec::with_capacity(11),
            pre: Vec::with_capacity(10),
            masks: Vec::with_capacity(5),
            pool_args: Vec::with_capacity(2),
            pool_shapes: Vec::with_capacity(2),
            logits: GridTensor::zeros(1, 0, 0),
        };
        let s1 = self.block(0, x, &mut cache, rng.as_deref_mut());
        let p1 = self.pool(&s1, &mut cache);
        let s2 = self.block(2, &p1, &mut cache, rng.as_deref_mut());
        let p2 = self.pool(&s2, &mut cache);
        let s3 = self.block(4, &p2, &mut cache, rng.as_deref_mut());
        let c1 = concat(&upsample_forward(&s3), &s2);
        let s4 = self.block(6, &c1, &mut cache, rng.as_deref_mut());
        let c2 = concat(&upsample_forward(&s4), &s1);
        let s5 = self.block(8, &c2, &mut cache, rng.as_deref_mut());
        cache.logits = self.conv(10, &s5, &mut cache);
        cache
    }

    fn block_backward(&self, first: usize, cache: &Cache, g: GridTensor, grads: &mut [f64], need_input: bool) -> Option<GridTensor> {
        let mut g = g;
        if let Some(m) = &cache.masks[first / 2] {
            for (v, s) in g.data.iter_mut().zip(m) {
                *v *= s;
            }
        }
        let g = leaky_backward(&cache.pre[first + 1], &g, self.arch.slope);
        let g = self.conv_backward(first + 1, cache, &g, grads, true).unwrap();
        let g = leaky_backward(&cache.pre[first], &g, self.arch.slope);
        self.conv_backward(first, cache, &g, grads, need_input)
    }

    fn conv_backward(&self, i: usize, cache: &Cache, g: &GridTensor, grads: &mut [f64], need_input: bool) -> Option<GridTensor> {
        let (w, _, cout, k) = self.layer(i);
        let off = self.arch.offsets()[i];
        let nw = w.len();
        let (gw, rest) = grads[off..].split_at_mut(nw);
        conv_backward(&cache.conv_in[i], w, g, k, gw, &mut rest[..cout], need_input)
    }

    /// Accumulates parameter gradients for the logit gradient `g_logits`.
    pub fn backward(&self, cache: &Cache, g_logits: &GridTensor, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        let (b, m) = (self.arch.base, self.arch.mid);
        let g_s5 = self.conv_backward(10, cache, g_logits, grads, true).unwrap();
        let g_c2 = self.block_backward(8, cache, g_s5, grads, true).unwrap();
        let (g_u2, g_s1_skip) = split_channels(&g_c2, b);
        let g_s4 = upsample_backward(&g_u2);
        let g_c1 = self.block_backward(6, cache, g_s4, grads, true).unwrap();
        let (g_u1, g_s2_skip) = split_channels(&g_c1, m);
        let g_s3 = upsample_backward(&g_u1);
        let g_p2 = self.block_backward(4, cache, g_s3, grads, true).unwrap();
        let mut g_s2 = maxpool_backward(cache.pool_shapes[1], &cache.pool_args[1], &g_p2);
        add_assign(&mut g_s2, &g_s2_skip);
        let g_p1 = self.block_backward(2, cache, g_s2, grads, true).unwrap();
        let mut g_s1 = maxpool_backward(cache.pool_shapes[0], &cache.pool_args[0], &g_p1);
        add_assign(&mut g_s1, &g_s1_skip);
        self.block_backward(0, cache, g_s1, grads, false);
    }

    /// Deterministic probabilities for `x` (no dropout).
    pub fn predict(&self, x: &GridTensor) -> GridTensor {
        let mut out = self.forward::<crate::Rng>(x, None).logits;
        for v in &mut out.data {
            *v = sigmoid(*v);
        }
        out
    }
}

fn add_assign(a: &mut GridTensor, b: &GridTensor) {
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}

/// Attention network weights plus the gate set they were trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetModel {
    gate_set: GateSet,
    arch: Arch,
    params: Vec<f32>,
}

impl UNetModel {
    /// He-uniform weights, zero biases.
    pub fn new_random(gate_set: GateSet, arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        check_channels(&gate_set, &arch)?;
        let mut rng = crate::rng_from_seed(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        for (cin, cout, k) in arch.convs() {
            let bound = (6.0 / (cin * k * k) as f64).sqrt();
            params.extend((0..cout * cin * k * k).map(|_| rng.gen_range(-bound..bound) as f32));
            params.extend(std::iter::repeat_n(0.0, cout));
        }
        Ok(UNetModel { gate_set, arch, params })
    }

    pub fn from_params(gate_set: GateSet, arch: Arch, params: Vec<f32>) -> Result<Self> {
        arch.validate()?;
        check_channels(&gate_set, &arch)?;
        if params.len() != arch.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        Ok(UNetModel { gate_set, arch, params })
    }

    pub fn gate_set(&self) -> &GateSet {
        &self.gate_set
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_f64(&self) -> Vec<f64> {
        self.params.iter().map(|&p| p as f64).collect()
    }

    pub(crate) fn set_params(&mut self, p: &[f64]) {
        for (d, s) in self.params.iter_mut().zip(p) {
            *d = *s as f32;
        }
    }

    pub fn check_gate_set(&self, gs: &GateSet) -> Result<()> {
        if self.arch.in_channels != channel_count(gs) {
            return Err(Error::ChannelMismatch {
                expected: channel_count(gs),
                found: self.arch.in_channels,
            });
        }
        if &self.gate_set != gs {
            return Err(Error::GateSetMismatch {
                expected: gs.name().to_string(),
                found: self.gate_set.name().to_string(),
            });
        }
        Ok(())
    }

    /// Probabilities on the padded grid of an encoded tensor.
    pub fn predict(&self, x: &GridTensor) -> GridTensor {
        let p = self.params_f64();
        Net::new(self.arch, &p).predict(x)
    }

    /// Attention over `c`'s slot layout (padding cropped).
    pub fn infer(&self, c: &Circuit, gs: &GateSet) -> Result<AttentionMap> {
        self.check_gate_set(gs)?;
        let layout = schedule(c);
        let x = encode_with_layout(c, &layout, gs);
        let y = self.predict(&x);
        let (h, w) = (c.width(), layout.depth());
        let mut values = Vec::with_capacity(h * w);
        for q in 0..h {
            for t in 0..w {
                values.push(y.get(0, q, t) as f32);
            }
        }
        AttentionMap::new(h, w, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(MAGIC, VERSION);
        w.gate_set(&self.gate_set);
        w.u16(self.arch.in_channels as u16);
        w.u16(self.arch.base as u16);
        w.u16(self.arch.mid as u16);
        w.f64(self.arch.slope);
        w.f64(self.arch.dropout);
        w.u32(self.params.len() as u32);
        for &p in &self.params {
            w.f32(p);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open("model", data, MAGIC, VERSION)?;
        let gate_set = r.gate_set()?;
        let arch = Arch {
            in_channels: r.u16()? as usize,
            base: r.u16()? as usize,
            mid: r.u16()? as usize,
            slope: r.f64()?,
            dropout: r.f64()?,
        };
        let n = r.u32()? as usize;
        if n != arch.param_count() {
            return Err(r.err(format!("{n} parameters stored, architecture needs {}", arch.param_count())));
        }
        let params = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        UNetModel::from_params(gate_set, arch, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        UNetModel::from_bytes(&std::fs::read(path)?)
    }
}

fn check_channels(gs: &GateSet, arch: &Arch) -> Result<()> {
    if channel_count(gs) != arch.in_channels {
        return Err(Error::ChannelMismatch {
            expected: channel_count(gs),
            found: arch.in_channels,
        });
    }
    Ok(())
}
