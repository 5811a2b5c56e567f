use std::collections::BTreeMap;
use std::io;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::encode::{encode_with_layout, occupancy_mask, GridTensor};
use super::layers::masked_bce;
use super::unet::{Net, UNetModel};
use crate::circuit::{schedule, Circuit, GateSet};
use crate::error::{Error, Result};
use crate::{derive_seed, rng_from_seed};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            shuffle: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One encoded training pair; `target` and `mask` cover the padded grid.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub input: GridTensor,
    pub target: Vec<f64>,
    pub mask: Vec<f64>,
}

impl TrainSample {
    /// `target` is a `width x depth` grid (qubit-major) over `c`'s layout.
    pub fn from_circuit(c: &Circuit, target: &[f32], gs: &GateSet) -> Result<Self> {
        let layout = schedule(c);
        let (h, w) = (c.width(), layout.depth());
        if target.len() != h * w {
            return Err(Error::Config(format!("target of {} cells does not match {h}x{w}", target.len())));
        }
        let input = encode_with_layout(c, &layout, gs);
        let mut padded = vec![0.0; input.height * input.width];
        for q in 0..h {
            for t in 0..w {
                padded[q * input.width + t] = target[q * w + t] as f64;
            }
        }
        let mask = occupancy_mask(&input);
        Ok(TrainSample {
            input,
            target: padded,
            mask,
        })
    }
}

/// Masked mean BCE of one sample and the gradient of that loss.
pub fn sample_loss_and_grad(net: &Net, s: &TrainSample, dropout_seed: Option<u64>) -> (f64, Vec<f64>) {
    let mut rng = dropout_seed.map(rng_from_seed);
    let cache = net.forward(&s.input, rng.as_mut());
    let (loss, g) = masked_bce(&cache.logits.data, &s.target, &s.mask);
    let mut grads = vec![0.0; net.params.len()];
    let g = GridTensor {
        channels: 1,
        height: s.input.height,
        width: s.input.width,
        data: g,
    };
    net.backward(&cache, &g, &mut grads);
    (loss, grads)
}

pub fn sample_loss(net: &Net, s: &TrainSample) -> f64 {
    let cache = net.forward::<crate::Rng>(&s.input, None);
    masked_bce(&cache.logits.data, &s.target, &s.mask).0
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, p: &mut [f64], g: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..p.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Batches for one epoch: samples grouped by padded shape, each group cut
/// into batches, batch order shuffled.
fn epoch_batches(samples: &[TrainSample], cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 1, epoch as u64));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if cfg.shuffle {
        order.shuffle(&mut rng);
    }
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in order {
        let x = &samples[i].input;
        buckets.entry((x.height, x.width)).or_default().push(i);
    }
    let mut batches: Vec<Vec<usize>> = buckets
        .into_values()
        .flat_map(|b| b.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect();
    if cfg.shuffle {
        batches.shuffle(&mut rng);
    }
    batches
}

/// Adam on masked BCE. Returns the mean training loss of every epoch.
/// `progress` is called after each epoch with `(epoch, mean_loss)`.
pub fn train(
    model: &UNetModel,
    samples: &[TrainSample],
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<(UNetModel, Vec<f64>)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let arch = model.arch();
    if let Some(s) = samples.iter().find(|s| s.input.channels != arch.in_channels) {
        return Err(Error::ChannelMismatch {
            expected: arch.in_channels,
            found: s.input.channels,
        });
    }
    let mut params = model.params_f64();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(samples, cfg, epoch) {
            let net = Net::new(arch, &params);
            let per_sample: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| sample_loss_and_grad(&net, &samples[i], Some(derive_seed(cfg.seed, 2 + epoch as u64, i as u64))))
                .collect();
            let mut grads = vec![0.0; params.len()];
            for (loss, g) in &per_sample {
                total += loss;
                for (a, b) in grads.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            adam.step(&mut params, &grads, cfg);
        }
        let mean = total / samples.len() as f64;
        history.push(mean);
        progress(epoch + 1, mean);
    }
    let mut out = model.clone();
    out.set_params(&params);
    Ok((out, history))
}

/// CSV with header `epoch,mean_loss`; epochs count from 1.
pub fn write_loss_csv<W: io::Write>(history: &[f64], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["epoch", "mean_loss"])?;
    for (i, l) in history.iter().enumerate() {
        wr.write_record([(i + 1).to_string(), format!("{l:.17e}")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_loss_csv<R: io::Read>(r: R) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v = rec
            .get(1)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Format {
                what: "loss history",
                msg: format!("bad row {:?}", rec),
            })?;
        out.push(v);
    }
    Ok(out)
}
