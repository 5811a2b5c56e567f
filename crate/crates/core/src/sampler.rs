//! Window proposal strategies: the 1D token-chain baseline, uniform 2D
//! windows, and 2D windows anchored by an attention map.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::circuit::{Circuit, SlotLayout, Window};
use crate::error::{Error, Result};

/// Per-cell scores in [0, 1] over a qubits x slots grid (qubit-major).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    qubits: usize,
    slots: usize,
    values: Vec<f32>,
}

impl AttentionMap {
    pub fn new(qubits: usize, slots: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != qubits * slots {
            return Err(Error::Config(format!(
                "attention map of {} values does not match {qubits}x{slots}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Config(format!("attention value {v} outside [0, 1]")));
        }
        Ok(AttentionMap { qubits, slots, values })
    }

    pub fn constant(qubits: usize, slots: usize, v: f32) -> Self {
        AttentionMap::new(qubits, slots, vec![v; qubits * slots]).expect("valid constant map")
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, q: usize, t: usize) -> f32 {
        self.values[q * self.slots + t]
    }

    pub fn matches(&self, layout: &SlotLayout) -> bool {
        self.qubits == layout.width() && self.slots == layout.depth()
    }

    /// Crops or zero-pads to `layout`'s shape.
    pub fn fit_to(&self, layout: &SlotLayout) -> AttentionMap {
        let (h, w) = (layout.width(), layout.depth());
        let mut values = vec![0.0; h * w];
        for q in 0..h.min(self.qubits) {
            for t in 0..w.min(self.slots) {
                values[q * w + t] = self.get(q, t);
            }
        }
        AttentionMap { qubits: h, slots: w, values }
    }

    /// Zeroes every cell not occupied by a gate in `layout`.
    pub fn masked_to_occupied(&self, layout: &SlotLayout) -> AttentionMap {
        let mut out = self.fit_to(layout);
        for q in 0..out.qubits {
            for t in 0..out.slots {
                if layout.at(q, t).is_none() {
                    out.values[q * out.slots + t] = 0.0;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Uniform1d,
    Uniform2d,
    Guided,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Uniform1d => "1d",
            Strategy::Uniform2d => "2d",
            Strategy::Guided => "guided",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1d" => Ok(Strategy::Uniform1d),
            "2d" => Ok(Strategy::Uniform2d),
            "guided" => Ok(Strategy::Guided),
            other => Err(Error::Config(format!("unknown strategy `{other}` (expected 1d, 2d or guided)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowLimits {
    pub max_qubits: usize,
    pub max_slots: usize,
    /// Longest 1D run.
    pub max_run: usize,
    /// Commuting swaps attempted before each 1D draw.
    pub shuffles: usize,
    /// Uniform floor added to attention before anchoring.
    pub floor: f64,
}

impl Default for WindowLimits {
    fn default() -> Self {
        WindowLimits {
            max_qubits: 3,
            max_slots: 8,
            max_run: 6,
            shuffles: 3,
            floor: 0.02,
        }
    }
}

impl WindowLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_qubits == 0 || self.max_slots == 0 || self.max_run == 0 {
            return Err(Error::Config("window limits must be at least 1".into()));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::Config("attention floor must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

/// Attempts up to `shuffles` random adjacent swaps in the gate list, each
/// applied only when the two gates act on disjoint qubits. Returns the
/// number of swaps made.
pub fn shuffle_commuting<R: Rng>(c: &mut Circuit, shuffles: usize, rng: &mut R) -> usize {
    if c.len() < 2 {
        return 0;
    }
    let mut done = 0;
    for _ in 0..shuffles {
        let i = rng.gen_range(0..c.len() - 1);
        if c.swap_if_commuting(i) {
            done += 1;
        }
    }
    done
}

/// Shuffle step followed by a run `(position, length)`: position uniform
/// over starts that leave room for two gates, length uniform in
/// `[2, min(max_run, L - position)]`.
pub fn sample_1d<R: Rng>(c: &mut Circuit, limits: &WindowLimits, rng: &mut R) -> (usize, usize) {
    shuffle_commuting(c, limits.shuffles, rng);
    draw_run(c.len(), limits.max_run, rng)
}

pub(crate) fn draw_run<R: Rng>(len: usize, max_run: usize, rng: &mut R) -> (usize, usize) {
    if len < 2 || max_run < 2 {
        return (if len == 0 { 0 } else { rng.gen_range(0..len) }, len.min(1));
    }
    let m = rng.gen_range(0..=len - 2);
    let n_max = max_run.min(len - m);
    (m, rng.gen_range(2..=n_max))
}

fn spans<R: Rng>(limits: &WindowLimits, rng: &mut R) -> (usize, usize) {
    (rng.gen_range(1..=limits.max_qubits), rng.gen_range(1..=limits.max_slots))
}

/// Anchor uniform over cells, spans uniform up to the limits, clipped.
pub fn sample_2d_uniform<R: Rng>(layout: &SlotLayout, limits: &WindowLimits, rng: &mut R) -> Window {
    assert!(layout.depth() >= 1, "cannot sample a window on an empty grid");
    let q_lo = rng.gen_range(0..layout.width());
    let t_lo = rng.gen_range(0..layout.depth());
    let (qs, ts) = spans(limits, rng);
    Window::new(
        q_lo,
        (q_lo + qs - 1).min(layout.width() - 1),
        t_lo,
        (t_lo + ts - 1).min(layout.depth() - 1),
    )
}

/// Cumulative anchor weights `attention + floor` over a fixed map.
#[derive(Clone, Debug)]
pub struct GuidedSampler {
    qubits: usize,
    slots: usize,
    cumulative: Vec<f64>,
}

impl GuidedSampler {
    pub fn new(attn: &AttentionMap, floor: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = attn
            .values()
            .iter()
            .map(|&v| {
                acc += v as f64 + floor;
                acc
            })
            .collect();
        GuidedSampler {
            qubits: attn.qubits(),
            slots: attn.slots(),
            cumulative,
        }
    }

    /// Anchor cell drawn proportionally to its weight.
    pub fn anchor<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let total = *self.cumulative.last().expect("non-empty map");
        let idx = if total > 0.0 {
            let u = rng.gen_range(0.0..total);
            self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
        } else {
            rng.gen_range(0..self.cumulative.len())
        };
        (idx / self.slots, idx % self.slots)
    }

    /// Window containing a weighted anchor, spans as in the uniform law, with
    /// the anchor at a uniform offset inside the window.
    pub fn sample<R: Rng>(&self, layout: &SlotLayout, limits: &WindowLimits, rng: &mut R) -> Window {
        debug_assert_eq!((self.qubits, self.slots), (layout.width(), layout.depth()));
        let (aq, at) = self.anchor(rng);
        let (qs, ts) = spans(limits, rng);
        let q_lo = aq.saturating_sub(rng.gen_range(0..qs));
        let t_lo = at.saturating_sub(rng.gen_range(0..ts));
        Window::new(
            q_lo,
            (q_lo + qs - 1).min(layout.width() - 1),
            t_lo,
            (t_lo + ts - 1).min(layout.depth() - 1),
        )
    }
}

/// One-shot guided draw; build a [`GuidedSampler`] to reuse the prefix sums.
pub fn sample_2d_guided<R: Rng>(
    layout: &SlotLayout,
    attn: &AttentionMap,
    limits: &WindowLimits,
    rng: &mut R,
) -> Result<Window> {
    if !attn.matches(layout) {
        return Err(Error::Config(format!(
            "attention map {}x{} does not match layout {}x{}",
            attn.qubits(),
            attn.slots(),
            layout.width(),
            layout.depth()
        )));
    }
    Ok(GuidedSampler::new(attn, limits.floor).sample(layout, limits, rng))
}
