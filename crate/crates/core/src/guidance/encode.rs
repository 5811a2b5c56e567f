use crate::circuit::{schedule, Circuit, GateSet, SlotLayout};

/// Dense `channels x height x width` array, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GridTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        GridTensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &GridTensor) -> bool {
        (self.channels, self.height, self.width) == (other.channels, other.height, other.width)
    }
}

/// Channels: one-hot gate kind (gate-set order), role 1, role 2, sin, cos, occupancy.
pub fn channel_count(gs: &GateSet) -> usize {
    gs.kinds().len() + 5
}

pub fn padded(n: usize) -> usize {
    n.div_ceil(4).max(1) * 4
}

pub fn encode(c: &Circuit, gs: &GateSet) -> GridTensor {
    encode_with_layout(c, &schedule(c), gs)
}

pub fn encode_with_layout(c: &Circuit, layout: &SlotLayout, gs: &GateSet) -> GridTensor {
    let k = gs.kinds().len();
    let (role1, role2, sin, cos, occ) = (k, k + 1, k + 2, k + 3, k + 4);
    let mut t = GridTensor::zeros(channel_count(gs), padded(c.width()), padded(layout.depth()));
    for (i, g) in c.gates().iter().enumerate() {
        let slot = layout.slot(i);
        let kind = gs.index_of(g.kind).expect("gate kind outside the gate set");
        for (pos, &q) in g.qubits().iter().enumerate() {
            t.set(kind, q, slot, 1.0);
            t.set(if pos == 0 { role1 } else { role2 }, q, slot, 1.0);
            if let Some(a) = g.angle {
                t.set(sin, q, slot, a.sin());
                t.set(cos, q, slot, a.cos());
            }
            t.set(occ, q, slot, 1.0);
        }
    }
    t
}

/// Occupied cells of an encoded tensor (last channel), as a 0/1 mask over `height x width`.
pub fn occupancy_mask(t: &GridTensor) -> Vec<f64> {
    t.plane(t.channels - 1).to_vec()
}
