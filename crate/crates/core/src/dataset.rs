//! Self-supervised labels: probe a fixed circuit with uniform windows and
//! mark the gates of every window part that admits a shorter equivalent.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::binfmt::{ByteReader, ByteWriter};
use crate::circuit::{random_circuit, schedule, split_with_layout, Circuit, Gate, GateSet, SlotLayout};
use crate::error::{Error, Result};
use crate::optimize::Reducer;
use crate::qasm::{emit_qasm, parse_qasm};
use crate::sampler::{sample_2d_uniform, WindowLimits};
use crate::unitary::compact;
use crate::{derive_seed, rng_from_seed};

const MAGIC: &[u8; 4] = b"QGDS";
const VERSION: u16 = 1;
const JOURNAL_MAGIC: &[u8; 4] = b"QGDJ";

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub circuit: Circuit,
    /// `width x depth` grid over `schedule(circuit)`, qubit-major.
    pub target: Vec<f32>,
    pub seed: u64,
    pub probes: u32,
}

impl LabeledSample {
    pub fn depth(&self) -> usize {
        if self.circuit.width() == 0 {
            0
        } else {
            self.target.len() / self.circuit.width()
        }
    }

    pub fn is_positive(&self) -> bool {
        self.target.iter().any(|&v| v > 0.0)
    }

    fn encode_into(&self, w: &mut ByteWriter) {
        let start = w.len();
        w.u64(self.seed);
        w.u32(self.probes);
        let text = emit_qasm(&self.circuit);
        w.u32(text.len() as u32);
        w.bytes(text.as_bytes());
        w.u32(self.circuit.width() as u32);
        w.u32(self.depth() as u32);
        for &v in &self.target {
            w.f32(v);
        }
        let crc = crc32fast::hash(&w.as_slice()[start..]);
        w.u32(crc);
    }

    fn decode_from(r: &mut ByteReader) -> Result<Self> {
        let start = r.position();
        let seed = r.u64()?;
        let probes = r.u32()?;
        let n = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(n)?).map_err(|_| r.err("sample circuit is not UTF-8"))?;
        let circuit = parse_qasm(text)?;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        if h != circuit.width() || w != schedule(&circuit).depth() {
            return Err(r.err(format!("target {h}x{w} does not match the circuit layout")));
        }
        let target = (0..h * w).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let end = r.position();
        let crc = r.u32()?;
        if crc != crc32fast::hash(&r.data()[start..end]) {
            return Err(Error::Checksum { what: "dataset sample" });
        }
        Ok(LabeledSample {
            circuit,
            target,
            seed,
            probes,
        })
    }
}

/// Sets the target to 1 on the gates of every probed window part that a
/// shorter equivalent exists for. A window's middle is split into
/// qubit-connected components, each judged on its own.
pub fn label_circuit<R: Rng>(c: &Circuit, reducer: &Reducer, probes: usize, limits: &WindowLimits, rng: &mut R) -> Vec<f32> {
    let layout = schedule(c);
    let mut target = vec![0.0f32; c.width() * layout.depth()];
    if layout.depth() == 0 {
        return target;
    }
    let mut seen: HashMap<Vec<usize>, bool> = HashMap::new();
    for _ in 0..probes {
        let w = sample_2d_uniform(&layout, limits, rng);
        let Some(seg) = split_with_layout(c, &layout, &w) else {
            continue;
        };
        for part in components(c, &seg.middle_indices) {
            if part.len() < 2 {
                continue;
            }
            let ok = *seen.entry(part.clone()).or_insert_with(|| {
                let sub = Circuit::from_gates(c.width(), part.iter().map(|&i| c.gates()[i]).collect()).expect("sub-circuit");
                let block = compact(&sub);
                block.width() <= 3 && reducer.reduce(&block.sub).is_some()
            });
            if ok {
                mark(&mut target, &layout, c.gates(), &part);
            }
        }
    }
    target
}

fn mark(target: &mut [f32], layout: &SlotLayout, gates: &[Gate], idx: &[usize]) {
    let d = layout.depth();
    for &i in idx {
        for &q in gates[i].qubits() {
            target[q * d + layout.slot(i)] = 1.0;
        }
    }
}

/// Groups gate indices into components linked by shared qubits.
fn components(c: &Circuit, idx: &[usize]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..c.width()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &i in idx {
        let qs = c.gates()[i].qubits();
        if qs.len() == 2 {
            let (a, b) = (find(&mut parent, qs[0]), find(&mut parent, qs[1]));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &i in idx {
        let root = find(&mut parent, c.gates()[i].qubits()[0]);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, g)) => g.push(i),
            None => groups.push((root, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Separable Gaussian blur followed by re-masking to occupied cells.
pub fn blur_target(target: &[f32], layout: &SlotLayout, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return target.to_vec();
    }
    let (h, w) = (layout.width(), layout.depth());
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for q in 0..h {
            for t in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (k, &kv) in kernel.iter().enumerate() {
                    let d = k as isize - r;
                    let (qq, tt) = if horizontal { (q as isize, t as isize + d) } else { (q as isize + d, t as isize) };
                    if qq >= 0 && tt >= 0 && (qq as usize) < h && (tt as usize) < w {
                        acc += kv * src[qq as usize * w + tt as usize];
                        norm += kv;
                    }
                }
                out[q * w + t] = acc / norm;
            }
        }
        out
    };
    let src: Vec<f64> = target.iter().map(|&v| v as f64).collect();
    let out = pass(&pass(&src, true), false);
    let mut res = vec![0.0f32; h * w];
    for q in 0..h {
        for t in 0..w {
            if layout.at(q, t).is_some() {
                res[q * w + t] = out[q * w + t].clamp(0.0, 1.0) as f32;
            }
        }
    }
    res
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub gate_set: GateSet,
    pub count: usize,
    pub width: usize,
    pub length: usize,
    pub probes: usize,
    pub seed: u64,
    pub limits: WindowLimits,
    pub blur_sigma: f64,
    /// Samples generated (and journaled) per parallel chunk.
    pub chunk: usize,
}

impl DatasetConfig {
    pub fn new(gate_set: GateSet) -> Self {
        DatasetConfig {
            gate_set,
            count: 2000,
            width: 8,
            length: 100,
            probes: 400,
            seed: 0,
            limits: WindowLimits::default(),
            blur_sigma: 0.0,
            chunk: 64,
        }
    }

    fn fingerprint(&self) -> u64 {
        let text = format!(
            "{}|{}|{}|{}|{}|{}|{:?}|{}",
            self.gate_set.name(),
            self.count,
            self.width,
            self.length,
            self.probes,
            self.seed,
            self.limits,
            self.blur_sigma
        );
        crc32fast::hash(text.as_bytes()) as u64 | ((text.len() as u64) << 32)
    }
}

/// Sample `index` of the dataset described by `cfg`.
pub fn generate_sample(cfg: &DatasetConfig, reducer: &Reducer, index: usize) -> Result<LabeledSample> {
    let seed = derive_seed(cfg.seed, 0x6461_7461, index as u64);
    let circuit = random_circuit(cfg.width, cfg.length, &cfg.gate_set, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, 1, 0));
    let raw = label_circuit(&circuit, reducer, cfg.probes, &cfg.limits, &mut rng);
    let target = blur_target(&raw, &schedule(&circuit), cfg.blur_sigma);
    Ok(LabeledSample {
        circuit,
        target,
        seed,
        probes: cfg.probes as u32,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub gate_set: GateSet,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(MAGIC, VERSION);
        w.gate_set(&self.gate_set);
        w.u64(self.samples.len() as u64);
        for s in &self.samples {
            s.encode_into(&mut w);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open("dataset", data, MAGIC, VERSION)?;
        let gate_set = r.gate_set()?;
        let n = r.u64()? as usize;
        let mut samples = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let s = LabeledSample::decode_from(&mut r)?;
            s.circuit.check_gate_set(&gate_set)?;
            samples.push(s);
        }
        r.expect_end()?;
        Ok(Dataset { gate_set, samples })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomically(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::from_bytes(&fs::read(path)?)
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = sibling(path, ".tmp");
    let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Path of the resume journal kept next to `out` while generating.
pub fn journal_path(out: &Path) -> PathBuf {
    sibling(out, ".partial")
}

/// Generates `cfg.count` samples into `out`. Completed chunks are appended to
/// a journal next to `out`, so an interrupted run resumes where it stopped.
/// `progress` receives `(done, total)` after each chunk.
pub fn generate_dataset(cfg: &DatasetConfig, reducer: &Reducer, out: &Path, mut progress: impl FnMut(usize, usize)) -> Result<Dataset> {
    if cfg.chunk == 0 {
        return Err(Error::Config("chunk size must be at least 1".into()));
    }
    cfg.limits.validate()?;
    let journal = journal_path(out);
    let mut samples = read_journal(&journal, cfg)?;
    let mut file = if samples.is_empty() {
        let mut f = File::create(&journal)?;
        let mut w = ByteWriter::new();
        w.bytes(JOURNAL_MAGIC);
        w.u64(cfg.fingerprint());
        f.write_all(w.as_slice())?;
        f
    } else {
        log::info!("resuming dataset at sample {}", samples.len());
        OpenOptions::new().append(true).open(&journal)?
    };
    progress(samples.len(), cfg.count);
    while samples.len() < cfg.count {
        let lo = samples.len();
        let hi = (lo + cfg.chunk).min(cfg.count);
        let chunk = (lo..hi).into_par_iter().map(|i| generate_sample(cfg, reducer, i)).collect::<Result<Vec<_>>>()?;
        let mut w = ByteWriter::new();
        for s in &chunk {
            s.encode_into(&mut w);
        }
        file.write_all(w.as_slice())?;
        file.flush()?;
        samples.extend(chunk);
        progress(samples.len(), cfg.count);
    }
    drop(file);
    let ds = Dataset {
        gate_set: cfg.gate_set.clone(),
        samples,
    };
    ds.save(out)?;
    fs::remove_file(&journal)?;
    Ok(ds)
}

/// Valid samples from an existing journal for the same config; empty when
/// there is none or it belongs to another config. A torn tail is dropped.
fn read_journal(path: &Path, cfg: &DatasetConfig) -> Result<Vec<LabeledSample>> {
    let mut data = Vec::new();
    match File::open(path) {
        Ok(mut f) => f.read_to_end(&mut data)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut r = ByteReader::new("dataset journal", &data);
    let header_ok = r.take(4).ok() == Some(&JOURNAL_MAGIC[..]) && r.u64().ok() == Some(cfg.fingerprint());
    if !header_ok {
        return Ok(Vec::new());
    }
    let mut samples = Vec::new();
    let mut good_len = r.position();
    while r.remaining() > 0 && samples.len() < cfg.count {
        match LabeledSample::decode_from(&mut r) {
            Ok(s) => {
                samples.push(s);
                good_len = r.position();
            }
            Err(_) => break,
        }
    }
    if good_len < data.len() {
        OpenOptions::new().write(true).open(path)?.set_len(good_len as u64)?;
    }
    Ok(samples)
}
