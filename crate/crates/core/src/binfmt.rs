//! Little-endian byte encoding shared by the DB, weight and dataset files.
//!
//! Every file is `magic (4 bytes) | version u16 | body | crc32 u32`, where
//! the CRC covers everything before it.

use crate::circuit::{Circuit, Gate, GateKind, GateSet};
use crate::error::{Error, Result};

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        ByteWriter::default()
    }

    pub fn with_header(magic: &[u8; 4], version: u16) -> Self {
        let mut w = ByteWriter::default();
        w.bytes(magic);
        w.u16(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// u8 length prefix.
    pub fn short_str(&mut self, s: &str) {
        assert!(s.len() <= u8::MAX as usize);
        self.u8(s.len() as u8);
        self.bytes(s.as_bytes());
    }

    /// Name, kind count, kind codes.
    pub fn gate_set(&mut self, gs: &GateSet) {
        self.short_str(gs.name());
        self.u8(gs.kinds().len() as u8);
        for k in gs.kinds() {
            self.u8(k.code());
        }
    }

    /// Gate count u32, then per gate: kind u8, operands u8 each, angle f64 if
    /// parameterized.
    pub fn circuit_gates(&mut self, c: &Circuit) {
        self.u32(c.len() as u32);
        for g in c.gates() {
            self.u8(g.kind.code());
            for &q in g.qubits() {
                self.u8(q as u8);
            }
            if let Some(a) = g.angle {
                self.f64(a);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Appends the CRC32 of everything written so far.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct ByteReader<'a> {
    what: &'static str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(what: &'static str, data: &'a [u8]) -> Self {
        ByteReader { what, data, pos: 0 }
    }

    /// Checks the trailing CRC and the magic/version header. The returned
    /// reader is positioned after the version and stops before the CRC.
    pub fn open(what: &'static str, data: &'a [u8], magic: &[u8; 4], version: u16) -> Result<Self> {
        if data.len() >= 4 && &data[..4] != magic {
            return Err(Error::BadMagic { what });
        }
        if data.len() < 10 {
            return Err(Error::Checksum { what });
        }
        let (body, tail) = data.split_at(data.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let found = u16::from_le_bytes([body[4], body[5]]);
        if found != version {
            return Err(Error::Version {
                what,
                found,
                expected: version,
            });
        }
        if crc32fast::hash(body) != stored {
            return Err(Error::Checksum { what });
        }
        Ok(ByteReader {
            what,
            data: body,
            pos: 6,
        })
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            msg: msg.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(self.err(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn short_str(&mut self) -> Result<String> {
        let n = self.u8()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err("invalid utf-8 string"))
    }

    pub fn gate_set(&mut self) -> Result<GateSet> {
        let name = self.short_str()?;
        let n = self.u8()? as usize;
        let mut kinds = Vec::with_capacity(n);
        for _ in 0..n {
            let code = self.u8()?;
            kinds.push(GateKind::from_code(code).ok_or_else(|| self.err(format!("unknown gate code {code}")))?);
        }
        GateSet::new(name, kinds).map_err(|e| self.err(e.to_string()))
    }

    pub fn circuit_gates(&mut self, width: usize) -> Result<Circuit> {
        let n = self.u32()? as usize;
        let mut gates = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let code = self.u8()?;
            let kind = GateKind::from_code(code).ok_or_else(|| self.err(format!("unknown gate code {code}")))?;
            let mut qs = [0usize; 2];
            for q in qs.iter_mut().take(kind.arity()) {
                *q = self.u8()? as usize;
            }
            let angle = if kind.is_parameterized() { Some(self.f64()?) } else { None };
            gates.push(Gate::new(kind, &qs[..kind.arity()], angle).map_err(|e| self.err(e.to_string()))?);
        }
        Circuit::from_gates(width, gates).map_err(|e| self.err(e.to_string()))
    }

    /// The bytes this reader walks over; positions index into it.
    pub fn data(&self) -> &'a [u8] {
        self.data
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.err(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}
