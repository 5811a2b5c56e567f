//! A small OpenQASM 2.0 subset.
//!
//! Accepted: `OPENQASM 2.0;`, `include "...";`, one `qreg`, `//` comments,
//! and the gates `rx ry rz rxx cz cx h x z t tdg s sdg ccx`. Everything
//! other than the five native kinds is expanded on import (equal up to
//! global phase). Angle arguments are arithmetic over numbers and `pi`.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn parse_qasm(text: &str) -> Result<Circuit> {
    let mut reg: Option<(String, usize)> = None;
    let mut gates = Vec::new();

    for (line, stmt) in statements(text) {
        let stmt = stmt.trim();
        if stmt.is_empty() {
            continue;
        }
        let (head, rest) = split_head(stmt);
        match head {
            "OPENQASM" => {
                if rest.trim() != "2.0" {
                    return Err(parse_err(line, format!("unsupported version {:?}", rest.trim())));
                }
            }
            "include" => {}
            "qreg" => {
                if reg.is_some() {
                    return Err(parse_err(line, "only one quantum register is supported"));
                }
                let (name, size) = parse_operand(rest.trim(), line)?;
                if size == 0 {
                    return Err(parse_err(line, "register size must be positive"));
                }
                reg = Some((name, size));
            }
            "creg" | "measure" | "barrier" | "reset" | "if" | "gate" | "opaque" => {
                return Err(parse_err(line, format!("unsupported statement `{head}`")));
            }
            _ => {
                let (name, size) = reg
                    .as_ref()
                    .ok_or_else(|| parse_err(line, "gate before qreg declaration"))?;
                let (params, args) = split_call(stmt, line)?;
                let mut qubits = Vec::new();
                for a in args.split(',') {
                    let (rname, idx) = parse_operand(a.trim(), line)?;
                    if &rname != name {
                        return Err(parse_err(line, format!("unknown register `{rname}`")));
                    }
                    if idx >= *size {
                        return Err(parse_err(line, format!("qubit {idx} out of range for {name}[{size}]")));
                    }
                    qubits.push(idx);
                }
                let angles = params
                    .map(|p| {
                        p.split(',')
                            .map(|e| eval_angle(e, line))
                            .collect::<Result<Vec<_>>>()
                    })
                    .transpose()?
                    .unwrap_or_default();
                expand_gate(head_name(stmt), &angles, &qubits, line, &mut gates)?;
            }
        }
    }
    let (_, width) = reg.ok_or_else(|| parse_err(1, "missing qreg declaration"))?;
    Circuit::from_gates(width, gates)
}

/// `OPENQASM 2.0` header, `qelib1.inc`, `qreg q[width]`, one gate per line.
/// Angles are printed with 17 significant digits.
pub fn emit_qasm(c: &Circuit) -> String {
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", c.width());
    for g in c.gates() {
        out.push_str(g.kind.name());
        if let Some(a) = g.angle {
            let _ = write!(out, "({a:.16e})");
        }
        let args: Vec<String> = g.qubits().iter().map(|q| format!("q[{q}]")).collect();
        let _ = writeln!(out, " {};", args.join(","));
    }
    out
}

/// Splits on `;` keeping the 1-based line each statement starts on, with
/// `//` comments stripped.
fn statements(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 1;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split("//").next().unwrap_or("");
        for ch in line.chars() {
            if ch == ';' {
                out.push((start, std::mem::take(&mut cur)));
                start = i + 1;
            } else {
                if cur.trim().is_empty() {
                    start = i + 1;
                }
                cur.push(ch);
            }
        }
        cur.push(' ');
    }
    if !cur.trim().is_empty() {
        out.push((start, cur));
    }
    out
}

fn split_head(stmt: &str) -> (&str, &str) {
    let end = stmt
        .find(|c: char| c.is_whitespace() || c == '(')
        .unwrap_or(stmt.len());
    (&stmt[..end], &stmt[end..])
}

fn head_name(stmt: &str) -> &str {
    split_head(stmt).0
}

/// Returns the parenthesised parameter text (if any) and the operand text.
fn split_call(stmt: &str, line: usize) -> Result<(Option<&str>, &str)> {
    let (head, rest) = split_head(stmt);
    let rest = rest.trim_start();
    if let Some(inner) = rest.strip_prefix('(') {
        let mut depth = 1;
        for (i, ch) in inner.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok((Some(&inner[..i]), inner[i + 1..].trim()));
                    }
                }
                _ => {}
            }
        }
        Err(parse_err(line, format!("unbalanced parentheses in `{head}`")))
    } else {
        Ok((None, rest.trim()))
    }
}

fn parse_operand(s: &str, line: usize) -> Result<(String, usize)> {
    let bad = || parse_err(line, format!("malformed operand `{s}`"));
    let open = s.find('[').ok_or_else(bad)?;
    let close = s.rfind(']').ok_or_else(bad)?;
    if close != s.len() - 1 || close < open {
        return Err(bad());
    }
    let name = s[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return Err(bad());
    }
    let idx = s[open + 1..close].trim().parse::<usize>().map_err(|_| bad())?;
    Ok((name.to_string(), idx))
}

fn expand_gate(name: &str, angles: &[f64], q: &[usize], line: usize, out: &mut Vec<Gate>) -> Result<()> {
    let want = |n_angles: usize, n_qubits: usize| -> Result<()> {
        if angles.len() != n_angles {
            return Err(parse_err(line, format!("`{name}` takes {n_angles} parameter(s), got {}", angles.len())));
        }
        if q.len() != n_qubits {
            return Err(parse_err(line, format!("`{name}` takes {n_qubits} qubit(s), got {}", q.len())));
        }
        let mut seen = q.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != q.len() {
            return Err(parse_err(line, format!("`{name}` operands must be distinct")));
        }
        Ok(())
    };
    match name {
        "rx" | "ry" | "rz" => {
            want(1, 1)?;
            let kind = match name {
                "rx" => GateKind::RX,
                "ry" => GateKind::RY,
                _ => GateKind::RZ,
            };
            out.push(Gate::new(kind, q, Some(angles[0]))?);
        }
        "rxx" => {
            want(1, 2)?;
            out.push(Gate::rxx(q[0], q[1], angles[0]));
        }
        "cz" => {
            want(0, 2)?;
            out.push(Gate::cz(q[0], q[1]));
        }
        "x" => {
            want(0, 1)?;
            out.push(Gate::rx(q[0], PI));
        }
        "z" | "t" | "tdg" | "s" | "sdg" => {
            want(0, 1)?;
            let theta = match name {
                "z" => PI,
                "t" => PI / 4.0,
                "tdg" => -PI / 4.0,
                "s" => PI / 2.0,
                _ => -PI / 2.0,
            };
            out.push(Gate::rz(q[0], theta));
        }
        "h" => {
            want(0, 1)?;
            push_h(q[0], out);
        }
        "cx" | "CX" => {
            want(0, 2)?;
            push_cx(q[0], q[1], out);
        }
        "ccx" => {
            want(0, 3)?;
            push_ccx(q[0], q[1], q[2], out);
        }
        other => return Err(parse_err(line, format!("unknown gate `{other}`"))),
    }
    Ok(())
}

fn push_h(q: usize, out: &mut Vec<Gate>) {
    out.extend([Gate::rz(q, PI / 2.0), Gate::rx(q, PI / 2.0), Gate::rz(q, PI / 2.0)]);
}

fn push_cx(c: usize, t: usize, out: &mut Vec<Gate>) {
    push_h(t, out);
    out.push(Gate::cz(c, t));
    push_h(t, out);
}

// textbook 6-CNOT Toffoli
fn push_ccx(a: usize, b: usize, c: usize, out: &mut Vec<Gate>) {
    let t = |q, out: &mut Vec<Gate>| out.push(Gate::rz(q, PI / 4.0));
    let tdg = |q, out: &mut Vec<Gate>| out.push(Gate::rz(q, -PI / 4.0));
    push_h(c, out);
    push_cx(b, c, out);
    tdg(c, out);
    push_cx(a, c, out);
    t(c, out);
    push_cx(b, c, out);
    tdg(c, out);
    push_cx(a, c, out);
    t(b, out);
    t(c, out);
    push_h(c, out);
    push_cx(a, b, out);
    t(a, out);
    tdg(b, out);
    push_cx(a, b, out);
}

/// Evaluates `+ - * /`, parentheses, unary minus, numeric literals and `pi`.
fn eval_angle(src: &str, line: usize) -> Result<f64> {
    let toks = tokenize(src, line)?;
    let mut p = ExprParser { toks: &toks, pos: 0, line, src };
    let v = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.fail());
    }
    if !v.is_finite() {
        return Err(parse_err(line, format!("angle `{}` is not finite", src.trim())));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Op(char),
}

fn tokenize(src: &str, line: usize) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*/()".contains(c) {
            toks.push(Tok::Op(c));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let lit: String = chars[start..i].iter().collect();
            let v = lit
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("malformed number `{lit}`")))?;
            toks.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if word != "pi" {
                return Err(parse_err(line, format!("unknown identifier `{word}` in angle")));
            }
            toks.push(Tok::Num(PI));
        } else {
            return Err(parse_err(line, format!("unexpected `{c}` in angle `{}`", src.trim())));
        }
    }
    Ok(toks)
}

struct ExprParser<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
    src: &'a str,
}

impl ExprParser<'_> {
    fn fail(&self) -> Error {
        parse_err(self.line, format!("malformed angle expression `{}`", self.src.trim()))
    }

    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<f64> {
        let mut v = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let r = self.term()?;
            v = if op == '+' { v + r } else { v - r };
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<f64> {
        let mut v = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let r = self.unary()?;
            v = if op == '*' { v * r } else { v / r };
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<f64> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<f64> {
        match self.toks.get(self.pos) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(*v)
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek_op() != Some(')') {
                    return Err(self.fail());
                }
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.fail()),
        }
    }
}
