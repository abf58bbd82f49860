//! OpenQASM 2.0 subset: parsing, lowering to [`Circuit`] and emission.
//!
//! `include "qelib1.inc";` is accepted but never read from disk; the gate
//! names below are built in. `measure` and `barrier` are kept as metadata.

use std::fmt::Write as _;

use thiserror::Error;

use crate::circuit::{Circuit, GateKind, GateOp};

/// Upper bound on qubits (or clbits) declared across all registers.
pub const MAX_DECLARED_BITS: usize = 4096;

const MAX_EXPR_DEPTH: usize = 128;

/// `(name, number of parameters, number of qubit arguments)`.
const GATES: [(&str, usize, usize); 21] = [
    ("h", 0, 1),
    ("x", 0, 1),
    ("y", 0, 1),
    ("z", 0, 1),
    ("s", 0, 1),
    ("sdg", 0, 1),
    ("t", 0, 1),
    ("tdg", 0, 1),
    ("rx", 1, 1),
    ("ry", 1, 1),
    ("rz", 1, 1),
    ("u1", 1, 1),
    ("u2", 2, 1),
    ("u3", 3, 1),
    ("U", 3, 1),
    ("cx", 0, 2),
    ("CX", 0, 2),
    ("cz", 0, 2),
    ("cu1", 1, 2),
    ("crz", 1, 2),
    ("swap", 0, 2),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QasmError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: unsupported gate '{name}'")]
    UnsupportedGate {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: undeclared register '{name}'")]
    UndeclaredRegister {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: index {index} out of range for register '{register}' of size {size}")]
    IndexOutOfRange {
        register: String,
        index: usize,
        size: usize,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: register declarations exceed {MAX_DECLARED_BITS} bits")]
    RegisterTooLarge { line: usize, col: usize },
    #[error("cannot emit {0} as OpenQASM 2.0")]
    NotEmittable(String),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Real(f64),
    Str(String),
    Arrow,
    Sym(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Real(r) => format!("number {r}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Arrow => "'->'".into(),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, QasmError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, expected: &str, found: String| QasmError::Syntax {
        line,
        col,
        expected: expected.into(),
        found,
    };
    while i < chars.len() {
        let ch = chars[i];
        let (tl, tc) = (line, col);
        if ch == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if ch.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if ch == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                col: tc,
            });
            continue;
        }
        if ch.is_ascii_digit() || (ch == '.' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()))
        {
            let start = i;
            let mut is_real = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                is_real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    return Err(err(line, col + (j - start), "exponent digits", "malformed number".into()));
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if is_real {
                Tok::Real(text.parse().map_err(|_| err(tl, tc, "number", text.clone()))?)
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| err(tl, tc, "integer that fits in 64 bits", text.clone()))?,
                )
            };
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if ch == '"' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                j += 1;
            }
            if j >= chars.len() || chars[j] != '"' {
                return Err(err(tl, tc, "closing '\"'", "unterminated string".into()));
            }
            out.push(Token {
                tok: Tok::Str(chars[start..j].iter().collect()),
                line: tl,
                col: tc,
            });
            col += j + 1 - i;
            i = j + 1;
            continue;
        }
        if ch == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Token {
                tok: Tok::Arrow,
                line: tl,
                col: tc,
            });
            i += 2;
            col += 2;
            continue;
        }
        if ";,()[]{}+-*/".contains(ch) {
            out.push(Token {
                tok: Tok::Sym(ch),
                line: tl,
                col: tc,
            });
            i += 1;
            col += 1;
            continue;
        }
        return Err(err(tl, tc, "a token", format!("character '{ch}'")));
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// A qubit or clbit operand: a whole register or one element.
#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Register(String),
    Indexed(String, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    Gate {
        name: String,
        params: Vec<f64>,
        args: Vec<Operand>,
        line: usize,
        col: usize,
    },
    Measure {
        qubit: Operand,
        clbit: Operand,
    },
    Barrier(Vec<Operand>),
}

/// Parsed program. Register lists keep declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct QasmProgram {
    pub version: String,
    pub includes: Vec<String>,
    pub qregs: Vec<(String, usize)>,
    pub cregs: Vec<(String, usize)>,
    pub statements: Vec<Statement>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    qregs: Vec<(String, usize)>,
    cregs: Vec<(String, usize)>,
    declared_bits: usize,
}

fn gate_arity(name: &str) -> Option<(usize, usize)> {
    GATES
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|&(_, p, q)| (p, q))
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn next(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, QasmError> {
        let t = self.peek();
        Err(QasmError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.into(),
            found: t.tok.describe(),
        })
    }

    fn expect_sym(&mut self, c: char) -> Result<(), QasmError> {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            Ok(())
        } else {
            self.fail(&format!("'{c}'"))
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), QasmError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                let t = self.next();
                Ok((s, t.line, t.col))
            }
            _ => self.fail("identifier"),
        }
    }

    fn int(&mut self) -> Result<u64, QasmError> {
        match self.peek().tok {
            Tok::Int(i) => {
                self.next();
                Ok(i)
            }
            _ => self.fail("integer"),
        }
    }

    fn program(&mut self) -> Result<QasmProgram, QasmError> {
        let mut version = "2.0".to_string();
        let mut includes = Vec::new();
        let mut statements = Vec::new();
        if self.peek().tok == Tok::Ident("OPENQASM".into()) {
            self.next();
            match self.peek().tok {
                Tok::Real(2.0) => {
                    self.next();
                }
                _ => return self.fail("version 2.0"),
            }
            version = "2.0".into();
            self.expect_sym(';')?;
        }
        loop {
            let tok = self.peek().clone();
            match &tok.tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "include" => {
                    self.next();
                    match self.peek().tok.clone() {
                        Tok::Str(s) if s == "qelib1.inc" => {
                            self.next();
                            includes.push(s);
                        }
                        _ => return self.fail("\"qelib1.inc\""),
                    }
                    self.expect_sym(';')?;
                }
                Tok::Ident(kw) if kw == "qreg" || kw == "creg" => {
                    let quantum = kw == "qreg";
                    self.next();
                    let (name, line, col) = self.ident()?;
                    if self.lookup(&name).is_some() {
                        return Err(QasmError::Syntax {
                            line,
                            col,
                            expected: "a new register name".into(),
                            found: format!("redeclared '{name}'"),
                        });
                    }
                    self.expect_sym('[')?;
                    let size = self.int()?;
                    if size == 0 {
                        return Err(QasmError::Syntax {
                            line,
                            col,
                            expected: "positive register size".into(),
                            found: "0".into(),
                        });
                    }
                    let size = usize::try_from(size).unwrap_or(usize::MAX);
                    self.declared_bits = self.declared_bits.saturating_add(size);
                    if self.declared_bits > MAX_DECLARED_BITS {
                        return Err(QasmError::RegisterTooLarge { line, col });
                    }
                    self.expect_sym(']')?;
                    self.expect_sym(';')?;
                    if quantum {
                        self.qregs.push((name, size));
                    } else {
                        self.cregs.push((name, size));
                    }
                }
                Tok::Ident(kw) if kw == "measure" => {
                    self.next();
                    let qubit = self.operand(true)?;
                    if self.peek().tok != Tok::Arrow {
                        return self.fail("'->'");
                    }
                    self.next();
                    let clbit = self.operand(false)?;
                    self.expect_sym(';')?;
                    statements.push(Statement::Measure { qubit, clbit });
                }
                Tok::Ident(kw) if kw == "barrier" => {
                    self.next();
                    let mut args = vec![self.operand(true)?];
                    while self.eat_sym(',') {
                        args.push(self.operand(true)?);
                    }
                    self.expect_sym(';')?;
                    statements.push(Statement::Barrier(args));
                }
                Tok::Ident(name) => {
                    let name = name.clone();
                    let (line, col) = (tok.line, tok.col);
                    let Some((nparams, nargs)) = gate_arity(&name) else {
                        return Err(QasmError::UnsupportedGate { name, line, col });
                    };
                    self.next();
                    let mut params = Vec::new();
                    if self.eat_sym('(') && !self.eat_sym(')') {
                        params.push(self.expr(0)?);
                        while self.eat_sym(',') {
                            params.push(self.expr(0)?);
                        }
                        self.expect_sym(')')?;
                    }
                    if params.len() != nparams {
                        return Err(QasmError::Syntax {
                            line,
                            col,
                            expected: format!("{nparams} parameter(s) for '{name}'"),
                            found: format!("{}", params.len()),
                        });
                    }
                    let mut args = vec![self.operand(true)?];
                    while self.eat_sym(',') {
                        args.push(self.operand(true)?);
                    }
                    if args.len() != nargs {
                        return Err(QasmError::Syntax {
                            line,
                            col,
                            expected: format!("{nargs} qubit argument(s) for '{name}'"),
                            found: format!("{}", args.len()),
                        });
                    }
                    self.expect_sym(';')?;
                    statements.push(Statement::Gate {
                        name,
                        params,
                        args,
                        line,
                        col,
                    });
                }
                _ => return self.fail("statement"),
            }
        }
        Ok(QasmProgram {
            version,
            includes,
            qregs: std::mem::take(&mut self.qregs),
            cregs: std::mem::take(&mut self.cregs),
            statements,
        })
    }

    fn lookup(&self, name: &str) -> Option<(bool, usize)> {
        self.qregs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| (true, *s))
            .or_else(|| {
                self.cregs
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, s)| (false, *s))
            })
    }

    fn operand(&mut self, quantum: bool) -> Result<Operand, QasmError> {
        let (name, line, col) = self.ident()?;
        let size = match self.lookup(&name) {
            Some((q, size)) if q == quantum => size,
            _ => return Err(QasmError::UndeclaredRegister { name, line, col }),
        };
        if self.eat_sym('[') {
            let index = self.int()?;
            self.expect_sym(']')?;
            let index = usize::try_from(index).unwrap_or(usize::MAX);
            if index >= size {
                return Err(QasmError::IndexOutOfRange {
                    register: name,
                    index,
                    size,
                    line,
                    col,
                });
            }
            Ok(Operand::Indexed(name, index))
        } else {
            Ok(Operand::Register(name))
        }
    }

    /// Precedence climbing over `+ -` (level 0) and `* /` (level 1).
    fn expr(&mut self, depth: usize) -> Result<f64, QasmError> {
        if depth > MAX_EXPR_DEPTH {
            return self.fail("shallower expression");
        }
        let mut acc = self.term(depth)?;
        loop {
            if self.eat_sym('+') {
                acc += self.term(depth)?;
            } else if self.eat_sym('-') {
                acc -= self.term(depth)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<f64, QasmError> {
        let mut acc = self.unary(depth)?;
        loop {
            if self.eat_sym('*') {
                acc *= self.unary(depth)?;
            } else if self.eat_sym('/') {
                acc /= self.unary(depth)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self, depth: usize) -> Result<f64, QasmError> {
        if depth > MAX_EXPR_DEPTH {
            return self.fail("shallower expression");
        }
        if self.eat_sym('-') {
            return Ok(-self.unary(depth + 1)?);
        }
        if self.eat_sym('+') {
            return self.unary(depth + 1);
        }
        let start = self.peek().clone();
        let value = match start.tok {
            Tok::Int(i) => {
                self.next();
                i as f64
            }
            Tok::Real(r) => {
                self.next();
                r
            }
            Tok::Ident(ref s) if s == "pi" => {
                self.next();
                std::f64::consts::PI
            }
            Tok::Sym('(') => {
                self.next();
                let v = self.expr(depth + 1)?;
                self.expect_sym(')')?;
                v
            }
            _ => return self.fail("expression"),
        };
        if !value.is_finite() {
            return Err(QasmError::Syntax {
                line: start.line,
                col: start.col,
                expected: "finite parameter".into(),
                found: format!("{value}"),
            });
        }
        Ok(value)
    }
}

/// Parses OpenQASM 2.0 source.
pub fn parse(source: &str) -> Result<QasmProgram, QasmError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        qregs: Vec::new(),
        cregs: Vec::new(),
        declared_bits: 0,
    };
    let program = parser.program()?;
    // Evaluated parameters that overflowed to infinity during arithmetic.
    for st in &program.statements {
        if let Statement::Gate {
            params, line, col, ..
        } = st
        {
            if params.iter().any(|p| !p.is_finite()) {
                return Err(QasmError::Syntax {
                    line: *line,
                    col: *col,
                    expected: "finite parameter".into(),
                    found: "non-finite value".into(),
                });
            }
        }
    }
    Ok(program)
}

fn kind_for(name: &str, p: &[f64]) -> Option<GateKind> {
    Some(match name {
        "h" => GateKind::H,
        "x" => GateKind::X,
        "y" => GateKind::Y,
        "z" => GateKind::Z,
        "s" => GateKind::S,
        "sdg" => GateKind::Sdg,
        "t" => GateKind::T,
        "tdg" => GateKind::Tdg,
        "rx" => GateKind::Rx(p[0]),
        "ry" => GateKind::Ry(p[0]),
        "rz" => GateKind::Rz(p[0]),
        "u1" => GateKind::U1(p[0]),
        "u2" => GateKind::U2(p[0], p[1]),
        "u3" | "U" => GateKind::U3(p[0], p[1], p[2]),
        "cx" | "CX" => GateKind::Cx,
        "cz" => GateKind::Cz,
        "cu1" => GateKind::Cu1(p[0]),
        "crz" => GateKind::Crz(p[0]),
        "swap" => GateKind::Swap,
        _ => return None,
    })
}

/// Flattens registers in declaration order and maps statements to ops.
/// Register operands broadcast element-wise.
pub fn lower(program: &QasmProgram) -> Result<Circuit, QasmError> {
    let offsets = |regs: &[(String, usize)]| {
        let mut acc = 0;
        regs.iter()
            .map(|(n, s)| {
                let o = acc;
                acc += s;
                (n.clone(), (o, *s))
            })
            .collect::<std::collections::HashMap<_, _>>()
    };
    let qoff = offsets(&program.qregs);
    let coff = offsets(&program.cregs);
    let nqubits = program.qregs.iter().map(|(_, s)| s).sum();
    let mut circuit = Circuit::new(nqubits);

    let resolve = |table: &std::collections::HashMap<String, (usize, usize)>,
                   op: &Operand|
     -> Result<Vec<usize>, QasmError> {
        let name = match op {
            Operand::Register(n) | Operand::Indexed(n, _) => n,
        };
        let &(offset, size) = table.get(name).ok_or_else(|| QasmError::UndeclaredRegister {
            name: name.clone(),
            line: 0,
            col: 0,
        })?;
        Ok(match op {
            Operand::Register(_) => (offset..offset + size).collect(),
            Operand::Indexed(_, i) => vec![offset + i],
        })
    };

    for st in &program.statements {
        match st {
            Statement::Gate {
                name,
                params,
                args,
                line,
                col,
            } => {
                let kind = kind_for(name, params).ok_or_else(|| QasmError::UnsupportedGate {
                    name: name.clone(),
                    line: *line,
                    col: *col,
                })?;
                let lists: Vec<Vec<usize>> =
                    args.iter().map(|a| resolve(&qoff, a)).collect::<Result<_, _>>()?;
                let width = lists.iter().map(Vec::len).max().unwrap_or(1);
                if lists.iter().any(|l| l.len() != 1 && l.len() != width) {
                    return Err(QasmError::Syntax {
                        line: *line,
                        col: *col,
                        expected: "registers of equal size".into(),
                        found: "mismatched register sizes".into(),
                    });
                }
                for k in 0..width {
                    let qs: Vec<usize> = lists
                        .iter()
                        .map(|l| if l.len() == 1 { l[0] } else { l[k] })
                        .collect();
                    let nc = kind.num_controls();
                    let op = GateOp::new(kind.clone(), qs[nc..].to_vec(), qs[..nc].to_vec())
                        .map_err(|_| QasmError::Syntax {
                            line: *line,
                            col: *col,
                            expected: "distinct qubit arguments".into(),
                            found: "repeated qubit".into(),
                        })?;
                    circuit
                        .push(op)
                        .expect("operands were range-checked during parsing");
                }
            }
            Statement::Measure { qubit, clbit } => {
                let qs = resolve(&qoff, qubit)?;
                let cs = resolve(&coff, clbit)?;
                if qs.len() != cs.len() {
                    return Err(QasmError::Syntax {
                        line: 0,
                        col: 0,
                        expected: "measure operands of equal size".into(),
                        found: format!("{} qubits into {} clbits", qs.len(), cs.len()),
                    });
                }
                for (q, c) in qs.into_iter().zip(cs) {
                    circuit
                        .add_measurement(q, c)
                        .expect("operands were range-checked during parsing");
                }
            }
            Statement::Barrier(_) => {}
        }
    }
    Ok(circuit)
}

/// Parses and lowers in one step.
pub fn parse_circuit(source: &str) -> Result<Circuit, QasmError> {
    lower(&parse(source)?)
}

/// Writes `circuit` as OpenQASM 2.0 on a single register `q`.
/// Parameters are printed in shortest round-trip form.
pub fn emit(circuit: &Circuit) -> Result<String, QasmError> {
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    if circuit.nqubits() > 0 {
        let _ = writeln!(out, "qreg q[{}];", circuit.nqubits());
    }
    let nclbits = circuit
        .measurements()
        .iter()
        .map(|&(_, c)| c + 1)
        .max()
        .unwrap_or(0);
    if nclbits > 0 {
        let _ = writeln!(out, "creg c[{nclbits}];");
    }
    for op in circuit.ops() {
        let Some(name) = op.kind.name() else {
            return Err(QasmError::NotEmittable("fused gate".into()));
        };
        if op.controls.len() != op.kind.num_controls() {
            return Err(QasmError::NotEmittable(format!(
                "'{name}' with {} extra control(s)",
                op.controls.len() - op.kind.num_controls()
            )));
        }
        out.push_str(name);
        let params = op.kind.params();
        if !params.is_empty() {
            let ps: Vec<String> = params.iter().map(|p| format!("{p:?}")).collect();
            let _ = write!(out, "({})", ps.join(","));
        }
        let args: Vec<String> = op.qubits().map(|q| format!("q[{q}]")).collect();
        let _ = writeln!(out, " {};", args.join(","));
    }
    for &(q, c) in circuit.measurements() {
        let _ = writeln!(out, "measure q[{q}] -> c[{c}];");
    }
    Ok(out)
}
