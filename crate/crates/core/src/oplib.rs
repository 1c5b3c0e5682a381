// SPDX-License-Identifier: Apache-2.0

//! Operation table, scalar oracles, AOIG slice kernels and bit-serial plans.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::mig::{Aoig, AoigKind, Lit};
use crate::uprogram::{ScalingClass, Signal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Op {
    Abs,
    Addition,
    Bitcount,
    Division,
    Max,
    Min,
    Multiplication,
    Relu,
    Subtraction,
    IfElse,
    AndReduction,
    OrReduction,
    XorReduction,
    Equal,
    Greater,
    GreaterEqual,
}

impl Op {
    pub const ALL: [Op; 16] = [
        Op::Abs,
        Op::Addition,
        Op::Bitcount,
        Op::Division,
        Op::Max,
        Op::Min,
        Op::Multiplication,
        Op::Relu,
        Op::Subtraction,
        Op::IfElse,
        Op::AndReduction,
        Op::OrReduction,
        Op::XorReduction,
        Op::Equal,
        Op::Greater,
        Op::GreaterEqual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::Abs => "abs",
            Op::Addition => "addition",
            Op::Bitcount => "bitcount",
            Op::Division => "division",
            Op::Max => "max",
            Op::Min => "min",
            Op::Multiplication => "multiplication",
            Op::Relu => "ReLU",
            Op::Subtraction => "subtraction",
            Op::IfElse => "if_else",
            Op::AndReduction => "and_reduction",
            Op::OrReduction => "or_reduction",
            Op::XorReduction => "xor_reduction",
            Op::Equal => "equal",
            Op::Greater => "greater",
            Op::GreaterEqual => "greater_equal",
        }
    }

    /// Operand roles in argument order; the result always goes to `dst`.
    pub fn roles(self) -> &'static [&'static str] {
        match self {
            Op::Abs | Op::Bitcount | Op::Relu | Op::AndReduction | Op::OrReduction | Op::XorReduction => &["src"],
            Op::IfElse => &["sel", "src1", "src2"],
            _ => &["src1", "src2"],
        }
    }

    /// Interprets sources as two's complement (greater/greater_equal unless unsigned).
    pub fn signed(self, opts: &OpOptions) -> bool {
        match self {
            Op::Abs | Op::Relu | Op::Max | Op::Min => true,
            Op::Greater | Op::GreaterEqual => !opts.unsigned,
            _ => false,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = OpError;
    fn from_str(s: &str) -> Result<Self, OpError> {
        Op::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| OpError::UnknownOp(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OpType {
    Arithmetic,
    Predication,
    Reduction,
    Relational,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpOptions {
    /// greater/greater_equal compare as unsigned.
    pub unsigned: bool,
    /// Division by zero is an error instead of the all-ones quotient.
    pub strict_division: bool,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OpError {
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("{op}: unsupported width {n}")]
    UnsupportedWidth { op: Op, n: u32 },
    #[error("{op}: expected {want} inputs, got {got}")]
    Arity { op: Op, want: usize, got: usize },
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OperationSpec {
    pub op: Op,
    pub name: &'static str,
    pub op_type: OpType,
    pub class: ScalingClass,
    pub roles: Vec<&'static str>,
    pub signed: bool,
    /// "n", "1" or "log" (ceil(log2(n+1)) bits).
    pub output_width: &'static str,
    pub formula: &'static str,
}

pub fn spec(op: Op) -> OperationSpec {
    use Op::*;
    let (op_type, class, output_width, formula) = match op {
        Abs => (OpType::Arithmetic, ScalingClass::Linear, "n", "10n-2"),
        Addition => (OpType::Arithmetic, ScalingClass::Linear, "n", "8n+1"),
        Bitcount => (OpType::Arithmetic, ScalingClass::Linear, "log", "[8n-8log2(n+1), 8n]"),
        Division => (OpType::Arithmetic, ScalingClass::Quadratic, "n", "8n^2+12n"),
        Max => (OpType::Arithmetic, ScalingClass::Linear, "n", "10n+2"),
        Min => (OpType::Arithmetic, ScalingClass::Linear, "n", "10n+2"),
        Multiplication => (OpType::Arithmetic, ScalingClass::Quadratic, "n", "11n^2-5n-1"),
        Relu => (OpType::Arithmetic, ScalingClass::Linear, "n", "3n+((n-1) mod 2)"),
        Subtraction => (OpType::Arithmetic, ScalingClass::Linear, "n", "8n+1"),
        IfElse => (OpType::Predication, ScalingClass::Linear, "n", "7n"),
        AndReduction => (OpType::Reduction, ScalingClass::Logarithmic, "1", "5floor(n/2)+2"),
        OrReduction => (OpType::Reduction, ScalingClass::Logarithmic, "1", "5floor(n/2)+2"),
        XorReduction => (OpType::Reduction, ScalingClass::Logarithmic, "1", "6floor(n/2)+1"),
        Equal => (OpType::Relational, ScalingClass::Linear, "1", "4n+3"),
        Greater => (OpType::Relational, ScalingClass::Linear, "1", "3n+2"),
        GreaterEqual => (OpType::Relational, ScalingClass::Linear, "1", "3n+2"),
    };
    OperationSpec {
        op,
        name: op.name(),
        op_type,
        class,
        roles: op.roles().to_vec(),
        signed: op.signed(&OpOptions::default()),
        output_width,
        formula,
    }
}

pub fn list_operations() -> Vec<OperationSpec> {
    Op::ALL.into_iter().map(spec).collect()
}

/// Reference command count for a width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CountBound {
    Exact(usize),
    Range { lo: f64, hi: usize },
}

impl CountBound {
    pub fn admits(&self, count: usize) -> bool {
        match *self {
            CountBound::Exact(v) => v == count,
            CountBound::Range { lo, hi } => (count as f64) >= lo - 1e-9 && count <= hi,
        }
    }
}

impl fmt::Display for CountBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountBound::Exact(v) => write!(f, "{v}"),
            CountBound::Range { lo, hi } => write!(f, "[{lo:.2}, {hi}]"),
        }
    }
}

pub fn reference_count(op: Op, n: u32) -> CountBound {
    let n = n as usize;
    use CountBound::Exact;
    match op {
        Op::Abs => Exact(10 * n - 2),
        Op::Addition | Op::Subtraction => Exact(8 * n + 1),
        Op::Bitcount => CountBound::Range { lo: 8.0 * n as f64 - 8.0 * ((n + 1) as f64).log2(), hi: 8 * n },
        Op::Division => Exact(8 * n * n + 12 * n),
        Op::Max | Op::Min => Exact(10 * n + 2),
        Op::Multiplication => Exact(11 * n * n - 5 * n - 1),
        Op::Relu => Exact(3 * n + (n - 1) % 2),
        Op::IfElse => Exact(7 * n),
        Op::AndReduction | Op::OrReduction => Exact(5 * (n / 2) + 2),
        Op::XorReduction => Exact(6 * (n / 2) + 1),
        Op::Equal => Exact(4 * n + 3),
        Op::Greater | Op::GreaterEqual => Exact(3 * n + 2),
    }
}

/// ceil(log2(n+1)): bits needed to hold a count of n.
pub fn count_bits(n: u32) -> u32 {
    32 - n.leading_zeros()
}

pub fn input_width(op: Op, role: &str, n: u32) -> u32 {
    if op == Op::IfElse && role == "sel" {
        1
    } else {
        n
    }
}

pub fn output_width(op: Op, n: u32) -> u32 {
    match op {
        Op::Bitcount => count_bits(n),
        Op::AndReduction | Op::OrReduction | Op::XorReduction | Op::Equal | Op::Greater | Op::GreaterEqual => 1,
        _ => n,
    }
}

pub fn check_width(op: Op, n: u32, opts: &OpOptions) -> Result<(), OpError> {
    let min = if op.signed(opts) { 2 } else { 1 };
    if n < min || n > 64 {
        return Err(OpError::UnsupportedWidth { op, n });
    }
    Ok(())
}

fn mask(n: u32) -> u64 {
    if n >= 64 {
        !0
    } else {
        (1u64 << n) - 1
    }
}

fn sext(v: u64, n: u32) -> i64 {
    let s = 64 - n;
    ((v << s) as i64) >> s
}

/// Scalar reference for one lane. `args` follow `op.roles()`; values are
/// masked to their operand width first.
pub fn oracle(op: Op, n: u32, args: &[u64], opts: &OpOptions) -> Result<u64, OpError> {
    check_width(op, n, opts)?;
    let want = op.roles().len();
    if args.len() != want {
        return Err(OpError::Arity { op, want, got: args.len() });
    }
    let m = mask(n);
    let a = args[0] & m;
    let b = args.get(1).map(|v| v & m).unwrap_or(0);
    let lt = |x: u64, y: u64, signed: bool| if signed { sext(x, n) < sext(y, n) } else { x < y };
    let signed = op.signed(opts);
    let r = match op {
        Op::Abs => {
            if sext(a, n) < 0 {
                a.wrapping_neg() & m
            } else {
                a
            }
        }
        Op::Addition => a.wrapping_add(b) & m,
        Op::Subtraction => a.wrapping_sub(b) & m,
        Op::Multiplication => a.wrapping_mul(b) & m,
        Op::Division => {
            if b == 0 {
                if opts.strict_division {
                    return Err(OpError::DivisionByZero);
                }
                m
            } else {
                a / b
            }
        }
        Op::Bitcount => a.count_ones() as u64,
        Op::Max => {
            if lt(b, a, true) {
                a
            } else {
                b
            }
        }
        Op::Min => {
            if lt(a, b, true) {
                a
            } else {
                b
            }
        }
        Op::Relu => {
            if sext(a, n) >= 0 {
                a
            } else {
                0
            }
        }
        Op::IfElse => {
            let (s, x, y) = (args[0] & 1, args[1] & m, args[2] & m);
            if s == 1 {
                x
            } else {
                y
            }
        }
        Op::AndReduction => (a == m) as u64,
        Op::OrReduction => (a != 0) as u64,
        Op::XorReduction => (a.count_ones() & 1) as u64,
        Op::Equal => (a == b) as u64,
        Op::Greater => lt(b, a, signed) as u64,
        Op::GreaterEqual => (!lt(a, b, signed)) as u64,
    };
    Ok(r)
}

// ---------------------------------------------------------------------------
// slice kernels

/// Kernel names used by the plans.
pub const KERNELS: [&str; 15] = [
    "fa", "fs", "gt", "gtm", "eq2", "mux", "relu", "abs", "and2", "or2", "xor3", "and", "mcell", "zstep", "qstep",
];

struct K {
    g: Aoig,
    ins: HashMap<&'static str, Lit>,
}

impl K {
    fn new(names: &[&'static str]) -> Self {
        let mut g = Aoig::new();
        let ins = names.iter().map(|n| (*n, g.input(n))).collect();
        K { g, ins }
    }
    fn i(&self, n: &str) -> Lit {
        self.ins[n]
    }
}

/// a + b + c -> [sum, carry], seven gates.
fn adder(k: &mut K, a: Lit, b: Lit, c: Lit) -> (Lit, Lit) {
    let g = &mut k.g;
    let n1 = g.and(a, b);
    let n2 = g.or(a, b);
    let p = g.and(n2, n1.not());
    let n4 = g.and(p, c);
    let n5 = g.or(p, c);
    let s = g.and(n5, n4.not());
    let co = g.or(n1, n4);
    (s, co)
}

/// maj(a, b, c) as (a&b) | (c&(a|b)).
fn maj(k: &mut K, a: Lit, b: Lit, c: Lit) -> Lit {
    let g = &mut k.g;
    let x = g.and(a, b);
    let y = g.or(a, b);
    let z = g.and(c, y);
    g.or(x, z)
}

/// AOIG of a named slice kernel; inputs in declaration order.
pub fn kernel_aoig(name: &str) -> Option<Aoig> {
    let k = match name {
        "fa" | "fs" => {
            let mut k = K::new(&["a", "b", "c"]);
            let (a, mut b, c) = (k.i("a"), k.i("b"), k.i("c"));
            if name == "fs" {
                b = b.not();
            }
            let (s, co) = adder(&mut k, a, b, c);
            k.g.output(s);
            k.g.output(co);
            k
        }
        "gt" | "gtm" => {
            let mut k = K::new(&["a", "b", "c"]);
            let (a, b, c) = (k.i("a"), k.i("b"), k.i("c"));
            let o = if name == "gt" { maj(&mut k, a, b.not(), c) } else { maj(&mut k, a.not(), b, c) };
            k.g.output(o);
            k
        }
        "eq2" => {
            // le' = a <= b so far, ge' = a >= b so far
            let mut k = K::new(&["le", "ge", "a", "b"]);
            let (le, ge, a, b) = (k.i("le"), k.i("ge"), k.i("a"), k.i("b"));
            let l = maj(&mut k, a.not(), b, le);
            let g = maj(&mut k, a, b.not(), ge);
            k.g.output(l);
            k.g.output(g);
            k
        }
        "mux" => {
            let mut k = K::new(&["s", "a", "b"]);
            let (s, a, b) = (k.i("s"), k.i("a"), k.i("b"));
            let o = k.g.mux(s, a, b);
            k.g.output(o);
            k
        }
        "relu" => {
            let mut k = K::new(&["a", "m"]);
            let (a, m) = (k.i("a"), k.i("m"));
            let o = k.g.and(a, m.not());
            k.g.output(o);
            k
        }
        "abs" => {
            // y = a ^ g, g' = maj(a, g, m)
            let mut k = K::new(&["a", "g", "m"]);
            let (a, g, m) = (k.i("a"), k.i("g"), k.i("m"));
            let y = k.g.xor(a, g);
            let gn = maj(&mut k, a, g, m);
            k.g.output(y);
            k.g.output(gn);
            k
        }
        "and2" | "or2" => {
            let mut k = K::new(&["acc", "a", "b"]);
            let (acc, a, b) = (k.i("acc"), k.i("a"), k.i("b"));
            let o = if name == "and2" {
                let t = k.g.and(acc, a);
                k.g.and(t, b)
            } else {
                let t = k.g.or(acc, a);
                k.g.or(t, b)
            };
            k.g.output(o);
            k
        }
        "xor3" => {
            let mut k = K::new(&["acc", "a", "b"]);
            let (acc, a, b) = (k.i("acc"), k.i("a"), k.i("b"));
            let t = k.g.xor(acc, a);
            let o = k.g.xor(t, b);
            k.g.output(o);
            k
        }
        "and" => {
            let mut k = K::new(&["a", "b"]);
            let (a, b) = (k.i("a"), k.i("b"));
            let o = k.g.and(a, b);
            k.g.output(o);
            k
        }
        "mcell" => {
            // p + a*b + c
            let mut k = K::new(&["p", "a", "b", "c"]);
            let (p, a, b, c) = (k.i("p"), k.i("a"), k.i("b"), k.i("c"));
            let pp = k.g.and(a, b);
            let (s, co) = adder(&mut k, p, pp, c);
            k.g.output(s);
            k.g.output(co);
            k
        }
        "zstep" => {
            let mut k = K::new(&["z", "b"]);
            let (z, b) = (k.i("z"), k.i("b"));
            let o = k.g.and(z, b.not());
            k.g.output(o);
            k
        }
        "qstep" => {
            let mut k = K::new(&["c", "z"]);
            let (c, z) = (k.i("c"), k.i("z"));
            let o = k.g.and(c, z);
            k.g.output(o);
            k
        }
        _ => return None,
    };
    Some(k.g)
}

/// Main per-bit slice of an operation.
pub fn build_bitslice_aoig(op: Op, n: u32, opts: &OpOptions) -> Result<Aoig, OpError> {
    check_width(op, n, opts)?;
    let name = match op {
        Op::Addition | Op::Bitcount => "fa",
        Op::Subtraction | Op::Division => "fs",
        Op::Greater | Op::GreaterEqual => "gt",
        Op::Max | Op::Min | Op::IfElse => "mux",
        Op::Equal => "eq2",
        Op::Relu => "relu",
        Op::Abs => "abs",
        Op::AndReduction => "and2",
        Op::OrReduction => "or2",
        Op::XorReduction => "xor3",
        Op::Multiplication => "mcell",
    };
    Ok(kernel_aoig(name).expect("known kernel"))
}

// ---------------------------------------------------------------------------
// bit-serial plans

/// One kernel instance: kernel input name -> signal, kernel output -> target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub kernel: &'static str,
    pub inputs: Vec<(&'static str, Signal)>,
    pub outputs: Vec<Option<(String, u32)>>,
}

/// Ordered kernel instances computing `dst` from the role operands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub op: Op,
    pub n: u32,
    pub instances: Vec<Instance>,
}

impl Plan {
    /// Operands written by the plan other than `dst`, with their widths.
    pub fn scratch(&self) -> BTreeMap<String, u32> {
        let mut m = BTreeMap::new();
        for inst in &self.instances {
            for (op, bit) in inst.outputs.iter().flatten() {
                if op != "dst" {
                    let w = m.entry(op.clone()).or_insert(0);
                    *w = (*w).max(bit + 1);
                }
            }
        }
        m
    }

    pub fn kernels(&self) -> Vec<&'static str> {
        let mut v: Vec<&'static str> = self.instances.iter().map(|i| i.kernel).collect();
        v.sort();
        v.dedup();
        v
    }
}

fn bit(op: &str, i: u32) -> Signal {
    Signal::bit(op, i)
}

fn out(op: &str, i: u32) -> Option<(String, u32)> {
    Some((op.to_string(), i))
}

fn inst(kernel: &'static str, inputs: Vec<(&'static str, Signal)>, outputs: Vec<Option<(String, u32)>>) -> Instance {
    Instance { kernel, inputs, outputs }
}

/// Greater-than carry chain of a over b into `target`, seeded with `seed`.
fn cmp_chain(v: &mut Vec<Instance>, n: u32, a: &str, b: &str, seed: bool, signed: bool, target: (&str, u32)) {
    for i in 0..n {
        let k = if signed && i == n - 1 { "gtm" } else { "gt" };
        let c = if i == 0 { Signal::Const(seed) } else { bit("cmp", 0) };
        let o = if i == n - 1 { out(target.0, target.1) } else { out("cmp", 0) };
        v.push(inst(k, vec![("a", bit(a, i)), ("b", bit(b, i)), ("c", c)], vec![o]));
    }
}

/// Adder-tree column compression over `bits`; returns instances and the
/// final signal per output column (`None` when a column stays empty).
fn adder_tree(bits: Vec<Signal>, k: u32) -> Vec<Instance> {
    // symbolic pass: each adder is (x, y, z, sum id, carry id); ids are
    // indices into `sigs`
    let mut sigs: Vec<Signal> = bits.clone();
    let mut cols: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); k as usize + 1];
    cols[0].extend(0..bits.len());
    struct Add {
        ins: [Option<usize>; 3],
        col: usize,
        sum: usize,
        carry: usize,
    }
    let mut adds: Vec<Add> = Vec::new();
    for c in 0..k as usize {
        while cols[c].len() >= 2 {
            let x = cols[c].pop_front().unwrap();
            let y = cols[c].pop_front().unwrap();
            let z = if cols[c].len() >= 1 { cols[c].pop_front() } else { None };
            let sum = sigs.len();
            sigs.push(Signal::Const(false));
            let carry = sigs.len();
            sigs.push(Signal::Const(false));
            adds.push(Add { ins: [Some(x), Some(y), z], col: c, sum, carry });
            cols[c].push_back(sum);
            cols[c + 1].push_back(carry);
        }
    }
    // final column bits go straight to dst; other new signals to scratch
    let mut target: HashMap<usize, (String, u32)> = HashMap::new();
    let mut finals: Vec<Option<usize>> = Vec::new();
    for c in 0..k as usize {
        let f = cols[c].front().copied();
        if let Some(id) = f {
            if id >= bits.len() {
                target.insert(id, ("dst".to_string(), c as u32));
            }
        }
        finals.push(f);
    }
    let mut next = 0u32;
    for a in &adds {
        for id in [a.sum, a.carry] {
            if !target.contains_key(&id) && (id != a.carry || a.col + 1 < k as usize) {
                target.insert(id, ("bc".to_string(), next));
                next += 1;
            }
        }
    }
    for (id, (op, b)) in &target {
        sigs[*id] = bit(op, *b);
    }
    let mut v = Vec::new();
    for a in &adds {
        let get = |i: Option<usize>| i.map(|i| sigs[i].clone()).unwrap_or(Signal::Const(false));
        v.push(inst(
            "fa",
            vec![("a", get(a.ins[0])), ("b", get(a.ins[1])), ("c", get(a.ins[2]))],
            vec![target.get(&a.sum).cloned(), target.get(&a.carry).cloned()],
        ));
    }
    for (c, f) in finals.iter().enumerate() {
        match f {
            Some(id) if *id < bits.len() => v.push(inst("copy", vec![("a", sigs[*id].clone())], vec![out("dst", c as u32)])),
            None => v.push(inst("copy", vec![("a", Signal::Const(false))], vec![out("dst", c as u32)])),
            _ => {}
        }
    }
    v
}

/// Kernel instance sequence for `op` at width `n`. The pseudo-kernel
/// `copy` forwards its single input.
pub fn plan(op: Op, n: u32, opts: &OpOptions) -> Result<Plan, OpError> {
    check_width(op, n, opts)?;
    let mut v = Vec::new();
    let last = n - 1;
    match op {
        Op::Addition | Op::Subtraction => {
            let (k, seed) = if op == Op::Addition { ("fa", false) } else { ("fs", true) };
            for i in 0..n {
                let c = if i == 0 { Signal::Const(seed) } else { bit("carry", 0) };
                let co = if i < last { out("carry", 0) } else { None };
                v.push(inst(k, vec![("a", bit("src1", i)), ("b", bit("src2", i)), ("c", c)], vec![out("dst", i), co]));
            }
        }
        Op::Greater | Op::GreaterEqual => {
            cmp_chain(&mut v, n, "src1", "src2", op == Op::GreaterEqual, op.signed(opts), ("dst", 0));
        }
        Op::Max | Op::Min => {
            let (a, b) = if op == Op::Max { ("src1", "src2") } else { ("src2", "src1") };
            cmp_chain(&mut v, n, a, b, false, true, ("sel", 0));
            for i in 0..n {
                v.push(inst(
                    "mux",
                    vec![("s", bit("sel", 0)), ("a", bit("src1", i)), ("b", bit("src2", i))],
                    vec![out("dst", i)],
                ));
            }
        }
        Op::Equal => {
            for i in 0..n {
                let (le, ge) = if i == 0 {
                    (Signal::Const(true), Signal::Const(true))
                } else {
                    (bit("le", 0), bit("ge", 0))
                };
                v.push(inst(
                    "eq2",
                    vec![("le", le), ("ge", ge), ("a", bit("src1", i)), ("b", bit("src2", i))],
                    vec![out("le", 0), out("ge", 0)],
                ));
            }
            v.push(inst("and", vec![("a", bit("le", 0)), ("b", bit("ge", 0))], vec![out("dst", 0)]));
        }
        Op::IfElse => {
            for i in 0..n {
                v.push(inst(
                    "mux",
                    vec![("s", bit("sel", 0)), ("a", bit("src1", i)), ("b", bit("src2", i))],
                    vec![out("dst", i)],
                ));
            }
        }
        Op::Relu => {
            for i in 0..n {
                v.push(inst("relu", vec![("a", bit("src", i)), ("m", bit("src", last))], vec![out("dst", i)]));
            }
        }
        Op::Abs => {
            for i in 0..n {
                let g = if i == 0 { Signal::Const(false) } else { bit("g", 0) };
                let gn = if i < last { out("g", 0) } else { None };
                v.push(inst(
                    "abs",
                    vec![("a", bit("src", i)), ("g", g), ("m", bit("src", last))],
                    vec![out("dst", i), gn],
                ));
            }
        }
        Op::AndReduction | Op::OrReduction | Op::XorReduction => {
            let k = match op {
                Op::AndReduction => "and2",
                Op::OrReduction => "or2",
                _ => "xor3",
            };
            if n == 1 {
                v.push(inst("copy", vec![("a", bit("src", 0))], vec![out("dst", 0)]));
            } else {
                // seed so that odd and even widths run the same number of steps
                let (seed, mut i) = match (op, n % 2) {
                    (_, 1) | (Op::XorReduction, _) => (bit("src", 0), 1),
                    (Op::AndReduction, _) => (Signal::Const(true), 0),
                    _ => (Signal::Const(false), 0),
                };
                v.push(inst("copy", vec![("a", seed)], vec![out("acc", 0)]));
                while i < n {
                    let b = if i + 1 < n { bit("src", i + 1) } else { Signal::Const(false) };
                    let o = if i + 2 >= n { out("dst", 0) } else { out("acc", 0) };
                    v.push(inst(k, vec![("acc", bit("acc", 0)), ("a", bit("src", i)), ("b", b)], vec![o]));
                    i += 2;
                }
            }
        }
        Op::Bitcount => {
            let bits = (0..n).map(|i| bit("src", i)).collect();
            v = adder_tree(bits, count_bits(n));
        }
        Op::Multiplication => {
            for j in 0..n {
                v.push(inst("and", vec![("a", bit("src1", j)), ("b", bit("src2", 0))], vec![out("dst", j)]));
            }
            for i in 1..n {
                for j in 0..n - i {
                    let c = if j == 0 { Signal::Const(false) } else { bit("carry", 0) };
                    let co = if j + 1 < n - i { out("carry", 0) } else { None };
                    v.push(inst(
                        "mcell",
                        vec![("p", bit("dst", i + j)), ("a", bit("src1", j)), ("b", bit("src2", i)), ("c", c)],
                        vec![out("dst", i + j), co],
                    ));
                }
            }
        }
        Op::Division => {
            // zs.w = no divisor bit at or above w is set
            for w in (1..n).rev() {
                let z = if w == last { Signal::Const(true) } else { bit("zs", w + 1) };
                v.push(inst("zstep", vec![("z", z), ("b", bit("src2", w))], vec![out("zs", w)]));
            }
            // remainder bits live at absolute positions of `rem`
            for k in (0..n).rev() {
                let w = n - k;
                let r = |j: u32| if j == 0 { bit("src1", k) } else { bit("rem", k + j) };
                for j in 0..w {
                    let c = if j == 0 { Signal::Const(true) } else { bit("carry", 0) };
                    let co = if j + 1 < w {
                        out("carry", 0)
                    } else if w == n {
                        out("dst", k)
                    } else {
                        out("cl", 0)
                    };
                    v.push(inst("fs", vec![("a", r(j)), ("b", bit("src2", j)), ("c", c)], vec![out("dtmp", j), co]));
                }
                if w < n {
                    v.push(inst("qstep", vec![("c", bit("cl", 0)), ("z", bit("zs", w))], vec![out("dst", k)]));
                }
                if k > 0 {
                    for j in 0..w {
                        v.push(inst(
                            "mux",
                            vec![("s", bit("dst", k)), ("a", bit("dtmp", j)), ("b", r(j))],
                            vec![out("rem", k + j)],
                        ));
                    }
                }
            }
        }
    }
    Ok(Plan { op, n, instances: v })
}

/// Inline every instance of `p` into one AOIG over the role operand bits
/// (`src1.0`, ...), with outputs `dst.0..`.
pub fn flatten_plan(p: &Plan) -> Aoig {
    let mut g = Aoig::new();
    let mut cur: HashMap<(String, u32), Lit> = HashMap::new();
    for role in p.op.roles() {
        for i in 0..input_width(p.op, role, p.n) {
            let l = g.input(&format!("{role}.{i}"));
            cur.insert((role.to_string(), i), l);
        }
    }
    for it in &p.instances {
        let mut env: HashMap<&str, Lit> = HashMap::new();
        for (name, s) in &it.inputs {
            let l = match s {
                Signal::Const(v) => g.constant(*v),
                Signal::Bit { operand, bit } => *cur
                    .get(&(operand.clone(), *bit))
                    .unwrap_or_else(|| panic!("{}: {operand}.{bit} read before written", p.op)),
            };
            env.insert(name, l);
        }
        let outs: Vec<Lit> = if it.kernel == "copy" {
            vec![env["a"]]
        } else {
            let k = kernel_aoig(it.kernel).expect("known kernel");
            let mut map: HashMap<u32, Lit> = HashMap::new();
            let tr = |map: &HashMap<u32, Lit>, l: Lit| map[&l.node].with_neg(map[&l.node].neg ^ l.neg);
            for node in &k.nodes {
                let l = match &node.kind {
                    AoigKind::Input(name) => env[name.as_str()],
                    AoigKind::Const0 => g.constant(false),
                    AoigKind::Const1 => g.constant(true),
                    AoigKind::And([a, b]) => {
                        let (a, b) = (tr(&map, *a), tr(&map, *b));
                        g.and(a, b)
                    }
                    AoigKind::Or([a, b]) => {
                        let (a, b) = (tr(&map, *a), tr(&map, *b));
                        g.or(a, b)
                    }
                };
                map.insert(node.id, l);
            }
            k.outputs.iter().map(|o| tr(&map, *o)).collect()
        };
        for (o, t) in outs.iter().zip(&it.outputs) {
            if let Some((op, b)) = t {
                cur.insert((op.clone(), *b), *o);
            }
        }
    }
    for i in 0..output_width(p.op, p.n) {
        let l = *cur.get(&("dst".to_string(), i)).unwrap_or_else(|| panic!("{}: dst.{i} never written", p.op));
        g.output(l);
    }
    g
}

/// Full AOIG of `op` at width `n`: inputs `<role>.<bit>`, outputs `dst.<bit>`.
pub fn build_full_aoig(op: Op, n: u32, opts: &OpOptions) -> Result<Aoig, OpError> {
    Ok(flatten_plan(&plan(op, n, opts)?))
}

/// Tab-separated metadata table, one row per operation.
pub fn metadata_table() -> String {
    let mut s = String::from("# name\ttype\tclass\troles\tsigned\toutput_width\tcount\n");
    for sp in list_operations() {
        s.push_str(&format!(
            "{}\t{:?}\t{:?}\t{}\t{}\t{}\t{}\n",
            sp.name,
            sp.op_type,
            sp.class,
            sp.roles.join(","),
            sp.signed,
            sp.output_width,
            sp.formula
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for op in Op::ALL {
            assert_eq!(op.name().parse::<Op>().unwrap(), op);
        }
        assert!("relu".parse::<Op>().is_ok());
        assert!("nope".parse::<Op>().is_err());
    }

    #[test]
    fn count_bits_values() {
        assert_eq!(count_bits(1), 1);
        assert_eq!(count_bits(3), 2);
        assert_eq!(count_bits(4), 3);
        assert_eq!(count_bits(32), 6);
    }

    #[test]
    fn bitcount_tree_uses_at_most_n_minus_one_adders() {
        for n in 1..=32 {
            let p = plan(Op::Bitcount, n, &OpOptions::default()).unwrap();
            let adders = p.instances.iter().filter(|i| i.kernel == "fa").count();
            assert!(adders <= n.saturating_sub(1) as usize, "n={n}: {adders}");
        }
    }
}
