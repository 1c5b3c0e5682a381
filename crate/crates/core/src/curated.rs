// SPDX-License-Identifier: Apache-2.0

//! Hand-scheduled μPrograms for every operation, plus the hand-optimized
//! slice MIGs they are derived from.

use crate::allocator::ComputeRow::{self, *};
use crate::mig::Mig;
use crate::oplib::{check_width, count_bits, plan, Op, OpError, OpOptions};
use crate::uprogram::{GroupRow, MicroProgram, RowSpec, Signal};

fn d(op: &str, i: u32) -> RowSpec {
    RowSpec::d(op, i)
}
fn r(x: ComputeRow) -> RowSpec {
    RowSpec::row(x)
}
fn nd(x: ComputeRow) -> RowSpec {
    RowSpec::ndcc(x)
}
fn tra(a: ComputeRow, b: ComputeRow, c: ComputeRow) -> RowSpec {
    RowSpec::tra(a, b, c)
}
fn dual(a: ComputeRow, an: bool, b: ComputeRow, bn: bool) -> RowSpec {
    RowSpec::dual(GroupRow { row: a, neg: an }, GroupRow { row: b, neg: bn })
}
fn konst(v: bool) -> RowSpec {
    if v {
        RowSpec::C1
    } else {
        RowSpec::C0
    }
}
fn sig(s: &Signal) -> RowSpec {
    match s {
        Signal::Bit { operand, bit } => d(operand, *bit),
        Signal::Const(v) => konst(*v),
    }
}

/// Ripple-carry state: carry lives in DCC0 and `ct`; `free` are the other
/// three T rows.
struct Ripple {
    free: [ComputeRow; 3],
    ct: ComputeRow,
}

impl Ripple {
    fn new() -> Self {
        Ripple { free: [T0, T1, T2], ct: T3 }
    }

    fn init(&self, p: &mut MicroProgram, c: RowSpec) {
        p.aap(c, tra(Dcc0, self.ct, self.free[0]));
    }

    fn rotate(&mut self) {
        let [a, b, c] = self.free;
        self.free = [b, c, self.ct];
        self.ct = a;
    }

    /// y = a + b + carry. `load_b` puts b into the three free rows.
    fn add(&mut self, p: &mut MicroProgram, a: RowSpec, load_b: impl FnOnce(&mut MicroProgram, [ComputeRow; 3]), y: RowSpec) {
        let [x, q, w] = self.free;
        p.aap(a.clone(), nd(Dcc1));
        load_b(p, [x, q, w]);
        p.aap(a.clone(), r(x));
        p.ap(tra(Dcc1, w, self.ct));
        p.ap(tra(Dcc0, x, q));
        p.aap(a, r(w));
        p.aap(nd(Dcc0), r(q));
        p.aap(tra(q, w, self.ct), y);
        self.rotate();
    }

    /// y = a - b + carry - 1, i.e. a + !b + carry.
    fn sub(&mut self, p: &mut MicroProgram, a: RowSpec, b: RowSpec, y: RowSpec) {
        let [x, q, w] = self.free;
        p.aap(b.clone(), nd(Dcc1));
        p.aap(a, tra(x, q, w));
        p.aap(b.clone(), r(w));
        p.ap(tra(q, w, self.ct));
        p.ap(tra(Dcc0, Dcc1, x));
        p.aap(b, nd(Dcc1));
        p.aap(nd(Dcc0), r(q));
        p.aap(tra(Dcc1, q, w), y);
        self.rotate();
    }
}

fn load_broadcast(b: RowSpec) -> impl FnOnce(&mut MicroProgram, [ComputeRow; 3]) {
    move |p, [x, q, w]| p.aap(b, tra(x, q, w))
}

/// y = s ? a : b in seven commands.
fn mux(p: &mut MicroProgram, s: RowSpec, a: RowSpec, b: RowSpec, y: RowSpec) {
    p.aap(s, dual(T0, false, Dcc0, true));
    p.aap(RowSpec::C0, dual(T1, false, Dcc1, true));
    p.aap(a, r(T2));
    p.aap(b, r(T3));
    p.ap(tra(T0, T2, T1));
    p.ap(tra(T1, T3, Dcc1));
    p.aap(tra(Dcc0, T0, T3), y);
}

/// Signed-aware greater-than carry chain of a over b; result left in T1.
fn cmp_chain(p: &mut MicroProgram, n: u32, a: &str, b: &str, seed: bool, signed: bool) {
    p.aap(konst(seed), r(T1));
    for i in 0..n {
        if i > 0 {
            p.mark_phase();
        }
        if signed && i == n - 1 {
            p.aap(d(a, i), nd(Dcc0));
            p.aap(d(b, i), r(T0));
        } else {
            p.aap(d(a, i), r(T0));
            p.aap(d(b, i), nd(Dcc0));
        }
        p.ap(tra(T0, Dcc0, T1));
    }
}

/// Eight-command full adder on D-group signals; carry write is optional.
fn fa_cell(p: &mut MicroProgram, x: RowSpec, y: RowSpec, z: RowSpec, s: Option<RowSpec>, c: Option<RowSpec>) {
    let (p1, p2, ta, tb) = (T0, T1, T2, T3);
    p.aap(z, dual(p1, false, p2, false));
    p.aap(x.clone(), dual(ta, false, Dcc0, true));
    p.aap(y, dual(tb, false, Dcc1, false));
    p.ap(tra(Dcc0, tb, p1));
    p.aap(tra(ta, Dcc1, p2), nd(Dcc0));
    if let Some(c) = c {
        p.aap(r(ta), c);
    }
    if let Some(s) = s {
        p.aap(x, r(p2));
        p.aap(tra(p2, Dcc0, tb), s);
    }
}

fn addition(n: u32, sub: bool) -> MicroProgram {
    let mut p = MicroProgram::new(if sub { "subtraction" } else { "addition" }, n);
    p.carried = vec![T0, T1, T2, T3, Dcc0];
    p.mark_phase();
    let mut rc = Ripple::new();
    rc.init(&mut p, konst(sub));
    for i in 0..n {
        if i > 0 {
            p.mark_phase();
        }
        if sub {
            rc.sub(&mut p, d("src1", i), d("src2", i), d("dst", i));
        } else {
            rc.add(&mut p, d("src1", i), load_broadcast(d("src2", i)), d("dst", i));
        }
    }
    p
}

fn compare(op: Op, n: u32, signed: bool) -> MicroProgram {
    let mut p = MicroProgram::new(op.name(), n);
    p.carried = vec![T1];
    p.mark_phase();
    cmp_chain(&mut p, n, "src1", "src2", op == Op::GreaterEqual, signed);
    p.aap(r(T1), d("dst", 0));
    p
}

fn equal(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("equal", n);
    p.carried = vec![T2, T3];
    p.mark_phase();
    // T2 tracks a <= b, T3 tracks a >= b
    p.aap(RowSpec::C1, tra(T2, T3, T0));
    for i in 0..n {
        if i > 0 {
            p.mark_phase();
        }
        p.aap(d("src1", i), dual(T0, false, Dcc0, true));
        p.aap(d("src2", i), dual(T1, false, Dcc1, true));
        p.ap(tra(Dcc0, T1, T2));
        p.ap(tra(T0, Dcc1, T3));
    }
    p.aap(RowSpec::C0, r(T0));
    p.aap(tra(T0, T2, T3), d("dst", 0));
    p
}

fn if_else(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("if_else", n);
    for i in 0..n {
        p.mark_phase();
        mux(&mut p, d("sel", 0), d("src1", i), d("src2", i), d("dst", i));
    }
    p
}

fn relu(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("ReLU", n);
    let m = d("src", n - 1);
    let low: Vec<u32> = (0..n - 1).collect();
    for pair in low.chunks(2) {
        p.mark_phase();
        if let [i, j] = *pair {
            p.aap(RowSpec::C0, tra(T0, T1, T2));
            p.aap(m.clone(), dual(Dcc0, true, Dcc1, true));
            p.aap(d("src", i), r(T2));
            p.aap(d("src", j), r(T3));
            p.aap(tra(T0, Dcc0, T2), d("dst", i));
            p.aap(tra(T1, Dcc1, T3), d("dst", j));
        } else {
            let i = pair[0];
            p.aap(RowSpec::C0, r(T0));
            p.aap(m.clone(), nd(Dcc0));
            p.aap(d("src", i), r(T2));
            p.aap(tra(T0, Dcc0, T2), d("dst", i));
        }
    }
    // sign bit: m & !m
    p.mark_phase();
    p.aap(m, dual(T0, false, Dcc0, true));
    p.aap(RowSpec::C0, r(T1));
    p.aap(tra(T0, Dcc0, T1), d("dst", n - 1));
    p
}

fn abs(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("abs", n);
    p.carried = vec![T0, T1, T2, T3];
    p.mark_phase();
    // g: "some lower bit is set" once the sign is known to be 1
    let mut g = [T0, T1, T2];
    let mut f = T3;
    p.aap(RowSpec::C0, tra(g[0], g[1], g[2]));
    for i in 0..n {
        if i > 0 {
            p.mark_phase();
        }
        let a = d("src", i);
        p.aap(RowSpec::C0, dual(f, false, Dcc0, true));
        p.aap(a.clone(), r(Dcc1));
        p.aap(tra(g[0], f, Dcc1), nd(Dcc1));
        p.aap(a.clone(), r(f));
        p.ap(tra(g[1], f, Dcc0));
        if i + 1 < n {
            p.aap(a, r(g[0]));
            p.aap(d("src", n - 1), r(f));
            p.ap(tra(g[0], g[2], f));
        }
        p.aap(RowSpec::C0, r(Dcc0));
        p.aap(tra(Dcc1, g[1], Dcc0), d("dst", i));
        let old = g[1];
        g = [g[0], g[2], f];
        f = old;
    }
    p
}

fn max_min(op: Op, n: u32) -> MicroProgram {
    let mut p = MicroProgram::new(op.name(), n);
    p.carried = vec![T1];
    p.mark_phase();
    let (a, b) = if op == Op::Max { ("src1", "src2") } else { ("src2", "src1") };
    cmp_chain(&mut p, n, a, b, false, true);
    p.aap(r(T1), d("tmp", 0));
    for i in 0..n {
        p.mark_phase();
        mux(&mut p, d("tmp", 0), d("src1", i), d("src2", i), d("dst", i));
    }
    p
}

fn and_or_reduction(op: Op, n: u32) -> MicroProgram {
    let and = op == Op::AndReduction;
    let mut p = MicroProgram::new(op.name(), n);
    p.carried = vec![T0];
    p.mark_phase();
    let acc = T0;
    let mut i = if n % 2 == 1 {
        p.aap(d("src", 0), r(acc));
        1
    } else {
        p.aap(konst(and), r(acc));
        0
    };
    while i + 1 < n {
        if i > 1 {
            p.mark_phase();
        }
        p.aap(konst(!and), tra(T1, T2, T3));
        p.aap(d("src", i), r(T3));
        p.ap(tra(acc, T1, T3));
        p.aap(d("src", i + 1), r(Dcc0));
        p.ap(tra(acc, T2, Dcc0));
        i += 2;
    }
    p.aap(r(acc), d("dst", 0));
    p
}

fn xor_reduction(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("xor_reduction", n);
    p.mark_phase();
    if n == 1 {
        p.aap(d("src", 0), d("dst", 0));
        return p;
    }
    p.carried = vec![T0, T1, T2, T3];
    // parity kept in two T rows
    let (p1, mut p2, mut ta, mut tb) = (T0, T1, T2, T3);
    p.aap(d("src", 0), dual(p1, false, p2, false));
    let mut i = 1;
    while i < n {
        if i > 1 {
            p.mark_phase();
        }
        let b = if i + 1 < n { d("src", i + 1) } else { RowSpec::C0 };
        let a = d("src", i);
        p.aap(a.clone(), dual(ta, false, Dcc0, true));
        p.aap(b, dual(tb, false, Dcc1, false));
        p.ap(tra(Dcc0, tb, p1));
        p.aap(tra(ta, Dcc1, p2), nd(Dcc0));
        p.aap(a, r(p1));
        if i + 2 >= n {
            p.aap(tra(p1, Dcc0, tb), d("dst", 0));
        } else {
            p.ap(tra(p1, Dcc0, tb));
        }
        let old_p2 = p2;
        p2 = tb;
        tb = old_p2;
        std::mem::swap(&mut ta, &mut tb);
        i += 2;
    }
    p
}

fn multiplication(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("multiplication", n);
    p.carried = vec![T0, T1, T2, T3, Dcc0];
    // P[0..n) is dst, P[n..2n) is hi
    let acc = |k: u32| if k < n { d("dst", k) } else { d("hi", k - n) };
    p.mark_phase();
    for j in 0..n {
        p.aap(d("src1", j), r(T0));
        p.aap(d("src2", 0), r(T1));
        p.aap(RowSpec::C0, r(T2));
        p.aap(tra(T0, T1, T2), d("dst", j));
    }
    p.aap(RowSpec::C0, d("hi", 0));
    for i in 1..n {
        p.mark_phase();
        let mut rc = Ripple::new();
        rc.init(&mut p, RowSpec::C0);
        for j in 0..n {
            let (a, b) = (d("src1", j), d("src2", i));
            let load = move |p: &mut MicroProgram, [x, q, w]: [ComputeRow; 3]| {
                p.aap(a, r(x));
                p.aap(b, r(q));
                p.aap(RowSpec::C0, r(w));
                p.ap(tra(x, q, w));
            };
            rc.add(&mut p, acc(i + j), load, acc(i + j));
        }
        p.aap(r(Dcc0), d("hi", i));
    }
    p
}

fn division(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("division", n);
    p.mark_phase();
    // zs.w: no divisor bit at or above w is set
    if n >= 2 {
        p.aap(d("src2", n - 1), nd(Dcc1));
        p.aap(r(Dcc1), d("zs", n - 1));
        for w in (1..n - 1).rev() {
            p.aap(d("src2", w), nd(Dcc0));
            p.aap(RowSpec::C0, r(T0));
            p.aap(tra(Dcc0, Dcc1, T0), d("zs", w));
        }
    }
    // restoring steps; remainder bits sit at absolute positions of `rem`
    for k in (0..n).rev() {
        p.mark_phase();
        let w = n - k;
        let rem = |j: u32| if j == 0 { d("src1", k) } else { d("rem", k + j) };
        let mut rc = Ripple::new();
        rc.init(&mut p, RowSpec::C1);
        for j in 0..w {
            rc.sub(&mut p, rem(j), d("src2", j), d("dtmp", j));
        }
        if w < n {
            let [ta, tb, _] = rc.free;
            p.aap(d("zs", w), r(ta));
            p.aap(RowSpec::C0, r(tb));
            p.aap(tra(rc.ct, ta, tb), d("dst", k));
        } else {
            p.aap(r(rc.ct), d("dst", k));
        }
        if k > 0 {
            for j in 0..w {
                mux(&mut p, d("dst", k), d("dtmp", j), rem(j), d("rem", k + j));
            }
        }
    }
    p
}

fn bitcount(n: u32) -> MicroProgram {
    let mut p = MicroProgram::new("bitcount", n);
    let pl = plan(Op::Bitcount, n, &OpOptions::default()).expect("valid width");
    debug_assert_eq!(count_bits(n), crate::oplib::output_width(Op::Bitcount, n));
    for it in &pl.instances {
        p.mark_phase();
        let get = |k: &str| it.inputs.iter().find(|(n, _)| *n == k).map(|(_, s)| sig(s)).unwrap();
        let tgt = |i: usize| it.outputs.get(i).cloned().flatten().map(|(o, b)| d(&o, b));
        if it.kernel == "copy" {
            p.aap(get("a"), tgt(0).unwrap());
        } else {
            fa_cell(&mut p, get("a"), get("b"), get("c"), tgt(0), tgt(1));
        }
    }
    p
}

/// Hand-scheduled program for `op` at width `n`.
pub fn curated_program(op: Op, n: u32, opts: &OpOptions) -> Result<MicroProgram, OpError> {
    check_width(op, n, opts)?;
    Ok(match op {
        Op::Addition => addition(n, false),
        Op::Subtraction => addition(n, true),
        Op::Greater | Op::GreaterEqual => compare(op, n, op.signed(opts)),
        Op::Equal => equal(n),
        Op::IfElse => if_else(n),
        Op::Relu => relu(n),
        Op::Abs => abs(n),
        Op::Max | Op::Min => max_min(op, n),
        Op::AndReduction | Op::OrReduction => and_or_reduction(op, n),
        Op::XorReduction => xor_reduction(n),
        Op::Multiplication => multiplication(n),
        Op::Division => division(n),
        Op::Bitcount => bitcount(n),
    })
}

/// One full-adder slice: operands a, b, cin (1 bit) -> sum, cout.
pub fn full_adder_program() -> MicroProgram {
    let mut p = MicroProgram::new("full_adder", 1);
    p.mark_phase();
    let mut rc = Ripple::new();
    rc.init(&mut p, d("cin", 0));
    rc.add(&mut p, d("a", 0), load_broadcast(d("b", 0)), d("sum", 0));
    p.aap(r(Dcc0), d("cout", 0));
    p
}

/// Hand-optimized slice MIG of each operation.
pub fn curated_mig_text(op: Op) -> &'static str {
    match op {
        Op::Abs => include_str!("../data/migs/abs.mig"),
        Op::Addition => include_str!("../data/migs/addition.mig"),
        Op::Bitcount => include_str!("../data/migs/bitcount.mig"),
        Op::Division => include_str!("../data/migs/division.mig"),
        Op::Max => include_str!("../data/migs/max.mig"),
        Op::Min => include_str!("../data/migs/min.mig"),
        Op::Multiplication => include_str!("../data/migs/multiplication.mig"),
        Op::Relu => include_str!("../data/migs/relu.mig"),
        Op::Subtraction => include_str!("../data/migs/subtraction.mig"),
        Op::IfElse => include_str!("../data/migs/if_else.mig"),
        Op::AndReduction => include_str!("../data/migs/and_reduction.mig"),
        Op::OrReduction => include_str!("../data/migs/or_reduction.mig"),
        Op::XorReduction => include_str!("../data/migs/xor_reduction.mig"),
        Op::Equal => include_str!("../data/migs/equal.mig"),
        Op::Greater => include_str!("../data/migs/greater.mig"),
        Op::GreaterEqual => include_str!("../data/migs/greater_equal.mig"),
    }
}

pub fn curated_mig(op: Op) -> Mig {
    Mig::parse(curated_mig_text(op)).expect("bundled MIG parses")
}
