// SPDX-License-Identifier: Apache-2.0

//! μOp IR, text format, counts and scaling classification, static checks,
//! and lowering of (MIG, allocation) slices into AAP/AP sequences.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::allocator::{allocate_rows_with, traversal_order, AllocError, ComputeRow, PhaseMode, RowOperandAllocation, Source};
use crate::mig::{Lit, Mig, MigKind, NodeId};

/// One member of a two-row write group; `neg` selects the negated wordline
/// of a DCC row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupRow {
    pub row: ComputeRow,
    pub neg: bool,
}

impl GroupRow {
    fn name(&self) -> String {
        if self.neg {
            format!("N{}", self.row.name())
        } else {
            self.row.name().to_string()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RowSpec {
    D { operand: String, bit: u32 },
    T(ComputeRow),
    Dcc(ComputeRow),
    Ndcc(ComputeRow),
    C0,
    C1,
    Tra([ComputeRow; 3]),
    Dual([GroupRow; 2]),
}

impl RowSpec {
    pub fn d(operand: &str, bit: u32) -> Self {
        RowSpec::D { operand: operand.to_string(), bit }
    }

    /// Plain compute row with the right spec kind.
    pub fn row(r: ComputeRow) -> Self {
        if r.is_dcc() {
            RowSpec::Dcc(r)
        } else {
            RowSpec::T(r)
        }
    }

    pub fn ndcc(r: ComputeRow) -> Self {
        RowSpec::Ndcc(r)
    }

    pub fn tra(a: ComputeRow, b: ComputeRow, c: ComputeRow) -> Self {
        RowSpec::Tra([a, b, c])
    }

    pub fn dual(a: GroupRow, b: GroupRow) -> Self {
        RowSpec::Dual([a, b])
    }

    /// Compute rows read when this spec is an AAP source or AP target.
    pub fn reads(&self) -> Vec<ComputeRow> {
        match self {
            RowSpec::T(r) | RowSpec::Dcc(r) | RowSpec::Ndcc(r) => vec![*r],
            RowSpec::Tra(rs) => rs.to_vec(),
            _ => vec![],
        }
    }

    /// Compute rows written when this spec is an AAP destination (or a TRA).
    pub fn writes(&self) -> Vec<ComputeRow> {
        match self {
            RowSpec::T(r) | RowSpec::Dcc(r) | RowSpec::Ndcc(r) => vec![*r],
            RowSpec::Tra(rs) => rs.to_vec(),
            RowSpec::Dual(g) => g.iter().map(|x| x.row).collect(),
            _ => vec![],
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            RowSpec::T(r) if r.is_dcc() => Err(format!("{r} is not a T row")),
            RowSpec::Dcc(r) | RowSpec::Ndcc(r) if !r.is_dcc() => Err(format!("{r} is not a DCC row")),
            RowSpec::Tra([a, b, c]) if a == b || b == c || a == c => Err("TRA rows must be distinct".into()),
            RowSpec::Dual([a, b]) if a.row == b.row => Err("DUAL rows must be distinct".into()),
            RowSpec::Dual(g) if g.iter().any(|x| x.neg && !x.row.is_dcc()) => {
                Err("only DCC rows have a negated wordline".into())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for RowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowSpec::D { operand, bit } => write!(f, "D:{operand}.{bit}"),
            RowSpec::T(r) => write!(f, "T:{r}"),
            RowSpec::Dcc(r) => write!(f, "DCC:{}", r.index()),
            RowSpec::Ndcc(r) => write!(f, "NDCC:{}", r.index()),
            RowSpec::C0 => f.write_str("C0"),
            RowSpec::C1 => f.write_str("C1"),
            RowSpec::Tra([a, b, c]) => write!(f, "TRA({a},{b},{c})"),
            RowSpec::Dual([a, b]) => write!(f, "DUAL({},{})", a.name(), b.name()),
        }
    }
}

fn parse_group_row(s: &str) -> Result<GroupRow, String> {
    match s.strip_prefix('N') {
        Some(rest) => {
            let row: ComputeRow = rest.parse()?;
            Ok(GroupRow { row, neg: true })
        }
        None => Ok(GroupRow { row: s.parse()?, neg: false }),
    }
}

fn parse_rowspec(s: &str) -> Result<RowSpec, String> {
    let dcc = |i: &str| match i {
        "0" => Ok(ComputeRow::Dcc0),
        "1" => Ok(ComputeRow::Dcc1),
        _ => Err(format!("bad DCC index `{i}`")),
    };
    let spec = if let Some(rest) = s.strip_prefix("D:") {
        let (op, bit) = rest.rsplit_once('.').ok_or_else(|| format!("bad D rowspec `{s}`"))?;
        if op.is_empty() {
            return Err(format!("empty operand in `{s}`"));
        }
        RowSpec::D { operand: op.to_string(), bit: bit.parse().map_err(|_| format!("bad bit in `{s}`"))? }
    } else if let Some(r) = s.strip_prefix("T:") {
        RowSpec::T(r.parse()?)
    } else if let Some(i) = s.strip_prefix("DCC:") {
        RowSpec::Dcc(dcc(i)?)
    } else if let Some(i) = s.strip_prefix("NDCC:") {
        RowSpec::Ndcc(dcc(i)?)
    } else if s == "C0" {
        RowSpec::C0
    } else if s == "C1" {
        RowSpec::C1
    } else if let Some(body) = s.strip_prefix("TRA(").and_then(|b| b.strip_suffix(')')) {
        let rs: Vec<&str> = body.split(',').collect();
        if rs.len() != 3 {
            return Err(format!("TRA needs three rows: `{s}`"));
        }
        RowSpec::Tra([rs[0].parse()?, rs[1].parse()?, rs[2].parse()?])
    } else if let Some(body) = s.strip_prefix("DUAL(").and_then(|b| b.strip_suffix(')')) {
        let rs: Vec<&str> = body.split(',').collect();
        if rs.len() != 2 {
            return Err(format!("DUAL needs two rows: `{s}`"));
        }
        RowSpec::Dual([parse_group_row(rs[0])?, parse_group_row(rs[1])?])
    } else {
        return Err(format!("unknown rowspec `{s}`"));
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MicroOp {
    Aap { src: RowSpec, dst: RowSpec },
    Ap { target: RowSpec },
}

impl MicroOp {
    pub fn aap(src: RowSpec, dst: RowSpec) -> Self {
        MicroOp::Aap { src, dst }
    }
    pub fn ap(target: RowSpec) -> Self {
        MicroOp::Ap { target }
    }
    pub fn is_aap(&self) -> bool {
        matches!(self, MicroOp::Aap { .. })
    }
}

impl fmt::Display for MicroOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MicroOp::Aap { src, dst } => write!(f, "AAP {src} {dst}"),
            MicroOp::Ap { target } => write!(f, "AP {target}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhaseMarker {
    /// index of the first μOp of the phase
    pub index: usize,
    pub phase: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub aap: usize,
    pub ap: usize,
    pub total: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MicroProgram {
    pub op_name: String,
    pub width: u32,
    pub ops: Vec<MicroOp>,
    pub phase_markers: Vec<PhaseMarker>,
    /// compute rows whose value legitimately crosses a phase boundary
    pub carried: Vec<ComputeRow>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("element width must be at least 1")]
    ZeroWidth,
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("allocation does not match graph: {0}")]
    Mismatch(String),
    #[error("slice input `{0}` has no binding")]
    Unbound(String),
    #[error("node {0} has its operand copies split across phases")]
    SplitNode(NodeId),
}

impl MicroProgram {
    pub fn new(op_name: &str, width: u32) -> Self {
        MicroProgram { op_name: op_name.to_string(), width, ..Default::default() }
    }

    pub fn push(&mut self, op: MicroOp) {
        self.ops.push(op);
    }

    pub fn aap(&mut self, src: RowSpec, dst: RowSpec) {
        self.ops.push(MicroOp::aap(src, dst));
    }

    pub fn ap(&mut self, target: RowSpec) {
        self.ops.push(MicroOp::ap(target));
    }

    /// Start a new phase at the current position.
    pub fn mark_phase(&mut self) {
        let phase = self.phase_markers.last().map(|m| m.phase + 1).unwrap_or(0);
        self.phase_markers.push(PhaseMarker { index: self.ops.len(), phase });
    }

    pub fn counts(&self) -> Counts {
        let aap = self.ops.iter().filter(|o| o.is_aap()).count();
        Counts { aap, ap: self.ops.len() - aap, total: self.ops.len() }
    }

    pub fn encode(&self) -> String {
        let mut s = format!("op {} n {}\n", self.op_name, self.width);
        if !self.carried.is_empty() {
            let names: Vec<&str> = self.carried.iter().map(|r| r.name()).collect();
            s.push_str(&format!("CARRY {}\n", names.join(" ")));
        }
        let mut m = self.phase_markers.iter().peekable();
        for (i, op) in self.ops.iter().enumerate() {
            while let Some(pm) = m.peek() {
                if pm.index == i {
                    s.push_str(&format!("PHASE {}\n", pm.phase));
                    m.next();
                } else {
                    break;
                }
            }
            s.push_str(&op.to_string());
            s.push('\n');
        }
        for pm in m {
            s.push_str(&format!("PHASE {}\n", pm.phase));
        }
        s
    }

    pub fn decode(text: &str) -> Result<Self, ProgramError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, msg: String| ProgramError::Parse { line: line + 1, msg };
        let (hl, header) = lines.next().ok_or_else(|| perr(0, "empty program".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "op" || h[2] != "n" {
            return Err(perr(hl, "expected header `op <name> n <width>`".into()));
        }
        let width: u32 = h[3].parse().map_err(|_| perr(hl, "bad width".into()))?;
        let mut p = MicroProgram::new(h[1], width);
        for (ln, raw) in lines {
            let t: Vec<&str> = raw.split_whitespace().collect();
            match t[0] {
                "AAP" if t.len() == 3 => {
                    let src = parse_rowspec(t[1]).map_err(|e| perr(ln, e))?;
                    let dst = parse_rowspec(t[2]).map_err(|e| perr(ln, e))?;
                    if matches!(dst, RowSpec::C0 | RowSpec::C1) {
                        return Err(perr(ln, "AAP destination cannot be a constant row".into()));
                    }
                    if matches!(src, RowSpec::Dual(_)) {
                        return Err(perr(ln, "DUAL is only valid as a destination".into()));
                    }
                    p.aap(src, dst);
                }
                "AP" if t.len() == 2 => {
                    let target = parse_rowspec(t[1]).map_err(|e| perr(ln, e))?;
                    if matches!(target, RowSpec::Dual(_)) {
                        return Err(perr(ln, "AP target cannot be DUAL".into()));
                    }
                    p.ap(target);
                }
                "PHASE" if t.len() == 2 => {
                    let phase: u32 = t[1].parse().map_err(|_| perr(ln, "bad phase".into()))?;
                    p.phase_markers.push(PhaseMarker { index: p.ops.len(), phase });
                }
                "CARRY" if p.ops.is_empty() && p.phase_markers.is_empty() => {
                    for r in &t[1..] {
                        p.carried.push(r.parse().map_err(|e| perr(ln, e))?);
                    }
                }
                other => return Err(perr(ln, format!("unknown or malformed opcode `{other}`"))),
            }
        }
        Ok(p)
    }

    /// Per-operand highest referenced bit + 1.
    pub fn operand_widths(&self) -> BTreeMap<String, u32> {
        let mut w: BTreeMap<String, u32> = BTreeMap::new();
        let mut see = |s: &RowSpec| {
            if let RowSpec::D { operand, bit } = s {
                let e = w.entry(operand.clone()).or_default();
                *e = (*e).max(bit + 1);
            }
        };
        for op in &self.ops {
            match op {
                MicroOp::Aap { src, dst } => {
                    see(src);
                    see(dst);
                }
                MicroOp::Ap { target } => see(target),
            }
        }
        w
    }

    /// Phase of every op (ops before the first marker are in phase 0).
    fn op_phases(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.ops.len());
        let mut cur = 0;
        let mut m = self.phase_markers.iter().peekable();
        for i in 0..self.ops.len() {
            while let Some(pm) = m.peek() {
                if pm.index <= i {
                    cur = pm.phase;
                    m.next();
                } else {
                    break;
                }
            }
            out.push(cur);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountReport {
    pub aap: usize,
    pub ap: usize,
    pub total: usize,
    pub per_phase: Vec<(u32, usize)>,
}

pub fn count_report(p: &MicroProgram) -> CountReport {
    let c = p.counts();
    let mut per: BTreeMap<u32, usize> = BTreeMap::new();
    for ph in p.op_phases() {
        *per.entry(ph).or_default() += 1;
    }
    CountReport { aap: c.aap, ap: c.ap, total: c.total, per_phase: per.into_iter().collect() }
}

// ---------------------------------------------------------------------------
// static checks

/// Every compute row read in phase p was written earlier in p, or earlier
/// in the program and declared carried.
pub fn check_read_before_write(p: &MicroProgram) -> Result<(), Vec<String>> {
    let phases = p.op_phases();
    let mut last_write: HashMap<ComputeRow, u32> = HashMap::new();
    let mut errs = Vec::new();
    for (i, op) in p.ops.iter().enumerate() {
        let ph = phases[i];
        let (reads, writes) = match op {
            MicroOp::Aap { src, dst } => {
                let mut w = src.writes();
                if !matches!(src, RowSpec::Tra(_)) {
                    w.clear();
                }
                w.extend(dst.writes());
                (src.reads(), w)
            }
            MicroOp::Ap { target } => (target.reads(), target.reads()),
        };
        for r in reads {
            match last_write.get(&r) {
                None => errs.push(format!("op {i} ({op}) reads {r} before any write")),
                Some(&w) if w != ph && !p.carried.contains(&r) => {
                    errs.push(format!("op {i} ({op}) reads {r} written in phase {w} without a carry declaration"))
                }
                _ => {}
            }
        }
        for r in writes {
            last_write.insert(r, ph);
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

pub fn check_phase_ordering(p: &MicroProgram) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    for w in p.phase_markers.windows(2) {
        if w[1].phase <= w[0].phase {
            errs.push(format!("phase {} follows phase {}", w[1].phase, w[0].phase));
        }
        if w[1].index < w[0].index {
            errs.push(format!("marker for phase {} precedes its predecessor", w[1].phase));
        }
    }
    for pm in &p.phase_markers {
        if pm.index > p.ops.len() {
            errs.push(format!("marker for phase {} past the end", pm.phase));
        }
    }
    for op in &p.ops {
        if let MicroOp::Aap { dst: RowSpec::C0 | RowSpec::C1, .. } = op {
            errs.push(format!("write to constant row: {op}"));
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

// ---------------------------------------------------------------------------
// scaling classification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ScalingClass {
    Linear,
    Logarithmic,
    Quadratic,
}

impl fmt::Display for ScalingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScalingClass::Linear => "Linear",
            ScalingClass::Logarithmic => "Logarithmic",
            ScalingClass::Quadratic => "Quadratic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("need at least 3 measured widths, got {0}")]
pub struct TooFewPoints(pub usize);

/// Least-squares fit; returns the residual sum of squares.
fn lsq_residual(rows: &[Vec<f64>], y: &[f64]) -> f64 {
    let k = rows[0].len();
    // normal equations with a tiny ridge for rank-deficient designs
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, &yy) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] * r[j];
            }
            a[i][k] += r[i] * yy;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-9;
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        if d.abs() < 1e-12 {
            continue;
        }
        for j in c..=k {
            a[c][j] /= d;
        }
        for r in 0..k {
            if r != c {
                let f = a[r][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..k).map(|i| a[i][k]).collect();
    rows.iter()
        .zip(y)
        .map(|(r, yy)| {
            let p: f64 = r.iter().zip(&coef).map(|(x, c)| x * c).sum();
            (p - yy).powi(2)
        })
        .sum()
}

/// Residual sums of squares for the linear, floor(n/2) and quadratic templates.
pub fn scaling_residuals(points: &[(u32, usize)]) -> (f64, f64, f64) {
    let y: Vec<f64> = points.iter().map(|p| p.1 as f64).collect();
    let lin: Vec<Vec<f64>> = points.iter().map(|&(n, _)| vec![n as f64, 1.0]).collect();
    let log: Vec<Vec<f64>> = points.iter().map(|&(n, _)| vec![(n / 2) as f64, 1.0]).collect();
    let quad: Vec<Vec<f64>> = points.iter().map(|&(n, _)| vec![(n * n) as f64, n as f64, 1.0]).collect();
    (lsq_residual(&lin, &y), lsq_residual(&log, &y), lsq_residual(&quad, &y))
}

/// A linear-in-n template (c·n or c·floor(n/2)) is preferred while its RMS
/// error stays within 2% of the mean count; otherwise the quadratic one.
/// Ties between the two linear forms go to Linear.
pub fn classify_scaling(points: &[(u32, usize)]) -> Result<ScalingClass, TooFewPoints> {
    let mut ns: Vec<u32> = points.iter().map(|p| p.0).collect();
    ns.sort();
    ns.dedup();
    if ns.len() < 3 {
        return Err(TooFewPoints(ns.len()));
    }
    let (rl, rg, _rq) = scaling_residuals(points);
    let m = points.len() as f64;
    let mean = points.iter().map(|p| p.1 as f64).sum::<f64>() / m;
    let tol = (0.02 * mean.max(1.0)).powi(2) * m;
    let eps = 1e-6 * (1.0 + rl.max(rg));
    if rl.min(rg) <= tol {
        if rg + eps < rl {
            Ok(ScalingClass::Logarithmic)
        } else {
            Ok(ScalingClass::Linear)
        }
    } else {
        Ok(ScalingClass::Quadratic)
    }
}

// ---------------------------------------------------------------------------
// generation

/// Where a slice input comes from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Signal {
    Bit { operand: String, bit: u32 },
    Const(bool),
}

impl Signal {
    pub fn bit(operand: &str, bit: u32) -> Self {
        Signal::Bit { operand: operand.to_string(), bit }
    }
    pub fn spec(&self) -> RowSpec {
        match self {
            Signal::Bit { operand, bit } => RowSpec::d(operand, *bit),
            Signal::Const(false) => RowSpec::C0,
            Signal::Const(true) => RowSpec::C1,
        }
    }
}

/// One bit-slice instance: MIG input name -> source, output index -> target.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SliceBinding {
    pub inputs: HashMap<String, Signal>,
    pub outputs: Vec<Option<(String, u32)>>,
}

/// Name of the scratch operand that holds spilled intermediate results.
pub const SPILL: &str = "spill";

/// Lowers slices into one program, numbering phases globally.
#[derive(Debug)]
pub struct Generator {
    pub program: MicroProgram,
    pub mode: PhaseMode,
    spill_width: u32,
}

impl Generator {
    pub fn new(op_name: &str, width: u32) -> Self {
        Generator { program: MicroProgram::new(op_name, width), mode: PhaseMode::Prose, spill_width: 0 }
    }

    pub fn with_mode(mut self, mode: PhaseMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn spill_width(&self) -> u32 {
        self.spill_width
    }

    /// Lower one slice. `alloc` must come from `mig`.
    pub fn emit_slice(&mut self, mig: &Mig, alloc: &RowOperandAllocation, b: &SliceBinding) -> Result<(), ProgramError> {
        let order = traversal_order(mig);
        if alloc.entries.len() != 3 * order.len() {
            return Err(ProgramError::Mismatch(format!(
                "{} entries for {} MAJ nodes",
                alloc.entries.len(),
                order.len()
            )));
        }
        let mut by_node: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, e) in alloc.entries.iter().enumerate() {
            by_node.entry(e.maj_node).or_default().push(i);
        }
        for &id in &order {
            let v = by_node.get(&id).map(|v| v.len()).unwrap_or(0);
            if v != 3 {
                return Err(ProgramError::Mismatch(format!("node {id} has {v} entries")));
            }
            let ph: HashSet<u32> = by_node[&id]
                .iter()
                .filter(|&&i| alloc.entries[i].source == Source::DGroupCopy)
                .map(|&i| alloc.entries[i].phase)
                .collect();
            if ph.len() > 1 {
                return Err(ProgramError::SplitNode(id));
            }
        }
        let src_of = |l: Lit| -> Result<Option<Signal>, ProgramError> {
            match &mig.node(l.node).unwrap().kind {
                MigKind::Input(name) => {
                    b.inputs.get(name).cloned().map(Some).ok_or_else(|| ProgramError::Unbound(name.clone()))
                }
                MigKind::Const0 => Ok(Some(Signal::Const(false))),
                MigKind::Const1 => Ok(Some(Signal::Const(true))),
                MigKind::Maj(_) => Ok(None),
            }
        };

        // which MAJ nodes need a copy in the D group
        let pos: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        // last position at which a slice input row is still read
        let mut last_read: HashMap<RowSpec, usize> = HashMap::new();
        for &id in &order {
            for l in mig.maj_inputs(id).unwrap() {
                if let Some(Signal::Bit { .. }) = src_of(l)? {
                    let r = src_of(l)?.unwrap().spec();
                    let e = last_read.entry(r).or_insert(0);
                    *e = (*e).max(pos[&id]);
                }
            }
        }
        for o in mig.outputs() {
            if let Some(sig @ Signal::Bit { .. }) = src_of(*o)? {
                last_read.insert(sig.spec(), usize::MAX);
            }
        }
        let mut home: HashMap<NodeId, RowSpec> = HashMap::new();
        let mut direct_out: HashMap<NodeId, usize> = HashMap::new();
        let mut next_spill = 0u32;
        let mut need_home: Vec<NodeId> = Vec::new();
        for e in &alloc.entries {
            let l = mig.maj_inputs(e.maj_node).unwrap()[e.edge_index];
            if e.source == Source::DGroupCopy && mig.is_maj(l.node) && !need_home.contains(&l.node) {
                need_home.push(l.node);
            }
        }
        for (k, o) in mig.outputs().iter().enumerate() {
            let Some(Some((op, bit))) = b.outputs.get(k) else { continue };
            if !mig.is_maj(o.node) {
                continue;
            }
            let tgt = RowSpec::d(op, *bit);
            // an input row may be overwritten once no later node reads it
            let clobbers = last_read.get(&tgt).is_some_and(|&r| r > pos[&o.node]);
            if !o.neg && !clobbers && !direct_out.contains_key(&o.node) {
                home.insert(o.node, tgt);
                direct_out.insert(o.node, k);
            } else if !need_home.contains(&o.node) {
                need_home.push(o.node);
            }
        }
        for id in need_home {
            if !home.contains_key(&id) {
                home.insert(id, RowSpec::d(SPILL, next_spill));
                next_spill += 1;
            }
        }
        self.spill_width = self.spill_width.max(next_spill);

        // per phase: copy-ins (same-source copies share one write), then
        // each node's TRA, fused with its home write when it has one
        enum Step {
            Copy(RowSpec, GroupRow),
            Compute([ComputeRow; 3], Option<RowSpec>),
        }
        let mut phases: Vec<Vec<Step>> = Vec::new();
        let mut cur_phase: Option<u32> = None;
        for &id in &order {
            let ents: Vec<&crate::allocator::AllocationEntry> = by_node[&id].iter().map(|&i| &alloc.entries[i]).collect();
            let ph = ents.iter().map(|e| e.phase).max().unwrap();
            if cur_phase != Some(ph) {
                phases.push(Vec::new());
                cur_phase = Some(ph);
            }
            let steps = phases.last_mut().unwrap();
            let ins = mig.maj_inputs(id).unwrap();
            let mut rows = [ComputeRow::T0; 3];
            for e in &ents {
                rows[e.edge_index] = e.row;
                if e.source == Source::ParentResult {
                    continue;
                }
                let l = ins[e.edge_index];
                let src = match src_of(l)? {
                    Some(s) => s.spec(),
                    None => home[&l.node].clone(),
                };
                if l.neg && !e.row.is_dcc() {
                    return Err(ProgramError::Mismatch(format!("node {id}: complemented edge on {}", e.row)));
                }
                steps.push(Step::Copy(src, GroupRow { row: e.row, neg: l.neg }));
            }
            steps.push(Step::Compute(rows, home.get(&id).cloned()));
        }
        for steps in phases {
            self.program.mark_phase();
            let mut done = vec![false; steps.len()];
            for i in 0..steps.len() {
                match &steps[i] {
                    Step::Copy(src, _) if !done[i] => {
                        // later copies of the same source in this phase; their
                        // rows are untouched until their own node runs
                        let mut group = Vec::new();
                        for j in i..steps.len() {
                            if let Step::Copy(s2, g) = &steps[j] {
                                if s2 == src && !done[j] {
                                    group.push(*g);
                                    done[j] = true;
                                }
                            }
                            // a home written later may be this source; stop there
                            if let Step::Compute(_, Some(h)) = &steps[j] {
                                if h == src {
                                    break;
                                }
                            }
                        }
                        self.emit_group(src.clone(), group);
                    }
                    Step::Copy(..) => {}
                    Step::Compute(rows, Some(h)) => self.program.aap(RowSpec::Tra(*rows), h.clone()),
                    Step::Compute(rows, None) => self.program.ap(RowSpec::Tra(*rows)),
                }
            }
        }
        // outputs that were not written directly
        for (k, o) in mig.outputs().iter().enumerate() {
            let Some(Some((op, bit))) = b.outputs.get(k) else { continue };
            let tgt = RowSpec::d(op, *bit);
            if direct_out.get(&o.node) == Some(&k) {
                continue;
            }
            let src = match src_of(*o)? {
                Some(s) => s.spec(),
                None => home[&o.node].clone(),
            };
            if o.neg {
                self.program.aap(src, RowSpec::Ndcc(ComputeRow::Dcc0));
                self.program.aap(RowSpec::Dcc(ComputeRow::Dcc0), tgt);
            } else if src != tgt {
                self.program.aap(src, tgt);
            }
        }
        Ok(())
    }

    /// One source written to several rows: TRA broadcasts for plain rows,
    /// DUAL for pairs, single AAPs for the rest.
    fn emit_group(&mut self, src: RowSpec, mut group: Vec<GroupRow>) {
        let plain: Vec<ComputeRow> = group.iter().filter(|g| !g.neg).map(|g| g.row).collect();
        if plain.len() >= 3 {
            let t = [plain[0], plain[1], plain[2]];
            self.program.aap(src.clone(), RowSpec::Tra(t));
            group.retain(|g| g.neg || !t.contains(&g.row));
        }
        for pair in group.chunks(2) {
            match pair {
                [a, b] => self.program.aap(src.clone(), RowSpec::Dual([*a, *b])),
                [a] if a.neg => self.program.aap(src.clone(), RowSpec::Ndcc(a.row)),
                [a] => self.program.aap(src.clone(), RowSpec::row(a.row)),
                _ => unreachable!(),
            }
        }
    }

    pub fn finish(self) -> MicroProgram {
        self.program
    }
}

/// Bit-serial generation of a single slice MIG: `bindings[i]` binds the
/// slice for iteration i.
pub fn generate_uprogram(
    op_name: &str,
    mig: &Mig,
    alloc: &RowOperandAllocation,
    bindings: &[SliceBinding],
    n: u32,
) -> Result<MicroProgram, ProgramError> {
    if n == 0 {
        return Err(ProgramError::ZeroWidth);
    }
    let mut g = Generator::new(op_name, n);
    if mig.maj_count() == 0 && mig.outputs().is_empty() {
        return Ok(g.finish());
    }
    for b in bindings {
        g.emit_slice(mig, alloc, b)?;
    }
    Ok(g.finish())
}

/// Allocate and lower in one go.
pub fn lower(op_name: &str, mig: &Mig, bindings: &[SliceBinding], n: u32, mode: PhaseMode) -> Result<MicroProgram, ProgramError> {
    let alloc = allocate_rows_with(mig, mode)?;
    let mut g = Generator::new(op_name, n).with_mode(mode);
    for b in bindings {
        g.emit_slice(mig, &alloc, b)?;
    }
    Ok(g.finish())
}
