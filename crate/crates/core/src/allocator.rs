// SPDX-License-Identifier: Apache-2.0

//! Phased row-to-operand allocation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::mig::{Lit, Mig, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComputeRow {
    T0,
    T1,
    T2,
    T3,
    Dcc0,
    Dcc1,
}

impl ComputeRow {
    pub const T_ROWS: [ComputeRow; 4] = [ComputeRow::T0, ComputeRow::T1, ComputeRow::T2, ComputeRow::T3];
    pub const DCC_ROWS: [ComputeRow; 2] = [ComputeRow::Dcc0, ComputeRow::Dcc1];
    pub const ALL: [ComputeRow; 6] =
        [ComputeRow::T0, ComputeRow::T1, ComputeRow::T2, ComputeRow::T3, ComputeRow::Dcc0, ComputeRow::Dcc1];

    pub fn is_dcc(self) -> bool {
        matches!(self, ComputeRow::Dcc0 | ComputeRow::Dcc1)
    }

    pub fn name(self) -> &'static str {
        match self {
            ComputeRow::T0 => "T0",
            ComputeRow::T1 => "T1",
            ComputeRow::T2 => "T2",
            ComputeRow::T3 => "T3",
            ComputeRow::Dcc0 => "DCC0",
            ComputeRow::Dcc1 => "DCC1",
        }
    }

    /// 0..3 for T rows, 0..1 for DCC rows.
    pub fn index(self) -> usize {
        match self {
            ComputeRow::T0 | ComputeRow::Dcc0 => 0,
            ComputeRow::T1 | ComputeRow::Dcc1 => 1,
            ComputeRow::T2 => 2,
            ComputeRow::T3 => 3,
        }
    }
}

impl fmt::Display for ComputeRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComputeRow {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComputeRow::ALL.iter().copied().find(|r| r.name() == s).ok_or_else(|| format!("unknown compute row `{s}`"))
    }
}

/// Free compute rows of the current phase (B_rows / B_rows_DCC).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputeRowSet {
    pub t_rows: Vec<ComputeRow>,
    pub dcc_rows: Vec<ComputeRow>,
}

impl ComputeRowSet {
    pub fn full() -> Self {
        ComputeRowSet { t_rows: ComputeRow::T_ROWS.to_vec(), dcc_rows: ComputeRow::DCC_ROWS.to_vec() }
    }
    fn take(&mut self, dcc: bool) -> Option<ComputeRow> {
        let v = if dcc { &mut self.dcc_rows } else { &mut self.t_rows };
        if v.is_empty() {
            None
        } else {
            Some(v.remove(0))
        }
    }
    pub fn is_empty(&self) -> bool {
        self.t_rows.is_empty() && self.dcc_rows.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    DGroupCopy,
    ParentResult,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::DGroupCopy => "D_GROUP_COPY",
            Source::ParentResult => "PARENT_RESULT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AllocationEntry {
    pub maj_node: NodeId,
    pub edge_index: usize,
    pub row: ComputeRow,
    pub phase: u32,
    pub source: Source,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RowOperandAllocation {
    pub entries: Vec<AllocationEntry>,
    pub phase_count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PhaseMode {
    /// A phase ends when the next node's demands do not fit.
    #[default]
    Prose,
    /// Pseudocode reset: only when the list an edge needs is exhausted or both lists are.
    StrictPseudocode,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AllocError {
    #[error("node {node} needs {t} T rows and {dcc} DCC rows, more than a fresh phase provides")]
    InfeasibleNode { node: NodeId, t: usize, dcc: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// MAJ nodes in traversal order: ascending level, then ascending id.
pub fn traversal_order(mig: &Mig) -> Vec<NodeId> {
    let mut ids: Vec<(u32, NodeId)> = mig
        .nodes()
        .iter()
        .filter(|n| mig.is_maj(n.id))
        .map(|n| (mig.level(n.id).unwrap(), n.id))
        .collect();
    ids.sort();
    ids.into_iter().map(|(_, id)| id).collect()
}

struct State {
    phase: u32,
    free: ComputeRowSet,
    /// rows holding each node's result that no consumer has claimed yet
    result_rows: HashMap<NodeId, (u32, Vec<ComputeRow>)>,
}

impl State {
    fn reset(&mut self) {
        self.phase += 1;
        self.free = ComputeRowSet::full();
    }

    /// Plan for one edge under the current phase: Some(row) for a parent
    /// result that can be claimed, None when a copy is required.
    fn parent_row(&self, mig: &Mig, l: Lit) -> Option<ComputeRow> {
        if l.neg || !mig.is_maj(l.node) {
            return None;
        }
        match self.result_rows.get(&l.node) {
            Some((p, rows)) if *p == self.phase => rows.first().copied(),
            _ => None,
        }
    }

    fn demands(&self, mig: &Mig, ins: &[Lit; 3]) -> (usize, usize) {
        let mut t = 0;
        let mut d = 0;
        let mut claimed: HashMap<NodeId, usize> = HashMap::new();
        for l in ins {
            let avail = if !l.neg && mig.is_maj(l.node) {
                match self.result_rows.get(&l.node) {
                    Some((p, rows)) if *p == self.phase => rows.len(),
                    _ => 0,
                }
            } else {
                0
            };
            let used = claimed.entry(l.node).or_default();
            if avail > *used {
                *used += 1;
            } else if l.neg {
                d += 1;
            } else {
                t += 1;
            }
        }
        (t, d)
    }
}

pub fn allocate_rows(mig: &Mig) -> Result<RowOperandAllocation, AllocError> {
    allocate_rows_with(mig, PhaseMode::Prose)
}

pub fn allocate_rows_with(mig: &Mig, mode: PhaseMode) -> Result<RowOperandAllocation, AllocError> {
    let order = traversal_order(mig);
    if order.is_empty() {
        return Ok(RowOperandAllocation::default());
    }
    let mut st = State { phase: 0, free: ComputeRowSet::full(), result_rows: HashMap::new() };
    let mut entries = Vec::new();
    for &id in &order {
        let ins = mig.maj_inputs(id).unwrap();
        let (t, d) = st.demands(mig, &ins);
        if mode == PhaseMode::Prose && (t > st.free.t_rows.len() || d > st.free.dcc_rows.len()) {
            st.reset();
            let (t, d) = st.demands(mig, &ins);
            if t > 4 || d > 2 {
                return Err(AllocError::InfeasibleNode { node: id, t, dcc: d });
            }
        } else if t > 4 || d > 2 {
            return Err(AllocError::InfeasibleNode { node: id, t, dcc: d });
        }
        let mut rows_of_node = Vec::new();
        for (k, l) in ins.iter().enumerate() {
            if let Some(r) = st.parent_row(mig, *l) {
                st.result_rows.get_mut(&l.node).unwrap().1.retain(|x| *x != r);
                entries.push(AllocationEntry {
                    maj_node: id,
                    edge_index: k,
                    row: r,
                    phase: st.phase,
                    source: Source::ParentResult,
                });
                rows_of_node.push(r);
                continue;
            }
            let row = match st.free.take(l.neg) {
                Some(r) => r,
                None => {
                    // only reachable in strict mode: the needed list is empty
                    st.reset();
                    st.free.take(l.neg).expect("fresh phase has rows")
                }
            };
            entries.push(AllocationEntry {
                maj_node: id,
                edge_index: k,
                row,
                phase: st.phase,
                source: Source::DGroupCopy,
            });
            rows_of_node.push(row);
        }
        // a TRA leaves the result in all three rows of the node
        st.result_rows.insert(id, (st.phase, rows_of_node));
        if mode == PhaseMode::StrictPseudocode && st.free.is_empty() {
            st.reset();
        }
    }
    let phase_count = entries.last().map(|e| e.phase + 1).unwrap_or(0);
    Ok(RowOperandAllocation { entries, phase_count })
}

impl RowOperandAllocation {
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!(
                "phase {} node {} edge {} row {} {}\n",
                e.phase,
                e.maj_node,
                e.edge_index,
                e.row,
                e.source.name()
            ));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, AllocError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let t = raw.trim();
            if t.is_empty() {
                continue;
            }
            let err = |msg: &str| AllocError::Parse { line: i + 1, msg: msg.to_string() };
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 9 || f[0] != "phase" || f[2] != "node" || f[4] != "edge" || f[6] != "row" {
                return Err(err("expected `phase <p> node <id> edge <k> row <name> <source>`"));
            }
            let source = match f[8] {
                "D_GROUP_COPY" => Source::DGroupCopy,
                "PARENT_RESULT" => Source::ParentResult,
                _ => return Err(err("unknown source")),
            };
            entries.push(AllocationEntry {
                phase: f[1].parse().map_err(|_| err("bad phase"))?,
                maj_node: f[3].parse().map_err(|_| err("bad node"))?,
                edge_index: f[5].parse().map_err(|_| err("bad edge"))?,
                row: f[7].parse().map_err(|e: String| err(&e))?,
                source,
            });
        }
        let phase_count = entries.last().map(|e| e.phase + 1).unwrap_or(0);
        Ok(RowOperandAllocation { entries, phase_count })
    }

    pub fn entries_for(&self, node: NodeId) -> Vec<&AllocationEntry> {
        self.entries.iter().filter(|e| e.maj_node == node).collect()
    }

    /// Invariant violations, empty when the allocation is well formed for `mig`.
    pub fn check(&self, mig: &Mig) -> Vec<String> {
        let mut errs = Vec::new();
        if self.entries.len() != 3 * mig.maj_count() {
            errs.push(format!("{} entries for {} MAJ nodes", self.entries.len(), mig.maj_count()));
        }
        let mut prev = 0;
        let mut per_phase: HashMap<u32, Vec<ComputeRow>> = HashMap::new();
        for e in &self.entries {
            if e.phase < prev {
                errs.push(format!("phase decreases at node {}", e.maj_node));
            }
            prev = e.phase;
            let Some(ins) = mig.maj_inputs(e.maj_node) else {
                errs.push(format!("node {} is not a MAJ node", e.maj_node));
                continue;
            };
            if e.source == Source::DGroupCopy {
                if ins[e.edge_index].neg != e.row.is_dcc() {
                    errs.push(format!("node {} edge {} polarity/row mismatch", e.maj_node, e.edge_index));
                }
                let v = per_phase.entry(e.phase).or_default();
                if v.contains(&e.row) {
                    errs.push(format!("row {} copied twice in phase {}", e.row, e.phase));
                }
                v.push(e.row);
            }
        }
        for (p, rows) in &per_phase {
            let t = rows.iter().filter(|r| !r.is_dcc()).count();
            let d = rows.len() - t;
            if t > 4 || d > 2 {
                errs.push(format!("phase {p} uses {t} T rows and {d} DCC rows"));
            }
        }
        errs
    }
}
