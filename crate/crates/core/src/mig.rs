// SPDX-License-Identifier: Apache-2.0

//! AND/OR/NOT and majority/NOT graphs, the seven MAJ rewrite rules, and the
//! node-reduction / reshaping passes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type NodeId = u32;

/// A reference to a node, optionally complemented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    pub node: NodeId,
    pub neg: bool,
}

impl Lit {
    pub fn new(node: NodeId, neg: bool) -> Self {
        Lit { node, neg }
    }
    pub fn pos(node: NodeId) -> Self {
        Lit { node, neg: false }
    }
    pub fn not(self) -> Self {
        Lit { node: self.node, neg: !self.neg }
    }
    /// Same literal with the node id offset by `by`.
    pub fn shifted(self, by: NodeId) -> Self {
        Lit { node: self.node + by, neg: self.neg }
    }
    pub fn with_neg(self, neg: bool) -> Self {
        Lit { node: self.node, neg: self.neg ^ neg }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("missing assignment for input `{0}`")]
    MissingInput(String),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node {0} references a node that is not defined before it")]
    NotTopological(NodeId),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("rule {rule} does not match at {site}")]
    NoMatch { rule: String, site: String },
    #[error("rewrite would create a cycle at node {0}")]
    Cycle(NodeId),
}

// ---------------------------------------------------------------------------
// AOIG

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AoigKind {
    Input(String),
    Const0,
    Const1,
    And([Lit; 2]),
    Or([Lit; 2]),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AoigNode {
    pub id: NodeId,
    pub kind: AoigKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Aoig {
    pub nodes: Vec<AoigNode>,
    pub outputs: Vec<Lit>,
}

impl Aoig {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, kind: AoigKind) -> Lit {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(AoigNode { id, kind });
        Lit::pos(id)
    }

    pub fn input(&mut self, name: &str) -> Lit {
        self.push(AoigKind::Input(name.to_string()))
    }

    pub fn constant(&mut self, v: bool) -> Lit {
        let want = if v { AoigKind::Const1 } else { AoigKind::Const0 };
        if let Some(n) = self.nodes.iter().find(|n| n.kind == want) {
            return Lit::pos(n.id);
        }
        self.push(want)
    }

    pub fn and(&mut self, a: Lit, b: Lit) -> Lit {
        self.push(AoigKind::And([a, b]))
    }

    pub fn or(&mut self, a: Lit, b: Lit) -> Lit {
        self.push(AoigKind::Or([a, b]))
    }

    /// Three-gate XOR: (a | b) & !(a & b).
    pub fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        let o = self.or(a, b);
        let n = self.and(a, b);
        self.and(o, n.not())
    }

    /// Three-gate mux: s ? a : b.
    pub fn mux(&mut self, s: Lit, a: Lit, b: Lit) -> Lit {
        let x = self.and(s, a);
        let y = self.and(s.not(), b);
        self.or(x, y)
    }

    pub fn output(&mut self, l: Lit) {
        self.outputs.push(l);
    }

    pub fn gate_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, AoigKind::And(_) | AoigKind::Or(_)))
            .count()
    }

    pub fn input_names(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                AoigKind::Input(s) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if let AoigKind::And(ins) | AoigKind::Or(ins) = &n.kind {
                for l in ins {
                    if !seen.contains(&l.node) {
                        return Err(GraphError::NotTopological(n.id));
                    }
                }
            }
            if !seen.insert(n.id) {
                return Err(GraphError::DuplicateNode(n.id));
            }
        }
        for o in &self.outputs {
            if !seen.contains(&o.node) {
                return Err(GraphError::UnknownNode(o.node));
            }
        }
        Ok(())
    }
}

pub fn eval_aoig(aoig: &Aoig, assignment: &HashMap<String, bool>) -> Result<Vec<bool>, GraphError> {
    let mut val: HashMap<NodeId, bool> = HashMap::new();
    let get = |val: &HashMap<NodeId, bool>, l: Lit| -> Result<bool, GraphError> {
        val.get(&l.node).map(|v| v ^ l.neg).ok_or(GraphError::UnknownNode(l.node))
    };
    for n in &aoig.nodes {
        let v = match &n.kind {
            AoigKind::Input(name) => *assignment
                .get(name)
                .ok_or_else(|| GraphError::MissingInput(name.clone()))?,
            AoigKind::Const0 => false,
            AoigKind::Const1 => true,
            AoigKind::And([a, b]) => get(&val, *a)? && get(&val, *b)?,
            AoigKind::Or([a, b]) => get(&val, *a)? || get(&val, *b)?,
        };
        val.insert(n.id, v);
    }
    aoig.outputs.iter().map(|o| get(&val, *o)).collect()
}

/// Bit-parallel truth tables of every AOIG output over all input assignments
/// (inputs in declaration order, input 0 is the fastest-toggling bit).
pub fn aoig_truth_tables(aoig: &Aoig) -> Vec<Vec<u64>> {
    let names = aoig.input_names();
    let pats = input_patterns(names.len());
    let words = pats.first().map(|p| p.len()).unwrap_or(1);
    let mut val: HashMap<NodeId, Vec<u64>> = HashMap::new();
    let mut next_input = 0;
    let get = |val: &HashMap<NodeId, Vec<u64>>, l: Lit| -> Vec<u64> {
        val[&l.node].iter().map(|w| if l.neg { !w } else { *w }).collect()
    };
    for n in &aoig.nodes {
        let v = match &n.kind {
            AoigKind::Input(_) => {
                next_input += 1;
                pats[next_input - 1].clone()
            }
            AoigKind::Const0 => vec![0; words],
            AoigKind::Const1 => vec![!0; words],
            AoigKind::And([a, b]) => {
                get(&val, *a).iter().zip(get(&val, *b)).map(|(x, y)| x & y).collect()
            }
            AoigKind::Or([a, b]) => {
                get(&val, *a).iter().zip(get(&val, *b)).map(|(x, y)| x | y).collect()
            }
        };
        val.insert(n.id, v);
    }
    aoig.outputs.iter().map(|o| mask_tt(get(&val, *o), names.len())).collect()
}

fn input_patterns(k: usize) -> Vec<Vec<u64>> {
    let total = 1usize << k;
    let words = total.div_ceil(64);
    (0..k)
        .map(|i| {
            let mut w = vec![0u64; words];
            for a in 0..total {
                if (a >> i) & 1 == 1 {
                    w[a / 64] |= 1 << (a % 64);
                }
            }
            w
        })
        .collect()
}

fn mask_tt(mut v: Vec<u64>, k: usize) -> Vec<u64> {
    let total = 1usize << k;
    if total < 64 {
        v[0] &= (1u64 << total) - 1;
    }
    v
}

// ---------------------------------------------------------------------------
// MIG

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MigKind {
    Input(String),
    Const0,
    Const1,
    Maj([Lit; 3]),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MigNode {
    pub id: NodeId,
    pub kind: MigKind,
}

/// Majority-inverter graph. Nodes are kept in topological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mig {
    nodes: Vec<MigNode>,
    outputs: Vec<Lit>,
    index: HashMap<NodeId, usize>,
    levels: Vec<u32>,
}

impl Mig {
    pub fn new(nodes: Vec<MigNode>, outputs: Vec<Lit>) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        let mut levels = Vec::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            let lvl = match &n.kind {
                MigKind::Maj(ins) => {
                    let mut m = 0;
                    for l in ins {
                        let j = *index.get(&l.node).ok_or(GraphError::NotTopological(n.id))?;
                        m = m.max(levels[j] + 1);
                    }
                    m
                }
                _ => 0,
            };
            if index.insert(n.id, i).is_some() {
                return Err(GraphError::DuplicateNode(n.id));
            }
            levels.push(lvl);
        }
        for o in &outputs {
            if !index.contains_key(&o.node) {
                return Err(GraphError::UnknownNode(o.node));
            }
        }
        Ok(Mig { nodes, outputs, index, levels })
    }

    pub fn empty() -> Self {
        Mig::new(vec![], vec![]).unwrap()
    }

    pub fn nodes(&self) -> &[MigNode] {
        &self.nodes
    }
    pub fn outputs(&self) -> &[Lit] {
        &self.outputs
    }
    pub fn node(&self, id: NodeId) -> Option<&MigNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }
    pub fn level(&self, id: NodeId) -> Option<u32> {
        self.index.get(&id).map(|&i| self.levels[i])
    }
    pub fn maj_inputs(&self, id: NodeId) -> Option<[Lit; 3]> {
        match self.node(id)?.kind {
            MigKind::Maj(ins) => Some(ins),
            _ => None,
        }
    }
    pub fn is_maj(&self, id: NodeId) -> bool {
        self.maj_inputs(id).is_some()
    }
    pub fn maj_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, MigKind::Maj(_))).count()
    }
    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    pub fn input_names(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                MigKind::Input(s) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn input_lit(&self, name: &str) -> Option<Lit> {
        self.nodes.iter().find_map(|n| match &n.kind {
            MigKind::Input(s) if s == name => Some(Lit::pos(n.id)),
            _ => None,
        })
    }

    /// Constant nodes are compared through CONST0: CONST1 == !CONST0.
    fn canon(&self, l: Lit) -> CLit {
        match self.node(l.node).map(|n| &n.kind) {
            Some(MigKind::Const0) => CLit::Const(l.neg),
            Some(MigKind::Const1) => CLit::Const(!l.neg),
            _ => CLit::Node(l.node, l.neg),
        }
    }

    pub fn lits_equal(&self, a: Lit, b: Lit) -> bool {
        self.canon(a) == self.canon(b)
    }

    pub fn lits_complement(&self, a: Lit, b: Lit) -> bool {
        self.canon(a) == self.canon(b.not())
    }

    /// Value of a literal if it is a constant.
    pub fn const_value(&self, l: Lit) -> Option<bool> {
        match self.canon(l) {
            CLit::Const(v) => Some(v),
            _ => None,
        }
    }

    /// Fanout references: (consumer MAJ node, operand position) per node.
    pub fn fanouts(&self) -> HashMap<NodeId, Vec<(NodeId, usize)>> {
        let mut f: HashMap<NodeId, Vec<(NodeId, usize)>> = HashMap::new();
        for n in &self.nodes {
            if let MigKind::Maj(ins) = &n.kind {
                for (p, l) in ins.iter().enumerate() {
                    f.entry(l.node).or_default().push((n.id, p));
                }
            }
        }
        f
    }

    fn fanout_counts(&self) -> HashMap<NodeId, usize> {
        let mut f: HashMap<NodeId, usize> = HashMap::new();
        for n in &self.nodes {
            if let MigKind::Maj(ins) = &n.kind {
                for l in ins {
                    *f.entry(l.node).or_default() += 1;
                }
            }
        }
        for o in &self.outputs {
            *f.entry(o.node).or_default() += 1;
        }
        f
    }

    /// Transitive fan-in of `id` (including itself).
    pub fn cone(&self, id: NodeId) -> HashSet<NodeId> {
        let mut seen = HashSet::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                if let Some(ins) = self.maj_inputs(x) {
                    stack.extend(ins.iter().map(|l| l.node));
                }
            }
        }
        seen
    }

    /// Evaluate all outputs for one assignment.
    pub fn eval(&self, assignment: &HashMap<String, bool>) -> Result<Vec<bool>, GraphError> {
        let mut val = vec![false; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            val[i] = match &n.kind {
                MigKind::Input(name) => *assignment
                    .get(name)
                    .ok_or_else(|| GraphError::MissingInput(name.clone()))?,
                MigKind::Const0 => false,
                MigKind::Const1 => true,
                MigKind::Maj(ins) => {
                    let c = ins.iter().filter(|l| val[self.index[&l.node]] ^ l.neg).count();
                    c >= 2
                }
            };
        }
        Ok(self.outputs.iter().map(|o| val[self.index[&o.node]] ^ o.neg).collect())
    }

    /// Bit-parallel truth tables over all assignments of the inputs (in
    /// declaration order). Intended for graphs with few inputs.
    pub fn truth_tables(&self) -> Vec<Vec<u64>> {
        let k = self.input_names().len();
        let pats = input_patterns(k);
        let words = (1usize << k).div_ceil(64);
        let mut val: Vec<Vec<u64>> = Vec::with_capacity(self.nodes.len());
        let mut next_input = 0;
        for n in &self.nodes {
            let v = match &n.kind {
                MigKind::Input(_) => {
                    next_input += 1;
                    pats[next_input - 1].clone()
                }
                MigKind::Const0 => vec![0; words],
                MigKind::Const1 => vec![!0; words],
                MigKind::Maj(ins) => {
                    let g = |l: &Lit, w: usize| {
                        let x = val[self.index[&l.node]][w];
                        if l.neg {
                            !x
                        } else {
                            x
                        }
                    };
                    (0..words)
                        .map(|w| {
                            let (a, b, c) = (g(&ins[0], w), g(&ins[1], w), g(&ins[2], w));
                            (a & b) | (a & c) | (b & c)
                        })
                        .collect()
                }
            };
            val.push(v);
        }
        self.outputs
            .iter()
            .map(|o| {
                let v = val[self.index[&o.node]].iter().map(|w| if o.neg { !w } else { *w }).collect();
                mask_tt(v, k)
            })
            .collect()
    }

    pub fn equivalent(&self, other: &Mig) -> bool {
        self.input_names() == other.input_names() && self.truth_tables() == other.truth_tables()
    }

    // -- text format --------------------------------------------------------

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            match &n.kind {
                MigKind::Input(name) => s.push_str(&format!("node {} INPUT {}\n", n.id, name)),
                MigKind::Const0 => s.push_str(&format!("node {} CONST0\n", n.id)),
                MigKind::Const1 => s.push_str(&format!("node {} CONST1\n", n.id)),
                MigKind::Maj(ins) => s.push_str(&format!(
                    "node {} MAJ {} {} {}\n",
                    n.id,
                    fmt_lit(ins[0]),
                    fmt_lit(ins[1]),
                    fmt_lit(ins[2])
                )),
            }
        }
        for o in &self.outputs {
            s.push_str(&format!("output {}\n", fmt_lit(*o)));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut nodes = Vec::new();
        let mut outputs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: &str| GraphError::Parse { line, msg: msg.to_string() };
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            match toks[0] {
                "node" => {
                    if toks.len() < 3 {
                        return Err(err("truncated node line"));
                    }
                    let id: NodeId = toks[1].parse().map_err(|_| err("bad node id"))?;
                    let kind = match (toks[2], toks.len()) {
                        ("INPUT", 4) => MigKind::Input(toks[3].to_string()),
                        ("CONST0", 3) => MigKind::Const0,
                        ("CONST1", 3) => MigKind::Const1,
                        ("MAJ", 6) => MigKind::Maj([
                            parse_lit(toks[3]).ok_or_else(|| err("bad literal"))?,
                            parse_lit(toks[4]).ok_or_else(|| err("bad literal"))?,
                            parse_lit(toks[5]).ok_or_else(|| err("bad literal"))?,
                        ]),
                        _ => return Err(err("unknown node kind or wrong arity")),
                    };
                    nodes.push(MigNode { id, kind });
                }
                "output" if toks.len() == 2 => {
                    outputs.push(parse_lit(toks[1]).ok_or_else(|| err("bad literal"))?)
                }
                _ => return Err(err("expected `node` or `output`")),
            }
        }
        Mig::new(nodes, outputs)
    }
}

impl fmt::Display for Mig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn fmt_lit(l: Lit) -> String {
    if l.neg {
        format!("{}!", l.node)
    } else {
        l.node.to_string()
    }
}

fn parse_lit(s: &str) -> Option<Lit> {
    let (body, neg) = match s.strip_suffix('!') {
        Some(b) => (b, true),
        None => (s, false),
    };
    body.parse().ok().map(|n| Lit::new(n, neg))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum CLit {
    Const(bool),
    Node(NodeId, bool),
}

pub fn eval_mig(mig: &Mig, assignment: &HashMap<String, bool>) -> Result<Vec<bool>, GraphError> {
    mig.eval(assignment)
}

/// AND -> M(a,b,0), OR -> M(a,b,1). Node ids are kept.
pub fn naive_mig_from_aoig(aoig: &Aoig) -> Result<Mig, GraphError> {
    aoig.validate()?;
    let mut nodes = Vec::new();
    let mut c0 = aoig.nodes.iter().find(|n| n.kind == AoigKind::Const0).map(|n| n.id);
    let mut c1 = aoig.nodes.iter().find(|n| n.kind == AoigKind::Const1).map(|n| n.id);
    let needs0 = aoig.nodes.iter().any(|n| matches!(n.kind, AoigKind::And(_)));
    let needs1 = aoig.nodes.iter().any(|n| matches!(n.kind, AoigKind::Or(_)));
    let mut next = aoig.nodes.iter().map(|n| n.id + 1).max().unwrap_or(0);
    // fresh constants go right after the inputs
    let ninputs = aoig.nodes.iter().take_while(|n| matches!(n.kind, AoigKind::Input(_))).count();
    let mut fresh = Vec::new();
    if needs0 && c0.is_none() {
        c0 = Some(next);
        fresh.push(MigNode { id: next, kind: MigKind::Const0 });
        next += 1;
    }
    if needs1 && c1.is_none() {
        c1 = Some(next);
        fresh.push(MigNode { id: next, kind: MigKind::Const1 });
    }
    for (i, n) in aoig.nodes.iter().enumerate() {
        if i == ninputs {
            nodes.append(&mut fresh);
        }
        let kind = match &n.kind {
            AoigKind::Input(s) => MigKind::Input(s.clone()),
            AoigKind::Const0 => MigKind::Const0,
            AoigKind::Const1 => MigKind::Const1,
            AoigKind::And([a, b]) => MigKind::Maj([*a, *b, Lit::pos(c0.unwrap())]),
            AoigKind::Or([a, b]) => MigKind::Maj([*a, *b, Lit::pos(c1.unwrap())]),
        };
        nodes.push(MigNode { id: n.id, kind });
    }
    nodes.append(&mut fresh);
    Mig::new(nodes, aoig.outputs.clone())
}

// ---------------------------------------------------------------------------
// rebuilding

/// Mutable scratch form used by rewrites. Nodes may be appended out of
/// topological order; `finish` restores order, resolves replacements,
/// merges structurally identical nodes and sweeps dead MAJ nodes.
struct Editor {
    kinds: BTreeMap<NodeId, MigKind>,
    inputs_order: Vec<NodeId>,
    outputs: Vec<Lit>,
    repl: HashMap<NodeId, Lit>,
    next: NodeId,
}

impl Editor {
    fn from(m: &Mig) -> Self {
        Editor {
            kinds: m.nodes.iter().map(|n| (n.id, n.kind.clone())).collect(),
            inputs_order: m
                .nodes
                .iter()
                .filter(|n| !matches!(n.kind, MigKind::Maj(_)))
                .map(|n| n.id)
                .collect(),
            outputs: m.outputs.clone(),
            repl: HashMap::new(),
            next: m.nodes.iter().map(|n| n.id + 1).max().unwrap_or(0),
        }
    }

    fn maj(&mut self, a: Lit, b: Lit, c: Lit) -> Lit {
        let id = self.next;
        self.next += 1;
        self.kinds.insert(id, MigKind::Maj([a, b, c]));
        Lit::pos(id)
    }

    fn replace(&mut self, node: NodeId, l: Lit) {
        self.repl.insert(node, l);
    }

    fn resolve(&self, mut l: Lit) -> Lit {
        let mut guard = 0;
        while let Some(r) = self.repl.get(&l.node) {
            l = r.with_neg(l.neg);
            guard += 1;
            assert!(guard < 1_000_000, "replacement cycle");
        }
        l
    }

    fn finish(self) -> Result<Mig, GraphError> {
        // topological order by DFS from outputs, then constant normalisation and strash
        let mut order: Vec<NodeId> = Vec::new();
        let mut state: HashMap<NodeId, u8> = HashMap::new();
        let roots: Vec<Lit> = self.outputs.iter().map(|o| self.resolve(*o)).collect();
        for r in &roots {
            let mut stack: Vec<(NodeId, bool)> = vec![(r.node, false)];
            while let Some((x, done)) = stack.pop() {
                if done {
                    state.insert(x, 2);
                    order.push(x);
                    continue;
                }
                match state.get(&x) {
                    Some(2) => continue,
                    Some(1) => return Err(GraphError::Cycle(x)),
                    _ => {}
                }
                state.insert(x, 1);
                stack.push((x, true));
                if let Some(MigKind::Maj(ins)) = self.kinds.get(&x) {
                    for l in ins.iter().rev() {
                        let t = self.resolve(*l).node;
                        match state.get(&t) {
                            Some(2) => {}
                            Some(1) => return Err(GraphError::Cycle(t)),
                            _ => stack.push((t, false)),
                        }
                    }
                }
            }
        }
        let c0 = self.kinds.iter().find(|(_, k)| **k == MigKind::Const0).map(|(i, _)| *i);
        let c1 = self.kinds.iter().find(|(_, k)| **k == MigKind::Const1).map(|(i, _)| *i);
        let mut map: HashMap<NodeId, Lit> = HashMap::new();
        let mut strash: HashMap<[Lit; 3], NodeId> = HashMap::new();
        let mut maj_nodes: Vec<MigNode> = Vec::new();
        let mut used_consts: HashSet<NodeId> = HashSet::new();
        let norm = |l: Lit, used: &mut HashSet<NodeId>| -> Lit {
            match (self.kinds.get(&l.node), l.neg) {
                (Some(MigKind::Const0), true) if c1.is_some() => {
                    used.insert(c1.unwrap());
                    Lit::pos(c1.unwrap())
                }
                (Some(MigKind::Const1), true) if c0.is_some() => {
                    used.insert(c0.unwrap());
                    Lit::pos(c0.unwrap())
                }
                (Some(MigKind::Const0 | MigKind::Const1), _) => {
                    used.insert(l.node);
                    l
                }
                _ => l,
            }
        };
        for id in order {
            match &self.kinds[&id] {
                MigKind::Maj(ins) => {
                    let mut ni = [Lit::pos(0); 3];
                    for (k, l) in ins.iter().enumerate() {
                        let r = self.resolve(*l);
                        let base = map.get(&r.node).copied().unwrap_or(Lit::pos(r.node));
                        ni[k] = norm(base.with_neg(r.neg), &mut used_consts);
                    }
                    let mut key = ni;
                    key.sort();
                    if let Some(&e) = strash.get(&key) {
                        map.insert(id, Lit::pos(e));
                    } else {
                        strash.insert(key, id);
                        maj_nodes.push(MigNode { id, kind: MigKind::Maj(ni) });
                    }
                }
                _ => {}
            }
        }
        let mut outputs = Vec::new();
        for o in &self.outputs {
            let r = self.resolve(*o);
            let base = map.get(&r.node).copied().unwrap_or(Lit::pos(r.node));
            outputs.push(norm(base.with_neg(r.neg), &mut used_consts));
        }
        // strash may leave nodes only reachable via merged duplicates: sweep
        let mut live: HashSet<NodeId> = HashSet::new();
        let byid: HashMap<NodeId, [Lit; 3]> = maj_nodes
            .iter()
            .map(|n| match n.kind {
                MigKind::Maj(i) => (n.id, i),
                _ => unreachable!(),
            })
            .collect();
        let mut stack: Vec<NodeId> = outputs.iter().map(|o| o.node).collect();
        while let Some(x) = stack.pop() {
            if live.insert(x) {
                if let Some(ins) = byid.get(&x) {
                    stack.extend(ins.iter().map(|l| l.node));
                }
            }
        }
        let mut nodes = Vec::new();
        for &id in &self.inputs_order {
            match &self.kinds[&id] {
                MigKind::Input(_) => nodes.push(MigNode { id, kind: self.kinds[&id].clone() }),
                MigKind::Const0 | MigKind::Const1 if live.contains(&id) => {
                    nodes.push(MigNode { id, kind: self.kinds[&id].clone() })
                }
                _ => {}
            }
        }
        let _ = used_consts;
        nodes.extend(maj_nodes.into_iter().filter(|n| live.contains(&n.id)));
        Mig::new(nodes, outputs)
    }
}

/// Rebuild with constant normalisation, structural hashing and sweeping.
pub fn cleanup(m: &Mig) -> Mig {
    Editor::from(m).finish().expect("cleanup of a valid graph")
}

// ---------------------------------------------------------------------------
// rules

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleTag {
    C,
    M,
    A,
    D,
    I,
    R,
    CA,
}

impl RuleTag {
    pub const ALL: [RuleTag; 7] =
        [RuleTag::C, RuleTag::M, RuleTag::A, RuleTag::D, RuleTag::I, RuleTag::R, RuleTag::CA];
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleTag::C => "C",
            RuleTag::M => "M",
            RuleTag::A => "A",
            RuleTag::D => "D",
            RuleTag::I => "I",
            RuleTag::R => "R",
            RuleTag::CA => "CA",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RewriteRule {
    pub tag: RuleTag,
    pub dir: Direction,
}

/// Where an M(R→L) inflation is inserted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Edge { node: NodeId, pos: usize },
    Output(usize),
}

/// A rule instance bound to a concrete site. Positions index operands of the
/// MAJ node named by `node`; `child` positions index operands of the MAJ node
/// feeding operand `c` of `node`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Application {
    /// M(x,y,z) = M(y,x,z): swap operands i and j.
    Commute { node: NodeId, i: usize, j: usize },
    /// M(x,x,z) = x, M(x,!x,z) = z, with x at i and y at j.
    MajorityReduce { node: NodeId, i: usize, j: usize },
    /// w = M(w, y, !y).
    MajorityInflate { target: Target, y: Lit },
    /// M(x,u,M(y,u,z)) = M(z,u,M(y,u,x)).
    Associate { node: NodeId, x: usize, u: usize, c: usize, cy: usize, cu: usize, cz: usize },
    /// M(x,y,M(u,v,z)) = M(M(x,y,u),M(x,y,v),z).
    Distribute { node: NodeId, x: usize, y: usize, c: usize, cu: usize, cv: usize, cz: usize },
    /// M(M(x,y,u),M(x,y,v),z) = M(x,y,M(u,v,z)) with the two children at c1, c2.
    Factor { node: NodeId, c1: usize, c2: usize },
    /// !M(x,y,z) = M(!x,!y,!z): the node is replaced by the complement of a
    /// node with complemented operands.
    Invert { node: NodeId },
    /// M(x,y,z) = M(x,y,z[x/!y]).
    Relevance { node: NodeId, x: usize, y: usize, z: usize },
    /// M(x,u,M(y,!u,z)) = M(x,u,M(y,x,z)) and its reverse.
    CompAssociate { node: NodeId, x: usize, u: usize, c: usize, cp: usize, dir: Direction },
}

impl Application {
    pub fn rule(&self) -> RewriteRule {
        use Direction::*;
        let (tag, dir) = match self {
            Application::Commute { .. } => (RuleTag::C, LeftToRight),
            Application::MajorityReduce { .. } => (RuleTag::M, LeftToRight),
            Application::MajorityInflate { .. } => (RuleTag::M, RightToLeft),
            Application::Associate { .. } => (RuleTag::A, LeftToRight),
            Application::Distribute { .. } => (RuleTag::D, LeftToRight),
            Application::Factor { .. } => (RuleTag::D, RightToLeft),
            Application::Invert { .. } => (RuleTag::I, LeftToRight),
            Application::Relevance { .. } => (RuleTag::R, LeftToRight),
            Application::CompAssociate { dir, .. } => (RuleTag::CA, *dir),
        };
        RewriteRule { tag, dir }
    }

    fn anchor(&self) -> NodeId {
        match self {
            Application::Commute { node, .. }
            | Application::MajorityReduce { node, .. }
            | Application::Associate { node, .. }
            | Application::Distribute { node, .. }
            | Application::Factor { node, .. }
            | Application::Invert { node }
            | Application::Relevance { node, .. }
            | Application::CompAssociate { node, .. } => *node,
            Application::MajorityInflate { target: Target::Edge { node, .. }, .. } => *node,
            Application::MajorityInflate { target: Target::Output(_), .. } => NodeId::MAX,
        }
    }
}

fn distinct3(a: usize, b: usize, c: usize) -> bool {
    a < 3 && b < 3 && c < 3 && a != b && b != c && a != c
}

fn no_match(app: &Application) -> GraphError {
    GraphError::NoMatch { rule: format!("{}", app.rule().tag), site: format!("{:?}", app) }
}

/// Substitute every occurrence of `x` (by node, polarity-aware) inside the
/// cone of `root` with `by`, creating fresh copies of affected nodes.
fn substitute(m: &Mig, ed: &mut Editor, root: Lit, x: Lit, by: Lit) -> Lit {
    let cone = m.cone(root.node);
    let mut memo: HashMap<NodeId, Lit> = HashMap::new();
    for n in &m.nodes {
        if !cone.contains(&n.id) {
            continue;
        }
        let nl = if m.lits_equal(Lit::pos(n.id), x) {
            by
        } else if m.lits_equal(Lit::pos(n.id), x.not()) {
            by.not()
        } else if let MigKind::Maj(ins) = n.kind {
            let mapped: Vec<Lit> = ins
                .iter()
                .map(|l| memo.get(&l.node).map(|r| r.with_neg(l.neg)).unwrap_or(*l))
                .collect();
            if mapped.as_slice() == ins.as_slice() {
                Lit::pos(n.id)
            } else {
                ed.maj(mapped[0], mapped[1], mapped[2])
            }
        } else {
            Lit::pos(n.id)
        };
        memo.insert(n.id, nl);
    }
    memo[&root.node].with_neg(root.neg)
}

pub fn apply_rule(m: &Mig, app: &Application) -> Result<Mig, GraphError> {
    let mut ed = Editor::from(m);
    let ins_of = |id: NodeId| m.maj_inputs(id).ok_or_else(|| no_match(app));
    // child operand must be a non-complemented MAJ edge
    let child_of = |l: Lit| -> Result<[Lit; 3], GraphError> {
        if l.neg {
            return Err(no_match(app));
        }
        m.maj_inputs(l.node).ok_or_else(|| no_match(app))
    };
    match *app {
        Application::Commute { node, i, j } => {
            let mut ins = ins_of(node)?;
            if i >= 3 || j >= 3 || i == j {
                return Err(no_match(app));
            }
            ins.swap(i, j);
            let nl = ed.maj(ins[0], ins[1], ins[2]);
            ed.replace(node, nl);
        }
        Application::MajorityReduce { node, i, j } => {
            let ins = ins_of(node)?;
            if i >= 3 || j >= 3 || i == j {
                return Err(no_match(app));
            }
            let k = 3 - i - j;
            if m.lits_equal(ins[i], ins[j]) {
                ed.replace(node, ins[i]);
            } else if m.lits_complement(ins[i], ins[j]) {
                ed.replace(node, ins[k]);
            } else {
                return Err(no_match(app));
            }
        }
        Application::MajorityInflate { target, y } => {
            if m.node(y.node).is_none() {
                return Err(no_match(app));
            }
            match target {
                Target::Edge { node, pos } => {
                    let ins = ins_of(node)?;
                    if pos >= 3 || m.cone(y.node).contains(&node) {
                        return Err(no_match(app));
                    }
                    let w = ed.maj(ins[pos], y, y.not());
                    let mut ni = ins;
                    ni[pos] = w;
                    let nl = ed.maj(ni[0], ni[1], ni[2]);
                    ed.replace(node, nl);
                }
                Target::Output(k) => {
                    let w = *m.outputs.get(k).ok_or_else(|| no_match(app))?;
                    let nl = ed.maj(w, y, y.not());
                    ed.outputs[k] = nl;
                }
            }
        }
        Application::Associate { node, x, u, c, cy, cu, cz } => {
            let ins = ins_of(node)?;
            if !distinct3(x, u, c) || !distinct3(cy, cu, cz) {
                return Err(no_match(app));
            }
            let ch = child_of(ins[c])?;
            if !m.lits_equal(ch[cu], ins[u]) {
                return Err(no_match(app));
            }
            let inner = ed.maj(ch[cy], ins[u], ins[x]);
            let mut ni = ins;
            ni[x] = ch[cz];
            ni[c] = inner;
            let nl = ed.maj(ni[0], ni[1], ni[2]);
            ed.replace(node, nl);
        }
        Application::Distribute { node, x, y, c, cu, cv, cz } => {
            let ins = ins_of(node)?;
            if !distinct3(x, y, c) || !distinct3(cu, cv, cz) {
                return Err(no_match(app));
            }
            let ch = child_of(ins[c])?;
            let a = ed.maj(ins[x], ins[y], ch[cu]);
            let b = ed.maj(ins[x], ins[y], ch[cv]);
            let nl = ed.maj(a, b, ch[cz]);
            ed.replace(node, nl);
        }
        Application::Factor { node, c1, c2 } => {
            let ins = ins_of(node)?;
            if c1 >= 3 || c2 >= 3 || c1 == c2 {
                return Err(no_match(app));
            }
            let z = ins[3 - c1 - c2];
            let a = child_of(ins[c1])?;
            let b = child_of(ins[c2])?;
            let (sa, sb) = shared_pair(m, &a, &b).ok_or_else(|| no_match(app))?;
            let u = a[3 - sa.0 - sa.1];
            let v = b[3 - sb.0 - sb.1];
            let inner = ed.maj(u, v, z);
            let nl = ed.maj(a[sa.0], a[sa.1], inner);
            ed.replace(node, nl);
        }
        Application::Invert { node } => {
            let ins = ins_of(node)?;
            let nl = ed.maj(ins[0].not(), ins[1].not(), ins[2].not());
            ed.replace(node, nl.not());
        }
        Application::Relevance { node, x, y, z } => {
            let ins = ins_of(node)?;
            if !distinct3(x, y, z) {
                return Err(no_match(app));
            }
            let nz = substitute(m, &mut ed, ins[z], ins[x], ins[y].not());
            let mut ni = ins;
            ni[z] = nz;
            let nl = ed.maj(ni[0], ni[1], ni[2]);
            ed.replace(node, nl);
        }
        Application::CompAssociate { node, x, u, c, cp, dir } => {
            let ins = ins_of(node)?;
            if !distinct3(x, u, c) || cp >= 3 {
                return Err(no_match(app));
            }
            let ch = child_of(ins[c])?;
            let (want, put) = match dir {
                Direction::LeftToRight => (ins[u].not(), ins[x]),
                Direction::RightToLeft => (ins[x], ins[u].not()),
            };
            if !m.lits_equal(ch[cp], want) {
                return Err(no_match(app));
            }
            let mut nc = ch;
            nc[cp] = put;
            let inner = ed.maj(nc[0], nc[1], nc[2]);
            let mut ni = ins;
            ni[c] = inner;
            let nl = ed.maj(ni[0], ni[1], ni[2]);
            ed.replace(node, nl);
        }
    }
    ed.finish()
}

/// Positions of the first two literals shared by both operand lists.
fn shared_pair(m: &Mig, a: &[Lit; 3], b: &[Lit; 3]) -> Option<((usize, usize), (usize, usize))> {
    for i in 0..3 {
        for j in i + 1..3 {
            for p in 0..3 {
                for q in 0..3 {
                    if p != q && m.lits_equal(a[i], b[p]) && m.lits_equal(a[j], b[q]) {
                        return Some(((i, j), (p, q)));
                    }
                }
            }
        }
    }
    None
}

const PERMS: [(usize, usize, usize); 6] =
    [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)];

/// Every structurally valid site of `rule` in `m`, in ascending node-id order.
/// Inflation sites draw the new variable from the primary inputs.
pub fn enumerate_sites(m: &Mig, rule: RewriteRule) -> Vec<Application> {
    use Direction::*;
    let mut out = Vec::new();
    let inputs: Vec<Lit> = m
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, MigKind::Input(_)))
        .map(|n| Lit::pos(n.id))
        .collect();
    let mut ids: Vec<NodeId> = m.nodes.iter().filter(|n| matches!(n.kind, MigKind::Maj(_))).map(|n| n.id).collect();
    ids.sort();
    for &id in &ids {
        let ins = m.maj_inputs(id).unwrap();
        match (rule.tag, rule.dir) {
            (RuleTag::C, _) => {
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    out.push(Application::Commute { node: id, i, j });
                }
            }
            (RuleTag::M, LeftToRight) => {
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    if m.lits_equal(ins[i], ins[j]) || m.lits_complement(ins[i], ins[j]) {
                        out.push(Application::MajorityReduce { node: id, i, j });
                    }
                }
            }
            (RuleTag::M, RightToLeft) => {
                for pos in 0..3 {
                    for &y in &inputs {
                        if !m.cone(y.node).contains(&id) {
                            out.push(Application::MajorityInflate { target: Target::Edge { node: id, pos }, y });
                        }
                    }
                }
            }
            (RuleTag::A, _) => {
                for &(x, u, c) in &PERMS {
                    if let Some(ch) = child(m, ins[c]) {
                        for &(cy, cu, cz) in &PERMS {
                            if m.lits_equal(ch[cu], ins[u]) {
                                out.push(Application::Associate { node: id, x, u, c, cy, cu, cz });
                            }
                        }
                    }
                }
            }
            (RuleTag::D, LeftToRight) => {
                for &(x, y, c) in &PERMS {
                    if x > y {
                        continue;
                    }
                    if let Some(_ch) = child(m, ins[c]) {
                        for &(cu, cv, cz) in &PERMS {
                            if cu < cv {
                                out.push(Application::Distribute { node: id, x, y, c, cu, cv, cz });
                            }
                        }
                    }
                }
            }
            (RuleTag::D, RightToLeft) => {
                for (c1, c2) in [(0, 1), (0, 2), (1, 2)] {
                    if let (Some(a), Some(b)) = (child(m, ins[c1]), child(m, ins[c2])) {
                        if shared_pair(m, &a, &b).is_some() {
                            out.push(Application::Factor { node: id, c1, c2 });
                        }
                    }
                }
            }
            (RuleTag::I, _) => out.push(Application::Invert { node: id }),
            (RuleTag::R, _) => {
                for &(x, y, z) in &PERMS {
                    out.push(Application::Relevance { node: id, x, y, z });
                }
            }
            (RuleTag::CA, dir) => {
                for &(x, u, c) in &PERMS {
                    if let Some(ch) = child(m, ins[c]) {
                        for cp in 0..3 {
                            let want = if dir == LeftToRight { ins[u].not() } else { ins[x] };
                            if m.lits_equal(ch[cp], want) {
                                out.push(Application::CompAssociate { node: id, x, u, c, cp, dir });
                            }
                        }
                    }
                }
            }
        }
    }
    if rule.tag == RuleTag::M && rule.dir == RightToLeft {
        for k in 0..m.outputs.len() {
            for &y in &inputs {
                out.push(Application::MajorityInflate { target: Target::Output(k), y });
            }
        }
    }
    out
}

fn child(m: &Mig, l: Lit) -> Option<[Lit; 3]> {
    if l.neg {
        None
    } else {
        m.maj_inputs(l.node)
    }
}

// ---------------------------------------------------------------------------
// passes

/// One reducing application if any: M(L→R) first, then D(R→L) where both
/// children are used only by this node.
fn find_reduction(m: &Mig) -> Option<Application> {
    let fo = m.fanout_counts();
    for n in &m.nodes {
        if let MigKind::Maj(ins) = n.kind {
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                if m.lits_equal(ins[i], ins[j]) || m.lits_complement(ins[i], ins[j]) {
                    return Some(Application::MajorityReduce { node: n.id, i, j });
                }
            }
        }
    }
    for n in &m.nodes {
        if let MigKind::Maj(ins) = n.kind {
            for (c1, c2) in [(0, 1), (0, 2), (1, 2)] {
                if ins[c1].node == ins[c2].node {
                    continue;
                }
                if let (Some(a), Some(b)) = (child(m, ins[c1]), child(m, ins[c2])) {
                    if fo.get(&ins[c1].node) == Some(&1)
                        && fo.get(&ins[c2].node) == Some(&1)
                        && shared_pair(m, &a, &b).is_some()
                    {
                        return Some(Application::Factor { node: n.id, c1, c2 });
                    }
                }
            }
        }
    }
    None
}

/// Apply M(L→R) and D(R→L) until neither matches; returns the applied steps.
pub fn node_reduction_traced(m: &Mig) -> (Mig, Vec<Application>) {
    let mut cur = cleanup(m);
    let mut trace = Vec::new();
    while let Some(app) = find_reduction(&cur) {
        let next = apply_rule(&cur, &app).expect("reduction site matched");
        if next.maj_count() > cur.maj_count() {
            break;
        }
        trace.push(app);
        cur = next;
    }
    (cur, trace)
}

pub fn node_reduction(m: &Mig) -> Mig {
    node_reduction_traced(m).0
}

/// Apply I at every node with two or more complemented operands, constants included.
pub fn normalize_inverters_traced(m: &Mig) -> (Mig, Vec<Application>) {
    let mut cur = m.clone();
    let mut trace = Vec::new();
    loop {
        let site = cur.nodes.iter().find_map(|n| match n.kind {
            MigKind::Maj(ins) if ins.iter().filter(|l| l.neg).count() >= 2 => Some(n.id),
            _ => None,
        });
        match site {
            Some(id) => {
                let app = Application::Invert { node: id };
                cur = apply_rule(&cur, &app).expect("invert always matches");
                trace.push(app);
            }
            None => return (cur, trace),
        }
    }
}

pub fn normalize_inverters(m: &Mig) -> Mig {
    normalize_inverters_traced(m).0
}

/// The relevance expansion used in the full-adder derivation, applied to
/// output `k` with variables x, y:
/// F = M(F,x,!x) -> M(F, M(x,y,!y), !x) -> M(M(F,!x,y), M(F,!x,!y), x)
/// and then R on both new children.
pub fn relevance_expand(m: &Mig, k: usize, x: Lit, y: Lit) -> Result<(Mig, Vec<Application>), GraphError> {
    let mut trace = Vec::new();
    let step = |g: &Mig, app: Application, trace: &mut Vec<Application>| -> Result<Mig, GraphError> {
        let r = apply_rule(g, &app)?;
        trace.push(app);
        Ok(r)
    };
    let f = *m.outputs.get(k).ok_or_else(|| GraphError::NoMatch { rule: "M".into(), site: format!("output {k}") })?;
    if !m.is_maj(f.node) {
        return Err(GraphError::NoMatch { rule: "M".into(), site: format!("output {k} is not a MAJ node") });
    }
    // operand order of the inserted node is (F, x, !x)
    let g1 = step(m, Application::MajorityInflate { target: Target::Output(k), y: x }, &mut trace)?;
    let top = g1.outputs[k].node;
    let g1 = reorder_top(&g1, top, f, x)?;
    let top = g1.outputs[k].node;
    let g2 = step(&g1, Application::MajorityInflate { target: Target::Edge { node: top, pos: 1 }, y }, &mut trace)?;
    let top = g2.outputs[k].node;
    // inner is M(x, y, !y): u = y, v = !y, z = x
    let g3 = step(&g2, Application::Distribute { node: top, x: 0, y: 2, c: 1, cu: 1, cv: 2, cz: 0 }, &mut trace)?;
    let top = g3.outputs[k].node;
    let ti = g3.maj_inputs(top).unwrap();
    // children: M(F,!x,y) at 0 and M(F,!x,!y) at 1, operand order (F, !x, y)
    let left = ti[0].node;
    let g4 = step(&g3, Application::Relevance { node: left, x: 1, y: 2, z: 0 }, &mut trace)?;
    let top = g4.outputs[k].node;
    let right = g4.maj_inputs(top).unwrap()[1].node;
    let g5 = step(&g4, Application::Relevance { node: right, x: 1, y: 2, z: 0 }, &mut trace)?;
    Ok((g5, trace))
}

/// After M(R→L) on an output the new node is M(w, x, !x); nothing to do
/// unless strash reordered it, which it does not.
fn reorder_top(g: &Mig, top: NodeId, f: Lit, x: Lit) -> Result<Mig, GraphError> {
    let ins = g.maj_inputs(top).ok_or(GraphError::UnknownNode(top))?;
    if g.lits_equal(ins[0], f) && g.lits_equal(ins[1], x) {
        Ok(g.clone())
    } else {
        Err(GraphError::NoMatch { rule: "M".into(), site: format!("node {top}") })
    }
}

/// One scripted step: a rule application, or a pass whose individual
/// applications are determined by the graph at that point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptStep {
    Apply(Application),
    Expand { output: usize, x: String, y: String },
    NodeReduction,
    NormalizeInverters,
}

/// Replay a script, returning every intermediate graph (first = input).
pub fn replay(m: &Mig, steps: &[ScriptStep]) -> Result<Vec<Mig>, GraphError> {
    let mut out = vec![m.clone()];
    for s in steps {
        let cur = out.last().unwrap();
        let next = match s {
            ScriptStep::Apply(app) => apply_rule(cur, app)?,
            ScriptStep::Expand { output, x, y } => {
                let xl = cur.input_lit(x).ok_or_else(|| GraphError::MissingInput(x.clone()))?;
                let yl = cur.input_lit(y).ok_or_else(|| GraphError::MissingInput(y.clone()))?;
                relevance_expand(cur, *output, xl, yl)?.0
            }
            ScriptStep::NodeReduction => node_reduction(cur),
            ScriptStep::NormalizeInverters => normalize_inverters(cur),
        };
        out.push(next);
    }
    Ok(out)
}

/// Hand derivation for a two-output full adder: relevance
/// expansion of every output with x, y = the first two inputs, the M cascade,
/// inverter normalisation, then relevance on any output node that still
/// takes x and y directly. Every step is a concrete rule application.
pub fn full_adder_script(m: &Mig) -> Result<Vec<ScriptStep>, GraphError> {
    let names = m.input_names();
    if names.len() < 2 {
        return Err(GraphError::MissingInput("two inputs required".into()));
    }
    let x = m.input_lit(&names[0]).unwrap();
    let y = m.input_lit(&names[1]).unwrap();
    let mut g = m.clone();
    let mut steps = Vec::new();
    let push = |tr: Vec<Application>, steps: &mut Vec<ScriptStep>| {
        steps.extend(tr.into_iter().map(ScriptStep::Apply));
    };
    for k in 0..m.outputs.len() {
        let (g2, tr) = relevance_expand(&g, k, x, y)?;
        push(tr, &mut steps);
        g = g2;
    }
    let (g2, tr) = node_reduction_traced(&g);
    push(tr, &mut steps);
    let (g2, tr) = normalize_inverters_traced(&g2);
    push(tr, &mut steps);
    g = g2;
    for k in 0..g.outputs.len() {
        let Some(ins) = g.maj_inputs(g.outputs[k].node) else { continue };
        let px = ins.iter().position(|l| *l == x);
        let py = ins.iter().position(|l| *l == y);
        if let (Some(px), Some(py)) = (px, py) {
            let app = Application::Relevance { node: g.outputs[k].node, x: px, y: py, z: 3 - px - py };
            let g2 = apply_rule(&g, &app)?;
            steps.push(ScriptStep::Apply(app));
            let (g3, tr) = node_reduction_traced(&g2);
            push(tr, &mut steps);
            g = g3;
        }
    }
    Ok(steps)
}

fn score(m: &Mig) -> (usize, String) {
    (m.maj_count(), m.to_text())
}

fn settle(m: &Mig) -> Mig {
    let r = node_reduction(m);
    node_reduction(&normalize_inverters(&r))
}

/// Candidate moves of the reshaping search in deterministic order.
fn reshape_moves(m: &Mig) -> Vec<Move> {
    let mut mv = Vec::new();
    let inputs: Vec<Lit> = m
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, MigKind::Input(_)))
        .map(|n| Lit::pos(n.id))
        .collect();
    for &x in &inputs {
        for &y in &inputs {
            if x != y {
                mv.push(Move::ExpandAll(x, y));
            }
        }
    }
    for rule in [
        RewriteRule { tag: RuleTag::R, dir: Direction::LeftToRight },
        RewriteRule { tag: RuleTag::A, dir: Direction::LeftToRight },
        RewriteRule { tag: RuleTag::CA, dir: Direction::LeftToRight },
        RewriteRule { tag: RuleTag::CA, dir: Direction::RightToLeft },
        RewriteRule { tag: RuleTag::D, dir: Direction::LeftToRight },
    ] {
        for app in enumerate_sites(m, rule) {
            mv.push(Move::Rule(app));
        }
    }
    mv.sort_by_key(|x| x.anchor());
    mv
}

#[derive(Clone, Debug)]
enum Move {
    Rule(Application),
    ExpandAll(Lit, Lit),
}

impl Move {
    fn anchor(&self) -> NodeId {
        match self {
            Move::Rule(a) => a.anchor(),
            Move::ExpandAll(..) => 0,
        }
    }
    fn apply(&self, m: &Mig) -> Option<Mig> {
        match self {
            Move::Rule(a) => apply_rule(m, a).ok(),
            Move::ExpandAll(x, y) => {
                let mut g = m.clone();
                for k in 0..m.outputs.len() {
                    if g.is_maj(g.outputs[k].node) {
                        g = relevance_expand(&g, k, *x, *y).ok()?.0;
                    }
                }
                Some(g)
            }
        }
    }
}

const MAX_MOVES: usize = 400;

/// Bounded search: each step evaluates every inflation/exchange move followed
/// by node reduction and takes the best strict improvement; when none exists
/// it takes a seeded random move (bounded growth). Returns the best graph seen.
pub fn reshape(m: &Mig, budget: usize, seed: u64) -> Mig {
    if budget == 0 {
        return m.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = m.clone();
    let mut cur = m.clone();
    let limit = m.maj_count() + 6;
    for _ in 0..budget {
        let mut moves = reshape_moves(&cur);
        moves.truncate(MAX_MOVES);
        let mut improved: Option<Mig> = None;
        let mut pool: Vec<Mig> = Vec::new();
        for mv in &moves {
            let Some(g) = mv.apply(&cur) else { continue };
            let g = settle(&g);
            if g.maj_count() > limit {
                continue;
            }
            if g.maj_count() < cur.maj_count()
                && improved.as_ref().map_or(true, |b| score(&g) < score(b))
            {
                improved = Some(g.clone());
            }
            pool.push(g);
        }
        cur = match improved {
            Some(g) => g,
            None => match pool.choose(&mut rng) {
                Some(g) => g.clone(),
                None => break,
            },
        };
        if score(&cur) < score(&best) {
            best = cur.clone();
        }
    }
    best
}

pub const DEFAULT_ITERATIONS: usize = 5;
pub const DEFAULT_BUDGET: usize = 4;

/// Alternate node reduction and reshaping; keep the smallest graph seen.
pub fn optimize(m: &Mig, iterations: usize, seed: u64) -> Mig {
    let mut best = m.clone();
    let mut cur = m.clone();
    for it in 0..iterations {
        cur = node_reduction(&cur);
        if score(&cur) < score(&best) {
            best = cur.clone();
        }
        cur = reshape(&cur, DEFAULT_BUDGET, seed.wrapping_add(it as u64));
        if score(&cur) < score(&best) {
            best = cur.clone();
        }
    }
    best
}

// ---------------------------------------------------------------------------
// canned graphs

/// Seven-gate full adder: p = a^b via (a|b)&!(a&b), sum = p^cin,
/// cout = (a&b) | (p&cin).
pub fn full_adder_aoig() -> Aoig {
    let mut g = Aoig::new();
    let a = g.input("a");
    let b = g.input("b");
    let c = g.input("cin");
    let n1 = g.and(a, b);
    let n2 = g.or(a, b);
    let p = g.and(n2, n1.not());
    let n4 = g.and(p, c);
    let n5 = g.or(p, c);
    let s = g.and(n5, n4.not());
    let co = g.or(n1, n4);
    g.output(s);
    g.output(co);
    g
}

/// Random MIG for tests and property checks.
pub fn random_mig(rng: &mut impl rand::Rng, inputs: usize, majs: usize, outputs: usize) -> Mig {
    let mut nodes = Vec::new();
    for i in 0..inputs {
        nodes.push(MigNode { id: i as NodeId, kind: MigKind::Input(format!("x{i}")) });
    }
    nodes.push(MigNode { id: inputs as NodeId, kind: MigKind::Const0 });
    let mut pool: Vec<NodeId> = (0..=inputs as NodeId).collect();
    for k in 0..majs {
        let id = (inputs + 1 + k) as NodeId;
        let mut ins = [Lit::pos(0); 3];
        for l in ins.iter_mut() {
            // bias towards recent nodes so graphs get depth
            let j = if rng.gen_bool(0.5) && pool.len() > 3 {
                pool[rng.gen_range(pool.len().saturating_sub(4)..pool.len())]
            } else {
                pool[rng.gen_range(0..pool.len())]
            };
            *l = Lit::new(j, rng.gen_bool(0.3));
        }
        nodes.push(MigNode { id, kind: MigKind::Maj(ins) });
        pool.push(id);
    }
    let mut outs = Vec::new();
    for k in 0..outputs.max(1) {
        let j = pool[pool.len() - 1 - (k % pool.len())];
        outs.push(Lit::new(j, rng.gen_bool(0.3)));
    }
    Mig::new(nodes, outs).expect("random graph is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assign(pairs: &[(&str, bool)]) -> HashMap<String, bool> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn parse_roundtrip() {
        let t = "node 0 INPUT a\nnode 1 INPUT b\nnode 2 CONST0\nnode 3 MAJ 0 1! 2\noutput 3!\n";
        let m = Mig::parse(t).unwrap();
        assert_eq!(m.to_text(), t);
        assert_eq!(m.level(3), Some(1));
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = Mig::parse("node 0 INPUT a\nnode 1 MAJ 0 0\n").unwrap_err();
        assert_eq!(e, GraphError::Parse { line: 2, msg: "unknown node kind or wrong arity".into() });
        assert!(matches!(Mig::parse("node 1 MAJ 0 0 0\n"), Err(GraphError::NotTopological(1))));
    }

    #[test]
    fn missing_input_is_named() {
        let m = naive_mig_from_aoig(&full_adder_aoig()).unwrap();
        let e = m.eval(&assign(&[("a", true)])).unwrap_err();
        assert_eq!(e, GraphError::MissingInput("b".into()));
    }

    #[test]
    fn majority_reduce_both_forms() {
        let m = Mig::parse("node 0 INPUT x\nnode 1 INPUT z\nnode 2 MAJ 0 0 1\nnode 3 MAJ 0 0! 1\noutput 2\noutput 3\n").unwrap();
        let a = apply_rule(&m, &Application::MajorityReduce { node: 2, i: 0, j: 1 }).unwrap();
        assert_eq!(a.outputs()[0], Lit::pos(0));
        let b = apply_rule(&m, &Application::MajorityReduce { node: 3, i: 0, j: 1 }).unwrap();
        assert_eq!(b.outputs()[1], Lit::pos(1));
        assert!(apply_rule(&m, &Application::MajorityReduce { node: 2, i: 0, j: 2 }).is_err());
    }

    #[test]
    fn reduction_is_idempotent_on_fa() {
        let m = naive_mig_from_aoig(&full_adder_aoig()).unwrap();
        let r = node_reduction(&m);
        assert_eq!(r.maj_count(), m.maj_count());
        assert_eq!(node_reduction(&r).maj_count(), r.maj_count());
    }
}
