// SPDX-License-Identifier: Apache-2.0

//! End-to-end flow: operation -> program (curated or generated) -> subarray
//! execution, plus the oracle comparison harness.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocator::{allocate_rows_with, PhaseMode};
use crate::curated::curated_program;
use crate::dramsim::{OperandLayout, SimError, SubarrayConfig, SubarrayState};
use crate::mig::{cleanup, naive_mig_from_aoig, normalize_inverters, optimize, GraphError, Mig, MigKind, MigNode, DEFAULT_ITERATIONS};
use crate::oplib::{
    input_width, kernel_aoig, oracle, output_width, plan, reference_count, CountBound, Op, OpError, OpOptions, Plan,
};
use crate::uprogram::{
    classify_scaling, Counts, Generator, MicroOp, MicroProgram, ProgramError, RowSpec, ScalingClass, SliceBinding,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Curated,
    Generated,
}

impl FromStr for Mode {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, PipelineError> {
        match s {
            "curated" => Ok(Mode::Curated),
            "generated" => Ok(Mode::Generated),
            _ => Err(PipelineError::Input(format!("unknown mode `{s}` (curated|generated)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Curated => "curated",
            Mode::Generated => "generated",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub opts: OpOptions,
    pub iterations: usize,
    pub seed: u64,
    pub phase_mode: PhaseMode,
    /// Subarray lane count; defaults to the next power of two of the input count.
    pub lanes: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Curated,
            opts: OpOptions::default(),
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            phase_mode: PhaseMode::Prose,
            lanes: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Input(String),
    #[error("no MIG for kernel `{0}`")]
    MissingKernel(String),
}

// ---------------------------------------------------------------------------
// generated mode

/// Naive and optimized MIG of one slice kernel.
pub fn synthesize_kernel(name: &str, iterations: usize, seed: u64) -> Result<(Mig, Mig), PipelineError> {
    // optimize is deterministic in (kernel, iterations, seed), and slow enough to memo
    static CACHE: OnceLock<Mutex<HashMap<(String, usize, u64), (Mig, Mig)>>> = OnceLock::new();
    let key = (name.to_string(), iterations, seed);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let aoig = kernel_aoig(name).ok_or_else(|| PipelineError::MissingKernel(name.to_string()))?;
    let naive = naive_mig_from_aoig(&aoig)?;
    let opt = optimize(&naive, iterations, seed);
    cache.lock().unwrap().insert(key, (naive.clone(), opt.clone()));
    Ok((naive, opt))
}

/// Optimized MIGs for every kernel a plan uses.
pub fn kernel_library(p: &Plan, iterations: usize, seed: u64) -> Result<BTreeMap<String, Mig>, PipelineError> {
    let mut lib = BTreeMap::new();
    for k in p.kernels() {
        if k != "copy" {
            lib.insert(k.to_string(), synthesize_kernel(k, iterations, seed)?.1);
        }
    }
    Ok(lib)
}

/// Disjoint union of kernels; inputs become `<kernel>.<input>`.
pub fn merge_kernels(lib: &BTreeMap<String, Mig>) -> Mig {
    let mut nodes = Vec::new();
    let mut outputs = Vec::new();
    let mut base = 0;
    for (name, m) in lib {
        let shift = |id: u32| id + base;
        for n in m.nodes() {
            let kind = match &n.kind {
                MigKind::Input(i) => MigKind::Input(format!("{name}.{i}")),
                MigKind::Maj(ins) => MigKind::Maj(ins.map(|l| l.shifted(base))),
                k => k.clone(),
            };
            nodes.push(MigNode { id: shift(n.id), kind });
        }
        outputs.extend(m.outputs().iter().map(|l| l.shifted(base)));
        base += m.nodes().iter().map(|n| n.id + 1).max().unwrap_or(0);
    }
    Mig::new(nodes, outputs).expect("union of valid graphs")
}

/// Inverse of [`merge_kernels`].
pub fn split_kernels(m: &Mig) -> Result<BTreeMap<String, Mig>, PipelineError> {
    let kernel_of = |i: &str| i.split_once('.').map(|(k, _)| k.to_string());
    let kernels: std::collections::BTreeSet<String> = m.input_names().iter().filter_map(|i| kernel_of(i)).collect();
    let mut lib = BTreeMap::new();
    for k in kernels {
        let prefix = format!("{k}.");
        let mine = |id: u32| match &m.node(id).unwrap().kind {
            MigKind::Input(i) => Some(i.starts_with(&prefix)),
            _ => None,
        };
        let mut live = std::collections::HashSet::new();
        let mut outs = Vec::new();
        for o in m.outputs() {
            let cone = m.cone(o.node);
            let owners: Vec<bool> = cone.iter().filter_map(|c| mine(*c)).collect();
            if !owners.is_empty() && owners.iter().all(|x| *x) {
                outs.push(*o);
                live.extend(cone);
            }
        }
        let nodes = m
            .nodes()
            .iter()
            .filter(|n| live.contains(&n.id) || mine(n.id) == Some(true))
            .map(|n| match &n.kind {
                MigKind::Input(i) => MigNode { id: n.id, kind: MigKind::Input(i[prefix.len()..].to_string()) },
                _ => n.clone(),
            })
            .collect();
        lib.insert(k, Mig::new(nodes, outs)?);
    }
    Ok(lib)
}

/// Keep only the outputs flagged live.
fn prune(m: &Mig, live: &[bool]) -> Mig {
    let outs = m.outputs().iter().zip(live).filter(|(_, l)| **l).map(|(o, _)| *o).collect();
    cleanup(&Mig::new(m.nodes().to_vec(), outs).expect("subset of outputs"))
}

/// Lower a plan with the given kernel MIGs.
pub fn generated_program_with(
    p: &Plan,
    lib: &BTreeMap<String, Mig>,
    phase_mode: PhaseMode,
) -> Result<MicroProgram, PipelineError> {
    let mut g = Generator::new(p.op.name(), p.n).with_mode(phase_mode);
    let mut cache: HashMap<(&str, Vec<bool>), (Mig, crate::allocator::RowOperandAllocation)> = HashMap::new();
    for it in &p.instances {
        if it.kernel == "copy" {
            let src = it.inputs[0].1.spec();
            if let Some(Some((op, b))) = it.outputs.first() {
                g.program.aap(src, RowSpec::d(op, *b));
            }
            continue;
        }
        let live: Vec<bool> = it.outputs.iter().map(|o| o.is_some()).collect();
        let key = (it.kernel, live.clone());
        if !cache.contains_key(&key) {
            let m = lib.get(it.kernel).ok_or_else(|| PipelineError::MissingKernel(it.kernel.to_string()))?;
            let m = normalize_inverters(&prune(m, &live));
            let a = allocate_rows_with(&m, phase_mode).map_err(ProgramError::from)?;
            cache.insert(key.clone(), (m, a));
        }
        let (m, a) = &cache[&key];
        let binding = SliceBinding {
            inputs: it.inputs.iter().map(|(k, s)| (k.to_string(), s.clone())).collect(),
            outputs: it.outputs.iter().filter(|o| o.is_some()).cloned().collect(),
        };
        g.emit_slice(m, a, &binding)?;
    }
    Ok(g.finish())
}

pub fn generated_program(op: Op, n: u32, cfg: &PipelineConfig) -> Result<MicroProgram, PipelineError> {
    let p = plan(op, n, &cfg.opts)?;
    let lib = kernel_library(&p, cfg.iterations, cfg.seed)?;
    generated_program_with(&p, &lib, cfg.phase_mode)
}

pub fn build_program(op: Op, n: u32, cfg: &PipelineConfig) -> Result<MicroProgram, PipelineError> {
    match cfg.mode {
        Mode::Curated => Ok(curated_program(op, n, &cfg.opts)?),
        Mode::Generated => generated_program(op, n, cfg),
    }
}

// ---------------------------------------------------------------------------
// execution

/// Role operands first, then `dst`, then whatever scratch the program uses.
pub fn operand_layout(op: Op, n: u32, opts: &OpOptions, p: &MicroProgram) -> OperandLayout {
    let mut l = OperandLayout::new();
    for role in op.roles() {
        l.add(role, input_width(op, role, n), op.signed(opts) && *role != "sel");
    }
    l.add("dst", output_width(op, n), false);
    l.cover_program(p);
    l
}

/// Complement every row written by μOp `op_index` right after it runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fault {
    pub op_index: usize,
}

fn lane_count(inputs: &[Vec<u64>], lanes: Option<usize>) -> Result<(usize, usize), PipelineError> {
    let count = inputs.first().map(|v| v.len()).unwrap_or(0);
    if inputs.iter().any(|v| v.len() != count) {
        return Err(PipelineError::Input("input vectors differ in length".into()));
    }
    let lanes = lanes.unwrap_or(count.max(1).next_power_of_two());
    if count > lanes {
        return Err(SimError::TooManyValues(count, lanes).into());
    }
    Ok((count, lanes))
}

/// Run `p` on one subarray. `inputs` follow `op.roles()`, one value per lane.
pub fn execute(
    p: &MicroProgram,
    op: Op,
    n: u32,
    opts: &OpOptions,
    inputs: &[Vec<u64>],
    lanes: Option<usize>,
    fault: Option<Fault>,
) -> Result<Vec<u64>, PipelineError> {
    if inputs.len() != op.roles().len() {
        return Err(OpError::Arity { op, want: op.roles().len(), got: inputs.len() }.into());
    }
    let (count, lanes) = lane_count(inputs, lanes)?;
    let layout = operand_layout(op, n, opts, p);
    let cfg = SubarrayConfig::new(lanes, layout.rows_needed())?;
    let mut st = SubarrayState::new(cfg, layout)?;
    for (role, vals) in op.roles().iter().zip(inputs) {
        st.transpose_to_vertical(role, vals)?;
    }
    match fault {
        None => st.exec_program(p)?,
        Some(f) => {
            for (i, u) in p.ops.iter().enumerate() {
                st.exec_uop(u)?;
                if i == f.op_index {
                    st.corrupt_written_rows(u)?;
                }
            }
        }
    }
    st.constants_intact()?;
    let mut out = st.transpose_from_vertical("dst")?;
    out.truncate(count);
    Ok(out)
}

#[derive(Debug)]
pub struct RunResult {
    pub outputs: Vec<u64>,
    /// Lanes whose result is undefined under the active options.
    pub lane_errors: Vec<(usize, OpError)>,
    pub counts: Counts,
    pub lanes: usize,
}

pub fn lane_errors(op: Op, n: u32, opts: &OpOptions, inputs: &[Vec<u64>]) -> Vec<(usize, OpError)> {
    let count = inputs.first().map(|v| v.len()).unwrap_or(0);
    (0..count)
        .filter_map(|i| {
            let args: Vec<u64> = inputs.iter().map(|v| v[i]).collect();
            match oracle(op, n, &args, opts) {
                Err(e @ OpError::DivisionByZero) => Some((i, e)),
                _ => None,
            }
        })
        .collect()
}

/// Build the program for `op` and run it on `inputs`.
pub fn run_operation(op: Op, n: u32, inputs: &[Vec<u64>], cfg: &PipelineConfig) -> Result<RunResult, PipelineError> {
    let p = build_program(op, n, cfg)?;
    run_program(&p, op, n, inputs, cfg)
}

pub fn run_program(
    p: &MicroProgram,
    op: Op,
    n: u32,
    inputs: &[Vec<u64>],
    cfg: &PipelineConfig,
) -> Result<RunResult, PipelineError> {
    let (_, lanes) = lane_count(inputs, cfg.lanes)?;
    let outputs = execute(p, op, n, &cfg.opts, inputs, Some(lanes), None)?;
    Ok(RunResult { outputs, lane_errors: lane_errors(op, n, &cfg.opts, inputs), counts: p.counts(), lanes })
}

// ---------------------------------------------------------------------------
// verification

pub const RANDOM_LANES: usize = 10_000;
pub const MAX_BATCH_LANES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub lane: usize,
    pub inputs: Vec<u64>,
    pub expected: u64,
    pub got: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub op: String,
    pub n: u32,
    pub mode: Mode,
    pub exhaustive: bool,
    pub lanes_checked: usize,
    pub mismatches: usize,
    pub first_counterexample: Option<Counterexample>,
    /// Same tuples in rotated lane positions gave the same results.
    pub lane_independent: bool,
}

/// Every input combination when the cross product is at most 2^16 values,
/// otherwise `RANDOM_LANES` seeded random tuples.
pub fn verification_inputs(op: Op, n: u32, seed: u64) -> (bool, Vec<Vec<u64>>) {
    let widths: Vec<u32> = op.roles().iter().map(|r| input_width(op, r, n)).collect();
    let total: u32 = widths.iter().sum();
    if total <= 16 {
        let count = 1usize << total;
        let mut cols = vec![Vec::with_capacity(count); widths.len()];
        for x in 0..count as u64 {
            let mut sh = 0;
            for (c, w) in cols.iter_mut().zip(&widths) {
                c.push((x >> sh) & ((1u64 << w) - 1));
                sh += w;
            }
        }
        (true, cols)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = widths
            .iter()
            .map(|w| {
                let m = if *w >= 64 { !0 } else { (1u64 << w) - 1 };
                (0..RANDOM_LANES).map(|_| rng.gen::<u64>() & m).collect()
            })
            .collect();
        (false, cols)
    }
}

/// Compare a program against the oracle on the verification inputs, in
/// batches of at most `MAX_BATCH_LANES` lanes.
pub fn verify_program(
    p: &MicroProgram,
    op: Op,
    n: u32,
    cfg: &PipelineConfig,
    fault: Option<Fault>,
) -> Result<VerifyReport, PipelineError> {
    let (exhaustive, cols) = verification_inputs(op, n, cfg.seed);
    let count = cols.first().map(|c| c.len()).unwrap_or(0);
    let mut report = VerifyReport {
        op: op.name().to_string(),
        n,
        mode: cfg.mode,
        exhaustive,
        lanes_checked: 0,
        mismatches: 0,
        first_counterexample: None,
        lane_independent: true,
    };
    let batch = cfg.lanes.unwrap_or(MAX_BATCH_LANES).min(MAX_BATCH_LANES);
    let mut start = 0;
    while start < count {
        let end = (start + batch).min(count);
        let chunk: Vec<Vec<u64>> = cols.iter().map(|c| c[start..end].to_vec()).collect();
        let out = execute(p, op, n, &cfg.opts, &chunk, None, fault)?;
        if start == 0 && chunk[0].len() > 1 {
            let k = chunk[0].len();
            let rot: Vec<Vec<u64>> = chunk.iter().map(|c| c[1..].iter().chain(&c[..1]).copied().collect()).collect();
            let out_rot = execute(p, op, n, &cfg.opts, &rot, None, fault)?;
            report.lane_independent = (0..k).all(|i| out_rot[i] == out[(i + 1) % k]);
        }
        for (i, got) in out.iter().enumerate() {
            let args: Vec<u64> = chunk.iter().map(|c| c[i]).collect();
            let want = match oracle(op, n, &args, &cfg.opts) {
                Ok(v) => v,
                // lane reported as an error, nothing to compare
                Err(OpError::DivisionByZero) => continue,
                Err(e) => return Err(e.into()),
            };
            report.lanes_checked += 1;
            if *got != want {
                report.mismatches += 1;
                if report.first_counterexample.is_none() {
                    report.first_counterexample =
                        Some(Counterexample { lane: start + i, inputs: args, expected: want, got: *got });
                }
            }
        }
        start = end;
    }
    Ok(report)
}

pub fn verify_operation(op: Op, n: u32, cfg: &PipelineConfig) -> Result<VerifyReport, PipelineError> {
    let p = build_program(op, n, cfg)?;
    verify_program(&p, op, n, cfg, None)
}

/// Index of the last μOp that writes `dst`; a natural fault site.
pub fn last_dst_write(p: &MicroProgram) -> Option<usize> {
    p.ops.iter().rposition(|u| matches!(u, MicroOp::Aap { dst: RowSpec::D { operand, .. }, .. } if operand == "dst"))
}

/// Widths used for scaling fits. Odd widths separate ⌊n/2⌋ shapes from plain linear ones.
pub const SCALING_WIDTHS: [u32; 8] = [4, 5, 8, 9, 16, 17, 32, 33];

/// (n, total μOps) at every scaling width.
pub fn scaling_points(op: Op, cfg: &PipelineConfig) -> Result<Vec<(u32, usize)>, PipelineError> {
    SCALING_WIDTHS.iter().map(|&n| Ok((n, build_program(op, n, cfg)?.counts().total))).collect()
}

/// One op's line in the scaling report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub op: String,
    pub mode: Mode,
    pub expected_class: ScalingClass,
    pub fitted_class: Option<ScalingClass>,
    pub totals: Vec<(u32, usize)>,
    pub reference: Vec<(u32, String)>,
    /// Curated: every total admitted by the reference. Generated: every total
    /// at most twice the reference.
    pub counts_ok: bool,
    pub class_ok: bool,
}

impl ScalingRow {
    pub fn conforms(&self) -> bool {
        self.counts_ok && self.class_ok
    }
}

pub fn scaling_row(op: Op, cfg: &PipelineConfig) -> Result<ScalingRow, PipelineError> {
    let totals = scaling_points(op, cfg)?;
    let fitted = classify_scaling(&totals).ok();
    let expected = crate::oplib::spec(op).class;
    let counts_ok = totals.iter().all(|&(n, t)| {
        let r = reference_count(op, n);
        match cfg.mode {
            Mode::Curated => r.admits(t),
            Mode::Generated => {
                let cap = match r {
                    CountBound::Exact(v) => v,
                    CountBound::Range { hi, .. } => hi,
                };
                t <= 2 * cap
            }
        }
    });
    Ok(ScalingRow {
        op: op.name().to_string(),
        mode: cfg.mode,
        expected_class: expected,
        fitted_class: fitted,
        reference: totals.iter().map(|&(n, _)| (n, reference_count(op, n).to_string())).collect(),
        totals,
        counts_ok,
        class_ok: fitted == Some(expected),
    })
}
