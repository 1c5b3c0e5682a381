// SPDX-License-Identifier: Apache-2.0

//! Functional model of one subarray: D-group rows, compute rows T0-T3 and
//! DCC0/DCC1, constant rows C0/C1, and a row buffer. Lanes are bit-packed.

use std::collections::BTreeMap;

use crate::allocator::ComputeRow;
use crate::uprogram::{MicroOp, MicroProgram, RowSpec};

pub const DEFAULT_LANES: usize = 65536;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubarrayConfig {
    pub lanes: usize,
    pub d_group_rows: usize,
}

impl SubarrayConfig {
    pub fn new(lanes: usize, d_group_rows: usize) -> Result<Self, SimError> {
        if lanes == 0 || !lanes.is_power_of_two() {
            return Err(SimError::BadLanes(lanes));
        }
        Ok(SubarrayConfig { lanes, d_group_rows })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperandInfo {
    pub base_row: usize,
    pub width: u32,
    pub signed: bool,
}

/// Operand name -> D-group row range; bit i of an element is at base_row + i.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OperandLayout {
    pub operands: BTreeMap<String, OperandInfo>,
    next: usize,
}

impl OperandLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append an operand after the previously placed ones.
    pub fn add(&mut self, name: &str, width: u32, signed: bool) -> &mut Self {
        if !self.operands.contains_key(name) {
            self.operands.insert(name.to_string(), OperandInfo { base_row: self.next, width, signed });
            self.next += width as usize;
        }
        self
    }

    pub fn rows_needed(&self) -> usize {
        self.next
    }

    pub fn get(&self, name: &str) -> Result<&OperandInfo, SimError> {
        self.operands.get(name).ok_or_else(|| SimError::UnknownOperand(name.to_string()))
    }

    /// Add every operand referenced by `p` that is not placed yet.
    pub fn cover_program(&mut self, p: &MicroProgram) -> &mut Self {
        for (name, w) in p.operand_widths() {
            if !self.operands.contains_key(&name) {
                self.add(&name, w, false);
            }
        }
        self
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SimError {
    #[error("lane count {0} is not a power of two")]
    BadLanes(usize),
    #[error("unknown operand `{0}`")]
    UnknownOperand(String),
    #[error("bit {bit} out of range for operand `{operand}` of width {width}")]
    BitOutOfRange { operand: String, bit: u32, width: u32 },
    #[error("{0} values do not fit in {1} lanes")]
    TooManyValues(usize, usize),
    #[error("lane {lane}: value {value:#x} exceeds {width} bits")]
    ValueTooWide { lane: usize, value: u64, width: u32 },
    #[error("write to constant row {0}")]
    ConstWrite(&'static str),
    #[error("layout needs {0} D-group rows, subarray has {1}")]
    DGroupOverflow(usize, usize),
    #[error("invalid operand role: {0}")]
    BadSpec(String),
    #[error("constant row {0} changed")]
    ConstantCorrupted(&'static str),
}

const T_BASE: usize = 0;
const DCC_BASE: usize = 4;
const C0_ROW: usize = 6;
const C1_ROW: usize = 7;
const SPECIAL: usize = 8;

/// Bit matrix of the subarray. Compute/constant rows follow the D group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubarrayState {
    pub config: SubarrayConfig,
    pub layout: OperandLayout,
    rows: Vec<Vec<u64>>,
    row_buffer: Vec<u64>,
    last_mask: u64,
}

fn compute_index(r: ComputeRow) -> usize {
    if r.is_dcc() {
        DCC_BASE + r.index()
    } else {
        T_BASE + r.index()
    }
}

impl SubarrayState {
    pub fn new(config: SubarrayConfig, layout: OperandLayout) -> Result<Self, SimError> {
        if layout.rows_needed() > config.d_group_rows {
            return Err(SimError::DGroupOverflow(layout.rows_needed(), config.d_group_rows));
        }
        let words = config.lanes.div_ceil(64);
        let last_mask = if config.lanes % 64 == 0 { !0 } else { (1u64 << (config.lanes % 64)) - 1 };
        let mut rows = vec![vec![0u64; words]; config.d_group_rows + SPECIAL];
        let c1 = config.d_group_rows + C1_ROW;
        for w in rows[c1].iter_mut() {
            *w = !0;
        }
        *rows[c1].last_mut().unwrap() &= last_mask;
        Ok(SubarrayState { config, layout, rows, row_buffer: vec![0; words], last_mask })
    }

    pub fn lanes(&self) -> usize {
        self.config.lanes
    }

    fn special(&self, k: usize) -> usize {
        self.config.d_group_rows + k
    }

    fn d_row(&self, operand: &str, bit: u32) -> Result<usize, SimError> {
        let info = self.layout.get(operand)?;
        if bit >= info.width {
            return Err(SimError::BitOutOfRange { operand: operand.to_string(), bit, width: info.width });
        }
        Ok(info.base_row + bit as usize)
    }

    fn complement(&self, v: &[u64]) -> Vec<u64> {
        let mut out: Vec<u64> = v.iter().map(|w| !w).collect();
        *out.last_mut().unwrap() &= self.last_mask;
        out
    }

    pub fn compute_row(&self, r: ComputeRow) -> &[u64] {
        &self.rows[self.special(compute_index(r))]
    }

    /// Complement view of a DCC row.
    pub fn dcc_negated(&self, r: ComputeRow) -> Vec<u64> {
        assert!(r.is_dcc(), "negated view exists only for DCC rows");
        self.complement(self.compute_row(r))
    }

    pub fn constant_row(&self, one: bool) -> &[u64] {
        &self.rows[self.special(if one { C1_ROW } else { C0_ROW })]
    }

    /// C0 all zeros and C1 all ones in every lane.
    pub fn constants_intact(&self) -> Result<(), SimError> {
        if self.constant_row(false).iter().any(|w| *w != 0) {
            return Err(SimError::ConstantCorrupted("C0"));
        }
        let c1 = self.constant_row(true);
        let (last, full) = c1.split_last().unwrap();
        if full.iter().any(|w| *w != !0) || *last != self.last_mask {
            return Err(SimError::ConstantCorrupted("C1"));
        }
        Ok(())
    }

    pub fn row_buffer(&self) -> &[u64] {
        &self.row_buffer
    }

    pub fn d_row_bits(&self, operand: &str, bit: u32) -> Result<&[u64], SimError> {
        let r = self.d_row(operand, bit)?;
        Ok(&self.rows[r])
    }

    fn maj(&mut self, rs: &[ComputeRow; 3]) -> Vec<u64> {
        let idx: Vec<usize> = rs.iter().map(|r| self.special(compute_index(*r))).collect();
        let m: Vec<u64> = (0..self.row_buffer.len())
            .map(|w| {
                let (a, b, c) = (self.rows[idx[0]][w], self.rows[idx[1]][w], self.rows[idx[2]][w]);
                (a & b) | (a & c) | (b & c)
            })
            .collect();
        for &i in &idx {
            self.rows[i].clone_from(&m);
        }
        m
    }

    fn read(&mut self, s: &RowSpec) -> Result<Vec<u64>, SimError> {
        Ok(match s {
            RowSpec::D { operand, bit } => self.rows[self.d_row(operand, *bit)?].clone(),
            RowSpec::T(r) | RowSpec::Dcc(r) => self.compute_row(*r).to_vec(),
            RowSpec::Ndcc(r) => self.dcc_negated(*r),
            RowSpec::C0 => self.constant_row(false).to_vec(),
            RowSpec::C1 => self.constant_row(true).to_vec(),
            RowSpec::Tra(rs) => self.maj(rs),
            RowSpec::Dual(_) => return Err(SimError::BadSpec("DUAL cannot be read".into())),
        })
    }

    fn write(&mut self, s: &RowSpec, v: &[u64]) -> Result<(), SimError> {
        match s {
            RowSpec::D { operand, bit } => {
                let r = self.d_row(operand, *bit)?;
                self.rows[r].copy_from_slice(v);
            }
            RowSpec::T(r) | RowSpec::Dcc(r) => {
                let i = self.special(compute_index(*r));
                self.rows[i].copy_from_slice(v);
            }
            RowSpec::Ndcc(r) => {
                let i = self.special(compute_index(*r));
                self.rows[i] = self.complement(v);
            }
            RowSpec::C0 => return Err(SimError::ConstWrite("C0")),
            RowSpec::C1 => return Err(SimError::ConstWrite("C1")),
            RowSpec::Tra(rs) => {
                for r in rs {
                    let i = self.special(compute_index(*r));
                    self.rows[i].copy_from_slice(v);
                }
            }
            RowSpec::Dual(g) => {
                for m in g {
                    let i = self.special(compute_index(m.row));
                    self.rows[i] = if m.neg { self.complement(v) } else { v.to_vec() };
                }
            }
        }
        Ok(())
    }

    pub fn exec_uop(&mut self, op: &MicroOp) -> Result<(), SimError> {
        match op {
            MicroOp::Aap { src, dst } => {
                if matches!(dst, RowSpec::C0 | RowSpec::C1) {
                    return Err(SimError::ConstWrite(if *dst == RowSpec::C0 { "C0" } else { "C1" }));
                }
                let v = self.read(src)?;
                self.write(dst, &v)?;
                self.row_buffer = v;
            }
            MicroOp::Ap { target } => {
                let v = match target {
                    RowSpec::Tra(rs) => self.maj(rs),
                    // single-row activation: no-op with precharge
                    other => self.read(other)?,
                };
                self.row_buffer = v;
            }
        }
        Ok(())
    }

    /// Fault hook: complement every row `op` writes, in all lanes.
    pub fn corrupt_written_rows(&mut self, op: &MicroOp) -> Result<(), SimError> {
        let mut targets: Vec<RowSpec> = Vec::new();
        match op {
            MicroOp::Aap { src, dst } => {
                if let RowSpec::Tra(_) = src {
                    targets.push(src.clone());
                }
                targets.push(dst.clone());
            }
            MicroOp::Ap { target: t @ RowSpec::Tra(_) } => targets.push(t.clone()),
            MicroOp::Ap { .. } => {}
        }
        for t in targets {
            let idx: Vec<usize> = match &t {
                RowSpec::D { operand, bit } => vec![self.d_row(operand, *bit)?],
                RowSpec::T(r) | RowSpec::Dcc(r) | RowSpec::Ndcc(r) => vec![self.special(compute_index(*r))],
                RowSpec::Tra(rs) => rs.iter().map(|r| self.special(compute_index(*r))).collect(),
                RowSpec::Dual(g) => g.iter().map(|m| self.special(compute_index(m.row))).collect(),
                RowSpec::C0 | RowSpec::C1 => vec![],
            };
            for i in idx {
                self.rows[i] = self.complement(&self.rows[i]);
            }
        }
        Ok(())
    }

    pub fn exec_program(&mut self, p: &MicroProgram) -> Result<(), SimError> {
        for op in &p.ops {
            self.exec_uop(op)?;
        }
        Ok(())
    }

    /// Store values vertically; unused lanes are zeroed. Values wider than
    /// the operand are an error.
    pub fn transpose_to_vertical(&mut self, operand: &str, values: &[u64]) -> Result<(), SimError> {
        let info = self.layout.get(operand)?.clone();
        if values.len() > self.lanes() {
            return Err(SimError::TooManyValues(values.len(), self.lanes()));
        }
        let wmask = if info.width >= 64 { !0 } else { (1u64 << info.width) - 1 };
        for (lane, &v) in values.iter().enumerate() {
            if v & !wmask != 0 {
                return Err(SimError::ValueTooWide { lane, value: v, width: info.width });
            }
        }
        for i in 0..info.width as usize {
            let row = &mut self.rows[info.base_row + i];
            row.iter_mut().for_each(|w| *w = 0);
            for (lane, &v) in values.iter().enumerate() {
                if (v >> i) & 1 == 1 {
                    row[lane / 64] |= 1 << (lane % 64);
                }
            }
        }
        Ok(())
    }

    pub fn transpose_from_vertical(&self, operand: &str) -> Result<Vec<u64>, SimError> {
        let info = self.layout.get(operand)?;
        let mut out = vec![0u64; self.lanes()];
        for i in 0..info.width as usize {
            let row = &self.rows[info.base_row + i];
            for (lane, o) in out.iter_mut().enumerate() {
                if (row[lane / 64] >> (lane % 64)) & 1 == 1 {
                    *o |= 1 << i;
                }
            }
        }
        Ok(out)
    }

    /// Set a single bit; handy for tests.
    pub fn set_bit(&mut self, operand: &str, bit: u32, lane: usize, v: bool) -> Result<(), SimError> {
        let r = self.d_row(operand, bit)?;
        let w = &mut self.rows[r][lane / 64];
        if v {
            *w |= 1 << (lane % 64);
        } else {
            *w &= !(1 << (lane % 64));
        }
        Ok(())
    }

    /// Bit of lane `lane` in every row, D group first.
    pub fn lane_column(&self, lane: usize) -> Vec<bool> {
        self.rows.iter().map(|r| (r[lane / 64] >> (lane % 64)) & 1 == 1).collect()
    }

    /// Named rows, one per line: `<name> <hex>` with lane 0 as the least
    /// significant bit.
    pub fn dump(&self) -> String {
        let mut names: Vec<String> = (0..self.config.d_group_rows).map(|i| format!("D{i}")).collect();
        for (name, info) in &self.layout.operands {
            for b in 0..info.width as usize {
                names[info.base_row + b] = format!("{name}.{b}");
            }
        }
        for n in ["T0", "T1", "T2", "T3", "DCC0", "DCC1", "C0", "C1"] {
            names.push(n.to_string());
        }
        let hex = |v: &[u64]| -> String {
            let digits = self.lanes().div_ceil(4).max(1);
            let mut s: String = v.iter().rev().map(|w| format!("{w:016x}")).collect();
            s = s[s.len() - digits.min(s.len())..].to_string();
            s
        };
        let mut out = String::new();
        for (name, row) in names.iter().zip(&self.rows) {
            out.push_str(&format!("{name} {}\n", hex(row)));
        }
        out.push_str(&format!("RB {}\n", hex(&self.row_buffer)));
        out
    }
}
