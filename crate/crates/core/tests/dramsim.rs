// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simdram_core::allocator::ComputeRow::*;
use simdram_core::curated::{curated_program, full_adder_program};
use simdram_core::dramsim::*;
use simdram_core::oplib::{Op, OpOptions};
use simdram_core::pipeline::{execute, operand_layout};
use simdram_core::uprogram::{MicroOp, MicroProgram, RowSpec};

fn state(lanes: usize, ops: &[(&str, u32)]) -> SubarrayState {
    let mut l = OperandLayout::new();
    for (n, w) in ops {
        l.add(n, *w, false);
    }
    let cfg = SubarrayConfig::new(lanes, l.rows_needed()).unwrap();
    SubarrayState::new(cfg, l).unwrap()
}

fn lane(row: &[u64], k: usize) -> bool {
    (row[k / 64] >> (k % 64)) & 1 == 1
}

#[test]
fn transposition_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=16u32 {
        let mut st = state(16384, &[("x", n)]);
        let vals: Vec<u64> = (0..10_000).map(|_| rng.gen::<u64>() & ((1 << n) - 1)).collect();
        st.transpose_to_vertical("x", &vals).unwrap();
        let back = st.transpose_from_vertical("x").unwrap();
        assert_eq!(&back[..vals.len()], &vals[..], "n={n}");
        assert!(back[vals.len()..].iter().all(|v| *v == 0));
    }
}

#[test]
fn vertical_layout_examples() {
    let mut st = state(64, &[("x", 4)]);
    st.transpose_to_vertical("x", &[0b1010]).unwrap();
    let bits: Vec<bool> = (0..4).map(|b| lane(st.d_row_bits("x", b).unwrap(), 0)).collect();
    assert_eq!(bits, vec![false, true, false, true]);

    let mut z = state(64, &[("x", 4)]);
    z.transpose_to_vertical("x", &[0; 64]).unwrap();
    assert!((0..4).all(|b| z.d_row_bits("x", b).unwrap().iter().all(|w| *w == 0)));
    assert_eq!(z.transpose_from_vertical("x").unwrap(), vec![0; 64]);

    let mut one = state(64, &[("x", 4)]);
    one.set_bit("x", 2, 5, true).unwrap();
    assert_eq!(one.transpose_from_vertical("x").unwrap()[5], 4);
}

#[test]
fn micro_op_examples() {
    let mut st = state(64, &[("a", 1), ("b", 1), ("c", 1)]);
    st.transpose_to_vertical("a", &[1, 1, 0]).unwrap();
    st.transpose_to_vertical("b", &[1, 0, 0]).unwrap();
    st.transpose_to_vertical("c", &[0, 1, 1]).unwrap();
    let mut p = MicroProgram::new("t", 1);
    p.aap(RowSpec::d("a", 0), RowSpec::row(T0));
    p.aap(RowSpec::d("b", 0), RowSpec::row(T1));
    p.aap(RowSpec::d("c", 0), RowSpec::row(T2));
    p.ap(RowSpec::tra(T0, T1, T2));
    st.exec_program(&p).unwrap();
    for r in [T0, T1, T2] {
        let row = st.compute_row(r);
        assert_eq!((lane(row, 0), lane(row, 1), lane(row, 2)), (true, true, false));
    }

    st.exec_uop(&MicroOp::aap(RowSpec::C1, RowSpec::row(T0))).unwrap();
    assert!(st.compute_row(T0).iter().all(|w| *w == !0));

    st.exec_uop(&MicroOp::aap(RowSpec::d("a", 0), RowSpec::row(Dcc0))).unwrap();
    st.exec_uop(&MicroOp::aap(RowSpec::ndcc(Dcc0), RowSpec::row(T1))).unwrap();
    let t1 = st.compute_row(T1);
    assert_eq!((lane(t1, 0), lane(t1, 1), lane(t1, 2), lane(t1, 3)), (false, false, true, true));

    assert!(st.exec_uop(&MicroOp::aap(RowSpec::row(T0), RowSpec::C0)).is_err());
    assert!(st.constants_intact().is_ok());
}

#[test]
fn empty_program_leaves_state() {
    let mut st = state(64, &[("x", 3)]);
    st.transpose_to_vertical("x", &[5, 6]).unwrap();
    let before = st.clone();
    st.exec_program(&MicroProgram::new("empty", 3)).unwrap();
    assert_eq!(st, before);
}

#[test]
fn full_adder_program_truth_table() {
    let p = full_adder_program();
    let mut st = state(8, &[("a", 1), ("b", 1), ("cin", 1), ("sum", 1), ("cout", 1)]);
    let v: Vec<u64> = (0..8).collect();
    st.transpose_to_vertical("a", &v.iter().map(|x| x & 1).collect::<Vec<_>>()).unwrap();
    st.transpose_to_vertical("b", &v.iter().map(|x| (x >> 1) & 1).collect::<Vec<_>>()).unwrap();
    st.transpose_to_vertical("cin", &v.iter().map(|x| (x >> 2) & 1).collect::<Vec<_>>()).unwrap();
    st.exec_program(&p).unwrap();
    let s = st.transpose_from_vertical("sum").unwrap();
    let c = st.transpose_from_vertical("cout").unwrap();
    for x in 0..8u64 {
        let k = x.count_ones() as u64;
        assert_eq!((s[x as usize], c[x as usize]), (k & 1, k >> 1), "{x:03b}");
    }
    st.constants_intact().unwrap();
}

#[test]
fn curated_addition_wraps() {
    let o = OpOptions::default();
    let p = curated_program(Op::Addition, 4, &o).unwrap();
    let out = execute(&p, Op::Addition, 4, &o, &[vec![1, 7, 15], vec![2, 9, 1]], None, None).unwrap();
    assert_eq!(out, vec![3, 0, 0]);
    // layout covers scratch operands the schedule names
    let l = operand_layout(Op::Addition, 4, &o, &p);
    assert!(l.get("dst").is_ok());
}

#[test]
fn bad_configs_are_rejected() {
    assert!(matches!(SubarrayConfig::new(3, 4), Err(SimError::BadLanes(3))));
    assert!(matches!(SubarrayConfig::new(0, 4), Err(SimError::BadLanes(0))));
    let mut st = state(2, &[("x", 2)]);
    assert!(st.transpose_to_vertical("x", &[1, 2, 3]).is_err());
    assert!(st.transpose_to_vertical("x", &[4]).is_err());
    assert!(st.transpose_to_vertical("y", &[1]).is_err());
}
