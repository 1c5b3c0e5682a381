// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use proptest::prelude::*;
use simdram_core::mig::eval_aoig;
use simdram_core::oplib::*;
use simdram_core::uprogram::ScalingClass;

fn opts() -> OpOptions {
    OpOptions::default()
}

/// Evaluate the flattened AOIG of `op` on one tuple of arguments.
fn eval_full(op: Op, n: u32, args: &[u64], o: &OpOptions) -> u64 {
    let g = build_full_aoig(op, n, o).unwrap();
    let mut asg = HashMap::new();
    for (role, v) in op.roles().iter().zip(args) {
        for i in 0..input_width(op, role, n) {
            asg.insert(format!("{role}.{i}"), (v >> i) & 1 == 1);
        }
    }
    let outs = eval_aoig(&g, &asg).unwrap();
    outs.iter().enumerate().map(|(i, b)| (*b as u64) << i).sum()
}

fn all_args(op: Op, n: u32) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for role in op.roles() {
        let w = input_width(op, role, n);
        let mut next = Vec::new();
        for prefix in &out {
            for v in 0..(1u64 << w) {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[test]
fn circuits_match_oracle_exhaustively() {
    for op in Op::ALL {
        for n in [1, 2, 3, 4] {
            for unsigned in [false, true] {
                let o = OpOptions { unsigned, ..opts() };
                if check_width(op, n, &o).is_err() {
                    continue;
                }
                let g = build_full_aoig(op, n, &o).unwrap();
                for args in all_args(op, n) {
                    let mut asg = HashMap::new();
                    for (role, v) in op.roles().iter().zip(&args) {
                        for i in 0..input_width(op, role, n) {
                            asg.insert(format!("{role}.{i}"), (v >> i) & 1 == 1);
                        }
                    }
                    let got: u64 =
                        eval_aoig(&g, &asg).unwrap().iter().enumerate().map(|(i, b)| (*b as u64) << i).sum();
                    let want = oracle(op, n, &args, &o).unwrap();
                    assert_eq!(got, want, "{op} n={n} unsigned={unsigned} args={args:?}");
                }
            }
        }
    }
}

#[test]
fn adder_slice_is_full_adder() {
    let g = build_bitslice_aoig(Op::Addition, 4, &opts()).unwrap();
    for v in 0..8u32 {
        let (a, b, c) = (v & 1, (v >> 1) & 1, (v >> 2) & 1);
        let asg: HashMap<String, bool> =
            [("a", a), ("b", b), ("c", c)].iter().map(|(k, x)| (k.to_string(), *x == 1)).collect();
        let out = eval_aoig(&g, &asg).unwrap();
        let s = a + b + c;
        assert_eq!(out, vec![s & 1 == 1, s >= 2]);
    }
}

#[test]
fn equal_n2_all_pairs() {
    for a in 0..4 {
        for b in 0..4 {
            assert_eq!(eval_full(Op::Equal, 2, &[a, b], &opts()), (a == b) as u64);
        }
    }
}

#[test]
fn oracle_examples() {
    let o = opts();
    assert_eq!(oracle(Op::XorReduction, 4, &[0b0110], &o).unwrap(), 0);
    assert_eq!(oracle(Op::Min, 4, &[3, 5], &o).unwrap(), 3);
    assert_eq!(oracle(Op::Abs, 4, &[0b1000], &o).unwrap(), 0b1000);
    assert_eq!(oracle(Op::Bitcount, 4, &[0b1011], &o).unwrap(), 3);
    // -3 in 4 bits
    assert_eq!(oracle(Op::Relu, 4, &[0b1101], &o).unwrap(), 0);
    assert_eq!(oracle(Op::IfElse, 4, &[1, 9, 2], &o).unwrap(), 9);
    assert_eq!(oracle(Op::IfElse, 4, &[0, 9, 2], &o).unwrap(), 2);
    assert_eq!(oracle(Op::Division, 4, &[7, 0], &o).unwrap(), 15);
    let strict = OpOptions { strict_division: true, ..o };
    assert_eq!(oracle(Op::Division, 4, &[7, 0], &strict), Err(OpError::DivisionByZero));
    // -1 > 1 is false signed, true unsigned
    assert_eq!(oracle(Op::Greater, 4, &[15, 1], &o).unwrap(), 0);
    assert_eq!(oracle(Op::Greater, 4, &[15, 1], &OpOptions { unsigned: true, ..o }).unwrap(), 1);
    assert!(oracle(Op::Abs, 1, &[1], &o).is_err());
    assert!(oracle(Op::Addition, 4, &[1], &o).is_err());
}

#[test]
fn operation_table() {
    let ops = list_operations();
    assert_eq!(ops.len(), 16);
    let get = |n: &str| ops.iter().find(|s| s.name == n).unwrap().clone();
    assert_eq!(get("addition").class, ScalingClass::Linear);
    assert_eq!(get("division").class, ScalingClass::Quadratic);
    assert_eq!(get("multiplication").class, ScalingClass::Quadratic);
    for r in ["and_reduction", "or_reduction", "xor_reduction"] {
        assert_eq!(get(r).class, ScalingClass::Logarithmic);
        assert_eq!(get(r).op_type, OpType::Reduction);
    }
    assert_eq!(get("if_else").op_type, OpType::Predication);
    assert_eq!(get("greater_equal").op_type, OpType::Relational);
    assert_eq!(get("ReLU").op_type, OpType::Arithmetic);
    assert_eq!(metadata_table().lines().count(), 17);
}

fn sx(v: u64, n: u32) -> i64 {
    ((v << (64 - n)) as i64) >> (64 - n)
}

proptest! {
    #[test]
    fn addition_commutes(n in 1u32..=64, a: u64, b: u64) {
        let o = opts();
        prop_assert_eq!(oracle(Op::Addition, n, &[a, b], &o), oracle(Op::Addition, n, &[b, a], &o));
    }

    #[test]
    fn subtraction_is_addition_of_negation(n in 1u32..=64, a: u64, b: u64) {
        let o = opts();
        let m = if n == 64 { !0 } else { (1u64 << n) - 1 };
        let neg = (!(b & m)).wrapping_add(1) & m;
        prop_assert_eq!(oracle(Op::Subtraction, n, &[a, b], &o), oracle(Op::Addition, n, &[a, neg], &o));
    }

    #[test]
    fn max_not_below_min(n in 2u32..=64, a: u64, b: u64) {
        let o = opts();
        let hi = oracle(Op::Max, n, &[a, b], &o).unwrap();
        let lo = oracle(Op::Min, n, &[a, b], &o).unwrap();
        prop_assert!(sx(hi, n) >= sx(lo, n));
    }

    #[test]
    fn abs_non_negative_except_wrap(n in 2u32..=64, a: u64) {
        let m = if n == 64 { !0 } else { (1u64 << n) - 1 };
        let r = oracle(Op::Abs, n, &[a], &opts()).unwrap();
        let min = 1u64 << (n - 1);
        if a & m == min {
            prop_assert_eq!(r, min);
        } else {
            prop_assert!(sx(r, n) >= 0);
        }
    }

    #[test]
    fn xor_reduction_is_parity(n in 1u32..=64, a: u64) {
        let m = if n == 64 { !0 } else { (1u64 << n) - 1 };
        let r = oracle(Op::XorReduction, n, &[a], &opts()).unwrap();
        prop_assert_eq!(r, ((a & m).count_ones() % 2) as u64);
    }

    #[test]
    fn flattened_circuits_match_oracle_at_eight_bits(op_i in 0usize..16, a: u64, b: u64, s: u64) {
        let op = Op::ALL[op_i];
        let n = 8;
        let args = match op.roles().len() {
            1 => vec![a & 0xff],
            2 => vec![a & 0xff, b & 0xff],
            _ => vec![s & 1, a & 0xff, b & 0xff],
        };
        prop_assert_eq!(eval_full(op, n, &args, &opts()), oracle(op, n, &args, &opts()).unwrap());
    }
}
