// SPDX-License-Identifier: Apache-2.0

use std::time::Instant;

use simdram_core::mig::eval_aoig;
use simdram_core::oplib::*;
use simdram_core::pipeline::*;
use simdram_core::uprogram::{check_phase_ordering, check_read_before_write};

fn cfg(mode: Mode) -> PipelineConfig {
    PipelineConfig { mode, ..Default::default() }
}

#[test]
fn every_op_matches_oracle_at_small_widths() {
    let t = Instant::now();
    for mode in [Mode::Curated, Mode::Generated] {
        for op in Op::ALL {
            for n in [2, 4] {
                let r = verify_operation(op, n, &cfg(mode)).unwrap();
                assert_eq!(r.mismatches, 0, "{mode} {op} n={n}: {:?}", r.first_counterexample);
                assert!(r.lane_independent, "{mode} {op} n={n}");
                assert!(r.lanes_checked > 0);
            }
        }
    }
    assert!(t.elapsed().as_secs() < 300);
}

#[test]
fn unsigned_relational_variants() {
    let c = PipelineConfig { opts: OpOptions { unsigned: true, ..Default::default() }, ..Default::default() };
    for op in [Op::Greater, Op::GreaterEqual] {
        for mode in [Mode::Curated, Mode::Generated] {
            let r = verify_operation(op, 4, &PipelineConfig { mode, ..c.clone() }).unwrap();
            assert_eq!(r.mismatches, 0, "{op} {mode}");
        }
    }
}

#[test]
fn wider_random_lanes() {
    for op in [Op::Addition, Op::Multiplication, Op::Division, Op::Bitcount, Op::Max] {
        let r = verify_operation(op, 12, &cfg(Mode::Generated)).unwrap();
        assert_eq!(r.exhaustive, op == Op::Bitcount);
        assert_eq!(r.mismatches, 0, "{op}");
    }
}

#[test]
fn run_examples() {
    let c = cfg(Mode::Curated);
    assert_eq!(run_operation(Op::Greater, 8, &[vec![5], vec![3]], &c).unwrap().outputs, vec![1]);
    // -3 in 4 bits
    assert_eq!(run_operation(Op::Relu, 4, &[vec![0b1101]], &c).unwrap().outputs, vec![0]);
    let (a, b): (Vec<u64>, Vec<u64>) = (0..256).map(|x| (x & 15, x >> 4)).unzip();
    let r = run_operation(Op::Multiplication, 4, &[a.clone(), b.clone()], &c).unwrap();
    for i in 0..256 {
        assert_eq!(r.outputs[i], (a[i] * b[i]) % 16);
    }
    assert_eq!(r.counts.total, 155);
    let r = run_operation(Op::IfElse, 4, &[vec![1, 0], vec![9, 9], vec![2, 2]], &c).unwrap();
    assert_eq!(r.outputs, vec![9, 2]);
}

#[test]
fn division_by_zero_lanes() {
    let strict = PipelineConfig { opts: OpOptions { strict_division: true, ..Default::default() }, ..Default::default() };
    let r = run_operation(Op::Division, 4, &[vec![7, 9], vec![2, 0]], &strict).unwrap();
    assert_eq!(r.outputs[0], 3);
    assert_eq!(r.lane_errors, vec![(1, OpError::DivisionByZero)]);
    let lax = run_operation(Op::Division, 4, &[vec![9], vec![0]], &cfg(Mode::Curated)).unwrap();
    assert!(lax.lane_errors.is_empty());
    assert_eq!(lax.outputs, vec![15]);
}

#[test]
fn input_errors() {
    let c = cfg(Mode::Curated);
    assert!(run_operation(Op::Addition, 4, &[vec![1]], &c).is_err());
    assert!(run_operation(Op::Addition, 4, &[vec![1, 2], vec![1]], &c).is_err());
    assert!(run_operation(Op::Addition, 4, &[vec![16], vec![1]], &c).is_err());
    let odd = PipelineConfig { lanes: Some(3), ..c };
    assert!(run_operation(Op::Addition, 4, &[vec![1], vec![1]], &odd).is_err());
    assert!(build_program(Op::Abs, 1, &cfg(Mode::Generated)).is_err());
}

#[test]
fn injected_fault_is_detected() {
    for mode in [Mode::Curated, Mode::Generated] {
        for op in [Op::Addition, Op::Equal, Op::XorReduction, Op::Max] {
            let c = cfg(mode);
            let p = build_program(op, 4, &c).unwrap();
            let site = last_dst_write(&p).unwrap();
            let r = verify_program(&p, op, 4, &c, Some(Fault { op_index: site })).unwrap();
            assert!(r.mismatches > 0, "{mode} {op}");
            assert!(r.first_counterexample.is_some());
        }
    }
}

#[test]
fn generated_programs_pass_static_checks() {
    for op in Op::ALL {
        for n in [2, 4, 8] {
            let p = build_program(op, n, &cfg(Mode::Generated)).unwrap();
            check_read_before_write(&p).unwrap_or_else(|e| panic!("{op} {n}: {e:?}"));
            check_phase_ordering(&p).unwrap_or_else(|e| panic!("{op} {n}: {e:?}"));
        }
    }
}

#[test]
fn generated_totals_within_twice_the_formula() {
    for op in Op::ALL {
        for (n, total) in scaling_points(op, &cfg(Mode::Generated)).unwrap() {
            let cap = match reference_count(op, n) {
                CountBound::Exact(v) => v,
                CountBound::Range { hi, .. } => hi,
            };
            assert!(total <= 2 * cap, "{op} n={n}: {total} > 2*{cap}");
        }
    }
}

#[test]
fn kernels_survive_merge_and_split() {
    let p = plan(Op::Division, 4, &OpOptions::default()).unwrap();
    let lib = kernel_library(&p, 2, 0).unwrap();
    let merged = merge_kernels(&lib);
    let back = split_kernels(&merged).unwrap();
    assert_eq!(back.keys().collect::<Vec<_>>(), lib.keys().collect::<Vec<_>>());
    for (k, m) in &lib {
        assert!(m.equivalent(&back[k]), "{k}");
    }
}

#[test]
fn synthesized_kernels_match_their_circuits() {
    for k in KERNELS {
        let (naive, opt) = synthesize_kernel(k, 2, 0).unwrap();
        assert!(naive.equivalent(&opt), "{k}");
        assert!(opt.maj_count() <= naive.maj_count());
        let g = kernel_aoig(k).unwrap();
        let names = naive.input_names();
        for v in 0..1usize << names.len() {
            let a = names.iter().enumerate().map(|(i, s)| (s.clone(), (v >> i) & 1 == 1)).collect();
            assert_eq!(eval_aoig(&g, &a).unwrap(), opt.eval(&a).unwrap(), "{k} {v:b}");
        }
    }
}
