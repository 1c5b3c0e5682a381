// SPDX-License-Identifier: Apache-2.0

use simdram_core::allocator::ComputeRow;
use simdram_core::corpus::*;
use simdram_core::curated::{curated_mig, curated_program};
use simdram_core::mig::Mig;
use simdram_core::oplib::*;
use simdram_core::uprogram::*;

#[test]
fn empty_inputs() {
    let p = generate_uprogram("none", &Mig::empty(), &Default::default(), &[], 4).unwrap();
    assert!(p.ops.is_empty());
    let r = count_report(&p);
    assert_eq!((r.aap, r.ap, r.total), (0, 0, 0));
    assert!(r.per_phase.is_empty());
}

#[test]
fn curated_counts_match_reference() {
    let o = OpOptions::default();
    for op in Op::ALL {
        if op == Op::Division {
            continue;
        }
        for n in [4, 8, 16, 32] {
            let t = curated_program(op, n, &o).unwrap().counts().total;
            let r = reference_count(op, n);
            assert!(r.admits(t), "{op} n={n}: {t} vs {r}");
        }
    }
    let total = |op, n| curated_program(op, n, &o).unwrap().counts().total;
    assert_eq!(total(Op::Addition, 4), 33);
    assert_eq!(total(Op::Addition, 8), 65);
    assert_eq!(total(Op::Equal, 8), 35);
    assert_eq!(total(Op::Multiplication, 4), 155);
}

#[test]
fn count_report_partitions_total() {
    for op in Op::ALL {
        let p = curated_program(op, 8, &OpOptions::default()).unwrap();
        let r = count_report(&p);
        assert_eq!(r.aap + r.ap, r.total);
        assert_eq!(r.per_phase.iter().map(|x| x.1).sum::<usize>(), r.total, "{op}");
    }
}

#[test]
fn classifier_on_reference_formulas() {
    let at = |f: &dyn Fn(u32) -> usize| -> Vec<(u32, usize)> { [4, 8, 16, 32].iter().map(|&n| (n, f(n))).collect() };
    assert_eq!(classify_scaling(&at(&|n| 8 * n as usize + 1)), Ok(ScalingClass::Linear));
    assert_eq!(
        classify_scaling(&at(&|n| { let n = n as usize; 11 * n * n - 5 * n - 1 })),
        Ok(ScalingClass::Quadratic)
    );
    assert_eq!(classify_scaling(&at(&|_| 5)), Ok(ScalingClass::Linear));
    assert!(classify_scaling(&[(4, 1), (8, 2)]).is_err());
    // odd widths expose the ⌊n/2⌋ shape
    let red: Vec<(u32, usize)> = [4, 5, 8, 9, 16, 17].iter().map(|&n| (n, 5 * (n as usize / 2) + 2)).collect();
    assert_eq!(classify_scaling(&red), Ok(ScalingClass::Logarithmic));
}

#[test]
fn text_format_examples() {
    let p = MicroProgram::decode("op t n 1\nAAP D:src1.0 T:T0\n").unwrap();
    assert_eq!(p.ops, vec![MicroOp::aap(RowSpec::d("src1", 0), RowSpec::row(ComputeRow::T0))]);
    let e = MicroProgram::decode("op t n 1\nAAP C0 T:T0\nAAQ C0 T:T1\n").unwrap_err();
    assert!(e.to_string().contains('3'), "{e}");
}

#[test]
fn corpus_is_current_and_well_formed() {
    let dir = corpus_dir();
    assert_eq!(diff_corpus(&dir).unwrap(), Vec::<String>::new());
    for (op, n, o) in corpus_entries() {
        let text = read_program_text(&dir, op, n, &o).unwrap();
        let p = MicroProgram::decode(&text).unwrap();
        assert_eq!(p.encode(), text, "{op} n={n}");
        check_read_before_write(&p).unwrap_or_else(|e| panic!("{op} n={n}: {e:?}"));
        check_phase_ordering(&p).unwrap_or_else(|e| panic!("{op} n={n}: {e:?}"));
    }
}

#[test]
fn static_checks_reject_bad_programs() {
    // TRA over a row nobody wrote in this phase
    let p = MicroProgram::decode("op t n 1\nPHASE 0\nAAP D:a.0 T:T0\nAAP D:b.0 T:T1\nAP TRA(T0,T1,T2)\n").unwrap();
    assert!(check_read_before_write(&p).is_err());
    let ok = MicroProgram::decode(
        "op t n 1\nPHASE 0\nAAP D:a.0 T:T0\nAAP D:b.0 T:T1\nAAP C0 T:T2\nAP TRA(T0,T1,T2)\nAAP T:T0 D:dst.0\n",
    )
    .unwrap();
    check_read_before_write(&ok).unwrap();
    check_phase_ordering(&ok).unwrap();
}

fn maj(a: bool, b: bool, c: bool) -> bool {
    (a & b) | (a & c) | (b & c)
}

/// Expected outputs of each hand MIG, inputs in file order.
fn slice_oracle(op: Op, x: &[bool]) -> Vec<bool> {
    match op {
        Op::Addition | Op::Bitcount => vec![x[0] ^ x[1] ^ x[2], maj(x[0], x[1], x[2])],
        Op::Subtraction => vec![x[0] ^ !x[1] ^ x[2], maj(x[0], !x[1], x[2])],
        Op::Greater | Op::GreaterEqual => vec![maj(x[0], !x[1], x[2]), maj(!x[0], x[1], x[2])],
        Op::Equal => vec![maj(!x[0], x[1], x[2]), maj(x[0], !x[1], x[3]), x[2] & x[3]],
        Op::IfElse => vec![if x[0] { x[1] } else { x[2] }],
        Op::Relu => vec![x[0] & !x[1]],
        Op::Abs => vec![x[0] ^ x[1], maj(x[0], x[1], x[2])],
        Op::Max => vec![maj(x[0], !x[1], x[2]), if x[3] { x[0] } else { x[1] }],
        Op::Min => vec![maj(x[1], !x[0], x[2]), if x[3] { x[0] } else { x[1] }],
        Op::Multiplication => {
            let pp = x[1] & x[2];
            vec![x[0] ^ pp ^ x[3], maj(x[0], pp, x[3])]
        }
        Op::AndReduction => vec![x[0] & x[1] & x[2]],
        Op::OrReduction => vec![x[0] | x[1] | x[2]],
        Op::XorReduction => vec![x[0] ^ x[1] ^ x[2]],
        Op::Division => {
            let cy = maj(x[0], !x[1], x[2]);
            vec![x[0] ^ !x[1] ^ x[2], cy, cy & x[3], if x[4] { x[5] } else { x[6] }]
        }
    }
}

#[test]
fn curated_migs_compute_their_slices() {
    for op in Op::ALL {
        let m = curated_mig(op);
        let names = m.input_names();
        for v in 0..1usize << names.len() {
            let bits: Vec<bool> = (0..names.len()).map(|i| (v >> i) & 1 == 1).collect();
            let a = names.iter().cloned().zip(bits.iter().copied()).collect();
            assert_eq!(m.eval(&a).unwrap(), slice_oracle(op, &bits), "{op} {v:b}");
        }
    }
}
