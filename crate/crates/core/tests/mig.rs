// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simdram_core::mig::*;

fn asg(names: &[String], v: usize) -> HashMap<String, bool> {
    names.iter().enumerate().map(|(i, n)| (n.clone(), (v >> i) & 1 == 1)).collect()
}

/// Functional equality over the inputs of `a` (rewrites never add inputs).
fn same_function(a: &Mig, b: &Mig) -> bool {
    if a.input_names() == b.input_names() {
        return a.truth_tables() == b.truth_tables();
    }
    let names = a.input_names();
    (0..1usize << names.len()).all(|v| {
        let x = asg(&names, v);
        a.eval(&x).unwrap() == b.eval(&x).unwrap()
    })
}

fn fa_truth(m: &Mig) {
    let names = m.input_names();
    for v in 0..8usize {
        let x = asg(&names, v);
        let s = v.count_ones() as usize;
        assert_eq!(m.eval(&x).unwrap(), vec![s & 1 == 1, s >= 2], "{v:03b}");
    }
}

#[test]
fn gate_and_majority_definitions() {
    let mut g = Aoig::new();
    let a = g.input("a");
    let b = g.input("b");
    let y = g.and(a, b);
    let z = g.or(a, b.not());
    g.output(y);
    g.output(z);
    let h: HashMap<String, bool> = [("a".into(), true), ("b".into(), true)].into();
    assert_eq!(eval_aoig(&g, &h).unwrap(), vec![true, true]);
    let h: HashMap<String, bool> = [("a".into(), false), ("b".into(), true)].into();
    assert_eq!(eval_aoig(&g, &h).unwrap()[1], false);

    let m = Mig::parse("node 0 INPUT a\nnode 1 INPUT b\nnode 2 CONST0\nnode 3 MAJ 0 1 2\noutput 3\n").unwrap();
    for v in 0..4 {
        let x = asg(&m.input_names(), v);
        assert_eq!(m.eval(&x).unwrap()[0], v == 3);
    }
    let t = Mig::parse("node 0 CONST0\nnode 1 MAJ 0 0 0!\nnode 2 MAJ 0! 0! 0\noutput 1\noutput 2\n").unwrap();
    assert_eq!(t.eval(&HashMap::new()).unwrap(), vec![false, true]);
}

#[test]
fn naive_conversion() {
    let mut g = Aoig::new();
    let a = g.input("a");
    let b = g.input("b");
    let y = g.and(a, b);
    g.output(y);
    let m = naive_mig_from_aoig(&g).unwrap();
    assert_eq!(m.maj_count(), 1);

    let mut w = Aoig::new();
    let a = w.input("a");
    w.output(a.not());
    assert_eq!(naive_mig_from_aoig(&w).unwrap().maj_count(), 0);

    let fa = naive_mig_from_aoig(&full_adder_aoig()).unwrap();
    // one MAJ per AOIG gate
    assert_eq!(fa.maj_count(), full_adder_aoig().gate_count());
    fa_truth(&fa);
}

#[test]
fn majority_rule_examples() {
    let m = Mig::parse("node 0 INPUT x\nnode 1 INPUT z\nnode 2 MAJ 0 0 1\noutput 2\n").unwrap();
    let r = apply_rule(&m, &Application::MajorityReduce { node: 2, i: 0, j: 1 }).unwrap();
    assert_eq!(cleanup(&r).maj_count(), 0);
    assert_eq!(r.outputs()[0], r.input_lit("x").unwrap());

    let m = Mig::parse("node 0 INPUT x\nnode 1 INPUT z\nnode 2 MAJ 0 0! 1\noutput 2\n").unwrap();
    let r = apply_rule(&m, &Application::MajorityReduce { node: 2, i: 0, j: 1 }).unwrap();
    assert_eq!(r.outputs()[0], r.input_lit("z").unwrap());

    let m = Mig::parse("node 0 INPUT x\nnode 1 INPUT y\nnode 2 INPUT z\nnode 3 MAJ 0 1 2\noutput 3!\n").unwrap();
    let r = apply_rule(&m, &Application::Invert { node: 3 }).unwrap();
    assert!(same_function(&m, &r));
    let out = r.outputs()[0];
    assert!(!out.neg);
    assert!(r.maj_inputs(out.node).unwrap().iter().all(|l| l.neg));
}

#[test]
fn node_reduction_examples() {
    let naive = naive_mig_from_aoig(&full_adder_aoig()).unwrap();
    assert_eq!(node_reduction(&naive).maj_count(), naive.maj_count());

    let m = Mig::parse(
        "node 0 INPUT a\nnode 1 INPUT b\nnode 2 INPUT c\nnode 3 INPUT d\nnode 4 MAJ 0 0 1\nnode 5 MAJ 4 2 3\noutput 5\n",
    )
    .unwrap();
    let r = node_reduction(&m);
    assert_eq!(r.maj_count(), 1);
    let ins = r.maj_inputs(r.outputs()[0].node).unwrap();
    assert_eq!(ins, [r.input_lit("a").unwrap(), r.input_lit("c").unwrap(), r.input_lit("d").unwrap()]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let m = random_mig(&mut rng, 5, 8, 2);
        assert!(same_function(&m, &node_reduction(&m)));
    }
}

#[test]
fn every_rule_is_sound_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = HashMap::new();
    for _ in 0..1000 {
        let inputs = rng.gen_range(2..=10);
        let majs = rng.gen_range(1..=10);
        let outs = rng.gen_range(1..=3);
        let m = random_mig(&mut rng, inputs, majs, outs);
        for tag in RuleTag::ALL {
            for dir in [Direction::LeftToRight, Direction::RightToLeft] {
                let rule = RewriteRule { tag, dir };
                let sites = enumerate_sites(&m, rule);
                for _ in 0..sites.len().min(3) {
                    let app = &sites[rng.gen_range(0..sites.len())];
                    let r = apply_rule(&m, app).unwrap();
                    assert!(same_function(&m, &r), "{tag} {dir:?} {app:?}\n{}", m.to_text());
                    *checked.entry(tag).or_insert(0usize) += 1;
                }
            }
        }
    }
    for tag in RuleTag::ALL {
        assert!(checked.get(&tag).copied().unwrap_or(0) > 100, "{tag} rarely applicable: {checked:?}");
    }
}

#[test]
fn scripted_full_adder_derivation() {
    let naive = naive_mig_from_aoig(&full_adder_aoig()).unwrap();
    let steps = full_adder_script(&naive).unwrap();
    let graphs = replay(&naive, &steps).unwrap();
    for g in &graphs {
        assert!(same_function(&naive, g));
    }
    // inflation first, then reduction
    assert!(graphs.iter().map(|g| g.maj_count()).max().unwrap() > naive.maj_count());
    let last = cleanup(graphs.last().unwrap());
    assert_eq!(last.maj_count(), 3);
    fa_truth(&last);
}

#[test]
fn search_reaches_three_majorities() {
    let naive = naive_mig_from_aoig(&full_adder_aoig()).unwrap();
    let opt = optimize(&naive, DEFAULT_ITERATIONS, 0);
    assert_eq!(opt.maj_count(), 3);
    fa_truth(&opt);
    // deterministic for a fixed seed
    assert_eq!(opt.to_text(), optimize(&naive, DEFAULT_ITERATIONS, 0).to_text());
}

#[test]
fn reshape_and_optimize_edge_cases() {
    let m = Mig::parse("node 0 INPUT a\nnode 1 INPUT b\nnode 2 INPUT c\nnode 3 MAJ 0 1 2\noutput 3\n").unwrap();
    assert_eq!(reshape(&m, 0, 9).to_text(), m.to_text());
    assert_eq!(optimize(&m, DEFAULT_ITERATIONS, 1).maj_count(), 1);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in 0..20 {
        let m = random_mig(&mut rng, 4, 6, 1);
        let r = reshape(&m, DEFAULT_BUDGET, s);
        assert!(same_function(&m, &r));
        let o = optimize(&m, 2, s);
        assert!(same_function(&m, &o));
        assert!(cleanup(&o).maj_count() <= m.maj_count());
    }
}

#[test]
fn text_roundtrip_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let m = random_mig(&mut rng, 6, 12, 3);
        let t = m.to_text();
        assert_eq!(Mig::parse(&t).unwrap().to_text(), t);
    }
}
