//! Property tests for the invariants of each module, on small random digraphs.

use std::collections::BTreeSet;

use proptest::prelude::*;

use csplab_core::algebra::power_structure_alg;
use csplab_core::consistency::{
    arc_consistency, establish_lk_consistency, establish_with, power_structure, ConsistencyOptions, Schedule,
};
use csplab_core::datalog::{evaluate, evaluate_naive, replay_trace, DatalogProgram, Fact};
use csplab_core::generate::{digraphs_up_to, graphs_up_to_iso};
use csplab_core::homomorphism::{compute_core, find_homomorphism, hom_exists, is_core, is_homomorphism};
use csplab_core::mmsnp::{decide_by_obstructions, model_check, parse_mmsnp, TRIANGLE_PARTITION};
use csplab_core::pebble::{duplicator_wins, replay_spoiler_line, verify_strategy};
use csplab_core::programs::TC_PROGRAM;
use csplab_core::structure::{canonical_query, disjoint_union};
use csplab_core::template::restrict_class;
use csplab_core::treewidth::{find_decomposition, verify_decomposition, TreeDecomposition};
use csplab_core::{Structure, TemplateHandle};

fn digraph(max_n: usize) -> impl Strategy<Value = Structure> {
    (0..=max_n).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let edges: Vec<(usize, usize)> = (0..n * n)
                .filter(|&i| bits[i])
                .map(|i| (i / n, i % n))
                .collect();
            Structure::from_edges("E", n, &edges)
        })
    })
}

/// Loop-free digraphs with few edges; most stay satisfiable for the oracles.
fn sparse_digraph(max_n: usize) -> impl Strategy<Value = Structure> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..=n + 1).prop_map(move |pairs| {
            let edges: Vec<(usize, usize)> = pairs.into_iter().filter(|(a, b)| a != b).collect();
            Structure::from_edges("E", n, &edges)
        })
    })
}

fn templates() -> Vec<TemplateHandle> {
    vec![
        TemplateHandle::qorder_named("E"),
        TemplateHandle::henson(),
        TemplateHandle::finite(Structure::clique("E", 2)).unwrap(),
        TemplateHandle::finite(Structure::clique("E", 3)).unwrap(),
    ]
}

fn edge_set(s: &Structure) -> BTreeSet<(usize, usize)> {
    s.relation(0).iter().map(|t| (t[0], t[1])).collect()
}

fn all_facts(s: &Structure) -> BTreeSet<Fact> {
    s.facts()
        .map(|(symbol, t)| Fact {
            symbol,
            tuple: t.clone(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn found_homomorphisms_verify(a in digraph(4), b in digraph(3)) {
        if let Some(map) = find_homomorphism(&a, &b).unwrap() {
            prop_assert!(is_homomorphism(&a, &b, &map));
        }
    }

    #[test]
    fn cores_are_equivalent_cores(s in digraph(5)) {
        let c = compute_core(&s);
        prop_assert!(hom_exists(&s, &c).unwrap());
        prop_assert!(hom_exists(&c, &s).unwrap());
        prop_assert!(is_core(&c));
    }

    #[test]
    fn canonical_query_is_hom_existence(a in digraph(4), b in digraph(4)) {
        prop_assert_eq!(canonical_query(&a).holds_in(&b), hom_exists(&a, &b).unwrap());
    }

    #[test]
    fn disjoint_union_maps_iff_parts_map(a in digraph(3), b in digraph(3), c in digraph(3)) {
        let u = disjoint_union(&a, &b).unwrap();
        prop_assert_eq!(
            hom_exists(&u, &c).unwrap(),
            hom_exists(&a, &c).unwrap() && hom_exists(&b, &c).unwrap()
        );
    }

    #[test]
    fn naive_and_semi_naive_agree(s in digraph(5)) {
        let p = rename(&DatalogProgram::parse(TC_PROGRAM).unwrap());
        let semi = evaluate(&p, &s).unwrap();
        let naive = evaluate_naive(&p, &s).unwrap();
        prop_assert_eq!(all_facts(&semi.facts), all_facts(&naive.facts));
        let derived: BTreeSet<Fact> = all_facts(&semi.facts).difference(&all_facts(&s)).cloned().collect();
        prop_assert_eq!(replay_trace(&p, &s, &semi.trace).unwrap(), derived);
    }

    #[test]
    fn datalog_is_monotone(s in digraph(5), drop in prop::collection::vec(any::<bool>(), 25)) {
        let p = rename(&DatalogProgram::parse(TC_PROGRAM).unwrap());
        let kept: Vec<(usize, usize)> = edge_set(&s)
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !drop[*i % drop.len()])
            .map(|(_, e)| e)
            .collect();
        let sub = Structure::from_edges("E", s.size(), &kept);
        let small = all_facts(&evaluate(&p, &sub).unwrap().facts);
        let big = all_facts(&evaluate(&p, &s).unwrap().facts);
        prop_assert!(small.is_subset(&big));
    }

    #[test]
    fn tc_program_is_sound_for_qorder(s in digraph(5)) {
        let p = rename(&DatalogProgram::parse(TC_PROGRAM).unwrap());
        if evaluate(&p, &s).unwrap().derived_false() {
            prop_assert!(!TemplateHandle::qorder_named("E").decide_csp(&s).unwrap().satisfiable);
        }
    }

    #[test]
    fn henson_ignores_symmetric_duplicates(s in digraph(5)) {
        let t = TemplateHandle::henson();
        let mut sym = s.clone();
        for (a, b) in edge_set(&s) {
            sym.insert(0, vec![b, a]);
        }
        prop_assert_eq!(t.decide_csp(&s).unwrap().satisfiable, t.decide_csp(&sym).unwrap().satisfiable);
    }

    #[test]
    fn restriction_composes(which in 0usize..3, index in 0usize..64, p in prop::collection::vec(0usize..4, 1..4), q in prop::collection::vec(0usize..3, 1..4)) {
        let t = &templates()[which.min(2)];
        let classes = t.classes(4).unwrap();
        let c = &classes[index % classes.len()];
        let q: Vec<usize> = q.into_iter().map(|x| x % p.len()).collect();
        let composed: Vec<usize> = q.iter().map(|&i| p[i]).collect();
        prop_assert_eq!(restrict_class(&restrict_class(c, &p), &q), restrict_class(c, &composed));
    }

    #[test]
    fn consistency_is_sound_and_schedule_free(s in sparse_digraph(5), which in 0usize..4, wide in any::<bool>()) {
        let t = &templates()[which];
        let (l, k) = if wide { (2, 3) } else { (1, 2) };
        let fifo = establish_lk_consistency(&s, t, l, k).unwrap();
        let sweep = establish_with(&s, t, l, k, ConsistencyOptions { schedule: Schedule::Sweep, ..Default::default() }).unwrap();
        prop_assert_eq!(fifo.entries(), sweep.entries());
        prop_assert!(fifo.is_downward_closed());
        if fifo.failed() {
            prop_assert!(!t.decide_csp(&s).unwrap().satisfiable);
        }
    }

    #[test]
    fn game_certificates_check_out(s in sparse_digraph(5), which in 0usize..4) {
        let t = &templates()[which];
        let out = duplicator_wins(&s, t, 2, 3).unwrap();
        prop_assert!(out.strategy.is_some() != out.line.is_some());
        if let Some(f) = &out.strategy {
            prop_assert!(verify_strategy(f, &s, t));
        }
        if let Some(line) = &out.line {
            prop_assert!(replay_spoiler_line(line, &s, t));
        }
        if t.decide_csp(&s).unwrap().satisfiable {
            prop_assert!(out.wins);
        }
    }

    #[test]
    fn duplicator_wins_downward_along_homs(a in sparse_digraph(4), b in sparse_digraph(4), which in 0usize..4) {
        let t = &templates()[which];
        if hom_exists(&b, &a).unwrap() && duplicator_wins(&a, t, 1, 2).unwrap().wins {
            prop_assert!(duplicator_wins(&b, t, 1, 2).unwrap().wins);
        }
    }

    #[test]
    fn arc_consistency_is_hom_to_power_structure(s in digraph(4), which in 2usize..4) {
        let t = &templates()[which];
        let p = power_structure(t).unwrap();
        prop_assert_eq!(!arc_consistency(&s, t).unwrap().failed, hom_exists(&s, &p).unwrap());
    }

    #[test]
    fn model_check_is_antitone_in_facts(s in digraph(5), extra in prop::collection::vec((0usize..5, 0usize..5), 1..4)) {
        let phi = parse_mmsnp(TRIANGLE_PARTITION).unwrap();
        let n = s.size().max(1);
        let mut bigger = Structure::from_edges("E", n, &edge_set(&s).into_iter().collect::<Vec<_>>());
        let base = bigger.clone();
        for (a, b) in extra {
            bigger.insert(0, vec![a % n, b % n]);
        }
        if model_check(&phi, &bigger).unwrap() {
            prop_assert!(model_check(&phi, &base).unwrap());
        }
    }
}

fn rename(p: &DatalogProgram) -> DatalogProgram {
    csplab_core::xcheck::rename_edb(p, "edge", "E").unwrap()
}

#[test]
fn oracle_agrees_with_class_search() {
    for t in templates() {
        for s in digraphs_up_to("E", 4, true) {
            let by_oracle = t.decide_csp(&s).unwrap().satisfiable;
            let by_classes = t.solve_by_classes(&s).unwrap().is_some();
            assert_eq!(by_oracle, by_classes, "{} on\n{}", t.name(), s.to_text());
        }
    }
}

/// Set partitions of m points times triangle-free loop-free graphs on the blocks.
fn henson_types(m: usize) -> usize {
    fn bell_by_blocks(m: usize) -> Vec<usize> {
        // restricted growth strings counted by number of blocks
        let mut counts = vec![0; m + 1];
        let mut rgs = vec![0usize; m];
        loop {
            let blocks = rgs.iter().max().map_or(0, |x| x + 1);
            counts[if m == 0 { 0 } else { blocks }] += 1;
            let mut i = m;
            loop {
                if i <= 1 {
                    return counts;
                }
                i -= 1;
                let limit = rgs[..i].iter().max().copied().unwrap_or(0) + 1;
                if rgs[i] < limit {
                    rgs[i] += 1;
                    for x in &mut rgs[i + 1..] {
                        *x = 0;
                    }
                    break;
                }
            }
        }
    }
    fn triangle_free(b: usize) -> usize {
        let pairs: Vec<(usize, usize)> = (0..b).flat_map(|i| (i + 1..b).map(move |j| (i, j))).collect();
        (0u32..1 << pairs.len())
            .filter(|mask| {
                let has = |x: usize, y: usize| {
                    let i = pairs.iter().position(|&p| p == (x.min(y), x.max(y))).unwrap();
                    mask >> i & 1 == 1
                };
                !(0..b).any(|x| (x + 1..b).any(|y| (y + 1..b).any(|z| has(x, y) && has(y, z) && has(x, z))))
            })
            .count()
    }
    bell_by_blocks(m)
        .iter()
        .enumerate()
        .map(|(b, &count)| count * triangle_free(b))
        .sum()
}

#[test]
fn henson_class_counts() {
    let t = TemplateHandle::henson();
    for m in 1..=4 {
        assert_eq!(t.classes(m).unwrap().len(), henson_types(m), "m = {m}");
    }
}

#[test]
fn power_structures_are_arc_consistent_instances() {
    let k2 = TemplateHandle::finite(Structure::clique("E", 2)).unwrap();
    let implication = TemplateHandle::finite(
        Structure::parse("rel impl 2\nrel one 1\nrel zero 1\nimpl 0 0\nimpl 0 1\nimpl 1 1\none 1\nzero 0").unwrap(),
    )
    .unwrap();
    for t in [k2, implication] {
        let p = power_structure(&t).unwrap();
        assert!(!arc_consistency(&p, &t).unwrap().failed, "{}", p.to_text());
    }
}

#[test]
fn first_power_is_the_template() {
    let g = Structure::parse("rel R 3\nR a b c\nR b c a\nR a a a").unwrap();
    let t = TemplateHandle::finite(g.clone()).unwrap();
    let p = power_structure_alg(&t, 1).unwrap();
    assert_eq!(p.size(), g.size());
    assert_eq!(p.fact_count(), g.fact_count());
    assert!(hom_exists(&p, &g).unwrap() && hom_exists(&g, &p).unwrap());
}

#[test]
fn triangle_obstruction_matches_henson_consistency() {
    let henson = TemplateHandle::henson();
    let k3 = Structure::clique("E", 3);
    for n in 0..=5 {
        for g in graphs_up_to_iso("E", n, false) {
            let by_obs = decide_by_obstructions(std::slice::from_ref(&k3), &g).unwrap();
            let accepted = establish_lk_consistency(&g, &henson, 2, 3).unwrap().accepted();
            assert_eq!(by_obs, accepted, "{}", g.to_text());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// A random bag tree that verifies is a decomposition the search must find.
    #[test]
    fn random_bag_trees_never_beat_the_search(
        s in digraph(5),
        bags in prop::collection::vec((prop::collection::btree_set(0usize..5, 1..=3), 0usize..8), 1..6),
    ) {
        let n = s.size();
        let bags: Vec<(Vec<usize>, usize)> = bags
            .into_iter()
            .map(|(b, p)| (b.into_iter().filter(|&v| v < n).collect::<Vec<_>>(), p))
            .collect();
        let d = TreeDecomposition {
            l: 2,
            k: 3,
            bags: bags.iter().map(|(b, _)| b.clone()).collect(),
            parent: bags.iter().enumerate().map(|(i, &(_, p))| if i == 0 { None } else { Some(p % i) }).collect(),
        };
        if verify_decomposition(&d, &s) {
            prop_assert!(find_decomposition(&s, 2, 3).unwrap().is_some());
        }
    }
}
