//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Oracles used here are written from scratch and share no code with the
//! library beyond structure construction.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use csplab_core::algebra::{
    find_nu_polymorphism, global_consistency_probe, OperationTable,
};
use csplab_core::consistency::{arc_consistency, establish_lk_consistency, power_structure};
use csplab_core::datalog::{evaluate, DatalogProgram};
use csplab_core::generate::{
    digraphs_up_to, digraphs_up_to_iso, graphs_up_to, graphs_up_to_iso, labelled_digraphs, labelled_variants, TreeSampler,
};
use csplab_core::homomorphism::{compute_core, hom_exists, is_homomorphism};
use csplab_core::mmsnp::{
    connectivity_report, decide_by_obstructions, model_check, obstruction_structures, parse_mmsnp,
    TRIANGLE_PARTITION,
};
use csplab_core::pebble::{duplicator_wins, replay_spoiler_line};
use csplab_core::programs::TC_PROGRAM;
use csplab_core::structure::disjoint_union;
use csplab_core::treewidth::{
    canonical_query_lk, evaluate_formula, find_decomposition, obstruction_from_trace, verify_decomposition,
};
use csplab_core::{Error, Structure, TemplateHandle};

type Outcome = Result<String, String>;

// ---------- independent oracles ----------

fn edges(s: &Structure) -> Vec<(usize, usize)> {
    s.relation(0).iter().map(|t| (t[0], t[1])).collect()
}

/// Kahn's algorithm: true when the digraph has no directed cycle (loops count).
fn acyclic(s: &Structure) -> bool {
    let n = s.size();
    let es = edges(s);
    let mut indeg = vec![0usize; n];
    for &(_, b) in &es {
        indeg[b] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut removed = 0;
    while let Some(v) = ready.pop() {
        removed += 1;
        for &(a, b) in &es {
            if a == v {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    ready.push(b);
                }
            }
        }
    }
    removed == n
}

/// Triangle-free and loop-free in the symmetric closure.
fn triangle_and_loop_free(s: &Structure) -> bool {
    let n = s.size();
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in edges(s) {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    for a in 0..n {
        if adj[a][a] {
            return false;
        }
        for b in a + 1..n {
            for c in b + 1..n {
                if adj[a][b] && adj[b][c] && adj[a][c] {
                    return false;
                }
            }
        }
    }
    true
}

/// Odometer over all maps from an n-set into an m-set.
fn all_maps(n: usize, m: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = if n == 0 { 1 } else { m.pow(n as u32) };
    (0..total).map(move |mut code| {
        (0..n)
            .map(|_| {
                let d = code % m.max(1);
                code /= m.max(1);
                d
            })
            .collect()
    })
}

/// Brute-force homomorphism existence over matching signatures.
fn brute_hom(a: &Structure, b: &Structure) -> bool {
    all_maps(a.size(), b.size()).any(|f| {
        (0..a.signature().len()).all(|r| a.relation(r).iter().all(|t| {
            let image: Vec<usize> = t.iter().map(|&x| f[x]).collect();
            b.holds(r, &image)
        }))
    })
}

/// Number of weak orders on m labelled points, by normalizing rank functions.
fn weak_orders(m: usize) -> usize {
    let mut seen = BTreeSet::new();
    for f in all_maps(m, m) {
        let values: BTreeSet<usize> = f.iter().copied().collect();
        let dense: Vec<usize> = f.iter().map(|v| values.range(..v).count()).collect();
        seen.insert(dense);
    }
    seen.len()
}

/// Is there a 2-colouring of the vertices with no monochromatic closed
/// walk x→y→z→x (as the clause body matches, variables may coincide)?
fn partition_exists(s: &Structure) -> bool {
    let n = s.size();
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in edges(s) {
        adj[a][b] = true;
    }
    (0u32..1 << n).any(|colour| {
        let c = |v: usize| colour >> v & 1;
        for x in 0..n {
            for y in 0..n {
                if !adj[x][y] || c(x) != c(y) {
                    continue;
                }
                for z in 0..n {
                    if adj[y][z] && adj[z][x] && c(z) == c(x) {
                        return false;
                    }
                }
            }
        }
        true
    })
}

fn is_polymorphism_brute(f: &OperationTable, t: &Structure) -> bool {
    let m = f.arity;
    for r in 0..t.signature().len() {
        let rows: Vec<&Vec<usize>> = t.relation(r).iter().collect();
        let arity = t.signature().arity(r);
        for pick in all_maps(m, rows.len()) {
            let image: Vec<usize> = (0..arity)
                .map(|pos| {
                    let args: Vec<usize> = pick.iter().map(|&row| rows[row][pos]).collect();
                    f.apply(&args)
                })
                .collect();
            if !t.holds(r, &image) {
                return false;
            }
        }
    }
    true
}

/// Every digraph (or graph) with at most `max_n` vertices, loops allowed, up
/// to isomorphism at the smaller sizes: loop-free representatives at `max_n`
/// carry every subset of loops, which reaches each class at least once.
fn complete_corpus(max_n: usize, symmetric: bool) -> Vec<Structure> {
    let (mut out, top) = if symmetric {
        (graphs_up_to("E", max_n - 1, true), graphs_up_to_iso("E", max_n, false))
    } else {
        (digraphs_up_to("E", max_n - 1, true), digraphs_up_to_iso("E", max_n, false))
    };
    for base in &top {
        for loops in 0u32..1 << max_n {
            let mut s = base.clone();
            for v in (0..max_n).filter(|v| loops >> v & 1 == 1) {
                s.insert(0, vec![v, v]);
            }
            out.push(s);
        }
    }
    out
}

fn finite(s: Structure) -> TemplateHandle {
    TemplateHandle::finite(s).expect("nonempty template")
}

fn check(ok: bool, pass: String, fail: String) -> Outcome {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

// ---------- criteria ----------

fn tc_fidelity() -> Outcome {
    let p = DatalogProgram::parse(TC_PROGRAM).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    let mut cyclic = 0;
    let mut total = 0;
    for s in labelled_digraphs("edge", 4, false) {
        total += 1;
        let derived = evaluate(&p, &s).map_err(|e| e.to_string())?.derived_false();
        let is_cyclic = !acyclic(&s);
        cyclic += usize::from(is_cyclic);
        mismatches += usize::from(derived != is_cyclic);
    }
    check(
        mismatches == 0 && total == 4096,
        format!("{total} digraphs, {cyclic} cyclic, 0 mismatches"),
        format!("{mismatches} mismatches over {total} digraphs"),
    )
}

fn pebble_regressions() -> Outcome {
    let c3 = Structure::directed_cycle("<", 3);
    let q = duplicator_wins(&c3, &TemplateHandle::qorder(), 1, 2).map_err(|e| e.to_string())?;
    if !q.wins {
        return Err("Spoiler wins (1,2) on C3 against qorder".into());
    }
    let mut paths = Structure::directed_path("<", 1);
    for len in 2..=5 {
        paths = disjoint_union(&paths, &Structure::directed_path("<", len)).map_err(|e| e.to_string())?;
    }
    let t = finite(paths);
    let out = duplicator_wins(&c3, &t, 1, 2).map_err(|e| e.to_string())?;
    let line = out.line.ok_or("Duplicator wins against the path union")?;
    let replays = replay_spoiler_line(&line, &c3, &t);
    check(
        !out.wins && line.length <= 5 && replays,
        format!("Duplicator wins vs qorder; Spoiler line of length {} replays", line.length),
        format!("line length {} replay {replays}", line.length),
    )
}

fn consistency_equals_game() -> Outcome {
    let k2 = finite(Structure::clique("E", 2));
    let k3 = finite(Structure::clique("E", 3));
    let templates = [
        ("qorder", TemplateHandle::qorder_named("E")),
        ("henson", TemplateHandle::henson()),
        ("K2", k2),
        ("K3", k3),
    ];
    let corpus = digraphs_up_to("E", 4, true);
    let mut runs = 0;
    let mut violations = Vec::new();
    for (l, k) in [(1, 2), (2, 3)] {
        for (name, t) in &templates {
            for (i, s) in corpus.iter().enumerate() {
                let accepted = establish_lk_consistency(s, t, l, k).map_err(|e| e.to_string())?.accepted();
                let wins = duplicator_wins(s, t, l, k).map_err(|e| e.to_string())?.wins;
                runs += 1;
                if accepted != wins {
                    violations.push(format!("{name} ({l},{k}) instance {i}"));
                }
            }
        }
    }
    check(
        violations.is_empty(),
        format!("{runs} runs over {} digraphs (loops allowed), 0 violations", corpus.len()),
        format!("{} violations, first {:?}", violations.len(), violations.first()),
    )
}

fn solvability() -> Outcome {
    let qorder = TemplateHandle::qorder_named("E");
    let digraphs = complete_corpus(5, false);
    let mut mismatches = 0;
    for s in &digraphs {
        let accepted = establish_lk_consistency(s, &qorder, 2, 3).map_err(|e| e.to_string())?.accepted();
        mismatches += usize::from(accepted != acyclic(s));
    }
    let henson = TemplateHandle::henson();
    let graphs = graphs_up_to("E", 5, true);
    for s in &graphs {
        let accepted = establish_lk_consistency(s, &henson, 2, 3).map_err(|e| e.to_string())?.accepted();
        mismatches += usize::from(accepted != triangle_and_loop_free(s));
    }
    let k4 = Structure::clique("E", 4);
    let k3 = finite(Structure::clique("E", 3));
    let control_accepts = establish_lk_consistency(&k4, &k3, 2, 3).map_err(|e| e.to_string())?.accepted();
    let control_refuses = !brute_hom(&k4, k3.as_finite().expect("finite"));
    check(
        mismatches == 0 && control_accepts && control_refuses,
        format!(
            "{} digraphs vs acyclicity, {} graphs vs triangle/loop, 0 mismatches; K3 control accepts K4",
            digraphs.len(),
            graphs.len()
        ),
        format!("{mismatches} mismatches; control accepts={control_accepts} refuses={control_refuses}"),
    )
}

fn bounded_treewidth() -> Outcome {
    let mut sampler = TreeSampler::new(20240611);
    let templates = [
        ("K2", finite(Structure::clique("E", 2))),
        ("K3", finite(Structure::clique("E", 3))),
        ("qorder", TemplateHandle::qorder_named("E")),
    ];
    let mut instances = 0;
    let mut mismatches = Vec::new();
    while instances < 240 {
        let n = 4 + sampler.uniform(5);
        let tree = sampler.partial_tree(n, 2, 3, 0.85);
        let directed = instances % 3 == 2;
        let s = if directed {
            Structure::from_edges("E", n, &sampler.orient(&tree))
        } else {
            Structure::undirected("E", n, &tree)
        };
        let core = compute_core(&s);
        let Some(d) = find_decomposition(&core, 2, 3).map_err(|e| e.to_string())? else {
            continue;
        };
        if !verify_decomposition(&d, &core) {
            continue;
        }
        instances += 1;
        for (name, t) in &templates {
            let accepted = establish_lk_consistency(&s, t, 2, 3).map_err(|e| e.to_string())?.accepted();
            let truth = match t.as_finite() {
                Some(g) => brute_hom(&s, g),
                None => acyclic(&s),
            };
            if accepted != truth {
                mismatches.push(format!("{name} on instance {instances}"));
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!("{instances} seeded partial (2,3)-trees x 3 templates, 0 mismatches"),
        format!("{} mismatches, first {:?}", mismatches.len(), mismatches.first()),
    )
}

fn arc_consistency_power_structure() -> Outcome {
    let k2 = finite(Structure::clique("E", 2));
    let p = power_structure(&k2).map_err(|e| e.to_string())?;
    let has_loop = edges(&p).iter().any(|&(a, b)| a == b);
    let maps = brute_hom(&p, k2.as_finite().expect("finite"));
    let c3 = Structure::undirected("E", 3, &[(0, 1), (1, 2), (2, 0)]);
    let false_accept = !arc_consistency(&c3, &k2).map_err(|e| e.to_string())?.failed
        && !brute_hom(&c3, k2.as_finite().expect("finite"));
    if !has_loop || maps || !false_accept {
        return Err(format!("K2 power: loop={has_loop} maps={maps} C3 false accept={false_accept}"));
    }

    let implication = Structure::parse(
        "rel impl 2\nrel one 1\nrel zero 1\nimpl 0 0\nimpl 0 1\nimpl 1 1\none 1\nzero 0",
    )
    .map_err(|e| e.to_string())?;
    let imp = finite(implication.clone());
    let ip = power_structure(&imp).map_err(|e| e.to_string())?;
    if !hom_exists(&ip, &implication).map_err(|e| e.to_string())? {
        return Err("implication power structure does not map back".into());
    }
    let mut checked = 0;
    let mut mismatches = 0;
    for base in digraphs_up_to("impl", 4, true) {
        for s in labelled_variants(&base, "impl", &["one", "zero"]) {
            let ac = !arc_consistency(&s, &imp).map_err(|e| e.to_string())?.failed;
            mismatches += usize::from(ac != brute_hom(&s, &implication));
            checked += 1;
        }
    }
    if mismatches > 0 {
        return Err(format!("AC disagrees with brute force on {mismatches} of {checked} implication instances"));
    }

    for t in [TemplateHandle::qorder(), TemplateHandle::henson()] {
        let o = power_structure(&t).map_err(|e| e.to_string())?;
        if !edges(&o).iter().any(|&(a, b)| a == b) {
            return Err(format!("{} orbit structure has no loop", t.name()));
        }
    }
    Ok(format!(
        "K2 power has a loop and no hom; C3 falsely accepted; implication AC exact on {checked} instances; orbit structures looped"
    ))
}

fn canonical_query_agreement() -> Outcome {
    let sources = digraphs_up_to("E", 4, true);
    let targets = digraphs_up_to("E", 3, true);
    let mut decomposable = 0;
    let mut evaluations = 0;
    let mut mismatches = 0;
    for s in &sources {
        let Some(d) = find_decomposition(s, 2, 3).map_err(|e| e.to_string())? else {
            continue;
        };
        decomposable += 1;
        let f = canonical_query_lk(s, &d).map_err(|e| e.to_string())?;
        if !f.within_budget() {
            return Err("canonical query exceeds its variable budget".into());
        }
        for b in &targets {
            evaluations += 1;
            mismatches += usize::from(evaluate_formula(&f, b) != brute_hom(s, b));
        }
    }
    check(
        mismatches == 0 && decomposable > 0,
        format!("{decomposable} decomposable sources x {} targets = {evaluations}, 0 mismatches", targets.len()),
        format!("{mismatches} mismatches of {evaluations}"),
    )
}

fn obstruction_extraction() -> Outcome {
    let p = DatalogProgram::parse(TC_PROGRAM).map_err(|e| e.to_string())?;
    let mut derivations = 0;
    let mut failures = 0;
    for s in labelled_digraphs("edge", 4, false) {
        let ev = evaluate(&p, &s).map_err(|e| e.to_string())?;
        if !ev.derived_false() {
            continue;
        }
        derivations += 1;
        let ob = obstruction_from_trace(&ev.trace, &p, &s).map_err(|e| e.to_string())?;
        let maps = is_homomorphism(&ob.structure, &s, &ob.homomorphism);
        let d = &ob.decomposition;
        let decomposes = d.l <= 2 && d.k <= 3 && verify_decomposition(d, &ob.structure);
        let rederives = evaluate(&p, &ob.structure).map_err(|e| e.to_string())?.derived_false();
        failures += usize::from(!(maps && decomposes && rederives));
    }
    check(
        failures == 0 && derivations > 0,
        format!("{derivations} false derivations, all obstructions pass the three checks"),
        format!("{failures} failures of {derivations}"),
    )
}

fn algebra() -> Outcome {
    let k2 = finite(Structure::clique("E", 2));
    let nu = find_nu_polymorphism(&k2, 3, &[0, 1])
        .map_err(|e| e.to_string())?
        .ok_or("no ternary NU for K2")?;
    if !nu.is_near_unanimity_on(&[0, 1]) || !is_polymorphism_brute(&nu, k2.as_finite().expect("finite")) {
        return Err("K2 NU fails the independent check".into());
    }
    let mut lin = Structure::with_domain(csplab_core::Signature::of(&[("R", 3)]), &["0", "1"]);
    for x in 0..2 {
        for y in 0..2 {
            lin.insert(0, vec![x, y, x ^ y]);
        }
    }
    let lin3 = finite(lin);
    for m in [3, 4] {
        if find_nu_polymorphism(&lin3, m, &[0, 1]).map_err(|e| e.to_string())?.is_some() {
            return Err(format!("3-LIN reported an NU of arity {m}"));
        }
    }

    let mut probed = 0;
    let mut refuted = 0;
    let cases = [
        (TemplateHandle::qorder_named("E"), complete_corpus(5, false)),
        (TemplateHandle::henson(), complete_corpus(5, false)),
    ];
    for (t, corpus) in &cases {
        for s in corpus {
            match global_consistency_probe(s, t, 2, 3) {
                Ok(r) => {
                    probed += 1;
                    if let Some(c) = r.counterexample {
                        return Err(format!("{} probe counterexample on {:?}", t.name(), c.variables));
                    }
                }
                Err(Error::Precondition(_)) => refuted += 1,
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    let inst = Structure::parse("rel R 3\nR a b c\nR a b d").map_err(|e| e.to_string())?;
    let r = global_consistency_probe(&inst, &lin3, 2, 3).map_err(|e| e.to_string())?;
    check(
        r.counterexample.is_some() && r.verified,
        format!("K2 majority found; 3-LIN has no NU at 3,4; {probed} oracle probes clean ({refuted} refuted); 3-LIN counterexample verified"),
        "3-LIN probe found no verified counterexample".into(),
    )
}

fn mmsnp() -> Outcome {
    let phi = parse_mmsnp(TRIANGLE_PARTITION).map_err(|e| e.to_string())?;
    let graphs = complete_corpus(6, true);
    let mut mismatches = 0;
    for g in &graphs {
        mismatches += usize::from(model_check(&phi, g).map_err(|e| e.to_string())? != partition_exists(g));
    }
    let k5 = Structure::clique("E", 5);
    let k6 = Structure::clique("E", 6);
    let on_k5 = model_check(&phi, &k5).map_err(|e| e.to_string())?;
    let on_k6 = model_check(&phi, &k6).map_err(|e| e.to_string())?;
    // Stated values: true on K5, false on K6. Any 2-partition of five
    // vertices has a part of size three, a triangle in K5, so the partition
    // search also refutes K5 and the K5 value cannot be met.
    let k5_by_search = partition_exists(&k5);
    let cliques_ok = on_k5 && !on_k6 && !partition_exists(&k6);
    let obs = obstruction_structures(&phi);
    let connected = obs.structures.len() == 2 && connectivity_report(&obs).iter().all(|&c| c);

    let triangle = Structure::clique("E", 3);
    let self_loop = Structure::from_edges("E", 1, &[(0, 0)]);
    let n = [triangle, self_loop];
    let henson = TemplateHandle::henson();
    let small = graphs_up_to("E", 5, true);
    let mut duality = 0;
    for g in &small {
        let by_obs = decide_by_obstructions(&n, g).map_err(|e| e.to_string())?;
        duality += usize::from(by_obs != henson.decide_csp(g).map_err(|e| e.to_string())?.satisfiable);
    }
    check(
        mismatches == 0 && cliques_ok && connected && duality == 0,
        format!(
            "{} graphs match partition search; K5={on_k5} K6={on_k6}; obstructions connected; duality exact on {}",
            graphs.len(),
            small.len()
        ),
        format!(
            "expected K5=true K6=false, got K5={on_k5} K6={on_k6} (partition search on K5: {k5_by_search}); \
             {} graphs with {mismatches} mismatches; connected={connected}; duality mismatches={duality}",
            graphs.len()
        ),
    )
}

fn enumeration() -> Outcome {
    let t = TemplateHandle::qorder();
    let expected = [1, 3, 13, 75];
    let mut counts = Vec::new();
    for m in 1..=4 {
        let brute = weak_orders(m);
        let library = t.classes(m).map_err(|e| e.to_string())?.len();
        if brute != expected[m - 1] || library != brute {
            return Err(format!("m={m}: library {library}, brute force {brute}"));
        }
        counts.push(library);
    }
    Ok(format!("qorder class counts {counts:?} match brute-force weak orders"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("enumeration sanity", enumeration),
        ("TC program fidelity", tc_fidelity),
        ("pebble game regressions", pebble_regressions),
        ("consistency equals pebble game", consistency_equals_game),
        ("solvability of qorder and henson", solvability),
        ("bounded treewidth instances", bounded_treewidth),
        ("arc consistency and power structures", arc_consistency_power_structure),
        ("canonical bounded-variable query", canonical_query_agreement),
        ("obstruction extraction", obstruction_extraction),
        ("algebra", algebra),
        ("MMSNP", mmsnp),
    ];
    // criterion numbers follow the acceptance list; enumeration runs first
    let numbers = [11, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
    let mut failed = 0;
    for ((name, f), number) in criteria.iter().zip(numbers) {
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{number:>2}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{number:>2}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
