use std::collections::{BTreeSet, HashMap};

use super::TreeDecomposition;
use crate::datalog::{DatalogProgram, DerivationStep, DerivationTrace, Fact, FALSE};
use crate::error::{Error, Result};
use crate::structure::Structure;

/// Most rule applications an unfolding may create.
pub const DEFAULT_UNFOLD_CAP: usize = 100_000;

/// A bounded-width structure unfolded from a derivation of `false`.
#[derive(Debug, Clone)]
pub struct Obstruction {
    pub structure: Structure,
    /// One bag per unfolded rule application.
    pub decomposition: TreeDecomposition,
    /// Image of every element in the instance the trace came from.
    pub homomorphism: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn add(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb.max(ra)] = ra.min(rb);
        }
    }
}

struct Expansion<'t> {
    step: &'t DerivationStep,
    head: Vec<usize>,
    parent: Option<usize>,
}

/// Unfolds the derivation of `false` into a tree-shaped structure: each rule
/// application gets fresh elements, identified with its parent only through
/// the head atom.
pub fn obstruction_from_trace(
    trace: &DerivationTrace,
    program: &DatalogProgram,
    instance: &Structure,
) -> Result<Obstruction> {
    obstruction_from_trace_capped(trace, program, instance, DEFAULT_UNFOLD_CAP)
}

pub fn obstruction_from_trace_capped(
    trace: &DerivationTrace,
    program: &DatalogProgram,
    instance: &Structure,
    cap: usize,
) -> Result<Obstruction> {
    if instance.signature() != program.edbs() {
        return Err(Error::SignatureMismatch("instance signature must equal the program's EDBs".into()));
    }
    let sig = program.full_signature();
    let false_sym = sig.index_of(FALSE).expect("programs declare false");
    let by_fact: HashMap<&Fact, &DerivationStep> = trace.steps.iter().map(|s| (&s.fact, s)).collect();
    let goal = Fact {
        symbol: false_sym,
        tuple: Vec::new(),
    };
    let Some(&root) = by_fact.get(&goal) else {
        return Err(Error::Precondition("trace does not derive false".into()));
    };
    let edb_count = program.edbs().len();

    let mut uf = UnionFind { parent: Vec::new() };
    let mut image: Vec<usize> = Vec::new();
    let mut raw_facts: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut raw_bags: Vec<Vec<usize>> = Vec::new();
    let mut parents: Vec<Option<usize>> = Vec::new();
    let mut stack = vec![Expansion {
        step: root,
        head: Vec::new(),
        parent: None,
    }];
    while let Some(ex) = stack.pop() {
        if raw_bags.len() >= cap {
            return Err(Error::CapExceeded(format!("unfolding exceeds {cap} rule applications")));
        }
        let rule = program
            .rules()
            .get(ex.step.rule)
            .ok_or_else(|| Error::Precondition("trace names an unknown rule".into()))?;
        let vars = rule.variables();
        if vars.len() != ex.step.assignment.len() || rule.body.len() != ex.step.body.len() {
            return Err(Error::Precondition("trace step does not match its rule".into()));
        }
        let fresh: Vec<usize> = ex
            .step
            .assignment
            .iter()
            .map(|&value| {
                image.push(value);
                uf.add()
            })
            .collect();
        let slot = |name: &String| vars.iter().position(|v| v == name).expect("rule variable");
        for (arg, &outer) in rule.head.args.iter().zip(&ex.head) {
            uf.union(fresh[slot(arg)], outer);
        }
        let me = raw_bags.len();
        raw_bags.push(fresh.clone());
        parents.push(ex.parent);
        for (atom, ground) in rule.body.iter().zip(&ex.step.body) {
            let args: Vec<usize> = atom.args.iter().map(|a| fresh[slot(a)]).collect();
            if ground.symbol < edb_count {
                raw_facts.push((ground.symbol, args));
            } else {
                let step = by_fact
                    .get(ground)
                    .ok_or_else(|| Error::Precondition("trace misses a body fact".into()))?;
                stack.push(Expansion {
                    step,
                    head: args,
                    parent: Some(me),
                });
            }
        }
    }

    let mut compact: HashMap<usize, usize> = HashMap::new();
    let mut homomorphism = Vec::new();
    for v in 0..image.len() {
        let r = uf.find(v);
        if image[r] != image[v] {
            return Err(Error::Precondition("trace identifies different instance elements".into()));
        }
        if let std::collections::hash_map::Entry::Vacant(e) = compact.entry(r) {
            e.insert(homomorphism.len());
            homomorphism.push(image[r]);
        }
    }
    let mut names = Vec::with_capacity(homomorphism.len());
    for (id, &img) in homomorphism.iter().enumerate() {
        names.push(format!("{}#{id}", instance.element(img)));
    }
    let mut structure = Structure::with_domain(program.edbs().clone(), &names);
    for (sym, args) in raw_facts {
        let tuple = args.iter().map(|&v| compact[&uf.find(v)]).collect();
        structure.insert(sym, tuple);
    }
    let bags: Vec<Vec<usize>> = raw_bags
        .iter()
        .map(|b| {
            b.iter()
                .map(|&v| compact[&uf.find(v)])
                .collect::<BTreeSet<usize>>()
                .into_iter()
                .collect()
        })
        .collect();
    let width = program.width();
    Ok(Obstruction {
        structure,
        decomposition: TreeDecomposition {
            l: width.l,
            k: width.k,
            bags,
            parent: parents,
        },
        homomorphism,
    })
}
