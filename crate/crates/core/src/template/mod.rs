//! CSP templates: explicit finite structures and two orbit-type oracles, the
//! dense linear order and the universal triangle-free graph.
//!
//! Every template exposes the same interface over [`AssignmentClass`]es, so the
//! consistency and pebble engines never touch template elements directly.

mod henson;
mod order;
mod space;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homomorphism::find_homomorphism;
use crate::structure::{Signature, Structure};

pub use space::ClassSpace;

/// Default bound on the arity of enumerated classes.
pub const DEFAULT_CLASS_CAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateKind {
    Finite(Structure),
    /// The rationals with their strict order.
    QOrder,
    /// The universal homogeneous triangle-free graph.
    Henson,
}

/// An orbit of m-tuples of template elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignmentClass {
    /// Finite templates: the tuple itself (element indices).
    Tuple { values: Vec<usize> },
    /// Dense order: rank of each position, ranks dense from 0.
    Order { ranks: Vec<u8> },
    /// Triangle-free graph: block of each position (restricted growth string)
    /// and the sorted edges between blocks.
    Graph { blocks: Vec<u8>, edges: Vec<(u8, u8)> },
}

impl AssignmentClass {
    pub fn arity(&self) -> usize {
        match self {
            AssignmentClass::Tuple { values } => values.len(),
            AssignmentClass::Order { ranks } => ranks.len(),
            AssignmentClass::Graph { blocks, .. } => blocks.len(),
        }
    }

    /// The class of the sub-tuple at `positions` (repeats allowed).
    pub fn restrict(&self, positions: &[usize]) -> AssignmentClass {
        match self {
            AssignmentClass::Tuple { values } => AssignmentClass::Tuple {
                values: positions.iter().map(|&p| values[p]).collect(),
            },
            AssignmentClass::Order { ranks } => AssignmentClass::Order {
                ranks: order::restrict(ranks, positions),
            },
            AssignmentClass::Graph { blocks, edges } => {
                let (blocks, edges) = henson::restrict(blocks, edges, positions);
                AssignmentClass::Graph { blocks, edges }
            }
        }
    }

    /// Whether positions `i` and `j` carry the same template element.
    pub fn same(&self, i: usize, j: usize) -> bool {
        match self {
            AssignmentClass::Tuple { values } => values[i] == values[j],
            AssignmentClass::Order { ranks } => ranks[i] == ranks[j],
            AssignmentClass::Graph { blocks, .. } => blocks[i] == blocks[j],
        }
    }
}

/// Free-function form of [`AssignmentClass::restrict`].
pub fn restrict_class(c: &AssignmentClass, positions: &[usize]) -> AssignmentClass {
    c.restrict(positions)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    /// Finite templates: a homomorphism, by instance element.
    Map { map: Vec<usize> },
    /// Dense order: instance elements listed in a compatible order.
    TopologicalOrder { order: Vec<usize> },
    /// Dense order: a directed cycle `c0 < c1 < … < c0`.
    Cycle { cycle: Vec<usize> },
    /// Triangle-free graph: an element with an edge to itself.
    Loop { element: usize },
    Triangle { elements: [usize; 3] },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleDecision {
    pub satisfiable: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateHandle {
    kind: TemplateKind,
    signature: Signature,
    class_cap: usize,
}

impl TemplateHandle {
    pub fn finite(s: Structure) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Precondition("finite template must be nonempty".into()));
        }
        Ok(TemplateHandle {
            signature: s.signature().clone(),
            kind: TemplateKind::Finite(s),
            class_cap: DEFAULT_CLASS_CAP,
        })
    }

    pub fn qorder() -> Self {
        Self::qorder_named("<")
    }

    pub fn qorder_named(symbol: &str) -> Self {
        TemplateHandle {
            kind: TemplateKind::QOrder,
            signature: Signature::of(&[(symbol, 2)]),
            class_cap: DEFAULT_CLASS_CAP,
        }
    }

    pub fn henson() -> Self {
        Self::henson_named("E")
    }

    pub fn henson_named(symbol: &str) -> Self {
        TemplateHandle {
            kind: TemplateKind::Henson,
            signature: Signature::of(&[(symbol, 2)]),
            class_cap: DEFAULT_CLASS_CAP,
        }
    }

    pub fn with_class_cap(mut self, cap: usize) -> Self {
        self.class_cap = cap;
        self
    }

    pub fn kind(&self) -> &TemplateKind {
        &self.kind
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn class_cap(&self) -> usize {
        self.class_cap
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TemplateKind::Finite(_) => "finite",
            TemplateKind::QOrder => "qorder",
            TemplateKind::Henson => "henson",
        }
    }

    pub fn as_finite(&self) -> Option<&Structure> {
        match &self.kind {
            TemplateKind::Finite(s) => Some(s),
            _ => None,
        }
    }

    /// The same template with its single binary symbol renamed (oracle kinds only).
    pub fn renamed(&self, symbol: &str) -> Result<Self> {
        match self.kind {
            TemplateKind::QOrder => Ok(Self::qorder_named(symbol).with_class_cap(self.class_cap)),
            TemplateKind::Henson => Ok(Self::henson_named(symbol).with_class_cap(self.class_cap)),
            TemplateKind::Finite(_) => Err(Error::Unsupported(
                "finite templates keep their own signature".into(),
            )),
        }
    }

    /// All classes of arity `m`, in a fixed order.
    pub fn classes(&self, m: usize) -> Result<Vec<AssignmentClass>> {
        if m > self.class_cap {
            return Err(Error::CapExceeded(format!(
                "classes of arity {m} requested, cap is {}",
                self.class_cap
            )));
        }
        Ok(self.classes_uncapped(m))
    }

    pub(crate) fn classes_uncapped(&self, m: usize) -> Vec<AssignmentClass> {
        match &self.kind {
            TemplateKind::Finite(s) => {
                let d = s.size();
                let total = d.pow(m as u32);
                (0..total)
                    .map(|mut code| {
                        let mut values = vec![0; m];
                        for slot in values.iter_mut().rev() {
                            *slot = code % d;
                            code /= d;
                        }
                        AssignmentClass::Tuple { values }
                    })
                    .collect()
            }
            TemplateKind::QOrder => order::weak_orders(m)
                .into_iter()
                .map(|ranks| AssignmentClass::Order { ranks })
                .collect(),
            TemplateKind::Henson => henson::classes(m)
                .into_iter()
                .map(|(blocks, edges)| AssignmentClass::Graph { blocks, edges })
                .collect(),
        }
    }

    /// Classes on one more position whose restriction to the old positions is `c`.
    pub fn extend(&self, c: &AssignmentClass) -> Vec<AssignmentClass> {
        match (&self.kind, c) {
            (TemplateKind::Finite(s), AssignmentClass::Tuple { values }) => (0..s.size())
                .map(|v| {
                    let mut next = values.clone();
                    next.push(v);
                    AssignmentClass::Tuple { values: next }
                })
                .collect(),
            (TemplateKind::QOrder, AssignmentClass::Order { ranks }) => order::extend(ranks)
                .into_iter()
                .map(|ranks| AssignmentClass::Order { ranks })
                .collect(),
            (TemplateKind::Henson, AssignmentClass::Graph { blocks, edges }) => {
                henson::extend(blocks, edges)
                    .into_iter()
                    .map(|(blocks, edges)| AssignmentClass::Graph { blocks, edges })
                    .collect()
            }
            _ => panic!("class does not belong to this template"),
        }
    }

    /// The class of arity 0.
    pub fn empty_class(&self) -> AssignmentClass {
        match self.kind {
            TemplateKind::Finite(_) => AssignmentClass::Tuple { values: vec![] },
            TemplateKind::QOrder => AssignmentClass::Order { ranks: vec![] },
            TemplateKind::Henson => AssignmentClass::Graph {
                blocks: vec![],
                edges: vec![],
            },
        }
    }

    /// Whether relation `symbol` holds on a tuple of class `c`.
    pub fn class_holds(&self, symbol: usize, c: &AssignmentClass) -> bool {
        debug_assert_eq!(c.arity(), self.signature.arity(symbol));
        match (&self.kind, c) {
            (TemplateKind::Finite(s), AssignmentClass::Tuple { values }) => s.holds(symbol, values),
            (TemplateKind::QOrder, AssignmentClass::Order { ranks }) => ranks[0] < ranks[1],
            (TemplateKind::Henson, AssignmentClass::Graph { blocks, edges }) => {
                let (a, b) = (blocks[0], blocks[1]);
                a != b && edges.contains(&(a.min(b), a.max(b)))
            }
            _ => panic!("class does not belong to this template"),
        }
    }

    /// Whether `symbol` holds on the sub-tuple of `c` at `positions`.
    pub fn holds_at(&self, symbol: usize, c: &AssignmentClass, positions: &[usize]) -> bool {
        self.class_holds(symbol, &c.restrict(positions))
    }

    /// Finite templates only: the class carrying `tuple`.
    pub fn class_of_assignment(&self, arity: usize, tuple: &[usize]) -> Result<AssignmentClass> {
        let s = self.as_finite().ok_or_else(|| {
            Error::Unsupported("concrete assignments exist only for finite templates".into())
        })?;
        if tuple.len() != arity {
            return Err(Error::Precondition(format!(
                "tuple has {} entries, expected {arity}",
                tuple.len()
            )));
        }
        if tuple.iter().any(|&v| v >= s.size()) {
            return Err(Error::Precondition("tuple entry outside the template domain".into()));
        }
        Ok(AssignmentClass::Tuple {
            values: tuple.to_vec(),
        })
    }

    /// Human-readable rendering of a class.
    pub fn describe(&self, c: &AssignmentClass) -> String {
        match (&self.kind, c) {
            (TemplateKind::Finite(s), AssignmentClass::Tuple { values }) => {
                let names: Vec<&str> = values.iter().map(|&v| s.element(v)).collect();
                format!("({})", names.join(","))
            }
            (_, AssignmentClass::Order { ranks }) => {
                let top = ranks.iter().copied().max().map_or(0, |r| r + 1);
                let groups: Vec<String> = (0..top)
                    .map(|r| {
                        let pos: Vec<String> = ranks
                            .iter()
                            .enumerate()
                            .filter(|(_, &x)| x == r)
                            .map(|(i, _)| i.to_string())
                            .collect();
                        pos.join("=")
                    })
                    .collect();
                if groups.is_empty() {
                    "()".into()
                } else {
                    groups.join("<")
                }
            }
            (_, AssignmentClass::Graph { blocks, edges }) => {
                let b = henson::block_count(blocks);
                let parts: Vec<String> = (0..b as u8)
                    .map(|k| {
                        let pos: Vec<String> = blocks
                            .iter()
                            .enumerate()
                            .filter(|(_, &x)| x == k)
                            .map(|(i, _)| i.to_string())
                            .collect();
                        format!("[{}]", pos.join(" "))
                    })
                    .collect();
                let es: Vec<String> = edges.iter().map(|(x, y)| format!("{x}-{y}")).collect();
                format!("{}{{{}}}", parts.join(""), es.join(","))
            }
            _ => format!("{c:?}"),
        }
    }

    fn check_instance(&self, instance: &Structure) -> Result<()> {
        if instance.signature() != &self.signature {
            return Err(Error::SignatureMismatch(format!(
                "instance signature does not match the {} template",
                self.name()
            )));
        }
        Ok(())
    }

    /// Ground-truth CSP decision.
    pub fn decide_csp(&self, instance: &Structure) -> Result<OracleDecision> {
        self.check_instance(instance)?;
        Ok(match &self.kind {
            TemplateKind::Finite(s) => {
                let map = find_homomorphism(instance, s)?;
                OracleDecision {
                    satisfiable: map.is_some(),
                    witness: map.map(|map| Witness::Map { map }),
                }
            }
            TemplateKind::QOrder => decide_order(instance),
            TemplateKind::Henson => decide_triangle_free(instance),
        })
    }

    /// Satisfiability by depth-first search over classes on all instance
    /// elements. Independent of [`TemplateHandle::decide_csp`].
    pub fn solve_by_classes(&self, instance: &Structure) -> Result<Option<AssignmentClass>> {
        self.check_instance(instance)?;
        let facts: Vec<(usize, Vec<usize>)> = instance.facts().map(|(s, t)| (s, t.clone())).collect();
        for (s, t) in &facts {
            if t.is_empty() && !self.class_holds(*s, &self.empty_class()) {
                return Ok(None);
            }
        }
        // facts become checkable once their largest element is placed
        let mut due: Vec<Vec<usize>> = vec![Vec::new(); instance.size()];
        for (i, (_, t)) in facts.iter().enumerate() {
            if let Some(&m) = t.iter().max() {
                due[m].push(i);
            }
        }
        fn dfs(
            t: &TemplateHandle,
            c: AssignmentClass,
            n: usize,
            facts: &[(usize, Vec<usize>)],
            due: &[Vec<usize>],
        ) -> Option<AssignmentClass> {
            let i = c.arity();
            if i == n {
                return Some(c);
            }
            for next in t.extend(&c) {
                if due[i].iter().all(|&f| t.holds_at(facts[f].0, &next, &facts[f].1)) {
                    if let Some(done) = dfs(t, next, n, facts, due) {
                        return Some(done);
                    }
                }
            }
            None
        }
        Ok(dfs(self, self.empty_class(), instance.size(), &facts, &due))
    }
}

impl fmt::Display for TemplateHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TemplateKind::Finite(s) => write!(f, "finite({} elements)", s.size()),
            _ => write!(f, "{}", self.name()),
        }
    }
}

fn binary_edges(instance: &Structure) -> Vec<(usize, usize)> {
    instance.relation(0).iter().map(|t| (t[0], t[1])).collect()
}

fn decide_order(instance: &Structure) -> OracleDecision {
    let n = instance.size();
    let edges = binary_edges(instance);
    if let Some(&(a, _)) = edges.iter().find(|(a, b)| a == b) {
        return OracleDecision {
            satisfiable: false,
            witness: Some(Witness::Cycle { cycle: vec![a] }),
        };
    }
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for &(a, b) in &edges {
        indeg[b] += 1;
        succ[a].push(b);
        pred[b].push(a);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    if order.len() == n {
        return OracleDecision {
            satisfiable: true,
            witness: Some(Witness::TopologicalOrder { order }),
        };
    }
    // every unplaced vertex has an unplaced predecessor; walk back until a repeat
    let placed: BTreeSet<usize> = order.into_iter().collect();
    let start = (0..n).find(|v| !placed.contains(v)).expect("some vertex unplaced");
    let mut walk = vec![start];
    let mut v = start;
    loop {
        v = *pred[v]
            .iter()
            .find(|p| !placed.contains(p))
            .expect("unplaced vertex has an unplaced predecessor");
        if let Some(pos) = walk.iter().position(|&w| w == v) {
            let mut cycle: Vec<usize> = walk[pos..].to_vec();
            cycle.reverse();
            return OracleDecision {
                satisfiable: false,
                witness: Some(Witness::Cycle { cycle }),
            };
        }
        walk.push(v);
    }
}

fn decide_triangle_free(instance: &Structure) -> OracleDecision {
    let n = instance.size();
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in binary_edges(instance) {
        if a == b {
            return OracleDecision {
                satisfiable: false,
                witness: Some(Witness::Loop { element: a }),
            };
        }
        adj[a][b] = true;
        adj[b][a] = true;
    }
    for x in 0..n {
        for y in x + 1..n {
            if !adj[x][y] {
                continue;
            }
            for z in y + 1..n {
                if adj[x][z] && adj[y][z] {
                    return OracleDecision {
                        satisfiable: false,
                        witness: Some(Witness::Triangle { elements: [x, y, z] }),
                    };
                }
            }
        }
    }
    OracleDecision {
        satisfiable: true,
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(n: usize) -> TemplateHandle {
        TemplateHandle::finite(Structure::clique("E", n)).unwrap()
    }

    #[test]
    fn class_counts() {
        let q = TemplateHandle::qorder();
        assert_eq!(q.classes(2).unwrap().len(), 3);
        assert_eq!(q.classes(3).unwrap().len(), 13);
        assert_eq!(TemplateHandle::henson().classes(1).unwrap().len(), 1);
        assert_eq!(k(3).classes(2).unwrap().len(), 9);
        assert!(q.classes(5).is_err());
        assert_eq!(q.clone().with_class_cap(5).classes(5).unwrap().len(), 541);
    }

    #[test]
    fn restrictions() {
        let xyz = AssignmentClass::Order { ranks: vec![0, 1, 2] };
        assert_eq!(xyz.restrict(&[0, 2]), AssignmentClass::Order { ranks: vec![0, 1] });
        assert_eq!(xyz.restrict(&[0, 1, 2]), xyz);
        let edge = AssignmentClass::Graph {
            blocks: vec![0, 1],
            edges: vec![(0, 1)],
        };
        assert_eq!(
            edge.restrict(&[0]),
            AssignmentClass::Graph {
                blocks: vec![0],
                edges: vec![]
            }
        );
    }

    #[test]
    fn atomic_relations() {
        let q = TemplateHandle::qorder();
        assert!(!q.class_holds(0, &AssignmentClass::Order { ranks: vec![0, 0] }));
        assert!(q.class_holds(0, &AssignmentClass::Order { ranks: vec![0, 1] }));
        assert!(!q.class_holds(0, &AssignmentClass::Order { ranks: vec![1, 0] }));
        let h = TemplateHandle::henson();
        let edge = AssignmentClass::Graph {
            blocks: vec![0, 1],
            edges: vec![(0, 1)],
        };
        assert!(h.class_holds(0, &edge));
        assert!(!h.class_holds(0, &AssignmentClass::Graph { blocks: vec![0, 1], edges: vec![] }));
    }

    #[test]
    fn oracle_decisions() {
        let q = TemplateHandle::qorder_named("E");
        let c3 = Structure::directed_cycle("E", 3);
        let d = q.decide_csp(&c3).unwrap();
        assert!(!d.satisfiable);
        assert!(matches!(d.witness, Some(Witness::Cycle { ref cycle }) if cycle.len() == 3));
        let dag = Structure::from_edges("E", 4, &[(2, 0), (0, 1), (2, 3)]);
        let d = q.decide_csp(&dag).unwrap();
        assert_eq!(d.witness, Some(Witness::TopologicalOrder { order: vec![2, 0, 1, 3] }));
        let h = TemplateHandle::henson();
        let d = h.decide_csp(&Structure::clique("E", 3)).unwrap();
        assert_eq!(d.witness, Some(Witness::Triangle { elements: [0, 1, 2] }));
        let d = h.decide_csp(&Structure::from_edges("E", 1, &[(0, 0)])).unwrap();
        assert!(!d.satisfiable);
    }

    #[test]
    fn cycle_witness_is_a_cycle() {
        let q = TemplateHandle::qorder_named("E");
        let g = Structure::from_edges("E", 5, &[(0, 1), (1, 2), (2, 3), (3, 1), (4, 0)]);
        let Some(Witness::Cycle { cycle }) = q.decide_csp(&g).unwrap().witness else {
            panic!("expected a cycle");
        };
        for i in 0..cycle.len() {
            assert!(g.holds(0, &[cycle[i], cycle[(i + 1) % cycle.len()]]));
        }
    }

    #[test]
    fn finite_assignments() {
        let t = k(2);
        assert_eq!(
            t.class_of_assignment(2, &[0, 1]).unwrap(),
            AssignmentClass::Tuple { values: vec![0, 1] }
        );
        assert!(t.class_of_assignment(2, &[0, 0]).is_ok());
        assert!(t.class_of_assignment(3, &[0, 1]).is_err());
        assert!(TemplateHandle::qorder().class_of_assignment(1, &[0]).is_err());
    }

    #[test]
    fn class_search_matches_oracle_on_small_cases() {
        let q = TemplateHandle::qorder_named("E");
        assert!(q.solve_by_classes(&Structure::directed_cycle("E", 3)).unwrap().is_none());
        assert!(q.solve_by_classes(&Structure::directed_path("E", 3)).unwrap().is_some());
        let h = TemplateHandle::henson();
        assert!(h.solve_by_classes(&Structure::clique("E", 3)).unwrap().is_none());
        assert!(h.solve_by_classes(&Structure::directed_cycle("E", 5)).unwrap().is_some());
    }

    #[test]
    fn descriptions() {
        let q = TemplateHandle::qorder();
        assert_eq!(q.describe(&AssignmentClass::Order { ranks: vec![1, 0, 1] }), "1<0=2");
        let h = TemplateHandle::henson();
        let c = AssignmentClass::Graph {
            blocks: vec![0, 1, 0],
            edges: vec![(0, 1)],
        };
        assert_eq!(h.describe(&c), "[0 2][1]{0-1}");
    }
}
