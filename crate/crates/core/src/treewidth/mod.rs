//! Tree decompositions of width (l,k), bounded-variable formulas, and
//! obstructions unfolded from Datalog derivations.

mod formula;
mod obstruction;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::structure::{gaifman_adjacency, Structure};

pub use formula::{canonical_query_lk, evaluate_formula, Formula, LkFormula};
pub use obstruction::{obstruction_from_trace, Obstruction, DEFAULT_UNFOLD_CAP};

/// Largest structure `find_decomposition` accepts by default.
pub const DEFAULT_DECOMPOSITION_CAP: usize = 10;

/// Bags arranged as a rooted tree through parent pointers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeDecomposition {
    pub l: usize,
    pub k: usize,
    /// Sorted element indices per bag.
    pub bags: Vec<Vec<usize>>,
    /// `None` for the root only; parents precede children.
    pub parent: Vec<Option<usize>>,
}

impl TreeDecomposition {
    pub fn children(&self, bag: usize) -> Vec<usize> {
        (0..self.bags.len()).filter(|&c| self.parent[c] == Some(bag)).collect()
    }

    pub fn root(&self) -> Option<usize> {
        self.parent.iter().position(|p| p.is_none())
    }

    /// Indented bag tree using element names.
    pub fn to_text(&self, s: &Structure) -> String {
        let mut out = format!("decomposition l={} k={}\n", self.l, self.k);
        fn walk(d: &TreeDecomposition, s: &Structure, b: usize, depth: usize, out: &mut String) {
            let names: Vec<&str> = d.bags[b].iter().map(|&v| s.element(v)).collect();
            out.push_str(&format!("{}{{{}}}\n", "  ".repeat(depth), names.join(",")));
            for c in d.children(b) {
                walk(d, s, c, depth + 1, out);
            }
        }
        if let Some(r) = self.root() {
            walk(self, s, r, 0, &mut out);
        }
        out
    }
}

impl fmt::Display for TreeDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.bags.iter().enumerate() {
            let parent = self.parent[i].map_or("-".to_string(), |p| p.to_string());
            writeln!(f, "bag {i} parent {parent}: {b:?}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Node {
    bag: u32,
    children: Vec<Node>,
}

struct Search {
    adj: Vec<u32>,
    l: usize,
    k: usize,
    memo: HashMap<u32, Option<Node>>,
}

fn bits(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| mask >> i & 1 == 1)
}

impl Search {
    fn neighbourhood(&self, set: u32) -> u32 {
        bits(set).fold(0, |acc, v| acc | self.adj[v]) & !set
    }

    fn components(&self, set: u32) -> Vec<u32> {
        let mut left = set;
        let mut out = Vec::new();
        while left != 0 {
            let start = left.trailing_zeros() as usize;
            let mut comp = 1u32 << start;
            let mut frontier = comp;
            while frontier != 0 {
                let grow = bits(frontier).fold(0, |acc, v| acc | self.adj[v]) & set & !comp;
                comp |= grow;
                frontier = grow;
            }
            left &= !comp;
            out.push(comp);
        }
        out
    }

    /// Decomposes `comp` below a parent bag holding its neighbourhood.
    fn solve(&mut self, comp: u32) -> Option<Node> {
        if let Some(hit) = self.memo.get(&comp) {
            return hit.clone();
        }
        let sep = self.neighbourhood(comp);
        let result = self.try_bags(comp, sep);
        self.memo.insert(comp, result.clone());
        result
    }

    fn try_bags(&mut self, comp: u32, sep: u32) -> Option<Node> {
        let room = self.k.checked_sub(sep.count_ones() as usize)?;
        if room == 0 {
            return None;
        }
        let pool: Vec<usize> = bits(comp).collect();
        for size in (1..=room.min(pool.len())).rev() {
            let mut chosen = Vec::new();
            if let Some(n) = self.pick(comp, sep, &pool, size, 0, &mut chosen) {
                return Some(n);
            }
        }
        None
    }

    fn pick(
        &mut self,
        comp: u32,
        sep: u32,
        pool: &[usize],
        size: usize,
        from: usize,
        chosen: &mut Vec<usize>,
    ) -> Option<Node> {
        if chosen.len() == size {
            let inner = chosen.iter().fold(0u32, |m, &v| m | 1 << v);
            let bag = sep | inner;
            let rest = comp & !inner;
            let parts = self.components(rest);
            if parts.iter().any(|&c| self.neighbourhood(c).count_ones() as usize > self.l) {
                return None;
            }
            let mut children = Vec::new();
            for c in parts {
                children.push(self.solve(c)?);
            }
            return Some(Node { bag, children });
        }
        for i in from..pool.len() {
            chosen.push(pool[i]);
            let found = self.pick(comp, sep, pool, size, i + 1, chosen);
            chosen.pop();
            if found.is_some() {
                return found;
            }
        }
        None
    }
}

fn flatten(node: &Node, parent: Option<usize>, bags: &mut Vec<Vec<usize>>, parents: &mut Vec<Option<usize>>) {
    let me = bags.len();
    bags.push(bits(node.bag).collect());
    parents.push(parent);
    for c in &node.children {
        flatten(c, Some(me), bags, parents);
    }
}

/// Exact search for a decomposition of width (l,k), with the default cap.
pub fn find_decomposition(s: &Structure, l: usize, k: usize) -> Result<Option<TreeDecomposition>> {
    find_decomposition_capped(s, l, k, DEFAULT_DECOMPOSITION_CAP)
}

pub fn find_decomposition_capped(
    s: &Structure,
    l: usize,
    k: usize,
    cap: usize,
) -> Result<Option<TreeDecomposition>> {
    let n = s.size();
    if n > cap || n > 31 {
        return Err(Error::CapExceeded(format!("{n} elements exceed the decomposition cap {cap}")));
    }
    if k == 0 {
        return Ok((n == 0).then(|| TreeDecomposition {
            l,
            k,
            bags: Vec::new(),
            parent: Vec::new(),
        }));
    }
    let adj: Vec<u32> = gaifman_adjacency(s)
        .into_iter()
        .enumerate()
        .map(|(v, ns)| ns.into_iter().filter(|&w| w != v).fold(0u32, |m, w| m | 1 << w))
        .collect();
    let mut search = Search {
        adj,
        l,
        k,
        memo: HashMap::new(),
    };
    let all = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let mut bags = Vec::new();
    let mut parents = Vec::new();
    let mut last_root: Option<usize> = None;
    for comp in search.components(all) {
        let Some(node) = search.solve(comp) else {
            return Ok(None);
        };
        let root = bags.len();
        flatten(&node, last_root, &mut bags, &mut parents);
        last_root = Some(root);
    }
    Ok(Some(TreeDecomposition {
        l,
        k,
        bags,
        parent: parents,
    }))
}

/// Re-checks coverage, connectivity, and both width bounds.
pub fn verify_decomposition(d: &TreeDecomposition, s: &Structure) -> bool {
    let n = s.size();
    let b = d.bags.len();
    if d.parent.len() != b {
        return false;
    }
    if b == 0 {
        return n == 0;
    }
    if d.parent.iter().filter(|p| p.is_none()).count() != 1 {
        return false;
    }
    // acyclic parent pointers
    for start in 0..b {
        let mut cur = start;
        let mut steps = 0;
        while let Some(p) = d.parent[cur] {
            if p >= b || steps > b {
                return false;
            }
            cur = p;
            steps += 1;
        }
    }
    let sets: Vec<BTreeSet<usize>> = d.bags.iter().map(|x| x.iter().copied().collect()).collect();
    if sets.iter().any(|x| x.len() > d.k || x.iter().any(|&v| v >= n)) {
        return false;
    }
    for i in 0..b {
        if let Some(p) = d.parent[i] {
            if sets[i].intersection(&sets[p]).count() > d.l {
                return false;
            }
        }
    }
    for v in 0..n {
        let holding = (0..b).filter(|&i| sets[i].contains(&v)).count();
        if holding == 0 {
            return false;
        }
        let links = (0..b)
            .filter(|&i| d.parent[i].is_some_and(|p| sets[i].contains(&v) && sets[p].contains(&v)))
            .count();
        if links + 1 != holding {
            return false;
        }
    }
    for (_, tuple) in s.facts() {
        for &x in tuple {
            for &y in tuple {
                if x != y && !sets.iter().any(|set| set.contains(&x) && set.contains(&y)) {
                    return false;
                }
            }
        }
    }
    true
}
