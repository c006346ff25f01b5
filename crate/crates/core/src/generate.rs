//! Instance corpora: small digraphs and graphs up to isomorphism, labelled
//! variants, and seeded random partial (l,k)-trees.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::structure::{Signature, Structure};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, p, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            p.swap(j, k - 1);
        }
    }
    heap(n, &mut p, &mut out);
    out
}

/// Arc bit for (i, j) in an n-vertex adjacency mask.
fn arc(n: usize, i: usize, j: usize) -> u64 {
    1 << (i * n + j)
}

fn canonical(mask: u64, n: usize, perms: &[Vec<usize>]) -> u64 {
    perms
        .iter()
        .map(|p| {
            let mut out = 0;
            for i in 0..n {
                for j in 0..n {
                    if mask & arc(n, i, j) != 0 {
                        out |= arc(n, p[i], p[j]);
                    }
                }
            }
            out
        })
        .min()
        .unwrap_or(0)
}

fn to_structure(symbol: &str, n: usize, mask: u64) -> Structure {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if mask & arc(n, i, j) != 0 {
                edges.push((i, j));
            }
        }
    }
    Structure::from_edges(symbol, n, &edges)
}

/// Canonical adjacency masks of n-vertex digraphs, one per isomorphism class.
/// `symmetric` restricts to graphs (arcs in both directions).
fn iso_masks(n: usize, loops: bool, symmetric: bool) -> BTreeSet<u64> {
    assert!(n <= 7, "adjacency masks hold at most 7 vertices");
    if n == 0 {
        return BTreeSet::from([0]);
    }
    let smaller = iso_masks(n - 1, loops, symmetric);
    let perms = permutations(n);
    let m = n - 1;
    let mut out = BTreeSet::new();
    let choices: usize = if symmetric { m } else { 2 * m };
    let loop_options: &[bool] = if loops { &[false, true] } else { &[false] };
    for &base in &smaller {
        // widen to n columns
        let mut wide = 0u64;
        for i in 0..m {
            for j in 0..m {
                if base & arc(m, i, j) != 0 {
                    wide |= arc(n, i, j);
                }
            }
        }
        for pick in 0u64..1 << choices {
            for &with_loop in loop_options {
                let mut mask = wide;
                for j in 0..m {
                    if pick >> j & 1 == 1 {
                        mask |= arc(n, m, j);
                        if symmetric {
                            mask |= arc(n, j, m);
                        }
                    }
                    if !symmetric && pick >> (m + j) & 1 == 1 {
                        mask |= arc(n, j, m);
                    }
                }
                if with_loop {
                    mask |= arc(n, m, m);
                }
                out.insert(canonical(mask, n, &perms));
            }
        }
    }
    out
}

/// Every n-vertex digraph up to isomorphism.
pub fn digraphs_up_to_iso(symbol: &str, n: usize, loops: bool) -> Vec<Structure> {
    iso_masks(n, loops, false)
        .into_iter()
        .map(|m| to_structure(symbol, n, m))
        .collect()
}

/// Every n-vertex undirected graph up to isomorphism (edges stored both ways).
pub fn graphs_up_to_iso(symbol: &str, n: usize, loops: bool) -> Vec<Structure> {
    iso_masks(n, loops, true)
        .into_iter()
        .map(|m| to_structure(symbol, n, m))
        .collect()
}

/// All digraphs up to isomorphism with at most `max_n` vertices.
pub fn digraphs_up_to(symbol: &str, max_n: usize, loops: bool) -> Vec<Structure> {
    (0..=max_n).flat_map(|n| digraphs_up_to_iso(symbol, n, loops)).collect()
}

pub fn graphs_up_to(symbol: &str, max_n: usize, loops: bool) -> Vec<Structure> {
    (0..=max_n).flat_map(|n| graphs_up_to_iso(symbol, n, loops)).collect()
}

/// Every labelled n-vertex digraph; loops only when asked.
pub fn labelled_digraphs(symbol: &str, n: usize, loops: bool) -> impl Iterator<Item = Structure> + '_ {
    let slots: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| loops || i != j)
        .collect();
    (0u64..1 << slots.len()).map(move |pick| {
        let edges: Vec<(usize, usize)> = slots
            .iter()
            .enumerate()
            .filter(|(b, _)| pick >> b & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        Structure::from_edges(symbol, n, &edges)
    })
}

/// Re-expresses a digraph over `edge_symbol` plus unary labels: every vertex
/// gets one of the 2^|unary| label sets, in all combinations.
pub fn labelled_variants(base: &Structure, edge_symbol: &str, unary: &[&str]) -> Vec<Structure> {
    let mut sig = vec![(edge_symbol, 2)];
    sig.extend(unary.iter().map(|&u| (u, 1)));
    let signature = Signature::of(&sig);
    let n = base.size();
    let per = 1usize << unary.len();
    let total = per.pow(n as u32);
    let edges: Vec<Vec<usize>> = base.relation(0).iter().cloned().collect();
    (0..total)
        .map(|mut code| {
            let mut s = Structure::with_domain(signature.clone(), base.domain());
            for e in &edges {
                s.insert(0, e.clone());
            }
            for v in 0..n {
                let labels = code % per;
                code /= per;
                for (u, _) in unary.iter().enumerate() {
                    if labels >> u & 1 == 1 {
                        s.insert(1 + u, vec![v]);
                    }
                }
            }
            s
        })
        .collect()
}

/// Seeded generator for random partial (l,k)-trees.
pub struct TreeSampler {
    rng: ChaCha8Rng,
}

impl TreeSampler {
    pub fn new(seed: u64) -> Self {
        TreeSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Edges of a random (l,k)-tree on `n` vertices: a k-clique, then each new
    /// vertex block glued to an l-subset of an existing bag. Afterwards every
    /// edge is kept with probability `keep`.
    pub fn partial_tree(&mut self, n: usize, l: usize, k: usize, keep: f64) -> Vec<(usize, usize)> {
        let mut bags: Vec<Vec<usize>> = Vec::new();
        let mut edges = BTreeSet::new();
        let first: Vec<usize> = (0..k.min(n)).collect();
        for (a, &x) in first.iter().enumerate() {
            for &y in &first[a + 1..] {
                edges.insert((x, y));
            }
        }
        bags.push(first);
        let mut next = k.min(n);
        while next < n {
            let parent = bags.choose(&mut self.rng).expect("nonempty").clone();
            let mut shared = parent.clone();
            shared.shuffle(&mut self.rng);
            shared.truncate(l.min(parent.len()));
            let fresh: Vec<usize> = (next..(next + k - shared.len()).min(n)).collect();
            next += fresh.len();
            let mut bag = shared;
            bag.extend(&fresh);
            for (a, &x) in bag.iter().enumerate() {
                for &y in &bag[a + 1..] {
                    edges.insert((x.min(y), x.max(y)));
                }
            }
            bags.push(bag);
        }
        edges.into_iter().filter(|_| self.rng.gen_bool(keep)).collect()
    }

    /// Random orientation of undirected edges.
    pub fn orient(&mut self, edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
        edges
            .iter()
            .map(|&(a, b)| if self.rng.gen_bool(0.5) { (a, b) } else { (b, a) })
            .collect()
    }

    pub fn uniform(&mut self, below: usize) -> usize {
        self.rng.gen_range(0..below)
    }

    /// A random graph on `n` vertices with edge probability `p`.
    pub fn random_graph(&mut self, symbol: &str, n: usize, p: f64) -> Structure {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.rng.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        Structure::undirected(symbol, n, &edges)
    }
}
