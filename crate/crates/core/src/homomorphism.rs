//! Homomorphism search, cores and homomorphic equivalence.
//!
//! Maps are vectors indexed by source element, holding target element indices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::structure::Structure;

/// A total map from a source domain to a target domain, by index.
pub type Mapping = Vec<usize>;

/// A partial map between two structures, keyed by source element index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialMap {
    pairs: BTreeMap<usize, usize>,
}

impl PartialMap {
    pub fn new() -> Self {
        PartialMap::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        PartialMap {
            pairs: pairs.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, from: usize, to: usize) -> Option<usize> {
        self.pairs.insert(from, to)
    }

    pub fn get(&self, from: usize) -> Option<usize> {
        self.pairs.get(&from).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|(&a, &b)| (a, b))
    }

    /// Every fact of `a` whose elements are all mapped is preserved in `b`.
    pub fn is_partial_hom(&self, a: &Structure, b: &Structure) -> bool {
        a.facts().all(|(s, t)| {
            match t.iter().map(|&e| self.get(e)).collect::<Option<Vec<_>>>() {
                Some(image) => b.holds(s, &image),
                None => true,
            }
        })
    }
}

fn check_signatures(a: &Structure, b: &Structure) -> Result<()> {
    if a.signature() != b.signature() {
        return Err(Error::SignatureMismatch(
            "homomorphism needs identical signatures".into(),
        ));
    }
    Ok(())
}

/// Whether `map` is a homomorphism from `a` to `b`.
pub fn is_homomorphism(a: &Structure, b: &Structure, map: &[usize]) -> bool {
    map.len() == a.size()
        && map.iter().all(|&v| v < b.size())
        && a.facts().all(|(s, t)| {
            let image: Vec<usize> = t.iter().map(|&e| map[e]).collect();
            b.holds(s, &image)
        })
}

struct Search<'a> {
    a: &'a Structure,
    b: &'a Structure,
    /// Facts of `a` as (symbol, tuple), indexed for lookup by element.
    facts: Vec<(usize, Vec<usize>)>,
    by_element: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(a: &'a Structure, b: &'a Structure) -> Self {
        let facts: Vec<(usize, Vec<usize>)> = a.facts().map(|(s, t)| (s, t.clone())).collect();
        let mut by_element = vec![Vec::new(); a.size()];
        for (i, (_, t)) in facts.iter().enumerate() {
            let mut seen: Vec<usize> = t.clone();
            seen.sort_unstable();
            seen.dedup();
            for e in seen {
                by_element[e].push(i);
            }
        }
        Search {
            a,
            b,
            facts,
            by_element,
        }
    }

    /// Calls `visit` on every homomorphism in lexicographic order until it returns false.
    fn run(&self, visit: &mut dyn FnMut(&[usize]) -> bool) {
        // 0-ary facts have no element to hang a check on.
        for (s, t) in &self.facts {
            if t.is_empty() && !self.b.holds(*s, &[]) {
                return;
            }
        }
        let n = self.a.size();
        let domains: Vec<Vec<usize>> = vec![(0..self.b.size()).collect(); n];
        let mut assignment = vec![usize::MAX; n];
        self.extend(0, &mut assignment, domains, visit);
    }

    fn extend(
        &self,
        depth: usize,
        assignment: &mut Vec<usize>,
        domains: Vec<Vec<usize>>,
        visit: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if depth == self.a.size() {
            return visit(assignment);
        }
        'values: for &v in &domains[depth] {
            assignment[depth] = v;
            let mut next = domains.clone();
            for &fi in &self.by_element[depth] {
                let (s, t) = &self.facts[fi];
                let open: Vec<usize> = t.iter().copied().filter(|&e| e > depth).collect();
                if open.is_empty() {
                    let image: Vec<usize> = t.iter().map(|&e| assignment[e]).collect();
                    if !self.b.holds(*s, &image) {
                        continue 'values;
                    }
                } else if open.iter().all(|&e| e == open[0]) {
                    // forward check the single remaining element
                    let u = open[0];
                    let mut image: Vec<usize> = t.iter().map(|&e| assignment[e]).collect();
                    next[u].retain(|&w| {
                        for (pos, &e) in t.iter().enumerate() {
                            if e == u {
                                image[pos] = w;
                            }
                        }
                        self.b.holds(*s, &image)
                    });
                    if next[u].is_empty() {
                        continue 'values;
                    }
                }
            }
            if !self.extend(depth + 1, assignment, next, visit) {
                return false;
            }
        }
        assignment[depth] = usize::MAX;
        true
    }
}

/// Finds some homomorphism `a → b` by backtracking, or proves none exists.
pub fn find_homomorphism(a: &Structure, b: &Structure) -> Result<Option<Mapping>> {
    check_signatures(a, b)?;
    let mut found = None;
    Search::new(a, b).run(&mut |m| {
        found = Some(m.to_vec());
        false
    });
    Ok(found)
}

/// Whether a homomorphism `a → b` exists.
pub fn hom_exists(a: &Structure, b: &Structure) -> Result<bool> {
    Ok(find_homomorphism(a, b)?.is_some())
}

/// All homomorphisms `a → b` in lexicographic order, at most `limit` of them.
pub fn enumerate_homomorphisms(a: &Structure, b: &Structure, limit: usize) -> Result<Vec<Mapping>> {
    check_signatures(a, b)?;
    let mut out = Vec::new();
    if limit == 0 {
        return Ok(out);
    }
    Search::new(a, b).run(&mut |m| {
        out.push(m.to_vec());
        out.len() < limit
    });
    Ok(out)
}

/// Homomorphisms exist in both directions.
pub fn hom_equivalent(a: &Structure, b: &Structure) -> Result<bool> {
    Ok(hom_exists(a, b)? && hom_exists(b, a)?)
}

fn combinations(n: usize, r: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if r > n {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        if !visit(&idx) {
            return;
        }
        let mut i = r;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - r {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// The core of `s`: the induced substructure on the lexicographically first
/// smallest element set onto which `s` retracts.
pub fn compute_core(s: &Structure) -> Structure {
    let n = s.size();
    for size in 1..n {
        let mut found = None;
        combinations(n, size, |subset| {
            let sub = s.induced(subset);
            if hom_exists(s, &sub).expect("same signature") {
                found = Some(sub);
                false
            } else {
                true
            }
        });
        if let Some(core) = found {
            return core;
        }
    }
    s.clone()
}

/// Every endomorphism of `s` is a bijection.
pub fn is_core(s: &Structure) -> bool {
    let mut ok = true;
    Search::new(s, s).run(&mut |m| {
        let mut seen = vec![false; m.len()];
        for &v in m {
            seen[v] = true;
        }
        ok = seen.into_iter().all(|x| x);
        ok
    });
    ok
}
