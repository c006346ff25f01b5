//! The existential (l,k)-pebble game between an instance and a template.
//!
//! Duplicator positions are pairs (variable set, assignment class), so the
//! game stays finite even against the infinite oracle templates.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::consistency::{local_mask, members, subsets_of_size, MAX_VARIABLES};
use crate::error::{Error, Result};
use crate::structure::Structure;
use crate::template::{AssignmentClass, ClassSpace, TemplateHandle};

/// A positional winning strategy for Duplicator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyFamily {
    pub l: usize,
    pub k: usize,
    /// (sorted variables, class on them)
    pub members: BTreeSet<(Vec<usize>, AssignmentClass)>,
}

impl StrategyFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// How a Duplicator response is answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    /// The response breaks this instance fact.
    Violates { symbol: usize, tuple: Vec<usize> },
    /// Spoiler continues with a later move.
    Continue { next: usize },
}

/// One Spoiler decision: keep `kept` (carrying `position`), pebble `placed`,
/// and a refutation for every Duplicator response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpoilerMove {
    pub kept: Vec<usize>,
    pub position: AssignmentClass,
    pub placed: Vec<usize>,
    pub responses: Vec<(AssignmentClass, Outcome)>,
}

/// A Spoiler winning strategy as a list of moves; move 0 starts from no
/// pebbles and every continuation points to a later move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpoilerLine {
    pub l: usize,
    pub k: usize,
    pub moves: Vec<SpoilerMove>,
    /// Rounds Spoiler needs against the best defence.
    pub length: usize,
}

#[derive(Debug, Clone)]
pub struct PebbleOutcome {
    pub wins: bool,
    pub strategy: Option<StrategyFamily>,
    pub line: Option<SpoilerLine>,
}

fn check_params(instance: &Structure, t: &TemplateHandle, l: usize, k: usize) -> Result<()> {
    if instance.signature() != t.signature() {
        return Err(Error::SignatureMismatch("instance and template signatures differ".into()));
    }
    if l < 1 || l >= k {
        return Err(Error::Precondition(format!("need 1 <= l < k, got l={l}, k={k}")));
    }
    if k > t.class_cap() {
        return Err(Error::CapExceeded(format!("k={k} exceeds the class cap {}", t.class_cap())));
    }
    if instance.size() > MAX_VARIABLES {
        return Err(Error::CapExceeded(format!("instance has {} elements", instance.size())));
    }
    Ok(())
}

fn mask_of(vars: &[usize]) -> u32 {
    vars.iter().fold(0, |m, &v| m | 1 << v)
}

struct Game<'a> {
    instance: &'a Structure,
    space: ClassSpace<'a>,
    l: usize,
    k: usize,
    /// every variable set of at most k variables, by size then value
    domains: Vec<u32>,
    /// partial-homomorphism flags per domain
    partial: HashMap<u32, Vec<bool>>,
    /// first violated fact per (domain, class), for refutations
    violation: HashMap<(u32, u32), (usize, Vec<usize>)>,
}

impl<'a> Game<'a> {
    fn new(instance: &'a Structure, t: &'a TemplateHandle, l: usize, k: usize) -> Result<Self> {
        let n = instance.size();
        let mut space = ClassSpace::new(t, k.min(n).max(l.min(n)))?;
        let mut domains = Vec::new();
        for size in 0..=k.min(n) {
            domains.extend(subsets_of_size(n, size));
        }
        let mut partial = HashMap::new();
        let mut violation = HashMap::new();
        for &d in &domains {
            let m = d.count_ones() as usize;
            let mut ok = vec![true; space.count(m)];
            let vars = members(d);
            for (s, tuple) in instance.facts() {
                if tuple.iter().any(|v| d >> v & 1 == 0) {
                    continue;
                }
                let pos: Vec<usize> = tuple
                    .iter()
                    .map(|v| vars.iter().position(|w| w == v).expect("inside"))
                    .collect();
                let table = space.holds_table(m, s, &pos);
                for (c, x) in ok.iter_mut().enumerate() {
                    if *x && !table[c] {
                        *x = false;
                        violation.insert((d, c as u32), (s, tuple.clone()));
                    }
                }
            }
            partial.insert(d, ok);
        }
        Ok(Game {
            instance,
            space,
            l,
            k,
            domains,
            partial,
            violation,
        })
    }

    fn n(&self) -> usize {
        self.instance.size()
    }

    fn maximal_supersets(&self, d: u32) -> Vec<u32> {
        let top = self.k.min(self.n());
        subsets_of_size(self.n(), top)
            .into_iter()
            .filter(|w| w & d == d)
            .collect()
    }

    /// Greatest family closed under restriction with the extension property.
    fn survivors(&self) -> BTreeMap<u32, Vec<bool>> {
        let mut alive: BTreeMap<u32, Vec<bool>> =
            self.domains.iter().map(|&d| (d, self.partial[&d].clone())).collect();
        let mut by_size: Vec<u32> = self.domains.clone();
        by_size.sort_by_key(|d| std::cmp::Reverse(d.count_ones()));
        let mut changed = true;
        while changed {
            changed = false;
            for &d in &by_size {
                let m = d.count_ones() as usize;
                let mut kill = Vec::new();
                // restriction closure through one-variable removals
                for v in members(d) {
                    let sub = d & !(1 << v);
                    let r = self.space.restriction(m, local_mask(d, sub));
                    let below = &alive[&sub];
                    for (c, &x) in alive[&d].iter().enumerate() {
                        if x && !below[r[c] as usize] {
                            kill.push(c);
                        }
                    }
                }
                // extension to every maximal superset
                if m <= self.l {
                    for w in self.maximal_supersets(d) {
                        let wm = w.count_ones() as usize;
                        let r = self.space.restriction(wm, local_mask(w, d));
                        let mut supported = vec![false; self.space.count(m)];
                        for (c, &x) in alive[&w].iter().enumerate() {
                            if x {
                                supported[r[c] as usize] = true;
                            }
                        }
                        for (c, &x) in alive[&d].iter().enumerate() {
                            if x && !supported[c] {
                                kill.push(c);
                            }
                        }
                    }
                }
                let entry = alive.get_mut(&d).expect("domain");
                for c in kill {
                    if entry[c] {
                        entry[c] = false;
                        changed = true;
                    }
                }
            }
        }
        alive
    }

    /// Spoiler decision states: (kept set of at most l variables, class index).
    fn spoiler_states(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for &d in &self.domains {
            let m = d.count_ones() as usize;
            if m <= self.l {
                for c in 0..self.space.count(m) as u32 {
                    out.push((d, c));
                }
            }
        }
        out
    }

    /// Supersets Spoiler may pebble from kept set `kept`.
    fn placements(&self, kept: u32) -> Vec<u32> {
        self.domains
            .iter()
            .copied()
            .filter(|&w| w & kept == kept && w != kept)
            .collect()
    }

    /// Rounds Spoiler needs from every state (None = never).
    fn ranks(&self) -> HashMap<(u32, u32), usize> {
        let states = self.spoiler_states();
        let mut rank: HashMap<(u32, u32), usize> = HashMap::new();
        let mut round = 1;
        loop {
            let mut newly = Vec::new();
            for &(kept, c) in &states {
                if rank.contains_key(&(kept, c)) {
                    continue;
                }
                if self.placements(kept).into_iter().any(|w| self.move_wins_within(kept, c, w, &rank, round)) {
                    newly.push((kept, c));
                }
            }
            if newly.is_empty() {
                return rank;
            }
            for s in newly {
                rank.insert(s, round);
            }
            round += 1;
        }
    }

    /// Every Duplicator answer to pebbling `w` from (kept, c) loses within `round` rounds.
    fn move_wins_within(
        &self,
        kept: u32,
        c: u32,
        w: u32,
        rank: &HashMap<(u32, u32), usize>,
        round: usize,
    ) -> bool {
        let wm = w.count_ones() as usize;
        let r = self.space.restriction(wm, local_mask(w, kept));
        (0..self.space.count(wm)).filter(|&c2| r[c2] == c).all(|c2| {
            !self.partial[&w][c2] || self.best_continuation(w, c2 as u32, rank, round).is_some()
        })
    }

    /// A kept subset of `w` already won in fewer than `round` rounds.
    fn best_continuation(
        &self,
        w: u32,
        c: u32,
        rank: &HashMap<(u32, u32), usize>,
        round: usize,
    ) -> Option<(u32, u32, usize)> {
        let wm = w.count_ones() as usize;
        let mut best: Option<(u32, u32, usize)> = None;
        let mut subs: Vec<u32> = self
            .domains
            .iter()
            .copied()
            .filter(|&s| s & w == s && s.count_ones() as usize <= self.l)
            .collect();
        subs.sort_by_key(|s| (s.count_ones(), *s));
        for s in subs {
            let rc = self.space.restriction(wm, local_mask(w, s))[c as usize];
            if let Some(&r) = rank.get(&(s, rc)) {
                if r < round && best.is_none_or(|b| r < b.2) {
                    best = Some((s, rc, r));
                }
            }
        }
        best
    }

    fn spoiler_line(&self, rank: &HashMap<(u32, u32), usize>) -> SpoilerLine {
        let root = (0u32, 0u32);
        let length = rank[&root];
        // explore optimal moves from the root
        let mut order: Vec<(u32, u32)> = Vec::new();
        let mut chosen: HashMap<(u32, u32), u32> = HashMap::new();
        let mut queue = VecDeque::from([root]);
        while let Some(state) = queue.pop_front() {
            if chosen.contains_key(&state) {
                continue;
            }
            let r = rank[&state];
            let w = self
                .placements(state.0)
                .into_iter()
                .find(|&w| self.move_wins_within(state.0, state.1, w, rank, r))
                .expect("ranked state has a winning move");
            chosen.insert(state, w);
            order.push(state);
            let wm = w.count_ones() as usize;
            let restr = self.space.restriction(wm, local_mask(w, state.0));
            for c2 in 0..self.space.count(wm) {
                if restr[c2] == state.1 && self.partial[&w][c2] {
                    let (s, rc, _) = self.best_continuation(w, c2 as u32, rank, r).expect("continuation");
                    queue.push_back((s, rc));
                }
            }
        }
        order.sort_by_key(|s| std::cmp::Reverse(rank[s]));
        let index: HashMap<(u32, u32), usize> = order.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let moves = order
            .iter()
            .map(|&state| {
                let (kept, c) = state;
                let w = chosen[&state];
                let wm = w.count_ones() as usize;
                let restr = self.space.restriction(wm, local_mask(w, kept));
                let responses = (0..self.space.count(wm))
                    .filter(|&c2| restr[c2] == c)
                    .map(|c2| {
                        let cls = self.space.class(wm, c2 as u32).clone();
                        let outcome = if self.partial[&w][c2] {
                            let (s, rc, _) = self
                                .best_continuation(w, c2 as u32, rank, rank[&state])
                                .expect("continuation");
                            Outcome::Continue { next: index[&(s, rc)] }
                        } else {
                            let (symbol, tuple) = self.violation[&(w, c2 as u32)].clone();
                            Outcome::Violates { symbol, tuple }
                        };
                        (cls, outcome)
                    })
                    .collect();
                SpoilerMove {
                    kept: members(kept),
                    position: self.space.class(kept.count_ones() as usize, c).clone(),
                    placed: members(w),
                    responses,
                }
            })
            .collect();
        SpoilerLine {
            l: self.l,
            k: self.k,
            moves,
            length,
        }
    }
}

/// Solves the existential (l,k)-pebble game on `instance` and `t`.
pub fn duplicator_wins(instance: &Structure, t: &TemplateHandle, l: usize, k: usize) -> Result<PebbleOutcome> {
    check_params(instance, t, l, k)?;
    let game = Game::new(instance, t, l, k)?;
    let alive = game.survivors();
    let wins = alive[&0][0];
    if wins {
        let members = alive
            .iter()
            .flat_map(|(&d, bits)| {
                let m = d.count_ones() as usize;
                let game = &game;
                bits.iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(move |(c, _)| (members(d), game.space.class(m, c as u32).clone()))
            })
            .collect();
        return Ok(PebbleOutcome {
            wins,
            strategy: Some(StrategyFamily { l, k, members }),
            line: None,
        });
    }
    let rank = game.ranks();
    if !rank.contains_key(&(0, 0)) {
        return Err(Error::Precondition(
            "internal disagreement between strategy fixpoint and Spoiler ranks".into(),
        ));
    }
    Ok(PebbleOutcome {
        wins,
        strategy: None,
        line: Some(game.spoiler_line(&rank)),
    })
}

fn class_is_partial_hom(instance: &Structure, t: &TemplateHandle, vars: &[usize], c: &AssignmentClass) -> bool {
    instance.facts().all(|(s, tuple)| {
        let pos: Option<Vec<usize>> = tuple.iter().map(|v| vars.iter().position(|w| w == v)).collect();
        match pos {
            Some(p) => t.holds_at(s, c, &p),
            None => true,
        }
    })
}

fn classes_by_extension(t: &TemplateHandle, m: usize) -> Vec<AssignmentClass> {
    let mut level = vec![t.empty_class()];
    for _ in 0..m {
        level = level.iter().flat_map(|c| t.extend(c)).collect();
    }
    level
}

/// Independent check of the three strategy conditions (plus nonemptiness).
pub fn verify_strategy(f: &StrategyFamily, instance: &Structure, t: &TemplateHandle) -> bool {
    let n = instance.size();
    if !f.members.contains(&(Vec::new(), t.empty_class())) {
        return false;
    }
    let mut by_domain: BTreeMap<&Vec<usize>, Vec<&AssignmentClass>> = BTreeMap::new();
    for (vars, c) in &f.members {
        let sorted = vars.windows(2).all(|w| w[0] < w[1]);
        if !sorted || vars.len() > f.k || vars.iter().any(|&v| v >= n) || c.arity() != vars.len() {
            return false;
        }
        if !class_is_partial_hom(instance, t, vars, c) {
            return false;
        }
        by_domain.entry(vars).or_default().push(c);
    }
    for (vars, c) in &f.members {
        for drop in 0..vars.len() {
            let keep: Vec<usize> = (0..vars.len()).filter(|&i| i != drop).collect();
            let sub: Vec<usize> = keep.iter().map(|&i| vars[i]).collect();
            if !f.members.contains(&(sub, c.restrict(&keep))) {
                return false;
            }
        }
        if vars.len() <= f.l {
            // every superset of at most k variables, not just maximal ones
            let others: Vec<usize> = (0..n).filter(|v| !vars.contains(v)).collect();
            for add in 0u32..1 << others.len() {
                if vars.len() + add.count_ones() as usize > f.k {
                    continue;
                }
                let mut w: Vec<usize> = vars.clone();
                w.extend(others.iter().enumerate().filter(|(i, _)| add >> i & 1 == 1).map(|(_, &v)| v));
                w.sort_unstable();
                let pos: Vec<usize> = vars.iter().map(|v| w.iter().position(|x| x == v).expect("in w")).collect();
                let ok = by_domain
                    .get(&w)
                    .is_some_and(|cs| cs.iter().any(|c2| c2.restrict(&pos) == *c));
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}

/// Checks that every Duplicator answer at every move is refuted as claimed.
pub fn replay_spoiler_line(line: &SpoilerLine, instance: &Structure, t: &TemplateHandle) -> bool {
    let n = instance.size();
    let Some(first) = line.moves.first() else {
        return false;
    };
    if !first.kept.is_empty() || first.position != t.empty_class() {
        return false;
    }
    for (i, mv) in line.moves.iter().enumerate() {
        let placed: BTreeSet<usize> = mv.placed.iter().copied().collect();
        if mv.kept.len() > line.l
            || placed.len() != mv.placed.len()
            || placed.len() > line.k
            || mv.placed.iter().any(|&v| v >= n)
            || !mv.kept.iter().all(|v| placed.contains(v))
            || mv.position.arity() != mv.kept.len()
        {
            return false;
        }
        let kept_pos: Vec<usize> = mv
            .kept
            .iter()
            .map(|v| mv.placed.iter().position(|w| w == v).expect("checked"))
            .collect();
        let answers: Vec<AssignmentClass> = classes_by_extension(t, mv.placed.len())
            .into_iter()
            .filter(|c| c.restrict(&kept_pos) == mv.position)
            .collect();
        if answers.len() != mv.responses.len() {
            return false;
        }
        for answer in answers {
            let Some((_, outcome)) = mv.responses.iter().find(|(c, _)| *c == answer) else {
                return false;
            };
            match outcome {
                Outcome::Violates { symbol, tuple } => {
                    if !instance.relation(*symbol).contains(tuple) {
                        return false;
                    }
                    let pos: Option<Vec<usize>> =
                        tuple.iter().map(|v| mv.placed.iter().position(|w| w == v)).collect();
                    match pos {
                        Some(p) if !t.holds_at(*symbol, &answer, &p) => {}
                        _ => return false,
                    }
                }
                Outcome::Continue { next } => {
                    let Some(nm) = line.moves.get(*next) else {
                        return false;
                    };
                    if *next <= i {
                        return false;
                    }
                    let pos: Option<Vec<usize>> =
                        nm.kept.iter().map(|v| mv.placed.iter().position(|w| w == v)).collect();
                    match pos {
                        Some(p) if answer.restrict(&p) == nm.position => {}
                        _ => return false,
                    }
                }
            }
        }
    }
    true
}

/// Human-readable move transcript.
pub fn line_transcript(line: &SpoilerLine, instance: &Structure, t: &TemplateHandle) -> String {
    let name = |vs: &[usize]| vs.iter().map(|&v| instance.element(v)).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    for (i, mv) in line.moves.iter().enumerate() {
        out.push_str(&format!(
            "move {i}: keep [{}] as {}, pebble [{}]\n",
            name(&mv.kept),
            t.describe(&mv.position),
            name(&mv.placed)
        ));
        for (c, o) in &mv.responses {
            let what = match o {
                Outcome::Violates { symbol, tuple } => format!(
                    "violates {}({})",
                    instance.signature().name(*symbol),
                    name(tuple)
                ),
                Outcome::Continue { next } => format!("continue at move {next}"),
            };
            out.push_str(&format!("  {} -> {what}\n", t.describe(c)));
        }
    }
    out
}

/// Positions surviving in the family, keyed by variable mask (for cross-checks).
pub fn family_masks(f: &StrategyFamily) -> BTreeSet<u32> {
    f.members.iter().map(|(v, _)| mask_of(v)).collect()
}
