//! Orbit types of the dense linear order: weak orders encoded as dense rank vectors.

/// Rank vectors over `m` positions using exactly the ranks `0..r` for some `r`,
/// in lexicographic order.
pub(crate) fn weak_orders(m: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; m];
    fn rec(i: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if i == cur.len() {
            if is_dense(cur) {
                out.push(cur.clone());
            }
            return;
        }
        for r in 0..cur.len() as u8 {
            cur[i] = r;
            rec(i + 1, cur, out);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

fn is_dense(ranks: &[u8]) -> bool {
    let max = ranks.iter().copied().max().map_or(0, |m| m as usize + 1);
    (0..max).all(|r| ranks.contains(&(r as u8)))
}

/// Renumbers ranks to `0..r` preserving their relative order.
pub(crate) fn densify(ranks: &[u8]) -> Vec<u8> {
    let mut distinct: Vec<u8> = ranks.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    ranks
        .iter()
        .map(|r| distinct.binary_search(r).expect("present") as u8)
        .collect()
}

pub(crate) fn restrict(ranks: &[u8], positions: &[usize]) -> Vec<u8> {
    let picked: Vec<u8> = positions.iter().map(|&p| ranks[p]).collect();
    densify(&picked)
}

/// All weak orders on one more position that restrict to `ranks`.
pub(crate) fn extend(ranks: &[u8]) -> Vec<Vec<u8>> {
    let r = ranks.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = Vec::new();
    // join an existing rank
    for v in 0..r {
        let mut next = ranks.to_vec();
        next.push(v);
        out.push(next);
    }
    // open a new rank just below the existing rank `g` (g = r: on top)
    for g in 0..=r {
        let mut next: Vec<u8> = ranks.iter().map(|&x| if x >= g { x + 1 } else { x }).collect();
        next.push(g);
        out.push(next);
    }
    out.sort();
    out
}
