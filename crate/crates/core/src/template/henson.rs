//! Orbit types of the universal triangle-free graph: an equality partition
//! (restricted growth string) plus a triangle-free graph on its blocks.

/// Block string and sorted block edges.
pub(crate) type Type = (Vec<u8>, Vec<(u8, u8)>);

/// Restricted growth strings of length `m`, lexicographic.
pub(crate) fn partitions(m: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m);
    fn rec(m: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        let next = cur.iter().copied().max().map_or(0, |x| x + 1);
        for b in 0..=next {
            cur.push(b);
            rec(m, cur, out);
            cur.pop();
        }
    }
    rec(m, &mut cur, &mut out);
    out
}

pub(crate) fn block_count(blocks: &[u8]) -> usize {
    blocks.iter().copied().max().map_or(0, |x| x as usize + 1)
}

fn all_pairs(b: usize) -> Vec<(u8, u8)> {
    let mut pairs = Vec::new();
    for i in 0..b {
        for j in i + 1..b {
            pairs.push((i as u8, j as u8));
        }
    }
    pairs
}

pub(crate) fn triangle_free(b: usize, edges: &[(u8, u8)]) -> bool {
    let adj = |x: u8, y: u8| edges.contains(&(x.min(y), x.max(y)));
    for (x, y) in edges {
        for z in 0..b as u8 {
            if z != *x && z != *y && adj(*x, z) && adj(*y, z) {
                return false;
            }
        }
    }
    true
}

/// Triangle-free edge sets on `b` labelled vertices, ordered by edge bitmask.
pub(crate) fn graphs(b: usize) -> Vec<Vec<(u8, u8)>> {
    let pairs = all_pairs(b);
    (0u32..1 << pairs.len())
        .map(|mask| {
            pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, p)| *p)
                .collect::<Vec<_>>()
        })
        .filter(|e| triangle_free(b, e))
        .collect()
}

pub(crate) fn classes(m: usize) -> Vec<Type> {
    let mut out = Vec::new();
    for p in partitions(m) {
        for g in graphs(block_count(&p)) {
            out.push((p.clone(), g));
        }
    }
    out
}

pub(crate) fn restrict(
    blocks: &[u8],
    edges: &[(u8, u8)],
    positions: &[usize],
) -> (Vec<u8>, Vec<(u8, u8)>) {
    let mut renumber: Vec<Option<u8>> = vec![None; block_count(blocks)];
    let mut next = 0u8;
    let mut out = Vec::with_capacity(positions.len());
    for &p in positions {
        let b = blocks[p] as usize;
        let id = *renumber[b].get_or_insert_with(|| {
            next += 1;
            next - 1
        });
        out.push(id);
    }
    let mut kept: Vec<(u8, u8)> = edges
        .iter()
        .filter_map(|&(x, y)| {
            let (a, b) = (renumber[x as usize]?, renumber[y as usize]?);
            Some((a.min(b), a.max(b)))
        })
        .collect();
    kept.sort_unstable();
    (out, kept)
}

/// All classes on one more position restricting to the given one.
pub(crate) fn extend(blocks: &[u8], edges: &[(u8, u8)]) -> Vec<Type> {
    let b = block_count(blocks);
    let mut out = Vec::new();
    for existing in 0..b as u8 {
        let mut nb = blocks.to_vec();
        nb.push(existing);
        out.push((nb, edges.to_vec()));
    }
    let new = b as u8;
    for mask in 0u32..1 << b {
        let nbrs: Vec<u8> = (0..b as u8).filter(|i| mask >> i & 1 == 1).collect();
        let independent = nbrs
            .iter()
            .all(|&x| nbrs.iter().all(|&y| x >= y || !edges.contains(&(x, y))));
        if !independent {
            continue;
        }
        let mut nb = blocks.to_vec();
        nb.push(new);
        let mut ne = edges.to_vec();
        ne.extend(nbrs.iter().map(|&x| (x, new)));
        ne.sort_unstable();
        out.push((nb, ne));
    }
    out
}
