use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homomorphism::hom_exists;
use crate::structure::Structure;
use crate::template::{TemplateHandle, TemplateKind};

/// Largest finite template domain for which the subset power structure is built.
pub const DEFAULT_POWER_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArcResult {
    /// Surviving template elements per instance element.
    pub domains: Vec<BTreeSet<usize>>,
    pub failed: bool,
}

/// Generalized arc consistency against a finite template, in the positional
/// reading of the width-one Datalog rules. It accepts exactly the instances
/// that map to [`power_structure`].
pub fn arc_consistency(instance: &Structure, t: &TemplateHandle) -> Result<ArcResult> {
    let template = t
        .as_finite()
        .ok_or_else(|| Error::Unsupported("arc consistency needs a finite template".into()))?;
    if instance.signature() != template.signature() {
        return Err(Error::SignatureMismatch("instance and template signatures differ".into()));
    }
    let full: BTreeSet<usize> = (0..template.size()).collect();
    let mut domains = vec![full; instance.size()];
    for (s, tuple) in instance.facts() {
        if tuple.is_empty() && !template.holds(s, &[]) {
            return Ok(ArcResult {
                domains: vec![BTreeSet::new(); instance.size()],
                failed: true,
            });
        }
    }
    let facts: Vec<(usize, Vec<usize>)> = instance.facts().map(|(s, t)| (s, t.clone())).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for (s, tuple) in &facts {
            // positions are read independently, as the width-one rules do:
            // a repeated element does not force equal template values
            let support: Vec<&Vec<usize>> = template
                .relation(*s)
                .iter()
                .filter(|r| tuple.iter().zip(r.iter()).all(|(x, v)| domains[*x].contains(v)))
                .collect();
            for (pos, &x) in tuple.iter().enumerate() {
                let keep: BTreeSet<usize> = support.iter().map(|r| r[pos]).collect();
                if keep.len() < domains[x].len() {
                    domains[x] = domains[x].intersection(&keep).copied().collect();
                    changed = true;
                }
            }
            if tuple.iter().any(|&x| domains[x].is_empty()) {
                return Ok(ArcResult {
                    domains,
                    failed: true,
                });
            }
        }
    }
    Ok(ArcResult {
        domains,
        failed: false,
    })
}

fn subset_name(template: &Structure, mask: u32) -> String {
    let names: Vec<&str> = (0..template.size())
        .filter(|&i| mask >> i & 1 == 1)
        .map(|i| template.element(i))
        .collect();
    format!("{{{}}}", names.join(","))
}

/// The power (orbit) structure: nonempty subsets of a finite template, or the
/// unary classes of an oracle template, related by the arc-consistency
/// support condition.
pub fn power_structure(t: &TemplateHandle) -> Result<Structure> {
    power_structure_capped(t, DEFAULT_POWER_CAP)
}

pub fn power_structure_capped(t: &TemplateHandle, cap: usize) -> Result<Structure> {
    let sig = t.signature().clone();
    match t.kind() {
        TemplateKind::Finite(template) => {
            let d = template.size();
            if d > cap {
                return Err(Error::CapExceeded(format!(
                    "power structure of a {d}-element template (cap {cap})"
                )));
            }
            let subsets: Vec<u32> = (1u32..1 << d).collect();
            let mut p = Structure::new(sig.clone());
            for &m in &subsets {
                p.add_element(&subset_name(template, m));
            }
            for s in 0..sig.len() {
                let arity = sig.arity(s);
                let rel = template.relation(s);
                let count = subsets.len().pow(arity as u32);
                for mut code in 0..count {
                    let mut pick = vec![0usize; arity];
                    for slot in pick.iter_mut().rev() {
                        *slot = code % subsets.len();
                        code /= subsets.len();
                    }
                    let sets: Vec<u32> = pick.iter().map(|&i| subsets[i]).collect();
                    let ok = (0..arity).all(|j| {
                        (0..d).filter(|&a| sets[j] >> a & 1 == 1).all(|a| {
                            rel.iter().any(|r| {
                                r[j] == a && (0..arity).all(|i| sets[i] >> r[i] & 1 == 1)
                            })
                        })
                    });
                    let ok = if arity == 0 { !rel.is_empty() } else { ok };
                    if ok {
                        p.insert(s, pick);
                    }
                }
            }
            Ok(p)
        }
        _ => {
            let unary = t.classes(1)?;
            let mut p = Structure::new(sig.clone());
            for i in 0..unary.len() {
                p.add_element(&format!("orbit{i}"));
            }
            for s in 0..sig.len() {
                let arity = sig.arity(s);
                for c in t.classes(arity)? {
                    if !t.class_holds(s, &c) {
                        continue;
                    }
                    let tuple: Vec<usize> = (0..arity)
                        .map(|i| {
                            let u = c.restrict(&[i]);
                            unary.iter().position(|x| *x == u).expect("unary class")
                        })
                        .collect();
                    p.insert(s, tuple);
                }
            }
            Ok(p)
        }
    }
}

/// Whether arc consistency decides CSP(t): the power structure maps back into `t`.
pub fn ac_solves(t: &TemplateHandle) -> Result<bool> {
    let p = power_structure(t)?;
    match t.kind() {
        TemplateKind::Finite(template) => hom_exists(&p, template),
        _ => Ok(t.decide_csp(&p)?.satisfiable),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn implication() -> TemplateHandle {
        let s = Structure::parse(
            "rel impl 2\nrel one 1\nrel zero 1\nimpl 0 0\nimpl 0 1\nimpl 1 1\none 1\nzero 0",
        )
        .unwrap();
        TemplateHandle::finite(s).unwrap()
    }

    #[test]
    fn k2_power_structure_has_loop() {
        let k2 = TemplateHandle::finite(Structure::clique("E", 2)).unwrap();
        let p = power_structure(&k2).unwrap();
        let both = p.element_index("{v0,v1}").unwrap();
        assert!(p.holds(0, &[both, both]));
        assert!(!ac_solves(&k2).unwrap());
    }

    #[test]
    fn oracle_orbit_structures_are_loops() {
        for t in [TemplateHandle::qorder(), TemplateHandle::henson()] {
            let p = power_structure(&t).unwrap();
            assert_eq!(p.size(), 1);
            assert!(p.holds(0, &[0, 0]));
            assert!(!ac_solves(&t).unwrap());
        }
    }

    #[test]
    fn implication_template_is_solved_by_ac() {
        assert!(ac_solves(&implication()).unwrap());
        let inst = Structure::parse(
            "rel impl 2\nrel one 1\nrel zero 1\none x\nimpl x y\nzero y",
        )
        .unwrap();
        assert!(arc_consistency(&inst, &implication()).unwrap().failed);
    }

    #[test]
    fn ac_accepts_k4_against_k3() {
        let k3 = TemplateHandle::finite(Structure::clique("E", 3)).unwrap();
        let r = arc_consistency(&Structure::clique("E", 4), &k3).unwrap();
        assert!(!r.failed);
        assert!(r.domains.iter().all(|d| d.len() == 3));
        let empty = Structure::new(k3.signature().clone());
        assert!(!arc_consistency(&empty, &k3).unwrap().failed);
    }

    #[test]
    fn power_structure_is_arc_consistent_instance() {
        let t = implication();
        let p = power_structure(&t).unwrap();
        assert!(!arc_consistency(&p, &t).unwrap().failed);
    }

    #[test]
    fn loops_are_read_positionally() {
        // E(x,x) against K2: each position alone has support, so AC stands
        let k2 = TemplateHandle::finite(Structure::clique("E", 2)).unwrap();
        let lp = Structure::from_edges("E", 1, &[(0, 0)]);
        assert!(!arc_consistency(&lp, &k2).unwrap().failed);
        assert!(!arc_consistency(&power_structure(&k2).unwrap(), &k2).unwrap().failed);
    }

    #[test]
    fn cap_is_enforced() {
        let t = TemplateHandle::finite(Structure::clique("E", 6)).unwrap();
        assert!(matches!(power_structure(&t), Err(Error::CapExceeded(_))));
    }
}
