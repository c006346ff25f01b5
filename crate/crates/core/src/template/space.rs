use std::collections::HashMap;
use std::rc::Rc;

use super::{AssignmentClass, TemplateHandle};
use crate::error::Result;

/// Indexed classes of every arity up to a bound, with cached restriction
/// and relation tables. Engines work with class indices only.
pub struct ClassSpace<'t> {
    template: &'t TemplateHandle,
    classes: Vec<Vec<AssignmentClass>>,
    index: Vec<HashMap<AssignmentClass, u32>>,
    /// `restrictions[m][mask][c]`: index of the restriction of class `c` (arity
    /// `m`) to the positions set in `mask`, in increasing order.
    restrictions: Vec<Vec<Vec<u32>>>,
    holds: HashMap<(usize, usize, Vec<usize>), Rc<[bool]>>,
}

impl<'t> ClassSpace<'t> {
    pub fn new(template: &'t TemplateHandle, max_arity: usize) -> Result<Self> {
        let mut classes = Vec::new();
        for m in 0..=max_arity {
            classes.push(template.classes(m)?);
        }
        let index: Vec<HashMap<AssignmentClass, u32>> = classes
            .iter()
            .map(|cs| cs.iter().enumerate().map(|(i, c)| (c.clone(), i as u32)).collect())
            .collect();
        let mut restrictions = Vec::new();
        for (m, cs) in classes.iter().enumerate() {
            let mut per_mask = Vec::with_capacity(1 << m);
            for mask in 0u32..1 << m {
                let positions: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
                let target = &index[positions.len()];
                per_mask.push(cs.iter().map(|c| target[&c.restrict(&positions)]).collect());
            }
            restrictions.push(per_mask);
        }
        Ok(ClassSpace {
            template,
            classes,
            index,
            restrictions,
            holds: HashMap::new(),
        })
    }

    pub fn template(&self) -> &'t TemplateHandle {
        self.template
    }

    pub fn max_arity(&self) -> usize {
        self.classes.len() - 1
    }

    pub fn count(&self, m: usize) -> usize {
        self.classes[m].len()
    }

    pub fn class(&self, m: usize, i: u32) -> &AssignmentClass {
        &self.classes[m][i as usize]
    }

    pub fn classes(&self, m: usize) -> &[AssignmentClass] {
        &self.classes[m]
    }

    pub fn index_of(&self, c: &AssignmentClass) -> u32 {
        self.index[c.arity()][c]
    }

    pub fn restriction(&self, m: usize, mask: u32) -> &[u32] {
        &self.restrictions[m][mask as usize]
    }

    /// Per class of arity `m`: does `symbol` hold at `positions`?
    pub fn holds_table(&mut self, m: usize, symbol: usize, positions: &[usize]) -> Rc<[bool]> {
        let key = (m, symbol, positions.to_vec());
        if let Some(t) = self.holds.get(&key) {
            return t.clone();
        }
        let t: Rc<[bool]> = self.classes[m]
            .iter()
            .map(|c| self.template.holds_at(symbol, c, positions))
            .collect();
        self.holds.insert(key, t.clone());
        t
    }
}
