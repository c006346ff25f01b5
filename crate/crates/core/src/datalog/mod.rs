//! Positive Datalog: programs, width, and bottom-up evaluation with traces.

mod eval;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::structure::{Signature, Symbol};

pub use eval::{derives_false, evaluate, evaluate_naive, replay_trace, DerivationStep, DerivationTrace, Evaluation, Fact};

/// Name of the distinguished 0-ary IDB.
pub const FALSE: &str = "false";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Atom {
    pub symbol: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(symbol: impl Into<String>, args: &[&str]) -> Self {
        Atom {
            symbol: symbol.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.symbol)
        } else {
            write!(f, "{}({})", self.symbol, self.args.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Atom>,
    /// Source line, 0 for rules built in code.
    pub line: usize,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Atom>) -> Self {
        Rule { head, body, line: 0 }
    }

    /// Distinct variables in order of first occurrence, body first.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in self.body.iter().chain(std::iter::once(&self.head)) {
            for v in &a.args {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    fn head_variable_count(&self) -> usize {
        self.head.args.iter().collect::<BTreeSet<_>>().len()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            write!(f, " :- ")?;
            for (i, a) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
        }
        write!(f, ".")
    }
}

/// Width `(l, k)`: at most `l` head variables and `k` variables per rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Width {
    pub l: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatalogProgram {
    edbs: Signature,
    idbs: Signature,
    rules: Vec<Rule>,
}

impl DatalogProgram {
    /// Builds and validates a program; `false` is added to the IDBs if missing.
    pub fn new(edbs: Signature, idbs: Signature, rules: Vec<Rule>) -> Result<Self> {
        let mut idbs = idbs;
        if idbs.index_of(FALSE).is_none() {
            if edbs.index_of(FALSE).is_some() {
                return Err(Error::InvalidRule {
                    line: 0,
                    message: "`false` cannot be an EDB".into(),
                });
            }
            idbs.push(Symbol::new(FALSE, 0))?;
        }
        for s in idbs.symbols() {
            if edbs.index_of(&s.name).is_some() {
                return Err(Error::InvalidRule {
                    line: 0,
                    message: format!("`{}` declared both as EDB and IDB", s.name),
                });
            }
        }
        let program = DatalogProgram { edbs, idbs, rules };
        for r in &program.rules {
            program.validate_rule(r)?;
        }
        Ok(program)
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse::parse_program(text)
    }

    fn validate_rule(&self, r: &Rule) -> Result<()> {
        let line = r.line;
        if self.edbs.index_of(&r.head.symbol).is_some() {
            return Err(Error::InvalidRule {
                line,
                message: format!("EDB `{}` used in a rule head", r.head.symbol),
            });
        }
        for a in std::iter::once(&r.head).chain(&r.body) {
            let arity = self
                .arity_of(&a.symbol)
                .ok_or_else(|| Error::UndeclaredSymbol {
                    line,
                    symbol: a.symbol.clone(),
                })?;
            if arity != a.args.len() {
                return Err(Error::ArityMismatch {
                    line,
                    symbol: a.symbol.clone(),
                    expected: arity,
                    found: a.args.len(),
                });
            }
        }
        for v in &r.head.args {
            if !r.body.iter().any(|a| a.args.contains(v)) {
                return Err(Error::InvalidRule {
                    line,
                    message: format!("head variable `{v}` does not occur in the body"),
                });
            }
        }
        Ok(())
    }

    fn arity_of(&self, name: &str) -> Option<usize> {
        self.edbs
            .index_of(name)
            .map(|i| self.edbs.arity(i))
            .or_else(|| self.idbs.index_of(name).map(|i| self.idbs.arity(i)))
    }

    pub fn edbs(&self) -> &Signature {
        &self.edbs
    }

    pub fn idbs(&self) -> &Signature {
        &self.idbs
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// EDBs followed by IDBs; the signature of evaluation output.
    pub fn full_signature(&self) -> Signature {
        let mut sig = self.edbs.clone();
        for s in self.idbs.symbols() {
            sig.push(s.clone()).expect("disjoint by construction");
        }
        sig
    }

    pub fn is_edb(&self, name: &str) -> bool {
        self.edbs.index_of(name).is_some()
    }

    pub fn width(&self) -> Width {
        let l = self.rules.iter().map(Rule::head_variable_count).max().unwrap_or(0);
        let k = self.rules.iter().map(|r| r.variables().len()).max().unwrap_or(0);
        Width { l, k }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in self.edbs.symbols() {
            out.push_str(&format!("edb {} {}\n", s.name, s.arity));
        }
        for s in self.idbs.symbols() {
            if s.name != FALSE {
                out.push_str(&format!("idb {} {}\n", s.name, s.arity));
            }
        }
        for r in &self.rules {
            out.push_str(&format!("{r}\n"));
        }
        out
    }
}

/// `l` = max distinct head variables, `k` = max distinct variables per rule.
pub fn program_width(p: &DatalogProgram) -> Width {
    p.width()
}
