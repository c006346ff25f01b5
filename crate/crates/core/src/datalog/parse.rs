use crate::error::{Error, Result};
use crate::structure::{Signature, Symbol};

use super::{Atom, DatalogProgram, Rule};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Implies,
    Dot,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split(['%', '#']).next().unwrap_or("");
        let mut chars = content.chars().peekable();
        while let Some(&c) = chars.peek() {
            match c {
                c if c.is_whitespace() => {
                    chars.next();
                }
                '(' | ')' | ',' | '.' => {
                    chars.next();
                    out.push((
                        match c {
                            '(' => Tok::LParen,
                            ')' => Tok::RParen,
                            ',' => Tok::Comma,
                            _ => Tok::Dot,
                        },
                        line,
                    ));
                }
                ':' => {
                    chars.next();
                    if chars.next() != Some('-') {
                        return Err(Error::Syntax {
                            line,
                            message: "expected `:-`".into(),
                        });
                    }
                    out.push((Tok::Implies, line));
                }
                c if c.is_alphanumeric() || c == '_' || c == '\'' => {
                    let mut ident = String::new();
                    while let Some(&d) = chars.peek() {
                        if d.is_alphanumeric() || d == '_' || d == '\'' {
                            ident.push(d);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    out.push((Tok::Ident(ident), line));
                }
                other => {
                    return Err(Error::Syntax {
                        line,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, l)| *l)
            .unwrap_or(0)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line(),
            message: message.into(),
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn atom(&mut self) -> Result<Atom> {
        let symbol = self.ident()?;
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    args.push(self.ident()?);
                    if self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(Atom { symbol, args })
    }

    fn is_declaration(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(k)) if k == "edb" || k == "idb")
            && matches!(self.peek_at(1), Some(Tok::Ident(_)))
            && matches!(self.peek_at(2), Some(Tok::Ident(n)) if n.chars().all(|c| c.is_ascii_digit()))
    }
}

pub(super) fn parse_program(text: &str) -> Result<DatalogProgram> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut edbs = Signature::default();
    let mut idbs = Signature::default();
    let mut rules = Vec::new();
    while p.peek().is_some() {
        let line = p.line();
        if p.is_declaration() {
            let kind = p.ident()?;
            let name = p.ident()?;
            let arity: usize = p.ident()?.parse().map_err(|_| p.error("invalid arity"))?;
            let sig = if kind == "edb" { &mut edbs } else { &mut idbs };
            if kind == "idb" && name == super::FALSE {
                if arity != 0 {
                    return Err(Error::InvalidRule {
                        line,
                        message: "`false` must be 0-ary".into(),
                    });
                }
                if sig.index_of(&name).is_some() {
                    continue;
                }
            }
            sig.push(Symbol::new(name.clone(), arity)).map_err(|_| Error::Syntax {
                line,
                message: format!("`{name}` declared twice"),
            })?;
            continue;
        }
        let head = p.atom()?;
        let mut body = Vec::new();
        if p.peek() == Some(&Tok::Implies) {
            p.pos += 1;
            loop {
                body.push(p.atom()?);
                if p.peek() == Some(&Tok::Comma) {
                    p.pos += 1;
                } else {
                    break;
                }
            }
        }
        p.expect(Tok::Dot, "`.` at end of rule")?;
        rules.push(Rule { head, body, line });
    }
    if idbs.index_of(super::FALSE).is_none() && edbs.index_of(super::FALSE).is_none() {
        idbs.push(Symbol::new(super::FALSE, 0))?;
    }
    DatalogProgram::new(edbs, idbs, rules)
}
