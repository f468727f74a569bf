use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::molgraph::{BondOrder, Element};

pub const MAX_PATTERN_ATOMS: usize = 24;

/// Atom constraints. `None` fields are unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryAtom {
    pub element: Option<Element>,
    pub aromatic: Option<bool>,
    pub in_ring: Option<bool>,
    pub charge: Option<i8>,
    pub hydrogens: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryBond {
    Single,
    Double,
    Triple,
    Aromatic,
    /// `~`
    Any,
    /// Unwritten bond: single or aromatic.
    Implicit,
}

impl QueryBond {
    pub fn accepts(self, order: BondOrder) -> bool {
        match self {
            QueryBond::Single => order == BondOrder::Single,
            QueryBond::Double => order == BondOrder::Double,
            QueryBond::Triple => order == BondOrder::Triple,
            QueryBond::Aromatic => order == BondOrder::Aromatic,
            QueryBond::Any => true,
            QueryBond::Implicit => matches!(order, BondOrder::Single | BondOrder::Aromatic),
        }
    }
}

/// A connected query graph parsed from pattern text.
#[derive(Clone)]
pub struct Pattern {
    pub(crate) atoms: Vec<QueryAtom>,
    pub(crate) bonds: Vec<(usize, usize, QueryBond)>,
    source: String,
}

impl Pattern {
    pub fn atoms(&self) -> &[QueryAtom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[(usize, usize, QueryBond)] {
        &self.bonds
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn has_wildcards(&self) -> bool {
        self.atoms.iter().any(|a| a.element.is_none())
            || self.bonds.iter().any(|b| b.2 == QueryBond::Any)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({:?})", self.source)
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_pattern(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternError {
    #[error("pattern syntax error at offset {offset}: {message}")]
    PatternSyntax { offset: usize, message: String },
    #[error("pattern has {atoms} atoms, more than the limit of {MAX_PATTERN_ATOMS}")]
    PatternTooLarge { atoms: usize },
}

fn syntax<T>(offset: usize, message: impl Into<String>) -> Result<T, PatternError> {
    Err(PatternError::PatternSyntax {
        offset,
        message: message.into(),
    })
}

/// Parses the pattern grammar: SMILES atoms and bonds plus `*` (any atom),
/// `~` (any bond) and bracket flags `R` / `!R` (ring / non-ring atom).
/// Lowercase atoms must be aromatic, uppercase atoms aliphatic; an unwritten
/// bond matches single or aromatic bonds.
pub fn parse_pattern(text: &str) -> Result<Pattern, PatternError> {
    let s = text.as_bytes();
    if s.is_empty() {
        return syntax(0, "empty pattern");
    }
    let mut atoms: Vec<QueryAtom> = Vec::new();
    let mut bonds: Vec<(usize, usize, QueryBond)> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(QueryBond, usize)> = None;
    let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
    let mut rings: BTreeMap<u32, (usize, Option<QueryBond>, usize)> = BTreeMap::new();
    let mut pos = 0;

    let connect = |bonds: &mut Vec<(usize, usize, QueryBond)>, a: usize, b: usize, q: QueryBond, at: usize| {
        if a == b || bonds.iter().any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a)) {
            return syntax(at, "atoms bonded twice");
        }
        bonds.push((a, b, q));
        Ok(())
    };

    while pos < s.len() {
        let at = pos;
        let c = s[pos];
        match c {
            b'(' => {
                if prev.is_none() || pending.is_some() {
                    return syntax(at, "branch without a preceding atom");
                }
                branches.push((prev, at));
                pos += 1;
            }
            b')' => {
                let Some((p, _)) = branches.pop() else {
                    return syntax(at, "unbalanced parenthesis");
                };
                if pending.is_some() {
                    return syntax(at, "bond not followed by an atom");
                }
                prev = p;
                pos += 1;
            }
            b'-' | b'=' | b'#' | b':' | b'~' => {
                if prev.is_none() || pending.is_some() {
                    return syntax(at, "misplaced bond symbol");
                }
                let q = match c {
                    b'-' => QueryBond::Single,
                    b'=' => QueryBond::Double,
                    b'#' => QueryBond::Triple,
                    b':' => QueryBond::Aromatic,
                    _ => QueryBond::Any,
                };
                pending = Some((q, at));
                pos += 1;
            }
            b'.' => return syntax(at, "patterns must be connected"),
            b'0'..=b'9' | b'%' => {
                let number = if c == b'%' {
                    match (s.get(pos + 1), s.get(pos + 2)) {
                        (Some(a @ b'0'..=b'9'), Some(b @ b'0'..=b'9')) => {
                            pos += 3;
                            u32::from(a - b'0') * 10 + u32::from(b - b'0')
                        }
                        _ => return syntax(at, "expected two digits after %"),
                    }
                } else {
                    pos += 1;
                    u32::from(c - b'0')
                };
                let Some(atom) = prev else {
                    return syntax(at, "ring bond without a preceding atom");
                };
                let bond = pending.take().map(|p| p.0);
                match rings.remove(&number) {
                    Some((open, open_bond, _)) => {
                        let q = match (open_bond, bond) {
                            (Some(x), Some(y)) if x != y => return syntax(at, "ring bond orders disagree"),
                            (Some(x), _) | (None, Some(x)) => x,
                            (None, None) => QueryBond::Implicit,
                        };
                        connect(&mut bonds, open, atom, q, at)?;
                    }
                    None => {
                        rings.insert(number, (atom, bond, at));
                    }
                }
            }
            _ => {
                let (atom, len) = if c == b'[' {
                    bracket(s, pos)?
                } else {
                    organic(s, pos)?
                };
                pos += len;
                atoms.push(atom);
                let idx = atoms.len() - 1;
                if let Some(p) = prev {
                    let q = pending.take().map_or(QueryBond::Implicit, |p| p.0);
                    connect(&mut bonds, p, idx, q, at)?;
                }
                prev = Some(idx);
            }
        }
    }
    if let Some((_, at)) = pending {
        return syntax(at, "bond not followed by an atom");
    }
    if let Some(&(_, at)) = branches.last() {
        return syntax(at, "unbalanced parenthesis");
    }
    if let Some((_, (_, _, at))) = rings.iter().min_by_key(|(_, v)| v.2) {
        return syntax(*at, "ring bond never closed");
    }
    if atoms.len() > MAX_PATTERN_ATOMS {
        return Err(PatternError::PatternTooLarge { atoms: atoms.len() });
    }
    Ok(Pattern {
        atoms,
        bonds,
        source: text.to_string(),
    })
}

fn aromatic_symbol(c: u8) -> Option<Element> {
    Some(match c {
        b'b' => Element::B,
        b'c' => Element::C,
        b'n' => Element::N,
        b'o' => Element::O,
        b'p' => Element::P,
        b's' => Element::S,
        _ => return None,
    })
}

/// Element symbol at `pos` (uppercase, aliphatic) with its length.
fn aliphatic_symbol(s: &[u8], pos: usize) -> Option<(Element, usize)> {
    let c = *s.get(pos)?;
    if let Some(&l) = s.get(pos + 1) {
        if l.is_ascii_lowercase() {
            let two = [c, l];
            if let Some(e) = std::str::from_utf8(&two).ok().and_then(Element::from_symbol) {
                if e != Element::H {
                    return Some((e, 2));
                }
            }
        }
    }
    let one = [c];
    std::str::from_utf8(&one)
        .ok()
        .and_then(Element::from_symbol)
        .filter(|e| *e != Element::H)
        .map(|e| (e, 1))
}

fn organic(s: &[u8], pos: usize) -> Result<(QueryAtom, usize), PatternError> {
    let c = s[pos];
    if c == b'*' {
        return Ok((QueryAtom::default(), 1));
    }
    if let Some(e) = aromatic_symbol(c) {
        return Ok((
            QueryAtom {
                element: Some(e),
                aromatic: Some(true),
                ..QueryAtom::default()
            },
            1,
        ));
    }
    match aliphatic_symbol(s, pos) {
        Some((e, len)) if e.is_organic_subset() => Ok((
            QueryAtom {
                element: Some(e),
                aromatic: Some(false),
                ..QueryAtom::default()
            },
            len,
        )),
        _ => syntax(pos, format!("unexpected character `{}`", c as char)),
    }
}

fn bracket(s: &[u8], start: usize) -> Result<(QueryAtom, usize), PatternError> {
    let mut pos = start + 1;
    let mut atom = QueryAtom::default();
    match s.get(pos) {
        Some(b'*') => pos += 1,
        Some(&c) if aromatic_symbol(c).is_some() => {
            atom.element = aromatic_symbol(c);
            atom.aromatic = Some(true);
            pos += 1;
        }
        Some(&c) if c.is_ascii_uppercase() && c != b'R' && c != b'H' => match aliphatic_symbol(s, pos) {
            Some((e, len)) => {
                atom.element = Some(e);
                atom.aromatic = Some(false);
                pos += len;
            }
            None => return syntax(pos, "unknown element"),
        },
        Some(b'H') => return syntax(pos, "hydrogen atoms are not supported in patterns"),
        _ => {}
    }
    loop {
        match s.get(pos) {
            Some(b']') => {
                pos += 1;
                break;
            }
            Some(b'R') => {
                atom.in_ring = Some(true);
                pos += 1;
            }
            Some(b'!') if s.get(pos + 1) == Some(&b'R') => {
                atom.in_ring = Some(false);
                pos += 2;
            }
            Some(b'H') => {
                pos += 1;
                let mut h = 1;
                if let Some(d @ b'0'..=b'9') = s.get(pos) {
                    h = d - b'0';
                    pos += 1;
                }
                atom.hydrogens = Some(h);
            }
            Some(&sign @ (b'+' | b'-')) => {
                let unit: i8 = if sign == b'+' { 1 } else { -1 };
                pos += 1;
                let mut charge = unit;
                if let Some(d @ b'0'..=b'9') = s.get(pos) {
                    charge = unit * (d - b'0') as i8;
                    pos += 1;
                }
                atom.charge = Some(charge);
            }
            Some(&c) => return syntax(pos, format!("unexpected character `{}` in bracket", c as char)),
            None => return syntax(start, "unterminated bracket"),
        }
    }
    Ok((atom, pos - start))
}
