use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::{BondOrder, BuildError, DraftAtom, Element, Molecule, MoleculeDraft, ValenceViolation};

pub const MAX_SMILES_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmilesErrorKind {
    #[error("empty input")]
    EmptyInput,
    #[error("input longer than {MAX_SMILES_LEN} characters")]
    InputTooLong,
    #[error("unbalanced parenthesis")]
    UnbalancedParenthesis,
    #[error("ring bond {ring} is never closed")]
    UnclosedRingBond { ring: u32 },
    #[error("unknown or unsupported element `{symbol}`")]
    UnknownElement { symbol: String },
    #[error("valence violation: {violations:?}")]
    ValenceViolation { violations: Vec<ValenceViolation> },
    #[error("stereochemistry is not supported")]
    StereoNotSupported,
    #[error("isotopes are not supported")]
    IsotopeNotSupported,
    #[error("unexpected character `{found}`")]
    UnexpectedCharacter { found: char },
    #[error("unterminated bracket atom")]
    UnclosedBracket,
    #[error("bond symbol not followed by an atom")]
    MisplacedBond,
    #[error("branch or ring bond without a preceding atom")]
    MisplacedBranch,
    #[error("ring closure bond orders disagree")]
    RingBondConflict,
    #[error("atoms bonded more than once")]
    DuplicateBond,
    #[error("aromatic bond between non-aromatic atoms")]
    AromaticBondMismatch,
    #[error("formal charge outside [-2, +2]")]
    UnsupportedCharge,
    #[error("fragment exceeds the heavy-atom cap")]
    TooManyAtoms,
    #[error("expected a single fragment, found {count}")]
    MultipleFragments { count: usize },
}

/// A SMILES syntax or chemistry error at a byte offset.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("SMILES error at offset {offset}: {kind}")]
pub struct SmilesError {
    pub offset: usize,
    #[serde(flatten)]
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(offset: usize, kind: SmilesErrorKind) -> Self {
        SmilesError { offset, kind }
    }
}

type PResult<T> = Result<T, SmilesError>;

struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    draft: MoleculeDraft,
    offsets: Vec<usize>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<(Option<usize>, usize, usize)>,
    rings: BTreeMap<u32, RingOpen>,
}

/// Parses SMILES text into one molecule per dot-separated fragment.
///
/// Atom order within each fragment follows token order.
pub fn parse_smiles(text: &str) -> Result<Vec<Molecule>, SmilesError> {
    if text.is_empty() {
        return Err(SmilesError::new(0, SmilesErrorKind::EmptyInput));
    }
    if text.len() > MAX_SMILES_LEN {
        return Err(SmilesError::new(MAX_SMILES_LEN, SmilesErrorKind::InputTooLong));
    }
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
        draft: MoleculeDraft::default(),
        offsets: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.run()?;
    p.finish()
}

/// Parses text that must describe exactly one connected molecule.
pub fn parse_single(text: &str) -> Result<Molecule, SmilesError> {
    let mut frags = parse_smiles(text)?;
    if frags.len() != 1 {
        let offset = text.find('.').unwrap_or(0);
        return Err(SmilesError::new(
            offset,
            SmilesErrorKind::MultipleFragments { count: frags.len() },
        ));
    }
    Ok(frags.pop().expect("one fragment"))
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.s.get(self.pos + k).copied()
    }

    fn err<T>(&self, offset: usize, kind: SmilesErrorKind) -> PResult<T> {
        Err(SmilesError::new(offset, kind))
    }

    fn run(&mut self) -> PResult<()> {
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return self.err(at, SmilesErrorKind::MisplacedBranch);
                    }
                    if let Some((_, off)) = self.pending {
                        return self.err(off, SmilesErrorKind::MisplacedBond);
                    }
                    self.branches.push((self.prev, at, self.draft.atoms.len()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((prev, _, atoms_before)) = self.branches.pop() else {
                        return self.err(at, SmilesErrorKind::UnbalancedParenthesis);
                    };
                    if let Some((_, off)) = self.pending {
                        return self.err(off, SmilesErrorKind::MisplacedBond);
                    }
                    if self.draft.atoms.len() == atoms_before {
                        return self.err(at, SmilesErrorKind::MisplacedBranch);
                    }
                    self.prev = prev;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending.is_some() || self.prev.is_none() {
                        return self.err(at, SmilesErrorKind::MisplacedBond);
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending = Some((order, at));
                    self.pos += 1;
                }
                b'/' | b'\\' => return self.err(at, SmilesErrorKind::StereoNotSupported),
                b'.' => {
                    if let Some((_, off)) = self.pending {
                        return self.err(off, SmilesErrorKind::MisplacedBond);
                    }
                    if self.prev.is_none() || !self.branches.is_empty() {
                        return self.err(at, SmilesErrorKind::UnexpectedCharacter { found: '.' });
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.push_atom(atom, at)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.push_atom(atom, at)?;
                }
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> PResult<DraftAtom> {
        let at = self.pos;
        let c = self.peek().expect("caller checked");
        let (element, aromatic, len) = match c {
            b'B' if self.peek_at(1) == Some(b'r') => (Element::Br, false, 2),
            b'C' if self.peek_at(1) == Some(b'l') => (Element::Cl, false, 2),
            b'B' => (Element::B, false, 1),
            b'C' => (Element::C, false, 1),
            b'N' => (Element::N, false, 1),
            b'O' => (Element::O, false, 1),
            b'P' => (Element::P, false, 1),
            b'S' => (Element::S, false, 1),
            b'F' => (Element::F, false, 1),
            b'I' => (Element::I, false, 1),
            b'b' => (Element::B, true, 1),
            b'c' => (Element::C, true, 1),
            b'n' => (Element::N, true, 1),
            b'o' => (Element::O, true, 1),
            b'p' => (Element::P, true, 1),
            b's' => (Element::S, true, 1),
            b'*' => {
                return self.err(at, SmilesErrorKind::UnknownElement { symbol: "*".into() })
            }
            c if c.is_ascii_alphabetic() => {
                let mut symbol = String::from(c as char);
                if c.is_ascii_uppercase() {
                    if let Some(l) = self.peek_at(1).filter(u8::is_ascii_lowercase) {
                        symbol.push(l as char);
                    }
                }
                return self.err(at, SmilesErrorKind::UnknownElement { symbol });
            }
            c => {
                let found = std::str::from_utf8(&self.s[at..])
                    .ok()
                    .and_then(|s| s.chars().next())
                    .unwrap_or(c as char);
                return self.err(at, SmilesErrorKind::UnexpectedCharacter { found });
            }
        };
        self.pos += len;
        Ok(DraftAtom {
            element,
            formal_charge: 0,
            aromatic,
            hydrogens: None,
        })
    }

    fn bracket_atom(&mut self) -> PResult<DraftAtom> {
        let open = self.pos;
        self.pos += 1;
        if matches!(self.peek(), Some(b'0'..=b'9')) {
            return self.err(self.pos, SmilesErrorKind::IsotopeNotSupported);
        }
        let sym_at = self.pos;
        let (element, aromatic) = match self.peek() {
            None => return self.err(open, SmilesErrorKind::UnclosedBracket),
            Some(c) if c.is_ascii_uppercase() => {
                let mut symbol = String::from(c as char);
                if let Some(l) = self.peek_at(1).filter(u8::is_ascii_lowercase) {
                    symbol.push(l as char);
                }
                match Element::from_symbol(&symbol) {
                    Some(e) => {
                        self.pos += symbol.len();
                        (e, false)
                    }
                    None => return self.err(sym_at, SmilesErrorKind::UnknownElement { symbol }),
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                let element = match c {
                    b'b' => Element::B,
                    b'c' => Element::C,
                    b'n' => Element::N,
                    b'o' => Element::O,
                    b'p' => Element::P,
                    b's' => Element::S,
                    _ => {
                        let mut symbol = String::from(c as char);
                        if let Some(l) = self.peek_at(1).filter(u8::is_ascii_lowercase) {
                            symbol.push(l as char);
                        }
                        return self.err(sym_at, SmilesErrorKind::UnknownElement { symbol });
                    }
                };
                if matches!(self.peek_at(1), Some(l) if l.is_ascii_lowercase()) {
                    let symbol = String::from_utf8_lossy(&self.s[sym_at..sym_at + 2]).into_owned();
                    return self.err(sym_at, SmilesErrorKind::UnknownElement { symbol });
                }
                self.pos += 1;
                (element, true)
            }
            Some(b'*') => {
                return self.err(sym_at, SmilesErrorKind::UnknownElement { symbol: "*".into() })
            }
            Some(c) => {
                return self.err(sym_at, SmilesErrorKind::UnexpectedCharacter { found: c as char })
            }
        };
        if self.peek() == Some(b'@') {
            return self.err(self.pos, SmilesErrorKind::StereoNotSupported);
        }
        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = 1;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                hydrogens = d - b'0';
                self.pos += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let charge_at = self.pos;
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            charge = unit;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                charge = unit * i32::from(d - b'0');
                self.pos += 1;
            } else {
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
            if !(-2..=2).contains(&charge) {
                return self.err(charge_at, SmilesErrorKind::UnsupportedCharge);
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b'@') => return self.err(self.pos, SmilesErrorKind::StereoNotSupported),
            Some(c) => {
                return self.err(self.pos, SmilesErrorKind::UnexpectedCharacter { found: c as char })
            }
            None => return self.err(open, SmilesErrorKind::UnclosedBracket),
        }
        Ok(DraftAtom {
            element,
            formal_charge: charge as i8,
            aromatic,
            hydrogens: Some(hydrogens),
        })
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.draft.atoms[a].aromatic && self.draft.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: BondOrder, at: usize) -> PResult<()> {
        if order == BondOrder::Aromatic && !(self.draft.atoms[a].aromatic && self.draft.atoms[b].aromatic) {
            return self.err(at, SmilesErrorKind::AromaticBondMismatch);
        }
        if a == b || self.draft.bond_between(a, b).is_some() {
            return self.err(at, SmilesErrorKind::DuplicateBond);
        }
        self.draft.add_bond(a, b, order);
        Ok(())
    }

    fn push_atom(&mut self, atom: DraftAtom, at: usize) -> PResult<()> {
        let idx = self.draft.add_atom(atom);
        self.offsets.push(at);
        if let Some(prev) = self.prev {
            let (order, bond_at) = match self.pending.take() {
                Some((o, off)) => (o, off),
                None => (self.default_order(prev, idx), at),
            };
            self.add_bond(prev, idx, order, bond_at)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self) -> PResult<()> {
        let at = self.pos;
        let number = if self.peek() == Some(b'%') {
            match (self.peek_at(1), self.peek_at(2)) {
                (Some(a @ b'0'..=b'9'), Some(b @ b'0'..=b'9')) => {
                    self.pos += 3;
                    u32::from(a - b'0') * 10 + u32::from(b - b'0')
                }
                _ => return self.err(at, SmilesErrorKind::UnexpectedCharacter { found: '%' }),
            }
        } else {
            let d = self.peek().expect("digit");
            self.pos += 1;
            u32::from(d - b'0')
        };
        let Some(atom) = self.prev else {
            return self.err(at, SmilesErrorKind::MisplacedBranch);
        };
        let pending = self.pending.take();
        match self.rings.remove(&number) {
            Some(open) => {
                let order = match (open.order, pending.map(|p| p.0)) {
                    (Some(x), Some(y)) if x != y => {
                        return self.err(at, SmilesErrorKind::RingBondConflict)
                    }
                    (Some(x), _) | (None, Some(x)) => x,
                    (None, None) => self.default_order(open.atom, atom),
                };
                self.add_bond(open.atom, atom, order, at)?;
            }
            None => {
                self.rings.insert(
                    number,
                    RingOpen {
                        atom,
                        order: pending.map(|p| p.0),
                        offset: at,
                    },
                );
            }
        }
        Ok(())
    }

    fn finish(self) -> PResult<Vec<Molecule>> {
        if let Some((_, off)) = self.pending {
            return self.err(off, SmilesErrorKind::MisplacedBond);
        }
        if let Some(&(_, off, _)) = self.branches.last() {
            return self.err(off, SmilesErrorKind::UnbalancedParenthesis);
        }
        if let Some(open) = self.rings.values().min_by_key(|o| o.offset) {
            let ring = *self
                .rings
                .iter()
                .find(|(_, o)| o.offset == open.offset)
                .map(|(k, _)| k)
                .expect("present");
            return self.err(open.offset, SmilesErrorKind::UnclosedRingBond { ring });
        }
        if self.draft.atoms.is_empty() {
            return self.err(0, SmilesErrorKind::EmptyInput);
        }

        // Split into connected fragments, keeping token order inside each.
        let n = self.draft.atoms.len();
        let mut comp = (0..n).collect::<Vec<_>>();
        fn find(comp: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while comp[r] != r {
                r = comp[r];
            }
            let mut c = x;
            while comp[c] != r {
                let next = comp[c];
                comp[c] = r;
                c = next;
            }
            r
        }
        for bd in &self.draft.bonds {
            let (ra, rb) = (find(&mut comp, bd.a), find(&mut comp, bd.b));
            if ra != rb {
                comp[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut comp, i);
            groups.entry(r).or_default().push(i);
        }
        let mut out = Vec::with_capacity(groups.len());
        for members in groups.into_values() {
            let mut local = vec![usize::MAX; n];
            let mut draft = MoleculeDraft::default();
            for &g in &members {
                local[g] = draft.add_atom(self.draft.atoms[g]);
            }
            for bd in &self.draft.bonds {
                if local[bd.a] != usize::MAX {
                    draft.add_bond(local[bd.a], local[bd.b], bd.order);
                }
            }
            match draft.build() {
                Ok(m) => out.push(m),
                Err(BuildError::Valence(violations)) => {
                    let first = violations.first().map(|v| members[v.atom]).unwrap_or(members[0]);
                    return self.err(
                        self.offsets[first],
                        SmilesErrorKind::ValenceViolation {
                            violations: violations
                                .into_iter()
                                .map(|v| ValenceViolation {
                                    atom: members[v.atom],
                                    issue: v.issue,
                                })
                                .collect(),
                        },
                    );
                }
                Err(BuildError::TooManyAtoms { .. }) => {
                    return self.err(self.offsets[members[0]], SmilesErrorKind::TooManyAtoms)
                }
                Err(BuildError::AromaticBondMismatch { .. }) => {
                    return self.err(self.offsets[members[0]], SmilesErrorKind::AromaticBondMismatch)
                }
                Err(_) => {
                    return self.err(self.offsets[members[0]], SmilesErrorKind::DuplicateBond)
                }
            }
        }
        Ok(out)
    }
}
