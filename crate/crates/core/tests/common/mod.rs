//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use gems_core::molgraph::{Atom, Bond, BondOrder, DraftAtom, Element, Molecule, MoleculeDraft};
use gems_core::substructure::{Pattern, QueryBond};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Hand-picked structures covering rings, charges, heteroatoms and branching.
pub const CURATED: &[&str] = &[
    "C", "CC", "CCO", "OCC", "CC(=O)O", "CC(C)(C)C", "C=C", "C#N", "C#CC", "O=C=O",
    "c1ccccc1", "Cc1ccccc1", "Oc1ccccc1", "Nc1ccccc1", "c1ccncc1", "c1ccoc1", "c1ccsc1", "c1cc[nH]c1",
    "c1ccc2ccccc2c1", "c1ccc(cc1)-c1ccccc1", "C1CC1", "C1CCC1", "C1CCCCC1", "C1CCOC1", "C1CCNCC1",
    "O=S(=O)(O)O", "CS(=O)C", "CP(=O)(O)O", "OB(O)O", "C[N+](C)(C)C", "[O-]C(=O)C", "[NH4+]",
    "CC(C)(C)c1cc(C)cc(C(C)(C)C)c1O", "COc1ccc(O)cc1C(C)(C)C", "CC(C)(C)c1cc(O)ccc1O",
    "c1ccc(cc1)Nc1ccccc1", "CC(=O)Nc1ccc(O)cc1", "CC(=O)Oc1ccccc1C(=O)O", "CN1C=NC2=C1C(=O)N(C)C(=O)N2C",
    "ClC(Cl)(Cl)Cl", "FC(F)(F)C(F)(F)F", "BrCCBr", "ICC", "CC(Cl)=C", "N#Cc1ccccc1", "O=Cc1ccccc1",
    "OC(=O)c1ccccc1O", "CCN(CC)CC", "C1CC2CCC1C2", "C1CC2(CC1)CCC2", "C12C3C4C1C5C2C3C45",
    "CC1=CC(=O)C=CC1=O", "C=CC=C", "C=CC=O", "OCC(O)CO", "NCC(=O)O", "CC(N)C(=O)O", "CSCCC(N)C(=O)O",
    "c1ccc2[nH]ccc2c1", "c1cnc2[nH]cnc2c1", "Cc1ncc[nH]1", "c1cscn1", "O=c1cc[nH]cc1", "c1ccc2c(c1)oc1ccccc12",
    "CCCCCCCCCCCCCCCC", "CC(C)CC(C)CC(C)CC(C)C", "OC1C(O)C(O)C(O)C(O)C1O", "C(C(C(C(C(CO)O)O)O)O)O",
    "CC(C)(C)OC(=O)N", "CCOC(=O)C(C)=C", "C1=CCC=CC1", "C1=CC=CC=C1", "N=C=O", "S=C=S", "CN=C=S",
    "C[S+](C)C", "C[N-]S(=O)(=O)C", "[O-][N+](=O)c1ccccc1", "Oc1c(Cl)cc(Cl)cc1Cl", "Brc1ccc(Br)cc1",
    "c1ccc(cc1)C(c1ccccc1)(c1ccccc1)O", "CC12CCC3C(CCC4CC(O)CCC34C)C1CCC2O", "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "COc1cc(C=O)ccc1O", "OC(=O)CCC(=O)O", "C(=O)(O)C(=O)O", "NC(=N)N", "NC(=O)N", "CNC(=O)Oc1cccc2ccccc12",
    "Clc1ccc(cc1)C(c1ccc(Cl)cc1)C(Cl)(Cl)Cl", "CC(C)NCC(O)COc1cccc2ccccc12", "c1ccc2cc3ccccc3cc2c1",
    "C%10CC%10", "C1CC%12CC1%12", "B1OB(O)OB(O)O1", "OP(=O)(O)OP(=O)(O)O", "FS(F)(F)(F)(F)F",
];

pub fn permute(mol: &Molecule, perm: &[usize]) -> Molecule {
    // perm[old] = new
    let mut atoms = vec![*mol.atom(0); mol.atom_count()];
    for (old, &new) in perm.iter().enumerate() {
        atoms[new] = *mol.atom(old);
    }
    let bonds = mol
        .bonds()
        .iter()
        .map(|b| Bond {
            a: perm[b.a],
            b: perm[b.b],
            order: b.order,
        })
        .collect();
    Molecule::from_raw(atoms, bonds)
}

fn label(a: &Atom) -> (Element, i8, bool, u8) {
    (a.element, a.formal_charge, a.aromatic, a.implicit_hydrogens)
}

fn adjacency(mol: &Molecule) -> Vec<Vec<(usize, BondOrder)>> {
    let mut adj = vec![Vec::new(); mol.atom_count()];
    for b in mol.bonds() {
        adj[b.a].push((b.b, b.order));
        adj[b.b].push((b.a, b.order));
    }
    adj
}

fn bfs_order(adj: &[Vec<(usize, BondOrder)>]) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut order = Vec::new();
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            order.push(v);
            for &(w, _) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    q.push_back(w);
                }
            }
        }
    }
    order
}

/// Labelled graph isomorphism by exhaustive backtracking.
pub fn isomorphic(a: &Molecule, b: &Molecule) -> bool {
    if a.atom_count() != b.atom_count() || a.bonds().len() != b.bonds().len() {
        return false;
    }
    let mut la: Vec<_> = a.atoms().iter().map(label).collect();
    let mut lb: Vec<_> = b.atoms().iter().map(label).collect();
    la.sort();
    lb.sort();
    if la != lb {
        return false;
    }
    let adj_a = adjacency(a);
    let adj_b = adjacency(b);
    let order = bfs_order(&adj_a);
    let mut map = vec![usize::MAX; a.atom_count()];
    let mut used = vec![false; b.atom_count()];

    #[allow(clippy::too_many_arguments)]
    fn extend(
        k: usize,
        order: &[usize],
        a: &Molecule,
        b: &Molecule,
        adj_a: &[Vec<(usize, BondOrder)>],
        adj_b: &[Vec<(usize, BondOrder)>],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if k == order.len() {
            return true;
        }
        let v = order[k];
        for w in 0..b.atom_count() {
            if used[w] || label(a.atom(v)) != label(b.atom(w)) || adj_a[v].len() != adj_b[w].len() {
                continue;
            }
            let consistent = adj_a[v].iter().all(|&(u, order)| {
                map[u] == usize::MAX || adj_b[w].iter().any(|&(x, o)| x == map[u] && o == order)
            });
            if !consistent {
                continue;
            }
            map[v] = w;
            used[w] = true;
            if extend(k + 1, order, a, b, adj_a, adj_b, map, used) {
                return true;
            }
            map[v] = usize::MAX;
            used[w] = false;
        }
        false
    }
    extend(0, &order, a, b, &adj_a, &adj_b, &mut map, &mut used)
}

fn connected_without(mol: &Molecule, skip: usize) -> bool {
    let n = mol.atom_count();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for (i, b) in mol.bonds().iter().enumerate() {
            if i == skip {
                continue;
            }
            let w = if b.a == v {
                b.b
            } else if b.b == v {
                b.a
            } else {
                continue;
            };
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Bonds whose removal keeps a connected molecule connected.
pub fn cyclic_bonds_oracle(mol: &Molecule) -> BTreeSet<usize> {
    (0..mol.bonds().len()).filter(|&i| connected_without(mol, i)).collect()
}

pub fn ring_atoms_oracle(mol: &Molecule) -> Vec<bool> {
    let cyclic = cyclic_bonds_oracle(mol);
    let mut ring = vec![false; mol.atom_count()];
    for &i in &cyclic {
        let b = mol.bonds()[i];
        ring[b.a] = true;
        ring[b.b] = true;
    }
    ring
}

fn bond_ok(q: QueryBond, order: BondOrder) -> bool {
    match q {
        QueryBond::Single => order == BondOrder::Single,
        QueryBond::Double => order == BondOrder::Double,
        QueryBond::Triple => order == BondOrder::Triple,
        QueryBond::Aromatic => order == BondOrder::Aromatic,
        QueryBond::Any => true,
        QueryBond::Implicit => order == BondOrder::Single || order == BondOrder::Aromatic,
    }
}

/// Counts distinct heavy-atom sets matched by the pattern, trying every
/// injective assignment of pattern atoms to molecule atoms.
pub fn brute_force_count(mol: &Molecule, pattern: &Pattern) -> usize {
    let ring = ring_atoms_oracle(mol);
    let q = pattern.atoms();
    let candidates: Vec<Vec<usize>> = q
        .iter()
        .map(|qa| {
            (0..mol.atom_count())
                .filter(|&i| {
                    let a = mol.atom(i);
                    a.element != Element::H
                        && qa.element.is_none_or(|e| e == a.element)
                        && qa.aromatic.is_none_or(|f| f == a.aromatic)
                        && qa.in_ring.is_none_or(|f| f == ring[i])
                        && qa.charge.is_none_or(|c| c == a.formal_charge)
                        && qa.hydrogens.is_none_or(|h| usize::from(h) == mol.total_hydrogens(i))
                })
                .collect()
        })
        .collect();
    let mut sets = BTreeSet::new();
    let mut assignment = vec![0usize; q.len()];
    fn walk(
        k: usize,
        candidates: &[Vec<usize>],
        assignment: &mut Vec<usize>,
        mol: &Molecule,
        pattern: &Pattern,
        sets: &mut BTreeSet<Vec<usize>>,
    ) {
        if k == candidates.len() {
            let ok = pattern.bonds().iter().all(|&(x, y, qb)| {
                mol.bonds().iter().any(|b| {
                    ((b.a == assignment[x] && b.b == assignment[y]) || (b.b == assignment[x] && b.a == assignment[y]))
                        && bond_ok(qb, b.order)
                })
            });
            if ok {
                let mut s = assignment.clone();
                s.sort();
                sets.insert(s);
            }
            return;
        }
        for &c in &candidates[k] {
            if assignment[..k].contains(&c) {
                continue;
            }
            assignment[k] = c;
            walk(k + 1, candidates, assignment, mol, pattern, sets);
        }
    }
    walk(0, &candidates, &mut assignment, mol, pattern, &mut sets);
    sets.len()
}

const SIDE_ELEMENTS: [Element; 6] = [Element::C, Element::C, Element::N, Element::O, Element::S, Element::Cl];

/// A random valid connected molecule with at most `max_atoms` heavy atoms.
pub fn random_molecule<R: Rng>(rng: &mut R, max_atoms: usize) -> Molecule {
    loop {
        let mut d = MoleculeDraft::default();
        match rng.random_range(0..5) {
            0 | 1 if max_atoms >= 6 => {
                let n_pos = rng.random_bool(0.3).then(|| rng.random_range(0..6));
                for i in 0..6 {
                    let e = if Some(i) == n_pos { Element::N } else { Element::C };
                    let mut a = DraftAtom::new(e);
                    a.aromatic = true;
                    d.add_atom(a);
                }
                for i in 0..6 {
                    d.add_bond(i, (i + 1) % 6, BondOrder::Aromatic);
                }
            }
            2 if max_atoms >= 3 => {
                let size = rng.random_range(3..=max_atoms.min(6));
                for _ in 0..size {
                    d.add_atom(DraftAtom::new(Element::C));
                }
                for i in 0..size {
                    d.add_bond(i, (i + 1) % size, BondOrder::Single);
                }
            }
            _ => {
                d.add_atom(DraftAtom::new(*SIDE_ELEMENTS.choose(rng).unwrap()));
            }
        }
        let target = rng.random_range(d.atoms.len()..=max_atoms);
        while d.atoms.len() < target {
            let anchor = rng.random_range(0..d.atoms.len());
            let e = *SIDE_ELEMENTS.choose(rng).unwrap();
            let order = match rng.random_range(0..10) {
                0 => BondOrder::Double,
                1 if e == Element::C || e == Element::N => BondOrder::Triple,
                _ => BondOrder::Single,
            };
            let new = d.add_atom(DraftAtom::new(e));
            d.add_bond(anchor, new, order);
        }
        if d.atoms.len() >= 4 && rng.random_bool(0.2) {
            let a = rng.random_range(0..d.atoms.len());
            let b = rng.random_range(0..d.atoms.len());
            if a != b && d.bond_between(a, b).is_none() && !d.atoms[a].aromatic && !d.atoms[b].aromatic {
                d.add_bond(a, b, BondOrder::Single);
            }
        }
        for i in 0..d.atoms.len() {
            d.touch(i);
        }
        if let Ok(m) = d.build() {
            return m;
        }
    }
}

const PATTERN_ATOMS: &[&str] = &[
    "C", "C", "C", "C", "C", "c", "c", "c", "N", "n", "O", "O", "S", "Cl", "*", "*", "*", "[R]", "[!R]", "[CR]", "[C!R]", "[cR]", "[*R]", "[CH3]",
    "[CH2]", "[NH2]", "[OH]", "[N+]", "[O-]",
];
const PATTERN_BONDS: &[&str] = &["", "", "", "", "-", "=", "#", ":", "~", "~"];

/// A random connected pattern with 1 to `max_atoms` atoms, possibly with
/// one branch and one ring closure.
pub fn random_pattern<R: Rng>(rng: &mut R, max_atoms: usize) -> String {
    let n = rng.random_range(1..=max_atoms);
    let atom = |rng: &mut R| PATTERN_ATOMS.choose(rng).unwrap().to_string();
    let bond = |rng: &mut R| PATTERN_BONDS.choose(rng).unwrap().to_string();
    let mut s = atom(rng);
    let branch_at = (n >= 3 && rng.random_bool(0.4)).then(|| rng.random_range(1..n - 1));
    // a closure between already bonded atoms is not a ring
    let ring = n >= 3 && !(n == 3 && branch_at.is_some()) && rng.random_bool(0.25);
    if ring {
        s.push('1');
    }
    for i in 1..n {
        let piece = format!("{}{}", bond(rng), atom(rng));
        if Some(i) == branch_at {
            s.push('(');
            s.push_str(&piece);
            s.push(')');
        } else {
            s.push_str(&piece);
        }
    }
    if ring {
        s.push('1');
    }
    s
}

/// A linear pattern read off a random walk through `mol`, with some atoms
/// and bonds relaxed to wildcards. Always matches at least once.
pub fn pattern_from_walk<R: Rng>(rng: &mut R, mol: &Molecule, max_atoms: usize) -> String {
    let heavy: Vec<usize> = (0..mol.atom_count()).filter(|&i| mol.atom(i).element != Element::H).collect();
    let mut path = vec![*heavy.choose(rng).unwrap()];
    let mut orders = Vec::new();
    let len = rng.random_range(1..=max_atoms);
    while path.len() < len {
        let last = *path.last().unwrap();
        let next: Vec<_> = mol
            .neighbors(last)
            .iter()
            .filter(|n| !path.contains(&n.atom) && mol.atom(n.atom).element != Element::H)
            .collect();
        let Some(n) = next.choose(rng) else { break };
        path.push(n.atom);
        orders.push(mol.bonds()[n.bond].order);
    }
    let mut s = String::new();
    for (k, &i) in path.iter().enumerate() {
        if k > 0 {
            let exact = match orders[k - 1] {
                BondOrder::Single => "-",
                BondOrder::Double => "=",
                BondOrder::Triple => "#",
                BondOrder::Aromatic => ":",
            };
            let implicit_ok = matches!(orders[k - 1], BondOrder::Single | BondOrder::Aromatic);
            s.push_str(match rng.random_range(0..4) {
                0 => "~",
                1 if implicit_ok => "",
                _ => exact,
            });
        }
        let a = mol.atom(i);
        let symbol = a.element.to_string();
        match rng.random_range(0..5) {
            0 => s.push('*'),
            _ if a.aromatic => s.push_str(&symbol.to_lowercase()),
            _ => s.push_str(&symbol),
        }
    }
    s
}

/// Random organic-subset SMILES text; only some of it is valid.
pub fn fuzz_smiles<R: Rng>(rng: &mut R, max_atoms: usize) -> String {
    const ATOMS: &[&str] = &["C", "C", "C", "N", "O", "S", "F", "Cl", "Br", "c", "[NH+]", "[O-]", "P", "B"];
    const BONDS: &[&str] = &["", "", "", "", "=", "#"];
    let n = rng.random_range(1..=max_atoms);
    let mut s = String::new();
    let mut depth = 0;
    let mut open_rings: Vec<u32> = Vec::new();
    let mut next_ring = 1;
    for i in 0..n {
        if i > 0 {
            if depth > 0 && rng.random_bool(0.3) {
                s.push(')');
                depth -= 1;
            } else if rng.random_bool(0.2) && i + 1 < n {
                s.push('(');
                depth += 1;
            }
            s.push_str(BONDS.choose(rng).unwrap());
        }
        s.push_str(ATOMS.choose(rng).unwrap());
        if rng.random_bool(0.15) {
            if let Some(r) = open_rings.pop() {
                push_ring(&mut s, r);
            } else {
                push_ring(&mut s, next_ring);
                open_rings.push(next_ring);
                next_ring += 1;
            }
        }
    }
    for r in open_rings {
        push_ring(&mut s, r);
    }
    for _ in 0..depth {
        s.push(')');
    }
    s
}

fn push_ring(s: &mut String, r: u32) {
    if r < 10 {
        s.push_str(&r.to_string());
    } else {
        s.push_str(&format!("%{r:02}"));
    }
}

/// One-request-per-connection HTTP stub. The handler receives the request
/// line, headers and body and returns a status code and JSON body.
pub struct MockServer {
    pub url: String,
    pub requests: std::sync::Arc<std::sync::atomic::AtomicUsize>,
}

pub struct MockRequest {
    pub head: String,
    pub body: String,
}

impl MockServer {
    pub fn start<F>(handler: F) -> MockServer
    where
        F: Fn(&MockRequest) -> (u16, String) + Send + 'static,
    {
        use std::io::{BufRead, BufReader, Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let requests = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let counter = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                    head.push_str(&line);
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).ok();
                counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let req = MockRequest {
                    head,
                    body: String::from_utf8_lossy(&body).into_owned(),
                };
                let (status, text) = handler(&req);
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                stream.write_all(response.as_bytes()).ok();
            }
        });
        MockServer { url, requests }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(std::sync::atomic::Ordering::SeqCst)
    }
}
