mod common;

use gems_core::molgraph::{
    canonical_smiles, cycle_rank, layout_2d, molecular_weight, parse_single, parse_smiles, ring_atoms, ring_bonds,
    smallest_rings, validate_valence, Atom, Bond, BondOrder, Element, Molecule, SmilesErrorKind, MAX_SMILES_LEN,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{cyclic_bonds_oracle, isomorphic, permute, random_molecule, ring_atoms_oracle, CURATED};

fn mol(seed: u64, max_atoms: usize) -> Molecule {
    random_molecule(&mut ChaCha8Rng::seed_from_u64(seed), max_atoms)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_text_round_trips(seed in any::<u64>()) {
        let m = mol(seed, 18);
        let text = canonical_smiles(&m);
        let back = parse_single(&text).unwrap();
        prop_assert!(isomorphic(&m, &back), "{text}");
        prop_assert_eq!(canonical_smiles(&back), text);
    }

    #[test]
    fn canonical_text_ignores_atom_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let m = mol(seed, 18);
        let mut perm: Vec<usize> = (0..m.atom_count()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let p = permute(&m, &perm);
        prop_assert_eq!(p.canonical_key(), m.canonical_key());
        prop_assert!(isomorphic(&p, &m));
    }

    #[test]
    fn ring_bonds_are_exactly_the_non_bridges(seed in any::<u64>()) {
        let m = mol(seed, 14);
        prop_assert_eq!(ring_bonds(&m), cyclic_bonds_oracle(&m));
        prop_assert_eq!(ring_atoms(&m), ring_atoms_oracle(&m));
        prop_assert_eq!(cycle_rank(&m), m.bonds().len() + 1 - m.atom_count());
    }

    #[test]
    fn generated_molecules_are_valid(seed in any::<u64>()) {
        let m = mol(seed, 20);
        prop_assert!(validate_valence(&m).is_ok());
        prop_assert!(m.is_connected());
    }

    #[test]
    fn layouts_keep_atoms_apart(seed in any::<u64>()) {
        let m = mol(seed, 20);
        let layout = layout_2d(&m);
        prop_assert_eq!(layout.coords.len(), m.atom_count());
        for (i, a) in layout.coords.iter().enumerate() {
            prop_assert!(a[0].is_finite() && a[1].is_finite());
            for b in &layout.coords[i + 1..] {
                prop_assert!((a[0] - b[0]).hypot(a[1] - b[1]) >= 0.5);
            }
        }
        prop_assert_eq!(layout_2d(&m), layout);
    }
}

#[test]
fn curated_corpus_round_trips() {
    for s in CURATED {
        let m = parse_single(s).unwrap_or_else(|e| panic!("{s}: {e}"));
        let back = parse_single(m.canonical_key()).unwrap();
        assert!(isomorphic(&m, &back), "{s}");
    }
}

#[test]
fn spellings_of_one_molecule_agree() {
    let groups: [&[&str]; 4] = [
        &["OCC", "CCO", "C(O)C", "[CH3][CH2][OH]"],
        &["c1ccccc1O", "Oc1ccccc1", "c1cc(O)ccc1"],
        &["CC(=O)O", "OC(C)=O", "C(C)(O)=O"],
        &["C1CC1", "C1CC-1", "C%11CC%11"],
    ];
    for g in groups {
        let keys: Vec<String> = g.iter().map(|s| parse_single(s).unwrap().canonical_key().to_string()).collect();
        assert!(keys.windows(2).all(|w| w[0] == w[1]), "{keys:?}");
    }
    assert_ne!(
        parse_single("c1ccccc1").unwrap().canonical_key(),
        parse_single("C1=CC=CC=C1").unwrap().canonical_key()
    );
}

#[test]
fn molecular_weights_match_hand_sums() {
    // conventional standard atomic weights: H 1.008, C 12.011, N 14.007, O 15.999, Cl 35.45
    let cases = [
        ("CCO", 46.069),
        ("c1ccccc1", 78.114),
        ("CC(=O)Oc1ccccc1C(=O)O", 180.159),
        ("CN1C=NC2=C1C(=O)N(C)C(=O)N2C", 194.194),
        ("ClC(Cl)Cl", 119.369),
    ];
    for (s, w) in cases {
        let got = molecular_weight(&parse_single(s).unwrap());
        assert!((got - w).abs() < 1e-9, "{s}: {got} vs {w}");
    }
}

#[test]
fn parse_errors_carry_offsets() {
    let cases: [(&str, usize, SmilesErrorKind); 9] = [
        ("", 0, SmilesErrorKind::EmptyInput),
        ("CC(C", 2, SmilesErrorKind::UnbalancedParenthesis),
        ("C1CC", 1, SmilesErrorKind::UnclosedRingBond { ring: 1 }),
        ("CC?", 2, SmilesErrorKind::UnexpectedCharacter { found: '?' }),
        ("C[Xe]", 2, SmilesErrorKind::UnknownElement { symbol: "Xe".into() }),
        ("F/C=C/F", 1, SmilesErrorKind::StereoNotSupported),
        ("[13CH4]", 1, SmilesErrorKind::IsotopeNotSupported),
        ("C[C", 1, SmilesErrorKind::UnclosedBracket),
        ("CCQ", 2, SmilesErrorKind::UnknownElement { symbol: "Q".into() }),
    ];
    for (text, offset, kind) in cases {
        let e = parse_single(text).unwrap_err();
        assert_eq!((e.offset, &e.kind), (offset, &kind), "{text}");
    }
    let long = "C".repeat(MAX_SMILES_LEN + 1);
    assert_eq!(parse_single(&long).unwrap_err().kind, SmilesErrorKind::InputTooLong);
    assert!(matches!(
        parse_single("C(C)(C)(C)(C)C").unwrap_err().kind,
        SmilesErrorKind::ValenceViolation { .. }
    ));
    assert!(matches!(
        parse_single("CCO.CC").unwrap_err().kind,
        SmilesErrorKind::MultipleFragments { count: 2 }
    ));
    assert_eq!(parse_smiles("CCO.CC").unwrap().len(), 2);
}

#[test]
fn raw_graphs_are_checked_on_demand() {
    let c = |h| Atom {
        element: Element::C,
        formal_charge: 0,
        aromatic: false,
        implicit_hydrogens: h,
    };
    let bond = |a, b| Bond {
        a,
        b,
        order: BondOrder::Single,
    };
    let ethane = Molecule::from_raw(vec![c(3), c(3)], vec![bond(0, 1)]);
    assert!(validate_valence(&ethane).is_ok());
    let overfull = Molecule::from_raw(vec![c(4), c(3)], vec![bond(0, 1)]);
    let violations = validate_valence(&overfull).unwrap_err();
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0].atom, 0);
    let split = Molecule::from_raw(vec![c(4), c(4)], vec![]);
    assert!(!split.is_connected());
    assert_eq!(split.components().len(), 2);
}

#[test]
fn smallest_rings_of_fused_systems() {
    let naphthalene = parse_single("c1ccc2ccccc2c1").unwrap();
    let mut sizes: Vec<usize> = smallest_rings(&naphthalene).iter().map(Vec::len).collect();
    sizes.sort();
    assert_eq!(sizes, vec![6, 6]);
    let norbornane = parse_single("C1CC2CCC1C2").unwrap();
    let mut sizes: Vec<usize> = smallest_rings(&norbornane).iter().map(Vec::len).collect();
    sizes.sort();
    assert_eq!(sizes, vec![5, 5]);
    assert_eq!(cycle_rank(&parse_single("C12C3C4C1C5C2C3C45").unwrap()), 5);
}
