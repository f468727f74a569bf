mod common;

use std::collections::{BTreeMap, BTreeSet};

use gems_core::dataset::{parse_dataset, sample};
use gems_core::ga::{
    apply_edit, candidate_edits, enumerate_crossovers, evolve_generation, generation_rng, rank_order, rank_weight,
    seed_individuals, select_parent, EditKind, GaConfig, GaError, Individual, Origin, RankedPool, ScoreContext,
    Selection, MUTATION_CATALOGUE,
};
use gems_core::metrics::BuiltinProperty;
use gems_core::molgraph::{parse_single, validate_valence, Bond, BondOrder, Molecule};
use gems_core::scoring::{Direction, PropertyCache, PropertyTerm, ScoringSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{cyclic_bonds_oracle, random_molecule};

fn side(mol: &Molecule, start: usize, cut: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for (i, b) in mol.bonds().iter().enumerate() {
            if i == cut || (b.a != v && b.b != v) {
                continue;
            }
            let w = if b.a == v { b.b } else { b.a };
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen
}

/// Offspring keys built directly from the edge lists: cut a non-ring single
/// bond in each parent, keep one side of each and join the cut ends.
fn crossover_oracle(a: &Molecule, b: &Molecule) -> Vec<String> {
    let cuts = |m: &Molecule| -> Vec<usize> {
        let ring = cyclic_bonds_oracle(m);
        (0..m.bonds().len())
            .filter(|i| !ring.contains(i) && m.bonds()[*i].order == BondOrder::Single)
            .collect()
    };
    let mut out = Vec::new();
    for ca in cuts(a) {
        for root_a in [a.bonds()[ca].a, a.bonds()[ca].b] {
            let keep_a = side(a, root_a, ca);
            for cb in cuts(b) {
                for root_b in [b.bonds()[cb].a, b.bonds()[cb].b] {
                    let keep_b = side(b, root_b, cb);
                    let mut atoms = Vec::new();
                    let mut map_a = BTreeMap::new();
                    let mut map_b = BTreeMap::new();
                    for &i in &keep_a {
                        map_a.insert(i, atoms.len());
                        atoms.push(*a.atom(i));
                    }
                    for &i in &keep_b {
                        map_b.insert(i, atoms.len());
                        atoms.push(*b.atom(i));
                    }
                    let mut bonds: Vec<Bond> = Vec::new();
                    for (m, map) in [(a, &map_a), (b, &map_b)] {
                        for bd in m.bonds() {
                            if let (Some(&x), Some(&y)) = (map.get(&bd.a), map.get(&bd.b)) {
                                bonds.push(Bond { a: x, b: y, order: bd.order });
                            }
                        }
                    }
                    bonds.push(Bond {
                        a: map_a[&root_a],
                        b: map_b[&root_b],
                        order: BondOrder::Single,
                    });
                    out.push(Molecule::from_raw(atoms, bonds).canonical_key().to_string());
                }
            }
        }
    }
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crossover_enumeration_matches_the_oracle(sa in any::<u64>(), sb in any::<u64>()) {
        let a = random_molecule(&mut ChaCha8Rng::seed_from_u64(sa), 9);
        let b = random_molecule(&mut ChaCha8Rng::seed_from_u64(sb), 9);
        let mut got: Vec<String> = enumerate_crossovers(&a, &b)
            .into_iter()
            .map(|(_, m)| m.canonical_key().to_string())
            .collect();
        got.sort();
        prop_assert_eq!(got, crossover_oracle(&a, &b));
    }

    #[test]
    fn every_candidate_edit_is_valid_or_refused(seed in any::<u64>()) {
        let m = random_molecule(&mut ChaCha8Rng::seed_from_u64(seed), 14);
        for (kind, _) in MUTATION_CATALOGUE {
            for edit in candidate_edits(&m, kind) {
                prop_assert_eq!(edit.kind(), kind);
                if let Some(child) = apply_edit(&m, &edit) {
                    prop_assert!(validate_valence(&child).is_ok(), "{:?} on {}", edit, m.canonical_key());
                    prop_assert!(child.is_connected());
                    prop_assert_ne!(child.canonical_key(), m.canonical_key());
                }
            }
        }
    }
}

#[test]
fn edit_catalogue_probabilities_sum_to_one() {
    let total: f64 = MUTATION_CATALOGUE.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let kinds: BTreeSet<EditKind> = MUTATION_CATALOGUE.iter().map(|(k, _)| *k).collect();
    assert_eq!(kinds.len(), 7);
}

fn ladder(spec: &ScoringSpec) -> Vec<Individual> {
    let cache = PropertyCache::new();
    let mols = (1..=10).map(|n| parse_single(&"C".repeat(n)).unwrap()).collect();
    seed_individuals(mols, spec, ScoreContext { cache: &cache, remote: None })
}

fn size_spec() -> ScoringSpec {
    ScoringSpec::new(
        vec![PropertyTerm::builtin(
            BuiltinProperty::HeavyAtomCount,
            Direction::Maximize,
            0.0,
            10.0,
            1.0,
        )],
        vec![],
    )
}

#[test]
fn rank_roulette_frequencies_follow_linear_ranking() {
    let pop = ladder(&size_spec());
    let pressure = 1.7;
    let pool = RankedPool::new(&pop, pressure).unwrap();
    // best first: decane down to methane
    assert_eq!(pool.order(), &[9, 8, 7, 6, 5, 4, 3, 2, 1, 0]);
    let draws = 200_000;
    let mut counts = [0usize; 10];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..draws {
        counts[pool.pick(&mut rng)] += 1;
    }
    let n = 10.0;
    for r in 1..=10usize {
        let expected = (pressure - (2.0 * pressure - 2.0) * (r as f64 - 1.0) / (n - 1.0)) / n;
        let observed = counts[10 - r] as f64 / draws as f64;
        // five standard errors
        let tol = 5.0 * (expected * (1.0 - expected) / draws as f64).sqrt();
        assert!((observed - expected).abs() < tol, "rank {r}: {observed} vs {expected}");
        assert!((rank_weight(pressure, r, 10) / n - expected).abs() < 1e-12);
    }
}

#[test]
fn invalid_individuals_are_never_selected() {
    let mut pop = ladder(&size_spec());
    for i in pop.iter_mut().step_by(2) {
        i.report.valid = false;
        i.report.total = None;
    }
    let order = rank_order(&pop);
    assert_eq!(order.len(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        assert!(select_parent(&pop, 2.0, &mut rng).unwrap().report.valid);
    }
    for i in pop.iter_mut() {
        i.report.valid = false;
    }
    assert!(matches!(select_parent(&pop, 1.5, &mut rng), Err(GaError::NoValidCandidates)));
}

fn phenolic() -> Vec<Individual> {
    let cache = PropertyCache::new();
    let mols = parse_dataset(sample("phenolic-antioxidants").unwrap()).molecules;
    seed_individuals(mols, &ScoringSpec::default(), ScoreContext { cache: &cache, remote: None })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generations_keep_their_invariants(seed in 0u64..1000, elites in 0usize..4, gen in 1usize..50) {
        let cache = PropertyCache::new();
        let ctx = ScoreContext { cache: &cache, remote: None };
        let spec = ScoringSpec::default();
        let pop = phenolic();
        let banned: BTreeSet<String> = pop.iter().step_by(3).map(|i| i.key().to_string()).collect();
        let is_banned = |k: &str| banned.contains(k);
        let cfg = GaConfig { rng_seed: seed, population_size: 16, elite_count: elites, ..GaConfig::default() };
        let snap = evolve_generation(&pop, gen, &cfg, &spec, &is_banned, ctx, &mut generation_rng(seed, gen)).unwrap();
        let again = evolve_generation(&pop, gen, &cfg, &spec, &is_banned, ctx, &mut generation_rng(seed, gen)).unwrap();
        prop_assert_eq!(&snap, &again);

        prop_assert_eq!(snap.individuals.len(), 16);
        let keys: BTreeSet<&str> = snap.keys().collect();
        prop_assert_eq!(keys.len(), 16);
        prop_assert!(keys.iter().all(|k| !banned.contains(*k)));

        let parents: BTreeSet<&str> = pop.iter().map(Individual::key).filter(|k| !banned.contains(*k)).collect();
        let survivors: Vec<&Individual> = pop.iter().filter(|i| !banned.contains(i.key())).collect();
        let mut ranked = survivors.clone();
        ranked.sort_by(|a, b| b.total().unwrap().total_cmp(&a.total().unwrap()).then(a.key().cmp(b.key())));
        for (i, elite) in ranked.iter().take(elites).enumerate() {
            prop_assert_eq!(snap.individuals[i].key(), elite.key());
        }
        for ind in &snap.individuals {
            prop_assert!(validate_valence(&ind.molecule).is_ok());
            match &ind.origin {
                Origin::Seed => prop_assert!(parents.contains(ind.key())),
                Origin::Mutation { parent, .. } => {
                    prop_assert!(parents.contains(parent.as_str()));
                    prop_assert_eq!(ind.generation_born, gen);
                }
                Origin::Crossover { parents: [a, b], .. } => {
                    prop_assert!(parents.contains(a.as_str()) && parents.contains(b.as_str()));
                    prop_assert_eq!(ind.generation_born, gen);
                }
                other => prop_assert!(false, "unexpected origin {:?}", other),
            }
        }
        prop_assert!(snap.best_total().unwrap() >= ranked[0].total().unwrap() || elites == 0);
    }
}

#[test]
fn generation_streams_are_independent() {
    let cache = PropertyCache::new();
    let ctx = ScoreContext { cache: &cache, remote: None };
    let spec = ScoringSpec::default();
    let pop = phenolic();
    let cfg = GaConfig {
        population_size: 16,
        ..GaConfig::default()
    };
    let run = |seed: u64, gen: usize| {
        evolve_generation(&pop, gen, &cfg, &spec, &|_| false, ctx, &mut generation_rng(seed, gen)).unwrap()
    };
    let keys = |s: gems_core::ga::GenerationSnapshot| s.keys().map(String::from).collect::<Vec<_>>();
    assert_ne!(keys(run(0, 1)), keys(run(0, 2)));
    assert_ne!(keys(run(0, 1)), keys(run(1, 1)));
}

#[test]
fn everything_tombstoned_collapses() {
    let cache = PropertyCache::new();
    let ctx = ScoreContext { cache: &cache, remote: None };
    let pop = phenolic();
    let err = evolve_generation(
        &pop,
        1,
        &GaConfig::default(),
        &ScoringSpec::default(),
        &|_| true,
        ctx,
        &mut generation_rng(0, 1),
    )
    .unwrap_err();
    assert_eq!(err, GaError::PopulationCollapse);
}

#[test]
fn config_validation_lists_every_field() {
    let cfg = GaConfig {
        population_size: 2,
        generations_per_run: 0,
        mutation_rate: 1.5,
        crossover_rate: -0.1,
        elite_count: 2,
        selection: Selection::RankRoulette { pressure: 2.5 },
        ..GaConfig::default()
    };
    let fields: Vec<String> = match cfg.validate() {
        Err(GaError::InvalidConfig { fields }) => fields.into_iter().map(|f| f.field).collect(),
        other => panic!("{other:?}"),
    };
    assert_eq!(
        fields,
        [
            "population_size",
            "generations_per_run",
            "mutation_rate",
            "crossover_rate",
            "elite_count",
            "selection.pressure"
        ]
    );
}
