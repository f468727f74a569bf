//! The evolutionary loop: rank selection, graph crossover and mutation,
//! deduplication, tombstones and generation stepping.

mod crossover;
mod mutate;
mod select;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::Molecule;
use crate::scoring::{evaluate_population, FieldError, PropertyCache, RemoteClient, ScoreReport, ScoringSpec};

pub use crossover::{acyclic_single_bonds, crossover, crossover_with, enumerate_crossovers, CrossoverCut};
pub use mutate::{
    apply_edit, candidate_edits, mutate, Edit, EditKind, APPEND_ELEMENTS, AROMATIC_SUBSTITUTE_ELEMENTS,
    INSERT_ELEMENTS, MUTATION_CATALOGUE, SUBSTITUTE_ELEMENTS,
};
pub use select::{rank_order, rank_weight, select_parent, RankedPool};

/// Attempts allowed per open slot before a generation is declared exhausted.
pub const ATTEMPTS_PER_SLOT: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaError {
    #[error("no individual has a valid score")]
    NoValidCandidates,
    #[error("operator produced no valid offspring")]
    Rejected,
    #[error("population collapsed: every candidate is tombstoned or invalid")]
    PopulationCollapse,
    #[error("invalid GA configuration")]
    InvalidConfig { fields: Vec<FieldError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    RankRoulette { pressure: f64 },
}

impl Selection {
    pub fn pressure(&self) -> f64 {
        match *self {
            Selection::RankRoulette { pressure } => pressure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations_per_run: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub elite_count: usize,
    pub selection: Selection,
    pub rng_seed: u64,
    pub max_operator_retries: u32,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 50,
            generations_per_run: 10,
            mutation_rate: 0.5,
            crossover_rate: 0.8,
            elite_count: 2,
            selection: Selection::RankRoulette { pressure: 1.5 },
            rng_seed: 0,
            max_operator_retries: 20,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        let mut fields = Vec::new();
        let mut push = |field: &str, message: &str| {
            fields.push(FieldError {
                field: field.into(),
                message: message.into(),
            })
        };
        if self.population_size < 4 {
            push("population_size", "must be at least 4");
        }
        if self.generations_per_run < 1 {
            push("generations_per_run", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            push("mutation_rate", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            push("crossover_rate", "must lie in [0, 1]");
        }
        if self.elite_count >= self.population_size {
            push("elite_count", "must be smaller than population_size");
        }
        if !(1.0..=2.0).contains(&self.selection.pressure()) {
            push("selection.pressure", "must lie in [1, 2]");
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(GaError::InvalidConfig { fields })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Crossover {
        parents: [String; 2],
        /// Edit applied to the offspring after recombination, if any.
        #[serde(default)]
        mutation: Option<EditKind>,
    },
    Mutation {
        parent: String,
        edit: EditKind,
    },
    ManualEdit {
        #[serde(default)]
        source: Option<String>,
    },
    Llm {
        parents: Vec<String>,
    },
}

impl Origin {
    pub fn label(&self) -> &'static str {
        match self {
            Origin::Seed => "seed",
            Origin::Crossover { .. } => "crossover",
            Origin::Mutation { .. } => "mutation",
            Origin::ManualEdit { .. } => "manual_edit",
            Origin::Llm { .. } => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Stored in canonical atom order; serialized as canonical SMILES.
    #[serde(rename = "smiles")]
    pub molecule: Molecule,
    pub report: ScoreReport,
    pub origin: Origin,
    pub generation_born: usize,
}

impl Individual {
    pub fn key(&self) -> &str {
        self.molecule.canonical_key()
    }

    pub fn total(&self) -> Option<f64> {
        self.report.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSnapshot {
    pub index: usize,
    pub individuals: Vec<Individual>,
    pub config_used: GaConfig,
    pub spec_version_used: u64,
    /// The candidate stream ran dry before the population was full.
    #[serde(default)]
    pub exhausted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub index: usize,
    pub best: Option<f64>,
    pub mean: Option<f64>,
    pub new_count: usize,
    pub size: usize,
}

impl GenerationSnapshot {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.individuals.iter().map(Individual::key)
    }

    pub fn best_total(&self) -> Option<f64> {
        self.individuals
            .iter()
            .filter_map(Individual::total)
            .max_by(f64::total_cmp)
    }

    pub fn stats(&self) -> GenerationStats {
        let totals: Vec<f64> = self.individuals.iter().filter_map(Individual::total).collect();
        GenerationStats {
            index: self.index,
            best: self.best_total(),
            mean: (!totals.is_empty()).then(|| totals.iter().sum::<f64>() / totals.len() as f64),
            new_count: self
                .individuals
                .iter()
                .filter(|i| i.generation_born == self.index)
                .count(),
            size: self.individuals.len(),
        }
    }
}

/// Where scores come from during a generation step.
#[derive(Clone, Copy)]
pub struct ScoreContext<'a> {
    pub cache: &'a PropertyCache,
    pub remote: Option<&'a dyn RemoteClient>,
}

impl ScoreContext<'_> {
    pub fn score(&self, mols: &[Molecule], spec: &ScoringSpec) -> Vec<ScoreReport> {
        evaluate_population(mols, spec, self.cache, self.remote)
    }
}

/// The RNG stream of one generation; independent of earlier draws so that a
/// run can resume from any persisted generation.
pub fn generation_rng(seed: u64, generation: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation as u64);
    rng
}

/// Re-scores individuals whose report predates the scoring spec version.
pub fn rescore(individuals: &mut [Individual], spec: &ScoringSpec, ctx: ScoreContext<'_>) {
    let stale: Vec<usize> = (0..individuals.len())
        .filter(|&i| individuals[i].report.spec_version != spec.version)
        .collect();
    if stale.is_empty() {
        return;
    }
    let mols: Vec<Molecule> = stale.iter().map(|&i| individuals[i].molecule.clone()).collect();
    for (i, report) in stale.into_iter().zip(ctx.score(&mols, spec)) {
        individuals[i].report = report;
    }
}

enum Slot {
    Kept(Individual),
    New(Molecule, Origin),
}

/// Produces generation `index` from a working population.
///
/// Elites are copied unchanged; every other slot comes from crossover of two
/// rank-selected parents (probability `crossover_rate`, the child further
/// mutated with probability `mutation_rate`), or else from mutating one
/// parent (probability `mutation_rate`), or else from copying it. A rejected
/// crossover falls back to mutation and a rejected mutation to a copy.
/// Candidates whose key is already present or tombstoned are discarded.
pub fn evolve_generation<R: Rng + ?Sized>(
    population: &[Individual],
    index: usize,
    config: &GaConfig,
    spec: &ScoringSpec,
    is_tombstoned: &dyn Fn(&str) -> bool,
    ctx: ScoreContext<'_>,
    rng: &mut R,
) -> Result<GenerationSnapshot, GaError> {
    config.validate()?;
    let mut current: Vec<Individual> = population
        .iter()
        .filter(|i| !is_tombstoned(i.key()))
        .cloned()
        .collect();
    if current.is_empty() {
        return Err(GaError::PopulationCollapse);
    }
    rescore(&mut current, spec, ctx);
    let pool = RankedPool::new(&current, config.selection.pressure()).map_err(|_| GaError::PopulationCollapse)?;

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut slots: Vec<Slot> = Vec::with_capacity(config.population_size);
    for &i in pool.order().iter().take(config.elite_count) {
        seen.insert(current[i].key().to_string());
        slots.push(Slot::Kept(current[i].clone()));
    }

    let retries = config.max_operator_retries;
    let budget = config.population_size * ATTEMPTS_PER_SLOT;
    let mut attempts = 0;
    while slots.len() < config.population_size && attempts < budget {
        attempts += 1;
        let pa = &current[pool.pick(rng)];
        let mut produced: Option<(Molecule, Origin)> = None;
        let mut try_mutation = rng.random::<f64>() < config.crossover_rate;
        if try_mutation {
            let pb = &current[pool.pick(rng)];
            match crossover(&pa.molecule, &pb.molecule, rng, retries) {
                Ok((child, _)) => {
                    let parents = [pa.key().to_string(), pb.key().to_string()];
                    produced = Some(if rng.random::<f64>() < config.mutation_rate {
                        match mutate(&child, rng, retries) {
                            Ok((m, edit)) => (
                                m,
                                Origin::Crossover {
                                    parents,
                                    mutation: Some(edit.kind()),
                                },
                            ),
                            Err(_) => (child, Origin::Crossover { parents, mutation: None }),
                        }
                    } else {
                        (child, Origin::Crossover { parents, mutation: None })
                    });
                }
                Err(_) => try_mutation = true,
            }
        } else {
            try_mutation = rng.random::<f64>() < config.mutation_rate;
        }
        if produced.is_none() && try_mutation {
            if let Ok((m, edit)) = mutate(&pa.molecule, rng, retries) {
                produced = Some((
                    m,
                    Origin::Mutation {
                        parent: pa.key().to_string(),
                        edit: edit.kind(),
                    },
                ));
            }
        }
        let slot = match produced {
            Some((m, origin)) => Slot::New(m, origin),
            None => Slot::Kept(pa.clone()),
        };
        let key = match &slot {
            Slot::Kept(i) => i.key(),
            Slot::New(m, _) => m.canonical_key(),
        };
        if seen.contains(key) || is_tombstoned(key) {
            continue;
        }
        seen.insert(key.to_string());
        slots.push(slot);
    }

    let fresh: Vec<Molecule> = slots
        .iter()
        .filter_map(|s| match s {
            Slot::New(m, _) => Some(m.clone()),
            Slot::Kept(_) => None,
        })
        .collect();
    let mut reports = ctx.score(&fresh, spec).into_iter();
    let individuals: Vec<Individual> = slots
        .into_iter()
        .map(|s| match s {
            Slot::Kept(i) => i,
            Slot::New(molecule, origin) => Individual {
                molecule,
                report: reports.next().expect("one report per newcomer"),
                origin,
                generation_born: index,
            },
        })
        .collect();
    let exhausted = individuals.len() < config.population_size;
    Ok(GenerationSnapshot {
        index,
        individuals,
        config_used: config.clone(),
        spec_version_used: spec.version,
        exhausted,
    })
}

/// Scores seed molecules into generation-0 individuals.
pub fn seed_individuals(mols: Vec<Molecule>, spec: &ScoringSpec, ctx: ScoreContext<'_>) -> Vec<Individual> {
    let mols: Vec<Molecule> = mols.into_iter().map(|m| m.canonicalized()).collect();
    let reports = ctx.score(&mols, spec);
    mols.into_iter()
        .zip(reports)
        .map(|(molecule, report)| Individual {
            molecule,
            report,
            origin: Origin::Seed,
            generation_born: 0,
        })
        .collect()
}
