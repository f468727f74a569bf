use std::collections::BTreeSet;
use std::sync::atomic::AtomicBool;

use gems_core::ga::{GaConfig, Origin};
use gems_core::llm::{LlmEditRequest, LlmMode, ScriptedChatClient};
use gems_core::metrics::BuiltinProperty;
use gems_core::scoring::{Direction, PropertyTerm, ScoringSpec};
use gems_core::session::*;

fn small_config(seed: u64) -> SessionConfig {
    SessionConfig {
        ga: GaConfig {
            population_size: 20,
            rng_seed: seed,
            ..GaConfig::default()
        },
        ..SessionConfig::default()
    }
}

fn phenolic(seed: u64) -> (Session, Services) {
    let services = Services::new();
    let s = Session::create(
        "t",
        &DatasetSource::Sample {
            name: "phenolic-antioxidants".into(),
        },
        small_config(seed),
        ScoringSpec::default(),
        &services,
    )
    .unwrap();
    (s, services)
}

fn keys(s: &Session) -> Vec<String> {
    s.population.iter().map(|i| i.key().to_string()).collect()
}

#[test]
fn create_from_text_reports_line_errors() {
    let services = Services::new();
    let text = "CCO\nC(\nc1ccccc1O\nCCN\nCCO\nCCCC\n";
    let s = Session::create(
        "a",
        &DatasetSource::Text { text: text.into() },
        SessionConfig::default(),
        ScoringSpec::default(),
        &services,
    )
    .unwrap();
    assert_eq!(s.population.len(), 4);
    assert_eq!(s.dataset.errors.len(), 1);
    assert_eq!(s.dataset.errors[0].line, 1);
    assert_eq!(s.dataset.duplicates.len(), 1);
    assert_eq!(s.snapshots.len(), 1);
    assert!(s.population.iter().all(|i| i.origin == Origin::Seed));
}

#[test]
fn too_small_dataset_is_refused() {
    let services = Services::new();
    let err = Session::create(
        "a",
        &DatasetSource::Text {
            text: "CCO\nCCN\nC(\n".into(),
        },
        SessionConfig::default(),
        ScoringSpec::default(),
        &services,
    )
    .unwrap_err();
    match err {
        SessionError::DatasetTooSmall { valid, errors } => {
            assert_eq!(valid, 2);
            assert_eq!(errors.len(), 1);
        }
        other => panic!("{other:?}"),
    }
    let err = Session::create(
        "a",
        &DatasetSource::Sample { name: "nope".into() },
        SessionConfig::default(),
        ScoringSpec::default(),
        &services,
    )
    .unwrap_err();
    assert!(matches!(err, SessionError::UnknownSample { .. }));
}

#[test]
fn dataset_only_loads_once() {
    let (mut s, services) = phenolic(0);
    let err = s
        .load_dataset(&DatasetSource::Text { text: "CCO".into() }, &services)
        .unwrap_err();
    assert_eq!(err, SessionError::DatasetAlreadyLoaded);
}

#[test]
fn deleted_structures_never_return() {
    let (mut s, mut services) = phenolic(3);
    let victims: Vec<String> = keys(&s)[..5].to_vec();
    let out = s
        .intervene(Intervention::Delete { keys: victims.clone() }, &services)
        .unwrap();
    assert_eq!(out.removed, victims);
    assert_eq!(s.tombstones.len(), 5);
    let cancel = AtomicBool::new(false);
    s.run(5, &mut services, &cancel, |_, _| {}).unwrap();
    for snap in &s.snapshots[1..] {
        for k in snap.keys() {
            assert!(!victims.iter().any(|v| v == k), "{k} came back");
        }
    }
    let err = s
        .intervene(
            Intervention::EditStructure {
                key: None,
                smiles: victims[0].clone(),
                mode: EditMode::Add,
                tombstone_original: false,
                from_llm: false,
            },
            &services,
        )
        .unwrap_err();
    assert!(matches!(err, SessionError::Tombstoned { .. }));
}

#[test]
fn unknown_keys_are_reported() {
    let (mut s, services) = phenolic(0);
    let err = s
        .intervene(Intervention::ManualMutate { key: "C1CC".into() }, &services)
        .unwrap_err();
    assert!(matches!(err, SessionError::UnknownKey { .. }));
    assert!(s.audit_log.is_empty());
}

#[test]
fn edit_replace_and_add() {
    let (mut s, services) = phenolic(0);
    let before = s.population.len();
    let target = keys(&s)[0].clone();
    let out = s
        .intervene(
            Intervention::EditStructure {
                key: Some(target.clone()),
                smiles: "OC1=CC=C(C=C1)CCCC".into(),
                mode: EditMode::Replace,
                tombstone_original: false,
                from_llm: false,
            },
            &services,
        )
        .unwrap();
    assert_eq!(out.removed, vec![target.clone()]);
    assert_eq!(out.added.len(), 1);
    assert_eq!(s.population.len(), before);
    assert!(s.tombstones.is_empty());
    let new = &s.population[0];
    assert_eq!(new.key(), out.added[0]);
    assert_eq!(new.origin, Origin::ManualEdit { source: Some(target) });

    let err = s
        .intervene(
            Intervention::EditStructure {
                key: None,
                smiles: "C1CC(".into(),
                mode: EditMode::Add,
                tombstone_original: false,
                from_llm: false,
            },
            &services,
        )
        .unwrap_err();
    assert!(matches!(err, SessionError::InvalidEdit { .. }));

    let dup = s
        .intervene(
            Intervention::EditStructure {
                key: None,
                smiles: s.population[1].key().to_string(),
                mode: EditMode::Add,
                tombstone_original: false,
                from_llm: false,
            },
            &services,
        )
        .unwrap();
    assert!(dup.duplicate);
    assert_eq!(s.population.len(), before);
}

#[test]
fn manual_operators_add_offspring() {
    let (mut s, services) = phenolic(1);
    let k = keys(&s);
    let m = s
        .intervene(Intervention::ManualMutate { key: k[0].clone() }, &services)
        .unwrap();
    let c = s
        .intervene(
            Intervention::ManualCrossover {
                keys: [k[1].clone(), k[2].clone()],
            },
            &services,
        )
        .unwrap();
    assert_eq!(m.added.len() + c.added.len(), s.population.len() - k.len());
    assert_eq!(s.audit_log.len(), 2);
    assert_eq!(s.audit_log[1].seq, 1);
}

#[test]
fn spec_update_during_run_applies_at_boundary() {
    let (mut s, mut services) = phenolic(2);
    s.start_run(3).unwrap();
    let step = s.next_step();
    let snap = step.execute(services.context()).unwrap();

    let mut spec = ScoringSpec::default();
    spec.terms[0].weight = 3.0;
    let v = s.update_spec(spec, &services).unwrap();
    assert_eq!(v, 2);
    assert_eq!(s.spec.version, 1);
    assert!(s.pending_spec().is_some());

    let events = s.commit_step(snap, &mut services);
    assert!(matches!(events[0], SessionEvent::Generation { spec_version: 1, .. }));
    assert_eq!(events[1], SessionEvent::SpecUpdated { version: 2 });
    assert_eq!(s.spec.version, 2);
    assert_eq!(s.snapshots[1].spec_version_used, 1);
    assert!(s.population.iter().all(|i| i.report.spec_version == 2));

    let snap = s.next_step().execute(services.context()).unwrap();
    assert_eq!(snap.spec_version_used, 2);
    s.commit_step(snap, &mut services);
    let done = s.finish_run(true, &mut services);
    assert_eq!(
        done.last(),
        Some(&SessionEvent::RunFinished {
            completed: 2,
            cancelled: true
        })
    );
    assert_eq!(s.run_state, RunState::Idle);
}

#[test]
fn invalid_updates_leave_state_alone() {
    let (mut s, mut services) = phenolic(0);
    let mut spec = ScoringSpec::default();
    spec.terms[0].bounds.low = 10.0;
    spec.terms[0].bounds.high = 1.0;
    let err = s.update_spec(spec, &services).unwrap_err();
    match err {
        SessionError::ValidationFailed { fields } => assert_eq!(fields[0].field, "terms[0].bounds"),
        other => panic!("{other:?}"),
    }
    let remote = ScoringSpec::new(
        vec![PropertyTerm::remote(
            "solubility",
            "lab",
            Direction::Maximize,
            0.0,
            1.0,
            1.0,
        )],
        vec![],
    );
    assert!(s.update_spec(remote, &services).is_err());
    let mut cfg = s.config.clone();
    cfg.ga.mutation_rate = 2.0;
    match s.update_config(cfg, &mut services).unwrap_err() {
        SessionError::ValidationFailed { fields } => assert_eq!(fields[0].field, "ga.mutation_rate"),
        other => panic!("{other:?}"),
    }
    assert_eq!(s.spec.version, 1);
    assert_eq!(s.config.version, 1);
    assert!(s.audit_log.is_empty());
}

#[test]
fn replay_matches_working_population() {
    let (mut s, mut services) = phenolic(4);
    let cancel = AtomicBool::new(false);
    s.run(2, &mut services, &cancel, |_, _| {}).unwrap();
    let k = keys(&s);
    s.intervene(Intervention::Delete { keys: vec![k[3].clone()] }, &services)
        .unwrap();
    s.intervene(
        Intervention::EditStructure {
            key: Some(k[0].clone()),
            smiles: "CC(C)(C)c1ccc(O)cc1C".into(),
            mode: EditMode::Replace,
            tombstone_original: true,
            from_llm: false,
        },
        &services,
    )
    .unwrap();
    s.intervene(Intervention::ManualMutate { key: k[1].clone() }, &services)
        .unwrap();
    assert_eq!(s.replay_population_keys(), keys(&s));
    s.run(2, &mut services, &cancel, |_, _| {}).unwrap();
    assert_eq!(s.replay_population_keys(), keys(&s));
}

#[test]
fn run_events_and_cancellation() {
    let (mut s, mut services) = phenolic(5);
    let cancel = AtomicBool::new(false);
    let mut seen = Vec::new();
    let summary = s
        .run(3, &mut services, &cancel, |_, e| seen.push(e.clone()))
        .unwrap();
    assert_eq!(summary.completed, 3);
    assert!(!summary.cancelled);
    assert!(matches!(seen[0], SessionEvent::RunStarted { generations: 3 }));
    assert_eq!(seen.iter().filter(|e| matches!(e, SessionEvent::Generation { .. })).count(), 3);

    let cancel = AtomicBool::new(true);
    let summary = s.run(3, &mut services, &cancel, |_, _| {}).unwrap();
    assert!(summary.cancelled);
    assert_eq!(summary.completed, 0);
    assert_eq!(s.snapshots.len(), 4);
}

#[test]
fn interventions_blocked_while_running() {
    let (mut s, services) = phenolic(0);
    s.start_run(1).unwrap();
    let k = keys(&s)[0].clone();
    assert_eq!(
        s.intervene(Intervention::Delete { keys: vec![k] }, &services),
        Err(SessionError::Busy)
    );
    assert_eq!(s.start_run(1), Err(SessionError::AlreadyRunning));
}

#[test]
fn llm_candidates_are_reviewed_then_added() {
    let (mut s, services) = phenolic(0);
    let k = keys(&s)[0].clone();
    let client = ScriptedChatClient::new(vec!["CC(C)(C)c1cc(O)ccc1N\nnot a molecule\n".into()]);
    let request = LlmEditRequest {
        mode: LlmMode::Mutate { key: k.clone() },
        instruction: "add an amine".into(),
        n_candidates: 2,
    };
    let before = s.population.len();
    let result = s.llm_edit(&request, &client, &services).unwrap();
    assert_eq!(result.accepted.len(), 1);
    assert_eq!(result.rejected.len(), 1);
    assert_eq!(s.population.len(), before);
    assert_eq!(s.audit_log.last().unwrap().action, Action::LlmEdit);

    let smiles = result.accepted[0].molecule.canonical_key().to_string();
    let out = s
        .intervene(
            Intervention::EditStructure {
                key: Some(k.clone()),
                smiles,
                mode: EditMode::Add,
                tombstone_original: false,
                from_llm: true,
            },
            &services,
        )
        .unwrap();
    let added = s.find(&out.added[0]).unwrap();
    assert_eq!(s.population[added].origin, Origin::Llm { parents: vec![k] });
}

#[test]
fn payload_sorts_filters_and_rescores() {
    let (mut s, mut services) = phenolic(6);
    let cancel = AtomicBool::new(false);
    s.run(1, &mut services, &cancel, |_, _| {}).unwrap();
    let p = population_payload(
        &s,
        &PayloadOptions {
            sort: Some(SortKey::Total),
            ..PayloadOptions::default()
        },
        &services,
    )
    .unwrap();
    assert_eq!(p.individuals.len(), s.population.len());
    let totals: Vec<f64> = p.individuals.iter().filter_map(|i| i.report.total).collect();
    assert!(totals.windows(2).all(|w| w[0] >= w[1]));
    assert!(p.individuals.iter().all(|i| i.layout.coords.len() == i.graph.atoms.len()));

    let mw = BuiltinProperty::MolWeight.as_str().to_string();
    let filtered = population_payload(
        &s,
        &PayloadOptions {
            filters: vec![RangeFilter {
                field: SortKey::Property { id: mw.clone() },
                min: Some(200.0),
                max: None,
            }],
            ..PayloadOptions::default()
        },
        &services,
    )
    .unwrap();
    assert_eq!(filtered.total_count, s.population.len());
    assert_eq!(filtered.excluded + filtered.individuals.len(), filtered.total_count);
    for i in &filtered.individuals {
        assert!(i.report.term(&mw).unwrap().raw.value.unwrap() >= 200.0);
    }

    let mut spec = ScoringSpec::default();
    spec.terms.truncate(1);
    spec.terms[0].weight = 1.0;
    s.update_spec(spec, &services).unwrap();
    let stored = s.snapshots[0].clone();
    let old = population_payload(
        &s,
        &PayloadOptions {
            generation: Some(0),
            ..PayloadOptions::default()
        },
        &services,
    )
    .unwrap();
    let fresh = population_payload(
        &s,
        &PayloadOptions {
            generation: Some(0),
            rescore: true,
            ..PayloadOptions::default()
        },
        &services,
    )
    .unwrap();
    assert_eq!(old.spec_version, 1);
    assert_eq!(fresh.spec_version, 2);
    assert!(fresh.individuals.iter().all(|i| i.report.terms.len() == 1));
    assert_eq!(s.snapshots[0], stored);
    assert!(matches!(
        population_payload(
            &s,
            &PayloadOptions {
                generation: Some(99),
                ..PayloadOptions::default()
            },
            &services
        ),
        Err(SessionError::UnknownGeneration { index: 99 })
    ));
}

#[test]
fn json_round_trip_is_byte_identical() {
    let (mut s, mut services) = phenolic(7);
    let cancel = AtomicBool::new(false);
    s.run(2, &mut services, &cancel, |_, _| {}).unwrap();
    let k = keys(&s)[0].clone();
    s.intervene(Intervention::Delete { keys: vec![k] }, &services).unwrap();
    let a = export_json(&s).unwrap();
    let back = import_json(&a).unwrap();
    assert_eq!(back, s);
    assert_eq!(export_json(&back).unwrap(), a);

    let bad = a.replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
    assert!(matches!(import_json(&bad), Err(SessionError::Storage { .. })));
}

#[test]
fn save_and_load() {
    let (s, _) = phenolic(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    save_session(&s, &path).unwrap();
    assert_eq!(load_session(&path).unwrap(), s);
    let names: BTreeSet<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 1);
}

#[test]
fn csv_export_has_one_row_per_individual() {
    let (mut s, mut services) = phenolic(8);
    let cancel = AtomicBool::new(false);
    s.run(1, &mut services, &cancel, |_, _| {}).unwrap();
    let text = export_csv(&s).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..3], ["generation", "canonical_smiles", "spec_version"]);
    assert!(header.contains(&"mol_weight_raw".to_string()));
    assert_eq!(header.last().unwrap(), "alerts");
    let rows = r.records().count();
    let expected: usize = s.snapshots.iter().map(|g| g.individuals.len()).sum();
    assert_eq!(rows, expected);
}
