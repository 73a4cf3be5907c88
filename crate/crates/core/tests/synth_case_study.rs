use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use graphwalk_core::agent::{parse_transcript, Trajectory};
use graphwalk_core::gateway::{Gateway, StubScript};
use graphwalk_core::kg::parse_tsv;
use graphwalk_core::synth::{run_pipeline, Disposition, SynthConfig};
use graphwalk_core::toolbox::{Toolbox, ToolboxConfig};
use graphwalk_core::walk::{read_list, sample_corpus, Structure, WalkConfig};
use graphwalk_core::{EntityId, GraphStore};

const CHAMPION_TRIPLE: &str = "[1946 World Series, sports.sports_championship_event.champion, St. Louis Cardinals]";

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

fn setup() -> (Arc<GraphStore>, Toolbox, WalkConfig) {
    let store = Arc::new(GraphStore::from_records(parse_tsv(&read("case_study.tsv")).unwrap()).unwrap());
    let toolbox = Toolbox::new(store.clone(), ToolboxConfig::default());
    let walk = WalkConfig {
        d_min: 1,
        d_max: 3,
        structure_mix: BTreeMap::from([(Structure::Hop2, 1.0)]),
        ..WalkConfig::fixture_defaults(
            read_list(&read("case_study.predicates.txt")),
            read_list(&read("case_study.seeds.txt"))
                .into_iter()
                .map(|s| EntityId::new(s).unwrap())
                .collect(),
        )
    };
    (store, toolbox, walk)
}

fn gateway() -> Gateway {
    Gateway::stub(StubScript::load(&fixture("case_study.stub.json")).unwrap())
}

#[test]
fn case_study_synthesis_emits_grounded_trajectories() {
    let (store, toolbox, walk) = setup();
    let corpus = sample_corpus(&store, &walk, 2).unwrap();
    assert_eq!(corpus.paths.len(), 2, "both stadium paths are reachable");

    let out = run_pipeline(&toolbox, &gateway(), &corpus.paths, &SynthConfig::default()).unwrap();
    assert!(out.counters.reconciles());
    assert_eq!(out.counters.emitted, 2, "{:?}", out.quarantine);

    let busch = out
        .records
        .iter()
        .find(|r| r.masked.answer_name == "Busch Stadium")
        .expect("Busch Stadium record");
    assert_eq!(
        busch.masked.text,
        "1946 World Series --sports.sports_championship_event.champion--> entity_1 --sports.sports_team.arena_stadium--> Busch Stadium"
    );
    assert!(busch.score.pass);
    let traj = busch.trajectory.as_ref().unwrap();
    assert_eq!(traj.turns.len(), 3);
    assert_eq!(traj.turns.iter().filter(|t| t.observation.is_some()).count(), 2);
    assert!(traj.observations().contains(CHAMPION_TRIPLE));
    assert!(traj.observations().contains("Busch Stadium"));
    assert!(!traj.target_text().contains("<information>"));

    let back = Trajectory::from_json(&traj.to_json()).unwrap();
    assert_eq!(&back, traj);
    assert_eq!(parse_transcript(&traj.text()).unwrap(), traj.turns);
}

#[test]
fn synthesis_is_deterministic() {
    let run = || {
        let (store, toolbox, walk) = setup();
        let corpus = sample_corpus(&store, &walk, 2).unwrap();
        let out = run_pipeline(&toolbox, &gateway(), &corpus.paths, &SynthConfig::default()).unwrap();
        (out.trajectories_jsonl(), out.quarantine_jsonl())
    };
    assert_eq!(run(), run());
}

#[test]
fn failing_scores_are_dropped_and_counted() {
    let (store, toolbox, walk) = setup();
    let corpus = sample_corpus(&store, &walk, 2).unwrap();
    let mut script = StubScript::load(&fixture("case_study.stub.json")).unwrap();
    let scorer = script.purposes.get_mut(&graphwalk_core::gateway::Purpose::QualityScore).unwrap();
    scorer.responses = vec!["8 8 9".into(), "no scores here".into()];
    let out = run_pipeline(&toolbox, &Gateway::stub(script), &corpus.paths, &SynthConfig::default()).unwrap();
    assert_eq!(out.counters.emitted, 0);
    assert_eq!(out.counters.dropped.get("low_quality"), Some(&1));
    assert_eq!(out.counters.quarantined.get("score_parse"), Some(&1));
    assert!(out.counters.reconciles());
    assert_eq!(out.quarantine.len(), 2);
    assert!(out.quarantine.iter().any(|q| q.disposition == Disposition::Quarantined));
}

#[test]
fn removed_edge_makes_path_unfaithful() {
    let (store, _, walk) = setup();
    let corpus = sample_corpus(&store, &walk, 2).unwrap();
    let pruned: Vec<_> = parse_tsv(&read("case_study.tsv"))
        .unwrap()
        .into_iter()
        .filter(|r| r.relation != "sports.sports_team.arena_stadium")
        .collect();
    let toolbox = Toolbox::new(Arc::new(GraphStore::from_records(pruned).unwrap()), ToolboxConfig::default());
    let out = run_pipeline(&toolbox, &gateway(), &corpus.paths, &SynthConfig::default()).unwrap();
    assert_eq!(out.counters.dropped.get("unfaithful"), Some(&2));
}
