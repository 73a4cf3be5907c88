use std::path::PathBuf;
use std::sync::Arc;

use graphwalk_core::agent::{run_episode, RuntimeConfig};
use graphwalk_core::eval::{exact_match, AnswerSet, EmConvention};
use graphwalk_core::gateway::{Exhaust, Gateway, Purpose, StubScript};
use graphwalk_core::kg::parse_tsv;
use graphwalk_core::toolbox::{Toolbox, ToolboxConfig};
use graphwalk_core::GraphStore;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn toolbox() -> Toolbox {
    let text = std::fs::read_to_string(fixture("case_study.tsv")).unwrap();
    let store = GraphStore::from_records(parse_tsv(&text).unwrap()).unwrap();
    Toolbox::new(Arc::new(store), ToolboxConfig::default())
}

const QUESTION: &str = "Where is the home stadium of the team who won the 1946 World Series championship?";

#[test]
fn scripted_policy_reaches_busch_stadium() {
    let policy = Gateway::stub(StubScript::load(&fixture("case_study.stub.json")).unwrap());
    let t = run_episode(
        &toolbox(),
        &policy,
        "cwq-case",
        QUESTION,
        &["1946 World Series".into()],
        &RuntimeConfig::default(),
    )
    .unwrap();
    assert_eq!(t.answers, ["Busch Stadium"]);
    assert!(!t.truncated);
    assert_eq!(t.turns.len(), 5);
    assert!(t.turns.iter().all(|turn| !turn.is_erroneous()), "{}", t.text());
    assert!(t
        .observations()
        .contains("[1946 World Series, sports.sports_championship_event.champion, St. Louis Cardinals]"));
    assert!(t.observations().contains("[St. Louis Cardinals, sports.sports_team.arena_stadium, Busch Stadium]"));
    let em = exact_match(&AnswerSet::new(&t.answers), &AnswerSet::new(["Busch Stadium"]), EmConvention::Hit).unwrap();
    assert_eq!(em, 1);
}

#[test]
fn silent_policy_truncates_at_ten() {
    let policy = Gateway::stub(StubScript::sequence(
        Purpose::Policy,
        ["<think> keep looking </think><kg-query> get_relations(\"St. Louis Cardinals\") </kg-query>"],
        Exhaust::Cycle,
    ));
    let t = run_episode(&toolbox(), &policy, "loop", QUESTION, &["1946 World Series".into()], &RuntimeConfig::default())
        .unwrap();
    assert_eq!(t.turns.len(), 10);
    assert!(t.truncated);
    assert!(t.answers.is_empty());
}
