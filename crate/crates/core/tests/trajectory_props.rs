use graphwalk_core::agent::{parse_transcript, Action, Source, ToolCall, Trajectory, Turn};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.'\"-]{0,20}[A-Za-z0-9]"
}

fn relation() -> impl Strategy<Value = String> {
    "[a-z_]{1,8}\\.[a-z_]{1,8}(\\.[a-z_]{1,8})?"
}

fn call() -> impl Strategy<Value = ToolCall> {
    prop_oneof![
        text().prop_map(|entity| ToolCall::GetRelations { entity }),
        (text(), prop::collection::vec(relation(), 1..4))
            .prop_map(|(entity, relations)| ToolCall::GetTriples { entity, relations }),
    ]
}

fn query_turn() -> impl Strategy<Value = Turn> {
    (text(), call(), prop::collection::vec(text(), 0..4)).prop_map(|(think, call, items)| Turn {
        think,
        action: Action::KgQuery { call },
        observation: Some(graphwalk_core::agent::format_items(&items, 4096)),
    })
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    (
        text(),
        prop::collection::vec(query_turn(), 0..5),
        text(),
        prop::collection::vec(text(), 1..3),
        any::<bool>(),
    )
        .prop_map(|(question, mut turns, think, answers, answered)| {
            let mut t = Trajectory::new("p", question, vec!["Topic".into()], Source::Rollout);
            if answered {
                turns.push(Turn {
                    think,
                    action: Action::Answer { answers: answers.clone() },
                    observation: None,
                });
                t.answers = answers;
            } else {
                t.truncated = true;
            }
            t.turns = turns;
            t.seal();
            t
        })
}

proptest! {
    #[test]
    fn json_round_trip(t in trajectory()) {
        let back = Trajectory::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.text(), t.text());
    }

    #[test]
    fn transcript_round_trip(t in trajectory()) {
        prop_assert_eq!(parse_transcript(&t.text()).unwrap(), t.turns);
    }

    #[test]
    fn mask_tiles_text(t in trajectory()) {
        let text = t.text();
        let mut pos = 0;
        for span in &t.loss_mask {
            prop_assert_eq!(span.start, pos);
            pos = span.end;
        }
        prop_assert_eq!(pos, text.len());
        prop_assert!(!t.target_text().contains("<information>"));
    }
}
