use std::collections::BTreeMap;

use graphwalk_core::agent::{error_observation, Action, Source, ToolCall, Trajectory, Turn, NO_RESULTS};
use graphwalk_core::eval::{
    curate, exact_match, recovery_rate, reject_sample, retrieval_rate, trajectory_reward, AnswerSet, EmConvention,
    EvalReport, RejectReason, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn query(obs: &str) -> Turn {
    Turn {
        think: "look".into(),
        action: Action::KgQuery {
            call: ToolCall::GetRelations { entity: "X".into() },
        },
        observation: Some(obs.into()),
    }
}

fn traj(id: &str, observations: &[&str], answer: Option<&str>) -> Trajectory {
    let mut t = Trajectory::new(id, "q?", vec!["X".into()], Source::Rollout);
    t.turns = observations.iter().map(|o| query(o)).collect();
    match answer {
        Some(a) => {
            t.turns.push(Turn {
                think: "done".into(),
                action: Action::Answer { answers: vec![a.into()] },
                observation: None,
            });
            t.answers = vec![a.into()];
        }
        None => t.truncated = true,
    }
    t.seal();
    t
}

const BUSCH_OBS: &str = "<information> [St. Louis Cardinals, sports.sports_team.arena_stadium, Busch Stadium] </information>";
const EMPTY_OBS: &str = "<information> (no results) </information>";

#[test]
fn rejection_sampling_four_cases() {
    let gold = AnswerSet::new(["Busch Stadium"]);
    let batch = vec![
        traj("good", &[BUSCH_OBS], Some("Busch Stadium")),
        traj("guess", &[EMPTY_OBS], Some("Busch Stadium")),
        traj("wrong", &[BUSCH_OBS], Some("St. Louis Cardinals")),
        traj("cut", &[BUSCH_OBS], None),
    ];
    let verdicts: Vec<Verdict> = batch
        .iter()
        .map(|t| reject_sample(t, &gold, EmConvention::Hit).unwrap())
        .collect();
    assert_eq!(verdicts[0], Verdict::Accept);
    assert_eq!(verdicts[1], Verdict::Reject { reasons: vec![RejectReason::Ungrounded] });
    assert_eq!(verdicts[2], Verdict::Reject { reasons: vec![RejectReason::Incorrect] });
    assert_eq!(verdicts[3], Verdict::Reject { reasons: vec![RejectReason::Truncated] });

    let split = curate(batch, |_| Some(&gold), EmConvention::Hit).unwrap();
    assert_eq!(split.accepted.len(), 1);
    assert_eq!(split.reason_counts().len(), 3);
}

#[test]
fn retrieval_and_recovery_rates() {
    let gold = AnswerSet::new(["Busch Stadium"]);
    let batch = [
        traj("a", &[BUSCH_OBS], Some("Busch Stadium")),
        traj("b", &[EMPTY_OBS, BUSCH_OBS], Some("Busch Stadium")),
        traj("c", &[], Some("Busch Stadium")),
    ];
    let pairs: Vec<_> = batch.iter().map(|t| (t, &gold)).collect();
    assert!((retrieval_rate(pairs.clone()) - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(recovery_rate(pairs, EmConvention::Hit).unwrap(), Some(1.0));

    let batch = [
        traj("d", &[EMPTY_OBS], Some("Busch Stadium")),
        traj("e", &[&error_observation("unknown entity")], Some("Fenway Park")),
        traj("f", &[BUSCH_OBS], Some("Fenway Park")),
    ];
    let pairs: Vec<_> = batch.iter().map(|t| (t, &gold)).collect();
    assert_eq!(recovery_rate(pairs, EmConvention::Hit).unwrap(), Some(0.5));

    let clean = [traj("g", &[BUSCH_OBS], Some("Busch Stadium"))];
    assert_eq!(recovery_rate(clean.iter().map(|t| (t, &gold)), EmConvention::Hit).unwrap(), None);
    assert!(EMPTY_OBS.contains(NO_RESULTS));
}

#[test]
fn reward_equals_em_on_random_trajectories() {
    let pool = ["Busch Stadium", "Fenway Park", "St. Louis", "Boston", "the Busch Stadium"];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let gold = AnswerSet::new([pool[rng.random_range(0..pool.len())]]);
        let t = traj(&format!("t{i}"), &[BUSCH_OBS], Some(pool[rng.random_range(0..pool.len())]));
        for conv in [EmConvention::Hit, EmConvention::Set] {
            let em = exact_match(&AnswerSet::new(&t.answers), &gold, conv).unwrap();
            assert_eq!(trajectory_reward(&t, &gold, conv).unwrap(), em);
        }
    }
    let cut = traj("cut", &[BUSCH_OBS], None);
    assert_eq!(trajectory_reward(&cut, &AnswerSet::new(["Busch Stadium"]), EmConvention::Hit).unwrap(), 0);
}

#[test]
fn report_aggregates_recompute() {
    let gold = BTreeMap::from([
        ("q1".to_string(), AnswerSet::new(["Busch Stadium"])),
        ("q2".to_string(), AnswerSet::new(["Fenway Park"])),
    ]);
    let trajs = vec![
        traj("q1#0", &[BUSCH_OBS], Some("Busch Stadium")),
        traj("q1#1", &[EMPTY_OBS], Some("Fenway Park")),
        traj("q2#0", &[BUSCH_OBS], None),
        traj("q2#1", &[BUSCH_OBS], Some("Fenway Park")),
    ];
    let report = EvalReport::build(&trajs, &gold, EmConvention::Hit, &[1, 2]).unwrap();
    assert!(report.is_consistent());
    assert_eq!(report.aggregates.questions, 2);
    assert!((report.aggregates.pass_at_k[&1] - 0.5).abs() < 1e-12);
    assert!((report.aggregates.pass_at_k[&2] - 1.0).abs() < 1e-12);
    assert_eq!(report.aggregates.recovery_rate, Some(0.0));
    assert!(EvalReport::build(&trajs, &gold, EmConvention::Hit, &[3]).is_err());
}
