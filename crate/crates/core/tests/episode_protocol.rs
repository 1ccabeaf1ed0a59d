use calconf_core::agents::{run_episode, Agent, OracleAgent, RandomAgent, RunMeta};
use calconf_core::calendar_gen::generate_regular_calendar;
use calconf_core::conflict_gen::{ConflictGenerator, ConflictParams};
use calconf_core::environment::{
    replay, scan_for_truth, AgentReply, EnvConfig, EpisodeTrace, Observation, TurnParse,
};
use calconf_core::metrics::instance_metrics;
use calconf_core::org_schema::{builtin_schema, default_plan, instantiate_org};
use calconf_core::rewards::{score_trace, RewardConfig};
use calconf_core::{Calendar, ConflictDataset, OrgChart, UserProfile};

fn fixture(n: usize) -> (ConflictDataset, OrgChart, UserProfile, Calendar) {
    let schema = builtin_schema("research-lab").unwrap();
    let (org, profiles) = instantiate_org(&schema, &default_plan("research-lab").unwrap(), 17).unwrap();
    let p = profiles[6].clone();
    let cal = generate_regular_calendar(&p, &org, 2025, 17).unwrap();
    let params = ConflictParams {
        n_rounds: n,
        ..ConflictParams::default()
    };
    let ds = ConflictGenerator::new(&org, &schema.adhoc_templates, params)
        .build_user_dataset(&p, &cal, 17)
        .unwrap();
    (ds, org, p, cal)
}

/// Lists the hub, adds a note, then defers to a random decision. Every
/// observation it sees is checked for leaked truth.
struct HubUser {
    inner: RandomAgent,
}

impl Agent for HubUser {
    fn name(&self) -> String {
        "hub-user".into()
    }

    fn act(&mut self, obs: &Observation) -> AgentReply {
        assert!(scan_for_truth(&serde_json::to_value(obs).unwrap()).is_empty());
        match obs.turn_index {
            1 => AgentReply::text("<hub>list</hub>"),
            2 if obs.hub_snapshot.len() < obs.hub_capacity => {
                AgentReply::text(format!("<hub>update\nadd: note from {}\n</hub>", obs.round_id))
            }
            _ => self.inner.act(obs),
        }
    }
}

#[test]
fn hub_episode_round_trips_through_jsonl_and_replays() {
    let (ds, org, _, cal) = fixture(24);
    let cfg = EnvConfig {
        include_calendar: true,
        ..EnvConfig::default()
    };
    let mut agent = HubUser {
        inner: RandomAgent::new(5),
    };
    let trace = run_episode(&mut agent, &ds, &org, Some(&cal), cfg, &RunMeta::default(), |_| {}).unwrap();
    assert!(trace.is_complete());
    assert!(trace.rounds.iter().all(|r| r.valid && r.u_t));
    assert_eq!(trace.rounds.last().unwrap().hub_after.len(), 10);

    let text = trace.to_jsonl();
    let back = EpisodeTrace::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(back, trace);
    assert_eq!(replay(&back, &ds, &org, Some(&cal)).unwrap(), trace);

    // Dropping the end marker makes the trace read as incomplete.
    let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    assert!(!EpisodeTrace::read_jsonl(cut.as_bytes()).unwrap().is_complete());
}

#[test]
fn prose_and_transport_failures_score_as_invalid() {
    struct Flaky(usize);
    impl Agent for Flaky {
        fn name(&self) -> String {
            "flaky".into()
        }
        fn act(&mut self, _: &Observation) -> AgentReply {
            self.0 += 1;
            if self.0.is_multiple_of(2) {
                AgentReply::text("I would probably go to the first meeting.")
            } else {
                AgentReply::TransportFailure {
                    detail: "timeout".into(),
                }
            }
        }
    }
    let (ds, org, _, _) = fixture(8);
    let trace = run_episode(&mut Flaky(0), &ds, &org, None, EnvConfig::default(), &RunMeta::default(), |_| {}).unwrap();
    assert!(trace.rounds.iter().all(|r| !r.valid && r.k_t == 1));
    assert!(trace.rounds.iter().all(|r| matches!(r.turns[0].parsed, TurnParse::Failure { .. } | TurnParse::NotParsed)));
    let report = instance_metrics(&trace, &ds).unwrap();
    assert_eq!((report.aer, report.invalid_rounds), (1.0, 8));
    let rewards = score_trace(&trace, &ds, &RewardConfig::default()).unwrap();
    assert!(rewards.iter().all(|r| r.r_f == 0 && r.shaped == 0.0));
}

#[test]
fn oracle_trace_is_perfect_and_rewards_are_maximal() {
    let (ds, org, p, _) = fixture(40);
    let mut oracle = OracleAgent::new(p, org.clone());
    let trace = run_episode(&mut oracle, &ds, &org, None, EnvConfig::default(), &RunMeta::default(), |_| {}).unwrap();
    let report = instance_metrics(&trace, &ds).unwrap();
    assert_eq!((report.aer, report.avg_ord, report.err), (0.0, Some(1.0), 0.0));
    let rewards = score_trace(&trace, &ds, &RewardConfig::default()).unwrap();
    assert!(rewards.iter().all(|r| r.r_f == 1 && r.r_a == 1 && r.r_r == 1.0 && r.r_i == 0));
}
