//! The agent-facing output grammar.
//!
//! ```text
//! <hub>list</hub>
//!
//! <hub>update
//! add: <strategy text> [| weight: <tag>]
//! replace s3: <strategy text> [| weight: <tag>]
//! remove s2
//! </hub>
//!
//! <decision>
//! accept: e2
//! decline: e1, e3, e4, e5
//! ranking: e2 > e3 > e1 > e4 > e5
//! rationale: <free text, may continue on following lines>
//! </decision>
//! ```
//!
//! Tags and field names are case-insensitive. Only the first block in the
//! text is read; anything around it is ignored.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::hub::HubOp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub accept: String,
    pub decline: Vec<String>,
    pub ranking: Vec<String>,
    #[serde(default)]
    pub rationale: String,
}

impl Decision {
    /// Whether the accepted event is also ranked first.
    pub fn self_consistent(&self) -> bool {
        self.ranking.first() == Some(&self.accept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentAction {
    HubList,
    HubUpdate { ops: Vec<HubOp> },
    Decision(Decision),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureCode {
    NoBlock,
    BadId,
    NotAPermutation,
    MultiAccept,
    MissingField,
    IncompleteDecline,
    BadHubCommand,
}

impl fmt::Display for FailureCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureCode::NoBlock => "no-block",
            FailureCode::BadId => "bad-id",
            FailureCode::NotAPermutation => "not-a-permutation",
            FailureCode::MultiAccept => "multi-accept",
            FailureCode::MissingField => "missing-field",
            FailureCode::IncompleteDecline => "incomplete-decline",
            FailureCode::BadHubCommand => "bad-hub-command",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub code: FailureCode,
    pub detail: String,
}

impl ParseFailure {
    fn new(code: FailureCode, detail: impl Into<String>) -> Self {
        ParseFailure {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Parse raw agent text against the ids of the current round's events.
pub fn parse_agent_text(raw: &str, event_ids: &[&str]) -> Result<AgentAction, ParseFailure> {
    // ASCII lowercasing keeps byte offsets aligned with `raw`.
    let lower = raw.to_ascii_lowercase();
    let hub = lower.find("<hub>");
    let decision = lower.find("<decision>");
    match (hub, decision) {
        (None, None) => Err(ParseFailure::new(FailureCode::NoBlock, "no <hub> or <decision> block")),
        (Some(h), d) if d.is_none_or(|d| h < d) => {
            let body_start = h + "<hub>".len();
            let end = lower[body_start..]
                .find("</hub>")
                .ok_or_else(|| ParseFailure::new(FailureCode::BadHubCommand, "unterminated <hub> block"))?;
            parse_hub(&raw[body_start..body_start + end])
        }
        (_, Some(d)) => {
            let body_start = d + "<decision>".len();
            let end = lower[body_start..].find("</decision>").map_or(raw.len(), |e| body_start + e);
            parse_decision(&raw[body_start..end], event_ids)
        }
        (Some(_), None) => unreachable!("covered by the hub arm"),
    }
}

fn parse_hub(body: &str) -> Result<AgentAction, ParseFailure> {
    let body = body.trim();
    if body.eq_ignore_ascii_case("list") {
        return Ok(AgentAction::HubList);
    }
    let bad = |msg: String| ParseFailure::new(FailureCode::BadHubCommand, msg);
    let rest = strip_prefix_ci(body, "update").ok_or_else(|| bad(format!("expected 'list' or 'update', got {:?}", first_line(body))))?;
    let mut ops = Vec::new();
    for line in rest.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(text) = strip_prefix_ci(line, "add:") {
            let (text, weight_tag) = split_weight(text).map_err(bad)?;
            ops.push(HubOp::Add { text, weight_tag });
        } else if let Some(spec) = strip_prefix_ci(line, "replace") {
            let (id, text) = spec
                .split_once(':')
                .ok_or_else(|| bad(format!("replace needs 'replace <id>: <text>', got {line:?}")))?;
            let (text, weight_tag) = split_weight(text).map_err(bad)?;
            ops.push(HubOp::Replace {
                id: id.trim().to_ascii_lowercase(),
                text,
                weight_tag,
            });
        } else if let Some(id) = strip_prefix_ci(line, "remove") {
            let id = id.trim().trim_start_matches(':').trim();
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(bad(format!("remove needs a single entry id, got {line:?}")));
            }
            ops.push(HubOp::Remove {
                id: id.to_ascii_lowercase(),
            });
        } else {
            return Err(bad(format!("unknown hub update record {line:?}")));
        }
    }
    if ops.is_empty() {
        return Err(bad("update block has no records".into()));
    }
    Ok(AgentAction::HubUpdate { ops })
}

fn split_weight(text: &str) -> Result<(String, Option<String>), String> {
    match text.split_once('|') {
        None => Ok((text.trim().to_string(), None)),
        Some((t, w)) => {
            let tag = strip_prefix_ci(w.trim(), "weight:").ok_or_else(|| format!("expected '| weight: <tag>', got {w:?}"))?;
            Ok((t.trim().to_string(), Some(tag.trim().to_string())))
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Accept,
    Decline,
    Ranking,
    Rationale,
}

fn field_of(key: &str) -> Option<Field> {
    match key.trim().to_ascii_lowercase().as_str() {
        "accept" | "accepted" => Some(Field::Accept),
        "decline" | "declined" => Some(Field::Decline),
        "ranking" | "rank" => Some(Field::Ranking),
        "rationale" => Some(Field::Rationale),
        _ => None,
    }
}

fn normalize_id(token: &str) -> String {
    token
        .trim_matches(|c: char| c.is_whitespace() || "`\"'[](){}.;*".contains(c))
        .to_ascii_lowercase()
}

fn id_list(value: &str, separators: &[char]) -> Vec<String> {
    value
        .split(|c: char| separators.contains(&c))
        .map(normalize_id)
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_decision(body: &str, event_ids: &[&str]) -> Result<AgentAction, ParseFailure> {
    let mut accept: Vec<String> = Vec::new();
    let mut decline: Option<Vec<String>> = None;
    let mut ranking: Option<Vec<String>> = None;
    let mut rationale: Option<String> = None;
    let mut accept_seen = false;
    let mut current = None;
    for line in body.lines() {
        let trimmed = line.trim().trim_start_matches(['-', '*']).trim_start();
        let keyed = trimmed.split_once(':').and_then(|(k, v)| field_of(k).map(|f| (f, v)));
        match keyed {
            Some((Field::Accept, v)) => {
                accept_seen = true;
                accept.extend(id_list(v, &[',', ' ', '\t']));
                current = Some(Field::Accept);
            }
            Some((Field::Decline, v)) => {
                decline.get_or_insert_with(Vec::new).extend(id_list(v, &[',', ' ', '\t']));
                current = Some(Field::Decline);
            }
            Some((Field::Ranking, v)) => {
                ranking.get_or_insert_with(Vec::new).extend(id_list(v, &['>', ',', ' ', '\t']));
                current = Some(Field::Ranking);
            }
            Some((Field::Rationale, v)) => {
                let r = rationale.get_or_insert_with(String::new);
                if !r.is_empty() {
                    r.push('\n');
                }
                r.push_str(v.trim());
                current = Some(Field::Rationale);
            }
            None if current == Some(Field::Rationale) => {
                let r = rationale.get_or_insert_with(String::new);
                r.push('\n');
                r.push_str(line.trim());
            }
            None => {}
        }
    }

    let fail = |code, detail: String| ParseFailure { code, detail };
    if !accept_seen || accept.is_empty() {
        return Err(fail(FailureCode::MissingField, "missing accept field".into()));
    }
    let decline = decline.ok_or_else(|| fail(FailureCode::MissingField, "missing decline field".into()))?;
    let ranking = ranking.ok_or_else(|| fail(FailureCode::MissingField, "missing ranking field".into()))?;
    if accept.len() > 1 {
        return Err(fail(FailureCode::MultiAccept, format!("accept names {} events", accept.len())));
    }
    let known: BTreeSet<&str> = event_ids.iter().copied().collect();
    for id in accept.iter().chain(&decline).chain(&ranking) {
        if !known.contains(id.as_str()) {
            return Err(fail(FailureCode::BadId, format!("unknown event id {id:?}")));
        }
    }
    let accept = accept.remove(0);
    let others: BTreeSet<&str> = known.iter().copied().filter(|id| *id != accept).collect();
    let declined: BTreeSet<&str> = decline.iter().map(String::as_str).collect();
    if declined != others || declined.len() != decline.len() {
        if declined.contains(accept.as_str()) {
            return Err(fail(FailureCode::MultiAccept, format!("{accept} is both accepted and declined")));
        }
        return Err(fail(FailureCode::IncompleteDecline, "decline must list every other event exactly once".into()));
    }
    let ranked: BTreeSet<&str> = ranking.iter().map(String::as_str).collect();
    if ranked != known || ranking.len() != known.len() {
        return Err(fail(FailureCode::NotAPermutation, "ranking must list every event exactly once".into()));
    }
    Ok(AgentAction::Decision(Decision {
        accept,
        decline,
        ranking,
        rationale: rationale.unwrap_or_default().trim().to_string(),
    }))
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

/// Render an action in the grammar; `parse_agent_text` inverts it.
pub fn render_action(action: &AgentAction) -> String {
    match action {
        AgentAction::HubList => "<hub>list</hub>".to_string(),
        AgentAction::HubUpdate { ops } => {
            let mut out = String::from("<hub>update\n");
            for op in ops {
                let line = match op {
                    HubOp::Add { text, weight_tag } => format!("add: {text}{}", weight_suffix(weight_tag)),
                    HubOp::Replace { id, text, weight_tag } => format!("replace {id}: {text}{}", weight_suffix(weight_tag)),
                    HubOp::Remove { id } => format!("remove {id}"),
                };
                out.push_str(&line);
                out.push('\n');
            }
            out.push_str("</hub>");
            out
        }
        AgentAction::Decision(d) => render_decision(d),
    }
}

fn weight_suffix(tag: &Option<String>) -> String {
    tag.as_ref().map(|t| format!(" | weight: {t}")).unwrap_or_default()
}

pub fn render_decision(d: &Decision) -> String {
    format!(
        "<decision>\naccept: {}\ndecline: {}\nranking: {}\nrationale: {}\n</decision>",
        d.accept,
        d.decline.join(", "),
        d.ranking.join(" > "),
        d.rationale
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IDS: [&str; 5] = ["e1", "e2", "e3", "e4", "e5"];

    fn code(text: &str) -> FailureCode {
        parse_agent_text(text, &IDS).unwrap_err().code
    }

    #[test]
    fn worked_example_decision_parses() {
        let text = "Thinking about it...\n<decision>\nAccept: e2\nDecline: e1, e3, e4, e5\nRanking: e2 > e3 > e1 > e4 > e5\nRationale: calibration is time-critical\nand cannot move.\n</decision>";
        let AgentAction::Decision(d) = parse_agent_text(text, &IDS).unwrap() else {
            panic!("expected decision")
        };
        assert_eq!(d.accept, "e2");
        assert_eq!(d.decline, ["e1", "e3", "e4", "e5"]);
        assert_eq!(d.ranking, ["e2", "e3", "e1", "e4", "e5"]);
        assert_eq!(d.rationale, "calibration is time-critical\nand cannot move.");
        assert!(d.self_consistent());
    }

    #[test]
    fn failure_codes() {
        assert_eq!(code("I would accept e2."), FailureCode::NoBlock);
        assert_eq!(
            code("<decision>accept: e1, e2\ndecline: e3, e4, e5\nranking: e1 > e2 > e3 > e4 > e5</decision>"),
            FailureCode::MultiAccept
        );
        assert_eq!(
            code("<decision>accept: e1\ndecline: e2, e3, e4, e5\nranking: e1 > e2 > e3 > e4</decision>"),
            FailureCode::NotAPermutation
        );
        assert_eq!(
            code("<decision>accept: e9\ndecline: e2, e3, e4, e5\nranking: e1 > e2 > e3 > e4 > e5</decision>"),
            FailureCode::BadId
        );
        assert_eq!(
            code("<decision>accept: e1\ndecline: e2, e3\nranking: e1 > e2 > e3 > e4 > e5</decision>"),
            FailureCode::IncompleteDecline
        );
        assert_eq!(
            code("<decision>accept: e1\nranking: e1 > e2 > e3 > e4 > e5</decision>"),
            FailureCode::MissingField
        );
        assert_eq!(code("<hub>delete everything</hub>"), FailureCode::BadHubCommand);
        assert_eq!(code("<hub>list"), FailureCode::BadHubCommand);
        assert_eq!(code("<hub>update\n</hub>"), FailureCode::BadHubCommand);
    }

    #[test]
    fn first_block_wins() {
        let text = "<hub>list</hub> then <decision>accept: e1</decision>";
        assert_eq!(parse_agent_text(text, &IDS).unwrap(), AgentAction::HubList);
    }

    #[test]
    fn hub_update_records() {
        let text = "<hub>update\nadd: Deadlines beat routine syncs | weight: high\nreplace s2: Advisor meetings matter\nremove s1\n</hub>";
        let AgentAction::HubUpdate { ops } = parse_agent_text(text, &IDS).unwrap() else {
            panic!("expected update")
        };
        assert_eq!(
            ops,
            vec![
                HubOp::Add {
                    text: "Deadlines beat routine syncs".into(),
                    weight_tag: Some("high".into())
                },
                HubOp::Replace {
                    id: "s2".into(),
                    text: "Advisor meetings matter".into(),
                    weight_tag: None
                },
                HubOp::Remove { id: "s1".into() },
            ]
        );
    }

    fn arb_decision() -> impl Strategy<Value = Decision> {
        (Just(IDS.to_vec()).prop_shuffle(), 0usize..5, "[a-z ]{0,40}").prop_map(|(ranking, a, rationale)| {
            let accept = ranking[a].to_string();
            let decline = IDS.iter().filter(|id| **id != accept).map(|s| s.to_string()).collect();
            Decision {
                accept,
                decline,
                ranking: ranking.into_iter().map(String::from).collect(),
                rationale: rationale.trim().to_string(),
            }
        })
    }

    fn arb_op() -> impl Strategy<Value = HubOp> {
        let text = "[A-Za-z][A-Za-z ,.]{0,30}[a-z]";
        let tag = proptest::option::of("[a-z]{1,8}");
        prop_oneof![
            (text, tag.clone()).prop_map(|(text, weight_tag)| HubOp::Add { text, weight_tag }),
            (1u32..20, text, tag).prop_map(|(n, text, weight_tag)| HubOp::Replace {
                id: format!("s{n}"),
                text,
                weight_tag
            }),
            (1u32..20).prop_map(|n| HubOp::Remove { id: format!("s{n}") }),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_round_trip_decisions(d in arb_decision()) {
            let action = AgentAction::Decision(d);
            prop_assert_eq!(parse_agent_text(&render_action(&action), &IDS).unwrap(), action);
        }

        #[test]
        fn render_parse_round_trip_hub(ops in proptest::collection::vec(arb_op(), 1..5)) {
            let action = AgentAction::HubUpdate { ops };
            prop_assert_eq!(parse_agent_text(&render_action(&action), &IDS).unwrap(), action);
        }

        #[test]
        fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
            let _ = parse_agent_text(&s, &IDS);
        }
    }
}
