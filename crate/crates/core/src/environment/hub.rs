use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HUB_CAPACITY: usize = 10;
pub const MAX_ENTRY_CHARS: usize = 400;
pub const MAX_TAG_CHARS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_tag: Option<String>,
    pub created_round: usize,
    pub updated_round: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum HubOp {
    Add {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_tag: Option<String>,
    },
    Replace {
        id: String,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_tag: Option<String>,
    },
    Remove {
        id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HubError {
    #[error("hub is full ({capacity} entries); remove or replace an entry first")]
    CapacityExceeded { capacity: usize },
    #[error("no hub entry with id {0}")]
    UnknownEntry(String),
    #[error("invalid strategy text: {0}")]
    InvalidText(String),
    #[error("empty update")]
    EmptyUpdate,
}

/// Capacity-bounded store of natural-language strategies.
///
/// Ids are `s1`, `s2`, ... and are never reused within an episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyHub {
    entries: Vec<StrategyEntry>,
    capacity: usize,
    next_id: usize,
}

impl StrategyHub {
    pub fn new(capacity: usize) -> Self {
        StrategyHub {
            entries: Vec::new(),
            capacity,
            next_id: 1,
        }
    }

    pub fn entries(&self) -> &[StrategyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Drop all entries; id numbering continues.
    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Apply all ops or none of them.
    pub fn apply(&mut self, ops: &[HubOp], round: usize) -> Result<(), HubError> {
        if ops.is_empty() {
            return Err(HubError::EmptyUpdate);
        }
        let mut next = self.clone();
        for op in ops {
            next.apply_one(op, round)?;
        }
        *self = next;
        Ok(())
    }

    fn apply_one(&mut self, op: &HubOp, round: usize) -> Result<(), HubError> {
        match op {
            HubOp::Add { text, weight_tag } => {
                check_text(text, weight_tag.as_deref())?;
                if self.entries.len() >= self.capacity {
                    return Err(HubError::CapacityExceeded { capacity: self.capacity });
                }
                let id = format!("s{}", self.next_id);
                self.next_id += 1;
                self.entries.push(StrategyEntry {
                    id,
                    text: text.trim().to_string(),
                    weight_tag: weight_tag.as_ref().map(|t| t.trim().to_string()),
                    created_round: round,
                    updated_round: round,
                });
            }
            HubOp::Replace { id, text, weight_tag } => {
                check_text(text, weight_tag.as_deref())?;
                let entry = self
                    .entries
                    .iter_mut()
                    .find(|e| &e.id == id)
                    .ok_or_else(|| HubError::UnknownEntry(id.clone()))?;
                entry.text = text.trim().to_string();
                entry.weight_tag = weight_tag.as_ref().map(|t| t.trim().to_string());
                entry.updated_round = round;
            }
            HubOp::Remove { id } => {
                let pos = self
                    .entries
                    .iter()
                    .position(|e| &e.id == id)
                    .ok_or_else(|| HubError::UnknownEntry(id.clone()))?;
                self.entries.remove(pos);
            }
        }
        Ok(())
    }
}

/// Strategy text is plain prose: non-empty, bounded, single-line, no markup.
fn check_text(text: &str, tag: Option<&str>) -> Result<(), HubError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(HubError::InvalidText("empty text".into()));
    }
    if t.chars().count() > MAX_ENTRY_CHARS {
        return Err(HubError::InvalidText(format!("longer than {MAX_ENTRY_CHARS} characters")));
    }
    if t.contains(['<', '>', '\n', '|']) {
        return Err(HubError::InvalidText("text may not contain '<', '>', '|' or line breaks".into()));
    }
    if let Some(tag) = tag {
        let tag = tag.trim();
        if tag.is_empty() || tag.chars().count() > MAX_TAG_CHARS || !tag.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '_' || c == '.') {
            return Err(HubError::InvalidText(format!(
                "weight tag must be 1-{MAX_TAG_CHARS} characters of letters, digits, '-', '_' or '.'"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add(text: &str) -> HubOp {
        HubOp::Add {
            text: text.into(),
            weight_tag: None,
        }
    }

    #[test]
    fn eleventh_add_is_rejected_without_change() {
        let mut hub = StrategyHub::new(DEFAULT_HUB_CAPACITY);
        for i in 0..10 {
            hub.apply(&[add(&format!("strategy {i}"))], 1).unwrap();
        }
        let before = hub.clone();
        let err = hub.apply(&[add("one too many")], 2).unwrap_err();
        assert_eq!(err, HubError::CapacityExceeded { capacity: 10 });
        assert_eq!(hub, before);
        assert_eq!(hub.len(), 10);
    }

    #[test]
    fn update_is_atomic() {
        let mut hub = StrategyHub::new(3);
        hub.apply(&[add("a")], 1).unwrap();
        let before = hub.clone();
        let ops = [add("b"), HubOp::Remove { id: "s9".into() }];
        assert_eq!(hub.apply(&ops, 1), Err(HubError::UnknownEntry("s9".into())));
        assert_eq!(hub, before);
    }

    #[test]
    fn replace_and_remove_track_rounds_and_ids() {
        let mut hub = StrategyHub::new(3);
        hub.apply(&[add("a"), add("b")], 1).unwrap();
        hub.apply(
            &[HubOp::Replace {
                id: "s2".into(),
                text: "b2".into(),
                weight_tag: Some("high".into()),
            }],
            4,
        )
        .unwrap();
        hub.apply(&[HubOp::Remove { id: "s1".into() }, add("c")], 5).unwrap();
        let ids: Vec<&str> = hub.entries().iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["s2", "s3"]);
        assert_eq!(hub.entries()[0].created_round, 1);
        assert_eq!(hub.entries()[0].updated_round, 4);
        assert_eq!(hub.entries()[0].weight_tag.as_deref(), Some("high"));
    }

    #[test]
    fn markup_rejected() {
        let mut hub = StrategyHub::new(3);
        assert!(matches!(hub.apply(&[add("<script>")], 1), Err(HubError::InvalidText(_))));
        assert!(matches!(hub.apply(&[add("  ")], 1), Err(HubError::InvalidText(_))));
    }
}
