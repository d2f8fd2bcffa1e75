//! Records produced by the human studies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One of the two presentation slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    A,
    B,
}

impl Slot {
    pub fn other(self) -> Slot {
        match self {
            Slot::A => Slot::B,
            Slot::B => Slot::A,
        }
    }
}

/// The annotator's pick for "which clip is reversed".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    #[serde(rename = "unknown")]
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unknown,
}

impl Verdict {
    /// Expected win: an unknown counts as a coin flip.
    pub fn score(self) -> f64 {
        match self {
            Verdict::Correct => 1.0,
            Verdict::Incorrect => 0.0,
            Verdict::Unknown => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionJudgment {
    pub annotator_id: String,
    pub video_id: String,
    /// Slot that showed the true forward clip.
    pub shown_order: Slot,
    pub choice: Choice,
    pub replays_a: u32,
    pub replays_b: u32,
    pub prompt_shown: String,
    pub timestamp: String,
}

impl DirectionJudgment {
    pub fn verdict(&self) -> Verdict {
        match self.choice {
            Choice::Unknown => Verdict::Unknown,
            Choice::A if self.shown_order == Slot::B => Verdict::Correct,
            Choice::B if self.shown_order == Slot::A => Verdict::Correct,
            _ => Verdict::Incorrect,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRanking {
    pub annotator_id: String,
    pub prompt_id: String,
    /// model_id → rank position, 1 = best; tied models share a position.
    pub ranks: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub timestamp: String,
}

/// Checks competition-style tie structure: k models sharing rank r push the
/// next distinct rank to r + k.
pub fn validate_tie_structure(ranks: &BTreeMap<String, u32>) -> Result<(), String> {
    let mut values: Vec<u32> = ranks.values().copied().collect();
    values.sort_unstable();
    let mut first_pos = 0usize;
    for i in 0..values.len() {
        if i > 0 && values[i] != values[i - 1] {
            first_pos = i;
        }
        if values[i] as usize != first_pos + 1 {
            return Err(format!(
                "rank {} is not valid at position {}: expected {}",
                values[i],
                i + 1,
                first_pos + 1
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks(v: &[u32]) -> BTreeMap<String, u32> {
        v.iter().enumerate().map(|(i, r)| (format!("m{}", i + 1), *r)).collect()
    }

    #[test]
    fn tie_structures() {
        assert!(validate_tie_structure(&ranks(&[1, 1, 3, 4, 5, 6])).is_ok());
        assert!(validate_tie_structure(&ranks(&[1, 1, 2, 4, 5, 6])).is_err());
        assert!(validate_tie_structure(&ranks(&[1, 1, 2])).is_err());
        assert!(validate_tie_structure(&ranks(&[1; 6])).is_ok());
        assert!(validate_tie_structure(&ranks(&[2, 2, 2, 1, 5, 6])).is_ok());
        assert!(validate_tie_structure(&ranks(&[0, 1])).is_err());
        assert!(validate_tie_structure(&ranks(&[])).is_ok());
    }

    #[test]
    fn verdicts() {
        let mut j = DirectionJudgment {
            annotator_id: "a".into(),
            video_id: "v".into(),
            shown_order: Slot::A,
            choice: Choice::B,
            replays_a: 0,
            replays_b: 0,
            prompt_shown: String::new(),
            timestamp: String::new(),
        };
        assert_eq!(j.verdict(), Verdict::Correct);
        j.choice = Choice::A;
        assert_eq!(j.verdict(), Verdict::Incorrect);
        j.choice = Choice::Unknown;
        assert_eq!(j.verdict(), Verdict::Unknown);
        assert_eq!(serde_json::to_string(&j.choice).unwrap(), "\"unknown\"");
    }
}
