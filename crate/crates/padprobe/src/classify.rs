//! Turns a batch of probe responses into a padding-policy verdict.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::probe::QueryOutcome;
use crate::wire::RESPONSE_PAD_BLOCK;

/// What a resolver's responses reveal about its padding policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// No response carried the padding option and lengths show no alignment.
    NoPadding,
    /// Some padding is applied, but not the recommended 468-byte blocks.
    Custom,
    /// Every response carried the option and was a multiple of 468 bytes.
    Edns468,
    /// Not a single query produced a valid DNS response.
    Invalid,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::NoPadding => "no_padding",
            Verdict::Custom => "custom",
            Verdict::Edns468 => "edns468",
            Verdict::Invalid => "invalid",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classify a resolver from the queries sent to it.
///
/// Only queries that yielded a parseable DNS response count as evidence; the
/// verdict does not depend on the order the responses arrived in. `Edns468`
/// is deliberately strict: every valid response must both carry the padding
/// option and land on a 468-byte boundary. Responses that are systematically
/// aligned without advertising the option, or marked but misaligned, fall
/// back to `Custom`.
pub fn classify_padding(outcomes: &[QueryOutcome]) -> Verdict {
    let valid: Vec<_> = outcomes.iter().filter_map(|o| o.response.as_ref()).collect();
    if valid.is_empty() {
        return Verdict::Invalid;
    }
    let block = RESPONSE_PAD_BLOCK as usize;
    let all_aligned = valid.iter().all(|r| r.response_len % block == 0);
    let none_marked = valid.iter().all(|r| !r.padding_present);
    let all_marked = valid.iter().all(|r| r.padding_present);

    if none_marked && !all_aligned {
        Verdict::NoPadding
    } else if all_marked && all_aligned {
        Verdict::Edns468
    } else {
        Verdict::Custom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::ResponseRecord;
    use crate::wire::QType;

    fn outcome(len: usize, marked: bool) -> QueryOutcome {
        QueryOutcome {
            qname: "example.com".into(),
            qtype: QType::A,
            query_len: 128,
            response: Some(ResponseRecord {
                response_len: len,
                rcode: 0,
                padding_present: marked,
                padding_len: if marked { Some(10) } else { None },
            }),
            error: None,
        }
    }

    fn failed() -> QueryOutcome {
        QueryOutcome {
            qname: "example.com".into(),
            qtype: QType::A,
            query_len: 128,
            response: None,
            error: Some("timed out".into()),
        }
    }

    #[test]
    fn unmarked_unaligned_responses_mean_no_padding() {
        let batch = [outcome(83, false), outcome(157, false), outcome(411, false)];
        assert_eq!(classify_padding(&batch), Verdict::NoPadding);
    }

    #[test]
    fn marked_aligned_responses_mean_recommended_padding() {
        let batch = [outcome(468, true), outcome(468, true), outcome(936, true)];
        assert_eq!(classify_padding(&batch), Verdict::Edns468);
    }

    #[test]
    fn marked_but_misaligned_responses_mean_custom_padding() {
        let batch = [outcome(128, true), outcome(256, true)];
        assert_eq!(classify_padding(&batch), Verdict::Custom);

        // Aligned but never advertised: some middlebox pads without EDNS0.
        let silent = [outcome(468, false), outcome(936, false)];
        assert_eq!(classify_padding(&silent), Verdict::Custom);

        // Mixed marking is custom too.
        let mixed = [outcome(468, true), outcome(468, false)];
        assert_eq!(classify_padding(&mixed), Verdict::Custom);
    }

    #[test]
    fn no_valid_response_is_invalid() {
        assert_eq!(classify_padding(&[]), Verdict::Invalid);
        assert_eq!(classify_padding(&[failed(), failed()]), Verdict::Invalid);
    }

    #[test]
    fn failed_queries_do_not_poison_valid_evidence() {
        let batch = [failed(), outcome(468, true), failed(), outcome(936, true)];
        assert_eq!(classify_padding(&batch), Verdict::Edns468);
    }

    #[test]
    fn verdict_ignores_response_order() {
        let mut batch = vec![
            outcome(468, true),
            outcome(936, true),
            failed(),
            outcome(1404, true),
        ];
        let before = classify_padding(&batch);
        batch.reverse();
        assert_eq!(classify_padding(&batch), before);
        batch.swap(0, 2);
        assert_eq!(classify_padding(&batch), before);
    }
}
