//! Feature engineering: DNS sequences, burst transform, n-gram vocabularies,
//! and sparse count vectors.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Direction, Trace};

/// One element of a DNS sequence: a message size (responses positive,
/// queries negative) or a binned time gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Token {
    Msg(i64),
    Gap(u32),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Msg(s) => write!(f, "Msg({s})"),
            Token::Gap(b) => write!(f, "Gap({b})"),
        }
    }
}

/// Which events a DNS sequence keeps and which inter-message gaps it encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapPolicy {
    /// All events (signed); a gap is included iff `⌊log₂(1+t)⌋ >= 5`.
    Segram,
    /// Responses only; a gap is included iff `t > 0`.
    BnR,
}

/// Smallest `⌊log₂(1+t)⌋` value at which the Segram policy keeps a gap.
pub const SEGRAM_GAP_THRESHOLD_BIN: u32 = 5;

impl GapPolicy {
    fn retains(self, dir: Direction) -> bool {
        match self {
            GapPolicy::Segram => true,
            GapPolicy::BnR => dir == Direction::ResolverToClient,
        }
    }

    /// Whether a gap of `t_ms` between two retained messages is encoded.
    pub fn includes_gap(self, t_ms: u64) -> bool {
        match self {
            GapPolicy::Segram => (1 + t_ms).ilog2() >= SEGRAM_GAP_THRESHOLD_BIN,
            GapPolicy::BnR => t_ms > 0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("gap of 0 ms has no log bin")]
    ZeroGap,
    #[error("trace {0:?} has no events passing the policy filter")]
    EmptySequence(String),
    #[error("vocabulary requires a non-empty training set")]
    EmptyTraining,
}

/// Log-bin for a positive gap: `⌊log₂ t_ms⌋`.
pub fn gap_bin(t_ms: u64) -> Result<u32, FeatureError> {
    if t_ms == 0 {
        return Err(FeatureError::ZeroGap);
    }
    Ok(t_ms.ilog2())
}

/// Alternating message/gap token sequence, the substrate of the
/// edit-distance and Segram attacks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DnsSequence {
    pub tokens: Vec<Token>,
}

impl DnsSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Builds the DNS sequence of a trace under the given policy: retained
/// messages in event order, with a gap token between two consecutive
/// retained messages whenever the policy includes their time difference.
pub fn build_dns_sequence(trace: &Trace, policy: GapPolicy) -> Result<DnsSequence, FeatureError> {
    let mut tokens = Vec::new();
    let mut prev_t: Option<u64> = None;
    for ev in &trace.events {
        if !policy.retains(ev.dir) {
            continue;
        }
        if let Some(pt) = prev_t {
            let dt = ev.t_ms - pt;
            if policy.includes_gap(dt) {
                tokens.push(Token::Gap(gap_bin(dt).expect("included gaps are positive")));
            }
        }
        let signed = match ev.dir {
            Direction::ClientToResolver => -i64::from(ev.size),
            Direction::ResolverToClient => i64::from(ev.size),
        };
        tokens.push(Token::Msg(signed));
        prev_t = Some(ev.t_ms);
    }
    if tokens.is_empty() {
        return Err(FeatureError::EmptySequence(trace.trace_id.clone()));
    }
    Ok(DnsSequence { tokens })
}

/// Collapses maximal same-sign runs into their sums, preserving order.
/// Input elements must be nonzero; the output strictly alternates in sign.
pub fn burst_transform(sizes: &[i64]) -> Vec<i64> {
    let mut out: Vec<i64> = Vec::new();
    for &s in sizes {
        assert!(s != 0, "burst_transform input must be nonzero");
        match out.last_mut() {
            Some(last) if (*last > 0) == (s > 0) => *last += s,
            _ => out.push(s),
        }
    }
    out
}

/// Attack families that classify feature-count vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureFamily {
    /// Counts of each distinct signed record size.
    FreqDist,
    /// Uni-/bigrams over signed record sizes plus uni-/bigrams over bursts.
    NGrams,
    /// Uni-/bi-/trigrams over the Segram DNS sequence.
    Segram,
}

/// A single countable feature, namespaced by family so numerically equal
/// grams in different families stay distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKey {
    Size(i64),
    RecordUni(i64),
    RecordBi(i64, i64),
    BurstUni(i64),
    BurstBi(i64, i64),
    TokenUni(Token),
    TokenBi(Token, Token),
    TokenTri(Token, Token, Token),
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::Size(s) => write!(f, "size:{s}"),
            FeatureKey::RecordUni(a) => write!(f, "rec1:{a}"),
            FeatureKey::RecordBi(a, b) => write!(f, "rec2:{a}|{b}"),
            FeatureKey::BurstUni(a) => write!(f, "burst1:{a}"),
            FeatureKey::BurstBi(a, b) => write!(f, "burst2:{a}|{b}"),
            FeatureKey::TokenUni(a) => write!(f, "tok1:{a}"),
            FeatureKey::TokenBi(a, b) => write!(f, "tok2:{a}|{b}"),
            FeatureKey::TokenTri(a, b, c) => write!(f, "tok3:{a}|{b}|{c}"),
        }
    }
}

/// Ordered feature space learned from training traces only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub family: FeatureFamily,
    keys: Vec<FeatureKey>,
    #[serde(skip)]
    index: HashMap<FeatureKey, u32>,
}

impl Vocabulary {
    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn position(&self, key: &FeatureKey) -> Option<u32> {
        self.index.get(key).copied()
    }

    /// Rebuilds the key → position map (needed after deserialization).
    pub fn reindex(&mut self) {
        self.index = index_of(&self.keys);
    }
}

fn index_of(keys: &[FeatureKey]) -> HashMap<FeatureKey, u32> {
    keys.iter()
        .enumerate()
        .map(|(i, &k)| (k, i as u32))
        .collect()
}

fn trace_keys(trace: &Trace, family: FeatureFamily, out: &mut BTreeSet<FeatureKey>) {
    for key in iter_trace_keys(trace, family) {
        out.insert(key);
    }
}

/// All feature-key occurrences of one trace under a family, window by window
/// (duplicates included; callers dedupe or count as needed).
fn iter_trace_keys(trace: &Trace, family: FeatureFamily) -> Vec<FeatureKey> {
    let mut keys = Vec::new();
    match family {
        FeatureFamily::FreqDist => {
            for s in trace.signed_sizes() {
                keys.push(FeatureKey::Size(s));
            }
        }
        FeatureFamily::NGrams => {
            let sizes = trace.signed_sizes();
            for &s in &sizes {
                keys.push(FeatureKey::RecordUni(s));
            }
            for w in sizes.windows(2) {
                keys.push(FeatureKey::RecordBi(w[0], w[1]));
            }
            let bursts = burst_transform(&sizes);
            for &b in &bursts {
                keys.push(FeatureKey::BurstUni(b));
            }
            for w in bursts.windows(2) {
                keys.push(FeatureKey::BurstBi(w[0], w[1]));
            }
        }
        FeatureFamily::Segram => {
            let seq = build_dns_sequence(trace, GapPolicy::Segram)
                .expect("valid traces have at least one event");
            for &t in &seq.tokens {
                keys.push(FeatureKey::TokenUni(t));
            }
            for w in seq.tokens.windows(2) {
                keys.push(FeatureKey::TokenBi(w[0], w[1]));
            }
            for w in seq.tokens.windows(3) {
                keys.push(FeatureKey::TokenTri(w[0], w[1], w[2]));
            }
        }
    }
    keys
}

/// Collects the sorted set of feature keys seen across the training traces.
pub fn build_vocabulary(train: &[Trace], family: FeatureFamily) -> Result<Vocabulary, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::EmptyTraining);
    }
    let mut set = BTreeSet::new();
    for trace in train {
        trace_keys(trace, family, &mut set);
    }
    let keys: Vec<FeatureKey> = set.into_iter().collect();
    let index = index_of(&keys);
    Ok(Vocabulary {
        family,
        keys,
        index,
    })
}

/// Sparse occurrence counts against a vocabulary; positions are sorted and
/// counts are positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    counts: Vec<(u32, u32)>,
}

impl FeatureVector {
    /// Builds a sparse vector from dense counts (zeros dropped).
    pub fn from_dense(dense: &[u32]) -> FeatureVector {
        FeatureVector {
            counts: dense
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c > 0)
                .map(|(p, &c)| (p as u32, c))
                .collect(),
        }
    }

    pub fn counts(&self) -> &[(u32, u32)] {
        &self.counts
    }

    pub fn get(&self, position: u32) -> u32 {
        match self.counts.binary_search_by_key(&position, |&(p, _)| p) {
            Ok(i) => self.counts[i].1,
            Err(_) => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn to_dense(&self, len: usize) -> Vec<u32> {
        let mut dense = vec![0u32; len];
        for &(p, c) in &self.counts {
            dense[p as usize] = c;
        }
        dense
    }
}

/// Counts vocabulary-key occurrences in one trace; keys unseen at training
/// time are dropped.
pub fn extract(trace: &Trace, vocab: &Vocabulary) -> FeatureVector {
    let mut map: HashMap<u32, u32> = HashMap::new();
    for key in iter_trace_keys(trace, vocab.family) {
        if let Some(pos) = vocab.position(&key) {
            *map.entry(pos).or_insert(0) += 1;
        }
    }
    let mut counts: Vec<(u32, u32)> = map.into_iter().collect();
    counts.sort_unstable_by_key(|&(p, _)| p);
    FeatureVector { counts }
}

/// Writes a dense feature matrix as CSV: header `app` plus one stringified
/// column per key, one row per trace.
pub fn write_matrix_csv<W: Write>(
    w: W,
    vocab: &Vocabulary,
    rows: &[(String, FeatureVector)],
) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["app".to_string()];
    header.extend(vocab.keys().iter().map(|k| k.to_string()));
    wtr.write_record(&header)?;
    for (label, vec) in rows {
        let mut record = vec![label.clone()];
        record.extend(vec.to_dense(vocab.len()).iter().map(u32::to_string));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}
