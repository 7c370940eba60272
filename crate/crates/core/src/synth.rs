//! Deterministic synthetic trace generation: seeded app profiles with
//! controllable padding and cache effects, for desk-scale ground truth.
//!
//! An app profile is an ordered list of query slots. Each slot models one
//! DNS lookup the app performs at launch: a request/response size pair (byte
//! sizes are stable per domain, with rare small jitter) and a think-time
//! delay before the query (timing is where most run-to-run noise lives).
//! Padding and caching are applied on top of one shared schedule, so traces
//! generated from the same seed differ only in exactly the modeled effect.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::trace::{Dataset, Direction, DnsEvent, Protocol, Trace};

/// Number of query slots shared across apps (third-party domains).
const SHARED_POOL_SIZE: usize = 32;
/// Queries per app launch, sampled uniformly from this range.
const MIN_QUERIES: usize = 10;
const MAX_QUERIES: usize = 16;
/// Upper bound used only to derive unique per-app domain ids.
const MAX_SLOTS: u64 = 64;
/// Multiplicative log-normal spread of think-time delays. Wide on purpose:
/// real launch timing wobbles across octaves, so gap bins carry only a weak
/// app signal compared to record sizes.
const DELAY_SIGMA: f64 = 1.3;
/// Probability that two adjacent lookups race and swap issue order.
const QUERY_SWAP_PROB: f64 = 0.15;
/// Probability that a sampled size deviates from its base, and by how much.
const SIZE_JITTER_PROB: f64 = 0.08;
const SIZE_JITTER_MAX: u32 = 2;

/// RFC 8467 recommended padding blocks.
pub const EDNS_QUERY_BLOCK: u32 = 128;
pub const EDNS_RESPONSE_BLOCK: u32 = 468;

/// A per-domain size distribution: a stable base with rare small deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDist {
    pub base: u32,
    pub jitter_prob: f64,
    pub max_delta: u32,
}

impl SizeDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        if self.max_delta > 0 && rng.random::<f64>() < self.jitter_prob {
            let delta = rng.random_range(1..=self.max_delta);
            if rng.random::<bool>() {
                self.base + delta
            } else {
                self.base.saturating_sub(delta).max(1)
            }
        } else {
            self.base
        }
    }
}

/// A log-normal delay in milliseconds, parameterized by its median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayDist {
    pub median_ms: f64,
    pub sigma: f64,
}

impl DelayDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.median_ms * (self.sigma * z).exp()).clamp(1.0, 60_000.0)
    }
}

/// One DNS lookup an app performs at launch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuerySlot {
    /// Stable identity of the queried domain; shared slots reuse pool ids.
    pub domain_id: u64,
    pub request: SizeDist,
    pub response: SizeDist,
    /// Think time between the previous response and this query.
    pub delay: DelayDist,
    /// Whether the domain comes from the cross-app shared pool.
    pub shared: bool,
}

/// Deterministic per-app workload model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppProfile {
    pub app_label: String,
    /// Resolver round-trip latency for this vantage point.
    pub rtt: DelayDist,
    pub queries: Vec<QuerySlot>,
}

/// How message sizes are padded before emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaddingMode {
    None,
    /// Requests to multiples of 128 bytes, responses to multiples of 468.
    EdnsRecommended,
    Custom {
        block_req: u32,
        block_resp: u32,
    },
}

impl PaddingMode {
    fn blocks(self) -> (u32, u32) {
        match self {
            PaddingMode::None => (1, 1),
            PaddingMode::EdnsRecommended => (EDNS_QUERY_BLOCK, EDNS_RESPONSE_BLOCK),
            PaddingMode::Custom {
                block_req,
                block_resp,
            } => {
                assert!(
                    block_req >= 1 && block_resp >= 1,
                    "padding blocks must be >= 1"
                );
                (block_req, block_resp)
            }
        }
    }
}

/// Smallest multiple of `block` that is >= `size`.
pub fn ceil_to_block(size: u32, block: u32) -> u32 {
    assert!(block >= 1, "padding block must be >= 1");
    size.div_ceil(block) * block
}

/// Whether responses may be served from a warmed shared cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CacheMode {
    Cold,
    /// Shared-pool lookups are omitted (cache hits) with probability rho.
    Warm(f64),
}

fn make_slot(rng: &mut ChaCha8Rng, domain_id: u64, shared: bool) -> QuerySlot {
    let req_log: f64 = rng.sample(LogNormal::new(55f64.ln(), 0.45).unwrap());
    let resp_log: f64 = rng.sample(LogNormal::new(170f64.ln(), 0.55).unwrap());
    let delay_median = {
        let lo = 4f64.ln();
        let hi = 2000f64.ln();
        (lo + (hi - lo) * rng.random::<f64>()).exp()
    };
    QuerySlot {
        domain_id,
        request: SizeDist {
            base: (40.0 + req_log).round().clamp(40.0, 250.0) as u32,
            jitter_prob: SIZE_JITTER_PROB,
            max_delta: SIZE_JITTER_MAX,
        },
        response: SizeDist {
            base: (80.0 + resp_log).round().clamp(80.0, 1200.0) as u32,
            jitter_prob: SIZE_JITTER_PROB,
            max_delta: SIZE_JITTER_MAX,
        },
        delay: DelayDist {
            median_ms: delay_median,
            sigma: DELAY_SIGMA,
        },
        shared,
    }
}

/// Builds `n_apps` deterministic profiles. Each query slot is drawn from a
/// cross-app shared pool with probability `overlap`, and is app-unique
/// otherwise; `overlap = 0` gives pairwise-disjoint domain pools.
pub fn generate_profiles(n_apps: usize, seed: u64, overlap: f64) -> Vec<AppProfile> {
    assert!((0.0..=1.0).contains(&overlap), "overlap must be in [0, 1]");
    let mut pool_rng = ChaCha8Rng::seed_from_u64(seed);
    pool_rng.set_stream(0);
    let pool: Vec<QuerySlot> = (0..SHARED_POOL_SIZE)
        .map(|i| make_slot(&mut pool_rng, i as u64, true))
        .collect();

    (0..n_apps)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let n_queries = rng.random_range(MIN_QUERIES..=MAX_QUERIES);
            let queries = (0..n_queries)
                .map(|k| {
                    if rng.random::<f64>() < overlap {
                        pool[rng.random_range(0..pool.len())]
                    } else {
                        let domain_id = 1000 + i as u64 * MAX_SLOTS + k as u64;
                        make_slot(&mut rng, domain_id, false)
                    }
                })
                .collect();
            let rtt_median = 8.0 + 17.0 * rng.random::<f64>();
            AppProfile {
                app_label: format!("app{:03}", i),
                rtt: DelayDist {
                    median_ms: rtt_median,
                    sigma: 0.3,
                },
                queries,
            }
        })
        .collect()
}

/// One launch of an app: samples the full cold schedule, applies padding to
/// every size, then drops cache-hit lookups (the surviving events keep their
/// schedule before rebasing to the first kept event).
pub fn generate_trace(
    profile: &AppProfile,
    pad: PaddingMode,
    cache: CacheMode,
    seed: u64,
) -> Trace {
    let (block_req, block_resp) = pad.blocks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Concurrent launch lookups race, so issue order jitters between runs.
    let mut order: Vec<usize> = (0..profile.queries.len()).collect();
    for k in 1..order.len() {
        if rng.random::<f64>() < QUERY_SWAP_PROB {
            order.swap(k - 1, k);
        }
    }
    let slots: Vec<&QuerySlot> = order.iter().map(|&k| &profile.queries[k]).collect();
    // (t_query, t_resp, raw request size, raw response size)
    let mut schedule: Vec<(f64, f64, u32, u32)> = Vec::with_capacity(slots.len());
    let mut t = 0.0f64;
    for (k, slot) in slots.iter().enumerate() {
        if k > 0 {
            t += slot.delay.sample(&mut rng);
        }
        let t_query = t;
        t += profile.rtt.sample(&mut rng);
        let req = slot.request.sample(&mut rng);
        let resp = slot.response.sample(&mut rng);
        schedule.push((t_query, t, req, resp));
    }
    // Cache coins are drawn after the schedule, so a warm trace is exactly
    // its cold twin minus the omitted lookups.
    let mut keep = vec![true; slots.len()];
    if let CacheMode::Warm(rho) = cache {
        assert!((0.0..=1.0).contains(&rho), "warm fraction must be in [0, 1]");
        for (k, slot) in slots.iter().enumerate() {
            if slot.shared && rng.random::<f64>() < rho {
                keep[k] = false;
            }
        }
        if keep.iter().all(|&k| !k) {
            // An app launch always issues at least one real lookup.
            keep[0] = true;
        }
    }

    let mut events = Vec::new();
    let mut t_base: Option<u64> = None;
    for (k, &(t_query, t_resp, req, resp)) in schedule.iter().enumerate() {
        if !keep[k] {
            continue;
        }
        let base = *t_base.get_or_insert(t_query as u64);
        events.push(DnsEvent {
            t_ms: t_query as u64 - base,
            dir: Direction::ClientToResolver,
            size: ceil_to_block(req, block_req),
        });
        events.push(DnsEvent {
            t_ms: t_resp as u64 - base,
            dir: Direction::ResolverToClient,
            size: ceil_to_block(resp, block_resp),
        });
    }

    Trace {
        trace_id: format!("{}-{:08x}", profile.app_label, seed),
        app: profile.app_label.clone(),
        resolver: "synth".to_string(),
        protocol: Protocol::Dot,
        collected_at: "2021-01-01T00:00:00Z".to_string(),
        events,
    }
}

/// Full synthetic dataset parameters, mirroring the CLI `synth` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_apps: usize,
    pub traces_per_app: usize,
    pub padding: PaddingMode,
    pub cache: CacheMode,
    /// Fraction of query slots drawn from the shared pool.
    pub overlap: f64,
    pub seed: u64,
    pub resolver: String,
    pub protocol: Protocol,
}

impl SynthConfig {
    pub fn new(n_apps: usize, traces_per_app: usize, seed: u64) -> Self {
        SynthConfig {
            n_apps,
            traces_per_app,
            padding: PaddingMode::None,
            cache: CacheMode::Cold,
            overlap: 0.2,
            seed,
            resolver: "synth".to_string(),
            protocol: Protocol::Dot,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Generates the dataset described by `cfg`: deterministic profiles and one
/// deterministic per-trace seed chain.
pub fn generate_dataset(cfg: &SynthConfig) -> Dataset {
    let profiles = generate_profiles(cfg.n_apps, cfg.seed, cfg.overlap);
    let mut traces = Vec::with_capacity(cfg.n_apps * cfg.traces_per_app);
    for (i, profile) in profiles.iter().enumerate() {
        for m in 0..cfg.traces_per_app {
            let trace_seed = splitmix64(
                cfg.seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15)
                    ^ (m as u64).wrapping_mul(0xc2b2ae3d27d4eb4f),
            );
            let mut trace = generate_trace(profile, cfg.padding, cfg.cache, trace_seed);
            trace.trace_id = format!("{}-{:03}", profile.app_label, m);
            trace.resolver = cfg.resolver.clone();
            trace.protocol = cfg.protocol;
            traces.push(trace);
        }
    }
    Dataset::new(traces).expect("generated traces are valid and uniquely named")
}
