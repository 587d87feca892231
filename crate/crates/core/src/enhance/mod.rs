//! On-demand LLM text enhancement.
//!
//! A node is enhanced only when it sits in the candidate set, its keyed
//! probability draw opens the gate, and (on a cache miss) the budget ledger
//! grants a call reservation. Cache hits never consume budget. Transport
//! failures fall back to the original text without spending budget; an
//! embedding failure after a successful call falls back too, but the call is
//! already spent.
//!
//! All draws come from streams keyed by `(run_seed, epoch, node)`, so a
//! node's decision for an epoch is the same regardless of batch order,
//! thread schedule, or how many times it is re-encountered.

mod cache;
mod embed;
mod llm;
mod prompt;

pub use cache::{CacheKey, EnhancementCache, EnhancementRecord, Lookup};
pub use embed::{
    embed_batch_normalized, embed_text, Embedder, HttpEmbedder, MockEmbedder, EMBED_ENDPOINT_VAR,
};
pub use llm::{
    encode_chat_request, ChatClient, CompletionParams, HttpChatClient, MockChatClient,
    LLM_API_KEY_VAR, LLM_ENDPOINT_VAR,
};
pub use prompt::{render_prompt, ChatMessage, PromptCatalog, PromptTemplate, CONTENT_SLOT};

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::rng::{keyed_rng, Lane};
use crate::selection::CandidateSet;

/// Who is eligible for enhancement and how often the gate opens.
#[derive(Clone, Debug)]
pub struct EnhancementPolicy {
    pub probability_p: f64,
    pub candidate_ids: HashSet<NodeId>,
    /// Whether batch seed (query) nodes go through the same gate before
    /// sampling, in addition to ranked neighbors.
    pub enhance_query_nodes: bool,
}

impl EnhancementPolicy {
    pub fn new(p: f64, candidates: &CandidateSet, enhance_query_nodes: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::Argument(format!(
                "enhancement probability must be in [0, 1], got {p}"
            )));
        }
        Ok(Self {
            probability_p: p,
            candidate_ids: candidates.id_set(),
            enhance_query_nodes,
        })
    }

    /// A policy that never enhances anything.
    pub fn disabled() -> Self {
        Self {
            probability_p: 0.0,
            candidate_ids: HashSet::new(),
            enhance_query_nodes: false,
        }
    }
}

/// Hard cap on LLM calls. `reserved` counts grants that may still be in
/// flight; `used` counts completed calls and never decreases. A reservation
/// released without commit (transport failure) returns its slot.
#[derive(Debug)]
pub struct BudgetLedger {
    max_calls: u64,
    reserved: AtomicU64,
    used: AtomicU64,
}

impl BudgetLedger {
    pub fn with_cap(max_calls: u64) -> Self {
        Self {
            max_calls,
            reserved: AtomicU64::new(0),
            used: AtomicU64::new(0),
        }
    }

    pub fn unlimited() -> Self {
        Self::with_cap(u64::MAX)
    }

    pub fn max_calls(&self) -> u64 {
        self.max_calls
    }

    pub fn used_calls(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn is_exhausted(&self) -> bool {
        self.reserved.load(Ordering::SeqCst) >= self.max_calls
    }

    /// Atomically reserves one call slot; `None` when the budget is spent.
    pub fn try_reserve(&self) -> Option<CallReservation<'_>> {
        let granted = self
            .reserved
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |r| {
                (r < self.max_calls).then_some(r + 1)
            })
            .is_ok();
        // `then`, not `then_some`: constructing the guard eagerly would run
        // its release-on-drop even for a denied reservation.
        granted.then(|| CallReservation {
            ledger: self,
            committed: false,
        })
    }
}

/// RAII call slot: commit on a successful LLM reply, drop to release.
pub struct CallReservation<'a> {
    ledger: &'a BudgetLedger,
    committed: bool,
}

impl CallReservation<'_> {
    pub fn commit(mut self) {
        self.committed = true;
        self.ledger.used.fetch_add(1, Ordering::SeqCst);
    }
}

impl Drop for CallReservation<'_> {
    fn drop(&mut self) {
        if !self.committed {
            self.ledger.reserved.fetch_sub(1, Ordering::SeqCst);
        }
    }
}

/// Timestamp source for cache records; `Fixed` keeps offline runs
/// byte-reproducible.
#[derive(Clone, Copy, Debug)]
pub enum Clock {
    System,
    Fixed(u64),
}

impl Clock {
    fn now(&self) -> u64 {
        match self {
            Clock::Fixed(t) => *t,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// The result of one gate pass for one node.
#[derive(Clone, Debug)]
pub enum EnhanceOutcome {
    /// Keep the original text and feature row.
    Original,
    Enhanced {
        text: String,
        embedding: Arc<Vec<f64>>,
        from_cache: bool,
    },
}

impl EnhanceOutcome {
    pub fn is_enhanced(&self) -> bool {
        matches!(self, EnhanceOutcome::Enhanced { .. })
    }
}

/// Bundles the policy, catalog, clients, cache, and ledger behind the
/// per-node gate.
pub struct Enhancer {
    pub policy: EnhancementPolicy,
    catalog: PromptCatalog,
    llm: Arc<dyn ChatClient>,
    embedder: Arc<dyn Embedder>,
    pub cache: Arc<EnhancementCache>,
    pub ledger: Arc<BudgetLedger>,
    params: CompletionParams,
    max_inflight: usize,
    clock: Clock,
}

impl Enhancer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        policy: EnhancementPolicy,
        catalog: PromptCatalog,
        llm: Arc<dyn ChatClient>,
        embedder: Arc<dyn Embedder>,
        cache: Arc<EnhancementCache>,
        ledger: Arc<BudgetLedger>,
        params: CompletionParams,
        max_inflight: usize,
        clock: Clock,
    ) -> Result<Self> {
        catalog.validate()?;
        if max_inflight == 0 {
            return Err(Error::Argument("max_inflight must be at least 1".into()));
        }
        Ok(Self {
            policy,
            catalog,
            llm,
            embedder,
            cache,
            ledger,
            params,
            max_inflight,
            clock,
        })
    }

    pub fn catalog(&self) -> &PromptCatalog {
        &self.catalog
    }

    /// Runs the enhancement gate for one node.
    ///
    /// Returns `Original` when the node is not a candidate, the keyed draw
    /// stays at or above `p`, or the call path is unavailable (budget spent,
    /// transport failure, embedding failure). Otherwise returns the cached
    /// or freshly produced `t+` and `x+`.
    pub fn maybe_enhance(
        &self,
        node: NodeId,
        text: &str,
        run_seed: u64,
        epoch: u32,
    ) -> EnhanceOutcome {
        if !self.policy.candidate_ids.contains(&node) {
            return EnhanceOutcome::Original;
        }
        let mut rng = keyed_rng(run_seed, Lane::Enhance, epoch, node as u64, 0);
        let draw: f64 = rng.random();
        if draw >= self.policy.probability_p {
            return EnhanceOutcome::Original;
        }

        let unary = self.catalog.unary_templates();
        let template = unary[rng.random_range(0..unary.len())];
        let messages = match render_prompt(template, &[text]) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("node {node}: prompt render failed: {e}");
                return EnhanceOutcome::Original;
            }
        };
        let user = &messages[1].content;
        let hash = hex_digest(user);
        let key: CacheKey = (node, template.id.clone(), hash.clone());

        let guard = match self.cache.begin(&key) {
            Lookup::Hit(record) => {
                return EnhanceOutcome::Enhanced {
                    text: record.output_text.clone(),
                    embedding: Arc::new(record.embedding.clone()),
                    from_cache: true,
                };
            }
            Lookup::Miss(guard) => guard,
        };

        let Some(reservation) = self.ledger.try_reserve() else {
            // Budget exhausted: training continues with the original text.
            drop(guard);
            return EnhanceOutcome::Original;
        };

        let reply = match self.llm.complete(&messages, &self.params) {
            Ok(reply) => reply,
            Err(e) => {
                log::warn!("node {node}: llm call failed, keeping original text: {e}");
                return EnhanceOutcome::Original; // reservation released on drop
            }
        };
        reservation.commit();

        let embedding = match embed_text(self.embedder.as_ref(), &reply) {
            Ok(v) => v,
            Err(e) => {
                // The call is already spent; only the record is lost.
                log::warn!("node {node}: embedding failed after llm call: {e}");
                return EnhanceOutcome::Original;
            }
        };

        let record = EnhancementRecord {
            node_id: node,
            prompt_id: template.id.clone(),
            input_hash: hash,
            output_text: reply.clone(),
            embedding: embedding.clone(),
            created_at: self.clock.now(),
        };
        if let Err(e) = self.cache.insert(record) {
            log::warn!("node {node}: cache write failed: {e}");
        }
        drop(guard);

        EnhanceOutcome::Enhanced {
            text: reply,
            embedding: Arc::new(embedding),
            from_cache: false,
        }
    }

    /// Gates a batch of nodes with at most `max_inflight` worker threads.
    /// Outcomes are position-aligned with `items` and independent of the
    /// schedule thanks to keyed draws and the cache's single-flight latch.
    pub fn enhance_batch(
        &self,
        items: &[(NodeId, &str)],
        run_seed: u64,
        epoch: u32,
    ) -> Vec<EnhanceOutcome> {
        if items.is_empty() {
            return Vec::new();
        }
        let workers = self.max_inflight.min(items.len());
        if workers <= 1 {
            return items
                .iter()
                .map(|&(node, text)| self.maybe_enhance(node, text, run_seed, epoch))
                .collect();
        }

        let cursor = AtomicU64::new(0);
        let results: Mutex<Vec<Option<EnhanceOutcome>>> = Mutex::new(vec![None; items.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::SeqCst) as usize;
                    if i >= items.len() {
                        break;
                    }
                    let (node, text) = items[i];
                    let outcome = self.maybe_enhance(node, text, run_seed, epoch);
                    results.lock().unwrap()[i] = Some(outcome);
                });
            }
        });
        results
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|o| o.expect("every slot filled"))
            .collect()
    }
}

fn hex_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
