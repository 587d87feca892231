//! Enhancement gate contracts: rendering, rate calibration, wire-format
//! stability against a golden capture, budget safety under concurrency and
//! failure injection, and exactly-once call semantics per cache key.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ellagnn_core::enhance::{
    embed_text, encode_chat_request, BudgetLedger, ChatClient, ChatMessage, Clock,
    CompletionParams, EnhancementCache, EnhancementPolicy, Enhancer, HttpChatClient,
    MockChatClient, MockEmbedder, PromptCatalog,
};
use ellagnn_core::error::{Error, Result};
use ellagnn_core::features::dot;
use ellagnn_core::selection::{CandidateSet, SelectionMethod};
use ellagnn_core::NodeId;
use rand::Rng;

fn candidate_set(ids: Vec<NodeId>) -> CandidateSet {
    CandidateSet {
        method: SelectionMethod::TextLength,
        budget_k: ids.len(),
        node_ids: ids,
    }
}

fn enhancer_with(
    llm: Arc<dyn ChatClient>,
    p: f64,
    candidates: Vec<NodeId>,
    budget: u64,
    max_inflight: usize,
) -> Enhancer {
    Enhancer::new(
        EnhancementPolicy::new(p, &candidate_set(candidates), true).unwrap(),
        PromptCatalog::builtin(),
        llm,
        Arc::new(MockEmbedder::new(32)),
        Arc::new(EnhancementCache::in_memory()),
        Arc::new(BudgetLedger::with_cap(budget)),
        CompletionParams::default(),
        max_inflight,
        Clock::Fixed(0),
    )
    .unwrap()
}

#[test]
fn example_render_matches_by_hand_substitution() {
    let catalog = PromptCatalog::builtin();
    let template = catalog.get("explain").unwrap();
    let text = "Causal discovery with graphs. We study message passing at scale.";
    let messages = ellagnn_core::enhance::render_prompt(template, &[text]).unwrap();

    // Independent reconstruction: split on the slot, join around the text.
    let parts: Vec<&str> = template.body.split("[content]").collect();
    assert_eq!(parts.len(), 2);
    let by_hand = format!("{}{}{}", parts[0], text, parts[1]);
    assert_eq!(messages[1].content, by_hand);
    assert_eq!(messages[0].content, template.system_message);
}

#[test]
fn gate_rate_tracks_probability() {
    let enhancer = enhancer_with(Arc::new(MockChatClient), 0.25, (0..10_000).collect(), u64::MAX, 1);
    let mut enhanced = 0usize;
    for node in 0..10_000usize {
        let text = format!("node text {node}");
        if enhancer.maybe_enhance(node, &text, 42, 0).is_enhanced() {
            enhanced += 1;
        }
    }
    let rate = enhanced as f64 / 10_000.0;
    assert!((rate - 0.25).abs() <= 0.02, "empirical rate {rate}");
}

/// Minimal single-request HTTP stub: accepts one connection, captures the
/// request body, replies with the given JSON.
fn spawn_stub(
    response_json: &'static str,
    status_line: &'static str,
) -> (String, Arc<Mutex<Vec<u8>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let captured = Arc::new(Mutex::new(Vec::new()));
    let captured_clone = Arc::clone(&captured);
    std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut buf = Vec::new();
        let mut tmp = [0u8; 4096];
        let body_start;
        loop {
            let n = stream.read(&mut tmp).unwrap();
            buf.extend_from_slice(&tmp[..n]);
            if let Some(pos) = find_header_end(&buf) {
                body_start = pos;
                break;
            }
        }
        let headers = String::from_utf8_lossy(&buf[..body_start]).to_string();
        let content_length: usize = headers
            .lines()
            .find_map(|l| {
                let (name, value) = l.split_once(':')?;
                name.eq_ignore_ascii_case("content-length")
                    .then(|| value.trim().parse().ok())?
            })
            .unwrap_or(0);
        while buf.len() < body_start + content_length {
            let n = stream.read(&mut tmp).unwrap();
            buf.extend_from_slice(&tmp[..n]);
        }
        *captured_clone.lock().unwrap() = buf[body_start..body_start + content_length].to_vec();
        let response = format!(
            "{status_line}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_json}",
            response_json.len()
        );
        stream.write_all(response.as_bytes()).unwrap();
    });
    (format!("http://{addr}"), captured)
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn golden_messages() -> Vec<ChatMessage> {
    let catalog = PromptCatalog::builtin();
    let template = catalog.get("explain").unwrap();
    ellagnn_core::enhance::render_prompt(
        template,
        &["Spectral Filters on Citation Networks. We characterize smoothing in aggregation."],
    )
    .unwrap()
}

#[test]
fn chat_request_body_matches_golden_capture() {
    let (endpoint, captured) = spawn_stub(
        r#"{"choices":[{"message":{"content":"stub reply"}}]}"#,
        "HTTP/1.1 200 OK",
    );
    let client =
        HttpChatClient::new(&endpoint, "test-key", "vicuna-7b", Duration::from_secs(5)).unwrap();
    let reply = client
        .complete(&golden_messages(), &CompletionParams::default())
        .unwrap();
    assert_eq!(reply, "stub reply");

    let body = captured.lock().unwrap().clone();
    let golden = include_bytes!("golden/chat_request.json");
    assert_eq!(
        body.as_slice(),
        golden.as_slice(),
        "wire body drifted from the golden capture"
    );
    // The encoder used by the client must agree with what went over the wire.
    assert_eq!(
        encode_chat_request("vicuna-7b", &golden_messages(), &CompletionParams::default()),
        body
    );
}

#[test]
fn http_error_statuses_are_transport_errors() {
    let (endpoint, _) = spawn_stub(r#"{"error":"overloaded"}"#, "HTTP/1.1 429 Too Many Requests");
    let client =
        HttpChatClient::new(&endpoint, "k", "m", Duration::from_secs(5)).unwrap();
    let err = client
        .complete(&golden_messages(), &CompletionParams::default())
        .unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
    assert!(err.to_string().contains("429"), "{err}");
}

#[test]
fn empty_completion_is_a_transport_error() {
    let (endpoint, _) = spawn_stub(r#"{"choices":[]}"#, "HTTP/1.1 200 OK");
    let client =
        HttpChatClient::new(&endpoint, "k", "m", Duration::from_secs(5)).unwrap();
    let err = client
        .complete(&golden_messages(), &CompletionParams::default())
        .unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}

/// Mock that fails a deterministic pseudo-random subset of calls and logs
/// every successful completion per user message.
struct FlakyLoggingClient {
    fail_rate: f64,
    calls: AtomicU64,
    successes: Mutex<HashMap<String, u64>>,
}

impl FlakyLoggingClient {
    fn new(fail_rate: f64) -> Self {
        Self {
            fail_rate,
            calls: AtomicU64::new(0),
            successes: Mutex::new(HashMap::new()),
        }
    }
}

impl ChatClient for FlakyLoggingClient {
    fn complete(&self, messages: &[ChatMessage], params: &CompletionParams) -> Result<String> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let mut rng = ChaCha8Rng::seed_from_u64(n ^ 0x5eed);
        if rng.random::<f64>() < self.fail_rate {
            return Err(Error::Transport("injected failure".into()));
        }
        let user = messages.last().unwrap().content.clone();
        let reply = MockChatClient.complete(messages, params)?;
        *self.successes.lock().unwrap().entry(user).or_default() += 1;
        Ok(reply)
    }
}

#[test]
fn budget_holds_under_concurrency_and_failures() {
    for &max_inflight in &[1usize, 4, 16] {
        let cap = 57u64;
        let flaky = Arc::new(FlakyLoggingClient::new(0.3));
        let enhancer = enhancer_with(
            Arc::clone(&flaky) as Arc<dyn ChatClient>,
            1.0,
            (0..120).collect(),
            cap,
            max_inflight,
        );
        let ledger = Arc::clone(&enhancer.ledger);

        // Observer samples the counter while workers run.
        let stop = Arc::new(AtomicBool::new(false));
        let observer = {
            let ledger = Arc::clone(&ledger);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                let mut max_seen = 0;
                while !stop.load(Ordering::SeqCst) {
                    max_seen = max_seen.max(ledger.used_calls());
                    std::thread::yield_now();
                }
                max_seen
            })
        };

        let texts: Vec<String> = (0..120).map(|n| format!("text for node {n}")).collect();
        for epoch in 0..4u32 {
            let items: Vec<(NodeId, &str)> =
                texts.iter().enumerate().map(|(n, t)| (n, t.as_str())).collect();
            let _ = enhancer.enhance_batch(&items, 1, epoch);
            assert!(ledger.used_calls() <= cap, "max_inflight {max_inflight}");
        }
        stop.store(true, Ordering::SeqCst);
        let max_seen = observer.join().unwrap();
        assert!(max_seen <= cap, "observed used_calls {max_seen} > cap {cap}");

        // Exactly-once: no user message was completed successfully twice.
        for (user, count) in flaky.successes.lock().unwrap().iter() {
            assert!(*count <= 1, "duplicate successful call for {user:?}");
        }
    }
}

#[test]
fn repeated_epoch_draws_hit_cache_exactly_once() {
    let counting = Arc::new(FlakyLoggingClient::new(0.0));
    let enhancer = enhancer_with(
        Arc::clone(&counting) as Arc<dyn ChatClient>,
        1.0,
        (0..8).collect(),
        u64::MAX,
        4,
    );
    let texts: Vec<String> = (0..8).map(|n| format!("stable text {n}")).collect();
    for _round in 0..5 {
        // Same epoch key every round: identical template draws, so after the
        // first round everything is a cache hit.
        let items: Vec<(NodeId, &str)> =
            texts.iter().enumerate().map(|(n, t)| (n, t.as_str())).collect();
        let outcomes = enhancer.enhance_batch(&items, 7, 3);
        assert!(outcomes.iter().all(|o| o.is_enhanced()));
    }
    assert_eq!(enhancer.ledger.used_calls(), 8);
    assert_eq!(counting.calls.load(Ordering::SeqCst), 8);
}

#[test]
fn empty_candidate_set_is_a_no_op() {
    let counting = Arc::new(FlakyLoggingClient::new(0.0));
    let enhancer = enhancer_with(
        Arc::clone(&counting) as Arc<dyn ChatClient>,
        1.0,
        Vec::new(),
        u64::MAX,
        4,
    );
    for node in 0..50 {
        assert!(!enhancer.maybe_enhance(node, "text", 1, 0).is_enhanced());
    }
    assert_eq!(counting.calls.load(Ordering::SeqCst), 0);
    assert_eq!(enhancer.cache.len(), 0);
}

#[test]
fn mock_embedder_orders_twenty_pair_suite_correctly() {
    let embedder = MockEmbedder::new(256);
    let topics = [
        "graph sampling strategies for node classification",
        "protein folding dynamics in simulation",
        "market volatility and option pricing",
        "syntax trees in compiler design",
        "coral reef ecosystem monitoring",
        "quantum error correction codes",
        "urban traffic flow optimization",
        "antibiotic resistance gene transfer",
        "glacier mass balance measurement",
        "speech prosody in language learning",
        "wind turbine blade fatigue analysis",
        "archaeological stratigraphy dating",
        "neural architecture search spaces",
        "soil microbiome diversity sampling",
        "satellite orbit determination methods",
        "behavioral economics of saving",
        "photonic crystal waveguides",
        "epidemic spreading on networks",
        "recommender systems cold start",
        "volcanic ash dispersion modeling",
    ];
    for (i, base) in topics.iter().enumerate() {
        let near_text = format!("{base} revisited");
        let unrelated = topics[(i + 7) % topics.len()];
        let base_v = embed_text(&embedder, base).unwrap();
        let near_v = embed_text(&embedder, &near_text).unwrap();
        let far_v = embed_text(&embedder, unrelated).unwrap();
        assert!(
            dot(&base_v, &near_v) > dot(&base_v, &far_v),
            "pair {i}: overlap should beat unrelated"
        );
    }
}
