//! Exact retrieval and weighted selection against brute-force oracles.

use artpress_core::enhance::{
    ChatBackend, ChatError, ChatRequest, ChatResponse, EnhanceOptions, Enhancer, FrozenClock, Instructions,
    Method,
};
use artpress_core::ragstore::{
    embed_text, normalize, weighted_pick, HashEmbedder, Kind, KindFilter, PromptRecord, ScoredRecord, Store,
};
use artpress_core::rng::SeededRng;
use proptest::prelude::*;

const DIM: usize = 8;

/// Records drawn from a small pool of directions so exact ties are common.
fn random_store(n: usize, seed: u64) -> Store {
    let mut rng = SeededRng::new(seed);
    let pool: Vec<Vec<f64>> = (0..n.div_ceil(3).max(1))
        .map(|_| {
            let mut v: Vec<f64> = (0..DIM).map(|_| rng.next_unit() - 0.5).collect();
            normalize(&mut v).unwrap();
            v
        })
        .collect();
    let mut store = Store::new(DIM);
    for i in 0..n {
        let vector = pool[(rng.next_u64() % pool.len() as u64) as usize].clone();
        let kind = Kind::ALL[(rng.next_u64() % 4) as usize];
        store
            .insert(PromptRecord {
                id: format!("r{:05}", rng.next_u64() % 100_000 * 10 + i as u64 % 10),
                text: format!("record {i}"),
                kind,
                vector,
            })
            .ok();
    }
    store
}

fn dot_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Full scan, full sort: similarity descending (or ascending), id ascending.
fn brute_force(store: &Store, query: &[f64], k: usize, filter: KindFilter, descending: bool) -> Vec<String> {
    let mut all: Vec<(f64, String)> = store
        .iter()
        .filter(|r| filter.admits(r.kind))
        .map(|r| (dot_cosine(query, &r.vector), r.id.clone()))
        .collect();
    all.sort_by(|a, b| {
        let by_sim = if descending { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
        by_sim.then_with(|| a.1.cmp(&b.1))
    });
    all.into_iter().take(k).map(|(_, id)| id).collect()
}

fn ids(scored: &[ScoredRecord<'_>]) -> Vec<String> {
    scored.iter().map(|s| s.record.id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn top_and_bottom_k_match_brute_force(n in 1usize..120, seed in any::<u64>(), k in 1usize..130, q in any::<u64>()) {
        let store = random_store(n, seed);
        let query: Vec<f64> = store.iter().nth((q % store.len() as u64) as usize).unwrap().vector.clone();
        let top = store.top_k(&query, k, KindFilter::ALL).unwrap();
        prop_assert_eq!(ids(&top), brute_force(&store, &query, k, KindFilter::ALL, true));
        let bottom = store.bottom_k(&query, k, KindFilter::ALL).unwrap();
        prop_assert_eq!(ids(&bottom), brute_force(&store, &query, k, KindFilter::ALL, false));
        prop_assert_eq!(top.len(), k.min(store.len()));
    }

    #[test]
    fn filtered_retrieval_matches_brute_force(seed in any::<u64>(), k in 1usize..20, kind in 0usize..4) {
        let store = random_store(60, seed);
        let filter = KindFilter::only(Kind::ALL[kind]);
        let query = embed_text("any query words", DIM).unwrap();
        let expected = brute_force(&store, &query, k, filter, true);
        match store.top_k(&query, k, filter) {
            Ok(top) => prop_assert_eq!(ids(&top), expected),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn similarities_stay_in_range(seed in any::<u64>()) {
        let store = random_store(40, seed);
        let query = embed_text("range check", DIM).unwrap();
        for s in store.top_k(&query, 40, KindFilter::ALL).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&s.similarity));
        }
    }

    #[test]
    fn weighted_pick_is_seed_deterministic(seed in any::<u64>()) {
        let store = random_store(30, 3);
        let query = embed_text("determinism", DIM).unwrap();
        let top = store.top_k(&query, 8, KindFilter::ALL).unwrap();
        prop_assert_eq!(&weighted_pick(&top, seed).unwrap().id, &weighted_pick(&top, seed).unwrap().id);
    }
}

#[test]
fn weighted_pick_frequencies() {
    let records: Vec<PromptRecord> = (0..3)
        .map(|i| PromptRecord {
            id: format!("t{i}"),
            text: "{base}".into(),
            kind: Kind::PositiveTemplate,
            vector: vec![1.0],
        })
        .collect();
    for weights in [&[0.5, 0.5][..], &[0.9, 0.1], &[0.7, 0.2, 0.1]] {
        let candidates: Vec<ScoredRecord<'_>> = weights
            .iter()
            .zip(&records)
            .map(|(&similarity, record)| ScoredRecord { record, similarity })
            .collect();
        let draws = 20_000;
        let mut counts = vec![0usize; weights.len()];
        for seed in 0..draws {
            let pick = weighted_pick(&candidates, seed).unwrap();
            counts[records.iter().position(|r| r.id == pick.id).unwrap()] += 1;
        }
        let total: f64 = weights.iter().sum();
        for (c, w) in counts.iter().zip(weights) {
            let freq = *c as f64 / draws as f64;
            assert!((freq - w / total).abs() < 0.02, "weights {weights:?}: {freq} vs {}", w / total);
        }
    }
}

#[test]
fn negative_similarities_are_floored_not_dropped() {
    let r = PromptRecord {
        id: "neg".into(),
        text: "x".into(),
        kind: Kind::NegativeTemplate,
        vector: vec![1.0],
    };
    let only = [ScoredRecord { record: &r, similarity: -0.8 }];
    assert_eq!(weighted_pick(&only, 1).unwrap().id, "neg");
}

struct Forbidden;

impl ChatBackend for Forbidden {
    fn chat(&self, _: &ChatRequest) -> Result<ChatResponse, ChatError> {
        panic!("template enhancement must not call a model");
    }
}

fn template_store() -> Store {
    let emb = HashEmbedder::default();
    let mut store = Store::new(256);
    let rows = [
        ("p1", "a photo of {base}, golden hour lighting", Kind::PositiveTemplate),
        ("p2", "an oil painting of {base}, museum lighting", Kind::PositiveTemplate),
        ("p3", "{base} in watercolor", Kind::PositiveTemplate),
        ("n1", "watermark, signature, text", Kind::NegativeTemplate),
        ("n2", "blurry {base}, low quality", Kind::NegativeTemplate),
    ];
    for (id, text, kind) in rows {
        store.insert_text(id, text, kind, &emb).unwrap();
    }
    store
}

#[test]
fn template_enhancement_is_offline_and_seeded() {
    let store = template_store();
    let emb = HashEmbedder::default();
    let instructions = Instructions::default();
    let enhancer = Enhancer {
        store: Some(&store),
        embedder: &emb,
        backend: Some(&Forbidden),
        instructions: &instructions,
        options: EnhanceOptions::default(),
        clock: &FrozenClock,
    };
    for seed in 0..50 {
        let a = enhancer.enhance(Method::Template, "red fox", seed).unwrap();
        let b = enhancer.enhance(Method::Template, "red fox", seed).unwrap();
        assert_eq!(a, b);
        assert!(a.positive.contains("red fox"));
        assert!(!a.positive.contains("{base}") && !a.negative.contains("{base}"));
        assert_eq!(a.provenance.len(), 2);
        assert_eq!(a.elapsed, 0.0);
    }
}
