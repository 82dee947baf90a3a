//! Knowledge-base search against the brute-force scan, and retrieval on
//! synthetic clusters.

use rand::Rng;
use rand_distr::StandardNormal;
use semlink::channel::{ChannelConfig, ChannelKind};
use semlink::embedding_io::{
    generate_synthetic, split_transmit_kb, EmbeddingDataset, EmbeddingRecord,
};
use semlink::experiment::{baseline_uncompressed, EvalConfig};
use semlink::knowledge_base::KnowledgeBase;
use semlink::rng::{rng_for, Purpose};

fn gaussian_dataset(n: usize, dim: usize, seed: u64) -> EmbeddingDataset {
    let mut rng = rng_for(seed, Purpose::Sample, &[]);
    let names = (0..10).map(|c| format!("c{c}")).collect();
    let records = (0..n)
        .map(|i| EmbeddingRecord {
            image_id: i as u32,
            label: (i % 10) as u32,
            vector: (0..dim)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect(),
        })
        .collect();
    EmbeddingDataset::empty(dim, names).with_records(records)
}

#[test]
fn search_equals_full_scan() {
    let kb = KnowledgeBase::build(&gaussian_dataset(2000, 512, 1)).unwrap();
    let queries = gaussian_dataset(200, 512, 2);
    let batch: Vec<Vec<f32>> = queries.records.iter().map(|r| r.vector.clone()).collect();
    let found = kb.search_batch(&batch, 5).unwrap();
    for (q, got) in batch.iter().zip(&found) {
        let want = kb.brute_force_search(q, 5).unwrap();
        assert_eq!(got, &want);
        assert!(got.windows(2).all(|w| w[0].distance <= w[1].distance));
    }
}

#[test]
fn duplicate_entries_resolve_to_lowest_id() {
    let mut ds = gaussian_dataset(50, 16, 3);
    let copy = ds.records[7].vector.clone();
    ds.records[31].vector = copy.clone();
    ds.records[12].vector = copy.clone();
    let kb = KnowledgeBase::build(&ds).unwrap();
    let hits = kb.search(&copy, 3).unwrap();
    let ids: Vec<u32> = hits.iter().map(|m| m.image_id).collect();
    assert_eq!(ids, vec![7, 12, 31]);
    assert!(hits.iter().all(|m| m.distance == 0.0));
}

#[test]
fn synthetic_clusters_self_retrieve() {
    let pool = generate_synthetic(20, 50, 512, 0.05, 4).unwrap();
    let (transmit, kb_set) = split_transmit_kb(&pool, 5).unwrap();
    let kb = KnowledgeBase::build(&kb_set).unwrap();
    let hits = transmit
        .records
        .iter()
        .filter(|r| kb.retrieve(&r.vector).unwrap().label == r.label)
        .count();
    assert!(
        hits as f64 / transmit.len() as f64 >= 0.99,
        "{hits}/{}",
        transmit.len()
    );

    let cfg = EvalConfig::new(
        ChannelConfig::new(ChannelKind::Awgn, f64::INFINITY, 1).unwrap(),
        1,
    )
    .unwrap();
    let clean = baseline_uncompressed(&transmit, &kb, &cfg).unwrap();
    assert_eq!(clean.successes, hits as u64);
}
