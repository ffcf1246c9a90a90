use patchwork::corpus::{synth_in_memory, SynthConfig};
use patchwork::embed::*;
use patchwork::pretext::{PairNet, PairNetConfig, EMBEDDING_LAYER};
use patchwork::rng;
use patchwork::sampler::SamplerConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut t = EmbeddingTable::new(dim);
    for i in 0..n {
        let v: Vec<f32> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        t.push(PatchRef::new(format!("img_{:03}", i / 10), (i % 10) * 4, 0, 32), &v).unwrap();
    }
    t
}

fn cosine(u: &[f32], v: &[f32]) -> f64 {
    let d: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
    let nu: f64 = u.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    d / (nu * nv)
}

#[test]
fn correlation_basics() {
    let u = [1.0f32, 2.0, -3.0];
    assert!((normalized_correlation(&u, &u).unwrap() - 1.0).abs() < 1e-15);
    assert!((normalized_correlation(&u, &[-1.0, -2.0, 3.0]).unwrap() + 1.0).abs() < 1e-15);
    assert_eq!(normalized_correlation(&u, &[0.0; 3]).unwrap(), 0.0);
    assert_eq!(normalized_correlation(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
    assert!(normalized_correlation(&u, &[1.0]).is_err());
}

proptest! {
    #[test]
    fn correlation_symmetric_scale_invariant_bounded(
        u in prop::collection::vec(-10.0f32..10.0, 16),
        v in prop::collection::vec(-10.0f32..10.0, 16),
        a in 0.01f32..100.0,
    ) {
        let c = normalized_correlation(&u, &v).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert_eq!(c, normalized_correlation(&v, &u).unwrap());
        let scaled: Vec<f32> = u.iter().map(|x| x * a).collect();
        prop_assert!((normalized_correlation(&scaled, &v).unwrap() - c).abs() < 1e-5);
    }

    #[test]
    fn knn_matches_brute_force_small(n in 2usize..80, dim in 1usize..12, k in 1usize..10, seed: u64) {
        let t = random_table(n, dim, seed);
        let q = t.vector(0).to_vec();
        let k = k.min(n);
        let fast = knn_query(&t, &q, k).unwrap();
        let slow = knn_brute_force(&t, &q, k).unwrap();
        prop_assert_eq!(fast.hits.iter().map(|h| h.row).collect::<Vec<_>>(), slow.iter().map(|s| s.0).collect::<Vec<_>>());
    }
}

#[test]
fn knn_agrees_with_independent_scan() {
    let t = random_table(500, 24, 3);
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let q: Vec<f32> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut all: Vec<(f64, usize)> = (0..t.len()).map(|i| (cosine(&q, t.vector(i)), i)).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        let hits = knn_query(&t, &q, 15).unwrap().hits;
        for (h, (s, i)) in hits.iter().zip(&all) {
            assert_eq!(h.row, *i);
            assert!((h.score - s).abs() < 1e-12);
        }
    }
}

#[test]
fn ties_break_by_patch_position() {
    let mut t = EmbeddingTable::new(2);
    for (id, y) in [("b", 0), ("a", 8), ("a", 0), ("c", 0)] {
        t.push(PatchRef::new(id, y, 0, 8), &[1.0, 1.0]).unwrap();
    }
    let got: Vec<String> = knn_query(&t, &[2.0, 2.0], 4).unwrap().hits.into_iter().map(|h| h.patch).collect();
    assert_eq!(got, vec!["a:0:0:8", "a:8:0:8", "b:0:0:8", "c:0:0:8"]);
}

#[test]
fn row_query_excludes_itself() {
    let t = random_table(30, 5, 9);
    let l = knn_query_row(&t, 7, 29).unwrap();
    assert_eq!(l.query.as_deref(), Some(t.patch(7).to_string().as_str()));
    assert!(l.hits.iter().all(|h| h.row != 7));
    assert!(knn_query_row(&t, 7, 30).is_err());
}

#[test]
fn table_round_trip_and_corruption() {
    let t = random_table(25, 7, 1);
    let bytes = t.encode();
    let back = EmbeddingTable::decode(&bytes).unwrap();
    assert_eq!(back.patches(), t.patches());
    for i in 0..t.len() {
        assert_eq!(back.vector(i), t.vector(i));
    }
    assert!(EmbeddingTable::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(EmbeddingTable::decode(&extra).is_err());
    assert!(EmbeddingTable::decode(b"EMB2\0\0\0\0").is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.emb");
    t.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn table_rejects_bad_rows() {
    let mut t = EmbeddingTable::new(2);
    assert!(t.push(PatchRef::new("a", 0, 0, 8), &[1.0]).is_err());
    assert!(t.push(PatchRef::new("a", 0, 0, 8), &[f32::NAN, 0.0]).is_err());
    let r: PatchRef = "img:with:colons:3:4:8".parse().unwrap();
    assert_eq!((r.image_id.as_str(), r.y, r.x, r.size), ("img:with:colons", 3, 4, 8));
    assert_eq!(r.center(), [8.0, 7.0]);
}

#[test]
fn extraction_covers_grid_and_is_deterministic() {
    let corpus = synth_in_memory(3, &SynthConfig::default(), 2).unwrap();
    let cfg = SamplerConfig::desk();
    let net = PairNet::new(PairNetConfig::desk(32, false), &mut rng::seeded(1)).unwrap();
    let t = extract_embeddings(&net, &cfg, &corpus, &Sampling::Grid { stride: 32 }, EMBEDDING_LAYER).unwrap();
    // 160 px scene: five 32 px cells per side
    assert_eq!((t.len(), t.dim()), (75, 128));
    assert!(t.patches().iter().all(|p| p.size == 32 && p.x + 32 <= 160 && p.y + 32 <= 160));
    // post-ReLU activations
    assert!((0..t.len()).all(|i| t.vector(i).iter().all(|&v| v >= 0.0)));
    let again = extract_embeddings(&net, &cfg, &corpus, &Sampling::Grid { stride: 32 }, EMBEDDING_LAYER).unwrap();
    assert_eq!(t.encode(), again.encode());
    let pick = vec![t.patch(4).clone(), t.patch(60).clone()];
    let sub = extract_embeddings(&net, &cfg, &corpus, &Sampling::List(pick), EMBEDDING_LAYER).unwrap();
    assert_eq!(sub.vector(0), t.vector(4));
    assert_eq!(sub.vector(1), t.vector(60));
    assert!(extract_embeddings(&net, &cfg, &corpus, &Sampling::Grid { stride: 32 }, "nope").is_err());
}

#[test]
fn montage_dimensions() {
    let corpus = synth_in_memory(2, &SynthConfig::default(), 2).unwrap();
    let rows = vec![vec![PatchRef::new("img_00000", 0, 0, 32); 3], vec![PatchRef::new("img_00001", 10, 20, 40)]];
    let img = montage(&corpus, &rows, 16).unwrap();
    assert_eq!((img.width(), img.height()), (3 * 18 + 2, 2 * 18 + 2));
    assert!(montage(&corpus, &[vec![PatchRef::new("missing", 0, 0, 8)]], 8).is_err());
}
