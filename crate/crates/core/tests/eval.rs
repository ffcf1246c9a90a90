use patchwork::corpus::{CorpusManifest, ManifestEntry};
use patchwork::eval::*;
use patchwork::Error;
use proptest::prelude::*;

fn manifest(cats: &[&str]) -> CorpusManifest {
    let entries = cats
        .iter()
        .enumerate()
        .map(|(i, c)| ManifestEntry {
            image_id: format!("i{i}"),
            path: format!("i{i}.png"),
            width: 64,
            height: 64,
            category: Some(c.to_string()),
        })
        .collect();
    CorpusManifest::new(0, entries, ".").unwrap()
}

fn ids(v: impl IntoIterator<Item = usize>) -> Vec<String> {
    v.into_iter().map(|i| format!("i{i}")).collect()
}

fn labeled(m: &CorpusManifest, images: Vec<String>) -> EvalSet {
    EvalSet::new(images, &m.categories()).unwrap()
}

#[test]
fn single_pure_set_gives_one_point() {
    let m = manifest(&["a"; 100]);
    let c = purity_coverage(&[labeled(&m, ids(0..10))], &m).unwrap();
    assert_eq!(c.points, vec![CurvePoint { coverage: 0.1, avg_purity: 1.0 }]);
    assert!((c.auc - 0.1).abs() < 1e-15);
}

#[test]
fn perfect_clustering_has_unit_auc() {
    let cats: Vec<&str> = (0..100).map(|i| ["k0", "k1", "k2", "k3", "k4", "k5", "k6", "k7", "k8", "k9"][i / 10]).collect();
    let m = manifest(&cats);
    let sets: Vec<_> = (0..10).map(|s| labeled(&m, ids(s * 10..s * 10 + 10))).collect();
    let c = purity_coverage(&sets, &m).unwrap();
    assert!(c.points.iter().all(|p| p.avg_purity == 1.0));
    assert!((c.points.last().unwrap().coverage - 1.0).abs() < 1e-15);
    assert!((c.auc - 1.0).abs() < 1e-12, "{}", c.auc);
    assert!((c.auc_at_half - 0.5).abs() < 1e-12);
}

#[test]
fn hand_built_three_set_fixture() {
    // 20 of a, 10 of b, 10 of c
    let cats: Vec<&str> = (0..40).map(|i| if i < 20 { "a" } else if i < 30 { "b" } else { "c" }).collect();
    let m = manifest(&cats);
    let s1 = labeled(&m, ids(0..10));
    let s2 = labeled(&m, ids((20..28).chain([0, 1])));
    let s3 = labeled(&m, ids((30..35).chain(10..15)));
    assert_eq!((s1.purity, s1.dominant_category.as_str()), (1.0, "a"));
    assert_eq!((s2.purity, s2.dominant_category.as_str()), (0.8, "b"));
    // five a, five c: tie goes to the smaller name
    assert_eq!((s3.purity, s3.dominant_category.as_str()), (0.5, "a"));
    let c = purity_coverage(&[s1, s2, s3], &m).unwrap();
    let expect = [(10.0 / 40.0, 1.0), (18.0 / 40.0, 0.9), (28.0 / 40.0, 2.3 / 3.0)];
    assert_eq!(c.points.len(), 3);
    for (p, (cov, pur)) in c.points.iter().zip(expect) {
        assert!((p.coverage - cov).abs() < 1e-15 && (p.avg_purity - pur).abs() < 1e-15, "{p:?}");
    }
    // 1/4 + 19/100 + 5/24
    assert!((c.auc - 389.0 / 600.0).abs() < 1e-15, "{}", c.auc);
    // 1/4 + 19/100 + 133/3000
    assert!((c.auc_at_half - 1453.0 / 3000.0).abs() < 1e-15, "{}", c.auc_at_half);
}

#[test]
fn unknown_image_is_an_error() {
    let m = manifest(&["a"; 10]);
    assert!(matches!(EvalSet::new(ids([3, 99]), &m.categories()), Err(Error::UnknownImage(_))));
    let stray = EvalSet { images: ids([99]), dominant_category: "a".into(), purity: 1.0 };
    assert!(matches!(purity_coverage(&[stray], &m), Err(Error::UnknownImage(_))));
}

#[test]
fn ranking_sorts_by_purity_stably() {
    use patchwork::mining::SelectedSet;
    let cats: Vec<&str> = (0..30).map(|i| if i % 2 == 0 { "x" } else { "y" }).collect();
    let m = manifest(&cats);
    let sel = |rank, v: Vec<String>| SelectedSet { rank, seed_image: String::new(), images: v };
    let sets = rank_sets(
        &[sel(0, ids(0..10)), sel(1, ids((0..20).step_by(2))), sel(2, ids(10..20)), sel(3, ids((1..21).step_by(2)))],
        &m,
    )
    .unwrap();
    let purities: Vec<f64> = sets.iter().map(|s| s.purity).collect();
    assert_eq!(purities, vec![1.0, 1.0, 0.5, 0.5]);
    assert_eq!(sets[0].dominant_category, "x");
    assert_eq!(sets[1].dominant_category, "y");
    assert_eq!(sets[2].images, ids(0..10));
}

#[test]
fn confusion_rows_match_class_counts() {
    let truth = [0, 0, 1, 2, 2, 2, 7, 7];
    let pred = [0, 1, 1, 2, 0, 2, 3, 7];
    let r = PretextReport::from_predictions(&truth, &pred).unwrap();
    assert_eq!(r.n_pairs, 8);
    for c in 0..8 {
        assert_eq!(r.confusion[c].iter().sum::<usize>(), truth.iter().filter(|&&t| t == c).count());
    }
    let trace: usize = (0..8).map(|c| r.confusion[c][c]).sum();
    assert_eq!(r.accuracy, trace as f64 / 8.0);
    assert_eq!(r.per_class_accuracy[2], Some(2.0 / 3.0));
    assert_eq!(r.per_class_accuracy[4], None);
    assert!(PretextReport::from_predictions(&[8], &[0]).is_err());
    assert!(PretextReport::from_predictions(&[1, 2], &[0]).is_err());
}

#[test]
fn provenance_hashes_inputs() {
    let p = Provenance::new(Some(b"abc"), "seed = 1\n", 1);
    assert_eq!(p.checkpoint_sha256.as_deref(), Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
    assert_eq!(p.seed, 1);
    assert!(p.csv_comment().starts_with("# checkpoint_sha256: ba78"));
    assert_eq!(Provenance::new(None, "x", 0).checkpoint_sha256, None);
}

fn corpus_and_sets() -> impl Strategy<Value = (Vec<u8>, Vec<Vec<usize>>)> {
    (20usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..4, n),
            prop::collection::vec(prop::collection::vec(0..n, 10), 1..8),
        )
    })
}

proptest! {
    #[test]
    fn auc_bounded_and_pure_novel_prefix_never_hurts((cats, sets) in corpus_and_sets()) {
        let mut names: Vec<String> = cats.iter().map(|c| format!("c{c}")).collect();
        // ten extra images of a fresh category for the novel set
        names.extend((0..10).map(|_| "novel".to_string()));
        let m = manifest(&names.iter().map(String::as_str).collect::<Vec<_>>());
        let mut ranked: Vec<EvalSet> = sets.into_iter().map(|s| labeled(&m, ids(s))).collect();
        ranked.sort_by(|a, b| b.purity.total_cmp(&a.purity));
        let base = purity_coverage(&ranked, &m).unwrap();
        prop_assert!((0.0..=1.0).contains(&base.auc));
        prop_assert!(base.auc_at_half <= base.auc + 1e-12);
        for w in base.points.windows(2) {
            prop_assert!(w[0].coverage <= w[1].coverage);
        }
        let n = cats.len();
        ranked.insert(0, labeled(&m, ids(n..n + 10)));
        let more = purity_coverage(&ranked, &m).unwrap();
        prop_assert!(more.auc >= base.auc - 1e-12, "{} < {}", more.auc, base.auc);
    }
}
