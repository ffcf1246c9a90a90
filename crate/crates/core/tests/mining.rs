use patchwork::embed::{EmbeddingTable, PatchRef};
use patchwork::mining::*;
use patchwork::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sse(p: &[[f64; 2]; 4], c: [f64; 2], s: f64) -> f64 {
    square_error(p, c, s) * s * s
}

/// Coarse 4 px grid over the point bounding box, then a 0.25 px grid
/// around the coarse winner. Minimizes the unnormalized squared error.
fn grid_search(p: &[[f64; 2]; 4], avg: f64) -> ([f64; 2], f64) {
    let (lo, hi) = (SIDE_MIN * avg, SIDE_MAX * avg);
    let xs = p.iter().map(|q| q[0]);
    let ys = p.iter().map(|q| q[1]);
    let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let search = |cx: (f64, f64), cy: (f64, f64), sr: (f64, f64), step: f64| {
        let mut best = (f64::INFINITY, [0.0; 2], 0.0);
        let steps = |(a, b): (f64, f64)| ((b - a) / step).round() as usize;
        for i in 0..=steps(cx) {
            for j in 0..=steps(cy) {
                for k in 0..=steps(sr) {
                    let c = [cx.0 + i as f64 * step, cy.0 + j as f64 * step];
                    let s = (sr.0 + k as f64 * step).min(hi);
                    let e = sse(p, c, s);
                    if e < best.0 {
                        best = (e, c, s);
                    }
                }
            }
        }
        best
    };
    let (_, c, s) = search((x0.floor(), x1.ceil()), (y0.floor(), y1.ceil()), (lo, hi), 4.0);
    let (_, c, s) = search((c[0] - 4.0, c[0] + 4.0), (c[1] - 4.0, c[1] + 4.0), ((s - 4.0).max(lo), (s + 4.0).min(hi)), 0.25);
    (c, s)
}

/// Largest normalized-error change from moving the fit by ±`r` px.
fn ne_tolerance(p: &[[f64; 2]; 4], f: &SquareFit, avg: f64, r: f64) -> f64 {
    let mut worst = 0.0f64;
    for dx in [-r, 0.0, r] {
        for dy in [-r, 0.0, r] {
            for ds in [-r, 0.0, r] {
                let s = (f.side + ds).clamp(SIDE_MIN * avg, SIDE_MAX * avg);
                let e = square_error(p, [f.center[0] + dx, f.center[1] + dy], s);
                worst = worst.max((e - f.normalized_error).abs());
            }
        }
    }
    worst
}

#[test]
fn exact_square_fits_with_zero_error() {
    let f = fit_square(&[[0.0, 0.0], [100.0, 0.0], [0.0, 100.0], [100.0, 100.0]], 96.0).unwrap();
    assert_eq!(f.center, [50.0, 50.0]);
    assert_eq!(f.side, 100.0);
    assert_eq!(f.normalized_error, 0.0);
    assert!(f.verified);
}

#[test]
fn oversized_square_clamps_side() {
    let f = fit_square(&[[0.0, 0.0], [200.0, 0.0], [0.0, 200.0], [200.0, 200.0]], 96.0).unwrap();
    assert_eq!(f.side, 128.0);
    assert!((f.normalized_error - 10368.0 / 16384.0).abs() < 1e-12);
    assert!(f.verified);
}

#[test]
fn collinear_points_fail_verification() {
    let p = [[0.0, 0.0], [50.0, 0.0], [100.0, 0.0], [150.0, 0.0]];
    let f = fit_square(&p, 96.0).unwrap();
    assert!(f.normalized_error >= 1.0 && !f.verified);
    let (c, s) = grid_search(&p, 96.0);
    assert!(square_error(&p, c, s) >= 1.0);
}

#[test]
fn degenerate_points_are_unverified_with_infinite_error() {
    let f = fit_square(&[[3.0, 4.0]; 4], 32.0).unwrap();
    assert!(f.normalized_error.is_infinite() && !f.verified);
    assert!(fit_square(&[[0.0, 0.0]; 4], 0.0).is_err());
    assert!(fit_square(&[[f64::NAN, 0.0], [0.0; 2], [0.0; 2], [1.0; 2]], 32.0).is_err());
}

#[test]
fn closed_form_matches_grid_search() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let avg = 32.0;
    for case in 0..500 {
        let p: [[f64; 2]; 4] = match case % 5 {
            // identical points
            0 if case % 25 == 0 => [[r.random_range(0.0..100.0), r.random_range(0.0..100.0)]; 4],
            // noisy squares, some with sides outside the clamp range
            0..=2 => {
                let side = r.random_range(10.0..60.0);
                let c = [r.random_range(20.0..80.0), r.random_range(20.0..80.0)];
                ROLE_OFFSETS.map(|d| [c[0] + side * d[0] + r.random_range(-6.0..6.0), c[1] + side * d[1] + r.random_range(-6.0..6.0)])
            }
            _ => [0; 4].map(|_| [r.random_range(0.0..64.0), r.random_range(0.0..64.0)]),
        };
        let f = fit_square(&p, avg).unwrap();
        let (c, s) = grid_search(&p, avg);
        let grid_ne = square_error(&p, c, s);
        if f.normalized_error.is_infinite() {
            assert!(!f.verified && grid_ne >= 1.0, "case {case}");
            continue;
        }
        assert!(sse(&p, f.center, f.side) <= sse(&p, c, s) + 1e-9, "case {case}: closed form beaten");
        let tol = ne_tolerance(&p, &f, avg, 0.5);
        assert!((grid_ne - f.normalized_error).abs() <= tol + 1e-12, "case {case}: {grid_ne} vs {}", f.normalized_error);
    }
}

fn points() -> impl Strategy<Value = [[f64; 2]; 4]> {
    prop::array::uniform4(prop::array::uniform2(-200.0..200.0f64))
}

proptest! {
    #[test]
    fn translation_equivariant(p in points(), t in prop::array::uniform2(-500.0..500.0f64), avg in 8.0..120.0f64) {
        let f = fit_square(&p, avg).unwrap();
        let q = p.map(|v| [v[0] + t[0], v[1] + t[1]]);
        let g = fit_square(&q, avg).unwrap();
        prop_assert!((g.center[0] - f.center[0] - t[0]).abs() < 1e-9);
        prop_assert!((g.center[1] - f.center[1] - t[1]).abs() < 1e-9);
        prop_assert!((g.side - f.side).abs() < 1e-9);
        prop_assert!((g.normalized_error - f.normalized_error).abs() < 1e-9);
    }

    #[test]
    fn scale_covariant(p in points(), a in 0.1..10.0f64, avg in 8.0..120.0f64) {
        let f = fit_square(&p, avg).unwrap();
        let g = fit_square(&p.map(|v| [v[0] * a, v[1] * a]), avg * a).unwrap();
        prop_assert!((g.center[0] - a * f.center[0]).abs() < 1e-9 * a.max(1.0) * 200.0);
        prop_assert!((g.center[1] - a * f.center[1]).abs() < 1e-9 * a.max(1.0) * 200.0);
        prop_assert!((g.side - a * f.side).abs() < 1e-9 * a.max(1.0) * 200.0);
        prop_assert!((g.normalized_error - f.normalized_error).abs() < 1e-9);
    }

    #[test]
    fn side_stays_in_clamp_range(p in points(), avg in 8.0..120.0f64) {
        let f = fit_square(&p, avg).unwrap();
        prop_assert!(f.side >= SIDE_MIN * avg - 1e-12 && f.side <= SIDE_MAX * avg + 1e-12);
        prop_assert_eq!(f.verified, f.normalized_error < 1.0);
    }
}

/// `n` images, each a `g`×`g` grid of 8 px cells with vectors from `vec_of`.
fn grid_table(n: usize, g: usize, mut vec_of: impl FnMut(usize, usize) -> Vec<f32>) -> EmbeddingTable {
    let dim = vec_of(0, 0).len();
    let mut t = EmbeddingTable::new(dim);
    for i in 0..n {
        for c in 0..g * g {
            t.push(PatchRef::new(format!("img_{i:04}"), (c / g) * 8, (c % g) * 8, 8), &vec_of(i, c)).unwrap();
        }
    }
    t
}

fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn duplicate_corpus_verifies_every_match() {
    let cells = random_vectors(9, 16, 1);
    let t = grid_table(101, 3, |_, c| cells[c].clone());
    let recs = mine_constellations(&t, &MiningConfig { n_seeds: 6, top_k: 100, seed: 3 }).unwrap();
    assert_eq!(recs.len(), 6);
    for r in &recs {
        assert_eq!(r.matches.len(), 100);
        assert_eq!(r.verify_count, 100);
        assert!(r.matches.iter().all(|m| m.normalized_error == 0.0 && m.image_id != r.seed_image));
    }
}

#[test]
fn single_seed_gives_one_record_of_top_k() {
    let v = random_vectors(101 * 9, 8, 2);
    let t = grid_table(101, 3, |i, c| v[i * 9 + c].clone());
    let recs = mine_constellations(&t, &MiningConfig { n_seeds: 1, top_k: 100, seed: 0 }).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].matches.len(), 100);
    assert_eq!(recs[0].rank, 0);
}

#[test]
fn small_corpus_rejected() {
    let t = grid_table(100, 2, |_, _| vec![1.0, 0.0]);
    let err = mine_constellations(&t, &MiningConfig::default()).unwrap_err();
    assert!(matches!(err, Error::CorpusTooSmall { found: 100, required: 101 }));
    assert_eq!(err.exit_code(), 2);
    let t = grid_table(150, 2, |_, _| vec![1.0, 0.0]);
    let err = mine_constellations(&t, &MiningConfig { top_k: 150, ..MiningConfig::default() }).unwrap_err();
    assert!(matches!(err, Error::CorpusTooSmall { required: 151, .. }));
}

#[test]
fn records_sorted_and_counts_consistent() {
    let v = random_vectors(120 * 16, 8, 4);
    let t = grid_table(120, 4, |i, c| v[i * 16 + c].clone());
    let recs = mine_constellations(&t, &MiningConfig { n_seeds: 40, top_k: 20, seed: 1 }).unwrap();
    for w in recs.windows(2) {
        assert!((w[0].verify_count, &w[1].seed_image) >= (w[1].verify_count, &w[0].seed_image));
    }
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.rank, i);
        assert_eq!(r.verify_count, r.matches.iter().filter(|m| m.verified).count());
        assert!(r.matches.windows(2).all(|m| m[0].score >= m[1].score));
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let v = random_vectors(110 * 9, 8, 5);
    let t = grid_table(110, 3, |i, c| v[i * 9 + c].clone());
    let cfg = MiningConfig { n_seeds: 24, top_k: 20, seed: 9 };
    let run = |n| {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| mine_constellations(&t, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn cluster_file_round_trip_with_infinite_error() {
    let v = random_vectors(101 * 4, 4, 6);
    let t = grid_table(101, 2, |i, c| v[i * 4 + c].clone());
    let mut recs = mine_constellations(&t, &MiningConfig { n_seeds: 2, top_k: 20, seed: 0 }).unwrap();
    recs[0].matches[0].normalized_error = f64::INFINITY;
    recs[0].matches[0].verified = false;
    let mut buf = Vec::new();
    write_clusters(&mut buf, &recs).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().next().unwrap().contains("\"normalized_error\":null"));
    let back = read_clusters(&buf[..]).unwrap();
    assert_eq!(back, recs);
}

fn record(rank: usize, images: &[&str], verified: usize) -> ClusterRecord {
    ClusterRecord {
        seed_image: format!("seed_{rank}"),
        roles: [0, 1, 2, 3].map(|i| RolePatch { y: i, x: i, size: 8 }),
        matches: images
            .iter()
            .enumerate()
            .map(|(i, im)| Match {
                image_id: im.to_string(),
                centers: [[0.0; 2]; 4],
                score: 1.0,
                verified: i < verified,
                normalized_error: if i < verified { 0.0 } else { 5.0 },
            })
            .collect(),
        verify_count: verified.min(images.len()),
        rank,
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn disjoint_clusters_selected_in_rank_order() {
    let (a, b) = (names("a", 10), names("b", 10));
    let recs = vec![record(1, &refs(&b), 10), record(0, &refs(&a), 10)];
    let sel = select_clusters(&recs, 5);
    assert_eq!(sel.iter().map(|s| s.rank).collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(sel[0].images, a);
}

#[test]
fn duplicate_cluster_waits_for_second_pass() {
    let (a, b) = (names("a", 10), names("b", 10));
    let recs = vec![record(0, &refs(&a), 10), record(1, &refs(&a), 10), record(2, &refs(&b), 10)];
    let sel = select_clusters(&recs, 3);
    assert_eq!(sel.iter().map(|s| s.rank).collect::<Vec<_>>(), vec![0, 2, 1]);
    assert_eq!(select_clusters(&recs, 2).iter().map(|s| s.rank).collect::<Vec<_>>(), vec![0, 2]);
}

#[test]
fn clusters_short_of_ten_verified_are_skipped() {
    let a = names("a", 12);
    let recs = vec![record(0, &refs(&a), 9), record(1, &refs(&a), 12)];
    let sel = select_clusters(&recs, 10);
    assert_eq!(sel.len(), 1);
    assert_eq!(sel[0].rank, 1);
    assert_eq!(sel[0].images, a[..10].to_vec());
    assert!(cluster_set(&recs[0]).is_none());
}

#[test]
fn selection_ignores_scores_and_errors() {
    let (a, b) = (names("a", 10), names("b", 11));
    let recs = vec![record(0, &refs(&a), 10), record(1, &refs(&b), 11)];
    let mut other = recs.clone();
    for r in &mut other {
        for m in &mut r.matches {
            m.score = -3.0;
            m.centers = [[7.0; 2]; 4];
            if m.verified {
                m.normalized_error = 0.5;
            }
        }
    }
    assert_eq!(select_clusters(&recs, 4), select_clusters(&other, 4));
}
