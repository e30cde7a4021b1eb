mod common;

use discoconf::manifold::{
    effective_neighbors, fit_curve, fuzzy_graph, project, smooth_knn_scale, trustworthiness, Init, ManifoldError, UmapConfig,
};
use discoconf::pipeline::{analyze, AnalysisConfig};
use discoconf::simulate::{generate, SimConfig};
use discoconf::LabeledPoints;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn named(points: DMatrix<f64>) -> LabeledPoints {
    LabeledPoints {
        names: (0..points.nrows()).map(|i| format!("p{i}")).collect(),
        points,
    }
}

fn random_points(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut r = common::rng(seed);
    DMatrix::from_fn(n, d, |_, _| r.random_range(-5.0..5.0))
}

/// Straight-line fuzzy graph: exact neighbours, sigma by log-space bisection.
fn oracle_graph(points: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = points.nrows();
    let dist = |i: usize, j: usize| (points.row(i) - points.row(j)).norm();
    let target = (k as f64).log2();
    let mut directed = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nn = &others[..k];
        let rho = nn[0].0;
        let mean = nn.iter().map(|x| x.0).sum::<f64>() / k as f64;
        let mass = |s: f64| nn.iter().map(|x| (-(x.0 - rho) / s).exp()).sum::<f64>();
        let (mut lo, mut hi) = ((1e-3 * mean).ln(), (1e3 * mean).ln());
        let sigma = if mass(lo.exp()) >= target {
            lo.exp()
        } else if mass(hi.exp()) <= target {
            hi.exp()
        } else {
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if mass(mid.exp()) > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            (0.5 * (lo + hi)).exp()
        };
        for &(d, j) in nn {
            directed[(i, j)] = (-(d - rho) / sigma).exp();
        }
    }
    DMatrix::from_fn(n, n, |i, j| {
        let (p, q) = (directed[(i, j)], directed[(j, i)]);
        1.0 - (1.0 - p) * (1.0 - q)
    })
}

fn blob_stats(coords: &DMatrix<f64>, truth: &[usize]) -> (f64, f64) {
    let centroid = |g: usize| {
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == g).collect();
        let c = idx.iter().fold((0.0, 0.0), |acc, &i| (acc.0 + coords[(i, 0)], acc.1 + coords[(i, 1)]));
        let c = (c.0 / idx.len() as f64, c.1 / idx.len() as f64);
        let spread = idx
            .iter()
            .map(|&i| ((coords[(i, 0)] - c.0).powi(2) + (coords[(i, 1)] - c.1).powi(2)).sqrt())
            .fold(0.0, f64::max);
        (c, spread)
    };
    let ((c0, s0), (c1, s1)) = (centroid(0), centroid(1));
    (((c0.0 - c1.0).powi(2) + (c0.1 - c1.1).powi(2)).sqrt(), s0.max(s1))
}

#[test]
fn smooth_knn_examples() {
    let (rho, sigma) = smooth_knn_scale(&[1.0, 2.0, 3.0], 3f64.log2()).unwrap();
    assert_eq!(rho, 1.0);
    // x + x^2 = log2(3) - 1 with x = exp(-1/sigma)
    let x = (-1.0 + (1.0 + 4.0 * (3f64.log2() - 1.0)).sqrt()) / 2.0;
    let exact = -1.0 / x.ln();
    assert!((sigma - exact).abs() < 1e-5);
    assert!((sigma - 1.1334).abs() < 1e-3);

    let (rho, sigma) = smooth_knn_scale(&[2.0, 2.0, 2.0], 3f64.log2()).unwrap();
    assert_eq!(rho, 2.0);
    assert!((sigma - 2e-3).abs() < 1e-12, "{sigma}");

    let (rho, sigma) = smooth_knn_scale(&[0.0, 5.0], 1.0).unwrap();
    assert_eq!(rho, 0.0);
    assert!((sigma - 2.5e-3).abs() < 1e-12, "{sigma}");

    assert_eq!(smooth_knn_scale(&[1.0], 1.0), Err(ManifoldError::TooFewNeighbours(1)));
}

#[test]
fn curve_fit_examples() {
    let (a, b) = fit_curve(0.1, 1.0).unwrap();
    assert!((a - 1.577).abs() < 0.01 && (b - 0.895).abs() < 0.01, "{a} {b}");
    let (a, b) = fit_curve(0.0, 1.0).unwrap();
    assert!(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0);
    for (md, sp) in [(0.1, 1.0), (0.0, 1.0), (0.5, 2.0)] {
        let (a, b) = fit_curve(md, sp).unwrap();
        let phi = |x: f64| 1.0 / (1.0 + a * x.powf(2.0 * b));
        assert_eq!(phi(0.0), 1.0);
        let xs: Vec<f64> = (0..=300).map(|i| 3.0 * i as f64 / 300.0).collect();
        assert!(xs.windows(2).all(|w| phi(w[1]) <= phi(w[0])));
    }
    assert!(matches!(fit_curve(0.1, 0.0), Err(ManifoldError::BadSpread(_))));
    assert!(matches!(fit_curve(-0.1, 1.0), Err(ManifoldError::BadMinDist(_))));
}

#[test]
fn curve_fit_is_least_squares_optimum() {
    // no nearby (a, b) on a fine grid does better
    let (a, b) = fit_curve(0.1, 1.0).unwrap();
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * i as f64 / 299.0).collect();
    let target = |x: f64| if x <= 0.1 { 1.0 } else { (-(x - 0.1)).exp() };
    let sse = |a: f64, b: f64| {
        xs.iter()
            .map(|&x| (1.0 / (1.0 + a * x.powf(2.0 * b)) - target(x)).powi(2))
            .sum::<f64>()
    };
    let best = sse(a, b);
    for da in -5..=5 {
        for db in -5..=5 {
            assert!(sse(a + da as f64 * 1e-3, b + db as f64 * 1e-3) >= best - 1e-12);
        }
    }
}

#[test]
fn graph_matches_oracle_on_embedding_rows() {
    let sim = generate(&SimConfig::two_regime(4)).unwrap();
    let a = analyze(&sim.dataset, &AnalysisConfig::default()).unwrap();
    let rows = discoconf::relation_rows(&a.embeddings);
    let g = fuzzy_graph(&rows.points, &UmapConfig::default()).unwrap();
    let o = oracle_graph(&rows.points, 5);
    assert!((&g - &o).amax() <= 1e-6, "{}", (&g - &o).amax());
}

#[test]
fn graph_rejects_bad_input() {
    let cfg = UmapConfig::default();
    assert!(matches!(
        fuzzy_graph(&random_points(0, 2, 3), &cfg),
        Err(ManifoldError::TooFewPoints { needed: 3, got: 2 })
    ));
    let mut p = random_points(0, 5, 3);
    p[(1, 1)] = f64::INFINITY;
    assert_eq!(fuzzy_graph(&p, &cfg), Err(ManifoldError::NonFinite));
    assert!(matches!(project(&named(p), &cfg), Err(ManifoldError::NonFinite)));
    let bad_k = UmapConfig { n_neighbors: 1, ..cfg };
    assert!(matches!(fuzzy_graph(&random_points(0, 5, 3), &bad_k), Err(ManifoldError::BadNeighbours(1))));
}

#[test]
fn neighbour_count_clamped_with_warning() {
    let cfg = UmapConfig::default();
    assert_eq!(effective_neighbors(&cfg, 4), 3);
    assert_eq!(effective_neighbors(&cfg, 12), 5);
    let p = project(&named(random_points(1, 4, 3)), &UmapConfig { seed: 1, ..cfg }).unwrap();
    assert_eq!(p.effective_neighbors, 3);
    assert!(!p.warnings.is_empty());
}

#[test]
fn projection_is_deterministic() {
    let input = named(random_points(2, 12, 6));
    for init in [Init::Spectral, Init::Random] {
        let cfg = UmapConfig { seed: 42, init, ..UmapConfig::default() };
        let a = project(&input, &cfg).unwrap();
        let b = project(&input, &cfg).unwrap();
        assert_eq!(a.coords.as_slice(), b.coords.as_slice());
        assert!(a.coords.iter().all(|x| x.is_finite()));
        assert_eq!(a.names, input.names);
        assert_eq!(a.to_json(), b.to_json());
    }
}

#[test]
fn seeds_change_layout_not_quality() {
    let (pts, _) = common::blobs(3, 2, 10, 1.0);
    let input = named(pts.clone());
    let a = project(&input, &UmapConfig { seed: 1, ..UmapConfig::default() }).unwrap();
    let b = project(&input, &UmapConfig { seed: 2, ..UmapConfig::default() }).unwrap();
    assert_ne!(a.coords, b.coords);
    let (ta, tb) = (trustworthiness(&pts, &a.coords, 3), trustworthiness(&pts, &b.coords, 3));
    assert!((ta - tb).abs() <= 0.1, "{ta} {tb}");
}

#[test]
fn two_blobs_separate() {
    let mut passes = 0;
    for seed in 0..10 {
        let (pts, truth) = common::blobs(seed, 2, 10, 1.0);
        let p = project(&named(pts.clone()), &UmapConfig { seed, ..UmapConfig::default() }).unwrap();
        let (between, spread) = blob_stats(&p.coords, &truth);
        passes += usize::from(between > 3.0 * spread);
        assert!(trustworthiness(&pts, &p.coords, 3) >= 0.8);
    }
    assert!(passes >= 9, "{passes}/10");
}

#[test]
fn trustworthiness_matches_definition() {
    for seed in 0..10 {
        let high = random_points(seed, 15, 4);
        let low = random_points(seed + 100, 15, 2);
        let n = 15;
        let k = 3;
        let dist = |m: &DMatrix<f64>, i: usize, j: usize| (m.row(i) - m.row(j)).norm();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let low_rank = (0..n).filter(|&l| l != i && dist(&low, i, l) < dist(&low, i, j)).count() + 1;
                let high_rank = (0..n).filter(|&l| l != i && dist(&high, i, l) < dist(&high, i, j)).count() + 1;
                if low_rank <= k && high_rank > k {
                    sum += (high_rank - k) as f64;
                }
            }
        }
        let expect = 1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) as f64 * sum;
        assert!((trustworthiness(&high, &low, k) - expect).abs() < 1e-12);
    }
    let pts = random_points(0, 10, 2);
    assert_eq!(trustworthiness(&pts, &pts, 3), 1.0);
}

#[test]
fn exports_are_well_formed() {
    let p = project(&named(random_points(5, 6, 3)), &UmapConfig { seed: 5, ..UmapConfig::default() }).unwrap();
    let csv = p.to_csv();
    assert!(csv.starts_with("name,x,y\n"));
    assert_eq!(csv.lines().count(), 7);
    let svg = p.to_svg("layout", None);
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("p5"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_properties(seed in any::<u64>(), n in 3usize..25, d in 1usize..6) {
        let pts = random_points(seed, n, d);
        let g = fuzzy_graph(&pts, &UmapConfig::default()).unwrap();
        prop_assert!((&g - g.transpose()).amax() == 0.0);
        for i in 0..n {
            prop_assert_eq!(g[(i, i)], 0.0);
            prop_assert!(g.row(i).iter().all(|&w| (0.0..=1.0).contains(&w)));
            prop_assert!(g.row(i).iter().any(|&w| w == 1.0));
        }
        let k = effective_neighbors(&UmapConfig::default(), n);
        prop_assert!((&g - oracle_graph(&pts, k)).amax() <= 1e-6);
    }

    #[test]
    fn graph_translation_invariant(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let pts = random_points(seed, 10, 3);
        let moved = pts.map(|x| x + shift);
        let g1 = fuzzy_graph(&pts, &UmapConfig::default()).unwrap();
        let g2 = fuzzy_graph(&moved, &UmapConfig::default()).unwrap();
        prop_assert!((g1 - g2).amax() <= 1e-9);
    }
}
