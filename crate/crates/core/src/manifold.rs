//! Deterministic UMAP-style projection for small point sets.
//!
//! Exact k-nearest neighbours, a fuzzy neighbour graph with per-point
//! bandwidths, a fitted low-dimensional similarity curve, and a
//! single-threaded stochastic layout driven by a seeded ChaCha stream. The
//! same input, config and seed always produce bit-identical coordinates.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccur::{rows_of, LabeledPoints};
use crate::linalg::symmetric_eigen;
use crate::svg;

#[derive(Debug, Error, PartialEq)]
pub enum ManifoldError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("need at least 2 neighbour distances, got {0}")]
    TooFewNeighbours(usize),
    #[error("input contains non-finite coordinates")]
    NonFinite,
    #[error("spread must be positive, got {0}")]
    BadSpread(f64),
    #[error("min_dist must lie in [0, 10*spread), got {0}")]
    BadMinDist(f64),
    #[error("n_neighbors must be at least 2, got {0}")]
    BadNeighbours(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Spectral,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub seed: u64,
    pub negative_samples: usize,
    pub init: Init,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 5,
            min_dist: 0.1,
            spread: 1.0,
            epochs: 500,
            seed: 0,
            negative_samples: 5,
            init: Init::Spectral,
        }
    }
}

const SIGMA_TOL: f64 = 1e-8;

/// Solves for the bandwidth `sigma` such that
/// `Σ_j exp(-max(0, d_j - rho) / sigma) = target` with `rho = dists[0]`.
///
/// `dists` must be sorted ascending. When no root lies inside
/// `[1e-3 * mean, 1e3 * mean]` the nearest bound is returned.
pub fn smooth_knn_scale(dists: &[f64], target: f64) -> Result<(f64, f64), ManifoldError> {
    if dists.len() < 2 {
        return Err(ManifoldError::TooFewNeighbours(dists.len()));
    }
    let rho = dists[0];
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    if mean <= 0.0 {
        // every neighbour coincides: all memberships are 1 for any sigma
        return Ok((rho, 1.0));
    }
    let mass = |sigma: f64| -> f64 {
        dists
            .iter()
            .map(|&d| (-(d - rho).max(0.0) / sigma).exp())
            .sum::<f64>()
    };
    let mut lo = 1e-3 * mean;
    let mut hi = 1e3 * mean;
    if mass(lo) >= target {
        return Ok((rho, lo));
    }
    if mass(hi) <= target {
        return Ok((rho, hi));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = mass(mid) - target;
        if f.abs() < SIGMA_TOL || hi - lo < SIGMA_TOL {
            return Ok((rho, mid));
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((rho, 0.5 * (lo + hi)))
}

fn check_points(points: &DMatrix<f64>) -> Result<(), ManifoldError> {
    if points.nrows() < 3 {
        return Err(ManifoldError::TooFewPoints {
            needed: 3,
            got: points.nrows(),
        });
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(ManifoldError::NonFinite);
    }
    Ok(())
}

fn pairwise_distances(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows();
    DMatrix::from_fn(n, n, |i, j| (points.row(i) - points.row(j)).norm())
}

/// Neighbour count actually used for `n` points.
pub fn effective_neighbors(cfg: &UmapConfig, n: usize) -> usize {
    cfg.n_neighbors.min(n.saturating_sub(1))
}

/// Symmetric fuzzy membership matrix of the k-nearest-neighbour graph.
pub fn fuzzy_graph(points: &DMatrix<f64>, cfg: &UmapConfig) -> Result<DMatrix<f64>, ManifoldError> {
    check_points(points)?;
    if cfg.n_neighbors < 2 {
        return Err(ManifoldError::BadNeighbours(cfg.n_neighbors));
    }
    let n = points.nrows();
    let k = effective_neighbors(cfg, n);
    let dist = pairwise_distances(points);
    let target = (k as f64).log2();

    let mut directed = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut nbrs: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        nbrs.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
        nbrs.truncate(k);
        let d: Vec<f64> = nbrs.iter().map(|&j| dist[(i, j)]).collect();
        let (rho, sigma) = smooth_knn_scale(&d, target)?;
        for (&j, &dj) in nbrs.iter().zip(&d) {
            directed[(i, j)] = (-(dj - rho).max(0.0) / sigma).exp();
        }
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (p, q) = (directed[(i, j)], directed[(j, i)]);
                w[(i, j)] = 1.0 - (1.0 - p) * (1.0 - q);
            }
        }
    }
    Ok(w)
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the piecewise target curve
/// (1 below `min_dist`, exponential decay with scale `spread` above), sampled
/// at 300 points on `[0, 3 * spread]`. Levenberg–Marquardt from `(1, 1)`.
pub fn fit_curve(min_dist: f64, spread: f64) -> Result<(f64, f64), ManifoldError> {
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(ManifoldError::BadSpread(spread));
    }
    if !(0.0..spread * 10.0).contains(&min_dist) {
        return Err(ManifoldError::BadMinDist(min_dist));
    }
    let (xs, ys) = curve_samples(min_dist, spread);

    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    let (mut a, mut b) = (1.0_f64, 1.0_f64);
    let mut cost = sse(a, b);
    let mut lambda = 1e-3;
    for _ in 0..1000 {
        // normal equations
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                // phi(0) = 1 regardless of (a, b)
                continue;
            }
            let t = x.powf(2.0 * b);
            let phi = 1.0 / (1.0 + a * t);
            let r = phi - y;
            let da = -t * phi * phi;
            let db = -a * t * 2.0 * x.ln() * phi * phi;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut accepted = false;
        for _ in 0..50 {
            let m00 = jaa * (1.0 + lambda);
            let m11 = jbb * (1.0 + lambda);
            let det = m00 * m11 - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m11 * ga - jab * gb) / det;
            let step_b = -(m00 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let nc = sse(na, nb);
                if nc < cost {
                    let improvement = cost - nc;
                    a = na;
                    b = nb;
                    cost = nc;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    if improvement <= 1e-15 * cost.max(1e-300) {
                        return Ok((a, b));
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok((a, b))
}

pub(crate) fn curve_samples(min_dist: f64, spread: f64) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..300)
        .map(|i| 3.0 * spread * i as f64 / 299.0)
        .collect();
    let ys = xs
        .iter()
        .map(|&x| {
            if x <= min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    (xs, ys)
}

/// 2-D layout of a labelled point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub names: Vec<String>,
    /// n x 2.
    #[serde(with = "matrix_rows")]
    pub coords: DMatrix<f64>,
    pub config: UmapConfig,
    pub effective_neighbors: usize,
    pub curve: (f64, f64),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::rows_of(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]))
    }
}

pub fn project(input: &LabeledPoints, cfg: &UmapConfig) -> Result<Projection, ManifoldError> {
    let points = &input.points;
    check_points(points)?;
    let n = points.nrows();
    let k = effective_neighbors(cfg, n);
    let mut warnings = Vec::new();
    if k < cfg.n_neighbors {
        warnings.push(format!(
            "n_neighbors {} clamped to {} for {} points",
            cfg.n_neighbors, k, n
        ));
    }
    let graph = fuzzy_graph(points, cfg)?;
    let (a, b) = fit_curve(cfg.min_dist, cfg.spread)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut emb = match cfg.init {
        Init::Spectral => spectral_init(&graph).unwrap_or_else(|| {
            warnings.push("spectral init unavailable (isolated vertex); using random init".into());
            random_init(n, &mut rng)
        }),
        Init::Random => random_init(n, &mut rng),
    };
    if cfg.init == Init::Spectral {
        let noise = Normal::new(0.0, 1e-4).expect("valid normal");
        for x in emb.iter_mut() {
            *x += noise.sample(&mut rng);
        }
    }
    rescale_to_box(&mut emb);

    optimize_layout(&mut emb, &graph, a, b, cfg, &mut rng);

    Ok(Projection {
        names: input.names.clone(),
        coords: emb,
        config: *cfg,
        effective_neighbors: k,
        curve: (a, b),
        warnings,
    })
}

fn random_init(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, 2);
    for i in 0..n {
        for j in 0..2 {
            m[(i, j)] = rng.random_range(-10.0..10.0);
        }
    }
    m
}

/// Eigenvectors 2 and 3 of the symmetric normalized graph Laplacian.
fn spectral_init(graph: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = graph.nrows();
    let deg: Vec<f64> = (0..n).map(|i| graph.row(i).sum()).collect();
    if deg.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let off = graph[(i, j)] / (deg[i] * deg[j]).sqrt();
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    let eig = symmetric_eigen(&lap);
    let mut out = DMatrix::zeros(n, 2);
    for (c, idx) in [n - 2, n - 3].into_iter().enumerate() {
        let col = eig.vectors.column(idx);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[(i, c)] = sign * col[i];
        }
    }
    let maxabs = out.amax();
    if maxabs > 0.0 {
        out *= 10.0 / maxabs;
    }
    Some(out)
}

/// Min-max rescale of each axis onto [0, 10].
fn rescale_to_box(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let lo = col.min();
        let hi = col.max();
        if hi > lo {
            for x in col.iter_mut() {
                *x = 10.0 * (*x - lo) / (hi - lo);
            }
        }
    }
}

fn clip(x: f64) -> f64 {
    x.clamp(-4.0, 4.0)
}

fn optimize_layout(
    emb: &mut DMatrix<f64>,
    graph: &DMatrix<f64>,
    a: f64,
    b: f64,
    cfg: &UmapConfig,
    rng: &mut ChaCha8Rng,
) {
    let n = emb.nrows();
    let epochs = cfg.epochs;
    if epochs == 0 {
        return;
    }
    let max_w = graph.max();
    if max_w <= 0.0 {
        return;
    }
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = graph[(i, j)];
            if w > 0.0 && w >= max_w / epochs as f64 {
                edges.push((i, j, max_w / w));
            }
        }
    }
    let neg_rate = cfg.negative_samples as f64;
    let per_neg: Vec<f64> = edges.iter().map(|e| e.2 / neg_rate.max(1e-12)).collect();
    let mut next_sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let mut next_neg: Vec<f64> = per_neg.clone();

    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        let now = epoch as f64;
        for (e, &(i, j, per_sample)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let dx = emb[(i, 0)] - emb[(j, 0)];
            let dy = emb[(i, 1)] - emb[(j, 1)];
            let d2 = dx * dx + dy * dy;
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for (dim, delta) in [dx, dy].into_iter().enumerate() {
                let g = clip(coeff * delta) * alpha;
                emb[(i, dim)] += g;
                emb[(j, dim)] -= g;
            }
            next_sample[e] += per_sample;

            if cfg.negative_samples == 0 {
                continue;
            }
            let n_neg = ((now - next_neg[e]) / per_neg[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                let dx = emb[(i, 0)] - emb[(other, 0)];
                let dy = emb[(i, 1)] - emb[(other, 1)];
                let d2 = dx * dx + dy * dy;
                let coeff = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else if other == i {
                    continue;
                } else {
                    0.0
                };
                for (dim, delta) in [dx, dy].into_iter().enumerate() {
                    let g = if coeff > 0.0 { clip(coeff * delta) } else { 4.0 };
                    emb[(i, dim)] += g * alpha;
                }
            }
            next_neg[e] += n_neg as f64 * per_neg[e];
        }
    }
}

/// Trustworthiness of a low-dimensional layout with respect to the original
/// space: penalizes low-dimensional neighbours that are far in the original
/// ranking. 1 means every k-neighbourhood is preserved.
pub fn trustworthiness(high: &DMatrix<f64>, low: &DMatrix<f64>, k: usize) -> f64 {
    let n = high.nrows();
    assert_eq!(n, low.nrows());
    assert!(k >= 1 && 2 * n > 3 * k + 1, "k too large for n");
    let dh = pairwise_distances(high);
    let dl = pairwise_distances(low);
    let ranked = |d: &DMatrix<f64>, i: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        v.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)));
        v
    };
    let mut penalty = 0.0;
    for i in 0..n {
        let high_order = ranked(&dh, i);
        let mut rank = vec![0usize; n];
        for (r, &j) in high_order.iter().enumerate() {
            rank[j] = r + 1;
        }
        for &j in ranked(&dl, i).iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty
}

impl Projection {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,x,y\n");
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", name, self.coords[(i, 0)], self.coords[(i, 1)]));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Labelled scatter plot. `groups` optionally colours each point.
    pub fn to_svg(&self, title: &str, groups: Option<&[usize]>) -> String {
        let pts: Vec<(f64, f64)> = (0..self.names.len())
            .map(|i| (self.coords[(i, 0)], self.coords[(i, 1)]))
            .collect();
        svg::scatter(title, &self.names, &pts, groups)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_knn_reference_case() {
        let (rho, sigma) = smooth_knn_scale(&[1.0, 2.0, 3.0], 3f64.log2()).unwrap();
        assert_eq!(rho, 1.0);
        assert!((sigma - 1.1334).abs() < 1e-3, "sigma = {sigma}");
    }

    #[test]
    fn smooth_knn_degenerate_cases() {
        let (rho, sigma) = smooth_knn_scale(&[2.0, 2.0, 2.0], 3f64.log2()).unwrap();
        assert_eq!(rho, 2.0);
        assert!((sigma - 2e-3).abs() < 1e-15);

        let (rho, sigma) = smooth_knn_scale(&[0.0, 5.0], 1.0).unwrap();
        assert_eq!(rho, 0.0);
        assert!((sigma - 2.5e-3).abs() < 1e-15);

        assert_eq!(
            smooth_knn_scale(&[1.0], 1.0),
            Err(ManifoldError::TooFewNeighbours(1))
        );
    }

    #[test]
    fn curve_fit_default_params() {
        let (a, b) = fit_curve(0.1, 1.0).unwrap();
        assert!((a - 1.577).abs() < 0.01, "a = {a}");
        assert!((b - 0.895).abs() < 0.01, "b = {b}");
    }

    #[test]
    fn curve_fit_boundaries() {
        let (a, b) = fit_curve(0.0, 1.0).unwrap();
        assert!(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0);
        let phi = |x: f64| 1.0 / (1.0 + a * x.powf(2.0 * b));
        assert_eq!(phi(0.0), 1.0);
        let mut prev = phi(0.0);
        for i in 1..=300 {
            let v = phi(3.0 * i as f64 / 300.0);
            assert!(v < prev);
            prev = v;
        }
        assert_eq!(fit_curve(0.1, 0.0), Err(ManifoldError::BadSpread(0.0)));
        assert_eq!(fit_curve(-0.1, 1.0), Err(ManifoldError::BadMinDist(-0.1)));
        assert_eq!(fit_curve(10.0, 1.0), Err(ManifoldError::BadMinDist(10.0)));
    }

    #[test]
    fn symmetrization_is_probabilistic_union() {
        // three collinear points at 0, 1, 3 with k = 2: every directed weight
        // is either 1 (nearest) or exp(-(d - rho)/sigma)
        let pts = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        let cfg = UmapConfig {
            n_neighbors: 2,
            ..UmapConfig::default()
        };
        let g = fuzzy_graph(&pts, &cfg).unwrap();
        for i in 0..3 {
            assert_eq!(g[(i, i)], 0.0);
            assert!((0..3).any(|j| g[(i, j)] == 1.0));
            for j in 0..3 {
                assert_eq!(g[(i, j)], g[(j, i)]);
                assert!((0.0..=1.0).contains(&g[(i, j)]));
            }
        }
        let (p, q): (f64, f64) = (0.4, 0.5);
        assert!((1.0 - (1.0 - p) * (1.0 - q) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let two = LabeledPoints {
            names: vec!["a".into(), "b".into()],
            points: DMatrix::zeros(2, 2),
        };
        assert!(matches!(
            project(&two, &UmapConfig::default()),
            Err(ManifoldError::TooFewPoints { .. })
        ));
        let mut pts = DMatrix::zeros(4, 2);
        pts[(1, 1)] = f64::INFINITY;
        assert_eq!(
            fuzzy_graph(&pts, &UmapConfig::default()),
            Err(ManifoldError::NonFinite)
        );
    }

    #[test]
    fn trustworthiness_identity_is_one() {
        let pts = DMatrix::from_fn(10, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        assert!((trustworthiness(&pts, &pts, 3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neighbour_count_is_clamped() {
        let pts = LabeledPoints {
            names: (0..4).map(|i| i.to_string()).collect(),
            points: DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0]),
        };
        let p = project(
            &pts,
            &UmapConfig {
                n_neighbors: 15,
                epochs: 50,
                ..UmapConfig::default()
            },
        )
        .unwrap();
        assert_eq!(p.effective_neighbors, 3);
        assert_eq!(p.warnings.len(), 1);
        assert!(p.coords.iter().all(|x| x.is_finite()));
    }
}
