//! Shared generators and brute-force oracles for integration tests.
#![allow(dead_code)]

use discoconf::labels::{ContextKind, RelationLabel};
use discoconf::ordinal::OrdinalData;
use discoconf::{AnnotationRecord, Dataset};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn logistic_draw(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.random_range(1e-12..1.0 - 1e-12);
    (u / (1.0 - u)).ln()
}

/// Proportional-odds responses with a binary covariate `x` and one random
/// intercept per group `g`.
pub fn grouped_ordinal(
    seed: u64,
    groups: usize,
    per_group: usize,
    sigma: f64,
    beta: f64,
    thresholds: &[f64],
) -> OrdinalData {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut g = Vec::new();
    for j in 0..groups {
        let u = sigma * normal.sample(&mut r);
        for _ in 0..per_group {
            let xi = if r.random::<bool>() { 1.0 } else { 0.0 };
            let latent = beta * xi + u + logistic_draw(&mut r);
            y.push(1 + thresholds.iter().filter(|&&t| t < latent).count());
            x.push(xi);
            g.push(format!("g{j:03}"));
        }
    }
    OrdinalData::new("y", thresholds.len() + 1, y)
        .unwrap()
        .with_column("x", x)
        .unwrap()
        .with_group("g", &g)
        .unwrap()
}

/// Ordinal responses with a real effect on `x` and a pure-noise column `noise`.
pub fn noise_predictor(seed: u64, n: usize, beta: f64, thresholds: &[f64]) -> OrdinalData {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut z = Vec::new();
    for _ in 0..n {
        let xi: f64 = normal.sample(&mut r);
        let zi: f64 = normal.sample(&mut r);
        let latent = beta * xi + logistic_draw(&mut r);
        y.push(1 + thresholds.iter().filter(|&&t| t < latent).count());
        x.push(xi);
        z.push(zi);
    }
    OrdinalData::new("y", thresholds.len() + 1, y)
        .unwrap()
        .with_column("x", x)
        .unwrap()
        .with_column("noise", z)
        .unwrap()
}

/// Small random corpus with `n` records.
pub fn random_dataset(r: &mut ChaCha8Rng, n: usize) -> Dataset {
    let records = (0..n)
        .map(|i| {
            let mut labels: Vec<RelationLabel> = Vec::new();
            let want = r.random_range(1..=4);
            while labels.len() < want {
                let l = RelationLabel::ALL[r.random_range(0..12)];
                if !labels.contains(&l) {
                    labels.push(l);
                }
            }
            AnnotationRecord {
                record_id: format!("r{i}"),
                annotator_id: format!("a{}", r.random_range(0..5)),
                team_id: "t0".into(),
                conversation_id: format!("c{}", r.random_range(0..3)),
                du_pair_id: format!("p{}", r.random_range(0..20)),
                context: ContextKind::ALL[r.random_range(0..3)],
                labels,
                confidence: r.random_range(1..=5),
            }
        })
        .collect();
    Dataset::new(records).unwrap()
}

/// Brute-force annotation rows `c · (r | d)` in integers.
pub fn annotation_rows(ds: &Dataset, weighted: bool, context: bool) -> Vec<Vec<i64>> {
    ds.records()
        .iter()
        .map(|rec| {
            let c = if weighted { rec.confidence as i64 } else { 1 };
            let mut row = vec![0i64; if context { 15 } else { 12 }];
            for l in &rec.labels {
                row[l.index()] = c;
            }
            if context {
                row[12 + rec.context.index()] = c;
            }
            row
        })
        .collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Agglomerative clustering recomputing every cluster distance from the
/// raw points at each step. Returns (members_left, members_right, height)
/// with members as sorted leaf lists.
pub fn naive_average_linkage(pts: &DMatrix<f64>) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let n = pts.nrows();
    let d = |i: usize, j: usize| ((pts[(i, 0)] - pts[(j, 0)]).powi(2) + (pts[(i, 1)] - pts[(j, 1)]).powi(2)).sqrt();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += d(i, j);
                    }
                }
                let v = s / (clusters[a].len() * clusters[b].len()) as f64;
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        let (h, a, b) = best;
        let right = clusters.remove(b);
        let left = clusters.remove(a);
        let mut merged = left.clone();
        merged.extend(&right);
        merged.sort();
        out.push((left, right, h));
        clusters.push(merged);
    }
    out
}

/// `g` well-separated Gaussian blobs of `per` points in the plane.
pub fn blobs(seed: u64, g: usize, per: usize, spread: f64) -> (DMatrix<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, spread).unwrap();
    let mut pts = DMatrix::zeros(g * per, 2);
    let mut truth = Vec::new();
    for c in 0..g {
        let angle = std::f64::consts::TAU * c as f64 / g as f64;
        let (cx, cy) = (20.0 * angle.cos(), 20.0 * angle.sin());
        for k in 0..per {
            let i = c * per + k;
            pts[(i, 0)] = cx + normal.sample(&mut r);
            pts[(i, 1)] = cy + normal.sample(&mut r);
            truth.push(c);
        }
    }
    (pts, truth)
}

/// Kolmogorov–Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Upper chi-square tail by Simpson integration of the density.
pub fn chisq_tail_simpson(x: f64, df: usize) -> f64 {
    let k = df as f64 / 2.0;
    let ln_norm = -(k * 2f64.ln()) - ln_gamma_half_integer(df);
    // integrate on the substituted grid t = s^2 to tame the cusp at 0:
    // density(s^2) * 2s = 2 exp(ln_norm + (df - 1) ln s - s^2 / 2)
    let n = 200_000;
    let h = x.sqrt() / n as f64;
    let g = |s: f64| {
        if s == 0.0 {
            if df == 1 {
                2.0 * ln_norm.exp()
            } else {
                0.0
            }
        } else {
            2.0 * (ln_norm + (df as f64 - 1.0) * s.ln() - s * s / 2.0).exp()
        }
    };
    let mut acc = g(0.0) + g(x.sqrt());
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(i as f64 * h);
    }
    1.0 - acc * h / 3.0
}

/// ln Γ(df / 2) by the recurrence from Γ(1) or Γ(1/2).
fn ln_gamma_half_integer(df: usize) -> f64 {
    let (mut v, mut z) = if df.is_multiple_of(2) {
        (0.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt().ln(), 0.5)
    };
    while z < df as f64 / 2.0 - 1e-9 {
        v += z.ln();
        z += 1.0;
    }
    v
}
