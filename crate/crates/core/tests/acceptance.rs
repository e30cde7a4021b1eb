//! Acceptance gate. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use discoconf::cluster::{agglomerate, select_k, silhouette, Linkage};
use discoconf::linalg::symmetric_eigen;
use discoconf::manifold::{fit_curve, project, smooth_knn_scale, trustworthiness, UmapConfig};
use discoconf::ordinal::{
    chisq_sf, clm_fit, clm_gradient, clm_loglik, clmm_fit, lrt, FitMethod, OrdinalData, OrdinalSpec, RandomTerm,
};
use discoconf::pipeline::{analyze, AnalysisConfig};
use discoconf::simulate::{generate, SimConfig, CROSS_GROUP, WITHIN_GROUP};
use discoconf::stats::label_frequencies;
use discoconf::{assemble, factorize, parse_dataset, AssemblyConfig, Format, LabeledPoints, RelationLabel};
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const THETA: [f64; 4] = [-2.0, -0.7, 0.5, 1.8];

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(t: Instant, limit: Duration) -> Result<(), String> {
    let took = t.elapsed();
    check(took < limit, format!("took {took:?}, limit {limit:?}"))
}

fn named(points: DMatrix<f64>) -> LabeledPoints {
    LabeledPoints {
        names: (0..points.nrows()).map(|i| format!("p{i}")).collect(),
        points,
    }
}

fn all_configs() -> Vec<AssemblyConfig> {
    [(true, true), (true, false), (false, true), (false, false)]
        .map(|(w, c)| AssemblyConfig {
            weight_by_confidence: w,
            include_context: c,
            pca_dims: 1,
        })
        .to_vec()
}

fn cooccurrence_oracle() -> Outcome {
    let t = Instant::now();
    let mut r = common::rng(2024);
    let mut min_eig = f64::INFINITY;
    for i in 0..500 {
        let n = r.random_range(1..=50);
        let ds = common::random_dataset(&mut r, n);
        let cfg = all_configs()[i % 4];
        let o = assemble(&ds, cfg).o;
        let rows = common::annotation_rows(&ds, cfg.weight_by_confidence, cfg.include_context);
        let m = o.nrows();
        for p in 0..m {
            for q in 0..m {
                let brute: i64 = rows.iter().map(|a| a[p] * a[q]).sum();
                check(o[(p, q)] == brute as f64, format!("dataset {i} cell ({p},{q})"))?;
            }
        }
        check(o == o.transpose(), format!("dataset {i} not symmetric"))?;
        min_eig = min_eig.min(symmetric_eigen(&o).values.min());
    }
    check(min_eig >= -1e-9, format!("min eigenvalue {min_eig}"))?;
    within(t, Duration::from_secs(5))?;
    Ok(format!("500 datasets exact, min eigenvalue {min_eig:.2e}, {:?}", t.elapsed()))
}

fn factorization() -> Outcome {
    let (mut recon, mut eig) = (0.0f64, 0.0f64);
    for seed in 0..30 {
        let ds = common::random_dataset(&mut common::rng(500 + seed), 1 + seed as usize);
        for cfg in all_configs() {
            let co = assemble(&ds, cfg);
            let m = co.o.nrows();
            let e = factorize(&co, m).map_err(|e| e.to_string())?;
            recon = recon.max((&e.vectors * e.vectors.transpose() - &co.o).amax());
            for (a, b) in e.eigenvalues.iter().zip(common::jacobi_eigenvalues(&co.o)) {
                eig = eig.max((a - b.max(0.0)).abs());
            }
        }
    }
    check(recon <= 1e-8, format!("reconstruction error {recon}"))?;
    check(eig <= 1e-8, format!("eigenvalue error {eig}"))?;
    Ok(format!("reconstruction {recon:.1e}, eigenvalues {eig:.1e}"))
}

fn frequency_fixture() -> Outcome {
    use RelationLabel::*;
    let ds = parse_dataset(&common::fixture("reference_counts.jsonl"), Format::Jsonl).map_err(|e| e.to_string())?;
    let f = label_frequencies(&ds);
    let expected = [
        (Elaboration, 636),
        (Continuation, 554),
        (Acknowledgement, 494),
        (Explanation, 383),
        (Comment, 265),
        (Background, 252),
        (Narration, 249),
        (QuestionAnswerPair, 248),
        (Contrast, 191),
        (ClarificationQuestion, 179),
        (Result, 124),
        (Other, 106),
    ];
    for (l, n) in expected {
        check(f.get(l) == n, format!("{l}: {} vs {n}", f.get(l)))?;
    }
    check(f.total() == 3681, format!("total {}", f.total()))?;
    Ok("12 counts exact, total 3681".into())
}

fn intercept_spec(levels: usize) -> OrdinalSpec {
    OrdinalSpec {
        levels,
        fixed: vec![],
        random: vec![],
    }
}

fn ordinal_closed_form() -> Outcome {
    let y: Vec<usize> = (0..1000).map(|i| i % 5 + 1).collect();
    let d = OrdinalData::new("y", 5, y).map_err(|e| e.to_string())?;
    let f = clm_fit(&d, &intercept_spec(5)).map_err(|e| e.to_string())?;
    let expect = [-1.3863, -0.4055, 0.4055, 1.3863];
    let err = f.thresholds.iter().zip(expect).map(|(t, e)| (t - e).abs()).fold(0.0, f64::max);
    check(err < 1e-4, format!("thresholds {:?}", f.thresholds))?;
    Ok(format!("max threshold error {err:.1e}"))
}

fn gradient_check() -> Outcome {
    let d = common::noise_predictor(77, 400, 0.8, &THETA);
    let spec = OrdinalSpec {
        fixed: vec!["x".into(), "noise".into()],
        ..intercept_spec(5)
    };
    let mut r = common::rng(78);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let free = vec![
            r.random_range(-3.0..0.0),
            r.random_range(-1.5..1.0),
            r.random_range(-1.5..1.0),
            r.random_range(-1.5..1.0),
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
        ];
        let g = clm_gradient(&d, &spec, &free).map_err(|e| e.to_string())?;
        for i in 0..free.len() {
            let mut p = free.clone();
            p[i] += h;
            let fp = clm_loglik(&d, &spec, &p).map_err(|e| e.to_string())?;
            p[i] -= 2.0 * h;
            let fm = clm_loglik(&d, &spec, &p).map_err(|e| e.to_string())?;
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / fd.abs().max(1.0));
        }
    }
    check(worst < 1e-5, format!("max relative error {worst}"))?;
    Ok(format!("max relative error {worst:.1e} over 100 points"))
}

fn clmm_recovery() -> Outcome {
    let t = Instant::now();
    let spec = OrdinalSpec {
        fixed: vec!["x".into()],
        random: vec![RandomTerm::intercept("g")],
        ..intercept_spec(5)
    };
    let (mut hits, mut gap) = (0, 0.0f64);
    for seed in 0..10 {
        let d = common::grouped_ordinal(300 + seed, 50, 40, 1.0, 0.63, &THETA);
        let lap = clmm_fit(&d, &spec, FitMethod::Laplace).map_err(|e| e.to_string())?;
        let gh = clmm_fit(&d, &spec, FitMethod::Aghq { nodes: 7 }).map_err(|e| e.to_string())?;
        gap = gap.max((lap.loglik - gh.loglik).abs());
        let sd = lap.varcomp[0].sd[0];
        let se = lap.std_errors[0].ok_or("missing standard error")?;
        if (0.7..=1.3).contains(&sd) && (lap.beta[0] - 0.63).abs() < 3.0 * se {
            hits += 1;
        }
    }
    check(hits >= 9, format!("{hits}/10 seeds recovered"))?;
    check(gap < 0.5, format!("laplace/aghq gap {gap}"))?;
    within(t, Duration::from_secs(60))?;
    Ok(format!("{hits}/10 seeds, loglik gap {gap:.3}, {:?}", t.elapsed()))
}

fn lrt_calibration() -> Outcome {
    let null_spec = OrdinalSpec {
        fixed: vec!["x".into()],
        ..intercept_spec(5)
    };
    let full_spec = OrdinalSpec {
        fixed: vec!["x".into(), "noise".into()],
        ..intercept_spec(5)
    };
    let mut p = Vec::new();
    for seed in 0..200 {
        let d = common::noise_predictor(5000 + seed, 1000, 0.6, &THETA);
        let null = clm_fit(&d, &null_spec).map_err(|e| e.to_string())?;
        let full = clm_fit(&d, &full_spec).map_err(|e| e.to_string())?;
        p.push(lrt(&null, &full).map_err(|e| e.to_string())?.p_value);
    }
    let ks = common::ks_uniform(p);
    check(ks < 0.1, format!("KS statistic {ks}"))?;
    let sf = chisq_sf(3.841, 1).map_err(|e| e.to_string())?;
    check((sf - 0.05).abs() < 1e-3, format!("chisq_sf(3.841, 1) = {sf}"))?;
    Ok(format!("KS {ks:.3}, chisq_sf(3.841, 1) = {sf:.4}"))
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

fn clustering_oracle() -> Outcome {
    for seed in 0..100 {
        let mut r = common::rng(seed);
        let pts = DMatrix::from_fn(12, 2, |_, _| r.random_range(0.0..10.0));
        let tree = agglomerate(&named(pts.clone()), Linkage::Average).map_err(|e| e.to_string())?;
        let mut members: Vec<Vec<usize>> = (0..12).map(|i| vec![i]).collect();
        for (m, (ol, or, oh)) in tree.merges.iter().zip(common::naive_average_linkage(&pts)) {
            let (l, rr) = (members[m.left].clone(), members[m.right].clone());
            let sorted = |mut v: Vec<usize>| {
                v.sort();
                v
            };
            let (l, rr) = (sorted(l), sorted(rr));
            let same = (l == ol && rr == or) || (l == or && rr == ol);
            check(same && (m.height - oh).abs() <= 1e-9 * oh.max(1.0), format!("seed {seed} diverges from oracle"))?;
            members.push(sorted([l, rr].concat()));
        }
    }
    let fixture = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0]);
    let (_, s) = silhouette(&fixture, &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    check((s - 0.9002).abs() < 1e-3, format!("fixture silhouette {s}"))?;
    let mut worst = 20;
    for g in [2usize, 3, 4] {
        let mut hits = 0;
        for seed in 0..20 {
            let (pts, truth) = common::blobs(seed, g, 8, 1.0);
            let tree = agglomerate(&named(pts.clone()), Linkage::Average).map_err(|e| e.to_string())?;
            let sel = select_k(&pts, &tree).map_err(|e| e.to_string())?;
            let planted = discoconf::cluster::cut(&tree, g).map_err(|e| e.to_string())?;
            hits += usize::from(sel.k_best == g && same_partition(&planted, &truth));
        }
        check(hits >= 18, format!("g = {g}: {hits}/20"))?;
        worst = worst.min(hits);
    }
    Ok(format!("100/100 merge lists match, silhouette {s:.4}, select_k >= {worst}/20"))
}

fn manifold() -> Outcome {
    let (pts, _) = common::blobs(7, 2, 10, 1.0);
    let cfg = UmapConfig {
        seed: 11,
        ..UmapConfig::default()
    };
    let a = project(&named(pts.clone()), &cfg).map_err(|e| e.to_string())?;
    let b = project(&named(pts.clone()), &cfg).map_err(|e| e.to_string())?;
    let bits = |m: &DMatrix<f64>| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    check(bits(&a.coords) == bits(&b.coords), "coordinates differ between runs")?;
    let (_, sigma) = smooth_knn_scale(&[1.0, 2.0, 3.0], 3f64.log2()).map_err(|e| e.to_string())?;
    check((sigma - 1.1334).abs() < 1e-3, format!("sigma {sigma}"))?;
    let (ca, cb) = fit_curve(0.1, 1.0).map_err(|e| e.to_string())?;
    check((ca - 1.577).abs() < 0.01 && (cb - 0.895).abs() < 0.01, format!("a {ca}, b {cb}"))?;
    let tw = trustworthiness(&pts, &a.coords, 3);
    check(tw >= 0.8, format!("trustworthiness {tw}"))?;
    Ok(format!("deterministic, sigma {sigma:.4}, a {ca:.3}, b {cb:.3}, trustworthiness {tw:.3}"))
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let mut hits = 0;
    for seed in 0..20u64 {
        let sim = generate(&SimConfig::two_regime(seed)).map_err(|e| e.to_string())?;
        let mut cfg = AnalysisConfig::default();
        cfg.umap.seed = seed;
        let an = analyze(&sim.dataset, &cfg).map_err(|e| e.to_string())?;
        let group = |g: &[RelationLabel]| {
            let mut ids: Vec<usize> = g.iter().map(|l| an.assignment[l.index()]).collect();
            ids.dedup();
            ids
        };
        let (w, c) = (group(&WITHIN_GROUP), group(&CROSS_GROUP));
        if an.selection.k_best == 2 && w.len() == 1 && c.len() == 1 && w != c {
            hits += 1;
        }
    }
    check(hits >= 18, format!("{hits}/20 seeds recovered"))?;
    within(t, Duration::from_secs(120))?;
    Ok(format!("{hits}/20 seeds select k = 2 and split the groups, {:?}", t.elapsed()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("cooccurrence oracle", cooccurrence_oracle),
        ("factorization", factorization),
        ("frequency fixture", frequency_fixture),
        ("ordinal closed form", ordinal_closed_form),
        ("gradient check", gradient_check),
        ("clmm recovery", clmm_recovery),
        ("lrt calibration", lrt_calibration),
        ("clustering oracle", clustering_oracle),
        ("manifold", manifold),
        ("end-to-end recovery", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
