//! Library results checked against independent brute-force computations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rankfeat::eval_metrics::auroc;
use rankfeat::head_model::{forward, gap_pool};
use rankfeat::rmt::{fit_mp, kl_to_mp, mp_gap_experiment, MpFit};
use rankfeat::scoring::{
    gradnorm_score, keep_only_rank_1_logits, mahalanobis_score, rankfeat_logits, rankfeat_score, react_threshold,
    score_sample, MahalanobisStats, Method,
};
use rankfeat::spectral::{PowerIterationConfig, Solver};
use rankfeat::synth::{gen_feature, gen_head, gen_set, SpectrumSpec};
use rankfeat::{ClassifierHead, FeatureMap};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-scale..scale))
}

fn random_head(r: &mut ChaCha8Rng, q: usize, c: usize) -> ClassifierHead {
    let w = random_matrix(r, q, c, 1.0);
    let b = DVector::from_fn(q, |_, _| r.random_range(-1.0..1.0));
    ClassifierHead::new(w, b).unwrap()
}

#[test]
fn forward_matches_naive_dot_products() {
    let mut r = rng(1);
    for _ in 0..50 {
        let (q, c) = (r.random_range(1..12), r.random_range(1..30));
        let head = random_head(&mut r, q, c);
        let z = DVector::from_fn(c, |_, _| r.random_range(-4.0..4.0));
        let y = forward(&z, &head).unwrap();
        for i in 0..q {
            let mut acc = head.bias[i];
            for j in 0..c {
                acc += head.weight[(i, j)] * z[j];
            }
            assert!((y[i] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn mahalanobis_matches_naive_quadratic_form() {
    let mut r = rng(2);
    for _ in 0..30 {
        let d = r.random_range(1..8);
        let k = r.random_range(1..6);
        let a = random_matrix(&mut r, d, d, 1.0);
        let precision = &a * a.transpose() + DMatrix::identity(d, d);
        let means: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(d, |_, _| r.random_range(-2.0..2.0))).collect();
        let z = DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0));
        let stats = MahalanobisStats::new(means.clone(), precision.clone()).unwrap();
        let mut best = f64::NEG_INFINITY;
        for mu in &means {
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += (z[i] - mu[i]) * precision[(i, j)] * (z[j] - mu[j]);
                }
            }
            best = best.max(-q);
        }
        let got = mahalanobis_score(&z, &stats).unwrap();
        assert!((got - best).abs() <= 1e-10 * best.abs().max(1.0));
    }
}

#[test]
fn react_threshold_matches_selection_oracle() {
    let mut r = rng(3);
    for _ in 0..30 {
        let n = r.random_range(1..6);
        let c = r.random_range(1..20);
        let pooled: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(c, |_, _| r.random_range(0.0..5.0))).collect();
        let p = r.random_range(1.0..99.0);
        let mut all: Vec<f64> = pooled.iter().flat_map(|z| z.iter().copied()).collect();
        let pos = p / 100.0 * (all.len() - 1) as f64;
        let lo_idx = pos.floor() as usize;
        let lo = *all.select_nth_unstable_by(lo_idx, f64::total_cmp).1;
        let hi = if lo_idx + 1 < all.len() {
            *all.select_nth_unstable_by(lo_idx + 1, f64::total_cmp).1
        } else {
            lo
        };
        let expected = lo + (hi - lo) * (pos - lo_idx as f64);
        let got = react_threshold(&pooled, p).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }
}

/// `KL(u ‖ softmax(Wz + b))` for an explicit weight matrix.
fn kl_uniform_to_softmax(w: &DMatrix<f64>, b: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let y = w * z + b;
    let max = y.max();
    let lse = max + y.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let q = y.len() as f64;
    y.iter().map(|v| (1.0 / q) * ((1.0 / q).ln() - (v - lse))).sum()
}

#[test]
fn gradnorm_matches_central_differences() {
    let mut r = rng(4);
    let step = 1e-5;
    for _ in 0..25 {
        let q = r.random_range(2..10);
        let c = r.random_range(1..15);
        let head = random_head(&mut r, q, c);
        let z = DVector::from_fn(c, |_, _| r.random_range(0.0..2.0));
        let x = FeatureMap::new(DMatrix::from_column_slice(c, 1, z.as_slice())).unwrap();
        let mut l1 = 0.0;
        for i in 0..q {
            for j in 0..c {
                let mut plus = head.weight.clone();
                plus[(i, j)] += step;
                let mut minus = head.weight.clone();
                minus[(i, j)] -= step;
                let g = (kl_uniform_to_softmax(&plus, &head.bias, &z) - kl_uniform_to_softmax(&minus, &head.bias, &z))
                    / (2.0 * step);
                l1 += g.abs();
            }
        }
        let got = gradnorm_score(&x, &head).unwrap();
        assert!((got - l1).abs() <= 1e-4 * l1, "{got} vs {l1}");
    }
}

#[test]
fn keep_and_remove_logits_add_up() {
    let mut r = rng(5);
    for _ in 0..20 {
        let (c, hw, q) = (r.random_range(2..12), r.random_range(2..12), r.random_range(1..6));
        let head = random_head(&mut r, q, c);
        let x = FeatureMap::new(random_matrix(&mut r, c, hw, 3.0)).unwrap();
        let keep = keep_only_rank_1_logits(&x, &head, &Solver::Exact).unwrap();
        let remove = rankfeat_logits(&x, &head, 1, &Solver::Exact).unwrap();
        let full = forward(&gap_pool(&x), &head).unwrap();
        assert!((keep + remove - &head.bias - full).amax() < 1e-9);
    }
}

#[test]
fn power_iteration_scores_track_exact_scores() {
    let head = gen_head(10, 48, 9).unwrap();
    for seed in 0..20 {
        let x = gen_feature(&SpectrumSpec::flat(40, 2.0, 0.01), 48, 40, seed).unwrap();
        let exact = rankfeat_score(&x, &head, 1, &Solver::Exact).unwrap();
        let pi = rankfeat_score(&x, &head, 1, &Solver::PowerIteration(PowerIterationConfig::with_iters(100))).unwrap();
        assert!((pi - exact).abs() < 1e-3 * exact.abs(), "{pi} vs {exact}");
    }
}

/// Cumulative MP distribution on a fine grid by the trapezoid rule; `t ≥ n`
/// so the density carries unit mass.
fn mp_inverse_cdf_samples(fit: &MpFit, count: usize) -> Vec<f64> {
    let grid = 200_000;
    let h = (fit.lambda_plus - fit.lambda_minus) / grid as f64;
    let density = |l: f64| {
        let inside = (fit.lambda_plus - l) * (l - fit.lambda_minus);
        if inside <= 0.0 {
            0.0
        } else {
            (fit.t as f64 / fit.n as f64) * inside.sqrt() / (2.0 * std::f64::consts::PI * l * fit.sigma2)
        }
    };
    let mut cdf = vec![0.0; grid + 1];
    for i in 1..=grid {
        let a = fit.lambda_minus + h * (i - 1) as f64;
        cdf[i] = cdf[i - 1] + 0.5 * h * (density(a) + density(a + h));
    }
    let total = cdf[grid];
    (0..count)
        .map(|k| {
            let u = (k as f64 + 0.5) / count as f64 * total;
            let idx = cdf.partition_point(|&c| c < u).clamp(1, grid);
            let (c0, c1) = (cdf[idx - 1], cdf[idx]);
            let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
            fit.lambda_minus + h * ((idx - 1) as f64 + frac)
        })
        .collect()
}

#[test]
fn moment_fit_and_self_consistency_on_exact_mp_samples() {
    let truth = MpFit::new(2.0, 400, 200).unwrap();
    let eigs = mp_inverse_cdf_samples(&truth, 10_000);
    let fit = fit_mp(&eigs, 400, 200).unwrap();
    assert!((1.9..=2.1).contains(&fit.sigma2), "sigma2 = {}", fit.sigma2);
    let kl = kl_to_mp(&eigs, &fit, 50).unwrap();
    assert!(kl < 0.05, "KL = {kl}");
}

#[test]
fn rank_one_removal_moves_spiked_spectra_closer_to_mp() {
    let (c, hw, count) = (64, 64, 60);
    let flat = gen_set(&SpectrumSpec::flat(64, 1.0, 0.01), count, c, 8, 8, 1000).unwrap();
    let spiked = gen_set(&SpectrumSpec::flat(64, 3.0, 0.01), count, c, 8, 8, 5000).unwrap();
    assert_eq!(flat.spatial(), hw);
    let kl = |set, rank| mp_gap_experiment(set, rank, 50).unwrap().mean_kl;
    let (flat0, flat1) = (kl(&flat, 0), kl(&flat, 1));
    let (spiked0, spiked1) = (kl(&spiked, 0), kl(&spiked, 1));
    assert!(flat1 < flat0, "{flat1} vs {flat0}");
    assert!(spiked0 - spiked1 > flat0 - flat1);
}

#[test]
fn identical_distributions_give_chance_auroc_for_every_method() {
    let (c, count) = (32, 500);
    let spec = SpectrumSpec::flat(25, 1.5, 0.05);
    let head = gen_head(10, c, 77).unwrap();
    let a = gen_set(&spec, count, c, 5, 5, 0).unwrap();
    let b = gen_set(&spec, count, c, 5, 5, 10_000).unwrap();

    let mut r = rng(6);
    let means: Vec<DVector<f64>> = (0..10).map(|_| DVector::from_fn(c, |_, _| r.random_range(-0.1..0.1))).collect();
    let stats = MahalanobisStats::new(means, DMatrix::identity(c, c)).unwrap();
    let pooled: Vec<_> = a.iter().map(|x| gap_pool(&x)).collect();
    let tau = react_threshold(&pooled, 90.0).unwrap();
    let methods = [
        Method::RankFeat { n: 1, solver: Solver::Exact },
        Method::Energy,
        Method::Msp,
        Method::Odin { temperature: 1000.0 },
        Method::React { tau },
        Method::GradNorm,
        Method::Mahalanobis(&stats),
        Method::KeepRank1 { solver: Solver::Exact },
    ];
    for method in &methods {
        let score = |x: FeatureMap| score_sample(&x, &head, method).unwrap().score;
        let sa: Vec<f64> = a.iter().map(score).collect();
        let sb: Vec<f64> = b.iter().map(score).collect();
        let auc = auroc(&sa, &sb).unwrap();
        assert!((auc - 0.5).abs() <= 0.05, "{}: {auc}", method.name());
    }
}
