use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use rankfeat::bounds::{rankfeat_bound, BoundReport};
use rankfeat::eval_metrics::evaluate;
use rankfeat::feature_io::{
    read_featureset, read_head, read_json, read_logits, read_scores, write_featureset, write_head, write_json,
    write_logits, write_scores,
};
use rankfeat::head_model::{forward, gap_pool};
use rankfeat::rmt::{sample_kl, summarize_gap};
use rankfeat::scoring::{
    energy_score, fuse_score, rankfeat_score, react_threshold, score_sample, MahalanobisStats, MahalanobisStatsFile,
    Method, Scored, REACT_DEFAULT_PERCENTILE,
};
use rankfeat::spectral::{dominant_triplet, remove_rank_n, subtract_triplet, thin_svd};
use rankfeat::synth::{annotate, gen_feature, gen_head, sample_seed, BaseSpectrum, SpectrumSpec};
use rankfeat::{ClassifierHead, Error, FeatureMap, FeatureSet, PowerIterationConfig, Result, ScoreSet, Solver};

use crate::{BenchArgs, BoundArgs, EvalArgs, FuseArgs, MethodArg, MpArgs, ScoreArgs, SolverArg, SynthArgs};

fn check_head(features: &FeatureSet, head: &ClassifierHead) -> Result<()> {
    if head.channels() != features.channels() {
        return Err(Error::DimensionMismatch {
            what: "head input channels",
            expected: features.channels(),
            found: head.channels(),
        });
    }
    Ok(())
}

/// Runs `f` on every sample on the current pool, keeping input order.
fn per_sample<T, F>(features: &FeatureSet, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&FeatureMap) -> Result<T> + Sync,
{
    (0..features.len())
        .into_par_iter()
        .map(|i| f(&features.sample(i)))
        .collect()
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let features = read_featureset(&a.features)?;
    let head = read_head(&a.head)?;
    check_head(&features, &head)?;
    let solver = match a.solver {
        SolverArg::Exact => Solver::Exact,
        SolverArg::Pi => Solver::PowerIteration(PowerIterationConfig {
            max_iters: a.pi_iters,
            tol: 0.0,
            seed: a.seed,
        }),
    };
    let stats = match (&a.method, &a.maha_stats) {
        (MethodArg::Mahalanobis, Some(path)) => Some(MahalanobisStats::from_file(read_json::<MahalanobisStatsFile>(path)?)?),
        (MethodArg::Mahalanobis, None) => {
            return Err(Error::InvalidArgument("--method mahalanobis needs --maha-stats".into()));
        }
        _ => None,
    };
    let method = match a.method {
        MethodArg::Rankfeat => Method::RankFeat { n: a.rank, solver },
        MethodArg::Energy => Method::Energy,
        MethodArg::Msp => Method::Msp,
        MethodArg::Odin => Method::Odin { temperature: a.odin_t },
        MethodArg::React => {
            let tau = match a.react_tau {
                Some(t) => t,
                None => {
                    let pooled = per_sample(&features, |x| Ok(gap_pool(x)))?;
                    react_threshold(&pooled, REACT_DEFAULT_PERCENTILE)?
                }
            };
            Method::React { tau }
        }
        MethodArg::Gradnorm => Method::GradNorm,
        MethodArg::Mahalanobis => Method::Mahalanobis(stats.as_ref().expect("checked above")),
        MethodArg::Keep1 => Method::KeepRank1 { solver },
    };
    let scored: Vec<Scored> = per_sample(&features, |x| score_sample(x, &head, &method))?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    write_scores(&a.out, &ScoreSet::from_scores(&scores, method.name()))?;
    if let Some(path) = &a.emit_logits {
        let logits: Vec<_> = scored.into_iter().map(|s| s.logits).collect();
        write_logits(path, &logits)?;
    }
    Ok(())
}

pub fn fuse(a: &FuseArgs) -> Result<()> {
    let ya = read_logits(&a.logits_a)?;
    let yb = read_logits(&a.logits_b)?;
    if ya.len() != yb.len() {
        return Err(Error::DimensionMismatch {
            what: "logit sample count",
            expected: ya.len(),
            found: yb.len(),
        });
    }
    let scores = ya
        .par_iter()
        .zip(yb.par_iter())
        .map(|(a, b)| fuse_score(a, b))
        .collect::<Result<Vec<_>>>()?;
    write_scores(&a.out, &ScoreSet::from_scores(&scores, "fuse"))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let id = read_scores(&a.id)?;
    let ood = read_scores(&a.ood)?;
    write_json(&a.out, &evaluate(&id, &ood)?)
}

pub fn mp(a: &MpArgs) -> Result<()> {
    let features = read_featureset(&a.features)?;
    let remove = a.remove_rank == 1;
    let per = per_sample(&features, |x| sample_kl(x, remove, a.bins))?;
    write_json(&a.out, &summarize_gap(per, a.remove_rank as usize, a.bins))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if a.count == 0 {
        return Err(Error::InvalidArgument("--count must be positive".into()));
    }
    let len = a.channels.min(a.hw);
    let base = if a.alpha == 0.0 {
        BaseSpectrum::Flat { len, scale: 1.0 }
    } else {
        BaseSpectrum::Power {
            len,
            alpha: a.alpha,
            scale: 1.0,
        }
    };
    let spec = SpectrumSpec {
        base,
        spike: a.spike,
        noise_sigma: a.noise,
        nonneg: a.nonneg,
    };
    let mut set = FeatureSet::new(a.channels, 1, a.hw)?;
    let samples = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let x = gen_feature(&spec, a.channels, a.hw, sample_seed(a.seed, i))?;
            Ok(x.to_channel_major().into_iter().map(|v| v as f32).collect::<Vec<f32>>())
        })
        .collect::<Result<Vec<_>>>()?;
    for values in samples {
        set.push_values(values)?;
    }
    annotate(&mut set, &spec, a.seed);
    write_featureset(&a.out, &set)?;
    if let Some(path) = &a.head_out {
        write_head(path, &gen_head(a.classes, a.channels, a.head_seed)?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchRow {
    solver: &'static str,
    iters: Option<usize>,
    median_ms_per_sample: f64,
    max_rel_s1_dev: f64,
    max_rel_score_dev: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    samples: usize,
    channels: usize,
    spatial: usize,
    repeats: usize,
    rows: Vec<BenchRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rel_dev(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        (got - want).abs() / want.abs()
    }
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::InvalidArgument("--repeats must be at least 1".into()));
    }
    if a.pi_iters.is_empty() || a.pi_iters.contains(&0) {
        return Err(Error::InvalidArgument("--pi-iters needs positive iteration counts".into()));
    }
    let features = read_featureset(&a.features)?;
    let head = a.head.as_ref().map(read_head).transpose()?;
    if let Some(h) = &head {
        check_head(&features, h)?;
    }
    let samples: Vec<FeatureMap> = features.iter().collect();

    let mut solvers = vec![(Solver::Exact, None)];
    for &k in &a.pi_iters {
        let cfg = PowerIterationConfig {
            max_iters: k,
            tol: 0.0,
            seed: a.seed,
        };
        solvers.push((Solver::PowerIteration(cfg), Some(k)));
    }

    // Reference values from the exact decomposition.
    let reference = |solver: &Solver| -> Result<Vec<(f64, Option<f64>)>> {
        samples
            .par_iter()
            .map(|x| {
                let s1 = dominant_triplet(x, solver)?.s;
                let score = head.as_ref().map(|h| rankfeat_score(x, h, 1, solver)).transpose()?;
                Ok((s1, score))
            })
            .collect()
    };
    let exact = reference(&Solver::Exact)?;

    let mut rows = Vec::with_capacity(solvers.len());
    for (solver, iters) in &solvers {
        // Timing runs on one thread so rows are comparable.
        let mut per_repeat = Vec::with_capacity(a.repeats);
        for _ in 0..a.repeats {
            let start = Instant::now();
            for x in &samples {
                match &head {
                    Some(h) => {
                        std::hint::black_box(rankfeat_score(x, h, 1, solver)?);
                    }
                    None => {
                        std::hint::black_box(remove_rank_n(x, 1, solver)?);
                    }
                }
            }
            per_repeat.push(start.elapsed().as_secs_f64() * 1e3 / samples.len() as f64);
        }
        let values = if iters.is_some() { reference(solver)? } else { exact.clone() };
        let max_rel_s1_dev = values
            .iter()
            .zip(&exact)
            .map(|(g, w)| rel_dev(g.0, w.0))
            .fold(0.0, f64::max);
        let max_rel_score_dev = head.as_ref().map(|_| {
            values
                .iter()
                .zip(&exact)
                .map(|(g, w)| rel_dev(g.1.unwrap_or(0.0), w.1.unwrap_or(0.0)))
                .fold(0.0, f64::max)
        });
        rows.push(BenchRow {
            solver: if iters.is_some() { "pi" } else { "exact" },
            iters: *iters,
            median_ms_per_sample: median(per_repeat),
            max_rel_s1_dev,
            max_rel_score_dev,
        });
    }
    let report = BenchReport {
        samples: samples.len(),
        channels: features.channels(),
        spatial: features.spatial(),
        repeats: a.repeats,
        rows,
    };
    write_json(&a.out, &report)
}

#[derive(Debug, Serialize)]
struct SampleBound {
    index: usize,
    #[serde(flatten)]
    report: BoundReport,
}

pub fn bound(a: &BoundArgs) -> Result<()> {
    let features = read_featureset(&a.features)?;
    let head = read_head(&a.head)?;
    check_head(&features, &head)?;
    let hw = features.spatial();
    let reports = per_sample(&features, |x| {
        // One decomposition serves both the spectrum and the removal.
        let svd = thin_svd(x);
        let residual = if svd.values[0] > 0.0 {
            subtract_triplet(x, &svd.triplet(0))?
        } else {
            x.clone()
        };
        let score = energy_score(&forward(&gap_pool(&residual), &head)?)?;
        Ok(rankfeat_bound(&svd.spectrum(), &head, hw)?.with_score(score))
    })?;
    let out: Vec<SampleBound> = reports
        .into_iter()
        .enumerate()
        .map(|(index, report)| SampleBound { index, report })
        .collect();
    write_json(&a.out, &out)
}
