//! Replication loops for the synthetic and real-data experiments.
//!
//! Every replication derives its random streams from the master seed and its
//! grid coordinates, so results do not depend on thread count or scheduling.
//! Training sets are keyed by `(N, replication)` and shared across gamma. Test
//! sets are keyed by `(N, gamma, replication)`, so test noise is independent
//! across the cells of a rate regression.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bignn::{majority_vote, predict_local, BigNnModel};
use crate::cv::tune_k_cv;
use crate::dataset::{Dataset, Label};
use crate::denoise::pretrain_with;
use crate::error::{Error, Result};
use crate::harness::config::{check_cell, ExperimentKind, ExperimentSpec, TestSize};
use crate::harness::ingest::load_csv;
use crate::harness::results::{sort_rows, summarize, MetricsReport};
use crate::kselect::{divide_oracle_k, KRule};
use crate::knn::{KnnIndex, SearchStrategy};
use crate::metrics::{
    classify_all, disagreement, empirical_risk, simple_slope, spearman, spearman_p_lower, speedup,
    KnnClassifier,
};
use crate::partition::{make_partition, subsample_count};
use crate::rng::RngStream;
use crate::synthgen::GaussianClassModel;

fn ms(d: Duration) -> f64 {
    (d.as_secs_f64() * 1e6).round() / 1e3
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed()))
}

/// Runs `f` on a dedicated pool of `threads` workers (the global pool when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn gamma_key(g: f64) -> u64 {
    g.to_bits()
}

/// Bayes risk of the generating model: closed form when available, Monte Carlo otherwise.
pub fn reference_bayes_risk(model: &GaussianClassModel, spec: &ExperimentSpec) -> Result<f64> {
    if let Some(r) = model.closed_form_bayes_risk() {
        return Ok(r);
    }
    let mut rng = RngStream::new(spec.master_seed, "bayes-risk", 0);
    Ok(model.bayes_risk(spec.bayes_mc_samples, &mut rng)?.estimate)
}

struct Replication {
    row: MetricsReport,
    pred: Vec<Label>,
    model: BigNnModel,
    test: Dataset,
}

struct SyntheticCtx<'a> {
    spec: &'a ExperimentSpec,
    test_n: usize,
    model: GaussianClassModel,
    rule: KRule,
    bayes: f64,
    root: RngStream,
}

impl SyntheticCtx<'_> {
    fn train_data(&self, n: usize, rep: usize) -> Result<Dataset> {
        let mut rng = self.root.substream("N", n as u64).substream("train", rep as u64);
        self.model.sample(n, &mut rng)
    }

    fn test_data(&self, n: usize, gamma: f64, rep: usize) -> Result<Dataset> {
        let mut rng = self
            .root
            .substream("N", n as u64)
            .substream("gamma", gamma_key(gamma))
            .substream("test", rep as u64);
        self.model.sample(self.test_n, &mut rng)
    }

    /// Trains and scores one replication on its own test set.
    fn replicate(&self, n: usize, gamma: f64, rep: usize) -> Result<Replication> {
        let test = self.test_data(n, gamma, rep)?;
        let train = self.train_data(n, rep)?;
        let mut prng = self
            .root
            .substream("N", n as u64)
            .substream("gamma", gamma_key(gamma))
            .substream("partition", rep as u64);
        let (model, train_time) = timed(|| BigNnModel::train(&train, gamma, self.rule, &mut prng))?;
        let (pred, predict_time) = timed(|| model.predict_batch(&test))?;

        if gamma == 0.0 {
            let oracle = KnnClassifier {
                index: KnnIndex::from_dataset(&train, SearchStrategy::KdTree),
                k: model.k_local(),
            };
            if classify_all(&oracle, &test)? != pred {
                return Err(Error::Logic(format!(
                    "gamma=0 bigNN differs from oracle kNN (N={n}, rep={rep})"
                )));
            }
        }

        let risk = empirical_risk(&pred, test.labels())?;
        let row = MetricsReport {
            method: "bignn".into(),
            n,
            gamma,
            theta: None,
            repeats: None,
            k: model.k_local(),
            rep,
            risk,
            regret: Some(risk - self.bayes),
            cis: None,
            train_ms: ms(train_time),
            predict_ms: ms(predict_time),
            seed: self.spec.master_seed,
        };
        Ok(Replication { row, pred, model, test })
    }

    /// Replications `2p` and `2p+1`; their CIS is the disagreement of the two
    /// classifiers on the first replication's test set.
    fn run_pair(&self, n: usize, gamma: f64, pair: usize) -> Result<Vec<MetricsReport>> {
        let first = self.replicate(n, gamma, 2 * pair)?;
        if 2 * pair + 1 >= self.spec.replications {
            return Ok(vec![first.row]);
        }
        let second = self.replicate(n, gamma, 2 * pair + 1)?;
        let mut rows = vec![first.row, second.row];
        if self.spec.cis {
            let cross = second.model.predict_batch(&first.test)?;
            let cis = disagreement(&first.pred, &cross)?;
            for row in &mut rows {
                row.cis = Some(cis);
            }
        }
        Ok(rows)
    }
}

fn fixed_test_size(spec: &ExperimentSpec) -> Result<usize> {
    match spec.test_size {
        TestSize::Fixed(n) if n > 0 => Ok(n),
        _ => Err(Error::config("synthetic experiments need a fixed test size")),
    }
}

fn run_synthetic(spec: &ExperimentSpec, tag: &str) -> Result<Vec<MetricsReport>> {
    spec.validate()?;
    let test_n = fixed_test_size(spec)?;
    let model = spec.class_model()?;
    let ctx = SyntheticCtx {
        spec,
        test_n,
        rule: spec.k_rule()?,
        bayes: reference_bayes_risk(&model, spec)?,
        model,
        root: RngStream::new(spec.master_seed, tag, 0),
    };

    if spec.warmup {
        let warm = SyntheticCtx {
            root: RngStream::new(spec.master_seed, "warmup", 0),
            model: ctx.model.clone(),
            ..ctx
        };
        warm.run_pair(spec.n_grid[0], spec.gamma_grid[0], 0)?;
    }

    let pairs = spec.replications.div_ceil(2);
    let tasks: Vec<(usize, f64, usize)> = spec
        .n_grid
        .iter()
        .flat_map(|&n| {
            spec.gamma_grid
                .iter()
                .flat_map(move |&g| (0..pairs).map(move |p| (n, g, p)))
        })
        .collect();
    let chunks = tasks
        .par_iter()
        .map(|&(n, g, p)| ctx.run_pair(n, g, p))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<MetricsReport> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Rate-rule bigNN over the (gamma, N) grid.
pub fn run_sim1(spec: &ExperimentSpec) -> Result<Vec<MetricsReport>> {
    expect_kind(spec, ExperimentKind::Sim1)?;
    run_synthetic(spec, "sim1")
}

/// Fixed-k bigNN over the (gamma, N) grid.
pub fn run_sim2(spec: &ExperimentSpec) -> Result<Vec<MetricsReport>> {
    expect_kind(spec, ExperimentKind::Sim2)?;
    run_synthetic(spec, "sim2")
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::config(format!(
            "spec is a {:?} experiment, expected {kind:?}",
            spec.kind
        )));
    }
    Ok(())
}

/// Regret trend in gamma for one N.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTrend {
    pub n: usize,
    /// `(gamma, mean regret)`, ascending in gamma.
    pub mean_regret: Vec<(f64, f64)>,
    /// Least-squares slope of log mean regret on gamma; `None` when some
    /// mean regret is not positive.
    pub slope: Option<f64>,
    /// Rank correlation of mean regret (equivalently its log) with gamma.
    pub spearman: f64,
    /// One-sided p-value for a negative rank correlation.
    pub p_value: f64,
}

/// Per-N slope and rank correlation of mean regret against gamma.
pub fn gamma_trends(rows: &[MetricsReport], method: &str) -> Result<Vec<GammaTrend>> {
    let cells = summarize(rows);
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let mut pts = cells
                .iter()
                .filter(|c| c.n == n && c.method == method && c.theta.is_none())
                .map(|c| {
                    let r = c.mean_regret.ok_or_else(|| Error::data("rows carry no regret"))?;
                    Ok((c.gamma, r))
                })
                .collect::<Result<Vec<_>>>()?;
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let slope = ys
                .iter()
                .all(|&r| r > 0.0)
                .then(|| simple_slope(&xs, &ys.iter().map(|r| r.ln()).collect::<Vec<_>>()));
            Ok(GammaTrend {
                n,
                slope,
                spearman: spearman(&xs, &ys),
                p_value: spearman_p_lower(&xs, &ys),
                mean_regret: pts,
            })
        })
        .collect()
}

/// bigNN against its denoised accelerator over the (theta, I) grid.
pub fn run_denoise_bench(spec: &ExperimentSpec) -> Result<Vec<MetricsReport>> {
    expect_kind(spec, ExperimentKind::DenoiseBench)?;
    spec.validate()?;
    let model = spec.class_model()?;
    let bayes = reference_bayes_risk(&model, spec)?;
    let rule = spec.k_rule()?;
    let test_n = fixed_test_size(spec)?;

    let one_rep = |root: &RngStream, n: usize, rep: usize| -> Result<Vec<MetricsReport>> {
        let base = root.substream("N", n as u64);
        let train = model.sample(n, &mut base.substream("train", rep as u64))?;
        let test = model.sample(test_n, &mut base.substream("test", rep as u64))?;
        let mut rows = Vec::new();
        for &gamma in &spec.gamma_grid {
            let gbase = base.substream("gamma", gamma_key(gamma));
            let mut prng = gbase.substream("partition", rep as u64);
            let (bignn, train_time) = timed(|| BigNnModel::train(&train, gamma, rule, &mut prng))?;
            let (pred, predict_time) = timed(|| bignn.predict_batch(&test))?;
            let risk = empirical_risk(&pred, test.labels())?;
            let row = MetricsReport {
                method: "bignn".into(),
                n,
                gamma,
                theta: None,
                repeats: None,
                k: bignn.k_local(),
                rep,
                risk,
                regret: Some(risk - bayes),
                cis: None,
                train_ms: ms(train_time),
                predict_ms: ms(predict_time),
                seed: spec.master_seed,
            };
            rows.push(row);
            for &theta in &spec.theta_grid {
                for &repeats in &spec.repeats_grid {
                    let mut drng = gbase
                        .substream("pretrain", rep as u64)
                        .substream("theta", theta.to_bits())
                        .substream("I", repeats as u64);
                    let (den, pre_time) = timed(|| {
                        pretrain_with(&bignn, &train, theta, repeats, spec.subsample_source, &mut drng)
                    })?;
                    let (dpred, dtime) = timed(|| den.predict_batch(&test))?;
                    let drisk = empirical_risk(&dpred, test.labels())?;
                    rows.push(MetricsReport {
                        method: "denoised".into(),
                        n,
                        gamma,
                        theta: Some(theta),
                        repeats: Some(repeats),
                        k: bignn.k_local(),
                        rep,
                        risk: drisk,
                        regret: Some(drisk - bayes),
                        cis: None,
                        train_ms: ms(pre_time),
                        predict_ms: ms(dtime),
                        seed: spec.master_seed,
                    });
                }
            }
        }
        Ok(rows)
    };

    if spec.warmup {
        one_rep(&RngStream::new(spec.master_seed, "warmup", 0), spec.n_grid[0], 0)?;
    }
    let root = RngStream::new(spec.master_seed, "sim3", 0);
    let tasks: Vec<(usize, usize)> = spec
        .n_grid
        .iter()
        .flat_map(|&n| (0..spec.replications).map(move |r| (n, r)))
        .collect();
    let chunks = tasks
        .par_iter()
        .map(|&(n, r)| one_rep(&root, n, r))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<MetricsReport> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

fn split_rows(n: usize, first: usize, rng: &mut RngStream) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let rest = order.split_off(first);
    (order, rest)
}

/// Oracle kNN (CV-tuned k) against bigNN (k divided by s) on a real dataset.
pub fn run_real(spec: &ExperimentSpec) -> Result<Vec<MetricsReport>> {
    expect_kind(spec, ExperimentKind::Real)?;
    spec.validate()?;
    let schema = spec.dataset.as_ref().expect("validated");
    let data = load_csv(schema)?;
    run_real_on(spec, &data)
}

/// [`run_real`] on an already loaded dataset.
pub fn run_real_on(spec: &ExperimentSpec, data: &Dataset) -> Result<Vec<MetricsReport>> {
    let n_total = data.len();
    let test_n = spec.test_size.for_total(n_total);
    if test_n == 0 || test_n >= n_total {
        return Err(Error::config(format!(
            "dataset of {n_total} points is too small for a test split"
        )));
    }
    let pool_n = n_total - test_n;
    let k_max = *spec.k_grid.iter().max().expect("validated");
    let smallest_fold_train = pool_n - pool_n.div_ceil(spec.cv_folds);
    if k_max > smallest_fold_train {
        return Err(Error::config(format!(
            "largest k {k_max} exceeds the smallest cross-validation training fold ({smallest_fold_train})"
        )));
    }
    let half = pool_n / 2;
    for &gamma in &spec.gamma_grid {
        let sizes = if spec.cis { vec![pool_n, half] } else { vec![pool_n] };
        for size in sizes {
            if size == 0 {
                return Err(Error::config("training pool is empty"));
            }
            check_cell(size, gamma, KRule::DivideOracle { k_oracle: k_max })?;
            let s = subsample_count(size, gamma)?;
            if divide_oracle_k(k_max, s) > size / s {
                return Err(Error::config(format!("gamma={gamma} leaves subsamples smaller than k")));
            }
        }
    }
    if spec.cis && k_max > half {
        return Err(Error::config("largest k exceeds half of the training pool"));
    }

    let root = RngStream::new(spec.master_seed, "real", 0);
    let one_rep = |rep: usize| -> Result<Vec<MetricsReport>> {
        let rrng = root.substream("rep", rep as u64);
        let (test_rows, pool_rows) = split_rows(n_total, test_n, &mut rrng.substream("split", 0));
        let test = data.subset(&test_rows)?;
        let pool = data.subset(&pool_rows)?;
        let k_oracle = tune_k_cv(&pool, spec.cv_folds, &spec.k_grid, &mut rrng.substream("cv", 0))?;
        let (a_rows, b_rows) = split_rows(pool_n, half, &mut rrng.substream("halves", 0));
        let b_rows = &b_rows[..half];
        let halves = [pool.subset(&a_rows)?, pool.subset(b_rows)?];

        let mut rows = Vec::new();
        let (oracle, oracle_train) =
            timed(|| Ok(KnnIndex::from_dataset(&pool, SearchStrategy::KdTree)))?;
        let (pred, oracle_predict) = timed(|| {
            (0..test.len())
                .into_par_iter()
                .map(|i| predict_local(&oracle, k_oracle, test.features(i)))
                .collect::<Result<Vec<_>>>()
        })?;
        let cis = if spec.cis {
            let preds = halves
                .iter()
                .map(|h| {
                    let c = KnnClassifier {
                        index: KnnIndex::from_dataset(h, SearchStrategy::KdTree),
                        k: k_oracle,
                    };
                    classify_all(&c, &test)
                })
                .collect::<Result<Vec<_>>>()?;
            Some(disagreement(&preds[0], &preds[1])?)
        } else {
            None
        };
        rows.push(MetricsReport {
            method: "oracle_knn".into(),
            n: n_total,
            gamma: 0.0,
            theta: None,
            repeats: None,
            k: k_oracle,
            rep,
            risk: empirical_risk(&pred, test.labels())?,
            regret: None,
            cis,
            train_ms: ms(oracle_train),
            predict_ms: ms(oracle_predict),
            seed: spec.master_seed,
        });

        for &gamma in &spec.gamma_grid {
            let rule = KRule::DivideOracle { k_oracle };
            let grng = rrng.substream("gamma", gamma_key(gamma));
            let mut prng = grng.substream("partition", 0);
            let (model, train_time) = timed(|| BigNnModel::train(&pool, gamma, rule, &mut prng))?;
            let (pred, predict_time) = timed(|| model.predict_batch(&test))?;
            let cis = if spec.cis {
                let preds = halves
                    .iter()
                    .enumerate()
                    .map(|(h, d)| {
                        let mut r = grng.substream("half", h as u64);
                        BigNnModel::train(d, gamma, rule, &mut r)?.predict_batch(&test)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(disagreement(&preds[0], &preds[1])?)
            } else {
                None
            };
            rows.push(MetricsReport {
                method: "bignn".into(),
                n: n_total,
                gamma,
                theta: None,
                repeats: None,
                k: model.k_local(),
                rep,
                risk: empirical_risk(&pred, test.labels())?,
                regret: None,
                cis,
                train_ms: ms(train_time),
                predict_ms: ms(predict_time),
                seed: spec.master_seed,
            });
        }
        Ok(rows)
    };

    let chunks = (0..spec.replications)
        .into_par_iter()
        .map(one_rep)
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<MetricsReport> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Mean risk, CIS and speedup per gamma of a real-data run.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSummary {
    pub gamma: f64,
    pub oracle_risk: f64,
    pub bignn_risk: f64,
    pub oracle_cis: Option<f64>,
    pub bignn_cis: Option<f64>,
    pub speedup: f64,
}

pub fn summarize_real(rows: &[MetricsReport]) -> Result<Vec<RealSummary>> {
    let cells = summarize(rows);
    let oracle = cells
        .iter()
        .find(|c| c.method == "oracle_knn")
        .ok_or_else(|| Error::data("no oracle rows"))?;
    let oracle_ms = oracle.mean_train_ms + oracle.mean_predict_ms;
    cells
        .iter()
        .filter(|c| c.method == "bignn")
        .map(|c| {
            let bignn_ms = c.mean_train_ms + c.mean_predict_ms;
            Ok(RealSummary {
                gamma: c.gamma,
                oracle_risk: oracle.mean_risk,
                bignn_risk: c.mean_risk,
                oracle_cis: oracle.mean_cis,
                bignn_cis: c.mean_cis,
                speedup: speedup(
                    Duration::from_secs_f64(oracle_ms / 1e3),
                    Duration::from_secs_f64(bignn_ms.max(1e-6) / 1e3),
                )?,
            })
        })
        .collect()
}

/// Wall-clock comparison of oracle kNN and bigNN on one train/test split.
#[derive(Debug, Clone)]
pub struct SpeedupProfile {
    pub s: usize,
    pub k_oracle: usize,
    pub k_local: usize,
    pub oracle: Duration,
    /// Partition + every subsample processed one after another + vote.
    pub bignn_serial: Duration,
    /// Partition + slowest subsample + vote: elapsed time when each
    /// subsample runs on its own worker.
    pub bignn_distributed: Duration,
    pub oracle_predictions: Vec<Label>,
    pub bignn_predictions: Vec<Label>,
}

impl SpeedupProfile {
    pub fn serial_speedup(&self) -> Result<f64> {
        speedup(self.oracle, self.bignn_serial)
    }

    pub fn distributed_speedup(&self) -> Result<f64> {
        speedup(self.oracle, self.bignn_distributed)
    }
}

/// Times oracle kNN and bigNN (train + predict) on a single thread,
/// recording each subsample's work separately.
pub fn profile_speedup(
    train: &Dataset,
    test: &Dataset,
    gamma: f64,
    k_oracle: usize,
    rule: KRule,
    rng: &mut RngStream,
) -> Result<SpeedupProfile> {
    let start = Instant::now();
    let oracle = KnnIndex::from_dataset(train, SearchStrategy::KdTree);
    let oracle_predictions = test
        .rows()
        .map(|x| predict_local(&oracle, k_oracle, x))
        .collect::<Result<Vec<_>>>()?;
    let oracle_time = start.elapsed();

    let start = Instant::now();
    let plan = make_partition(train.len(), gamma, rng)?;
    let k_local = rule.resolve(train.len(), plan.s(), plan.min_size())?;
    crate::bignn::check_k_fits(&plan, k_local)?;
    let partition_time = start.elapsed();

    let mut local_times = Vec::with_capacity(plan.s());
    let mut local_votes = Vec::with_capacity(plan.s());
    for rows in plan.subsamples() {
        let start = Instant::now();
        let index = KnnIndex::from_rows(train, rows, SearchStrategy::KdTree)?;
        let votes = test
            .rows()
            .map(|x| predict_local(&index, k_local, x))
            .collect::<Result<Vec<_>>>()?;
        local_times.push(start.elapsed());
        local_votes.push(votes);
    }

    let start = Instant::now();
    let mut column = Vec::with_capacity(plan.s());
    let bignn_predictions = (0..test.len())
        .map(|i| {
            column.clear();
            column.extend(local_votes.iter().map(|v| v[i]));
            majority_vote(&column)
        })
        .collect();
    let vote_time = start.elapsed();

    let serial: Duration = local_times.iter().sum();
    let slowest = local_times.iter().max().copied().unwrap_or_default();
    Ok(SpeedupProfile {
        s: plan.s(),
        k_oracle,
        k_local,
        oracle: oracle_time,
        bignn_serial: partition_time + serial + vote_time,
        bignn_distributed: partition_time + slowest + vote_time,
        oracle_predictions,
        bignn_predictions,
    })
}
