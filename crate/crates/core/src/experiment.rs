//! Simulation study with Gaussian p and q, where the true ratio is known.
//!
//! Defaults: `p = N(2, 5)`, `q = N(μ_q, 0.5)` (mean, variance) with
//! `μ_q ∈ {2, 3, 4}`, `n = m = 100`, `k ∈ {1, 2, 3, 5, 10}`, 20 replications
//! and λ chosen by quasi-optimality on the default [`LambdaGrid`].
//!
//! Randomness comes from `ChaCha8Rng` seeded through [`mix_seed`] and
//! normal draws from `rand_distr::Normal`, so every cell of a study can be
//! regenerated in isolation from `(seed, replication, μ_q)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_iterated_lavrentiev, RatioModel};
use crate::kernel::{assemble_gram, KernelSpec, MeasureTag, SampleSet};
use crate::selection::{lambda_mn, quasi_optimality, rn_distance, LambdaGrid};

/// A pair of one-dimensional normals `p = N(mu_p, var_p)`, `q = N(mu_q, var_q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPair {
    pub mu_p: f64,
    pub var_p: f64,
    pub mu_q: f64,
    pub var_q: f64,
}

impl NormalPair {
    pub fn study(mu_q: f64) -> Self {
        Self {
            mu_p: 2.0,
            var_p: 5.0,
            mu_q,
            var_q: 0.5,
        }
    }

    /// `dq/dp (x) = sqrt(var_p/var_q) exp((x−μ_p)²/(2 var_p) − (x−μ_q)²/(2 var_q))`
    pub fn ratio(&self, x: f64) -> f64 {
        let a = (x - self.mu_p) * (x - self.mu_p) / (2.0 * self.var_p);
        let b = (x - self.mu_q) * (x - self.mu_q) / (2.0 * self.var_q);
        (self.var_p / self.var_q).sqrt() * (a - b).exp()
    }
}

/// True ratio for the default study: `sqrt(10) exp(((x−2)² − 10(x−μ_q)²)/10)`.
pub fn true_beta(x: f64, mu_q: f64) -> f64 {
    NormalPair::study(mu_q).ratio(x)
}

/// SplitMix64 finalizer chained over `parts`.
pub fn mix_seed(parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts
        .iter()
        .fold(0x5EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// `count` i.i.d. draws from `N(mu, var)` (variance, not standard deviation).
pub fn sample_normal(
    mu: f64,
    var: f64,
    count: usize,
    seed: u64,
    tag: MeasureTag,
) -> Result<SampleSet> {
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::param("var", format!("must be positive, got {var}")));
    }
    if count == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    let dist = Normal::new(mu, var.sqrt()).map_err(|e| Error::param("var", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count).map(|_| vec![dist.sample(&mut rng)]).collect();
    SampleSet::new(points, tag, Some(seed))
}

/// Mean squared deviation of the sample values from `truth` over `X_p`.
pub fn msd_against(model: &RatioModel, truth: impl Fn(f64) -> f64) -> f64 {
    let n = model.values_at_xp.len().max(1) as f64;
    model
        .xp_points
        .iter()
        .zip(&model.values_at_xp)
        .map(|(x, v)| {
            let d = truth(x[0]) - v;
            d * d
        })
        .sum::<f64>()
        / n
}

/// MSD against the default study's true ratio. Uses the first coordinate.
pub fn msd(model: &RatioModel, mu_q: f64) -> f64 {
    msd_against(model, |x| true_beta(x, mu_q))
}

/// Five-number summary with nearest-rank (type 1) quantiles:
/// `Q(p) = sorted[ceil(p·N) − 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: nearest_rank(&v, 0.25),
            median: nearest_rank(&v, 0.5),
            q3: nearest_rank(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Uniform grid of probe points for pointwise errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl ProbeGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.lo];
        }
        (0..self.points)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

/// Largest `|β(x) − β̂(x)|` over a probe grid.
pub fn max_pointwise_error(
    model: &RatioModel,
    truth: impl Fn(f64) -> f64,
    grid: &ProbeGrid,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in grid.values() {
        worst = worst.max((truth(x) - model.evaluate(&[x])?).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    pub mu_p: f64,
    pub var_p: f64,
    pub mu_q_list: Vec<f64>,
    pub var_q: f64,
    pub k_list: Vec<u32>,
    pub replications: usize,
    pub grid: LambdaGrid,
    pub seed: u64,
    pub kernel: KernelSpec,
    /// When set, each replication also records the max pointwise error on this grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_grid: Option<ProbeGrid>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            m: 100,
            mu_p: 2.0,
            var_p: 5.0,
            mu_q_list: vec![2.0, 3.0, 4.0],
            var_q: 0.5,
            k_list: vec![1, 2, 3, 5, 10],
            replications: 20,
            grid: LambdaGrid::default(),
            seed: 2023,
            kernel: KernelSpec::default(),
            probe_grid: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m < 2 {
            return Err(Error::param("n, m", "sample sizes must be at least 2"));
        }
        if !(self.var_p > 0.0 && self.var_q > 0.0) {
            return Err(Error::param("var_p, var_q", "variances must be positive"));
        }
        if self.replications < 1 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if self.mu_q_list.is_empty() {
            return Err(Error::param("mu_q_list", "must not be empty"));
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(Error::param(
                "k_list",
                "must be non-empty with every k >= 1",
            ));
        }
        if self.grid.w < 2 {
            return Err(Error::param(
                "w",
                "quasi-optimality needs at least two grid values",
            ));
        }
        self.kernel.validate()
    }

    pub fn pair(&self, mu_q: f64) -> NormalPair {
        NormalPair {
            mu_p: self.mu_p,
            var_p: self.var_p,
            mu_q,
            var_q: self.var_q,
        }
    }

    /// Seed for replication `r` at `μ_q`, independent of the other cells.
    pub fn replication_seed(&self, replication: usize, mu_q: f64) -> u64 {
        mix_seed(&[self.seed, replication as u64, mu_q.to_bits()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub chosen_lambda: Option<f64>,
    pub msd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_pointwise_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub mu_q: f64,
    pub k: u32,
    pub replications: Vec<ReplicationRecord>,
    pub box_stats: Option<BoxStats>,
    pub complete: bool,
}

impl CellReport {
    pub fn msds(&self) -> Vec<f64> {
        self.replications.iter().filter_map(|r| r.msd).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: SimConfig,
    pub cells: Vec<CellReport>,
}

/// One line of the "k > 1 vs k = 1" summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianComparison {
    pub mu_q: f64,
    pub k: u32,
    pub median_msd: Option<f64>,
    pub baseline_median: Option<f64>,
    pub not_worse: Option<bool>,
}

impl ExperimentReport {
    pub fn cell(&self, mu_q: f64, k: u32) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.mu_q == mu_q && c.k == k)
    }

    pub fn complete(&self) -> bool {
        self.cells.iter().all(|c| c.complete)
    }

    /// Median MSD per cell against the `k = 1` cell at the same `μ_q`.
    pub fn median_comparison(&self) -> Vec<MedianComparison> {
        self.cells
            .iter()
            .map(|c| {
                let baseline = self
                    .cell(c.mu_q, 1)
                    .and_then(|b| b.box_stats)
                    .map(|b| b.median);
                let median = c.box_stats.map(|b| b.median);
                MedianComparison {
                    mu_q: c.mu_q,
                    k: c.k,
                    median_msd: median,
                    baseline_median: baseline,
                    not_worse: median.zip(baseline).map(|(a, b)| a <= b),
                }
            })
            .collect()
    }
}

struct KOutcome {
    chosen_lambda: f64,
    msd: f64,
    max_pointwise_error: Option<f64>,
}

fn run_replication(
    config: &SimConfig,
    mu_q: f64,
    replication: usize,
) -> (u64, Vec<Result<KOutcome>>) {
    let seed = config.replication_seed(replication, mu_q);
    let pair = config.pair(mu_q);
    let samples = sample_normal(
        config.mu_p,
        config.var_p,
        config.n,
        mix_seed(&[seed, 0]),
        MeasureTag::P,
    )
    .and_then(|xp| {
        let xq = sample_normal(
            mu_q,
            config.var_q,
            config.m,
            mix_seed(&[seed, 1]),
            MeasureTag::Q,
        )?;
        let gram = assemble_gram(&config.kernel, &xp, &xq)?;
        Ok((xp, xq, gram))
    });
    let (xp, xq, gram) = match samples {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return (
                seed,
                config
                    .k_list
                    .iter()
                    .map(|_| Err(Error::Input(msg.clone())))
                    .collect(),
            );
        }
    };
    let outcomes = config
        .k_list
        .iter()
        .map(|&k| {
            let trace = quasi_optimality(&gram, &xp, &xq, &config.kernel, k, &config.grid, true)?;
            let model = trace.chosen_model().expect("models retained");
            let msd = msd_against(model, |x| pair.ratio(x));
            if !msd.is_finite() {
                return Err(Error::numerical(trace.chosen_lambda, "non-finite MSD"));
            }
            let max_pointwise_error = config
                .probe_grid
                .as_ref()
                .map(|g| max_pointwise_error(model, |x| pair.ratio(x), g))
                .transpose()?;
            Ok(KOutcome {
                chosen_lambda: trace.chosen_lambda,
                msd,
                max_pointwise_error,
            })
        })
        .collect();
    (seed, outcomes)
}

/// Run every `(μ_q, k)` cell over all replications.
///
/// Failed fits are recorded in their replication and mark the cell
/// incomplete; they do not abort the study.
pub fn run_study(config: &SimConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.mu_q_list.len())
        .flat_map(|qi| (0..config.replications).map(move |r| (qi, r)))
        .collect();
    let results: Vec<(u64, Vec<Result<KOutcome>>)> = jobs
        .par_iter()
        .map(|&(qi, r)| run_replication(config, config.mu_q_list[qi], r))
        .collect();

    let mut cells = Vec::with_capacity(config.mu_q_list.len() * config.k_list.len());
    for (qi, &mu_q) in config.mu_q_list.iter().enumerate() {
        for (ki, &k) in config.k_list.iter().enumerate() {
            let replications: Vec<ReplicationRecord> = (0..config.replications)
                .map(|r| {
                    let (seed, outcomes) = &results[qi * config.replications + r];
                    match &outcomes[ki] {
                        Ok(o) => ReplicationRecord {
                            replication: r,
                            seed: *seed,
                            chosen_lambda: Some(o.chosen_lambda),
                            msd: Some(o.msd),
                            max_pointwise_error: o.max_pointwise_error,
                            error: None,
                        },
                        Err(e) => ReplicationRecord {
                            replication: r,
                            seed: *seed,
                            chosen_lambda: None,
                            msd: None,
                            max_pointwise_error: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            let complete = replications.iter().all(|r| r.error.is_none());
            let msds: Vec<f64> = replications.iter().filter_map(|r| r.msd).collect();
            cells.push(CellReport {
                mu_q,
                k,
                box_stats: BoxStats::from_values(&msds),
                replications,
                complete,
            });
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        cells,
    })
}

/// Least-squares slope of `ln err` against `ln n^{-1/2}`.
///
/// `None` with fewer than two usable points (distinct `n`, positive finite error).
pub fn fit_log_log_slope(ns: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(errors)
        .filter(|(n, e)| **n > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(n, e)| (-0.5 * n.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateConfig {
    pub n_list: Vec<usize>,
    pub eta: f64,
    pub varsigma: f64,
    pub k: u32,
    pub replications: usize,
    pub seed: u64,
    pub pair: NormalPair,
    pub kernel: KernelSpec,
    /// Pointwise-error probe; defaults to `μ_q`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<f64>,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            n_list: vec![50, 100, 200, 400],
            eta: 1.0,
            varsigma: 0.5,
            k: 10,
            replications: 20,
            seed: 2023,
            pair: NormalPair::study(2.0),
            kernel: KernelSpec::default(),
            probe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub lambda: f64,
    pub median_pointwise_error: f64,
    pub median_rn_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub config: RateConfig,
    pub points: Vec<RatePoint>,
    pub pointwise_slope: Option<f64>,
    pub rn_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Fit at `λ = λ_{n,n}` for each `n` (with `m = n`) and regress the median
/// errors on `n^{-1/2}` in log-log scale. Emits slopes; asserts nothing.
pub fn run_rate_study(config: &RateConfig) -> Result<RateRecord> {
    if config.n_list.is_empty() {
        return Err(Error::param("n_list", "must not be empty"));
    }
    if config.n_list.windows(2).any(|w| w[1] <= w[0]) || config.n_list[0] < 1 {
        return Err(Error::param(
            "n_list",
            "must be strictly increasing and positive",
        ));
    }
    if config.replications < 1 {
        return Err(Error::param("replications", "must be at least 1"));
    }
    let probe = config.probe.unwrap_or(config.pair.mu_q);
    let truth = |x: f64| config.pair.ratio(x);

    let points: Vec<RatePoint> = config
        .n_list
        .iter()
        .map(|&n| {
            let lambda = lambda_mn(n, n, config.eta, config.varsigma)?;
            let errs: Vec<(f64, f64)> = (0..config.replications)
                .into_par_iter()
                .map(|r| {
                    let seed = mix_seed(&[config.seed, n as u64, r as u64]);
                    let xp = sample_normal(
                        config.pair.mu_p,
                        config.pair.var_p,
                        n,
                        mix_seed(&[seed, 0]),
                        MeasureTag::P,
                    )?;
                    let xq = sample_normal(
                        config.pair.mu_q,
                        config.pair.var_q,
                        n,
                        mix_seed(&[seed, 1]),
                        MeasureTag::Q,
                    )?;
                    let gram = assemble_gram(&config.kernel, &xp, &xq)?;
                    let model =
                        fit_iterated_lavrentiev(&gram, &xp, &xq, &config.kernel, lambda, config.k)?;
                    let pointwise = (truth(probe) - model.evaluate(&[probe])?).abs();
                    let exact: Vec<f64> = xp.points.iter().map(|x| truth(x[0])).collect();
                    Ok((pointwise, rn_distance(&exact, &model.values_at_xp)))
                })
                .collect::<Result<_>>()?;
            let pw: Vec<f64> = errs.iter().map(|e| e.0).collect();
            let rn: Vec<f64> = errs.iter().map(|e| e.1).collect();
            Ok(RatePoint {
                n,
                lambda,
                median_pointwise_error: BoxStats::from_values(&pw).expect("non-empty").median,
                median_rn_error: BoxStats::from_values(&rn).expect("non-empty").median,
            })
        })
        .collect::<Result<_>>()?;

    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let pw: Vec<f64> = points.iter().map(|p| p.median_pointwise_error).collect();
    let rn: Vec<f64> = points.iter().map(|p| p.median_rn_error).collect();
    let pointwise_slope = fit_log_log_slope(&ns, &pw);
    let rn_slope = fit_log_log_slope(&ns, &rn);
    let note = (pointwise_slope.is_none() || rn_slope.is_none())
        .then(|| "insufficient points".to_string());
    Ok(RateRecord {
        config: config.clone(),
        points,
        pointwise_slope,
        rn_slope,
        note,
    })
}
