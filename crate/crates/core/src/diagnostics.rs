//! Diagnostics that follow the steps of the d₂ convergence argument:
//! long-run variance, component-norm rates, second-moment trajectories,
//! uniform square-integrability and Lindeberg ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::processes::ProcessSpec;
use crate::projections::{canonical_kernel, ReferenceMeasure};
use crate::rng::{Role, StreamKey};
use crate::sum::{mean_var, NeumaierSum};
use crate::ustat::{component_ustat, u_statistic_exact_with, ExactOptions};

pub const MIN_LRV_LENGTH: usize = 200;
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxLagRule {
    /// L = ⌊n^{1/3}⌋
    CubeRoot,
    Fixed(usize),
}

impl MaxLagRule {
    pub fn lag(self, n: usize) -> usize {
        match self {
            MaxLagRule::CubeRoot => {
                let mut l = (n as f64).cbrt().floor() as usize;
                // guard the floor against cbrt rounding just below an integer
                if (l + 1).pow(3) <= n {
                    l += 1;
                }
                l
            }
            MaxLagRule::Fixed(l) => l,
        }
        .min(n.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRunVariance {
    /// γ̂₀ + 2Σ_{k≤L}(1 − k/(L+1))γ̂_k; multiply by m² for σ̃².
    pub sigma_tilde_sq_over_m2: f64,
    pub se: f64,
    pub max_lag: usize,
    pub batches: usize,
}

/// Bartlett-weighted long-run variance of a stationary sequence.
///
/// The standard error is the asymptotic Bartlett standard deviation
/// σ²·√(4(L+1)/(3n)) with σ² taken from a batch-means estimate over ⌊√n⌋
/// batches.
pub fn long_run_variance_estimate(values: &[f64], rule: MaxLagRule) -> Result<LongRunVariance> {
    let n = values.len();
    if n < MIN_LRV_LENGTH {
        return Err(Error::TooShort {
            need: MIN_LRV_LENGTH,
            got: n,
        });
    }
    let lag = rule.lag(n);
    let mean = crate::sum::sum(values) / n as f64;
    let centred: Vec<f64> = values.iter().map(|x| x - mean).collect();
    let autocov = |k: usize| -> f64 {
        let s: NeumaierSum = centred[..n - k]
            .iter()
            .zip(&centred[k..])
            .map(|(a, b)| a * b)
            .collect();
        s.value() / n as f64
    };
    let mut est = NeumaierSum::new();
    est.add(autocov(0));
    for k in 1..=lag {
        est.add(2.0 * (1.0 - k as f64 / (lag + 1) as f64) * autocov(k));
    }
    let estimate = est.value().max(0.0);

    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let batch_means: Vec<f64> = (0..batches)
        .map(|b| crate::sum::sum(&values[b * size..(b + 1) * size]) / size as f64)
        .collect();
    let (_, bm_var) = mean_var(&batch_means);
    let batch_means_lrv = size as f64 * bm_var;
    let se = batch_means_lrv * (4.0 * (lag + 1) as f64 / (3.0 * n as f64)).sqrt();
    Ok(LongRunVariance {
        sigma_tilde_sq_over_m2: estimate,
        se,
        max_lag: lag,
        batches,
    })
}

/// Least-squares fit of log RMS against log n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub intercept: Option<f64>,
    pub status: String,
}

impl SlopeFit {
    fn undefined(reason: &str) -> Self {
        Self {
            slope: None,
            slope_se: None,
            intercept: None,
            status: format!("undefined: {reason}"),
        }
    }
}

/// Fit log(y) = a + b·log(n); undefined if any y is zero.
pub fn fit_loglog(n_grid: &[usize], y: &[f64]) -> SlopeFit {
    if y.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return SlopeFit::undefined("degenerate all-zero component");
    }
    if n_grid.len() < 3 {
        return SlopeFit::undefined("fewer than three grid points");
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (ssr / (k - 2.0) / sxx).sqrt();
    SlopeFit {
        slope: Some(slope),
        slope_se: Some(se),
        intercept: Some(intercept),
        status: "ok".into(),
    }
}

/// RMS across replications of one quantity on the n-grid, and its fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    /// Component order i; 0 labels the remainder √n·U_h − m√n·U_n^{(1)}.
    pub order: usize,
    pub rms: Vec<f64>,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub components: Vec<RateSeries>,
    pub remainder: Option<RateSeries>,
}

impl RateFit {
    pub fn component(&self, order: usize) -> Option<&RateSeries> {
        self.components.iter().find(|c| c.order == order)
    }
}

/// Grid must be strictly increasing with at least four points spanning a
/// decade.
pub fn validate_rate_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.len() < 4 {
        return Err(Error::Config(format!("rate grid needs >= 4 points, got {}", n_grid.len())));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("rate grid must be strictly increasing".into()));
    }
    if (*n_grid.last().unwrap() as f64) < 10.0 * n_grid[0] as f64 {
        return Err(Error::Config("rate grid must span at least one decade".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RateOptions {
    pub orders: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub with_remainder: bool,
    pub exact: ExactOptions,
}

/// Estimate ‖U_n^{(i)}‖_{L₂} by RMS over replications for each order and n,
/// then fit the log-log slope.
pub fn rate_regression(
    kernel: &Kernel,
    spec: &ProcessSpec,
    reference: &ReferenceMeasure,
    opts: &RateOptions,
) -> Result<RateFit> {
    if opts.orders.is_empty() {
        return Err(Error::Config("nothing to fit: no orders requested".into()));
    }
    let m = kernel.degree();
    if let Some(&bad) = opts.orders.iter().find(|&&i| i == 0 || i > m) {
        return Err(Error::Config(format!("order {bad} outside 1..={m}")));
    }
    validate_rate_grid(&opts.n_grid)?;
    if opts.n_grid[0] < m {
        return Err(Error::SampleTooSmall { n: opts.n_grid[0], m });
    }
    let mut orders = opts.orders.clone();
    orders.sort_unstable();
    orders.dedup();
    let canon: Vec<(usize, Kernel)> = orders
        .iter()
        .map(|&i| canonical_kernel(kernel, i, reference).map(|k| (i, k)))
        .collect::<Result<_>>()?;
    let h1 = if opts.with_remainder {
        Some(canonical_kernel(kernel, 1, reference)?)
    } else {
        None
    };

    let mut comp_rms = vec![Vec::with_capacity(opts.n_grid.len()); canon.len()];
    let mut rem_rms = Vec::with_capacity(opts.n_grid.len());
    for (block, &n) in opts.n_grid.iter().enumerate() {
        let per_rep: Vec<(Vec<f64>, f64)> = (0..opts.reps)
            .into_par_iter()
            .map(|r| -> Result<(Vec<f64>, f64)> {
                let key = StreamKey::new(opts.seed, Role::Path)
                    .block(block as u64)
                    .index(r as u64);
                let path = spec.sample_path(n, key)?;
                let comps = canon
                    .iter()
                    .map(|(i, k)| component_ustat(*i, k, &path))
                    .collect::<Result<Vec<_>>>()?;
                let rem = match &h1 {
                    Some(h1) => {
                        let u = u_statistic_exact_with(kernel, &path, &opts.exact)?;
                        let u1 = component_ustat(1, h1, &path)?;
                        (n as f64).sqrt() * (u - m as f64 * u1)
                    }
                    None => 0.0,
                };
                Ok((comps, rem))
            })
            .collect::<Result<_>>()?;
        for (j, acc) in comp_rms.iter_mut().enumerate() {
            acc.push(rms(per_rep.iter().map(|(c, _)| c[j])));
        }
        rem_rms.push(rms(per_rep.iter().map(|(_, r)| *r)));
    }
    let components = orders
        .iter()
        .zip(comp_rms)
        .map(|(&order, rms)| RateSeries {
            order,
            fit: fit_loglog(&opts.n_grid, &rms),
            rms,
        })
        .collect();
    let remainder = opts.with_remainder.then(|| RateSeries {
        order: 0,
        fit: fit_loglog(&opts.n_grid, &rem_rms),
        rms: rem_rms,
    });
    Ok(RateFit {
        n_grid: opts.n_grid.clone(),
        reps: opts.reps,
        components,
        remainder,
    })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (NeumaierSum::new(), 0usize);
    for v in values {
        s.add(v * v);
        k += 1;
    }
    (s.value() / k as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    pub n: usize,
    pub mean_square: f64,
    pub se: f64,
}

/// Replicated statistics at one sample size, in replication order.
#[derive(Debug, Clone, Copy)]
pub struct Replicates<'a> {
    pub n: usize,
    pub values: &'a [f64],
}

/// Mean of Y² per n with its i.i.d. standard error across replications.
pub fn second_moment_trajectory(stats: &[Replicates<'_>]) -> Result<Vec<SecondMoment>> {
    stats
        .iter()
        .map(|s| {
            if s.values.len() < MIN_REPLICATIONS {
                return Err(Error::TooShort {
                    need: MIN_REPLICATIONS,
                    got: s.values.len(),
                });
            }
            let sq: Vec<f64> = s.values.iter().map(|y| y * y).collect();
            let (mean, var) = mean_var(&sq);
            Ok(SecondMoment {
                n: s.n,
                mean_square: mean,
                se: (var / sq.len() as f64).sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMoment {
    pub threshold: f64,
    /// max over n of mean(Y²·1{|Y| > K})
    pub value: f64,
    pub argmax_n: usize,
    pub se: f64,
}

// Plain left-to-right sum of non-negative terms. Floating-point addition is
// monotone in each operand, so zeroing terms can only lower the result;
// this keeps tail profiles exactly nonincreasing in the threshold.
fn truncated_second_moment(values: &[f64], threshold: f64) -> (f64, f64) {
    let terms: Vec<f64> = values
        .iter()
        .map(|&y| if y.abs() > threshold { y * y } else { 0.0 })
        .collect();
    let n = terms.len() as f64;
    let mean = terms.iter().fold(0.0, |acc, t| acc + t) / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// sup over n of the tail second moment at each threshold K.
pub fn uniform_integrability_profile(stats: &[Replicates<'_>], thresholds: &[f64]) -> Result<Vec<TailMoment>> {
    if stats.is_empty() {
        return Err(Error::Empty("replicated statistics"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("thresholds must be strictly ascending"));
    }
    Ok(thresholds
        .iter()
        .map(|&k| {
            let mut best = TailMoment {
                threshold: k,
                value: f64::NEG_INFINITY,
                argmax_n: 0,
                se: 0.0,
            };
            for s in stats {
                let (v, se) = truncated_second_moment(s.values, k);
                if v > best.value {
                    best = TailMoment {
                        threshold: k,
                        value: v,
                        argmax_n: s.n,
                        se,
                    };
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindebergPoint {
    pub n: usize,
    pub epsilon: f64,
    pub ratio: f64,
    pub se: f64,
}

/// L_n(ε) = s_n⁻² Σ_{k≤n} E[h₁(X_k)² 1{|h₁(X_k)| > ε s_n}], s_n² = n·Var h₁.
///
/// Each entry of `blocks` holds h₁ values pooled over the replications at
/// that n. Only defined for i.i.d. data.
pub fn lindeberg_ratio(
    spec: &ProcessSpec,
    blocks: &[Replicates<'_>],
    epsilon: f64,
    var_h1: f64,
) -> Result<Vec<LindebergPoint>> {
    if !spec.is_iid() {
        return Err(Error::OutOfScope(
            "the Lindeberg diagnostic covers i.i.d. data only".into(),
        ));
    }
    if epsilon.is_nan() || epsilon <= 0.0 || var_h1.is_nan() || var_h1 <= 0.0 {
        return Err(Error::invalid("epsilon and Var h1 must be positive"));
    }
    Ok(blocks
        .iter()
        .map(|b| {
            let s_n = (b.n as f64 * var_h1).sqrt();
            let (mean, se) = truncated_second_moment(b.values, epsilon * s_n);
            // n identically distributed summands over s_n² = n·Var h₁
            LindebergPoint {
                n: b.n,
                epsilon,
                ratio: mean / var_h1,
                se: se / var_h1,
            }
        })
        .collect())
}
