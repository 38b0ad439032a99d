//! Exact and incomplete U-statistics, and the Hoeffding components.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combin::{binomial, chunk_bounds, next_combination, unrank};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::projections::{canonical_kernel, marginal_projection, ReferenceMeasure};
use crate::sum::{mean_var, NeumaierSum};

/// Default ceiling on the number of index tuples the exact estimator walks.
pub const DEFAULT_ENUMERATION_CAP: u64 = 20_000_000;

/// Default number of contiguous rank chunks. Part of the reproducibility
/// key: the floating-point result depends on it, the thread count does not.
pub const DEFAULT_CHUNKS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactOptions {
    pub cap: u64,
    pub chunks: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            chunks: DEFAULT_CHUNKS,
        }
    }
}

fn check_size(n: usize, m: usize) -> Result<()> {
    if n < m {
        Err(Error::SampleTooSmall { n, m })
    } else {
        Ok(())
    }
}

/// Whether C(n, m) fits under `cap`.
pub fn exact_feasible(n: usize, m: usize, cap: u64) -> bool {
    matches!(binomial(n, m), Some(t) if t <= cap as u128)
}

/// C(n,m)⁻¹ Σ_{i₁<…<i_m} h(X_{i₁}, …, X_{i_m}) with the default options.
pub fn u_statistic_exact(kernel: &Kernel, sample: &[f64]) -> Result<f64> {
    u_statistic_exact_with(kernel, sample, &ExactOptions::default())
}

/// Exact U-statistic by chunked combinadic enumeration.
///
/// The rank range is split into `opts.chunks` contiguous pieces, each
/// summed with compensation, and the chunk sums are combined in order.
pub fn u_statistic_exact_with(kernel: &Kernel, sample: &[f64], opts: &ExactOptions) -> Result<f64> {
    let (n, m) = (sample.len(), kernel.degree());
    check_size(n, m)?;
    let total = binomial(n, m).unwrap_or(u128::MAX);
    if total > opts.cap as u128 {
        return Err(Error::EnumerationCap {
            n,
            m,
            tuples: total,
            cap: opts.cap,
        });
    }
    let sums: Vec<f64> = chunk_bounds(total, opts.chunks)
        .into_par_iter()
        .map(|(start, end)| chunk_sum(kernel, sample, start, end))
        .collect();
    let total_sum: NeumaierSum = sums.into_iter().collect();
    Ok(total_sum.value() / total as f64)
}

fn chunk_sum(kernel: &Kernel, sample: &[f64], start: u128, end: u128) -> f64 {
    let n = sample.len();
    let mut tuple = unrank(n, kernel.degree(), start);
    let mut buf = vec![0.0; tuple.len()];
    let mut acc = NeumaierSum::new();
    let mut remaining = end - start;
    loop {
        for (b, &i) in buf.iter_mut().zip(&tuple) {
            *b = sample[i];
        }
        acc.add(kernel.evaluate(&buf));
        remaining -= 1;
        if remaining == 0 || !next_combination(&mut tuple, n) {
            break;
        }
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncompleteEstimate {
    pub estimate: f64,
    pub mc_se: f64,
}

/// Smallest subset count accepted by [`u_statistic_incomplete`].
pub const MIN_SUBSETS: usize = 100;

/// Average of the kernel over `num_subsets` index tuples drawn uniformly.
///
/// Within a tuple indices are distinct; across tuples draws are with
/// replacement, so duplicates may occur. When `exhaustive` is set and
/// `num_subsets ≥ C(n, m)`, the exact statistic is returned instead.
pub fn u_statistic_incomplete<R: Rng + ?Sized>(
    kernel: &Kernel,
    sample: &[f64],
    num_subsets: usize,
    rng: &mut R,
    exhaustive: bool,
) -> Result<IncompleteEstimate> {
    let (n, m) = (sample.len(), kernel.degree());
    check_size(n, m)?;
    if num_subsets < MIN_SUBSETS {
        return Err(Error::invalid(format!(
            "num_subsets must be >= {MIN_SUBSETS}, got {num_subsets}"
        )));
    }
    if exhaustive {
        if let Some(total) = binomial(n, m) {
            if num_subsets as u128 >= total {
                let opts = ExactOptions {
                    cap: u64::MAX,
                    ..ExactOptions::default()
                };
                return Ok(IncompleteEstimate {
                    estimate: u_statistic_exact_with(kernel, sample, &opts)?,
                    mc_se: 0.0,
                });
            }
        }
    }
    let mut idx = vec![0usize; m];
    let mut buf = vec![0.0; m];
    let mut values = Vec::with_capacity(num_subsets);
    for _ in 0..num_subsets {
        draw_distinct(rng, n, &mut idx);
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = sample[i];
        }
        values.push(kernel.evaluate(&buf));
    }
    let estimate = values.iter().copied().collect::<NeumaierSum>().value() / num_subsets as f64;
    let (_, var) = mean_var(&values);
    Ok(IncompleteEstimate {
        estimate,
        mc_se: (var / num_subsets as f64).sqrt(),
    })
}

/// Uniform draw of `out.len()` distinct indices from `0..n`, sorted.
pub(crate) fn draw_distinct<R: Rng + ?Sized>(rng: &mut R, n: usize, out: &mut [usize]) {
    for slot in 0..out.len() {
        loop {
            let c = rng.random_range(0..n);
            if !out[..slot].contains(&c) {
                out[slot] = c;
                break;
            }
        }
    }
    out.sort_unstable();
}

/// U_n^{(i)}: the U-statistic of a canonical kernel h_i.
pub fn component_ustat(order: usize, canonical: &Kernel, sample: &[f64]) -> Result<f64> {
    if canonical.degree() != order {
        return Err(Error::DegreeMismatch {
            expected: order,
            got: canonical.degree(),
        });
    }
    u_statistic_exact(canonical, sample)
}

/// The component U-statistics of the Hoeffding representation of U_h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingComponents {
    pub n: usize,
    pub m: usize,
    /// U_n^{(0)} = 𝐡₀. Zero for a kernel centred under the reference law;
    /// under the plug-in measure it is only approximately zero.
    pub constant: f64,
    /// [U_n^{(1)}, …, U_n^{(m)}]
    pub components: Vec<f64>,
    /// [C(m,1), …, C(m,m)]
    pub binomial_weights: Vec<u64>,
}

impl HoeffdingComponents {
    /// Σ_{i=0}^m C(m,i) U_n^{(i)}.
    pub fn reconstruct(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        acc.add(self.constant);
        for (c, w) in self.components.iter().zip(&self.binomial_weights) {
            acc.add(*w as f64 * c);
        }
        acc.value()
    }
}

/// Compute every component U_n^{(i)} through the canonical kernels h_i.
pub fn hoeffding_reconstruct(
    kernel: &Kernel,
    sample: &[f64],
    reference: &ReferenceMeasure,
) -> Result<HoeffdingComponents> {
    let (n, m) = (sample.len(), kernel.degree());
    check_size(n, m)?;
    let constant = marginal_projection(kernel, 0, &[], reference)?.value;
    let mut components = Vec::with_capacity(m);
    for i in 1..=m {
        let h_i = canonical_kernel(kernel, i, reference)?;
        components.push(component_ustat(i, &h_i, sample)?);
    }
    let binomial_weights = (1..=m)
        .map(|i| binomial(m, i).expect("small binomial") as u64)
        .collect();
    Ok(HoeffdingComponents {
        n,
        m,
        constant,
        components,
        binomial_weights,
    })
}
