//! Hoeffding projections 𝐡_k and canonical kernels h_i.
//!
//! 𝐡_k(x₁..x_k) integrates the last m−k kernel arguments against a
//! reference measure: either a large independent oracle sample standing in
//! for the true marginal ξ, or the observed sample itself (plug-in).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::combin::{binomial, Combinations};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::processes::ProcessSpec;
use crate::rng::{Role, StreamKey};
use crate::sum::{mean_var, NeumaierSum};
use crate::ustat::{draw_distinct, DEFAULT_ENUMERATION_CAP};

/// Default oracle sample size for true-ξ projections.
pub const DEFAULT_ORACLE_SIZE: usize = 100_000;
/// Smallest oracle sample accepted.
pub const MIN_ORACLE_SIZE: usize = 10_000;
/// Tuples drawn when enumeration over the oracle would exceed the cap.
pub const PROJECTION_MC_TUPLES: usize = 100_000;
/// A component variance must exceed this many standard errors to count
/// as non-degenerate.
pub const DEGENERACY_SE_MULTIPLE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    TrueXi,
    PlugIn,
}

#[derive(Debug, Clone)]
pub struct ReferenceMeasure {
    mode: ProjectionMode,
    oracle: Arc<Vec<f64>>,
    source: Option<String>,
    closed_forms: bool,
    cap: u64,
    mc_seed: u64,
}

/// A value with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl ReferenceMeasure {
    /// Oracle sample of `size` i.i.d. draws from the stationary marginal of
    /// `spec`, independent of any experiment path.
    pub fn true_xi(spec: &ProcessSpec, size: usize, key: StreamKey) -> Result<Self> {
        if size < MIN_ORACLE_SIZE {
            return Err(Error::invalid(format!(
                "oracle sample must have at least {MIN_ORACLE_SIZE} draws, got {size}"
            )));
        }
        let mut oracle = spec.marginal_sample(size, key)?;
        oracle.sort_by(f64::total_cmp);
        Ok(Self {
            mode: ProjectionMode::TrueXi,
            oracle: Arc::new(oracle),
            source: Some(spec.to_string()),
            closed_forms: false,
            cap: DEFAULT_ENUMERATION_CAP,
            mc_seed: key.seed ^ key.index.rotate_left(17),
        })
    }

    /// The empirical measure of the observed sample.
    pub fn plug_in(sample: &[f64]) -> Self {
        let mut oracle = sample.to_vec();
        oracle.sort_by(f64::total_cmp);
        Self {
            mode: ProjectionMode::PlugIn,
            oracle: Arc::new(oracle),
            source: None,
            closed_forms: false,
            cap: DEFAULT_ENUMERATION_CAP,
            mc_seed: 0,
        }
    }

    /// Prefer the kernel's closed-form 𝐡₀ and 𝐡₁ when it carries them
    /// (true-ξ mode only).
    pub fn with_closed_forms(mut self, on: bool) -> Self {
        self.closed_forms = on;
        self
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn oracle_sample(&self) -> &[f64] {
        &self.oracle
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    fn use_closed_forms(&self) -> bool {
        self.closed_forms && self.mode == ProjectionMode::TrueXi
    }
}

fn args_hash(args: &[f64]) -> u64 {
    args.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
        (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3)
    })
}

/// 𝐡_k(args) = ∫ h(args, y_{k+1}, …, y_m) dξ^{m−k}.
///
/// Averages over all distinct-index (m−k)-subsets of the oracle sample
/// when there are at most `cap` of them, otherwise over
/// [`PROJECTION_MC_TUPLES`] random subsets. The Monte Carlo stream is keyed
/// by the arguments, so the result is a deterministic function of them.
pub fn marginal_projection(
    kernel: &Kernel,
    k: usize,
    args: &[f64],
    reference: &ReferenceMeasure,
) -> Result<Estimate> {
    let m = kernel.degree();
    if k > m {
        return Err(Error::invalid(format!("projection order {k} exceeds degree {m}")));
    }
    if args.len() != k {
        return Err(Error::DegreeMismatch {
            expected: k,
            got: args.len(),
        });
    }
    if k == m {
        return Ok(Estimate {
            value: kernel.evaluate(args),
            se: 0.0,
        });
    }
    if reference.use_closed_forms() {
        let closed = match k {
            0 => kernel.mean_closed_form(),
            1 => kernel.first_projection_closed_form(args[0]),
            _ => None,
        };
        if let Some(value) = closed {
            return Ok(Estimate { value, se: 0.0 });
        }
    }

    let oracle = reference.oracle_sample();
    let free = m - k;
    if oracle.len() < free {
        return Err(Error::SampleTooSmall {
            n: oracle.len(),
            m: free,
        });
    }
    let mut buf = vec![0.0; m];
    buf[..k].copy_from_slice(args);
    let enumerable = matches!(binomial(oracle.len(), free), Some(t) if t <= reference.cap as u128);

    let mut values = Vec::new();
    if enumerable {
        for subset in Combinations::new(oracle.len(), free) {
            for (slot, &i) in buf[k..].iter_mut().zip(&subset) {
                *slot = oracle[i];
            }
            values.push(kernel.evaluate(&buf));
        }
    } else {
        let mut rng = StreamKey::new(reference.mc_seed, Role::Probe)
            .block(k as u64)
            .index(args_hash(args))
            .rng();
        let mut idx = vec![0usize; free];
        for _ in 0..PROJECTION_MC_TUPLES {
            draw_distinct(&mut rng, oracle.len(), &mut idx);
            for (slot, &i) in buf[k..].iter_mut().zip(&idx) {
                *slot = oracle[i];
            }
            values.push(kernel.evaluate(&buf));
        }
    }
    let value = values.iter().copied().collect::<NeumaierSum>().value() / values.len() as f64;
    let se = if enumerable && reference.mode == ProjectionMode::PlugIn {
        0.0
    } else {
        let (_, var) = mean_var(&values);
        (var / values.len() as f64).sqrt()
    };
    Ok(Estimate { value, se })
}

/// Evaluate h_i(args) = Σ_{T⊆args} (−1)^{i−|T|} 𝐡_{|T|}(args_T), with a
/// combined standard error treating the projection errors as independent.
fn canonical_eval(
    kernel: &Kernel,
    args: &[f64],
    reference: &ReferenceMeasure,
    h0: Estimate,
) -> Result<Estimate> {
    let i = args.len();
    let mut acc = NeumaierSum::new();
    let mut var = 0.0;
    let mut sub = Vec::with_capacity(i);
    for mask in 0u32..(1u32 << i) {
        let size = mask.count_ones() as usize;
        let term = if size == 0 {
            h0
        } else {
            sub.clear();
            sub.extend((0..i).filter(|b| mask & (1 << b) != 0).map(|b| args[b]));
            marginal_projection(kernel, size, &sub, reference)?
        };
        let sign = if (i - size).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc.add(sign * term.value);
        var += term.se * term.se;
    }
    Ok(Estimate {
        value: acc.value(),
        se: var.sqrt(),
    })
}

/// The canonical kernel h_i of degree `order`, as a new [`Kernel`].
///
/// For `order = 1` this is 𝐡₁ − 𝐡₀.
pub fn canonical_kernel(kernel: &Kernel, order: usize, reference: &ReferenceMeasure) -> Result<Kernel> {
    let m = kernel.degree();
    if order == 0 || order > m {
        return Err(Error::invalid(format!("canonical order must be in 1..={m}, got {order}")));
    }
    let h0 = marginal_projection(kernel, 0, &[], reference)?;
    let (base, reference) = (kernel.clone(), reference.clone());
    Kernel::new(format!("h{order}[{}]", kernel.name()), order, move |args: &[f64]| {
        canonical_eval(&base, args, &reference, h0)
            .expect("orders validated at construction")
            .value
    })
}

/// Smallest i−1 such that Var h_i is detectably positive; m if none is.
///
/// Each component variance is estimated from `probe_size` draws of i
/// distinct oracle points. The projection noise (the mean squared standard
/// error of the h_i evaluations) is subtracted and also added to the
/// uncertainty, so a finite oracle does not make an exactly degenerate
/// component look positive.
pub fn degeneracy_order(
    kernel: &Kernel,
    reference: &ReferenceMeasure,
    probe_size: usize,
    key: StreamKey,
) -> Result<usize> {
    if probe_size < 1000 {
        return Err(Error::invalid(format!("probe_size must be >= 1000, got {probe_size}")));
    }
    let m = kernel.degree();
    let oracle = reference.oracle_sample();
    let h0 = marginal_projection(kernel, 0, &[], reference)?;
    let mut rng = key.rng();
    for order in 1..=m {
        if oracle.len() < order {
            return Err(Error::SampleTooSmall {
                n: oracle.len(),
                m: order,
            });
        }
        let mut idx = vec![0usize; order];
        let mut args = vec![0.0; order];
        let mut values = Vec::with_capacity(probe_size);
        let mut noise = 0.0;
        for _ in 0..probe_size {
            draw_distinct(&mut rng, oracle.len(), &mut idx);
            for (a, &j) in args.iter_mut().zip(&idx) {
                *a = oracle[j];
            }
            let e = canonical_eval(kernel, &args, reference, h0)?;
            values.push(e.value);
            noise += e.se * e.se;
        }
        let n = probe_size as f64;
        noise /= n;
        let test = variance_with_se(&values);
        let excess = test.value - noise;
        let se = (test.se * test.se + noise * noise).sqrt();
        if excess > DEGENERACY_SE_MULTIPLE * se {
            return Ok(order - 1);
        }
    }
    Ok(m)
}

/// Sample variance and its standard error √((μ₄ − s⁴)/n).
pub fn variance_with_se(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let (mean, var) = mean_var(values);
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    Estimate {
        value: var,
        se: ((m4 - var * var).max(0.0) / n).sqrt(),
    }
}

/// L_q norm estimate (E|V|^q)^{1/q} with a delta-method standard error.
pub fn lq_norm(values: &[f64], q: f64) -> Estimate {
    let powered: Vec<f64> = values.iter().map(|v| v.abs().powf(q)).collect();
    let (mean, var) = mean_var(&powered);
    let norm = mean.powf(1.0 / q);
    let se_mean = (var / values.len() as f64).sqrt();
    // d/dμ μ^{1/q} = μ^{1/q − 1}/q
    let se = if mean > 0.0 {
        norm / (q * mean) * se_mean
    } else {
        0.0
    };
    Estimate { value: norm, se }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{catalog_kernel, center, MIN_CENTERING_MC};

    fn centred(name: &str, spec: &ProcessSpec) -> Kernel {
        let k = catalog_kernel(name, Some(spec)).unwrap();
        center(&k, spec, MIN_CENTERING_MC, StreamKey::new(1, Role::Oracle)).unwrap()
    }

    fn oracle(spec: &ProcessSpec, size: usize) -> ReferenceMeasure {
        ReferenceMeasure::true_xi(spec, size, StreamKey::new(77, Role::Oracle)).unwrap()
    }

    #[test]
    fn full_order_projection_is_the_kernel() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = centred("variance", &normal);
        let r = oracle(&normal, MIN_ORACLE_SIZE);
        let e = marginal_projection(&k, 2, &[3.0, 1.0], &r).unwrap();
        assert_eq!(e.value, k.evaluate(&[3.0, 1.0]));
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn order_out_of_range() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = centred("variance", &normal);
        let r = oracle(&normal, MIN_ORACLE_SIZE);
        assert!(marginal_projection(&k, 3, &[1.0, 2.0, 3.0], &r).is_err());
        assert!(canonical_kernel(&k, 0, &r).is_err());
        assert!(canonical_kernel(&k, 3, &r).is_err());
    }

    #[test]
    fn variance_kernel_first_projection_against_oracle() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = centred("variance", &normal);
        let r = oracle(&normal, DEFAULT_ORACLE_SIZE);
        let e = marginal_projection(&k, 1, &[2.0], &r).unwrap();
        assert!((e.value - 1.5).abs() < 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn gini_first_projection_against_oracle() {
        let unif = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
        let k = centred("gini", &unif);
        let r = oracle(&unif, DEFAULT_ORACLE_SIZE);
        for (x, want) in [(0.0, 1.0 / 6.0), (0.5, -1.0 / 12.0), (1.0, 1.0 / 6.0)] {
            let e = marginal_projection(&k, 1, &[x], &r).unwrap();
            assert!((e.value - want).abs() < 4.0 * e.se, "x = {x}: {e:?}");
        }
    }

    #[test]
    fn canonical_first_order_variance_kernel() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = centred("variance", &normal);
        let r = oracle(&normal, DEFAULT_ORACLE_SIZE);
        let h1 = canonical_kernel(&k, 1, &r).unwrap();
        for x in [-1.0, 0.0, 2.0] {
            // 𝐡₁ has SE ≈ sd(h(x,Y))/√N; 𝐡₀ adds a comparable term
            assert!((h1.evaluate(&[x]) - (x * x - 1.0) / 2.0).abs() < 0.03, "x = {x}");
        }
    }

    #[test]
    fn canonical_second_order_is_inclusion_exclusion() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = centred("variance", &normal);
        let r = oracle(&normal, MIN_ORACLE_SIZE).with_closed_forms(true);
        let h2 = canonical_kernel(&k, 2, &r).unwrap();
        let (a, b) = (0.3, -1.7);
        let h1 = |x: f64| (x * x - 1.0) / 2.0;
        let want = k.evaluate(&[a, b]) - h1(a) - h1(b) + 0.0;
        assert!((h2.evaluate(&[a, b]) - want).abs() < 1e-14);
    }

    #[test]
    fn degenerate_product_has_vanishing_first_projection() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = centred("product", &normal);
        let r = oracle(&normal, DEFAULT_ORACLE_SIZE);
        for x in [-1.0, 0.0, 2.0] {
            let e = marginal_projection(&k, 1, &[x], &r).unwrap();
            assert!(e.value.abs() < 4.0 * e.se.max(1e-300) || e.value == 0.0, "x = {x}: {e:?}");
        }
    }

    #[test]
    fn degeneracy_orders() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let key = StreamKey::new(5, Role::Probe);
        for closed in [true, false] {
            let r = oracle(&normal, MIN_ORACLE_SIZE).with_closed_forms(closed);
            assert_eq!(degeneracy_order(&centred("variance", &normal), &r, 1000, key).unwrap(), 0);
            assert_eq!(degeneracy_order(&centred("product", &normal), &r, 1000, key).unwrap(), 1);
            assert_eq!(degeneracy_order(&centred("zero", &normal), &r, 1000, key).unwrap(), 2);
        }
    }

    #[test]
    fn degeneracy_needs_enough_probes() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let r = oracle(&normal, MIN_ORACLE_SIZE);
        assert!(degeneracy_order(&centred("variance", &normal), &r, 10, StreamKey::new(5, Role::Probe)).is_err());
    }

    #[test]
    fn oracle_size_floor() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        assert!(ReferenceMeasure::true_xi(&normal, 100, StreamKey::new(1, Role::Oracle)).is_err());
    }

    #[test]
    fn plug_in_uses_observed_sample() {
        let xs = [3.0, 1.0, 2.0];
        let r = ReferenceMeasure::plug_in(&xs);
        assert_eq!(r.mode(), ProjectionMode::PlugIn);
        assert_eq!(r.oracle_sample(), &[1.0, 2.0, 3.0]);
        let k = catalog_kernel("product", None).unwrap();
        // 𝐡₁(2) = mean of 2·y over y ∈ {1,2,3}
        let e = marginal_projection(&k, 1, &[2.0], &r).unwrap();
        assert_eq!(e.value, 4.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn mc_projection_is_deterministic_in_its_arguments() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = centred("triple", &normal);
        let r = oracle(&normal, MIN_ORACLE_SIZE);
        // C(10⁴, 2) ≈ 5·10⁷ > cap, so this path is Monte Carlo
        let a = marginal_projection(&k, 1, &[0.4], &r).unwrap();
        let b = marginal_projection(&k, 1, &[0.4], &r).unwrap();
        assert_eq!(a, b);
        assert!(a.value.abs() < 4.0 * a.se);
    }
}
