//! Exact one-dimensional Wasserstein-2 distances.
//!
//! In one dimension the optimal coupling is the quantile coupling, so
//! d₂²(F, G) = ∫₀¹ (F⁻¹(u) − G⁻¹(u))² du. Empirical quantile functions are
//! step functions, which makes every distance here a finite sum of
//! closed-form cell integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::sum::NeumaierSum;

pub use crate::normal::inverse_normal_cdf;

/// A sorted real sample viewed as a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    sorted_values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("empirical distribution"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample value {bad}")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            sorted_values: values,
        })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_values.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    /// F⁻¹(u): the i-th order statistic for u ∈ ((i−1)/n, i/n].
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.len();
        let i = (u * n as f64).ceil() as usize;
        self.sorted_values[i.clamp(1, n) - 1]
    }

    pub fn mean(&self) -> f64 {
        crate::sum::sum(&self.sorted_values) / self.len() as f64
    }

    /// n⁻¹ Σ x².
    pub fn second_moment(&self) -> f64 {
        self.sorted_values
            .iter()
            .map(|x| x * x)
            .collect::<NeumaierSum>()
            .value()
            / self.len() as f64
    }
}

/// d₂ between two empirical laws of arbitrary sizes.
///
/// The two quantile step functions are integrated over the common
/// refinement of the grids {i/p} and {j/q}; breakpoints are compared in
/// exact integer arithmetic.
pub fn w2_empirical_empirical(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (xa, xb) = (a.sorted_values(), b.sorted_values());
    let (p, q) = (xa.len() as u128, xb.len() as u128);
    let mut acc = NeumaierSum::new();
    if p == q {
        for (x, y) in xa.iter().zip(xb) {
            acc.add((x - y) * (x - y));
        }
        return (acc.value() / p as f64).sqrt();
    }
    // positions measured in units of 1/(p·q)
    let (mut i, mut j, mut pos) = (0usize, 0usize, 0u128);
    while i < xa.len() && j < xb.len() {
        let end_a = (i as u128 + 1) * q;
        let end_b = (j as u128 + 1) * p;
        let end = end_a.min(end_b);
        let d = xa[i] - xb[j];
        acc.add((end - pos) as f64 * d * d);
        pos = end;
        if end == end_a {
            i += 1;
        }
        if end == end_b {
            j += 1;
        }
    }
    (acc.value() / (p * q) as f64).sqrt()
}

/// d₂ between an empirical law and N(0, σ²), in closed form per cell.
///
/// On the cell ((i−1)/n, i/n] with z-bounds z₀ < z₁,
/// ∫ z φ = φ(z₀) − φ(z₁) and ∫ z² φ = 1/n − (z₁φ(z₁) − z₀φ(z₀)), where the
/// infinite end points of the outer cells contribute zero.
pub fn w2_empirical_gaussian(a: &EmpiricalDistribution, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(w2_sq_empirical_gaussian(a, sigma).sqrt())
}

fn cell_boundary(i: usize, n: usize) -> f64 {
    if i == 0 {
        f64::NEG_INFINITY
    } else if i == n {
        f64::INFINITY
    } else if 2 * i <= n {
        normal::quantile(i as f64 / n as f64)
    } else {
        -normal::quantile((n - i) as f64 / n as f64)
    }
}

fn phi_and_zphi(z: f64) -> (f64, f64) {
    if z.is_infinite() {
        (0.0, 0.0)
    } else {
        let p = normal::pdf(z);
        (p, z * p)
    }
}

fn w2_sq_empirical_gaussian(a: &EmpiricalDistribution, sigma: f64) -> f64 {
    let xs = a.sorted_values();
    let n = xs.len();
    let inv_n = 1.0 / n as f64;
    let mut acc = NeumaierSum::new();
    let (mut phi0, mut zphi0) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let z1 = cell_boundary(i + 1, n);
        let (phi1, zphi1) = phi_and_zphi(z1);
        let m1 = phi0 - phi1;
        let m2 = inv_n - (zphi1 - zphi0);
        // (x − σ·E[Z | cell])²/n + σ²·(within-cell second moment)
        let centre = m1 * n as f64;
        let within = (m2 - m1 * centre).max(0.0);
        let d = x - sigma * centre;
        acc.add(d * d * inv_n + sigma * sigma * within);
        phi0 = phi1;
        zphi0 = zphi1;
    }
    acc.value().max(0.0)
}

/// d₂ between N(0, σ_a²) and N(0, σ_b²).
pub fn w2_gaussian_gaussian(sigma_a: f64, sigma_b: f64) -> Result<f64> {
    if !(sigma_a > 0.0 && sigma_b > 0.0) {
        return Err(Error::invalid("Gaussian scales must be > 0"));
    }
    Ok((sigma_a - sigma_b).abs())
}

/// d₂ to the point mass at `c`: the root-mean-square deviation from `c`.
pub fn w2_empirical_point(a: &EmpiricalDistribution, c: f64) -> f64 {
    let s: NeumaierSum = a.sorted_values().iter().map(|x| (x - c) * (x - c)).collect();
    (s.value() / a.len() as f64).sqrt()
}

/// d₂ to N(0, σ²), falling back to the point mass at 0 when σ = 0.
pub fn w2_to_centred_normal(a: &EmpiricalDistribution, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        Ok(w2_empirical_point(a, 0.0))
    } else {
        w2_empirical_gaussian(a, sigma)
    }
}
