//! Strictly stationary scalar data generators with certified mixing rates.
//!
//! Mixing rates are never estimated: each family carries the rate that is
//! known analytically (β ≡ 0 for i.i.d., β(n) = 0 beyond lag q for MA(q),
//! geometric decay for a Gaussian AR(1)). A spec may additionally carry a
//! *declared* polynomial rate, which turns it into a mixing spec for the
//! purpose of [`theorem_applicability`]; this exists for negative controls.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{FirstProjection, Kernel};
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    IidNormal { mean: f64, sd: f64 },
    IidUniform { low: f64, high: f64 },
    IidPareto { shape: f64, scale: f64 },
    Ar1Gaussian { phi: f64, innovation_sd: f64 },
    MaGaussian { coefficients: Vec<f64> },
}

/// Certified decay of the β-mixing coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRate {
    ExactZero,
    QDependent { q: usize },
    Geometric { rho: f64 },
    /// β(n) = O(n^{-r}); declared, not derived from the family.
    Polynomial { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalMoments {
    pub mean: f64,
    pub variance: f64,
    /// E[(X − μ)⁴], when finite.
    pub central_fourth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProcessSpec {
    family: Family,
    declared_rate: Option<f64>,
}

impl ProcessSpec {
    pub fn new(family: Family) -> Result<Self> {
        let spec = Self {
            family,
            declared_rate: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn iid_normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(Family::IidNormal { mean, sd })
    }

    pub fn iid_uniform(low: f64, high: f64) -> Result<Self> {
        Self::new(Family::IidUniform { low, high })
    }

    pub fn iid_pareto(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::IidPareto { shape, scale })
    }

    pub fn ar1_gaussian(phi: f64, innovation_sd: f64) -> Result<Self> {
        Self::new(Family::Ar1Gaussian { phi, innovation_sd })
    }

    pub fn ma_gaussian(coefficients: Vec<f64>) -> Result<Self> {
        Self::new(Family::MaGaussian { coefficients })
    }

    /// Attach a declared polynomial mixing rate β(n) = O(n^{-r}).
    pub fn with_declared_rate(mut self, r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("declared rate r must be > 0, got {r}")));
        }
        self.declared_rate = Some(r);
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be finite")))
            }
        };
        match &self.family {
            Family::IidNormal { mean, sd } => {
                finite(*mean, "mean")?;
                if !(*sd > 0.0 && sd.is_finite()) {
                    return Err(Error::invalid("iid_normal requires sd > 0"));
                }
            }
            Family::IidUniform { low, high } => {
                finite(*low, "low")?;
                finite(*high, "high")?;
                if low >= high {
                    return Err(Error::invalid("iid_uniform requires low < high"));
                }
            }
            Family::IidPareto { shape, scale } => {
                if !(*shape > 2.0 && shape.is_finite()) {
                    return Err(Error::invalid(
                        "iid_pareto requires shape > 2 for finite variance",
                    ));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::invalid("iid_pareto requires scale > 0"));
                }
            }
            Family::Ar1Gaussian { phi, innovation_sd } => {
                if phi.is_nan() || phi.abs() >= 1.0 {
                    return Err(Error::invalid("ar1_gaussian requires |phi| < 1"));
                }
                if !(*innovation_sd > 0.0 && innovation_sd.is_finite()) {
                    return Err(Error::invalid("ar1_gaussian requires innovation sd > 0"));
                }
            }
            Family::MaGaussian { coefficients } => {
                if coefficients.is_empty() {
                    return Err(Error::invalid("ma_q_gaussian requires at least one coefficient"));
                }
                for &c in coefficients {
                    finite(c, "MA coefficient")?;
                }
                if coefficients.iter().all(|&c| c == 0.0) {
                    return Err(Error::invalid("ma_q_gaussian coefficients are all zero"));
                }
            }
        }
        Ok(())
    }

    /// True when the data are i.i.d. and no mixing rate was declared.
    pub fn is_iid(&self) -> bool {
        self.declared_rate.is_none()
            && matches!(
                self.family,
                Family::IidNormal { .. } | Family::IidUniform { .. } | Family::IidPareto { .. }
            )
    }

    pub fn beta_rate(&self) -> BetaRate {
        if let Some(r) = self.declared_rate {
            return BetaRate::Polynomial { r };
        }
        match &self.family {
            Family::IidNormal { .. } | Family::IidUniform { .. } | Family::IidPareto { .. } => {
                BetaRate::ExactZero
            }
            Family::Ar1Gaussian { phi, .. } => BetaRate::Geometric { rho: phi.abs() },
            Family::MaGaussian { coefficients } => BetaRate::QDependent {
                q: coefficients.len() - 1,
            },
        }
    }

    /// Largest r with β(n) = O(n^{-r}); infinite for geometric or faster.
    pub fn r_exponent(&self) -> f64 {
        match self.beta_rate() {
            BetaRate::Polynomial { r } => r,
            _ => f64::INFINITY,
        }
    }

    /// Moments of order ≥ this value are infinite (Pareto shape).
    pub fn moment_ceiling(&self) -> Option<f64> {
        match self.family {
            Family::IidPareto { shape, .. } => Some(shape),
            _ => None,
        }
    }

    pub fn has_gaussian_marginal(&self) -> bool {
        matches!(
            self.family,
            Family::IidNormal { .. } | Family::Ar1Gaussian { .. } | Family::MaGaussian { .. }
        )
    }

    fn stationary_variance(&self) -> f64 {
        self.autocovariance(0).expect("lag-0 autocovariance always known")
    }

    pub fn marginal_moments(&self) -> MarginalMoments {
        match self.family {
            Family::IidNormal { mean, sd } => MarginalMoments {
                mean,
                variance: sd * sd,
                central_fourth: Some(3.0 * sd.powi(4)),
            },
            Family::IidUniform { low, high } => {
                let l = high - low;
                MarginalMoments {
                    mean: 0.5 * (low + high),
                    variance: l * l / 12.0,
                    central_fourth: Some(l.powi(4) / 80.0),
                }
            }
            Family::IidPareto { shape, scale } => {
                let raw = |k: i32| shape * scale.powi(k) / (shape - k as f64);
                let mu = raw(1);
                let central_fourth = (shape > 4.0).then(|| {
                    raw(4) - 4.0 * mu * raw(3) + 6.0 * mu * mu * raw(2) - 3.0 * mu.powi(4)
                });
                MarginalMoments {
                    mean: mu,
                    variance: raw(2) - mu * mu,
                    central_fourth,
                }
            }
            Family::Ar1Gaussian { .. } | Family::MaGaussian { .. } => {
                let g0 = self.stationary_variance();
                MarginalMoments {
                    mean: 0.0,
                    variance: g0,
                    central_fourth: Some(3.0 * g0 * g0),
                }
            }
        }
    }

    /// Closed-form autocovariance γ_k.
    pub fn autocovariance(&self, lag: usize) -> Option<f64> {
        match &self.family {
            Family::IidNormal { .. } | Family::IidUniform { .. } | Family::IidPareto { .. } => {
                Some(if lag == 0 {
                    self.marginal_moments().variance
                } else {
                    0.0
                })
            }
            Family::Ar1Gaussian { phi, innovation_sd } => {
                let g0 = innovation_sd * innovation_sd / (1.0 - phi * phi);
                Some(phi.powi(lag as i32) * g0)
            }
            Family::MaGaussian { coefficients } => Some(
                coefficients
                    .iter()
                    .zip(coefficients.iter().skip(lag))
                    .map(|(a, b)| a * b)
                    .sum(),
            ),
        }
    }

    /// A length-`n` path from the stationary law.
    pub fn sample_path(&self, n: usize, key: StreamKey) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("path length must be >= 1"));
        }
        let mut rng = key.rng();
        Ok(self.draw_path(n, &mut rng))
    }

    pub(crate) fn draw_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match &self.family {
            Family::Ar1Gaussian { phi, innovation_sd } => {
                let mut out = Vec::with_capacity(n);
                let z: f64 = rng.sample(StandardNormal);
                let mut x = z * self.stationary_variance().sqrt();
                out.push(x);
                for _ in 1..n {
                    let e: f64 = rng.sample(StandardNormal);
                    x = phi * x + innovation_sd * e;
                    out.push(x);
                }
                out
            }
            Family::MaGaussian { coefficients } => {
                let q = coefficients.len() - 1;
                let innovations: Vec<f64> = (0..n + q).map(|_| rng.sample(StandardNormal)).collect();
                (0..n)
                    .map(|t| {
                        // X_t = Σ_j θ_j ε_{t-j}; innovations[t + q] is ε_t
                        coefficients
                            .iter()
                            .enumerate()
                            .map(|(j, c)| c * innovations[t + q - j])
                            .sum()
                    })
                    .collect()
            }
            _ => self.draw_marginal(n, rng),
        }
    }

    /// `n` i.i.d. draws from the stationary marginal.
    pub fn marginal_sample(&self, n: usize, key: StreamKey) -> Result<Vec<f64>> {
        let mut rng = key.rng();
        Ok(self.draw_marginal(n, &mut rng))
    }

    pub(crate) fn draw_marginal<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self.family {
            Family::IidNormal { mean, sd } => (0..n)
                .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Family::IidUniform { low, high } => {
                let dist = Uniform::new(low, high).expect("validated bounds");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            Family::IidPareto { shape, scale } => {
                let dist = Pareto::new(scale, shape).expect("validated parameters");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            Family::Ar1Gaussian { .. } | Family::MaGaussian { .. } => {
                let sd = self.stationary_variance().sqrt();
                (0..n)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        }
    }
}

impl fmt::Display for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::IidNormal { mean, sd } => write!(f, "iid_normal({mean},{sd})")?,
            Family::IidUniform { low, high } => write!(f, "iid_uniform({low},{high})")?,
            Family::IidPareto { shape, scale } => write!(f, "iid_pareto({shape},{scale})")?,
            Family::Ar1Gaussian { phi, innovation_sd } => {
                write!(f, "ar1_gaussian({phi},{innovation_sd})")?
            }
            Family::MaGaussian { coefficients } => {
                let parts: Vec<String> = coefficients.iter().map(|c| c.to_string()).collect();
                write!(f, "ma_q_gaussian({})", parts.join(","))?
            }
        }
        if let Some(r) = self.declared_rate {
            write!(f, "@poly({r})")?;
        }
        Ok(())
    }
}

fn parse_call(s: &str) -> Result<(&str, Vec<f64>)> {
    let s = s.trim();
    let open = s
        .find('(')
        .ok_or_else(|| Error::Config(format!("expected name(args) in {s:?}")))?;
    let body = s[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::Config(format!("missing ')' in {s:?}")))?;
    let args = body
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| {
            a.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {a:?} in {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((s[..open].trim(), args))
}

impl FromStr for ProcessSpec {
    type Err = Error;

    /// Parses `family(args)` with an optional `@poly(r)` suffix, e.g.
    /// `ar1_gaussian(0.5,1)` or `iid_pareto(2.5,1)@poly(3)`.
    fn from_str(s: &str) -> Result<Self> {
        let (base, rate) = match s.split_once('@') {
            Some((b, r)) => (b, Some(r)),
            None => (s, None),
        };
        let (name, args) = parse_call(base)?;
        let want = |k: usize| {
            if args.len() == k {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} takes {k} arguments, got {}",
                    args.len()
                )))
            }
        };
        let family = match name {
            "iid_normal" => {
                want(2)?;
                Family::IidNormal {
                    mean: args[0],
                    sd: args[1],
                }
            }
            "iid_uniform" => {
                want(2)?;
                Family::IidUniform {
                    low: args[0],
                    high: args[1],
                }
            }
            "iid_pareto" => {
                want(2)?;
                Family::IidPareto {
                    shape: args[0],
                    scale: args[1],
                }
            }
            "ar1_gaussian" => {
                want(2)?;
                Family::Ar1Gaussian {
                    phi: args[0],
                    innovation_sd: args[1],
                }
            }
            "ma_q_gaussian" => Family::MaGaussian {
                coefficients: args,
            },
            other => return Err(Error::Config(format!("unknown process family {other:?}"))),
        };
        let spec = ProcessSpec::new(family).map_err(|e| Error::Config(e.to_string()))?;
        match rate {
            None => Ok(spec),
            Some(r) => {
                let (tag, args) = parse_call(r)?;
                if tag != "poly" || args.len() != 1 {
                    return Err(Error::Config(format!("expected @poly(r), got {r:?}")));
                }
                spec.with_declared_rate(args[0])
                    .map_err(|e| Error::Config(e.to_string()))
            }
        }
    }
}

impl TryFrom<String> for ProcessSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProcessSpec> for String {
    fn from(p: ProcessSpec) -> String {
        p.to_string()
    }
}

/// Which branch of the theorem's hypotheses applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Iid,
    Mixing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Applicability {
    pub applicable: bool,
    pub case: Case,
    /// m·p/(p−2), when p > 2.
    pub threshold: Option<f64>,
    pub binding: String,
}

/// m·p/(p−2): the mixing exponent r must exceed this.
pub fn mixing_threshold(m: usize, p: f64) -> Option<f64> {
    (p > 2.0).then(|| m as f64 * p / (p - 2.0))
}

/// Check the moment and mixing-rate hypotheses for (spec, kernel).
///
/// Only the order of the mixing rate is checked; constants are free.
pub fn theorem_applicability(spec: &ProcessSpec, kernel: &Kernel) -> Applicability {
    let m = kernel.degree();
    let p = kernel.moment_order();
    let threshold = mixing_threshold(m, p);
    let case = if spec.is_iid() { Case::Iid } else { Case::Mixing };

    if let Some(ceiling) = spec.moment_ceiling() {
        let needed = p * kernel.growth();
        if needed >= ceiling {
            return Applicability {
                applicable: false,
                case,
                threshold,
                binding: format!(
                    "L_p norm of the kernel is infinite: p = {p} with growth {} needs moments of order {needed} but the marginal has them only below {ceiling}",
                    kernel.growth()
                ),
            };
        }
    }

    match case {
        Case::Iid => {
            let applicable = p >= 2.0;
            Applicability {
                applicable,
                case,
                threshold,
                binding: if applicable {
                    format!("i.i.d. with finite L_{p} norm, p >= 2")
                } else {
                    format!("i.i.d. but p = {p} < 2")
                },
            }
        }
        Case::Mixing => {
            let r = spec.r_exponent();
            match threshold {
                None => Applicability {
                    applicable: false,
                    case,
                    threshold,
                    binding: format!("mixing data need p > 2, got p = {p}"),
                },
                Some(t) => {
                    let applicable = r > t;
                    Applicability {
                        applicable,
                        case,
                        threshold,
                        binding: format!(
                            "mixing exponent r = {r} {} threshold m*p/(p-2) = {t}",
                            if applicable { ">" } else { "<=" }
                        ),
                    }
                }
            }
        }
    }
}

/// Closed-form m²·(γ₀ + 2Σγ_k) for the first projection series h₁(X_k).
///
/// Registered cases: any h₁ with known variance on i.i.d. data, and a
/// polynomial h₁ of degree ≤ 2 on a zero-mean Gaussian AR(1) or MA(q).
pub fn long_run_variance_analytic(spec: &ProcessSpec, kernel: &Kernel) -> Option<f64> {
    let analytic = kernel.analytic()?;
    let m2 = (kernel.degree() * kernel.degree()) as f64;
    match spec.family() {
        Family::IidNormal { .. } | Family::IidUniform { .. } | Family::IidPareto { .. } => {
            analytic.var_h1.map(|v| m2 * v)
        }
        Family::Ar1Gaussian { phi, .. } => {
            let (c1, c2) = quadratic_coefficients(analytic.h1.as_ref()?)?;
            let g0 = spec.autocovariance(0)?;
            // Σ_{k∈ℤ} γ_k and Σ_{k∈ℤ} γ_k² for γ_k = γ₀ φ^|k|
            let sum_g = g0 * (1.0 + phi) / (1.0 - phi);
            let sum_g2 = g0 * g0 * (1.0 + phi * phi) / (1.0 - phi * phi);
            Some(m2 * (c1 * c1 * sum_g + 2.0 * c2 * c2 * sum_g2))
        }
        Family::MaGaussian { coefficients } => {
            let (c1, c2) = quadratic_coefficients(analytic.h1.as_ref()?)?;
            let q = coefficients.len() - 1;
            let (mut sum_g, mut sum_g2) = (0.0, 0.0);
            for lag in 0..=q {
                let g = spec.autocovariance(lag)?;
                let w = if lag == 0 { 1.0 } else { 2.0 };
                sum_g += w * g;
                sum_g2 += w * g * g;
            }
            Some(m2 * (c1 * c1 * sum_g + 2.0 * c2 * c2 * sum_g2))
        }
    }
}

// (linear, quadratic) coefficients of a polynomial h₁ of degree ≤ 2.
// For zero-mean Gaussian X: Cov(h₁(X₀), h₁(X_k)) = c₁²γ_k + 2c₂²γ_k².
fn quadratic_coefficients(h1: &FirstProjection) -> Option<(f64, f64)> {
    match h1 {
        FirstProjection::Polynomial(c) if c.len() <= 3 => Some((
            c.get(1).copied().unwrap_or(0.0),
            c.get(2).copied().unwrap_or(0.0),
        )),
        _ => None,
    }
}
