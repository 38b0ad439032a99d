//! Symmetric, centred U-statistic kernels and the built-in catalog.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::normal;
use crate::processes::{Family, ProcessSpec};
use crate::rng::StreamKey;

pub type KernelFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Largest degree [`Kernel::symmetrize`] accepts (8! evaluations per call).
pub const MAX_SYMMETRIZE_DEGREE: usize = 8;

/// Minimum Monte Carlo size accepted by [`center`].
pub const MIN_CENTERING_MC: usize = 10_000;

/// First Hoeffding projection of the *centred* kernel, x ↦ E h(x, X₂, …) − θ.
#[derive(Clone)]
pub enum FirstProjection {
    /// Coefficients c₀ + c₁x + c₂x² + …
    Polynomial(Vec<f64>),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl FirstProjection {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FirstProjection::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            FirstProjection::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for FirstProjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FirstProjection::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            FirstProjection::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Closed-form constants of a kernel under a fixed reference law.
#[derive(Debug, Clone)]
pub struct Analytic {
    /// E h(X₁, …, X_m) of the raw (uncentred) kernel.
    pub theta_raw: f64,
    pub h1: Option<FirstProjection>,
    pub var_h1: Option<f64>,
}

/// A degree-m real kernel with optional centring and analytic metadata.
///
/// Cloning is cheap; the evaluation function is shared.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    degree: usize,
    raw: Arc<KernelFn>,
    symmetric: bool,
    offset: f64,
    offset_se: f64,
    moment_order: f64,
    growth: f64,
    analytic: Option<Analytic>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("degree", &self.degree)
            .field("symmetric", &self.symmetric)
            .field("offset", &self.offset)
            .field("moment_order", &self.moment_order)
            .field("analytic", &self.analytic)
            .finish()
    }
}

impl Kernel {
    /// Wrap a function the caller asserts is already symmetric.
    pub fn new<F>(name: impl Into<String>, degree: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if degree == 0 {
            return Err(Error::invalid("kernel degree must be >= 1"));
        }
        Ok(Self {
            name: name.into(),
            degree,
            raw: Arc::new(f),
            symmetric: true,
            offset: 0.0,
            offset_se: 0.0,
            moment_order: 4.0,
            growth: 1.0,
            analytic: None,
        })
    }

    /// Symmetrize an arbitrary m-ary function by averaging over all m!
    /// argument orders.
    ///
    /// The per-order values are sorted before summation so the result is
    /// bitwise invariant under permutation of the arguments.
    pub fn symmetrize<F>(name: impl Into<String>, degree: usize, raw: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if degree > MAX_SYMMETRIZE_DEGREE {
            return Err(Error::invalid(format!(
                "cannot symmetrize degree {degree} > {MAX_SYMMETRIZE_DEGREE}; pre-symmetrize the kernel"
            )));
        }
        let perms = permutations(degree);
        let count = perms.len() as f64;
        Kernel::new(name, degree, move |args: &[f64]| {
            let mut buf = vec![0.0; args.len()];
            let mut vals: Vec<f64> = perms
                .iter()
                .map(|p| {
                    for (slot, &i) in buf.iter_mut().zip(p) {
                        *slot = args[i];
                    }
                    raw(&buf)
                })
                .collect();
            vals.sort_by(f64::total_cmp);
            vals.iter().sum::<f64>() / count
        })
    }

    /// Mark the kernel as not symmetric (for user-supplied functions).
    pub fn asymmetric(mut self) -> Self {
        self.symmetric = false;
        self
    }

    pub fn with_moment_order(mut self, p: f64) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::invalid(format!("moment order must be >= 2, got {p}")));
        }
        self.moment_order = p;
        Ok(self)
    }

    /// Polynomial growth of |h| in each argument; used with a marginal's
    /// moment ceiling to decide whether the L_p norm is finite.
    pub fn with_growth(mut self, g: f64) -> Self {
        self.growth = g;
        self
    }

    pub fn with_analytic(mut self, analytic: Analytic) -> Self {
        self.analytic = Some(analytic);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn centering_offset(&self) -> f64 {
        self.offset
    }

    /// Monte Carlo standard error of the centring offset (0 if analytic).
    pub fn centering_se(&self) -> f64 {
        self.offset_se
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn analytic(&self) -> Option<&Analytic> {
        self.analytic.as_ref()
    }

    /// h(args) − offset. `args.len()` must equal the degree.
    #[inline]
    pub fn evaluate(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.degree);
        (self.raw)(args) - self.offset
    }

    /// Uncentred value.
    #[inline]
    pub fn evaluate_raw(&self, args: &[f64]) -> f64 {
        (self.raw)(args)
    }

    /// Closed-form 𝐡₁ of *this* kernel (accounting for its current offset).
    pub fn first_projection_closed_form(&self, x: f64) -> Option<f64> {
        let a = self.analytic.as_ref()?;
        let h1 = a.h1.as_ref()?;
        Some(h1.eval(x) + a.theta_raw - self.offset)
    }

    /// Closed-form 𝐡₀ = E h − offset.
    pub fn mean_closed_form(&self) -> Option<f64> {
        self.analytic.as_ref().map(|a| a.theta_raw - self.offset)
    }

    /// True when the offset equals the analytic mean.
    pub fn is_analytically_centred(&self) -> bool {
        self.mean_closed_form() == Some(0.0)
    }

    /// Linear combination a·self + b·other on the same degree.
    pub fn combine(&self, a: f64, other: &Kernel, b: f64) -> Result<Kernel> {
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: other.degree,
            });
        }
        let (f, g) = (self.clone(), other.clone());
        let mut k = Kernel::new(
            format!("{a}*{}+{b}*{}", self.name, other.name),
            self.degree,
            move |x: &[f64]| a * f.evaluate(x) + b * g.evaluate(x),
        )?;
        k.symmetric = self.symmetric && other.symmetric;
        Ok(k)
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(m), &mut vec![false; m], &mut out);
    out
}

/// Centre a kernel under the stationary marginal of `reference`.
///
/// Uses the analytic mean when the kernel carries one, otherwise the
/// average of the raw kernel over `mc_size` independent m-tuples.
/// The offset replaces any previous one, so centring twice is idempotent
/// up to Monte Carlo error.
pub fn center(kernel: &Kernel, reference: &ProcessSpec, mc_size: usize, key: StreamKey) -> Result<Kernel> {
    let mut out = kernel.clone();
    if let Some(a) = &kernel.analytic {
        out.offset = a.theta_raw;
        out.offset_se = 0.0;
        return Ok(out);
    }
    if mc_size < MIN_CENTERING_MC {
        return Err(Error::invalid(format!(
            "centring needs mc_size >= {MIN_CENTERING_MC}, got {mc_size}"
        )));
    }
    let m = kernel.degree;
    let mut rng = key.rng();
    let mut vals = Vec::with_capacity(mc_size);
    for _ in 0..mc_size {
        let args = reference.draw_marginal(m, &mut rng);
        let v = kernel.evaluate_raw(&args);
        if !v.is_finite() {
            return Err(Error::NonFinite { value: v, args });
        }
        vals.push(v);
    }
    let (mean, var) = crate::sum::mean_var(&vals);
    out.offset = mean;
    out.offset_se = (var / mc_size as f64).sqrt();
    Ok(out)
}

/// Names of the built-in kernels.
pub const CATALOG: &[(&str, usize, &str)] = &[
    ("mean", 1, "h(x) = x"),
    ("variance", 2, "h(x,y) = (x-y)^2/2"),
    ("gini", 2, "h(x,y) = |x-y|"),
    ("product", 2, "h(x,y) = xy (degenerate for centred marginals)"),
    ("triple", 3, "h(x,y,z) = xyz"),
    ("zero", 2, "h(x,y) = 0"),
];

/// Raw catalog kernels without reference-dependent metadata.
pub fn builtin_catalog() -> Vec<Kernel> {
    CATALOG
        .iter()
        .map(|(name, _, _)| catalog_kernel(name, None).expect("catalog names are valid"))
        .collect()
}

/// A catalog kernel by name; with a reference process, analytic metadata
/// for that process's marginal is attached where a closed form is known.
pub fn catalog_kernel(name: &str, reference: Option<&ProcessSpec>) -> Result<Kernel> {
    let kernel = match name {
        "mean" => Kernel::new(name, 1, |x: &[f64]| x[0])?,
        "variance" => Kernel::new(name, 2, |x: &[f64]| 0.5 * (x[0] - x[1]).powi(2))?.with_growth(2.0),
        "gini" => Kernel::new(name, 2, |x: &[f64]| (x[0] - x[1]).abs())?,
        "product" => Kernel::new(name, 2, |x: &[f64]| x[0] * x[1])?,
        "triple" => Kernel::new(name, 3, |x: &[f64]| {
            let mut s = [x[0], x[1], x[2]];
            s.sort_by(f64::total_cmp);
            s[0] * s[1] * s[2]
        })?,
        "zero" => Kernel::new(name, 2, |_: &[f64]| 0.0)?,
        other => {
            return Err(Error::Config(format!(
                "unknown kernel {other:?}; available: {}",
                CATALOG.iter().map(|c| c.0).collect::<Vec<_>>().join(", ")
            )))
        }
    };
    Ok(match reference.and_then(|r| analytic_for(name, r)) {
        Some(a) => kernel.with_analytic(a),
        None => kernel,
    })
}

fn analytic_for(name: &str, spec: &ProcessSpec) -> Option<Analytic> {
    let mm = spec.marginal_moments();
    let (mu, s2) = (mm.mean, mm.variance);
    let poly = |c: Vec<f64>| Some(FirstProjection::Polynomial(c));
    match name {
        "mean" => Some(Analytic {
            theta_raw: mu,
            h1: poly(vec![-mu, 1.0]),
            var_h1: Some(s2),
        }),
        "variance" => Some(Analytic {
            theta_raw: s2,
            // ((x − μ)² − σ²)/2
            h1: poly(vec![0.5 * (mu * mu - s2), -mu, 0.5]),
            var_h1: mm.central_fourth.map(|m4| 0.25 * (m4 - s2 * s2)),
        }),
        "product" => Some(Analytic {
            theta_raw: mu * mu,
            h1: poly(vec![-mu * mu, mu]),
            var_h1: Some(mu * mu * s2),
        }),
        "triple" => Some(Analytic {
            theta_raw: mu.powi(3),
            h1: poly(vec![-mu.powi(3), mu * mu]),
            var_h1: Some(mu.powi(4) * s2),
        }),
        "zero" => Some(Analytic {
            theta_raw: 0.0,
            h1: poly(vec![0.0]),
            var_h1: Some(0.0),
        }),
        "gini" => match *spec.family() {
            Family::IidUniform { low, high } => {
                let l = high - low;
                // E|x − Y| − L/3 = (x−a)²/L − (x−a) + L/6
                Some(Analytic {
                    theta_raw: l / 3.0,
                    h1: poly(vec![
                        low * low / l + low + l / 6.0,
                        -2.0 * low / l - 1.0,
                        1.0 / l,
                    ]),
                    var_h1: Some(l * l / 180.0),
                })
            }
            _ if spec.has_gaussian_marginal() => {
                let sd = s2.sqrt();
                let theta = 2.0 * sd / std::f64::consts::PI.sqrt();
                // E|x − Y| for Y ~ N(μ, σ²) is σ(2φ(z) + z(2Φ(z) − 1)), z = (x−μ)/σ
                let h1 = move |x: f64| {
                    let z = (x - mu) / sd;
                    sd * (2.0 * normal::pdf(z) + z * (2.0 * normal::cdf(z) - 1.0)) - theta
                };
                Some(Analytic {
                    theta_raw: theta,
                    h1: Some(FirstProjection::Function(Arc::new(h1))),
                    var_h1: None,
                })
            }
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Role;

    #[test]
    fn symmetrizing_antisymmetric_kernel_gives_zero() {
        let k = Kernel::symmetrize("diff", 2, |x: &[f64]| x[0] - x[1]).unwrap();
        for (a, b) in [(1.0, 2.0), (-3.5, 7.25), (0.1, 0.2)] {
            assert_eq!(k.evaluate(&[a, b]), 0.0);
        }
        assert!(k.is_symmetric());
    }

    #[test]
    fn symmetrizing_symmetric_kernel_is_identity() {
        let k = Kernel::symmetrize("prod", 2, |x: &[f64]| x[0] * x[1]).unwrap();
        assert_eq!(k.evaluate(&[3.0, -2.0]), -6.0);
    }

    #[test]
    fn symmetrize_enumerates_both_orders() {
        let k = Kernel::symmetrize("x2y", 2, |x: &[f64]| x[0] * x[0] * x[1]).unwrap();
        assert_eq!(k.evaluate(&[2.0, 3.0]), 15.0);
    }

    #[test]
    fn symmetrize_rejects_large_degree() {
        assert!(Kernel::symmetrize("big", 9, |x: &[f64]| x[0]).is_err());
        assert!(Kernel::symmetrize("ok", 8, |x: &[f64]| x[0]).is_ok());
    }

    #[test]
    fn zero_degree_rejected() {
        assert!(Kernel::new("bad", 0, |_: &[f64]| 0.0).is_err());
    }

    #[test]
    fn catalog_contents() {
        let cat = builtin_catalog();
        let gini = cat.iter().find(|k| k.name() == "gini").unwrap();
        assert_eq!(gini.degree(), 2);
        let var = catalog_kernel("variance", None).unwrap();
        assert_eq!(var.evaluate(&[3.0, 1.0]), 2.0);
        let mean = catalog_kernel("mean", None).unwrap();
        assert_eq!(mean.evaluate(&[5.0]), 5.0);
        assert!(catalog_kernel("nope", None).is_err());
    }

    #[test]
    fn analytic_centring_uses_closed_forms() {
        let unif = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
        let key = StreamKey::new(1, Role::Oracle);
        let gini = catalog_kernel("gini", Some(&unif)).unwrap();
        let c = center(&gini, &unif, MIN_CENTERING_MC, key).unwrap();
        assert!((c.centering_offset() - 1.0 / 3.0).abs() < 1e-15);

        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let var = catalog_kernel("variance", Some(&normal)).unwrap();
        let c = center(&var, &normal, MIN_CENTERING_MC, key).unwrap();
        assert_eq!(c.centering_offset(), 1.0);
        assert_eq!(c.evaluate(&[3.0, 1.0]), 1.0);
    }

    #[test]
    fn centring_a_centred_kernel_is_identity() {
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = catalog_kernel("product", Some(&normal)).unwrap();
        let c = center(&k, &normal, MIN_CENTERING_MC, StreamKey::new(2, Role::Oracle)).unwrap();
        assert_eq!(c.centering_offset(), 0.0);
        assert_eq!(c.evaluate(&[2.0, 3.0]), 6.0);
    }

    #[test]
    fn monte_carlo_centring_of_gini() {
        let unif = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
        let raw = catalog_kernel("gini", None).unwrap();
        let c = center(&raw, &unif, 200_000, StreamKey::new(3, Role::Oracle)).unwrap();
        assert!((c.centering_offset() - 1.0 / 3.0).abs() < 4.0 * c.centering_se());
        assert!(c.centering_se() > 0.0);
    }

    #[test]
    fn centring_requires_enough_draws() {
        let unif = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
        let raw = catalog_kernel("gini", None).unwrap();
        assert!(center(&raw, &unif, 100, StreamKey::new(3, Role::Oracle)).is_err());
    }

    #[test]
    fn non_finite_values_name_the_tuple() {
        let unif = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
        let k = Kernel::new("log0", 1, |x: &[f64]| if x[0] < 0.5 { f64::NAN } else { x[0] }).unwrap();
        match center(&k, &unif, MIN_CENTERING_MC, StreamKey::new(4, Role::Oracle)) {
            Err(Error::NonFinite { args, .. }) => assert!(args[0] < 0.5),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn gini_first_projection_on_uniform() {
        let unif = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
        let k = center(
            &catalog_kernel("gini", Some(&unif)).unwrap(),
            &unif,
            MIN_CENTERING_MC,
            StreamKey::new(5, Role::Oracle),
        )
        .unwrap();
        for (x, want) in [(0.0, 1.0 / 6.0), (0.5, -1.0 / 12.0), (1.0, 1.0 / 6.0)] {
            assert!((k.first_projection_closed_form(x).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_gini_projection_matches_quadrature() {
        // E|x − Y| by midpoint quadrature over the standard normal density
        let normal = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
        let k = catalog_kernel("gini", Some(&normal)).unwrap();
        for x in [-1.5f64, 0.0, 0.7, 2.0] {
            let h = 1e-4;
            let mut acc = 0.0;
            let mut y: f64 = -12.0 + h / 2.0;
            while y < 12.0 {
                acc += (x - y).abs() * normal::pdf(y) * h;
                y += h;
            }
            // raw kernel: 𝐡₁ of the uncentred kernel
            assert!((k.first_projection_closed_form(x).unwrap() - acc).abs() < 1e-7, "x = {x}");
        }
    }
}
