//! Positive definite kernels: zonal series kernels on `S^d` and radial
//! kernels on `R^d`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EuclidPoint, Point, SpherePoint};
use crate::linalg::SymmetricMatrix;
use crate::orthopoly::{AdditionFamily, ProfileFamily, RadialProfile};
use crate::scalar::Real;

/// Relative truncation tail targeted when `N_max` is chosen automatically.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Cap on an automatically chosen truncation degree.
pub fn default_truncation_cap(d: usize) -> usize {
    match d {
        1 => 2000,
        2 => 400,
        _ => 200,
    }
}

/// A symmetric positive definite kernel `φ(d(x, y))`.
pub trait Kernel<T: Real>: Clone + Send + Sync {
    type Point: Point<T>;

    /// Kernel value; assumes matching dimensions.
    fn eval(&self, x: &Self::Point, y: &Self::Point) -> T;

    /// `φ(0)`, the value on the diagonal.
    fn value_at_origin(&self) -> T;

    /// Number of ambient coordinates of admissible points.
    fn ambient_dim(&self) -> usize;

    fn validate(&self) -> ValidationReport;

    fn spec(&self) -> KernelSpec;

    /// Gram matrix `A_ij = φ(d(y_i, y_j))`.
    fn gram(&self, points: &[Self::Point]) -> SymmetricMatrix<T> {
        use rayon::prelude::*;
        let n = points.len();
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| (0..=i).map(|j| self.eval(&points[i], &points[j])).collect())
            .collect();
        SymmetricMatrix::from_fn(n, |i, j| rows[i][j])
    }
}

/// Kernel evaluation with a dimension check.
pub fn kernel_eval<T: Real, K: Kernel<T>>(k: &K, x: &K::Point, y: &K::Point) -> Result<T> {
    for p in [x, y] {
        if p.ambient_dim() != k.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: k.ambient_dim(),
                found: p.ambient_dim(),
            });
        }
    }
    Ok(k.eval(x, y))
}

/// Outcome of an admissibility check. Failures are collected, not raised.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub admissible: bool,
    pub failures: Vec<String>,
    /// Degrees with `a_n <= 0`.
    pub positivity_failures: Vec<usize>,
    /// `2τ - d` for power-law series kernels.
    pub summability_margin: Option<f64>,
    /// Estimated `Σ_{n>N_max} d_n a_n / Σ_{n<=N_max} d_n a_n`.
    pub truncation_tail: Option<f64>,
    /// `s - d/2` for radial kernels.
    pub smoothness_margin: Option<f64>,
}

impl ValidationReport {
    fn finish(mut self) -> Self {
        self.admissible = self.failures.is_empty();
        self
    }

    pub fn into_result(self) -> Result<Self> {
        if self.admissible {
            Ok(self)
        } else {
            Err(Error::InadmissibleKernel(self.failures.join("; ")))
        }
    }
}

pub fn validate_kernel<T: Real, K: Kernel<T>>(k: &K) -> ValidationReport {
    k.validate()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum CoefficientRule {
    /// `a_n = A (1+n)^{-2τ}`.
    PowerLaw { amplitude: f64, tau: f64 },
    Explicit { coeffs: Vec<f64> },
}

/// Zonal kernel `φ(x·y) = Σ_{n<=N_max} a_n C̃_n(x·y)` on `S^d`.
///
/// The truncated series is the kernel: Gram matrices, native norms and
/// every spectral quantity use the same `N_max`.
#[derive(Debug, Clone)]
pub struct SphereSeriesKernel<T> {
    rule: CoefficientRule,
    coeffs: Vec<T>,
    family: AdditionFamily<T>,
    weights: Vec<T>,
    phi0: T,
}

impl<T: Real> SphereSeriesKernel<T> {
    /// Builds without checking admissibility.
    pub fn from_rule(d: usize, rule: CoefficientRule, n_max: usize) -> Result<Self> {
        let coeffs: Vec<T> = match &rule {
            CoefficientRule::PowerLaw { amplitude, tau } => (0..=n_max)
                .map(|n| T::lit(amplitude * (1.0 + n as f64).powf(-2.0 * tau)))
                .collect(),
            CoefficientRule::Explicit { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::InvalidArgument("explicit coefficient list is empty".into()));
                }
                coeffs.iter().map(|&c| T::lit(c)).collect()
            }
        };
        let n_max = coeffs.len() - 1;
        let family = AdditionFamily::new(d, n_max)?;
        let weights = family.to_weights(&coeffs);
        let phi0 = weights.iter().copied().sum();
        Ok(Self {
            rule,
            coeffs,
            family,
            weights,
            phi0,
        })
    }

    /// Power-law kernel `a_n = A (1+n)^{-2τ}`.
    ///
    /// With `n_max = None` the smallest degree whose relative tail is below
    /// [`TAIL_TOLERANCE`] is used, capped at [`default_truncation_cap`].
    pub fn power_law(d: usize, amplitude: f64, tau: f64, n_max: Option<usize>) -> Result<Self> {
        let n_max = match n_max {
            Some(n) => n,
            None => auto_truncation(d, amplitude, tau)?,
        };
        let k = Self::from_rule(d, CoefficientRule::PowerLaw { amplitude, tau }, n_max)?;
        k.validate().into_result()?;
        Ok(k)
    }

    pub fn explicit(d: usize, coeffs: Vec<f64>) -> Result<Self> {
        let n = coeffs.len().saturating_sub(1);
        let k = Self::from_rule(d, CoefficientRule::Explicit { coeffs }, n)?;
        k.validate().into_result()?;
        Ok(k)
    }

    pub fn d(&self) -> usize {
        self.family.d()
    }

    pub fn n_max(&self) -> usize {
        self.family.n_max()
    }

    pub fn rule(&self) -> &CoefficientRule {
        &self.rule
    }

    /// `a_0..a_{N_max}`.
    pub fn coefficients(&self) -> &[T] {
        &self.coeffs
    }

    pub fn family(&self) -> &AdditionFamily<T> {
        &self.family
    }

    /// Recurrence weights `a_n d_n`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `φ` as a function of `t = x·y`.
    #[inline]
    pub fn eval_t(&self, t: T) -> T {
        self.family.weighted_sum(&self.weights, t)
    }
}

fn auto_truncation(d: usize, amplitude: f64, tau: f64) -> Result<usize> {
    if !(2.0 * tau > d as f64) {
        return Err(Error::InadmissibleKernel(format!(
            "power law needs 2τ > d (τ = {tau}, d = {d})"
        )));
    }
    let cap = default_truncation_cap(d);
    let fam = crate::orthopoly::SphereBasisTable::new(d, cap)?;
    let mut head = 0.0;
    for n in 0..=cap {
        head += fam.dims[n] as f64 * amplitude * (1.0 + n as f64).powf(-2.0 * tau);
        if power_law_tail(d, amplitude, tau, n) / head < TAIL_TOLERANCE {
            return Ok(n);
        }
    }
    Ok(cap)
}

/// Estimate of `Σ_{n>N} d_n a_n` for the power law: explicit summation up to
/// `M = max(4N, N + 1000)` plus the integral `∫_M^∞ 2x^{d-1}/(d-1)! · A x^{-2τ} dx`.
pub fn power_law_tail(d: usize, amplitude: f64, tau: f64, n_max: usize) -> f64 {
    if !(2.0 * tau > d as f64) {
        return f64::INFINITY;
    }
    let m = (4 * n_max).max(n_max + 1000);
    let mut sum = 0.0;
    for n in n_max + 1..=m {
        sum += crate::orthopoly::harmonic_dimension(d, n) as f64
            * amplitude
            * (1.0 + n as f64).powf(-2.0 * tau);
    }
    let lead = if d == 1 {
        2.0
    } else {
        2.0 / (1..d).map(|k| k as f64).product::<f64>()
    };
    let p = 2.0 * tau - d as f64;
    sum + lead * amplitude * (m as f64).powf(-p) / p
}

impl<T: Real> Kernel<T> for SphereSeriesKernel<T> {
    type Point = SpherePoint<T>;

    #[inline]
    fn eval(&self, x: &SpherePoint<T>, y: &SpherePoint<T>) -> T {
        self.eval_t(x.dot(y))
    }

    fn value_at_origin(&self) -> T {
        self.phi0
    }

    fn ambient_dim(&self) -> usize {
        self.d() + 1
    }

    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        for (n, &a) in self.coeffs.iter().enumerate() {
            if !(a > T::zero()) {
                r.positivity_failures.push(n);
            }
        }
        if !r.positivity_failures.is_empty() {
            r.failures.push(format!(
                "coefficients not positive at n = {:?}",
                r.positivity_failures
            ));
        }
        if let CoefficientRule::PowerLaw { amplitude, tau } = self.rule {
            let margin = 2.0 * tau - self.d() as f64;
            r.summability_margin = Some(margin);
            if !(margin > 0.0) {
                r.failures.push(format!(
                    "series Σ d_n a_n diverges: 2τ - d = {margin} must be positive"
                ));
            } else {
                let head = self.phi0.to_f64_lossy();
                r.truncation_tail = Some(power_law_tail(self.d(), amplitude, tau, self.n_max()) / head);
            }
            if !(amplitude > 0.0) {
                r.failures.push("amplitude A must be positive".into());
            }
        }
        r.finish()
    }

    fn spec(&self) -> KernelSpec {
        match &self.rule {
            CoefficientRule::PowerLaw { amplitude, tau } => KernelSpec::PowerLaw {
                d: self.d(),
                tau: *tau,
                amplitude: *amplitude,
                n_max: Some(self.n_max()),
            },
            CoefficientRule::Explicit { coeffs } => KernelSpec::Series {
                d: self.d(),
                coeffs: coeffs.clone(),
            },
        }
    }

    fn gram(&self, points: &[SpherePoint<T>]) -> SymmetricMatrix<T> {
        use rayon::prelude::*;
        const B: usize = 8;
        let n = points.len();
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = Vec::with_capacity(i + 1);
                let mut j = 0;
                while j + B <= i + 1 {
                    let ts: [T; B] = std::array::from_fn(|b| points[i].dot(&points[j + b]));
                    let [v] = self.family.weighted_sums_block([&self.weights[..]], ts);
                    row.extend_from_slice(&v);
                    j += B;
                }
                for jj in j..=i {
                    row.push(self.eval(&points[i], &points[jj]));
                }
                row
            })
            .collect();
        SymmetricMatrix::from_fn(n, |i, j| rows[i][j])
    }
}

/// Radial kernel `φ(|x - y|)` on `R^d`.
#[derive(Debug, Clone, Copy)]
pub struct EuclidRadialKernel<T> {
    profile: RadialProfile<T>,
    d: usize,
}

impl<T: Real> EuclidRadialKernel<T> {
    /// Builds without checking `s > d/2`.
    pub fn new_unchecked(profile: RadialProfile<T>, d: usize) -> Self {
        Self { profile, d }
    }

    pub fn new(profile: RadialProfile<T>, d: usize) -> Result<Self> {
        let k = Self::new_unchecked(profile, d);
        k.validate().into_result()?;
        Ok(k)
    }

    pub fn profile(&self) -> &RadialProfile<T> {
        &self.profile
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Sobolev exponent `s` of the native space.
    pub fn smoothness(&self) -> T {
        self.profile.s
    }
}

impl<T: Real> Kernel<T> for EuclidRadialKernel<T> {
    type Point = EuclidPoint<T>;

    #[inline]
    fn eval(&self, x: &EuclidPoint<T>, y: &EuclidPoint<T>) -> T {
        self.profile.eval(x.distance(y))
    }

    fn value_at_origin(&self) -> T {
        self.profile.eval(T::zero())
    }

    fn ambient_dim(&self) -> usize {
        self.d
    }

    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        if self.d == 0 {
            r.failures.push("ambient dimension must be positive".into());
        }
        let margin = self.profile.s.to_f64_lossy() - self.d as f64 / 2.0;
        r.smoothness_margin = Some(margin);
        if !(margin > 0.0) {
            r.failures.push(format!(
                "native space not continuously embedded: s - d/2 = {margin} must be positive"
            ));
        }
        if let ProfileFamily::Wendland { d: wd, .. } = self.profile.family {
            if wd < self.d {
                r.failures.push(format!(
                    "wendland profile for d = {wd} is not positive definite in R^{}",
                    self.d
                ));
            }
        }
        r.finish()
    }

    fn spec(&self) -> KernelSpec {
        let rho = self.profile.rho.to_f64_lossy();
        match self.profile.family {
            ProfileFamily::Wendland { d: wd, k } => KernelSpec::Wendland {
                d: self.d,
                wendland_d: wd,
                k,
                rho,
            },
            ProfileFamily::Matern { m } => KernelSpec::Matern {
                d: self.d,
                m,
                rho,
                s: self.profile.s.to_f64_lossy(),
            },
        }
    }
}

/// Declarative kernel description, parsed from flat `key=value` pairs.
///
/// | kind       | keys                                  |
/// |------------|---------------------------------------|
/// | `powerlaw` | `d`, `tau`, `A` (1), `N_max` (auto)   |
/// | `series`   | `d`, `coeffs` (`;`-separated)         |
/// | `wendland` | `d`, `k`, `rho` (1), `wd` (`d`)       |
/// | `matern`   | `d`, `m`, `rho` (1), `s`              |
///
/// The radial kinds may also be written `kind=radial,family=wendland|matern`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    PowerLaw {
        d: usize,
        tau: f64,
        amplitude: f64,
        n_max: Option<usize>,
    },
    Series {
        d: usize,
        coeffs: Vec<f64>,
    },
    Wendland {
        d: usize,
        wendland_d: usize,
        k: usize,
        rho: f64,
    },
    Matern {
        d: usize,
        m: usize,
        rho: f64,
        s: f64,
    },
}

impl KernelSpec {
    /// Parses `kind:key=value,...` or `kind=...,key=value,...`.
    pub fn parse(text: &str, default_d: Option<usize>) -> Result<Self> {
        let pairs = parse_pairs(text, "kernel")?;
        Self::from_pairs(&pairs, default_d)
    }

    pub fn from_pairs(pairs: &[(String, String)], default_d: Option<usize>) -> Result<Self> {
        let ctx = "kernel spec";
        let mut kv = KeyValues::new(pairs, ctx);
        let mut kind = kv.take("kind").ok_or_else(|| Error::Parse {
            context: ctx.into(),
            message: "missing kernel kind".into(),
        })?;
        if kind == "radial" {
            kind = kv.take("family").ok_or_else(|| Error::Parse {
                context: ctx.into(),
                message: "radial kernel needs `family`".into(),
            })?;
        }
        let d = match kv.take("d") {
            Some(v) => parse_num::<usize>(&v, "d")?,
            None => default_d.ok_or_else(|| Error::Parse {
                context: ctx.into(),
                message: "missing `d`".into(),
            })?,
        };
        let spec = match kind.as_str() {
            "powerlaw" => KernelSpec::PowerLaw {
                d,
                tau: kv.required("tau")?,
                amplitude: kv.optional("A")?.unwrap_or(1.0),
                n_max: kv.optional("N_max")?,
            },
            "series" => {
                let raw = kv.take("coeffs").ok_or_else(|| Error::Parse {
                    context: ctx.into(),
                    message: "series kernel needs `coeffs`".into(),
                })?;
                let coeffs = raw
                    .split(';')
                    .map(|c| parse_num::<f64>(c.trim(), "coeffs"))
                    .collect::<Result<Vec<_>>>()?;
                KernelSpec::Series { d, coeffs }
            }
            "wendland" => KernelSpec::Wendland {
                d,
                wendland_d: kv.optional("wd")?.unwrap_or(d),
                k: kv.required("k")?,
                rho: kv.optional("rho")?.unwrap_or(1.0),
            },
            "matern" => KernelSpec::Matern {
                d,
                m: kv.required("m")?,
                rho: kv.optional("rho")?.unwrap_or(1.0),
                s: kv.required("s")?,
            },
            other => {
                return Err(Error::UnknownKey {
                    key: other.to_string(),
                    context: "kernel kind (expected powerlaw, series, wendland, matern)".into(),
                })
            }
        };
        kv.finish()?;
        Ok(spec)
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, KernelSpec::PowerLaw { .. } | KernelSpec::Series { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::PowerLaw { d, .. }
            | KernelSpec::Series { d, .. }
            | KernelSpec::Wendland { d, .. }
            | KernelSpec::Matern { d, .. } => *d,
        }
    }

    pub fn build_sphere<T: Real>(&self) -> Result<SphereSeriesKernel<T>> {
        match self {
            KernelSpec::PowerLaw {
                d,
                tau,
                amplitude,
                n_max,
            } => SphereSeriesKernel::power_law(*d, *amplitude, *tau, *n_max),
            KernelSpec::Series { d, coeffs } => SphereSeriesKernel::explicit(*d, coeffs.clone()),
            _ => Err(Error::InvalidArgument(format!("`{self}` is not a sphere kernel"))),
        }
    }

    pub fn build_euclid<T: Real>(&self) -> Result<EuclidRadialKernel<T>> {
        match self {
            KernelSpec::Wendland {
                d,
                wendland_d,
                k,
                rho,
            } => EuclidRadialKernel::new(RadialProfile::wendland(*wendland_d, *k, T::lit(*rho))?, *d),
            KernelSpec::Matern { d, m, rho, s } => {
                EuclidRadialKernel::new(RadialProfile::matern(*m, T::lit(*rho), T::lit(*s))?, *d)
            }
            _ => Err(Error::InvalidArgument(format!("`{self}` is not a Euclidean kernel"))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::PowerLaw {
                d,
                tau,
                amplitude,
                n_max,
            } => {
                write!(f, "powerlaw:d={d},tau={tau},A={amplitude}")?;
                if let Some(n) = n_max {
                    write!(f, ",N_max={n}")?;
                }
                Ok(())
            }
            KernelSpec::Series { d, coeffs } => {
                let c: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
                write!(f, "series:d={d},coeffs={}", c.join(";"))
            }
            KernelSpec::Wendland {
                d,
                wendland_d,
                k,
                rho,
            } => write!(f, "wendland:d={d},wd={wendland_d},k={k},rho={rho}"),
            KernelSpec::Matern { d, m, rho, s } => write!(f, "matern:d={d},m={m},rho={rho},s={s}"),
        }
    }
}

/// Splits `kind:k=v,k=v` (or `k=v,k=v`) into pairs; a leading bare word
/// becomes `kind`.
pub fn parse_pairs(text: &str, context: &str) -> Result<Vec<(String, String)>> {
    let text = text.trim();
    let (head, rest) = match text.split_once(':') {
        Some((h, r)) if !h.contains('=') => (Some(h), r),
        _ => (None, text),
    };
    let mut out = Vec::new();
    if let Some(h) = head {
        out.push(("kind".to_string(), h.trim().to_string()));
    }
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('=') {
            Some((k, v)) => out.push((k.trim().to_string(), v.trim().to_string())),
            None if out.is_empty() => out.push(("kind".to_string(), item.to_string())),
            None => {
                return Err(Error::Parse {
                    context: context.to_string(),
                    message: format!("`{item}` is not a key=value pair"),
                })
            }
        }
    }
    Ok(out)
}

pub(crate) fn parse_num<V: std::str::FromStr>(v: &str, key: &str) -> Result<V> {
    v.parse().map_err(|_| Error::Parse {
        context: format!("key `{key}`"),
        message: format!("cannot parse `{v}`"),
    })
}

/// Consumes recognized keys and rejects leftovers.
pub(crate) struct KeyValues<'a> {
    pairs: Vec<(&'a str, &'a str)>,
    context: &'a str,
}

impl<'a> KeyValues<'a> {
    pub(crate) fn new(pairs: &'a [(String, String)], context: &'a str) -> Self {
        Self {
            pairs: pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            context,
        }
    }

    pub(crate) fn take(&mut self, key: &str) -> Option<String> {
        let i = self.pairs.iter().position(|(k, _)| *k == key)?;
        Some(self.pairs.remove(i).1.to_string())
    }

    pub(crate) fn optional<V: std::str::FromStr>(&mut self, key: &str) -> Result<Option<V>> {
        self.take(key).map(|v| parse_num(&v, key)).transpose()
    }

    pub(crate) fn required<V: std::str::FromStr>(&mut self, key: &str) -> Result<V> {
        self.optional(key)?.ok_or_else(|| Error::Parse {
            context: self.context.to_string(),
            message: format!("missing `{key}`"),
        })
    }

    pub(crate) fn finish(self) -> Result<()> {
        match self.pairs.first() {
            Some((k, _)) => Err(Error::UnknownKey {
                key: k.to_string(),
                context: self.context.to_string(),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_points, Domain, Generator, PointSet};
    use crate::linalg::Cholesky;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sphere_points(n: usize, seed: u64) -> Vec<SpherePoint<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                SpherePoint::new(vec![
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ])
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn degree_zero_kernel_is_constant() {
        let k = SphereSeriesKernel::<f64>::explicit(2, vec![1.0]).unwrap();
        let pts = random_sphere_points(5, 1);
        for p in &pts {
            for q in &pts {
                assert_eq!(k.eval(p, q), 1.0);
            }
        }
    }

    #[test]
    fn diagonal_value_is_weighted_dimension_sum() {
        let k = SphereSeriesKernel::<f64>::power_law(2, 1.0, 2.0, Some(50)).unwrap();
        let x = &random_sphere_points(1, 2)[0];
        let expected: f64 = (0..=50).map(|n| (2 * n + 1) as f64 * (1.0 + n as f64).powi(-4)).sum();
        assert_relative_eq!(k.eval(x, x), expected, max_relative = 1e-13);
        assert_relative_eq!(k.value_at_origin(), expected, max_relative = 1e-13);
    }

    #[test]
    fn euclid_wendland_example() {
        let k = EuclidRadialKernel::new(RadialProfile::wendland(3, 1, 1.0).unwrap(), 3).unwrap();
        let x = EuclidPoint::new(vec![0.0, 0.0, 0.0]).unwrap();
        let y = EuclidPoint::new(vec![0.3, 0.4, 0.0]).unwrap();
        assert_abs_diff_eq!(kernel_eval(&k, &x, &y).unwrap(), 0.1875, epsilon = 1e-15);
        let bad = EuclidPoint::new(vec![0.3]).unwrap();
        assert!(kernel_eval(&k, &x, &bad).is_err());
    }

    #[test]
    fn validation_examples() {
        let ok = SphereSeriesKernel::<f64>::from_rule(
            2,
            CoefficientRule::PowerLaw { amplitude: 1.0, tau: 2.0 },
            100,
        )
        .unwrap();
        let r = validate_kernel(&ok);
        assert!(r.admissible);
        assert_eq!(r.summability_margin, Some(2.0));

        let boundary = SphereSeriesKernel::<f64>::from_rule(
            2,
            CoefficientRule::PowerLaw { amplitude: 1.0, tau: 1.0 },
            100,
        )
        .unwrap();
        let r = validate_kernel(&boundary);
        assert!(!r.admissible);
        assert_eq!(r.summability_margin, Some(0.0));
        assert!(SphereSeriesKernel::<f64>::power_law(2, 1.0, 1.0, Some(10)).is_err());

        let neg = SphereSeriesKernel::<f64>::from_rule(
            2,
            CoefficientRule::Explicit { coeffs: vec![1.0, 0.5, 0.2, -0.1, 0.05] },
            4,
        )
        .unwrap();
        let r = validate_kernel(&neg);
        assert!(!r.admissible);
        assert_eq!(r.positivity_failures, vec![3]);

        let rough = EuclidRadialKernel::new_unchecked(RadialProfile::matern(1, 1.0, 1.0).unwrap(), 2);
        assert!(!validate_kernel(&rough).admissible);
        let w = EuclidRadialKernel::new_unchecked(RadialProfile::wendland(1, 1, 1.0).unwrap(), 3);
        assert!(!validate_kernel(&w).admissible);
    }

    #[test]
    fn automatic_truncation_meets_tail_or_cap() {
        let fast = SphereSeriesKernel::<f64>::power_law(2, 1.0, 4.0, None).unwrap();
        let r = fast.validate();
        assert!(r.truncation_tail.unwrap() < TAIL_TOLERANCE);
        assert!(fast.n_max() < 400);
        let slow = SphereSeriesKernel::<f64>::power_law(2, 1.0, 2.0, None).unwrap();
        assert_eq!(slow.n_max(), 400);
        assert!(slow.validate().truncation_tail.unwrap() > TAIL_TOLERANCE);
    }

    #[test]
    fn tail_estimate_matches_long_sum() {
        // independent check: brute-force partial sum to 2e5 plus the same integral beyond
        let (d, a, tau, n) = (2usize, 1.0f64, 2.0f64, 40usize);
        let brute: f64 = (n + 1..=200_000)
            .map(|k| (2 * k + 1) as f64 * a * (1.0 + k as f64).powf(-2.0 * tau))
            .sum::<f64>()
            + 2.0 * 200_000f64.powf(-2.0) / 2.0;
        assert_relative_eq!(power_law_tail(d, a, tau, n), brute, max_relative = 1e-3);
    }

    #[test]
    fn sphere_kernel_is_zonal() {
        let k = SphereSeriesKernel::<f64>::power_law(2, 1.0, 1.5, Some(60)).unwrap();
        let pts = random_sphere_points(20, 3);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = |p: &SpherePoint<f64>| {
            let v = p.coords();
            SpherePoint::new(vec![c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]).unwrap()
        };
        for w in pts.windows(2) {
            let a = k.eval(&w[0], &w[1]);
            let b = k.eval(&rot(&w[0]), &rot(&w[1]));
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            assert_eq!(a, k.eval(&w[1], &w[0]));
        }
    }

    #[test]
    fn gram_matrices_are_positive_definite() {
        let sk = SphereSeriesKernel::<f64>::power_law(2, 1.0, 2.0, Some(100)).unwrap();
        let pts = random_sphere_points(20, 4);
        let g = sk.gram(&pts);
        Cholesky::factor(&g).expect("sphere Gram SPD");
        // blocked Gram agrees with pointwise evaluation
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(g.get(i, j), sk.eval(&pts[i], &pts[j]));
            }
        }

        let b = Domain::<f64>::unit_box(2).unwrap();
        let ys: PointSet<EuclidPoint<f64>> = generate_points(&b, Generator::Halton, 20, 0).unwrap();
        for k in [
            EuclidRadialKernel::new(RadialProfile::wendland(3, 1, 0.8).unwrap(), 2).unwrap(),
            EuclidRadialKernel::new(RadialProfile::matern(1, 0.3, 2.0).unwrap(), 2).unwrap(),
        ] {
            Cholesky::factor(&k.gram(ys.points())).expect("Euclidean Gram SPD");
        }
    }

    #[test]
    fn spec_parsing() {
        let s = KernelSpec::parse("powerlaw:tau=2,A=1,N_max=300", Some(2)).unwrap();
        assert_eq!(
            s,
            KernelSpec::PowerLaw { d: 2, tau: 2.0, amplitude: 1.0, n_max: Some(300) }
        );
        let r = KernelSpec::parse("kind=radial,family=matern,m=1,rho=0.1,s=2,d=1", None).unwrap();
        assert_eq!(r, KernelSpec::Matern { d: 1, m: 1, rho: 0.1, s: 2.0 });
        let w = KernelSpec::parse("wendland:k=1,rho=0.5", Some(1)).unwrap();
        assert_eq!(w.build_euclid::<f64>().unwrap().smoothness(), 2.0);
        let c = KernelSpec::parse("series:d=2,coeffs=1;0.5;0.25", None).unwrap();
        assert_eq!(c.build_sphere::<f64>().unwrap().n_max(), 2);
        // canonical form round-trips
        assert_eq!(KernelSpec::parse(&s.to_string(), None).unwrap(), s);

        match KernelSpec::parse("powrlaw:tau=2", Some(2)) {
            Err(Error::UnknownKey { key, .. }) => assert_eq!(key, "powrlaw"),
            other => panic!("{other:?}"),
        }
        match KernelSpec::parse("powerlaw:tau=2,tua=3", Some(2)) {
            Err(Error::UnknownKey { key, .. }) => assert_eq!(key, "tua"),
            other => panic!("{other:?}"),
        }
        assert!(KernelSpec::parse("powerlaw:A=1", Some(2)).is_err());
        assert!(KernelSpec::parse("powerlaw:tau=x", Some(2)).is_err());
    }
}
