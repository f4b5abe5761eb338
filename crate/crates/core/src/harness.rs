//! Convergence studies: targets with prescribed smoothness, multi-level
//! runs, slope fitting, predicted exponents and reports.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    candidate_grid, fill_distance_on, generate_points, Domain, EuclidPoint, Generator, Point, PointSet,
    SpherePoint, DEFAULT_FILL_CANDIDATES,
};
use crate::interpolation::{GramSystem, Interpolant};
use crate::kernels::{
    parse_num, parse_pairs, CoefficientRule, EuclidRadialKernel, Kernel, KernelSpec, KeyValues,
    SphereSeriesKernel,
};
use crate::orthopoly::RadialProfile;
use crate::spectral::{
    batch_series_eval, hlambdaphi_norm_sq, hphi_norm_sq, PseudoDiff, PseudoDiffSymbol, SphereQuadrature,
    ZonalExpansion,
};

/// One-sided tolerance on fitted slopes.
pub const SLOPE_TOLERANCE: f64 = 0.35;
/// Levels with a larger condition estimate are left out of slope fits.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Errors at or below this are treated as rounding and left out of fits.
pub const ERROR_FLOOR: f64 = 1e-13;
pub const DEFAULT_SPHERE_EVAL_POINTS: usize = 20_000;
pub const DEFAULT_EUCLID_EVAL_POINTS: usize = 10_000;
/// Cap on Gauss–Legendre nodes for quadrature L2 metrics.
pub const DEFAULT_QUADRATURE_NODES: usize = 128;
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    /// `c_n = ±(1+n)^{-β}` with seeded signs, `c_0 = 0`.
    ZonalPowerlaw { beta: f64, seed: u64, pole: Option<Vec<f64>> },
    /// `c_n = (-1)^n / (1+n)` for `n <= degree`.
    ZonalBandlimited { degree: usize, pole: Option<Vec<f64>> },
    /// Wendland `φ_{d,k}(|x - center| / radius)`.
    EuclidBump { k: usize, center: Vec<f64>, radius: f64 },
    /// The kernel's own translate `φ(|x - center|)`.
    EuclidKernelTranslate { center: Vec<f64> },
}

impl TargetSpec {
    /// Parses `zonal:beta=5`, `bandlimited:degree=8`, `bump:k=1,rho=0.2,center=0.5`
    /// or `translate:center=0.5`. Vector values are `;`-separated; a single
    /// number is repeated across `dim` coordinates.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let pairs = parse_pairs(text, "target")?;
        let ctx = "target spec";
        let mut kv = KeyValues::new(&pairs, ctx);
        let kind = kv.take("kind").ok_or_else(|| Error::Parse {
            context: ctx.into(),
            message: "missing target kind".into(),
        })?;
        let pole = kv.take("pole").map(|p| parse_vector(&p, "pole", dim + 1)).transpose()?;
        let has_pole = pole.is_some();
        let spec = match kind.as_str() {
            "zonal" | "zonal-powerlaw" => TargetSpec::ZonalPowerlaw {
                beta: kv.required("beta")?,
                seed: kv.optional("seed")?.unwrap_or(0),
                pole,
            },
            "bandlimited" | "zonal-bandlimited" => TargetSpec::ZonalBandlimited {
                degree: kv.required("degree")?,
                pole,
            },
            "bump" | "euclid-bump" => TargetSpec::EuclidBump {
                k: kv.required("k")?,
                center: center_of(&mut kv, dim)?,
                radius: kv.optional("rho")?.unwrap_or(0.2),
            },
            "translate" | "euclid-kernel-translate" => TargetSpec::EuclidKernelTranslate {
                center: center_of(&mut kv, dim)?,
            },
            other => {
                return Err(Error::UnknownKey {
                    key: other.to_string(),
                    context: "target kind (expected zonal, bandlimited, bump, translate)".into(),
                })
            }
        };
        if !spec.is_sphere() && has_pole {
            return Err(Error::UnknownKey {
                key: "pole".into(),
                context: ctx.into(),
            });
        }
        kv.finish()?;
        Ok(spec)
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, TargetSpec::ZonalPowerlaw { .. } | TargetSpec::ZonalBandlimited { .. })
    }
}

fn center_of(kv: &mut KeyValues<'_>, dim: usize) -> Result<Vec<f64>> {
    match kv.take("center") {
        Some(c) => parse_vector(&c, "center", dim),
        None => Ok(vec![0.5; dim]),
    }
}

fn parse_vector(text: &str, key: &str, dim: usize) -> Result<Vec<f64>> {
    let v = text
        .split(';')
        .map(|c| parse_num::<f64>(c.trim(), key))
        .collect::<Result<Vec<_>>>()?;
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => Err(Error::Parse {
            context: format!("key `{key}`"),
            message: format!("expected 1 or {dim} values, got {n}"),
        }),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::ZonalPowerlaw { beta, seed, pole } => {
                write!(f, "zonal:beta={beta},seed={seed}")?;
                if let Some(p) = pole {
                    write!(f, ",pole={}", join(p))?;
                }
                Ok(())
            }
            TargetSpec::ZonalBandlimited { degree, pole } => {
                write!(f, "bandlimited:degree={degree}")?;
                if let Some(p) = pole {
                    write!(f, ",pole={}", join(p))?;
                }
                Ok(())
            }
            TargetSpec::EuclidBump { k, center, radius } => {
                write!(f, "bump:k={k},rho={radius},center={}", join(center))
            }
            TargetSpec::EuclidKernelTranslate { center } => write!(f, "translate:center={}", join(center)),
        }
    }
}

/// Zonal target on the sphere with exact norms.
#[derive(Debug, Clone)]
pub struct SphereTarget {
    pub expansion: ZonalExpansion<f64>,
    /// `‖f‖²_φ`.
    pub native_norm_sq: f64,
    /// `‖f‖²_{Λφ}` for the study's symbol, when finite.
    pub lambda_norm_sq: Option<f64>,
    /// Infimum of the `σ` with `f ∈ H_{Λφ(σ)}`, when known.
    pub sigma_star: Option<f64>,
    pub derivation: String,
}

#[derive(Debug, Clone)]
pub enum EuclidShape {
    Bump { profile: RadialProfile<f64>, center: EuclidPoint<f64> },
    Translate { kernel: EuclidRadialKernel<f64>, center: EuclidPoint<f64> },
}

/// Target on a Euclidean domain with its declared Sobolev exponent.
#[derive(Debug, Clone)]
pub struct EuclidTarget {
    pub shape: EuclidShape,
    /// `f ∈ H^ν` for every `ν < nu_star`.
    pub nu_star: f64,
    /// `‖f‖²_φ` when known in closed form.
    pub native_norm_sq: Option<f64>,
    pub derivation: String,
}

impl EuclidTarget {
    pub fn eval(&self, x: &EuclidPoint<f64>) -> f64 {
        match &self.shape {
            EuclidShape::Bump { profile, center } => profile.eval(x.distance(center)),
            EuclidShape::Translate { kernel, center } => kernel.eval(x, center),
        }
    }
}

/// Default pole: the north pole. The Fibonacci center nearest to it lies at
/// distance about `sqrt(2/n)`, so the spacing around the target's least
/// smooth point shrinks in step with `h`.
fn default_pole(d: usize, pole: &Option<Vec<f64>>) -> Result<SpherePoint<f64>> {
    match pole {
        Some(p) => SpherePoint::new(p.clone()),
        None => Ok(SpherePoint::north_pole(d)),
    }
}

/// Builds a zonal target truncated at the kernel's `N_max`.
pub fn build_sphere_target(
    spec: &TargetSpec,
    k: &SphereSeriesKernel<f64>,
    symbol: Option<&PseudoDiffSymbol<f64>>,
) -> Result<SphereTarget> {
    let d = k.d();
    let n_max = k.n_max();
    let tau = match k.rule() {
        CoefficientRule::PowerLaw { tau, .. } => Some(*tau),
        CoefficientRule::Explicit { .. } => None,
    };
    let (pole, coeffs, sigma_star, derivation) = match spec {
        TargetSpec::ZonalPowerlaw { beta, seed, pole } => {
            if let Some(tau) = tau {
                let bound = tau + d as f64 / 2.0;
                if !(*beta > bound) {
                    return Err(Error::OutsideNativeSpace(format!(
                        "coefficient decay beta = {beta} needs beta > tau + d/2 = {bound}"
                    )));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let coeffs: Vec<f64> = (0..=n_max)
                .map(|n| {
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    if n == 0 {
                        0.0
                    } else {
                        sign * (1.0 + n as f64).powf(-beta)
                    }
                })
                .collect();
            let sigma = tau.map(|tau| (tau + d as f64 / 4.0 - beta / 2.0).max(0.0));
            let derivation = match tau {
                Some(tau) => format!(
                    "sum (lambda_n a_n)^-2 c_n^2 d_n ~ sum n^(4 tau - 2 beta + d - 1 - 4 sigma) converges for sigma > tau + d/4 - beta/2 = {}",
                    tau + d as f64 / 4.0 - beta / 2.0
                ),
                None => "explicit kernel coefficients: no asymptotic smoothness".into(),
            };
            (default_pole(d, pole)?, coeffs, sigma, derivation)
        }
        TargetSpec::ZonalBandlimited { degree, pole } => {
            if *degree > n_max {
                return Err(Error::InvalidArgument(format!(
                    "band limit {degree} exceeds kernel truncation {n_max}"
                )));
            }
            let coeffs: Vec<f64> = (0..=*degree)
                .map(|n| if n % 2 == 0 { 1.0 } else { -1.0 } / (1.0 + n as f64))
                .collect();
            (
                default_pole(d, pole)?,
                coeffs,
                Some(0.0),
                "band-limited: member of H_{Lambda phi(sigma)} for every sigma".into(),
            )
        }
        _ => {
            return Err(Error::InvalidArgument(format!("target `{spec}` is not a sphere target")));
        }
    };
    if pole.sphere_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: pole.sphere_dim(),
        });
    }
    let expansion = ZonalExpansion::new(pole, coeffs)?;
    let native_norm_sq = hphi_norm_sq(&expansion, k)?;
    let lambda_norm_sq = symbol.and_then(|s| hlambdaphi_norm_sq(&expansion, k, s).ok());
    Ok(SphereTarget {
        expansion,
        native_norm_sq,
        lambda_norm_sq,
        sigma_star,
        derivation,
    })
}

fn strictly_inside(domain: &Domain<f64>, center: &[f64], radius: f64) -> bool {
    match domain {
        Domain::Box { lo, hi } => center
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(&c, (&a, &b))| c - radius > a && c + radius < b),
        Domain::Ball { center: o, radius: r } => {
            let dist: f64 = center.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            dist + radius < *r
        }
        Domain::Sphere { .. } => false,
    }
}

pub fn build_euclid_target(
    spec: &TargetSpec,
    domain: &Domain<f64>,
    k: &EuclidRadialKernel<f64>,
) -> Result<EuclidTarget> {
    let d = domain.dim();
    match spec {
        TargetSpec::EuclidBump { k: kb, center, radius } => {
            if center.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: center.len(),
                });
            }
            if !strictly_inside(domain, center, *radius) {
                return Err(Error::InvalidArgument(format!(
                    "bump of radius {radius} at {center:?} is not supported strictly inside the domain"
                )));
            }
            let profile = RadialProfile::wendland(d, *kb, *radius)?;
            let s_target = profile.s;
            let nu_star = 2.0 * s_target - d as f64 / 2.0;
            Ok(EuclidTarget {
                shape: EuclidShape::Bump {
                    profile,
                    center: EuclidPoint::new(center.clone())?,
                },
                nu_star,
                native_norm_sq: None,
                derivation: format!(
                    "Fourier transform of wendland({d},{kb}) decays like |w|^-{}; f in H^nu for nu < {nu_star}",
                    2.0 * s_target
                ),
            })
        }
        TargetSpec::EuclidKernelTranslate { center } => {
            if center.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: center.len(),
                });
            }
            if !domain.contains(center) {
                return Err(Error::OutsideDomain { index: 0 });
            }
            let s = k.smoothness();
            let nu_star = 2.0 * s - d as f64 / 2.0;
            Ok(EuclidTarget {
                shape: EuclidShape::Translate {
                    kernel: k.clone(),
                    center: EuclidPoint::new(center.clone())?,
                },
                nu_star,
                native_norm_sq: Some(k.value_at_origin()),
                derivation: format!("kernel translate: Fourier decay |w|^-{}; f in H^nu for nu < {nu_star}", 2.0 * s),
            })
        }
        _ => Err(Error::InvalidArgument(format!("target `{spec}` is not a Euclidean target"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMetric {
    Sup,
    L2,
    NativeResidual,
    PseudoSup,
    PseudoL2,
    /// Sup error on the inner box `[0.1, 0.9]^d` (diagnostic).
    SupInner,
    /// `e = h²`, for checking the fitting pipeline.
    SyntheticH2,
}

impl StudyMetric {
    pub const ALL: [StudyMetric; 7] = [
        StudyMetric::Sup,
        StudyMetric::L2,
        StudyMetric::NativeResidual,
        StudyMetric::PseudoSup,
        StudyMetric::PseudoL2,
        StudyMetric::SupInner,
        StudyMetric::SyntheticH2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyMetric::Sup => "sup",
            StudyMetric::L2 => "l2",
            StudyMetric::NativeResidual => "native-residual",
            StudyMetric::PseudoSup => "pseudo-sup",
            StudyMetric::PseudoL2 => "pseudo-l2",
            StudyMetric::SupInner => "sup-inner",
            StudyMetric::SyntheticH2 => "synthetic-h2",
        }
    }

    fn is_pseudo(self) -> bool {
        matches!(self, StudyMetric::PseudoSup | StudyMetric::PseudoL2)
    }
}

impl fmt::Display for StudyMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownKey {
                key: s.to_string(),
                context: "metric list".into(),
            })
    }
}

/// Inputs to [`predicted_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    Euclid {
        d: usize,
        s: f64,
        nu_star: f64,
        metric: StudyMetric,
    },
    Sphere {
        d: usize,
        tau: f64,
        sigma_star: f64,
        sigma_op: f64,
        metric: StudyMetric,
    },
}

/// Predicted convergence exponent in `h` and a provenance note.
pub fn predicted_rate(scenario: Scenario) -> Result<(f64, String)> {
    if let Scenario::Euclid { metric: StudyMetric::SyntheticH2, .. }
    | Scenario::Sphere { metric: StudyMetric::SyntheticH2, .. } = scenario
    {
        return Ok((2.0, "synthetic e = h^2".into()));
    }
    match scenario {
        Scenario::Euclid { d, s, nu_star, metric } => {
            let half = d as f64 / 2.0;
            let nu = nu_star.min(2.0 * s);
            let cap = if nu_star > 2.0 * s { " (capped at nu = 2s)" } else { "" };
            match metric {
                StudyMetric::Sup | StudyMetric::SupInner | StudyMetric::L2 => Ok((
                    nu - half,
                    format!("sup error <= C h^(nu - d/2), nu = {nu}{cap}, s = {s}, d = {d}"),
                )),
                StudyMetric::NativeResidual => Ok((
                    (nu - s).max(0.0),
                    format!("native residual ~ h^(nu - s), nu = {nu}{cap}, s = {s} (standard doubling estimate)"),
                )),
                _ => Err(Error::InvalidArgument(format!("metric `{metric}` needs a sphere domain"))),
            }
        }
        Scenario::Sphere {
            d,
            tau,
            sigma_star,
            sigma_op,
            metric,
        } => {
            let native = tau - d as f64 / 2.0;
            let degenerate = sigma_star >= native / 2.0;
            let tails = "tail sums sum_{n>N} n^p ~ N^(p+1), N = floor(1/(2h)), a_n ~ n^(-2 tau), d_n ~ n^(d-1)";
            let residual = if degenerate { 0.0 } else { native - 2.0 * sigma_star };
            match metric {
                StudyMetric::Sup | StudyMetric::L2 => {
                    if degenerate {
                        Ok((
                            native,
                            format!(
                                "native rate tau - d/2 = {native}: sigma = {sigma_star} >= (tau - d/2)/2, so sum d_n lambda_n^2 a_n diverges and the intermediate estimate degenerates"
                            ),
                        ))
                    } else {
                        let raw = 2.0 * tau - d as f64 - 2.0 * sigma_star;
                        Ok((
                            raw.clamp(native, 2.0 * native),
                            format!(
                                "2 tau - d - 2 sigma with sigma = {sigma_star}, clipped to [tau - d/2, 2 tau - d]; {tails}"
                            ),
                        ))
                    }
                }
                StudyMetric::NativeResidual => Ok((
                    residual,
                    format!("||f - S||_phi ~ h^(tau - d/2 - 2 sigma), sigma = {sigma_star}; {tails}"),
                )),
                StudyMetric::PseudoSup | StudyMetric::PseudoL2 => {
                    let op = native - 2.0 * sigma_op;
                    let note = if op <= 0.0 {
                        " (sum d_n lambda_n^2 a_n is at or beyond the summability boundary; log factors expected)"
                    } else {
                        ""
                    };
                    Ok((
                        op.max(0.0) + residual,
                        format!(
                            "(tau - d/2 - 2 sigma_op) + native residual rate, sigma_op = {sigma_op}, sigma = {sigma_star}{note}; {tails}"
                        ),
                    ))
                }
                StudyMetric::SupInner => Err(Error::InvalidArgument("`sup-inner` needs a Euclidean domain".into())),
                StudyMetric::SyntheticH2 => unreachable!(),
            }
        }
    }
}

/// Least-squares slope of `log e` against `log h`, ignoring pairs with
/// `e <= floor` or non-finite entries.
pub fn fit_slope(pairs: &[(f64, f64)], floor: f64) -> Result<f64> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(h, e)| h.is_finite() && *h > 0.0 && e.is_finite() && *e > floor)
        .map(|&(h, e)| (h.ln(), e.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::TooFewLevels { usable: usable.len() });
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = usable.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all usable levels share the same h".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub domain: Domain<f64>,
    pub kernel: KernelSpec,
    pub target: TargetSpec,
    /// Point counts, strictly increasing.
    pub levels: Vec<usize>,
    pub generator: Generator,
    pub eval_points: usize,
    pub fill_candidates: usize,
    /// Gauss–Legendre nodes in `cos θ` for L2 metrics on `S^2`
    /// (longitudes: twice as many).
    pub quadrature_nodes: usize,
    pub metrics: Vec<StudyMetric>,
    pub sigma_op: f64,
    pub seed: u64,
    pub condition_limit: f64,
    pub error_floor: f64,
}

impl StudyConfig {
    /// Config with the defaults for `domain`.
    pub fn new(domain: Domain<f64>, kernel: KernelSpec, target: TargetSpec, levels: Vec<usize>) -> Self {
        let sphere = matches!(domain, Domain::Sphere { .. });
        let generator = match domain {
            Domain::Sphere { .. } => Generator::FibonacciSphere,
            Domain::Box { .. } => Generator::UniformGrid,
            Domain::Ball { .. } => Generator::Halton,
        };
        Self {
            domain,
            kernel,
            target,
            levels,
            generator,
            eval_points: if sphere {
                DEFAULT_SPHERE_EVAL_POINTS
            } else {
                DEFAULT_EUCLID_EVAL_POINTS
            },
            fill_candidates: DEFAULT_FILL_CANDIDATES,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            metrics: vec![StudyMetric::Sup],
            sigma_op: 0.5,
            seed: 0,
            condition_limit: CONDITION_LIMIT,
            error_floor: ERROR_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 3 {
            return Err(Error::TooFewLevels {
                usable: self.levels.len(),
            });
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) || self.levels[0] == 0 {
            return Err(Error::InvalidArgument(
                "levels must be positive and strictly increasing".into(),
            ));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidArgument("no metrics requested".into()));
        }
        let sphere = matches!(self.domain, Domain::Sphere { .. });
        if sphere != self.kernel.is_sphere() || sphere != self.target.is_sphere() {
            return Err(Error::InvalidArgument(format!(
                "domain, kernel `{}` and target `{}` must all be spherical or all Euclidean",
                self.kernel, self.target
            )));
        }
        if self.kernel.dim() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                found: self.kernel.dim(),
            });
        }
        for &m in &self.metrics {
            let ok = match m {
                StudyMetric::PseudoSup | StudyMetric::PseudoL2 => sphere,
                StudyMetric::L2 => !sphere || self.domain.dim() == 2,
                StudyMetric::SupInner => !sphere,
                StudyMetric::NativeResidual => {
                    sphere || matches!(self.target, TargetSpec::EuclidKernelTranslate { .. })
                }
                _ => true,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "metric `{m}` is not available for this domain and target"
                )));
            }
        }
        if self.metrics.iter().any(|m| m.is_pseudo()) && !(self.sigma_op > 0.0) {
            return Err(Error::InvalidArgument("sigma_op must be positive".into()));
        }
        if self.eval_points == 0 || self.quadrature_nodes == 0 {
            return Err(Error::InvalidArgument("grid sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub n_points: usize,
    pub h: f64,
    pub cond: f64,
    /// False when the Gram factorization failed.
    pub usable: bool,
    /// One value per configured metric, in order.
    pub metrics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEntry {
    pub metric: StudyMetric,
    pub fitted: Option<f64>,
    pub fit_levels: usize,
    pub predicted: Option<f64>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub native_norm_sq: Option<f64>,
    pub lambda_norm_sq: Option<f64>,
    /// `σ*` on the sphere, `ν*` on Euclidean domains.
    pub smoothness: Option<f64>,
    pub derivation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub config: StudyConfig,
    pub target: TargetInfo,
    /// Sorted by decreasing `h`.
    pub rows: Vec<LevelRow>,
    pub slopes: Vec<SlopeEntry>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCheck {
    pub metric: StudyMetric,
    pub fitted: Option<f64>,
    pub predicted: f64,
    pub passed: bool,
}

impl ConvergenceReport {
    fn metric_index(&self, m: StudyMetric) -> Option<usize> {
        self.config.metrics.iter().position(|&x| x == m)
    }

    /// `(h, e)` for one metric over all rows.
    pub fn series(&self, m: StudyMetric) -> Vec<(f64, f64)> {
        let Some(i) = self.metric_index(m) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| (r.h, r.metrics[i])).collect()
    }

    pub fn slope(&self, m: StudyMetric) -> Option<&SlopeEntry> {
        self.slopes.iter().find(|s| s.metric == m)
    }

    pub fn fitted(&self, m: StudyMetric) -> Option<f64> {
        self.slope(m).and_then(|s| s.fitted)
    }

    /// Fraction of consecutive row pairs, after the first row, over which
    /// the metric does not increase.
    pub fn monotone_fraction(&self, m: StudyMetric) -> f64 {
        let s = self.series(m);
        let pairs: Vec<bool> = s.windows(2).skip(1).map(|w| w[1].1 <= w[0].1).collect();
        if pairs.is_empty() {
            return 1.0;
        }
        pairs.iter().filter(|&&b| b).count() as f64 / pairs.len() as f64
    }

    /// `fitted >= predicted - tolerance` for every metric with a prediction.
    pub fn rate_checks(&self, tolerance: f64) -> Vec<RateCheck> {
        self.slopes
            .iter()
            .filter_map(|s| {
                let predicted = s.predicted?;
                Some(RateCheck {
                    metric: s.metric,
                    fitted: s.fitted,
                    predicted,
                    passed: s.fitted.is_some_and(|f| f >= predicted - tolerance),
                })
            })
            .collect()
    }

    /// `level,n_points,h,cond,metric:<name>...` rows, then `fitted:` and
    /// `predicted:` footer rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        let mut header = vec!["level".to_string(), "n_points".into(), "h".into(), "cond".into()];
        header.extend(self.config.metrics.iter().map(|m| format!("metric:{m}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.level.to_string(), r.n_points.to_string(), r.h.to_string(), r.cond.to_string()];
            rec.extend(r.metrics.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        for s in &self.slopes {
            if let Some(f) = s.fitted {
                w.write_record([format!("fitted:{}", s.metric), f.to_string()])?;
            }
        }
        for s in &self.slopes {
            if let Some(p) = s.predicted {
                w.write_record([format!("predicted:{}", s.metric), p.to_string(), s.provenance.clone()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writeln!(writer)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

/// Contents of a report CSV as read back.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub metrics: Vec<String>,
    /// `(level, n_points, h, cond, metric values)`.
    pub rows: Vec<(usize, usize, f64, f64, Vec<f64>)>,
    pub fitted: Vec<(String, f64)>,
    pub predicted: Vec<(String, f64, String)>,
}

pub fn read_report_csv<R: Read>(reader: R) -> Result<ReportTable> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let bad = |message: String| Error::Parse {
        context: "report CSV".into(),
        message,
    };
    let header = r.headers()?.clone();
    let fixed = ["level", "n_points", "h", "cond"];
    if header.len() < 4 || header.iter().take(4).ne(fixed) {
        return Err(bad("header must start with level,n_points,h,cond".into()));
    }
    let metrics = header
        .iter()
        .skip(4)
        .map(|h| h.strip_prefix("metric:").map(str::to_string).ok_or_else(|| bad(format!("bad column `{h}`"))))
        .collect::<Result<Vec<_>>>()?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("cannot parse `{s}`")));
    let mut table = ReportTable {
        metrics,
        rows: Vec::new(),
        fitted: Vec::new(),
        predicted: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec?;
        let first = rec.get(0).unwrap_or("");
        if let Some(m) = first.strip_prefix("fitted:") {
            table.fitted.push((m.to_string(), num(rec.get(1).unwrap_or(""))?));
        } else if let Some(m) = first.strip_prefix("predicted:") {
            table.predicted.push((
                m.to_string(),
                num(rec.get(1).unwrap_or(""))?,
                rec.get(2).unwrap_or("").to_string(),
            ));
        } else {
            if rec.len() != 4 + table.metrics.len() {
                return Err(bad(format!("row has {} fields", rec.len())));
            }
            let level = first.parse().map_err(|_| bad(format!("bad level `{first}`")))?;
            let n = rec[1].parse().map_err(|_| bad(format!("bad count `{}`", &rec[1])))?;
            let vals = rec.iter().skip(4).map(num).collect::<Result<Vec<_>>>()?;
            table.rows.push((level, n, num(&rec[2])?, num(&rec[3])?, vals));
        }
    }
    Ok(table)
}

/// Runs one study.
pub fn run_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    let mut reports = run_study_targets(cfg, std::slice::from_ref(&cfg.target))?;
    Ok(reports.remove(0))
}

/// Runs several targets over the same point sets and interpolation
/// matrices; one report per target, each echoing `cfg` with its target.
pub fn run_study_targets(cfg: &StudyConfig, targets: &[TargetSpec]) -> Result<Vec<ConvergenceReport>> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no targets".into()));
    }
    let configs: Vec<StudyConfig> = targets
        .iter()
        .map(|t| StudyConfig {
            target: t.clone(),
            ..cfg.clone()
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let levels = match cfg.domain {
        Domain::Sphere { .. } => sphere_levels(&configs)?,
        _ => euclid_levels(&configs)?,
    };
    let LevelOutput { info, rows, notes } = levels;
    let mut reports = Vec::with_capacity(configs.len());
    for (t, (c, info)) in configs.into_iter().zip(info).enumerate() {
        let mut rows: Vec<LevelRow> = rows.iter().map(|r| r[t].clone()).collect();
        rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        let slopes = c
            .metrics
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let pairs: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.usable && r.cond <= c.condition_limit)
                    .map(|r| (r.h, r.metrics[i]))
                    .collect();
                let fit = fit_slope(&pairs, c.error_floor);
                let fit_levels = pairs.iter().filter(|(_, e)| e.is_finite() && *e > c.error_floor).count();
                let prediction = if m == StudyMetric::SyntheticH2 {
                    Ok((2.0, "synthetic e = h^2".to_string()))
                } else {
                    scenario_for(&c, &info, m).and_then(predicted_rate)
                };
                let (predicted, provenance) = match prediction {
                    Ok((p, s)) => (Some(p), s),
                    Err(e) => (None, format!("no prediction: {e}")),
                };
                SlopeEntry {
                    metric: m,
                    fitted: fit.ok(),
                    fit_levels,
                    predicted,
                    provenance,
                }
            })
            .collect();
        reports.push(ConvergenceReport {
            schema: REPORT_SCHEMA,
            config: c,
            target: info,
            rows,
            slopes,
            notes: notes.clone(),
        });
    }
    Ok(reports)
}

fn scenario_for(c: &StudyConfig, info: &TargetInfo, metric: StudyMetric) -> Result<Scenario> {
    let missing = || Error::InvalidArgument("target smoothness unknown for this kernel".into());
    match &c.kernel {
        KernelSpec::PowerLaw { d, tau, .. } => Ok(Scenario::Sphere {
            d: *d,
            tau: *tau,
            sigma_star: info.smoothness.ok_or_else(missing)?,
            sigma_op: c.sigma_op,
            metric,
        }),
        KernelSpec::Series { .. } => Err(Error::InvalidArgument(
            "explicit series kernels have no asymptotic rate".into(),
        )),
        KernelSpec::Wendland { .. } | KernelSpec::Matern { .. } => {
            let k = c.kernel.build_euclid::<f64>()?;
            Ok(Scenario::Euclid {
                d: c.domain.dim(),
                s: k.smoothness(),
                nu_star: info.smoothness.ok_or_else(missing)?,
                metric,
            })
        }
    }
}

struct LevelOutput {
    info: Vec<TargetInfo>,
    /// `rows[level][target]`.
    rows: Vec<Vec<LevelRow>>,
    notes: Vec<String>,
}

fn failed_row(level: usize, n: usize, h: f64, cond: f64, metrics: usize) -> LevelRow {
    LevelRow {
        level,
        n_points: n,
        h,
        cond,
        usable: false,
        metrics: vec![f64::NAN; metrics],
    }
}

fn sphere_levels(configs: &[StudyConfig]) -> Result<LevelOutput> {
    let cfg = &configs[0];
    let k = cfg.kernel.build_sphere::<f64>()?;
    let d = k.d();
    let metrics = &cfg.metrics;
    let wants = |m: StudyMetric| metrics.contains(&m);
    let pseudo = metrics.iter().any(|m| m.is_pseudo());
    let symbol = if pseudo {
        Some(PseudoDiffSymbol::assumption(d, cfg.sigma_op, k.n_max())?)
    } else {
        None
    };
    let targets = configs
        .iter()
        .map(|c| build_sphere_target(&c.target, &k, symbol.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let applied: Vec<Option<ZonalExpansion<f64>>> = targets
        .iter()
        .map(|t| symbol.as_ref().map(|s| t.expansion.apply_pseudodiff(s)).transpose())
        .collect::<Result<_>>()?;
    let info = targets
        .iter()
        .map(|t| TargetInfo {
            native_norm_sq: Some(t.native_norm_sq),
            lambda_norm_sq: t.lambda_norm_sq,
            smoothness: t.sigma_star,
            derivation: t.derivation.clone(),
        })
        .collect();

    let sup_grid: Vec<SpherePoint<f64>> = if wants(StudyMetric::Sup) || wants(StudyMetric::PseudoSup) {
        // zonal targets are least smooth at ±pole, where the error peaks
        let mut g: Vec<SpherePoint<f64>> = candidate_grid(&cfg.domain, cfg.eval_points)?;
        for t in &targets {
            let p = t.expansion.pole();
            g.push(p.clone());
            g.push(SpherePoint::new(p.coords().iter().map(|c| -c).collect())?);
        }
        g
    } else {
        Vec::new()
    };
    let quad = if wants(StudyMetric::L2) || wants(StudyMetric::PseudoL2) {
        let n_t = cfg.quadrature_nodes.min(k.n_max() + 1);
        Some(SphereQuadrature::<f64>::new(n_t, 2 * n_t)?)
    } else {
        None
    };
    let mut eval_pts: Vec<SpherePoint<f64>> = sup_grid.clone();
    if let Some(q) = &quad {
        eval_pts.extend_from_slice(q.points());
    }
    let n_sup = sup_grid.len();
    // exact target values on all evaluation points
    let f_vals: Vec<Vec<[f64; 2]>> = targets
        .iter()
        .zip(&applied)
        .map(|(t, a)| {
            eval_pts
                .par_iter()
                .map(|x| [t.expansion.eval(x), a.as_ref().map_or(0.0, |a| a.eval(x))])
                .collect()
        })
        .collect();

    let fill_grid: Vec<SpherePoint<f64>> = candidate_grid(&cfg.domain, cfg.fill_candidates)?;
    let lam_weights: Vec<f64> = match &symbol {
        Some(s) => k.weights().iter().zip(&s.values).map(|(w, l)| w * l).collect(),
        None => vec![0.0; k.n_max() + 1],
    };
    let mut rows = Vec::with_capacity(cfg.levels.len());
    let mut notes = Vec::new();
    for (li, &n) in cfg.levels.iter().enumerate() {
        let y: PointSet<SpherePoint<f64>> = generate_points(&cfg.domain, cfg.generator, n, cfg.seed)?;
        let h = fill_distance_on(y.points(), &fill_grid);
        let system = match GramSystem::new(k.clone(), y) {
            Ok(s) => Arc::new(s),
            Err(Error::NotPositiveDefinite { pivot, condition_estimate }) => {
                notes.push(format!("level {li} (n = {n}): Gram matrix not positive definite at pivot {pivot}"));
                rows.push(configs.iter().map(|c| failed_row(li, n, h, condition_estimate, c.metrics.len())).collect());
                continue;
            }
            Err(e) => return Err(e),
        };
        let cond = system.condition_estimate();
        let interps = targets
            .iter()
            .map(|t| {
                let vals: Vec<f64> = system.centers().iter().map(|p| t.expansion.eval(p)).collect();
                Interpolant::from_system(system.clone(), &vals)
            })
            .collect::<Result<Vec<_>>>()?;
        let alphas: Vec<&[f64]> = interps.iter().map(|s| s.coefficients()).collect();
        let s_vals = if eval_pts.is_empty() {
            Vec::new()
        } else {
            batch_series_eval(
                k.family(),
                [k.weights(), &lam_weights[..]],
                system.centers().points(),
                &alphas,
                &eval_pts,
            )
        };
        let mut level_rows = Vec::with_capacity(targets.len());
        for (t, (target, s)) in targets.iter().zip(&interps).enumerate() {
            let diff = |g: usize, which: usize| f_vals[t][g][which] - s_vals[g][which][t];
            let sup_of = |which: usize| (0..n_sup).map(|g| diff(g, which).abs()).fold(0.0, f64::max);
            let l2_of = |which: usize| {
                let q = quad.as_ref().expect("quadrature requested");
                q.weights()
                    .iter()
                    .enumerate()
                    .map(|(i, w)| {
                        let e = diff(n_sup + i, which);
                        w * e * e
                    })
                    .sum::<f64>()
                    .max(0.0)
                    .sqrt()
            };
            let values = metrics
                .iter()
                .map(|m| match m {
                    StudyMetric::Sup => sup_of(0),
                    StudyMetric::PseudoSup => sup_of(1),
                    StudyMetric::L2 => l2_of(0),
                    StudyMetric::PseudoL2 => l2_of(1),
                    StudyMetric::NativeResidual => (target.native_norm_sq - s.native_norm_sq()).max(0.0).sqrt(),
                    StudyMetric::SyntheticH2 => h * h,
                    StudyMetric::SupInner => f64::NAN,
                })
                .collect();
            level_rows.push(LevelRow {
                level: li,
                n_points: n,
                h,
                cond,
                usable: true,
                metrics: values,
            });
        }
        rows.push(level_rows);
    }
    Ok(LevelOutput { info, rows, notes })
}

fn inner_box(domain: &Domain<f64>, x: &[f64]) -> bool {
    match domain {
        Domain::Box { lo, hi } => x
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(&c, (&a, &b))| c >= a + 0.1 * (b - a) && c <= b - 0.1 * (b - a)),
        Domain::Ball { center, radius } => {
            let r: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            r <= 0.8 * radius
        }
        Domain::Sphere { .. } => true,
    }
}

fn euclid_levels(configs: &[StudyConfig]) -> Result<LevelOutput> {
    let cfg = &configs[0];
    let k = cfg.kernel.build_euclid::<f64>()?;
    let targets = configs
        .iter()
        .map(|c| build_euclid_target(&c.target, &c.domain, &k))
        .collect::<Result<Vec<_>>>()?;
    let info = targets
        .iter()
        .map(|t| TargetInfo {
            native_norm_sq: t.native_norm_sq,
            lambda_norm_sq: None,
            smoothness: Some(t.nu_star),
            derivation: t.derivation.clone(),
        })
        .collect();
    let grid: Vec<EuclidPoint<f64>> = candidate_grid(&cfg.domain, cfg.eval_points)?;
    let inner: Vec<bool> = grid.iter().map(|x| inner_box(&cfg.domain, x.coords())).collect();
    let f_vals: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| grid.par_iter().map(|x| t.eval(x)).collect())
        .collect();
    let fill_grid: Vec<EuclidPoint<f64>> = candidate_grid(&cfg.domain, cfg.fill_candidates)?;
    let mut rows = Vec::with_capacity(cfg.levels.len());
    let mut notes = Vec::new();
    for (li, &n) in cfg.levels.iter().enumerate() {
        let y: PointSet<EuclidPoint<f64>> = generate_points(&cfg.domain, cfg.generator, n, cfg.seed)?;
        let h = fill_distance_on(y.points(), &fill_grid);
        let system = match GramSystem::new(k.clone(), y) {
            Ok(s) => Arc::new(s),
            Err(Error::NotPositiveDefinite { pivot, condition_estimate }) => {
                notes.push(format!("level {li} (n = {n}): Gram matrix not positive definite at pivot {pivot}"));
                rows.push(configs.iter().map(|c| failed_row(li, n, h, condition_estimate, c.metrics.len())).collect());
                continue;
            }
            Err(e) => return Err(e),
        };
        let cond = system.condition_estimate();
        let mut level_rows = Vec::with_capacity(targets.len());
        for (t, target) in targets.iter().enumerate() {
            let vals: Vec<f64> = system.centers().iter().map(|p| target.eval(p)).collect();
            let s = Interpolant::from_system(system.clone(), &vals)?;
            let err: Vec<f64> = grid
                .par_iter()
                .zip(&f_vals[t])
                .map(|(x, f)| (f - s.evaluate(x)).abs())
                .collect();
            let sup = err.iter().copied().fold(0.0, f64::max);
            let sup_inner = err
                .iter()
                .zip(&inner)
                .filter(|(_, &i)| i)
                .map(|(e, _)| *e)
                .fold(0.0, f64::max);
            let rms = (err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64).sqrt();
            let values = cfg
                .metrics
                .iter()
                .map(|m| match m {
                    StudyMetric::Sup => sup,
                    StudyMetric::SupInner => sup_inner,
                    StudyMetric::L2 => rms,
                    StudyMetric::NativeResidual => target
                        .native_norm_sq
                        .map_or(f64::NAN, |f2| (f2 - s.native_norm_sq()).max(0.0).sqrt()),
                    StudyMetric::SyntheticH2 => h * h,
                    StudyMetric::PseudoSup | StudyMetric::PseudoL2 => f64::NAN,
                })
                .collect();
            level_rows.push(LevelRow {
                level: li,
                n_points: n,
                h,
                cond,
                usable: true,
                metrics: values,
            });
        }
        rows.push(level_rows);
    }
    Ok(LevelOutput { info, rows, notes })
}
