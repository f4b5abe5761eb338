//! Exact spectral computations on the sphere: zonal expansions, native and
//! `H_{Λφ}` norms, pseudodifferential operators, product quadrature on `S^2`
//! and dense-grid sup norms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SpherePoint};
use crate::interpolation::Interpolant;
use crate::kernels::SphereSeriesKernel;
use crate::orthopoly::AdditionFamily;
use crate::scalar::Real;

/// `f(x) = Σ_n c_n C̃_n(x·x₀)` for a pole `x₀`.
#[derive(Debug, Clone)]
pub struct ZonalExpansion<T> {
    pole: SpherePoint<T>,
    coeffs: Vec<T>,
    family: AdditionFamily<T>,
    weights: Vec<T>,
}

impl<T: Real> ZonalExpansion<T> {
    pub fn new(pole: SpherePoint<T>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("zonal expansion needs at least c_0".into()));
        }
        let family = AdditionFamily::new(pole.sphere_dim(), coeffs.len() - 1)?;
        let weights = family.to_weights(&coeffs);
        Ok(Self {
            pole,
            coeffs,
            family,
            weights,
        })
    }

    /// The kernel's own translate `φ(·, x₀)`: `c_n = a_n`.
    pub fn kernel_translate(k: &SphereSeriesKernel<T>, pole: SpherePoint<T>) -> Result<Self> {
        check_dim(k.d(), pole.sphere_dim())?;
        Self::new(pole, k.coefficients().to_vec())
    }

    pub fn pole(&self) -> &SpherePoint<T> {
        &self.pole
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn d(&self) -> usize {
        self.family.d()
    }

    pub fn n_max(&self) -> usize {
        self.family.n_max()
    }

    pub fn eval(&self, x: &SpherePoint<T>) -> T {
        self.family.weighted_sum(&self.weights, x.dot(&self.pole))
    }

    /// `‖T_n f‖²_{L2} = c_n² d_n`.
    pub fn projection_l2_sq(&self, n: usize) -> T {
        self.coeffs.get(n).map_or(T::zero(), |&c| c * c * self.family.dims()[n])
    }

    /// `T_n f` as a single-mode expansion.
    pub fn project(&self, n: usize) -> Self {
        let mut c = vec![T::zero(); n + 1];
        c[n] = self.coeffs.get(n).copied().unwrap_or_else(T::zero);
        Self::new(self.pole.clone(), c).expect("valid single mode")
    }

    /// Multiplies every coefficient by `scale`.
    pub fn scaled(&self, scale: T) -> Self {
        Self::new(self.pole.clone(), self.coeffs.iter().map(|&c| c * scale).collect())
            .expect("same shape")
    }
}

pub fn zonal_eval<T: Real>(f: &ZonalExpansion<T>, x: &SpherePoint<T>) -> Result<T> {
    check_dim(f.d(), x.sphere_dim())?;
    Ok(f.eval(x))
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_compatible<T: Real>(f: &ZonalExpansion<T>, k: &SphereSeriesKernel<T>) -> Result<()> {
    check_dim(k.d(), f.d())?;
    if f.n_max() > k.n_max() {
        return Err(Error::InvalidArgument(format!(
            "expansion degree {} exceeds kernel truncation {}",
            f.n_max(),
            k.n_max()
        )));
    }
    Ok(())
}

/// `‖f‖²_φ = Σ_n a_n⁻¹ c_n² d_n`.
pub fn hphi_norm_sq<T: Real>(f: &ZonalExpansion<T>, k: &SphereSeriesKernel<T>) -> Result<T> {
    check_compatible(f, k)?;
    Ok((0..=f.n_max())
        .map(|n| f.projection_l2_sq(n) / k.coefficients()[n])
        .sum())
}

/// `‖f‖²_{Λφ} = Σ_{n: λ_n>0} (λ_n a_n)⁻² c_n² d_n`.
///
/// A nonzero mean `c_0` with `λ_0 = 0` has infinite weight and is an error.
pub fn hlambdaphi_norm_sq<T: Real>(
    f: &ZonalExpansion<T>,
    k: &SphereSeriesKernel<T>,
    symbol: &PseudoDiffSymbol<T>,
) -> Result<T> {
    check_compatible(f, k)?;
    symbol.check_covers(f.n_max())?;
    let mut total = T::zero();
    for n in 0..=f.n_max() {
        let lam = symbol.values[n];
        let c = f.coeffs[n];
        if lam == T::zero() {
            if c != T::zero() {
                return Err(Error::MeanNotAnnihilated {
                    c0: c.to_f64_lossy(),
                });
            }
            continue;
        }
        let w = lam * k.coefficients()[n];
        total = total + f.projection_l2_sq(n) / (w * w);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SymbolRule {
    /// `λ_n = (n(d+n-2))^s`.
    AssumptionS { s: f64 },
    Identity,
    Explicit,
}

/// Symbol `λ_0..λ_{N_max}` of a pseudodifferential operator on `S^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDiffSymbol<T> {
    pub rule: SymbolRule,
    pub values: Vec<T>,
}

impl<T: Real> PseudoDiffSymbol<T> {
    /// `λ_n = (n(d+n-2))^s`, `n = 0..=n_max`.
    pub fn assumption(d: usize, s: f64, n_max: usize) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("operator order s = {s} must be positive")));
        }
        let values = (0..=n_max)
            .map(|n| {
                let base = n as f64 * (d as f64 + n as f64 - 2.0);
                T::lit(base.max(0.0).powf(s))
            })
            .collect();
        Ok(Self {
            rule: SymbolRule::AssumptionS { s },
            values,
        })
    }

    pub fn identity(n_max: usize) -> Self {
        Self {
            rule: SymbolRule::Identity,
            values: vec![T::one(); n_max + 1],
        }
    }

    pub fn explicit(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("symbol needs at least λ_0".into()));
        }
        Ok(Self {
            rule: SymbolRule::Explicit,
            values,
        })
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    fn check_covers(&self, n_max: usize) -> Result<()> {
        if self.n_max() < n_max {
            return Err(Error::SizeMismatch {
                what: "symbol",
                expected: n_max + 1,
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Application of a pseudodifferential operator.
pub trait PseudoDiff<T: Real> {
    type Output;

    fn apply_pseudodiff(&self, symbol: &PseudoDiffSymbol<T>) -> Result<Self::Output>;
}

impl<T: Real> PseudoDiff<T> for ZonalExpansion<T> {
    type Output = ZonalExpansion<T>;

    /// Coefficients become `λ_n c_n`.
    fn apply_pseudodiff(&self, symbol: &PseudoDiffSymbol<T>) -> Result<Self::Output> {
        symbol.check_covers(self.n_max())?;
        ZonalExpansion::new(
            self.pole.clone(),
            self.coeffs.iter().zip(&symbol.values).map(|(&c, &l)| c * l).collect(),
        )
    }
}

impl<T: Real> PseudoDiff<T> for &ZonalExpansion<T> {
    type Output = ZonalExpansion<T>;

    fn apply_pseudodiff(&self, symbol: &PseudoDiffSymbol<T>) -> Result<Self::Output> {
        (*self).apply_pseudodiff(symbol)
    }
}

/// `(ΛS)(x) = Σ_y α_y Σ_n a_n λ_n C̃_n(x·y)`.
#[derive(Debug, Clone)]
pub struct AppliedInterpolant<'a, T: Real> {
    interpolant: &'a Interpolant<T, SphereSeriesKernel<T>>,
    weights: Vec<T>,
}

impl<'a, T: Real> AppliedInterpolant<'a, T> {
    pub fn eval(&self, x: &SpherePoint<T>) -> T {
        let fam = self.interpolant.kernel().family();
        self.interpolant
            .centers()
            .iter()
            .zip(self.interpolant.coefficients())
            .map(|(y, &a)| a * fam.weighted_sum(&self.weights, x.dot(y)))
            .sum()
    }

    /// Recurrence weights `a_n λ_n d_n`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

impl<'a, T: Real> PseudoDiff<T> for &'a Interpolant<T, SphereSeriesKernel<T>> {
    type Output = AppliedInterpolant<'a, T>;

    fn apply_pseudodiff(&self, symbol: &PseudoDiffSymbol<T>) -> Result<Self::Output> {
        let k = self.kernel();
        symbol.check_covers(k.n_max())?;
        let weights = k
            .weights()
            .iter()
            .zip(&symbol.values)
            .map(|(&w, &l)| w * l)
            .collect();
        Ok(AppliedInterpolant {
            interpolant: self,
            weights,
        })
    }
}

pub fn apply_pseudodiff<T: Real, G: PseudoDiff<T>>(symbol: &PseudoDiffSymbol<T>, g: G) -> Result<G::Output> {
    g.apply_pseudodiff(symbol)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let pi = T::PI();
    let nn = T::of_usize(n);
    for i in 0..n.div_ceil(2) {
        let mut x = (pi * (T::of_usize(i) + T::lit(0.75)) / (nn + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    if n == 0 {
        return (T::one(), T::zero());
    }
    for k in 1..n {
        let kk = T::of_usize(k);
        let p2 = ((kk + kk + T::one()) * x * p1 - kk * p0) / (kk + T::one());
        p0 = p1;
        p1 = p2;
    }
    let d = T::of_usize(n) * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Product rule on `S^2`: Gauss–Legendre in `t = cos θ` times equispaced
/// longitudes. Weights sum to 1 (normalized measure).
#[derive(Debug, Clone)]
pub struct SphereQuadrature<T> {
    n_t: usize,
    n_phi: usize,
    points: Vec<SpherePoint<T>>,
    weights: Vec<T>,
}

impl<T: Real> SphereQuadrature<T> {
    pub fn new(n_t: usize, n_phi: usize) -> Result<Self> {
        if n_t == 0 || n_phi == 0 {
            return Err(Error::InvalidArgument("quadrature sizes must be positive".into()));
        }
        let (ts, ws) = gauss_legendre::<T>(n_t);
        let mut points = Vec::with_capacity(n_t * n_phi);
        let mut weights = Vec::with_capacity(n_t * n_phi);
        let scale = T::one() / (T::lit(2.0) * T::of_usize(n_phi));
        for (&t, &w) in ts.iter().zip(&ws) {
            let r = (T::one() - t * t).max(T::zero()).sqrt();
            for j in 0..n_phi {
                let phi = T::lit(2.0) * T::PI() * T::of_usize(j) / T::of_usize(n_phi);
                points.push(SpherePoint::new(vec![r * phi.cos(), r * phi.sin(), t])?);
                weights.push(w * scale);
            }
        }
        Ok(Self {
            n_t,
            n_phi,
            points,
            weights,
        })
    }

    /// Exact for products of two degree-`n_max` polynomials:
    /// `n_t = N_max + 1`, `n_φ = 2 N_max + 2`.
    pub fn for_degree(n_max: usize) -> Result<Self> {
        Self::new(n_max + 1, 2 * n_max + 2)
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        (2 * self.n_t - 1).min(self.n_phi - 1)
    }

    pub fn points(&self) -> &[SpherePoint<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `∫ g dν`.
    pub fn integrate(&self, g: impl Fn(&SpherePoint<T>) -> T + Sync) -> T {
        let vals: Vec<T> = self.points.par_iter().map(&g).collect();
        vals.iter().zip(&self.weights).map(|(&v, &w)| v * w).sum()
    }
}

/// `‖g‖_{L2(S^2)}` under the normalized measure.
pub fn l2_norm<T: Real>(g: impl Fn(&SpherePoint<T>) -> T + Sync, q: &SphereQuadrature<T>) -> T {
    q.integrate(|x| {
        let v = g(x);
        v * v
    })
    .max(T::zero())
    .sqrt()
}

/// `max |g|` over `grid`.
pub fn sup_error<T: Real, P: Point<T>>(g: impl Fn(&P) -> T + Sync, grid: &[P]) -> Result<T> {
    if grid.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let vals: Vec<T> = grid.par_iter().map(|x| g(x).abs()).collect();
    Ok(vals.into_iter().fold(T::zero(), T::max))
}

/// Both sides of `‖T_n f‖_∞ <= sqrt(d_n) ‖T_n f‖_{L2}`: the left from a
/// dense grid, the right from quadrature.
pub fn norm_comparison_check<T: Real>(
    f: &ZonalExpansion<T>,
    n: usize,
    q: &SphereQuadrature<T>,
    grid: &[SpherePoint<T>],
) -> Result<(T, T)> {
    if n > f.n_max() {
        return Err(Error::InvalidArgument(format!(
            "degree {n} exceeds expansion degree {}",
            f.n_max()
        )));
    }
    let tn = f.project(n);
    let lhs = sup_error(|x| tn.eval(x), grid)?;
    let dn = f.family.dims()[n];
    let rhs = dn.sqrt() * l2_norm(|x| tn.eval(x), q);
    Ok((lhs, rhs))
}

/// A finite sum of zonal expansions with different poles; a non-zonal
/// band-limited function with exactly computable projections.
#[derive(Debug, Clone)]
pub struct ZonalSum<T> {
    pub terms: Vec<ZonalExpansion<T>>,
}

impl<T: Real> ZonalSum<T> {
    pub fn eval(&self, x: &SpherePoint<T>) -> T {
        self.terms.iter().map(|f| f.eval(x)).sum()
    }

    pub fn project(&self, n: usize) -> Self {
        Self {
            terms: self.terms.iter().map(|f| f.project(n)).collect(),
        }
    }

    /// `‖T_n g‖² = Σ_{j,k} c_{j,n} c_{k,n} C̃_n(p_j·p_k)`.
    pub fn projection_l2_sq(&self, n: usize) -> T {
        let Some(first) = self.terms.first() else {
            return T::zero();
        };
        let fam = &first.family;
        let mut total = T::zero();
        for a in &self.terms {
            for b in &self.terms {
                let (ca, cb) = (
                    a.coeffs.get(n).copied().unwrap_or_else(T::zero),
                    b.coeffs.get(n).copied().unwrap_or_else(T::zero),
                );
                total = total + ca * cb * fam.eval(n, a.pole.dot(&b.pole));
            }
        }
        total
    }
}

/// Per-degree accumulations over centers `Y` with coefficients `α`:
/// `P_n = Σ_y α_y C̃_n(x₀·y)` and `Q_n = Σ_{y,y'} α_y α_{y'} C̃_n(y·y')`.
fn mode_sums<T: Real>(
    family: &AdditionFamily<T>,
    centers: &[SpherePoint<T>],
    alpha: &[T],
    pole: Option<&SpherePoint<T>>,
) -> (Vec<T>, Vec<T>) {
    let len = family.n_max() + 1;
    let q_rows: Vec<Vec<T>> = (0..centers.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![T::zero(); len];
            let mut buf = vec![T::zero(); len];
            for j in 0..=i {
                let w = if i == j { alpha[i] * alpha[i] } else { T::lit(2.0) * alpha[i] * alpha[j] };
                family.eval_all(centers[i].dot(&centers[j]), &mut buf);
                for (a, &b) in acc.iter_mut().zip(&buf) {
                    *a = *a + w * b;
                }
            }
            acc
        })
        .collect();
    let mut q = vec![T::zero(); len];
    for row in &q_rows {
        for (a, &b) in q.iter_mut().zip(row) {
            *a = *a + b;
        }
    }
    let mut p = vec![T::zero(); len];
    if let Some(x0) = pole {
        let mut buf = vec![T::zero(); len];
        for (y, &a) in centers.iter().zip(alpha) {
            family.eval_all(x0.dot(y), &mut buf);
            for (acc, &b) in p.iter_mut().zip(&buf) {
                *acc = *acc + a * b;
            }
        }
    }
    (p, q)
}

/// `‖S‖²_φ = Σ_n a_n⁻¹ ‖T_n S‖²` computed mode by mode, with
/// `‖T_n S‖² = a_n² Σ_{y,y'} α_y α_{y'} C̃_n(y·y')`.
pub fn interpolant_hphi_norm_sq<T: Real>(s: &Interpolant<T, SphereSeriesKernel<T>>) -> T {
    let k = s.kernel();
    let (_, q) = mode_sums(k.family(), s.centers().points(), s.coefficients(), None);
    k.coefficients().iter().zip(&q).map(|(&a, &qn)| a * qn).sum()
}

/// `‖f - S‖²_φ` computed mode by mode from
/// `‖T_n(f - S)‖² = c_n² d_n - 2 c_n a_n P_n + a_n² Q_n`, without using
/// the orthogonality of `f - S` and `S`.
pub fn residual_native_norm_sq<T: Real>(
    f: &ZonalExpansion<T>,
    s: &Interpolant<T, SphereSeriesKernel<T>>,
) -> Result<T> {
    let k = s.kernel();
    check_compatible(f, k)?;
    let (p, q) = mode_sums(k.family(), s.centers().points(), s.coefficients(), Some(f.pole()));
    let dims = k.family().dims();
    let mut total = T::zero();
    for n in 0..=k.n_max() {
        let a = k.coefficients()[n];
        let c = f.coeffs.get(n).copied().unwrap_or_else(T::zero);
        let mode = c * c * dims[n] - T::lit(2.0) * c * a * p[n] + a * a * q[n];
        total = total + mode / a;
    }
    Ok(total)
}

/// Pythagorean check for a zonal target: `(‖f‖² - ‖S‖², |‖f‖² - ‖f-S‖² - ‖S‖²|)`
/// with `‖f - S‖²` from [`residual_native_norm_sq`].
pub fn sphere_pythagoras_check<T: Real>(
    f: &ZonalExpansion<T>,
    s: &Interpolant<T, SphereSeriesKernel<T>>,
) -> Result<crate::interpolation::PythagorasCheck<T>> {
    let f_sq = hphi_norm_sq(f, s.kernel())?;
    let r_sq = residual_native_norm_sq(f, s)?;
    crate::interpolation::pythagoras_check(f_sq, s, Some(r_sq))
}

/// Evaluates, in one pass over `grid × centers`, the series
/// `Σ_y α_{j,y} Σ_n w_{k,n} R_n(x·y)` for `K` weight sequences and every
/// coefficient vector `α_j`. Output is indexed `[g][k][j]`.
pub fn batch_series_eval<T: Real, const K: usize>(
    family: &AdditionFamily<T>,
    weights: [&[T]; K],
    centers: &[SpherePoint<T>],
    alphas: &[&[T]],
    grid: &[SpherePoint<T>],
) -> Vec<[Vec<T>; K]> {
    const B: usize = 8;
    let nj = alphas.len();
    grid.par_iter()
        .map(|x| {
            let mut acc: [Vec<T>; K] = std::array::from_fn(|_| vec![T::zero(); nj]);
            let mut i = 0;
            while i < centers.len() {
                let width = B.min(centers.len() - i);
                let ts: [T; B] = std::array::from_fn(|b| {
                    if b < width {
                        x.dot(&centers[i + b])
                    } else {
                        T::zero()
                    }
                });
                let vals = family.weighted_sums_block(weights, ts);
                for k in 0..K {
                    for (j, alpha) in alphas.iter().enumerate() {
                        let mut s = T::zero();
                        for b in 0..width {
                            s = s + alpha[i + b] * vals[k][b];
                        }
                        acc[k][j] = acc[k][j] + s;
                    }
                }
                i += width;
            }
            acc
        })
        .collect()
}
