//! Harmonic-space dimensions, Gegenbauer polynomials normalized for the
//! addition theorem, and univariate radial profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dimension `d_n` of the space of degree-`n` spherical harmonics on `S^d`:
/// `(2n+d-1)(n+d-2)! / (n!(d-1)!)`, with `d_0 = 1`.
pub fn harmonic_dimension(d: usize, n: usize) -> u64 {
    assert!(d >= 1, "sphere dimension must be positive");
    if n == 0 {
        return 1;
    }
    if d == 1 {
        return 2;
    }
    // (2n+d-1)/(d-1) * C(n+d-2, n); the division is exact after the product.
    let binom = binomial((n + d - 2) as u64, n as u64);
    (2 * n as u64 + d as u64 - 1) * binom / (d as u64 - 1)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("harmonic dimension overflows u64")
}

/// Harmonic dimensions `d_0..d_{N_max}` for one sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereBasisTable {
    pub d: usize,
    pub n_max: usize,
    pub dims: Vec<u64>,
}

impl SphereBasisTable {
    pub fn new(d: usize, n_max: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("sphere dimension must be at least 1".into()));
        }
        let dims = (0..=n_max).map(|n| harmonic_dimension(d, n)).collect();
        Ok(Self { d, n_max, dims })
    }
}

/// The family `C̃_n`, `n = 0..=N_max`, of ultraspherical polynomials with
/// parameter `(d-1)/2` rescaled so that `C̃_n(1) = d_n`.
///
/// With this normalization `C̃_n(x·y) = Σ_j Y_j^n(x) Y_j^n(y)` for an
/// orthonormal basis of degree-`n` harmonics under the normalized measure,
/// so `C̃_n(x·)` is the reproducing kernel of the projector `T_n`.
///
/// Internally the recurrence runs on `R_n = C̃_n / d_n`, which satisfies
/// `R_0 = 1`, `R_1 = t`, `R_{n+1} = ((2n+2λ) t R_n - n R_{n-1}) / (n+2λ)`.
#[derive(Debug, Clone)]
pub struct AdditionFamily<T> {
    d: usize,
    n_max: usize,
    dims: Vec<T>,
    // R_{n+1} = up[n] * t * R_n - down[n] * R_{n-1}, n >= 1
    up: Vec<T>,
    down: Vec<T>,
}

impl<T: Real> AdditionFamily<T> {
    pub fn new(d: usize, n_max: usize) -> Result<Self> {
        let table = SphereBasisTable::new(d, n_max)?;
        let two_lambda = T::of_usize(d - 1);
        let mut up = vec![T::zero(); n_max.max(1)];
        let mut down = vec![T::zero(); n_max.max(1)];
        for n in 1..n_max {
            let nn = T::of_usize(n);
            let den = nn + two_lambda;
            up[n] = (nn + nn + two_lambda) / den;
            down[n] = nn / den;
        }
        Ok(Self {
            d,
            n_max,
            dims: table.dims.iter().map(|&x| T::lit(x as f64)).collect(),
            up,
            down,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `d_0..d_{N_max}` as scalars.
    pub fn dims(&self) -> &[T] {
        &self.dims
    }

    /// Fills `out[n] = C̃_n(t)` for `n < out.len() <= N_max + 1`.
    pub fn eval_all(&self, t: T, out: &mut [T]) {
        let len = out.len().min(self.n_max + 1);
        if len == 0 {
            return;
        }
        let mut prev = T::one();
        out[0] = self.dims[0];
        if len == 1 {
            return;
        }
        let mut cur = t;
        out[1] = self.dims[1] * cur;
        for n in 1..len - 1 {
            let next = self.up[n] * t * cur - self.down[n] * prev;
            prev = cur;
            cur = next;
            out[n + 1] = self.dims[n + 1] * cur;
        }
    }

    /// `C̃_n(t)` for a single degree.
    pub fn eval(&self, n: usize, t: T) -> T {
        assert!(n <= self.n_max, "degree {n} exceeds table size {}", self.n_max);
        let mut out = vec![T::zero(); n + 1];
        self.eval_all(t, &mut out);
        out[n]
    }

    /// `Σ_n w_n R_n(t)` where `w_n` already includes the factor `d_n`.
    ///
    /// Single forward pass of the three-term recurrence.
    #[inline]
    pub fn weighted_sum(&self, weights: &[T], t: T) -> T {
        let [s] = self.weighted_sums([weights], t);
        s
    }

    /// Several weighted sums sharing one recurrence pass.
    #[inline]
    pub fn weighted_sums<const K: usize>(&self, weights: [&[T]; K], t: T) -> [T; K] {
        let len = weights.iter().map(|w| w.len()).min().unwrap_or(0).min(self.n_max + 1);
        let mut acc = [T::zero(); K];
        if len == 0 {
            return acc;
        }
        for k in 0..K {
            acc[k] = weights[k][0];
        }
        if len == 1 {
            return acc;
        }
        let mut prev = T::one();
        let mut cur = t;
        for k in 0..K {
            acc[k] = acc[k] + weights[k][1] * cur;
        }
        for n in 1..len - 1 {
            let next = self.up[n] * t * cur - self.down[n] * prev;
            prev = cur;
            cur = next;
            for k in 0..K {
                acc[k] = acc[k] + weights[k][n + 1] * cur;
            }
        }
        acc
    }

    /// Blocked variant of [`Self::weighted_sums`] over `B` arguments at once.
    ///
    /// Interleaving independent recurrences hides the latency of the
    /// dependent multiply chain; results are identical to the scalar path.
    #[inline]
    pub fn weighted_sums_block<const K: usize, const B: usize>(
        &self,
        weights: [&[T]; K],
        ts: [T; B],
    ) -> [[T; B]; K] {
        let len = weights.iter().map(|w| w.len()).min().unwrap_or(0).min(self.n_max + 1);
        let mut acc = [[T::zero(); B]; K];
        if len == 0 {
            return acc;
        }
        for k in 0..K {
            acc[k] = [weights[k][0]; B];
        }
        if len == 1 {
            return acc;
        }
        let mut prev = [T::one(); B];
        let mut cur = ts;
        for k in 0..K {
            for b in 0..B {
                acc[k][b] = acc[k][b] + weights[k][1] * cur[b];
            }
        }
        for n in 1..len - 1 {
            let (u, v) = (self.up[n], self.down[n]);
            for b in 0..B {
                let next = u * ts[b] * cur[b] - v * prev[b];
                prev[b] = cur[b];
                cur[b] = next;
            }
            for k in 0..K {
                let w = weights[k][n + 1];
                for b in 0..B {
                    acc[k][b] = acc[k][b] + w * cur[b];
                }
            }
        }
        acc
    }

    /// Converts coefficients `c_n` of `Σ c_n C̃_n` into recurrence weights `c_n d_n`.
    pub fn to_weights(&self, coeffs: &[T]) -> Vec<T> {
        coeffs.iter().zip(&self.dims).map(|(&c, &d)| c * d).collect()
    }
}

/// `C̃_n(t)` on `S^d`, normalized so that `C̃_n(1) = d_n`.
pub fn gegenbauer_addition<T: Real>(d: usize, n: usize, t: T) -> Result<T> {
    if !(t.abs() <= T::one()) {
        return Err(Error::ArgumentOutOfRange(t.to_f64_lossy()));
    }
    Ok(AdditionFamily::new(d, n)?.eval(n, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProfileFamily {
    /// Minimal-degree compactly supported Wendland function `φ_{d,k}`.
    Wendland { d: usize, k: usize },
    /// Half-integer Matérn (Sobolev spline) `m = 1, 2`.
    Matern { m: usize },
}

/// Univariate radial profile normalized to 1 at the origin, applied as `r ↦ φ(r/ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile<T> {
    pub family: ProfileFamily,
    /// Decay exponent `s` of the Fourier transform, `(1+|ω|)^{-2s}`.
    pub s: T,
    pub rho: T,
}

impl<T: Real> RadialProfile<T> {
    /// Wendland `φ_{d,k}` for `d ∈ {1,2,3}`, `k ∈ {1,2}`; `s = (d+2k+1)/2`.
    pub fn wendland(d: usize, k: usize, rho: T) -> Result<Self> {
        if !(1..=3).contains(&d) || !(1..=2).contains(&k) {
            return Err(Error::InvalidArgument(format!(
                "wendland({d},{k}) not tabulated; supported d in 1..=3, k in 1..=2"
            )));
        }
        check_rho(rho)?;
        Ok(Self {
            family: ProfileFamily::Wendland { d, k },
            s: T::of_usize(d + 2 * k + 1) / T::lit(2.0),
            rho,
        })
    }

    /// Matérn profile of half-integer order `m + 1/2`, `m ∈ {1,2}`.
    ///
    /// `s` is the Sobolev exponent of the native space in the ambient
    /// dimension of the study (`m + 1/2 + d/2`), supplied by the caller.
    pub fn matern(m: usize, rho: T, s: T) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(Error::InvalidArgument(format!("matern({m}) not tabulated; m in 1..=2")));
        }
        check_rho(rho)?;
        if !(s > T::zero()) {
            return Err(Error::InvalidArgument("smoothness s must be positive".into()));
        }
        Ok(Self {
            family: ProfileFamily::Matern { m },
            s,
            rho,
        })
    }

    pub fn support_radius(&self) -> Option<T> {
        match self.family {
            ProfileFamily::Wendland { .. } => Some(self.rho),
            ProfileFamily::Matern { .. } => None,
        }
    }

    #[inline]
    pub fn eval(&self, r: T) -> T {
        let u = r.abs() / self.rho;
        let one = T::one();
        let c = T::lit;
        match self.family {
            ProfileFamily::Wendland { d, k } => {
                if u >= one {
                    return T::zero();
                }
                let v = one - u;
                match (d / 2 + k + 1, k) {
                    // l = floor(d/2) + k + 1
                    (2, 1) => v.powi(3) * (c(3.0) * u + one),
                    (3, 1) => v.powi(4) * (c(4.0) * u + one),
                    (3, 2) => v.powi(5) * (c(8.0) * u * u + c(5.0) * u + one),
                    (4, 2) => v.powi(6) * (c(35.0) * u * u + c(18.0) * u + c(3.0)) / c(3.0),
                    _ => unreachable!("validated at construction"),
                }
            }
            ProfileFamily::Matern { m } => {
                let e = (-u).exp();
                match m {
                    1 => (one + u) * e,
                    2 => (one + u + u * u / c(3.0)) * e,
                    _ => unreachable!("validated at construction"),
                }
            }
        }
    }
}

fn check_rho<T: Real>(rho: T) -> Result<()> {
    if !(rho > T::zero()) || !rho.is_finite() {
        return Err(Error::InvalidArgument("scale rho must be positive and finite".into()));
    }
    Ok(())
}

pub fn radial_profile_eval<T: Real>(p: &RadialProfile<T>, r: T) -> T {
    p.eval(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Legendre polynomial via the positive cosine expansion
    /// `P_n(cos θ) = Σ_k g_k g_{n-k} cos((n-2k)θ)`, `g_k = C(2k,k)/4^k`.
    fn legendre_cosine_series(n: usize, t: f64) -> f64 {
        let theta = t.clamp(-1.0, 1.0).acos();
        let mut g = vec![1.0f64; n + 1];
        for k in 1..=n {
            g[k] = g[k - 1] * (2 * k - 1) as f64 / (2 * k) as f64;
        }
        (0..=n)
            .map(|k| g[k] * g[n - k] * (((n as f64) - 2.0 * k as f64) * theta).cos())
            .sum()
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(harmonic_dimension(2, 0), 1);
        assert_eq!(harmonic_dimension(2, 3), 7);
        assert_eq!(harmonic_dimension(3, 2), 9);
        assert_eq!(harmonic_dimension(1, 5), 2);
        for n in 0..100 {
            assert_eq!(harmonic_dimension(2, n), 2 * n as u64 + 1);
            assert_eq!(harmonic_dimension(3, n), (n as u64 + 1).pow(2));
        }
        // sum over n <= N of d_n equals dim of polynomials of degree N on S^d
        let total: u64 = (0..=6).map(|n| harmonic_dimension(4, n)).sum();
        assert_eq!(total, binomial(6 + 4, 4) + binomial(5 + 4, 4));
    }

    #[test]
    fn addition_examples() {
        for t in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(gegenbauer_addition(2, 0, t).unwrap(), 1.0);
        }
        assert_abs_diff_eq!(gegenbauer_addition(2, 2, 1.0).unwrap(), 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gegenbauer_addition(2, 2, 0.5).unwrap(), -0.625, epsilon = 1e-14);
        assert!(matches!(
            gegenbauer_addition(2, 2, 1.5),
            Err(Error::ArgumentOutOfRange(_))
        ));
    }

    #[test]
    fn value_at_one_is_dimension() {
        for d in [2usize, 3] {
            let fam = AdditionFamily::<f64>::new(d, 50).unwrap();
            let mut out = vec![0.0; 51];
            fam.eval_all(1.0, &mut out);
            for n in 0..=50 {
                assert_relative_eq!(out[n], harmonic_dimension(d, n) as f64, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn circle_family_is_chebyshev() {
        let fam = AdditionFamily::<f64>::new(1, 10).unwrap();
        let t: f64 = 0.37;
        for n in 1..=10 {
            let cheb = (n as f64 * t.acos()).cos();
            assert_abs_diff_eq!(fam.eval(n, t), 2.0 * cheb, epsilon = 1e-13);
        }
    }

    #[test]
    fn recurrence_matches_direct_legendre() {
        let fam = AdditionFamily::<f64>::new(2, 50).unwrap();
        let mut out = vec![0.0; 51];
        for i in 0..=200 {
            let t = -1.0 + 2.0 * i as f64 / 200.0;
            fam.eval_all(t, &mut out);
            for n in 0..=50 {
                let direct = (2 * n + 1) as f64 * legendre_cosine_series(n, t);
                let scale = (2 * n + 1) as f64;
                assert!(
                    (out[n] - direct).abs() <= 1e-10 * scale,
                    "n={n} t={t}: {} vs {direct}",
                    out[n]
                );
            }
        }
    }

    #[test]
    fn sums_agree_with_termwise_evaluation() {
        let fam = AdditionFamily::<f64>::new(3, 40).unwrap();
        let coeffs: Vec<f64> = (0..=40).map(|n| 1.0 / (1.0 + n as f64).powi(3)).collect();
        let w = fam.to_weights(&coeffs);
        let mut out = vec![0.0; 41];
        let ts = [-0.9, -0.2, 0.1, 0.55];
        let block = fam.weighted_sums_block([&w[..]], ts);
        for (b, &t) in ts.iter().enumerate() {
            fam.eval_all(t, &mut out);
            let direct: f64 = coeffs.iter().zip(&out).map(|(c, v)| c * v).sum();
            assert_relative_eq!(fam.weighted_sum(&w, t), direct, max_relative = 1e-13);
            assert_eq!(block[0][b], fam.weighted_sum(&w, t));
        }
    }

    #[test]
    fn profile_examples() {
        let w31 = RadialProfile::wendland(3, 1, 1.0).unwrap();
        assert_abs_diff_eq!(w31.eval(0.5), 0.1875, epsilon = 1e-15);
        assert_eq!(w31.s, 3.0);
        let m1 = RadialProfile::matern(1, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(m1.eval(1.0), 2.0 / std::f64::consts::E, epsilon = 1e-15);
        assert_abs_diff_eq!(m1.eval(1.0), 0.7357589, epsilon = 1e-7);
        assert!(m1.support_radius().is_none());
        assert!(RadialProfile::<f64>::wendland(4, 1, 1.0).is_err());
        assert!(RadialProfile::<f64>::matern(3, 1.0, 2.0).is_err());
        assert!(RadialProfile::<f64>::wendland(1, 1, 0.0).is_err());
    }

    #[test]
    fn profiles_normalized_supported_and_monotone() {
        let mut profiles = Vec::new();
        for (d, k) in [(1, 1), (2, 1), (3, 1), (1, 2), (3, 2)] {
            profiles.push(RadialProfile::wendland(d, k, 0.7).unwrap());
        }
        profiles.push(RadialProfile::matern(1, 0.3, 2.0).unwrap());
        profiles.push(RadialProfile::matern(2, 0.3, 3.0).unwrap());
        for p in &profiles {
            assert_abs_diff_eq!(p.eval(0.0), 1.0, epsilon = 1e-15);
            let mut last = p.eval(0.0);
            for i in 1..=3000 {
                let v = p.eval(i as f64 * 1e-3);
                assert!(v <= last + 1e-15, "{p:?} increases at r={}", i as f64 * 1e-3);
                last = v;
            }
            if let Some(r) = p.support_radius() {
                assert_eq!(p.eval(r), 0.0);
                assert_eq!(p.eval(r * 1.5), 0.0);
            }
        }
        // wendland(d,k) decay exponent
        assert_eq!(RadialProfile::<f64>::wendland(1, 2, 1.0).unwrap().s, 3.0);
    }
}
