//! φ-spline interpolants `S(x) = Σ_y α_y φ(d(x, y))`, native norms and the
//! power function.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointSet};
use crate::io::write_numeric_table;
use crate::kernels::{Kernel, KernelSpec};
use crate::linalg::{Cholesky, SymmetricMatrix};
use crate::scalar::Real;

/// Relative tolerance of the interpolation conditions checked at build time.
pub const INTERPOLATION_TOLERANCE: f64 = 1e-9;

/// Kernel, centers and the factored Gram matrix; shared by every
/// interpolant on the same centers.
#[derive(Debug, Clone)]
pub struct GramSystem<T, K: Kernel<T>>
where
    T: Real,
{
    kernel: K,
    centers: PointSet<K::Point>,
    gram: SymmetricMatrix<T>,
    factor: Cholesky<T>,
}

impl<T: Real, K: Kernel<T>> GramSystem<T, K> {
    /// Assembles and factors `A_ij = φ(d(y_i, y_j))`.
    ///
    /// No jitter is added: a numerically indefinite matrix is reported with
    /// the failing pivot.
    pub fn new(kernel: K, centers: PointSet<K::Point>) -> Result<Self> {
        if let Some(p) = centers.points().first() {
            if p.ambient_dim() != kernel.ambient_dim() {
                return Err(Error::DimensionMismatch {
                    expected: kernel.ambient_dim(),
                    found: p.ambient_dim(),
                });
            }
        }
        let gram = kernel.gram(centers.points());
        let factor = Cholesky::factor(&gram)?;
        Ok(Self {
            kernel,
            centers,
            gram,
            factor,
        })
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn centers(&self) -> &PointSet<K::Point> {
        &self.centers
    }

    pub fn gram(&self) -> &SymmetricMatrix<T> {
        &self.gram
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    /// Squared ratio of the extreme diagonal entries of the Cholesky factor.
    pub fn condition_estimate(&self) -> T {
        self.factor.condition_estimate()
    }

    /// `(k_x)_i = φ(d(x, y_i))`.
    pub fn kernel_vector(&self, x: &K::Point) -> Vec<T> {
        self.centers.iter().map(|y| self.kernel.eval(x, y)).collect()
    }

    /// Solves `A α = f`, with up to two steps of iterative refinement when
    /// the residual exceeds the interpolation tolerance.
    pub fn solve(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.centers.len() {
            return Err(Error::SizeMismatch {
                what: "values",
                expected: self.centers.len(),
                found: values.len(),
            });
        }
        let mut alpha = self.factor.solve(values);
        let tol = interpolation_tolerance(values);
        for _ in 0..2 {
            let r: Vec<T> = values
                .iter()
                .zip(self.gram.mul_vec(&alpha))
                .map(|(&f, s)| f - s)
                .collect();
            if max_abs(&r) <= tol {
                break;
            }
            let delta = self.factor.solve(&r);
            alpha.iter_mut().zip(delta).for_each(|(a, d)| *a = *a + d);
        }
        Ok(alpha)
    }

    /// `P(x) = sqrt(max(0, φ(0) - k_xᵀ A⁻¹ k_x))`.
    pub fn power_function(&self, x: &K::Point) -> T {
        let z = self.factor.forward(&self.kernel_vector(x));
        let q: T = z.iter().map(|&v| v * v).sum();
        (self.kernel.value_at_origin() - q).max(T::zero()).sqrt()
    }
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn interpolation_tolerance<T: Real>(values: &[T]) -> T {
    T::lit(INTERPOLATION_TOLERANCE) * (T::one() + max_abs(values))
}

/// The φ-spline interpolant to data `f` on centers `Y`.
#[derive(Debug, Clone)]
pub struct Interpolant<T: Real, K: Kernel<T>> {
    system: Arc<GramSystem<T, K>>,
    coefficients: Vec<T>,
    values: Vec<T>,
}

/// Builds the interpolant of `values` on `centers`.
pub fn build_interpolant<T: Real, K: Kernel<T>>(
    kernel: K,
    centers: PointSet<K::Point>,
    values: &[T],
) -> Result<Interpolant<T, K>> {
    if values.len() != centers.len() {
        return Err(Error::SizeMismatch {
            what: "values",
            expected: centers.len(),
            found: values.len(),
        });
    }
    Interpolant::from_system(Arc::new(GramSystem::new(kernel, centers)?), values)
}

impl<T: Real, K: Kernel<T>> Interpolant<T, K> {
    /// Interpolates `values` reusing an already factored system.
    pub fn from_system(system: Arc<GramSystem<T, K>>, values: &[T]) -> Result<Self> {
        let coefficients = system.solve(values)?;
        Ok(Self {
            system,
            coefficients,
            values: values.to_vec(),
        })
    }

    /// Reconstructs an interpolant from stored coefficients; the data values
    /// are recomputed as `A α`.
    pub fn from_coefficients(kernel: K, centers: PointSet<K::Point>, coefficients: Vec<T>) -> Result<Self> {
        if coefficients.len() != centers.len() {
            return Err(Error::SizeMismatch {
                what: "coefficients",
                expected: centers.len(),
                found: coefficients.len(),
            });
        }
        let system = Arc::new(GramSystem::new(kernel, centers)?);
        let values = system.gram().mul_vec(&coefficients);
        Ok(Self {
            system,
            coefficients,
            values,
        })
    }

    pub fn system(&self) -> &Arc<GramSystem<T, K>> {
        &self.system
    }

    pub fn kernel(&self) -> &K {
        self.system.kernel()
    }

    pub fn centers(&self) -> &PointSet<K::Point> {
        self.system.centers()
    }

    /// `α_y` in the order of the centers.
    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// Data values `f(y)`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn condition_estimate(&self) -> T {
        self.system.condition_estimate()
    }

    /// `max_y |S(y) - f(y)|` computed with the stored Gram matrix.
    pub fn max_residual(&self) -> T {
        let s = self.system.gram().mul_vec(&self.coefficients);
        max_abs(&s.iter().zip(&self.values).map(|(&a, &b)| a - b).collect::<Vec<_>>())
    }

    /// Whether the interpolation conditions hold to `1e-9 (1 + max|f|)`.
    pub fn satisfies_conditions(&self) -> bool {
        self.max_residual() <= interpolation_tolerance(&self.values)
    }

    pub fn evaluate(&self, x: &K::Point) -> T {
        let k = self.kernel();
        self.centers()
            .iter()
            .zip(&self.coefficients)
            .map(|(y, &a)| a * k.eval(x, y))
            .sum()
    }

    /// `‖S‖²_φ = αᵀ A α`.
    pub fn native_norm_sq(&self) -> T {
        self.system.gram().quadratic_form(&self.coefficients).max(T::zero())
    }

    /// Writes rows `x0,...,alpha`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dim = self.kernel().ambient_dim();
        let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
        header.push("alpha".into());
        let rows = self.centers().iter().zip(&self.coefficients).map(|(p, &a)| {
            let mut r = p.coords().to_vec();
            r.push(a);
            r
        });
        write_numeric_table(writer, &header, rows)
    }

    pub fn sidecar(&self) -> InterpolantSidecar {
        InterpolantSidecar {
            schema: 1,
            kernel: self.kernel().spec(),
            n_centers: self.centers().len(),
            condition_estimate: self.condition_estimate().to_f64_lossy(),
            condition_estimate_kind: "squared ratio of extreme Cholesky diagonal entries".into(),
            max_residual: self.max_residual().to_f64_lossy(),
        }
    }
}

/// JSON metadata written next to an interpolant's coefficient CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolantSidecar {
    pub schema: u32,
    pub kernel: KernelSpec,
    pub n_centers: usize,
    pub condition_estimate: f64,
    pub condition_estimate_kind: String,
    pub max_residual: f64,
}

pub fn evaluate<T: Real, K: Kernel<T>>(s: &Interpolant<T, K>, x: &K::Point) -> T {
    s.evaluate(x)
}

pub fn native_norm_sq<T: Real, K: Kernel<T>>(s: &Interpolant<T, K>) -> T {
    s.native_norm_sq()
}

/// Power function `P(x, Y, φ)`; `sqrt(φ(0))` for empty `Y`.
pub fn power_function<T: Real, K: Kernel<T>>(k: &K, y: &PointSet<K::Point>, x: &K::Point) -> Result<T> {
    if y.is_empty() {
        return Ok(k.value_at_origin().sqrt());
    }
    Ok(GramSystem::new(k.clone(), y.clone())?.power_function(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PythagorasCheck<T> {
    /// `‖f‖²_φ - ‖S‖²_φ`, i.e. `‖f - S‖²_φ` by orthogonality.
    pub residual_norm_sq: T,
    /// `|‖f‖² - ‖f - S‖² - ‖S‖²|` with an independently computed `‖f - S‖²`.
    pub defect: Option<T>,
}

/// Checks `‖f‖² = ‖f - S‖² + ‖S‖²` for a target with exactly known native norm.
///
/// `independent_residual_sq` is `‖f - S‖²_φ` computed without using the
/// orthogonality relation (see [`crate::spectral::residual_native_norm_sq`]).
pub fn pythagoras_check<T: Real, K: Kernel<T>>(
    f_native_norm_sq: T,
    s: &Interpolant<T, K>,
    independent_residual_sq: Option<T>,
) -> Result<PythagorasCheck<T>> {
    let s_sq = s.native_norm_sq();
    let residual_norm_sq = f_native_norm_sq - s_sq;
    if residual_norm_sq < -T::lit(1e-8) * f_native_norm_sq.abs() {
        return Err(Error::MinimalNormViolation {
            residual: residual_norm_sq.to_f64_lossy(),
            target: f_native_norm_sq.to_f64_lossy(),
        });
    }
    let defect = independent_residual_sq.map(|r| (f_native_norm_sq - r - s_sq).abs());
    Ok(PythagorasCheck {
        residual_norm_sq,
        defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_points, Domain, EuclidPoint, Generator, SpherePoint};
    use crate::kernels::{EuclidRadialKernel, SphereSeriesKernel};
    use crate::orthopoly::RadialProfile;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ep(x: f64) -> EuclidPoint<f64> {
        EuclidPoint::new(vec![x]).unwrap()
    }

    fn matern() -> EuclidRadialKernel<f64> {
        EuclidRadialKernel::new(RadialProfile::matern(1, 0.2, 2.0).unwrap(), 1).unwrap()
    }

    fn sphere_kernel() -> SphereSeriesKernel<f64> {
        SphereSeriesKernel::power_law(2, 1.0, 2.0, Some(60)).unwrap()
    }

    fn fib(n: usize) -> PointSet<SpherePoint<f64>> {
        generate_points(&Domain::sphere(2).unwrap(), Generator::FibonacciSphere, n, 0).unwrap()
    }

    #[test]
    fn single_center() {
        let k = sphere_kernel();
        let y = fib(1);
        let s = build_interpolant(k.clone(), y, &[3.0]).unwrap();
        assert_relative_eq!(s.coefficients()[0], 3.0 / k.value_at_origin(), max_relative = 1e-14);

        let e = build_interpolant(matern(), PointSet::new(vec![ep(0.3)]).unwrap(), &[2.5]).unwrap();
        assert_relative_eq!(e.coefficients()[0], 2.5, max_relative = 1e-14);
        // one-term sum at distance r
        assert_relative_eq!(e.evaluate(&ep(0.5)), 2.5 * matern().profile().eval(0.2), max_relative = 1e-14);
    }

    #[test]
    fn kernel_column_gives_unit_coefficients() {
        let k = sphere_kernel();
        let y = fib(30);
        let star = 7;
        let values: Vec<f64> = y.iter().map(|p| k.eval(p, &y[star])).collect();
        let s = build_interpolant(k, y, &values).unwrap();
        for (i, &a) in s.coefficients().iter().enumerate() {
            let expect = if i == star { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(a, expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_data_zero_interpolant() {
        let b = Domain::<f64>::unit_box(1).unwrap();
        let y: PointSet<EuclidPoint<f64>> = generate_points(&b, Generator::UniformGrid, 9, 0).unwrap();
        let s = build_interpolant(matern(), y, &[0.0; 9]).unwrap();
        assert!(s.coefficients().iter().all(|&a| a == 0.0));
        assert_eq!(s.evaluate(&ep(0.37)), 0.0);
        assert_eq!(s.native_norm_sq(), 0.0);
    }

    #[test]
    fn interpolation_conditions_and_errors() {
        let b = Domain::<f64>::unit_box(1).unwrap();
        let y: PointSet<EuclidPoint<f64>> = generate_points(&b, Generator::UniformGrid, 65, 0).unwrap();
        let values: Vec<f64> = y.iter().map(|p| (5.0 * p.coords()[0]).sin()).collect();
        let s = build_interpolant(matern(), y.clone(), &values).unwrap();
        assert!(s.satisfies_conditions());
        for (p, &v) in y.iter().zip(&values) {
            assert!((s.evaluate(p) - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
        assert!(matches!(
            build_interpolant(matern(), y, &values[..3]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn indefinite_gram_is_reported() {
        // two nearly coincident centers with a very flat kernel
        let k = EuclidRadialKernel::new(RadialProfile::matern(2, 1e6, 3.0).unwrap(), 1).unwrap();
        let y = PointSet::new(vec![ep(0.0), ep(1e-9), ep(2e-9)]).unwrap();
        match build_interpolant(k, y, &[1.0, 2.0, 3.0]) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert!(pivot >= 1),
            other => panic!("expected factorization failure, got {other:?}"),
        }
    }

    #[test]
    fn native_norm_of_unit_translate() {
        let k = sphere_kernel();
        let y = fib(12);
        let values: Vec<f64> = y.iter().map(|p| k.eval(p, &y[0])).collect();
        let s = build_interpolant(k.clone(), y, &values).unwrap();
        assert_relative_eq!(s.native_norm_sq(), k.value_at_origin(), max_relative = 1e-9);
        // f is its own interpolant: zero residual
        let chk = pythagoras_check(k.value_at_origin(), &s, None).unwrap();
        assert!(chk.residual_norm_sq.abs() < 1e-9);
    }

    #[test]
    fn pythagoras_rejects_inconsistent_norms() {
        let k = sphere_kernel();
        let y = fib(10);
        let s = build_interpolant(k, y, &[1.0; 10]).unwrap();
        assert!(matches!(
            pythagoras_check(0.5 * s.native_norm_sq(), &s, None),
            Err(Error::MinimalNormViolation { .. })
        ));
        let zero = build_interpolant(sphere_kernel(), fib(10), &[0.0; 10]).unwrap();
        let c = pythagoras_check(0.0, &zero, Some(0.0)).unwrap();
        assert_eq!((c.residual_norm_sq, c.defect), (0.0, Some(0.0)));
    }

    #[test]
    fn power_function_examples() {
        let k = sphere_kernel();
        let y = fib(25);
        let sys = GramSystem::new(k.clone(), y.clone()).unwrap();
        for p in y.iter() {
            assert!(sys.power_function(p) < 1e-6, "P at center = {}", sys.power_function(p));
        }
        let x = SpherePoint::new(vec![0.1, -0.4, 0.8]).unwrap();
        assert_relative_eq!(
            power_function(&k, &PointSet::empty(), &x).unwrap(),
            k.value_at_origin().sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn power_function_decreases_when_adding_points() {
        let k = matern();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut xs: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..1.0)).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let y = PointSet::new(xs.iter().map(|&x| ep(x)).collect()).unwrap();
            let x = ep(rng.gen_range(0.0..1.0));
            let extra = ep(rng.gen_range(0.0..1.0));
            let Ok(y2) = y.with_point(extra) else { continue };
            let (p1, p2) = (
                power_function(&k, &y, &x).unwrap(),
                power_function(&k, &y2, &x).unwrap(),
            );
            assert!(p2 <= p1 + 1e-7, "{p2} > {p1}");
        }
    }

    #[test]
    fn pointwise_error_bounded_by_power_function() {
        // f = Σ c_j φ(·, z_j) has ‖f‖² = cᵀ K c.
        let k = matern();
        let z = PointSet::new(vec![ep(0.13), ep(0.52), ep(0.77), ep(0.9)]).unwrap();
        let c = [1.0, -0.7, 0.4, 0.25];
        let kz = k.gram(z.points());
        let f_norm_sq = kz.quadratic_form(&c);
        let f = |x: &EuclidPoint<f64>| -> f64 { z.iter().zip(&c).map(|(zz, &cc)| cc * k.eval(x, zz)).sum() };
        let b = Domain::<f64>::unit_box(1).unwrap();
        let y: PointSet<EuclidPoint<f64>> = generate_points(&b, Generator::Halton, 12, 0).unwrap();
        let values: Vec<f64> = y.iter().map(f).collect();
        let s = build_interpolant(k, y, &values).unwrap();
        assert!(s.native_norm_sq() <= f_norm_sq);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = ep(rng.gen_range(0.0..1.0));
            let err = (f(&x) - s.evaluate(&x)).abs();
            let bound = s.system().power_function(&x) * f_norm_sq.sqrt() * (1.0 + 1e-6);
            assert!(err <= bound + 1e-12, "err {err} > bound {bound}");
        }
    }

    #[test]
    fn csv_dump_and_sidecar() {
        let b = Domain::<f64>::unit_box(1).unwrap();
        let y: PointSet<EuclidPoint<f64>> = generate_points(&b, Generator::UniformGrid, 5, 0).unwrap();
        let s = build_interpolant(matern(), y, &[1.0, 2.0, 0.0, -1.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,alpha\n"));
        assert_eq!(text.lines().count(), 6);
        let side = serde_json::to_value(s.sidecar()).unwrap();
        assert_eq!(side["schema"], 1);
        assert_eq!(side["kernel"]["kind"], "matern");
    }

    #[test]
    fn works_in_single_precision() {
        let k = EuclidRadialKernel::new(RadialProfile::<f32>::wendland(1, 1, 0.5).unwrap(), 1).unwrap();
        let b = Domain::<f32>::unit_box(1).unwrap();
        let y: PointSet<EuclidPoint<f32>> = generate_points(&b, Generator::UniformGrid, 5, 0).unwrap();
        let s = build_interpolant(k, y.clone(), &[1.0f32, 2.0, 0.0, -1.0, 0.5]).unwrap();
        for (p, v) in y.iter().zip([1.0f32, 2.0, 0.0, -1.0, 0.5]) {
            assert!((s.evaluate(p) - v).abs() < 1e-4);
        }
    }
}
