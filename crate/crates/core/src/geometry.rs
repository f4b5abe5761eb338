//! Points on spheres and in boxes/balls, deterministic point-set generation
//! and fill-distance estimation.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_numeric_table, write_numeric_table};
use crate::scalar::Real;

/// Minimum pairwise separation accepted in a [`PointSet`].
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Default number of candidates used by [`fill_distance`].
pub const DEFAULT_FILL_CANDIDATES: usize = 100_000;

const MIN_FILL_CANDIDATES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    SphereGeodesic,
    Euclidean,
}

/// A point of an interpolation domain.
///
/// `coords` are the ambient coordinates: `d + 1` entries for a point on
/// `S^d`, `d` entries for a point of `R^d`.
pub trait Point<T: Real>: Clone + fmt::Debug + Send + Sync + Sized {
    const METRIC: Metric;

    fn from_coords(coords: Vec<T>) -> Result<Self>;

    fn coords(&self) -> &[T];

    /// Distance to `other`; both points must have the same number of coordinates.
    fn distance(&self, other: &Self) -> T;

    fn ambient_dim(&self) -> usize {
        self.coords().len()
    }

    /// Distance from `self` to the closest point of `set` (infinity if empty).
    fn nearest_distance(&self, set: &[Self]) -> T {
        set.iter()
            .map(|y| self.distance(y))
            .fold(T::infinity(), T::min)
    }
}

/// Unit vector in `R^{d+1}`, a point of `S^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint<T>(Vec<T>);

impl<T: Real> SpherePoint<T> {
    /// Renormalizes `coords` onto the unit sphere.
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a sphere point needs at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinitePoint { index: 0 });
        }
        let norm = coords.iter().map(|&c| c * c).sum::<T>().sqrt();
        if norm <= T::epsilon() {
            return Err(Error::InvalidArgument(
                "cannot normalize the zero vector onto the sphere".into(),
            ));
        }
        Ok(Self(coords.into_iter().map(|c| c / norm).collect()))
    }

    /// Sphere dimension `d` of `S^d`.
    pub fn sphere_dim(&self) -> usize {
        self.0.len() - 1
    }

    /// Inner product clamped to `[-1, 1]`.
    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        let t: T = self.0.iter().zip(&other.0).map(|(&a, &b)| a * b).sum();
        t.max(-T::one()).min(T::one())
    }

    /// North pole `e_{d+1}` of `S^d`.
    pub fn north_pole(d: usize) -> Self {
        let mut c = vec![T::zero(); d + 1];
        c[d] = T::one();
        Self(c)
    }
}

impl<T: Real> Point<T> for SpherePoint<T> {
    const METRIC: Metric = Metric::SphereGeodesic;

    fn from_coords(coords: Vec<T>) -> Result<Self> {
        Self::new(coords)
    }

    fn coords(&self) -> &[T] {
        &self.0
    }

    #[inline]
    fn distance(&self, other: &Self) -> T {
        // 2·atan2(|x-y|, |x+y|) stays accurate near 0 and π, unlike acos
        let (mut minus, mut plus) = (T::zero(), T::zero());
        for (&a, &b) in self.0.iter().zip(&other.0) {
            minus = minus + (a - b) * (a - b);
            plus = plus + (a + b) * (a + b);
        }
        T::lit(2.0) * minus.sqrt().atan2(plus.sqrt())
    }

    fn nearest_distance(&self, set: &[Self]) -> T {
        if set.is_empty() {
            return T::infinity();
        }
        let mut best = 0;
        let mut best_dot = -T::infinity();
        for (i, y) in set.iter().enumerate() {
            let d = self.dot(y);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        self.distance(&set[best])
    }
}

/// Geodesic distance `arccos(x·y)` on `S^d`.
pub fn geodesic_distance<T: Real>(x: &SpherePoint<T>, y: &SpherePoint<T>) -> Result<T> {
    check_same_dim(x.coords().len(), y.coords().len())?;
    Ok(x.distance(y))
}

/// Point of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclidPoint<T>(Vec<T>);

impl<T: Real> EuclidPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("a point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinitePoint { index: 0 });
        }
        Ok(Self(coords))
    }
}

impl<T: Real> Point<T> for EuclidPoint<T> {
    const METRIC: Metric = Metric::Euclidean;

    fn from_coords(coords: Vec<T>) -> Result<Self> {
        Self::new(coords)
    }

    fn coords(&self) -> &[T] {
        &self.0
    }

    #[inline]
    fn distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }
}

pub fn euclidean_distance<T: Real>(x: &EuclidPoint<T>, y: &EuclidPoint<T>) -> Result<T> {
    check_same_dim(x.coords().len(), y.coords().len())?;
    Ok(x.distance(y))
}

fn check_same_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Interpolation domain `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain<T> {
    /// The full sphere `S^d`.
    Sphere { d: usize },
    /// Axis-aligned box `[lo, hi]`.
    Box { lo: Vec<T>, hi: Vec<T> },
    Ball { center: Vec<T>, radius: T },
}

impl<T: Real> Domain<T> {
    pub fn sphere(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("sphere dimension must be at least 1".into()));
        }
        Ok(Domain::Sphere { d })
    }

    pub fn unit_box(d: usize) -> Result<Self> {
        Self::boxed(vec![T::zero(); d], vec![T::one(); d])
    }

    pub fn boxed(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidArgument("box corners must have equal, positive length".into()));
        }
        if lo.iter().zip(&hi).any(|(&a, &b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument("box corners must satisfy lo < hi".into()));
        }
        Ok(Domain::Box { lo, hi })
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        if center.is_empty() || !(radius > T::zero()) {
            return Err(Error::InvalidArgument("ball needs a center and radius > 0".into()));
        }
        Ok(Domain::Ball { center, radius })
    }

    /// Number of ambient coordinates of the domain's points.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Domain::Sphere { d } => d + 1,
            Domain::Box { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    /// Intrinsic dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            Domain::Sphere { d } => *d,
            _ => self.ambient_dim(),
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            Domain::Sphere { .. } => Metric::SphereGeodesic,
            _ => Metric::Euclidean,
        }
    }

    pub fn contains(&self, coords: &[T]) -> bool {
        if coords.len() != self.ambient_dim() {
            return false;
        }
        let slack = T::lit(1e-9);
        match self {
            Domain::Sphere { .. } => {
                let n2: T = coords.iter().map(|&c| c * c).sum();
                (n2.sqrt() - T::one()).abs() <= slack
            }
            Domain::Box { lo, hi } => coords
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&c, (&a, &b))| c >= a - slack && c <= b + slack),
            Domain::Ball { center, radius } => {
                let r2: T = coords
                    .iter()
                    .zip(center)
                    .map(|(&c, &o)| (c - o) * (c - o))
                    .sum();
                r2.sqrt() <= *radius + slack
            }
        }
    }

    fn label(&self) -> String {
        match self {
            Domain::Sphere { d } => format!("S^{d}"),
            Domain::Box { lo, .. } => format!("a box in R^{}", lo.len()),
            Domain::Ball { center, .. } => format!("a ball in R^{}", center.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    FibonacciSphere,
    UniformGrid,
    Halton,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::FibonacciSphere => "fibonacci-sphere",
            Generator::UniformGrid => "uniform-grid",
            Generator::Halton => "halton",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fibonacci-sphere" | "fibonacci" => Ok(Generator::FibonacciSphere),
            "uniform-grid" | "grid" => Ok(Generator::UniformGrid),
            "halton" => Ok(Generator::Halton),
            other => Err(Error::Parse {
                context: "generator".into(),
                message: format!("unknown generator `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationDescriptor {
    pub generator: Generator,
    pub count: usize,
    pub seed: u64,
}

/// A finite, duplicate-free set of points `Y`.
#[derive(Debug, Clone)]
pub struct PointSet<P> {
    points: Vec<P>,
    descriptor: Option<GenerationDescriptor>,
}

impl<P> PointSet<P> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, P> {
        self.points.iter()
    }

    pub fn descriptor(&self) -> Option<&GenerationDescriptor> {
        self.descriptor.as_ref()
    }

    pub fn with_descriptor(mut self, descriptor: GenerationDescriptor) -> Self {
        self.descriptor = Some(descriptor);
        self
    }

    pub fn into_points(self) -> Vec<P> {
        self.points
    }
}

impl<P> PointSet<P> {
    /// Empty set; the only way to build a set without a dimension check.
    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            descriptor: None,
        }
    }
}

impl<P> std::ops::Index<usize> for PointSet<P> {
    type Output = P;

    fn index(&self, i: usize) -> &P {
        &self.points[i]
    }
}

impl<'a, P> IntoIterator for &'a PointSet<P> {
    type Item = &'a P;
    type IntoIter = std::slice::Iter<'a, P>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

impl<P> PointSet<P> {
    pub fn new<T: Real>(points: Vec<P>) -> Result<Self>
    where
        P: Point<T>,
    {
        if let Some(first) = points.first() {
            let dim = first.ambient_dim();
            for p in &points {
                check_same_dim(dim, p.ambient_dim())?;
            }
        }
        let tol = T::lit(DUPLICATE_TOLERANCE);
        for i in 0..points.len() {
            for j in 0..i {
                let sep = points[i].distance(&points[j]);
                if !(sep > tol) {
                    return Err(Error::DuplicatePoints {
                        first: j,
                        second: i,
                        separation: sep.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self {
            points,
            descriptor: None,
        })
    }

    /// Like [`PointSet::new`], additionally checking membership in `domain`.
    pub fn new_in<T: Real>(domain: &Domain<T>, points: Vec<P>) -> Result<Self>
    where
        P: Point<T>,
    {
        check_metric::<T, P>(domain)?;
        for (index, p) in points.iter().enumerate() {
            if !domain.contains(p.coords()) {
                return Err(Error::OutsideDomain { index });
            }
        }
        Self::new(points)
    }

    /// Returns a copy with `p` appended, rechecking separation.
    pub fn with_point<T: Real>(&self, p: P) -> Result<Self>
    where
        P: Point<T>,
    {
        let tol = T::lit(DUPLICATE_TOLERANCE);
        if let Some(first) = self.points.first() {
            check_same_dim(first.ambient_dim(), p.ambient_dim())?;
        }
        for (j, q) in self.points.iter().enumerate() {
            let sep = p.distance(q);
            if !(sep > tol) {
                return Err(Error::DuplicatePoints {
                    first: j,
                    second: self.points.len(),
                    separation: sep.to_f64_lossy(),
                });
            }
        }
        let mut points = self.points.clone();
        points.push(p);
        Ok(Self {
            points,
            descriptor: None,
        })
    }

    pub fn metric<T: Real>(&self) -> Metric
    where
        P: Point<T>,
    {
        P::METRIC
    }
}

fn check_metric<T: Real, P: Point<T>>(domain: &Domain<T>) -> Result<()> {
    if domain.metric() != P::METRIC {
        return Err(Error::InvalidArgument(format!(
            "point type with metric {:?} does not match {}",
            P::METRIC,
            domain.label()
        )));
    }
    Ok(())
}

/// Deterministic point generation.
///
/// `fibonacci-sphere` is only defined on `S^2` and ignores `seed`.
/// `uniform-grid` needs `n = m^d` and places `m` equispaced, endpoint-inclusive
/// nodes per axis of a box. `halton` uses the first `d` primes as bases and
/// skips the first `seed` sequence elements; on a ball it rejects points of the
/// bounding box that fall outside.
pub fn generate_points<T: Real, P: Point<T>>(
    domain: &Domain<T>,
    generator: Generator,
    n: usize,
    seed: u64,
) -> Result<PointSet<P>> {
    check_metric::<T, P>(domain)?;
    let unsupported = || Error::UnsupportedGenerator {
        generator: generator.to_string(),
        domain: domain.label(),
    };
    let raw = match (generator, domain) {
        (Generator::FibonacciSphere, Domain::Sphere { d: 2 }) => fibonacci_sphere::<T>(n),
        (Generator::UniformGrid, Domain::Box { lo, hi }) => {
            let m = integer_root(n, lo.len()).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "uniform-grid needs a perfect power count in {} dimensions, got {n}",
                    lo.len()
                ))
            })?;
            tensor_grid(lo, hi, m)
        }
        (Generator::Halton, Domain::Box { lo, hi }) => (0..n)
            .map(|i| halton_in_box(lo, hi, i as u64 + seed + 1))
            .collect(),
        (Generator::Halton, Domain::Ball { center, radius }) => {
            let lo: Vec<T> = center.iter().map(|&c| c - *radius).collect();
            let hi: Vec<T> = center.iter().map(|&c| c + *radius).collect();
            let mut out = Vec::with_capacity(n);
            let mut index = seed + 1;
            while out.len() < n {
                let p = halton_in_box(&lo, &hi, index);
                index += 1;
                if domain.contains(&p) {
                    out.push(p);
                }
            }
            out
        }
        _ => return Err(unsupported()),
    };
    let points = raw
        .into_iter()
        .map(P::from_coords)
        .collect::<Result<Vec<_>>>()?;
    Ok(PointSet::new(points)?.with_descriptor(GenerationDescriptor {
        generator,
        count: n,
        seed,
    }))
}

/// Spherical Fibonacci lattice on `S^2`.
pub fn fibonacci_sphere<T: Real>(n: usize) -> Vec<Vec<T>> {
    let golden_angle = std::f64::consts::PI * (1.0 + 5f64.sqrt());
    (0..n)
        .map(|i| {
            let k = i as f64 + 0.5;
            let z = 1.0 - 2.0 * k / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * k;
            vec![T::lit(r * phi.cos()), T::lit(r * phi.sin()), T::lit(z)]
        })
        .collect()
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    if n == 0 || d == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&m| m > 0 && m.checked_pow(d as u32) == Some(n))
}

/// Endpoint-inclusive tensor grid with `m` nodes per axis (midpoint if `m = 1`).
fn tensor_grid<T: Real>(lo: &[T], hi: &[T], m: usize) -> Vec<Vec<T>> {
    let d = lo.len();
    let axis = |a: T, b: T| -> Vec<T> {
        if m == 1 {
            return vec![(a + b) / T::lit(2.0)];
        }
        (0..m)
            .map(|i| a + (b - a) * T::of_usize(i) / T::of_usize(m - 1))
            .collect()
    };
    let axes: Vec<Vec<T>> = lo.iter().zip(hi).map(|(&a, &b)| axis(a, b)).collect();
    let total = m.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![T::zero(); d];
            // last axis varies fastest
            for k in (0..d).rev() {
                p[k] = axes[k][idx % m];
                idx /= m;
            }
            p
        })
        .collect()
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

fn halton_in_box<T: Real>(lo: &[T], hi: &[T], index: u64) -> Vec<T> {
    lo.iter()
        .zip(hi)
        .enumerate()
        .map(|(k, (&a, &b))| a + (b - a) * T::lit(radical_inverse(index, PRIMES[k % PRIMES.len()])))
        .collect()
}

/// Deterministic dense candidate set used to estimate suprema over `domain`.
pub fn candidate_grid<T: Real, P: Point<T>>(domain: &Domain<T>, candidates: usize) -> Result<Vec<P>> {
    check_metric::<T, P>(domain)?;
    let raw = match domain {
        Domain::Sphere { d: 2 } => fibonacci_sphere::<T>(candidates),
        Domain::Sphere { d: 1 } => (0..candidates)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / candidates as f64;
                vec![T::lit(a.cos()), T::lit(a.sin())]
            })
            .collect(),
        Domain::Sphere { d } => {
            return Err(Error::InvalidArgument(format!(
                "no candidate grid for S^{d} (only S^1 and S^2)"
            )))
        }
        Domain::Box { lo, hi } => {
            let m = per_axis(candidates, lo.len());
            tensor_grid(lo, hi, m)
        }
        Domain::Ball { center, radius } => {
            let lo: Vec<T> = center.iter().map(|&c| c - *radius).collect();
            let hi: Vec<T> = center.iter().map(|&c| c + *radius).collect();
            let m = per_axis(2 * candidates, lo.len());
            tensor_grid(&lo, &hi, m)
                .into_iter()
                .filter(|p| domain.contains(p))
                .collect()
        }
    };
    raw.into_iter().map(P::from_coords).collect()
}

fn per_axis(candidates: usize, d: usize) -> usize {
    ((candidates as f64).powf(1.0 / d as f64).ceil() as usize).max(2)
}

/// Fill distance `h(Y, Ω)` estimated as the maximum, over a deterministic
/// candidate grid of about `candidates` points, of the distance to the
/// nearest point of `Y`.
///
/// This is a lower estimate of the true supremum; it is monotone
/// nonincreasing when points are added to `Y` (same candidate grid).
pub fn fill_distance<T: Real, P: Point<T>>(
    y: &PointSet<P>,
    domain: &Domain<T>,
    candidates: usize,
) -> Result<T> {
    if y.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if candidates < MIN_FILL_CANDIDATES {
        return Err(Error::InvalidArgument(format!(
            "fill distance needs at least {MIN_FILL_CANDIDATES} candidates, got {candidates}"
        )));
    }
    let grid = candidate_grid::<T, P>(domain, candidates)?;
    check_same_dim(y[0].ambient_dim(), domain.ambient_dim())?;
    Ok(fill_distance_on(y.points(), &grid))
}

/// Fill distance of `y` measured on an explicit candidate list.
pub fn fill_distance_on<T: Real, P: Point<T>>(y: &[P], grid: &[P]) -> T {
    use rayon::prelude::*;
    let per_candidate: Vec<T> = grid.par_iter().map(|x| x.nearest_distance(y)).collect();
    per_candidate.into_iter().fold(T::zero(), T::max)
}

/// Writes points as CSV with header `x0,x1,...`.
pub fn write_points_csv<T: Real, P: Point<T>, W: Write>(writer: W, points: &[P]) -> Result<()> {
    let dim = points.first().map_or(0, |p| p.ambient_dim());
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let rows = points.iter().map(|p| p.coords().to_vec());
    write_numeric_table(writer, &header, rows)
}

/// Reads a CSV written by [`write_points_csv`]; every column must be `x<i>`.
pub fn read_points_csv<T: Real, P: Point<T>, R: Read>(reader: R) -> Result<PointSet<P>> {
    let table = read_numeric_table::<T, R>(reader)?;
    for (i, name) in table.headers.iter().enumerate() {
        if *name != format!("x{i}") {
            return Err(Error::Parse {
                context: "point CSV".into(),
                message: format!("column {i} is `{name}`, expected `x{i}`"),
            });
        }
    }
    let points = table
        .rows
        .into_iter()
        .map(P::from_coords)
        .collect::<Result<Vec<_>>>()?;
    PointSet::new(points)
}
