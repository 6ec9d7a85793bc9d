//! Fluid limits: fixed-step integration of `ẋ = b(x)` inside a domain `U`,
//! exit detection, and the exit-window quantities used for terminal values.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{sup_dist, sup_norm, Real};

pub type FieldFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
pub type PredicateFn<T> = Arc<dyn Fn(&[T]) -> bool + Send + Sync>;

/// Time resolution of exit-time bisection.
pub const EXIT_TIME_RESOLUTION: f64 = 1e-10;

/// Safety factor applied to sampled Lipschitz constants.
pub const LIPSCHITZ_SAFETY: f64 = 1.2;

/// One side of an interval; infinite values mean unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound<T> {
    pub value: T,
    pub closed: bool,
}

impl<T: Real> Bound<T> {
    pub fn closed(value: T) -> Self {
        Self { value, closed: true }
    }

    pub fn open(value: T) -> Self {
        Self { value, closed: false }
    }

    pub fn unbounded_below() -> Self {
        Self::open(T::neg_infinity())
    }

    pub fn unbounded_above() -> Self {
        Self::open(T::infinity())
    }

    fn admits_from_above(&self, x: T) -> bool {
        if self.closed {
            x >= self.value
        } else {
            x > self.value
        }
    }

    fn admits_from_below(&self, x: T) -> bool {
        if self.closed {
            x <= self.value
        } else {
            x < self.value
        }
    }
}

/// Axis-aligned box with per-side open/closed bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain<T> {
    pub lower: Vec<Bound<T>>,
    pub upper: Vec<Bound<T>>,
}

impl<T: Real> BoxDomain<T> {
    pub fn closed(lo: &[T], hi: &[T]) -> Self {
        Self {
            lower: lo.iter().map(|&v| Bound::closed(v)).collect(),
            upper: hi.iter().map(|&v| Bound::closed(v)).collect(),
        }
    }

    /// The whole space `R^d`.
    pub fn everything(d: usize) -> Self {
        Self {
            lower: vec![Bound::unbounded_below(); d],
            upper: vec![Bound::unbounded_above(); d],
        }
    }

    /// The closed orthant `[0, ∞)^d`.
    pub fn orthant(d: usize) -> Self {
        Self {
            lower: vec![Bound::closed(T::zero()); d],
            upper: vec![Bound::unbounded_above(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|b| b.value.is_finite())
    }

    fn axis_contains(&self, i: usize, v: T) -> bool {
        self.lower[i].admits_from_above(v) && self.upper[i].admits_from_below(v)
    }

    pub fn contains(&self, x: &[T]) -> bool {
        (0..self.dim()).all(|i| self.axis_contains(i, x[i]))
    }

    /// Closed sup-norm ball of radius `eps` lies inside the box.
    pub fn contains_ball(&self, x: &[T], eps: T) -> bool {
        (0..self.dim()).all(|i| self.axis_contains(i, x[i] - eps) && self.axis_contains(i, x[i] + eps))
    }

    /// Closed sup-norm ball of radius `eps` does not meet the box.
    pub fn disjoint_from_ball(&self, x: &[T], eps: T) -> bool {
        (0..self.dim()).any(|i| {
            let (lo, hi) = (x[i] - eps, x[i] + eps);
            !self.lower[i].admits_from_above(hi) || !self.upper[i].admits_from_below(lo)
        })
    }

    /// Nearest point of the closure of the box.
    pub fn clamp(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| v.max(self.lower[i].value).min(self.upper[i].value))
            .collect()
    }
}

/// Domain `U`: an optional box intersected with an optional predicate.
#[derive(Clone)]
pub struct Domain<T> {
    pub bbox: Option<BoxDomain<T>>,
    pub predicate: Option<PredicateFn<T>>,
}

impl<T> fmt::Debug for Domain<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("bbox", &self.bbox)
            .field("predicate", &self.predicate.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl<T: Real> Domain<T> {
    pub fn from_box(bbox: BoxDomain<T>) -> Self {
        Self {
            bbox: Some(bbox),
            predicate: None,
        }
    }

    pub fn with_predicate<F>(mut self, pred: F) -> Self
    where
        F: Fn(&[T]) -> bool + Send + Sync + 'static,
    {
        self.predicate = Some(Arc::new(pred));
        self
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.bbox.as_ref().is_none_or(|b| b.contains(x)) && self.predicate.as_ref().is_none_or(|p| p(x))
    }
}

/// Vector field on a domain, with its sup-norm Lipschitz constant and
/// starting point.
#[derive(Clone)]
pub struct FluidModel<T> {
    dim: usize,
    field: FieldFn<T>,
    pub domain: Domain<T>,
    pub lipschitz: T,
    pub approximate_k: bool,
    pub x0: Vec<T>,
    clamp_field: bool,
}

impl<T> fmt::Debug for FluidModel<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluidModel")
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("lipschitz", &self.lipschitz)
            .field("approximate_k", &self.approximate_k)
            .field("x0", &self.x0)
            .field("clamp_field", &self.clamp_field)
            .finish_non_exhaustive()
    }
}

impl<T: Real> FluidModel<T> {
    /// The field closure must already be defined on all of `R^d`.
    pub fn new<F>(dim: usize, field: F, domain: Domain<T>, lipschitz: T, x0: Vec<T>) -> Result<Self>
    where
        F: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        if x0.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: x0.len(),
            });
        }
        if !domain.contains(&x0) {
            return Err(Error::InvalidModel(format!("x0 = {x0:?} is not in the domain")));
        }
        if !(lipschitz >= T::zero()) {
            return Err(Error::InvalidParameter("Lipschitz constant must be nonnegative".into()));
        }
        Ok(Self {
            dim,
            field: Arc::new(field),
            domain,
            lipschitz,
            approximate_k: false,
            x0,
            clamp_field: false,
        })
    }

    /// Evaluates the field at the nearest box point, which extends it
    /// beyond `U` with the same Lipschitz constant.
    pub fn with_clamped_extension(mut self) -> Self {
        self.clamp_field = true;
        self
    }

    pub fn with_start(mut self, x0: Vec<T>) -> Result<Self> {
        if x0.len() != self.dim || !self.domain.contains(&x0) {
            return Err(Error::InvalidModel(format!("x0 = {x0:?} is not in the domain")));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field(&self, x: &[T]) -> Vec<T> {
        match (&self.domain.bbox, self.clamp_field) {
            (Some(b), true) => (self.field)(&b.clamp(x)),
            _ => (self.field)(x),
        }
    }

    /// Replaces `K` by a sampled estimate and flags it as approximate.
    pub fn with_estimated_lipschitz(mut self, samples: usize, seed: u64) -> Result<Self> {
        let est = estimate_lipschitz(&self, samples, seed)?;
        self.lipschitz = est.inflated;
        self.approximate_k = true;
        Ok(self)
    }
}

/// Grid solution of the fluid equation with its exit time from `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidPath<T> {
    pub dim: usize,
    pub step: T,
    pub times: Vec<T>,
    values: Vec<T>,
    slopes: Vec<T>,
    /// First exit from `U`; `None` when the path stays in `U` up to the horizon.
    pub exit_time: Option<T>,
}

impl<T: Real> FluidPath<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("nonempty path")
    }

    pub fn value(&self, k: usize) -> &[T] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    fn slope(&self, k: usize) -> &[T] {
        &self.slopes[k * self.dim..(k + 1) * self.dim]
    }

    /// Grid index `k` with `times[k] ≤ t < times[k+1]`, clamped to the grid.
    pub fn segment(&self, t: T) -> usize {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        k.min(self.len().saturating_sub(2))
    }

    /// Cubic Hermite interpolation; exact at grid times.
    pub fn value_at(&self, t: T) -> Vec<T> {
        if self.len() == 1 {
            return self.value(0).to_vec();
        }
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).max(T::zero()).min(T::one());
        if s == T::zero() {
            return self.value(k).to_vec();
        }
        if s == T::one() {
            return self.value(k + 1).to_vec();
        }
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (self.value(k), self.value(k + 1));
        let (m0, m1) = (self.slope(k), self.slope(k + 1));
        (0..self.dim)
            .map(|i| h00 * y0[i] + h10 * h * m0[i] + h01 * y1[i] + h11 * h * m1[i])
            .collect()
    }

    pub fn final_value(&self) -> &[T] {
        self.value(self.len() - 1)
    }
}

fn rk4_step<T: Real>(model: &FluidModel<T>, x: &[T], h: T) -> Vec<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let k1 = model.field(x);
    let x2: Vec<T> = x.iter().zip(&k1).map(|(&a, &k)| a + half * h * k).collect();
    let k2 = model.field(&x2);
    let x3: Vec<T> = x.iter().zip(&k2).map(|(&a, &k)| a + half * h * k).collect();
    let k3 = model.field(&x3);
    let x4: Vec<T> = x.iter().zip(&k3).map(|(&a, &k)| a + h * k).collect();
    let k4 = model.field(&x4);
    (0..x.len())
        .map(|i| x[i] + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect()
}

/// Classical fourth-order Runge–Kutta on the grid `0, h, 2h, …, t_max`.
///
/// Integration continues past an exit from `U` using the model's extension
/// of the field, so that exit windows can be evaluated.
pub fn integrate<T: Real>(model: &FluidModel<T>, t_max: T, h: T) -> Result<FluidPath<T>> {
    if !(h > T::zero()) || !(t_max >= T::zero()) {
        return Err(Error::InvalidParameter("need h > 0 and t_max >= 0".into()));
    }
    let d = model.dim;
    let steps = ((t_max / h) - T::lit(1e-9)).ceil().max(T::zero()).to_usize().unwrap_or(0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity((steps + 1) * d);
    let mut slopes = Vec::with_capacity((steps + 1) * d);
    let mut x = model.x0.clone();
    let mut exit_time = None;
    times.push(T::zero());
    values.extend_from_slice(&x);
    slopes.extend(check_finite(model.field(&x), T::zero())?);
    for k in 1..=steps {
        let t_prev = times[k - 1];
        let t_next = if k == steps { t_max } else { T::from_usize_lossy(k) * h };
        let dt = t_next - t_prev;
        let x_next = check_finite(rk4_step(model, &x, dt), t_next)?;
        if exit_time.is_none() && !model.domain.contains(&x_next) {
            exit_time = Some(refine_exit(model, &x, t_prev, dt));
        }
        x = x_next;
        times.push(t_next);
        values.extend_from_slice(&x);
        slopes.extend(check_finite(model.field(&x), t_next)?);
    }
    Ok(FluidPath {
        dim: d,
        step: h,
        times,
        values,
        slopes,
        exit_time,
    })
}

fn check_finite<T: Real>(v: Vec<T>, t: T) -> Result<Vec<T>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFiniteField { time: t.to_f64_lossy() })
    }
}

/// Bisection on the sub-step length from the last in-domain grid point.
fn refine_exit<T: Real>(model: &FluidModel<T>, x_in: &[T], t_in: T, dt: T) -> T {
    let (mut lo, mut hi) = (T::zero(), dt);
    let tol = T::lit(EXIT_TIME_RESOLUTION);
    while hi - lo > tol {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if model.domain.contains(&rk4_step(model, x_in, mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t_in + hi
}

/// Largest grid-value change when the step is halved.
pub fn refinement_error<T: Real>(model: &FluidModel<T>, t_max: T, h: T) -> Result<T> {
    let coarse = integrate(model, t_max, h)?;
    let fine = integrate(model, t_max, h * T::lit(0.5))?;
    let mut worst = T::zero();
    for k in 0..coarse.len() {
        let f = fine.value_at(coarse.times[k]);
        worst = worst.max(sup_dist(coarse.value(k), &f));
    }
    Ok(worst)
}

/// How the `ε`-ball around `x_t` is tested against `U`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExitWindowMode<T> {
    /// The full closed sup-norm ball.
    Ball,
    /// Only the lattice points `spacing ⊙ Z^d` inside the ball; needs a
    /// box-only domain and `spacing ≤ 2ε` on every axis.
    Lattice { spacing: Vec<T> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitWindow<T> {
    pub zeta: T,
    /// First time the ball meets the complement of `U`.
    pub lower: T,
    /// First time the ball lies entirely outside `U`.
    pub upper: T,
    /// `sup ‖x_t − x_ζ‖` over `[lower, upper]`.
    pub rho: T,
    /// Set when a predicate domain was probed by sampling the ball.
    pub sampled: bool,
}

struct BallTester<'a, T> {
    domain: &'a Domain<T>,
    eps: T,
    mode: &'a ExitWindowMode<T>,
    offsets: Vec<Vec<T>>,
}

impl<'a, T: Real> BallTester<'a, T> {
    fn new(domain: &'a Domain<T>, d: usize, eps: T, mode: &'a ExitWindowMode<T>) -> Self {
        let offsets = if domain.predicate.is_some() {
            ball_offsets(d, eps)
        } else {
            Vec::new()
        };
        Self {
            domain,
            eps,
            mode,
            offsets,
        }
    }

    fn meets_complement(&self, x: &[T]) -> bool {
        match self.mode {
            ExitWindowMode::Ball => {
                let box_part = self.domain.bbox.as_ref().is_some_and(|b| !b.contains_ball(x, self.eps));
                box_part || self.sample(x).iter().any(|&inside| !inside)
            }
            ExitWindowMode::Lattice { spacing } => {
                let b = self.domain.bbox.as_ref().expect("lattice mode needs a box");
                (0..x.len()).any(|i| {
                    lattice_axis(x[i], self.eps, spacing[i], &b.lower[i], &b.upper[i]).some_outside
                })
            }
        }
    }

    fn outside_entirely(&self, x: &[T]) -> bool {
        match self.mode {
            ExitWindowMode::Ball => {
                let box_part = self.domain.bbox.as_ref().is_some_and(|b| b.disjoint_from_ball(x, self.eps));
                box_part || (!self.offsets.is_empty() && self.sample(x).iter().all(|&inside| !inside))
            }
            ExitWindowMode::Lattice { spacing } => {
                let b = self.domain.bbox.as_ref().expect("lattice mode needs a box");
                (0..x.len()).any(|i| {
                    lattice_axis(x[i], self.eps, spacing[i], &b.lower[i], &b.upper[i]).all_outside
                })
            }
        }
    }

    fn sample(&self, x: &[T]) -> Vec<bool> {
        let Some(pred) = &self.domain.predicate else {
            return Vec::new();
        };
        self.offsets
            .iter()
            .map(|off| {
                let y: Vec<T> = x.iter().zip(off).map(|(&a, &o)| a + o).collect();
                pred(&y)
            })
            .collect()
    }
}

/// Probe points of the closed sup-norm ball: a full tensor grid when small
/// enough, otherwise centre, axis points and the two diagonal corners.
pub(crate) fn ball_offsets<T: Real>(d: usize, eps: T) -> Vec<Vec<T>> {
    const MAX_PROBES: usize = 4096;
    let per_axis = [5usize, 3, 2]
        .into_iter()
        .find(|&m| m.checked_pow(d as u32).is_some_and(|n| n <= MAX_PROBES));
    match per_axis {
        Some(m) => {
            let levels: Vec<T> = (0..m)
                .map(|j| -eps + T::lit(2.0) * eps * T::from_usize_lossy(j) / T::from_usize_lossy(m - 1))
                .collect();
            let total = m.pow(d as u32);
            (0..total)
                .map(|mut code| {
                    (0..d)
                        .map(|_| {
                            let l = levels[code % m];
                            code /= m;
                            l
                        })
                        .collect()
                })
                .collect()
        }
        None => {
            let mut out = vec![vec![T::zero(); d], vec![eps; d], vec![-eps; d]];
            for i in 0..d {
                for s in [eps, -eps] {
                    let mut v = vec![T::zero(); d];
                    v[i] = s;
                    out.push(v);
                }
            }
            out
        }
    }
}

struct LatticeAxis {
    some_outside: bool,
    all_outside: bool,
}

fn lattice_axis<T: Real>(c: T, eps: T, h: T, lo: &Bound<T>, hi: &Bound<T>) -> LatticeAxis {
    let jlo = ((c - eps) / h).ceil();
    let jhi = ((c + eps) / h).floor();
    let inside = |j: T| lo.admits_from_above(j * h) && hi.admits_from_below(j * h);
    if jlo > jhi {
        return LatticeAxis {
            some_outside: false,
            all_outside: true,
        };
    }
    let some_outside = !inside(jlo) || !inside(jhi);
    // The admitted lattice points form a contiguous run; find its first member.
    let mut first = if lo.value.is_finite() { (lo.value / h).floor().max(jlo) } else { jlo };
    while first <= jhi && !lo.admits_from_above(first * h) {
        first = first + T::one();
    }
    let all_outside = !(first <= jhi && inside(first));
    LatticeAxis {
        some_outside,
        all_outside,
    }
}

/// First time in `[t_lo, t_hi]`-bracketed grid where `cond` holds, refined by
/// bisection on the dense interpolant.
fn first_time<T: Real, F: Fn(&[T]) -> bool>(path: &FluidPath<T>, cond: F) -> Option<T> {
    if cond(path.value(0)) {
        return Some(T::zero());
    }
    let k = (1..path.len()).find(|&k| cond(path.value(k)))?;
    let (mut lo, mut hi) = (path.times[k - 1], path.times[k]);
    let tol = T::lit(EXIT_TIME_RESOLUTION);
    while hi - lo > tol {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cond(&path.value_at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// `ζ_ε^−`, `ζ_ε^+` and `ρ(ε)` for a path that leaves `U`.
pub fn exit_window<T: Real>(
    model: &FluidModel<T>,
    path: &FluidPath<T>,
    eps: T,
    mode: &ExitWindowMode<T>,
) -> Result<ExitWindow<T>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let zeta = path
        .exit_time
        .ok_or_else(|| Error::WindowNotBracketed("the fluid path does not leave U within its horizon".into()))?;
    if let ExitWindowMode::Lattice { spacing } = mode {
        if model.domain.bbox.is_none() || model.domain.predicate.is_some() {
            return Err(Error::InvalidParameter("lattice mode needs a box-only domain".into()));
        }
        if spacing.len() != model.dim() || spacing.iter().any(|&h| !(h > T::zero()) || h > eps + eps) {
            return Err(Error::InvalidParameter("lattice spacing must be positive and at most 2 eps".into()));
        }
    }
    let tester = BallTester::new(&model.domain, model.dim(), eps, mode);
    let lower = first_time(path, |x| tester.meets_complement(x))
        .ok_or_else(|| Error::WindowNotBracketed("the eps-ball never meets the complement of U".into()))?;
    let upper = first_time(path, |x| tester.outside_entirely(x)).ok_or_else(|| {
        Error::WindowNotBracketed(format!(
            "the eps-ball is not yet outside U at the horizon {}",
            path.horizon()
        ))
    })?;
    let x_zeta = path.value_at(zeta);
    let mut rho = T::zero();
    let mut probe = |t: T| {
        rho = rho.max(sup_dist(&path.value_at(t), &x_zeta));
    };
    probe(lower);
    probe(upper);
    let quarter = T::lit(0.25);
    for k in 0..path.len().saturating_sub(1) {
        let (a, b) = (path.times[k], path.times[k + 1]);
        if b < lower || a > upper {
            continue;
        }
        for j in 0..=4 {
            let t = a + (b - a) * quarter * T::from_usize_lossy(j);
            if t >= lower && t <= upper {
                probe(t);
            }
        }
    }
    Ok(ExitWindow {
        zeta,
        lower,
        upper,
        rho,
        sampled: model.domain.predicate.is_some() && matches!(mode, ExitWindowMode::Ball),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate<T> {
    /// Largest sampled difference quotient.
    pub raw: T,
    /// `raw` times the safety factor.
    pub inflated: T,
}

/// Sampled sup-norm Lipschitz constant over the (bounded) box of `U`.
pub fn estimate_lipschitz<T: Real>(model: &FluidModel<T>, samples: usize, seed: u64) -> Result<LipschitzEstimate<T>> {
    let bbox = model
        .domain
        .bbox
        .as_ref()
        .filter(|b| b.is_bounded())
        .ok_or_else(|| Error::InvalidParameter("unbounded domain: supply the Lipschitz constant explicitly".into()))?;
    let mut rng = rng::replica_rng(seed, 0);
    let d = model.dim();
    let draw = |rng: &mut rng::StreamRng| -> Vec<T> {
        (0..d)
            .map(|i| {
                let (lo, hi) = (bbox.lower[i].value, bbox.upper[i].value);
                lo + (hi - lo) * T::lit(rng.gen::<f64>())
            })
            .collect()
    };
    let mut raw = T::zero();
    for _ in 0..samples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let dist = sup_dist(&x, &y);
        if dist <= T::zero() {
            continue;
        }
        let bx = model.field(&x);
        let by = model.field(&y);
        let q = sup_dist(&bx, &by) / dist;
        if q.is_finite() {
            raw = raw.max(q);
        }
    }
    Ok(LipschitzEstimate {
        raw,
        inflated: raw * T::lit(LIPSCHITZ_SAFETY),
    })
}

/// Sup-norm of the field over the grid values of a path.
pub fn max_speed<T: Real>(model: &FluidModel<T>, path: &FluidPath<T>) -> T {
    (0..path.len()).fold(T::zero(), |acc, k| acc.max(sup_norm(&model.field(path.value(k)))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_crossing() -> FluidModel<f64> {
        let bbox = BoxDomain {
            lower: vec![Bound::unbounded_below()],
            upper: vec![Bound::open(1.0)],
        };
        FluidModel::new(1, |_: &[f64]| vec![1.0], Domain::from_box(bbox), 0.0, vec![0.0]).unwrap()
    }

    #[test]
    fn constant_field_is_integrated_exactly() {
        let m = FluidModel::new(1, |_: &[f64]| vec![2.0], Domain::from_box(BoxDomain::everything(1)), 0.0, vec![0.0])
            .unwrap();
        let p = integrate(&m, 3.0, 0.01).unwrap();
        for k in 0..p.len() {
            assert!((p.value(k)[0] - 2.0 * p.times[k]).abs() < 1e-12);
        }
        assert!(p.exit_time.is_none());
        assert_eq!(*p.times.last().unwrap(), 3.0);
    }

    #[test]
    fn zero_field_is_constant() {
        let m = FluidModel::new(1, |_: &[f64]| vec![0.0], Domain::from_box(BoxDomain::orthant(1)), 0.0, vec![0.7])
            .unwrap();
        let p = integrate(&m, 2.0, 0.1).unwrap();
        assert!((0..p.len()).all(|k| p.value(k)[0] == 0.7));
    }

    #[test]
    fn dense_accessor_exact_on_grid() {
        let m = FluidModel::new(1, |x: &[f64]| vec![1.0 - x[0]], Domain::from_box(BoxDomain::everything(1)), 1.0, vec![0.2])
            .unwrap();
        let p = integrate(&m, 1.0, 0.1).unwrap();
        for k in 0..p.len() {
            assert_eq!(p.value_at(p.times[k]), p.value(k).to_vec());
        }
        let mid = p.value_at(0.55)[0];
        let exact = 1.0 + (0.2 - 1.0) * (-0.55f64).exp();
        assert!((mid - exact).abs() < 1e-6);
    }

    #[test]
    fn relaxation_solution_satisfies_initial_condition() {
        // ẋ = 1 − x from x0 solves to 1 + (x0 − 1)e^{−t}.
        let x0 = 0.3;
        let m = FluidModel::new(1, |x: &[f64]| vec![1.0 - x[0]], Domain::from_box(BoxDomain::everything(1)), 1.0, vec![x0])
            .unwrap();
        let p = integrate(&m, 2.0, 1e-3).unwrap();
        let exact = 1.0 + (x0 - 1.0) * (-2.0f64).exp();
        assert!((p.final_value()[0] - exact).abs() < 1e-12);
        let printed = 1.0 + x0 * (-2.0f64).exp();
        assert!((p.final_value()[0] - printed).abs() > 0.1);
    }

    #[test]
    fn unit_crossing_window() {
        let m = unit_crossing();
        let p = integrate(&m, 2.0, 1e-3).unwrap();
        let zeta = p.exit_time.unwrap();
        assert!((zeta - 1.0).abs() < 1e-9);
        let w = exit_window(&m, &p, 0.1, &ExitWindowMode::Ball).unwrap();
        assert!((w.lower - 0.9).abs() < 1e-9);
        assert!((w.upper - 1.1).abs() < 1e-9);
        assert!((w.rho - 0.1).abs() < 1e-9);
    }

    #[test]
    fn windows_nest_and_shrink() {
        let m = unit_crossing();
        let p = integrate(&m, 2.0, 1e-3).unwrap();
        let mut prev: Option<ExitWindow<f64>> = None;
        for &eps in &[0.1, 0.01, 0.001] {
            let w = exit_window(&m, &p, eps, &ExitWindowMode::Ball).unwrap();
            assert!(w.lower <= w.zeta && w.zeta <= w.upper);
            // Transversal unit-speed crossing: ρ(ε) = ε.
            assert!((w.rho / eps - 1.0).abs() < 1e-5);
            if let Some(pw) = prev {
                assert!(pw.lower <= w.lower && w.upper <= pw.upper);
                assert!(w.rho < pw.rho);
            }
            prev = Some(w);
        }
    }

    #[test]
    fn short_horizon_is_not_bracketed() {
        let m = unit_crossing();
        let p = integrate(&m, 1.05, 1e-3).unwrap();
        assert!(matches!(
            exit_window(&m, &p, 0.1, &ExitWindowMode::Ball),
            Err(Error::WindowNotBracketed(_))
        ));
        let p = integrate(&m, 0.5, 1e-3).unwrap();
        assert!(exit_window(&m, &p, 0.1, &ExitWindowMode::Ball).is_err());
    }

    #[test]
    fn lattice_window_is_inside_ball_window() {
        let m = unit_crossing();
        let p = integrate(&m, 2.0, 1e-3).unwrap();
        let ball = exit_window(&m, &p, 0.1, &ExitWindowMode::Ball).unwrap();
        let lat = exit_window(&m, &p, 0.1, &ExitWindowMode::Lattice { spacing: vec![0.03] }).unwrap();
        assert!(lat.lower >= ball.lower - 1e-9 && lat.upper <= ball.upper + 1e-9);
        // The first lattice point at or beyond 1 is 1.02, first below is 0.99.
        assert!((lat.lower - 0.92).abs() < 1e-6, "{lat:?}");
        assert!((lat.upper - 1.09).abs() < 1e-6, "{lat:?}");
        assert!(exit_window(&m, &p, 0.1, &ExitWindowMode::Lattice { spacing: vec![0.5] }).is_err());
    }

    #[test]
    fn predicate_domain_crossing() {
        let dom = Domain::from_box(BoxDomain::everything(2)).with_predicate(|x: &[f64]| x[0] + x[1] < 1.0);
        let m = FluidModel::new(2, |_: &[f64]| vec![1.0, 0.0], dom, 0.0, vec![0.0, 0.0]).unwrap();
        let p = integrate(&m, 2.0, 1e-3).unwrap();
        let w = exit_window(&m, &p, 0.05, &ExitWindowMode::Ball).unwrap();
        assert!(w.sampled);
        assert!((w.zeta - 1.0).abs() < 1e-9);
        assert!((w.lower - 0.9).abs() < 1e-9);
        assert!((w.upper - 1.1).abs() < 1e-9);
    }

    #[test]
    fn lipschitz_of_affine_field() {
        let mat = [[1.0, -2.0], [0.5, 0.25]];
        let dom = Domain::from_box(BoxDomain::closed(&[-1.0, -1.0], &[1.0, 1.0]));
        let m = FluidModel::new(
            2,
            move |x: &[f64]| vec![mat[0][0] * x[0] + mat[0][1] * x[1] + 3.0, mat[1][0] * x[0] + mat[1][1] * x[1]],
            dom,
            1.0,
            vec![0.0, 0.0],
        )
        .unwrap();
        let oracle: f64 = mat.iter().map(|r| r.iter().map(|v: &f64| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let est = estimate_lipschitz(&m, 100_000, 5).unwrap();
        assert!(est.raw <= oracle * (1.0 + 1e-12));
        assert!((est.raw - oracle).abs() / oracle < 0.05, "{est:?} vs {oracle}");
        assert!((est.inflated - 1.2 * est.raw).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_needs_bounded_box() {
        let m = FluidModel::new(1, |_: &[f64]| vec![0.0], Domain::from_box(BoxDomain::orthant(1)), 0.0, vec![0.0]).unwrap();
        assert!(estimate_lipschitz(&m, 10, 0).is_err());
        let c = FluidModel::new(1, |_: &[f64]| vec![4.0], Domain::from_box(BoxDomain::closed(&[0.0], &[1.0])), 0.0, vec![0.5])
            .unwrap();
        assert_eq!(estimate_lipschitz(&c, 1000, 0).unwrap().raw, 0.0);
    }

    #[test]
    fn clamped_extension_freezes_field_outside_box() {
        let m = FluidModel::new(1, |x: &[f64]| vec![x[0]], Domain::from_box(BoxDomain::closed(&[0.0], &[1.0])), 1.0, vec![0.5])
            .unwrap()
            .with_clamped_extension();
        assert_eq!(m.field(&[3.0]), vec![1.0]);
        assert_eq!(m.field(&[-3.0]), vec![0.0]);
    }

    #[test]
    fn nonfinite_field_is_reported() {
        let m = FluidModel::new(1, |x: &[f64]| vec![if x[0] > 0.5 { f64::NAN } else { 1.0 }], Domain::from_box(BoxDomain::everything(1)), 1.0, vec![0.0])
            .unwrap();
        assert!(matches!(integrate(&m, 2.0, 0.5), Err(Error::NonFiniteField { .. })));
    }

    #[test]
    fn x0_outside_domain_rejected() {
        let r = FluidModel::new(1, |_: &[f64]| vec![0.0], Domain::from_box(BoxDomain::closed(&[0.0], &[1.0])), 0.0, vec![2.0]);
        assert!(r.is_err());
    }
}
