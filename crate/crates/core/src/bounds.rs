//! Explicit probability bounds for the fluid approximation, the admissible
//! choice of `A`, and empirical checks of the good events along trajectories.

use serde::Serialize;

use crate::ctmc::{ChainSpec, CoordPath, Trajectory};
use crate::error::{Error, Result};
use crate::fluid::{FluidModel, FluidPath};
use crate::scalar::{euclid_dist, sup_dist, Real};

/// Search interval and iteration count for `admissible_a`.
pub const A_SEARCH_MIN: f64 = 1e-12;
pub const A_SEARCH_MAX: f64 = 1e6;
pub const A_SEARCH_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TheoremTag {
    /// Second-moment bound in the Euclidean norm.
    L2,
    /// Exponential-martingale bound in the supremum norm.
    Exp,
    /// Exponential bound on the terminal value at the exit time.
    Terminal,
    /// Exponential bound plus the decoupling term of the modulated chain.
    Coupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Norm {
    Euclidean,
    Sup,
}

impl Norm {
    pub fn dist<T: Real>(self, a: &[T], b: &[T]) -> T {
        match self {
            Norm::Euclidean => euclid_dist(a, b),
            Norm::Sup => sup_dist(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget<T> {
    pub eps: T,
    pub t0: T,
    pub lipschitz: T,
    pub dim: usize,
    pub a: T,
    pub delta: T,
    pub theta: T,
    /// Deviation radius the bound refers to.
    pub radius: T,
    /// Clamped to `[0, 1]`.
    pub bound: T,
    pub tag: TheoremTag,
    pub norm: Norm,
}

impl<T: Real> ErrorBudget<T> {
    /// A bound of 1 carries no information.
    pub fn is_vacuous(&self) -> bool {
        self.bound >= T::one()
    }
}

/// `δ = ε e^{−K t0} / 3`.
pub fn delta<T: Real>(eps: T, lipschitz: T, t0: T) -> T {
    eps * (-lipschitz * t0).exp() / T::lit(3.0)
}

/// `θ = δ / (A t0)`.
pub fn theta<T: Real>(delta: T, a: T, t0: T) -> T {
    delta / (a * t0)
}

/// Unclamped `2d exp(−δ² / (2 A t0))`.
pub fn exp_tail<T: Real>(dim: usize, delta: T, a: T, t0: T) -> T {
    T::lit(2.0) * T::from_usize_lossy(dim) * (-(delta * delta) / (T::lit(2.0) * a * t0)).exp()
}

fn clamp_unit<T: Real>(x: T) -> T {
    if x.is_nan() {
        T::one()
    } else {
        x.max(T::zero()).min(T::one())
    }
}

fn check_inputs<T: Real>(eps: T, t0: T, lipschitz: T, a: T, dim: usize) -> Result<()> {
    let ok = eps > T::zero() && t0 > T::zero() && a > T::zero() && lipschitz >= T::zero() && dim > 0;
    let finite = eps.is_finite() && t0.is_finite() && a.is_finite() && lipschitz.is_finite();
    if ok && finite {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "bounds need eps, t0, A > 0, K >= 0, d >= 1 (got eps={eps}, t0={t0}, K={lipschitz}, A={a}, d={dim})"
        )))
    }
}

fn base<T: Real>(eps: T, t0: T, lipschitz: T, a: T, dim: usize, tag: TheoremTag, norm: Norm) -> ErrorBudget<T> {
    let delta = delta(eps, lipschitz, t0);
    ErrorBudget {
        eps,
        t0,
        lipschitz,
        dim,
        a,
        delta,
        theta: theta(delta, a, t0),
        radius: eps,
        bound: T::one(),
        tag,
        norm,
    }
}

/// `min(1, 4 A t0 / δ²)`, Euclidean norm.
pub fn budget_l2<T: Real>(eps: T, t0: T, lipschitz: T, a: T, dim: usize) -> Result<ErrorBudget<T>> {
    check_inputs(eps, t0, lipschitz, a, dim)?;
    let mut b = base(eps, t0, lipschitz, a, dim, TheoremTag::L2, Norm::Euclidean);
    b.bound = clamp_unit(T::lit(4.0) * a * t0 / (b.delta * b.delta));
    Ok(b)
}

/// `min(1, 2d exp(−δ²/(2 A t0)))`, supremum norm.
pub fn budget_exp<T: Real>(eps: T, t0: T, lipschitz: T, a: T, dim: usize) -> Result<ErrorBudget<T>> {
    check_inputs(eps, t0, lipschitz, a, dim)?;
    let mut b = base(eps, t0, lipschitz, a, dim, TheoremTag::Exp, Norm::Sup);
    b.bound = clamp_unit(exp_tail(dim, b.delta, a, t0));
    Ok(b)
}

/// Exponential bound for `‖X_T − x_ζ‖ > ε + ρ(ε)`; returns the radius too.
pub fn budget_terminal<T: Real>(
    eps: T,
    t0: T,
    lipschitz: T,
    a: T,
    dim: usize,
    rho_eps: T,
) -> Result<(T, ErrorBudget<T>)> {
    if !(rho_eps >= T::zero()) {
        return Err(Error::InvalidParameter("rho(eps) must be nonnegative".into()));
    }
    let mut b = budget_exp(eps, t0, lipschitz, a, dim)?;
    b.tag = TheoremTag::Terminal;
    b.radius = eps + rho_eps;
    Ok((b.radius, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibleA<T> {
    pub a: T,
    /// `A − Q J² exp(δJ/(A t0))`, nonnegative.
    pub residual: T,
}

/// Smallest `A` (to bisection accuracy on `log A`) with
/// `A ≥ Q J² exp(δJ/(A t0))`, which makes the exponential good event certain.
pub fn admissible_a<T: Real>(q: T, j: T, eps: T, t0: T, lipschitz: T) -> Result<AdmissibleA<T>> {
    if !(q > T::zero() && j > T::zero() && eps > T::zero() && t0 > T::zero() && lipschitz >= T::zero()) {
        return Err(Error::InvalidParameter("admissible A needs Q, J, eps, t0 > 0 and K >= 0".into()));
    }
    let d = delta(eps, lipschitz, t0);
    let residual = |a: T| a - q * j * j * (d * j / (a * t0)).exp();
    let (lo0, hi0) = (T::lit(A_SEARCH_MIN), T::lit(A_SEARCH_MAX));
    if residual(hi0) < T::zero() {
        return Err(Error::NoAdmissibleA { cap: A_SEARCH_MAX });
    }
    if residual(lo0) >= T::zero() {
        return Ok(AdmissibleA {
            a: lo0,
            residual: residual(lo0),
        });
    }
    let (mut lo, mut hi) = (lo0.ln(), hi0.ln());
    for _ in 0..A_SEARCH_ITERS {
        let mid = T::lit(0.5) * (lo + hi);
        if residual(mid.exp()) >= T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut a = hi.exp();
    // Guard against rounding in exp(ln A).
    while residual(a) < T::zero() {
        a = a * (T::one() + T::epsilon());
    }
    Ok(AdmissibleA { a, residual: residual(a) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OmegaVariant {
    L2,
    Exp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaReport<T> {
    pub variant: OmegaVariant,
    pub initial_gap: T,
    pub drift_mismatch: T,
    /// `∫ α` for L2, `∫ φ(·, θ)` for EXP.
    pub fluctuation: T,
    pub fluctuation_threshold: T,
    pub delta: T,
    pub omega0: bool,
    pub omega1: bool,
    pub omega2: bool,
    /// First time the coordinate path leaves `U`; `None` if it stays inside.
    pub exit_time: Option<T>,
    /// Upper integration limit `T ∧ t0`.
    pub limit: T,
}

impl<T: Real> OmegaReport<T> {
    pub fn all(&self) -> bool {
        self.omega0 && self.omega1 && self.omega2
    }
}

/// First jump time at which the coordinate image leaves the domain.
pub fn coordinate_exit_time<T: Real>(traj: &Trajectory<T>, spec: &ChainSpec<T>, model: &FluidModel<T>) -> Option<T> {
    (0..traj.len())
        .find(|&k| !model.domain.contains(&spec.coord(traj.state(k))))
        .map(|k| traj.times[k])
}

/// `∫₀^{limit} f(X_s) ds` for a fallible integrand.
fn integrate_states<T, F>(traj: &Trajectory<T>, limit: T, mut f: F) -> Result<T>
where
    T: Real,
    F: FnMut(&[i64]) -> Result<T>,
{
    let mut acc = T::zero();
    for k in 0..traj.len() {
        let start = traj.times[k];
        if start >= limit {
            break;
        }
        let end = traj.segment_end(k).min(limit);
        if end > start {
            acc = acc + f(traj.state(k))? * (end - start);
        }
    }
    Ok(acc)
}

/// Evaluates the three good events on one trajectory.
pub fn omega_report<T: Real>(
    traj: &Trajectory<T>,
    spec: &ChainSpec<T>,
    model: &FluidModel<T>,
    budget: &ErrorBudget<T>,
    variant: OmegaVariant,
) -> Result<OmegaReport<T>> {
    if traj.covered_until() < budget.t0 {
        return Err(Error::Precondition(format!(
            "trajectory horizon {} is shorter than t0 = {}",
            traj.horizon, budget.t0
        )));
    }
    let norm = match variant {
        OmegaVariant::L2 => Norm::Euclidean,
        OmegaVariant::Exp => Norm::Sup,
    };
    let exit_time = coordinate_exit_time(traj, spec, model);
    let limit = exit_time.map_or(budget.t0, |t| t.min(budget.t0));
    let initial_gap = norm.dist(&spec.coord(traj.initial_state()), &model.x0);
    let drift_mismatch = integrate_states(traj, limit, |s| {
        let beta = spec.drift(s)?;
        let b = model.field(&spec.coord(s));
        Ok(norm.dist(&beta, &b))
    })?;
    let (fluctuation, fluctuation_threshold) = match variant {
        OmegaVariant::L2 => (
            integrate_states(traj, limit, |s| spec.alpha(s))?,
            budget.a * budget.t0,
        ),
        OmegaVariant::Exp => (
            integrate_states(traj, limit, |s| {
                let phi = spec.phi_exp(s, budget.theta)?;
                Ok(if phi.saturated { T::infinity() } else { phi.value })
            })?,
            T::lit(0.5) * budget.theta * budget.theta * budget.a * budget.t0,
        ),
    };
    Ok(OmegaReport {
        variant,
        initial_gap,
        drift_mismatch,
        fluctuation,
        fluctuation_threshold,
        delta: budget.delta,
        omega0: initial_gap <= budget.delta,
        omega1: drift_mismatch <= budget.delta,
        omega2: fluctuation <= fluctuation_threshold,
        exit_time,
        limit,
    })
}

/// `sup_{t ≤ t0} ‖X_t − x_t‖`, evaluated at every jump time (both one-sided
/// values) and every fluid grid time.
pub fn sup_deviation<T: Real>(path: &CoordPath<T>, fluid: &FluidPath<T>, t0: T, norm: Norm) -> Result<T> {
    if path.covered_until() < t0 || fluid.horizon() < t0 {
        return Err(Error::Precondition(format!("paths must cover [0, {t0}]")));
    }
    if path.dim != fluid.dim {
        return Err(Error::Dimension {
            expected: fluid.dim,
            got: path.dim,
        });
    }
    let mut worst = T::zero();
    for k in 0..path.len() {
        let t = path.times[k];
        if t > t0 {
            break;
        }
        let x = fluid.value_at(t);
        worst = worst.max(norm.dist(path.value(k), &x));
        if k > 0 {
            worst = worst.max(norm.dist(path.value(k - 1), &x));
        }
    }
    for (k, &t) in fluid.times.iter().enumerate() {
        if t > t0 {
            break;
        }
        worst = worst.max(norm.dist(path.value_at(t), fluid.value(k)));
    }
    let x_end = fluid.value_at(t0);
    worst = worst.max(norm.dist(path.value_at(t0), &x_end));
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exceedance<T> {
    pub exceed: usize,
    pub total: usize,
    pub fraction: T,
    /// Three binomial standard errors.
    pub radius: T,
}

/// Fraction of replicas whose supremum-norm deviation exceeds `eps` on `[0, t0]`.
pub fn empirical_exceedance<T: Real>(
    replicas: &[CoordPath<T>],
    fluid: &FluidPath<T>,
    eps: T,
    t0: T,
) -> Result<Exceedance<T>> {
    let mut exceed = 0;
    for p in replicas {
        if sup_deviation(p, fluid, t0, Norm::Sup)? > eps {
            exceed += 1;
        }
    }
    Ok(exceedance_from_counts(exceed, replicas.len()))
}

pub fn exceedance_from_counts<T: Real>(exceed: usize, total: usize) -> Exceedance<T> {
    if total == 0 {
        return Exceedance {
            exceed,
            total,
            fraction: T::zero(),
            radius: T::one(),
        };
    }
    let n = T::from_usize_lossy(total);
    let p = T::from_usize_lossy(exceed) / n;
    Exceedance {
        exceed,
        total,
        fraction: p,
        radius: T::lit(3.0) * (p * (T::one() - p) / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::project;
    use crate::fluid::{integrate, BoxDomain, Domain};

    #[test]
    fn l2_examples() {
        let b = budget_l2(3.0f64, 1.0, 0.0, 0.05, 1).unwrap();
        assert_eq!(b.delta, 1.0);
        assert!((b.bound - 0.2).abs() < 1e-15);
        assert_eq!(b.norm, Norm::Euclidean);
        let mut prev = f64::INFINITY;
        for a in [1e-1, 1e-2, 1e-3, 1e-4] {
            let b = budget_l2(3.0, 1.0, 0.0, a, 1).unwrap();
            assert!(b.bound < prev);
            prev = b.bound;
        }
        let small = budget_l2(3.0f64, 1.0, 0.0, 1e-3, 1).unwrap();
        let wide = budget_l2(6.0, 1.0, 0.0, 1e-3, 1).unwrap();
        assert!((small.bound / wide.bound - 4.0).abs() < 1e-12);
    }

    #[test]
    fn exp_examples() {
        // δ² = 2 A t0 with d = 1.
        let b = budget_exp(3.0, 1.0, 0.0, 0.5, 1).unwrap();
        assert!((b.bound - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(b.norm, Norm::Sup);
        assert_eq!(b.tag, TheoremTag::Exp);
        assert!((b.theta - 2.0).abs() < 1e-15);
    }

    #[test]
    fn epidemic_constant_identity() {
        let lam: f64 = 5.0;
        let k = lam + lam.max(1.0);
        for &n in &[1e2, 1e3, 1e4] {
            for &(eps, t0) in &[(0.1, 1.0), (0.05, 0.5), (0.3, 2.0)] {
                let a = (1.0 + lam) * std::f64::consts::E / n;
                let raw = exp_tail(2, delta(eps, k, t0), a, t0);
                let c = 18.0 * (lam + 1.0) * t0 * (2.0 * k * t0 + 1.0).exp();
                let closed = 4.0 * (-n * eps * eps / c).exp();
                assert!((raw / closed - 1.0).abs() < 1e-12, "n={n} eps={eps} t0={t0}");
            }
        }
    }

    #[test]
    fn terminal_examples() {
        let exp = budget_exp(0.2, 1.0, 1.0, 1e-3, 2).unwrap();
        let (r, t) = budget_terminal(0.2, 1.0, 1.0, 1e-3, 2, 0.0).unwrap();
        assert_eq!(r, 0.2);
        assert_eq!(t.bound, exp.bound);
        assert_eq!(t.tag, TheoremTag::Terminal);
        let (r, _) = budget_terminal(0.1f64, 1.0, 1.0, 1e-3, 1, 0.1).unwrap();
        assert!((r - 0.2).abs() < 1e-15);
    }

    #[test]
    fn recomputation_is_exact() {
        let b = budget_exp(0.37, 1.7, 2.3, 0.011, 3).unwrap();
        assert_eq!(b.delta, delta(b.eps, b.lipschitz, b.t0));
        assert_eq!(b.theta, theta(b.delta, b.a, b.t0));
        assert!(b.delta > 0.0 && b.delta <= b.eps / 3.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(budget_exp(0.0, 1.0, 0.0, 1.0, 1).is_err());
        assert!(budget_l2(1.0, 1.0, 0.0, -1.0, 1).is_err());
        assert!(budget_exp(1.0, 1.0, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn admissible_a_examples() {
        let (q, j, eps, t0, k) = (50.0, 0.01, 0.1, 1.0, 1.0);
        let d = delta(eps, k, t0);
        let choice = q * j * j * std::f64::consts::E;
        assert!(d * j / (choice * t0) <= 1.0);
        let r = admissible_a(q, j, eps, t0, k).unwrap();
        assert!(r.residual >= 0.0);
        assert!(r.a <= choice * (1.0 + 1e-12));
        assert!(r.a >= q * j * j);
        let direct = r.a - q * j * j * (d * j / (r.a * t0)).exp();
        assert!(direct >= 0.0);
        let mut prev = f64::INFINITY;
        for jj in [1e-1, 1e-2, 1e-3, 1e-4] {
            let a = admissible_a(q, jj, eps, t0, k).unwrap().a;
            assert!(a < prev);
            prev = a;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn admissible_a_cap() {
        assert!(matches!(
            admissible_a(1e7, 1.0, 1.0, 1.0, 0.0),
            Err(Error::NoAdmissibleA { .. })
        ));
    }

    fn poisson_setup() -> (ChainSpec<f64>, FluidModel<f64>) {
        let n = 100.0;
        let spec = ChainSpec::scaled(1, n).with_channel("arrival", vec![1], move |_| 2.0 * n).unwrap();
        let model = FluidModel::new(1, |_: &[f64]| vec![2.0], Domain::from_box(BoxDomain::everything(1)), 0.0, vec![0.0])
            .unwrap();
        (spec, model)
    }

    #[test]
    fn poisson_drift_mismatch_is_zero() {
        let (spec, model) = poisson_setup();
        let traj = crate::ctmc::simulate(&spec, &[0], 1.0, 3).unwrap();
        let budget = budget_exp(0.1, 1.0, 0.0, 2.0 * std::f64::consts::E / 100.0, 1).unwrap();
        let rep = omega_report(&traj, &spec, &model, &budget, OmegaVariant::Exp).unwrap();
        assert!(rep.drift_mismatch < 1e-12);
        assert!(rep.omega0 && rep.omega1);
        assert!(rep.exit_time.is_none());
        assert_eq!(rep.fluctuation_threshold, 0.5 * budget.theta * budget.theta * budget.a * budget.t0);
        let l2 = budget_l2(0.1, 1.0, 0.0, 2.0 / 100.0, 1).unwrap();
        let rep = omega_report(&traj, &spec, &model, &l2, OmegaVariant::L2).unwrap();
        // α = λN/N² = 2/100 = A, so ∫α = A t0 exactly.
        assert!((rep.fluctuation - 0.02).abs() < 1e-15);
    }

    #[test]
    fn exceedance_self_and_zero_eps() {
        let (spec, model) = poisson_setup();
        let fluid = integrate(&model, 1.0, 1e-3).unwrap();
        let selfpath = CoordPath {
            dim: 1,
            times: fluid.times.clone(),
            values: (0..fluid.len()).map(|k| fluid.value(k)[0]).collect(),
            horizon: 1.0,
            terminated_absorbing: false,
        };
        let e = empirical_exceedance(&[selfpath], &fluid, 0.01, 1.0).unwrap();
        assert_eq!(e.fraction, 0.0);
        let reps: Vec<_> = (0..5)
            .map(|r| project(&crate::ctmc::simulate(&spec, &[0], 1.0, r).unwrap(), &spec).unwrap())
            .collect();
        let e = empirical_exceedance(&reps, &fluid, 0.0, 1.0).unwrap();
        assert_eq!(e.fraction, 1.0);
    }
}
