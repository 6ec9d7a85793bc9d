//! Compensated processes of a scalar observable along a simulated path, and
//! Monte Carlo checks of the martingale inequalities they satisfy.
//!
//! For `f` and a rate `θ`, with `Δ = f(ξ′) − f(ξ)` summed over channels:
//! `β = Σ Δ q`, `α = Σ Δ² q`, `φ_θ = Σ (e^{θΔ} − 1 − θΔ) q`,
//! `M_t = f(X_t) − f(X_0) − ∫β`, `N_t = M_t² − ∫α` and
//! `Z_t = exp(θM_t − ∫φ_θ)`.

use serde::Serialize;

use crate::ctmc::{ChainSpec, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::{expm1_minus_linear, Real};
use crate::stats::{within_binomial_slack, MeanSe};

/// Replicas needed before an inequality check is attempted.
pub const MIN_REPLICAS: usize = 1000;

/// `M`, its compensators and `Z` along one path. Index `k` refers to the
/// segment starting at `times[k]`; integrals are cumulative to `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedPath<T> {
    pub times: Vec<T>,
    pub f_values: Vec<T>,
    pub beta: Vec<T>,
    pub alpha: Vec<T>,
    pub phi: Vec<T>,
    int_beta: Vec<T>,
    int_alpha: Vec<T>,
    int_phi: Vec<T>,
    pub theta: T,
    pub covered_until: T,
    /// Stopping time `T`; evaluation at `t` uses `t ∧ T`.
    pub stop: T,
}

/// Builds the compensated process of `f` along `traj`. `θ` only enters `φ_θ`.
pub fn compensate<T, F>(traj: &Trajectory<T>, spec: &ChainSpec<T>, f: F, theta: T) -> Result<CompensatedPath<T>>
where
    T: Real,
    F: Fn(&[i64]) -> T,
{
    let n = traj.len();
    let mut out = CompensatedPath {
        times: traj.times.clone(),
        f_values: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        int_beta: Vec::with_capacity(n),
        int_alpha: Vec::with_capacity(n),
        int_phi: Vec::with_capacity(n),
        theta,
        covered_until: traj.covered_until(),
        stop: T::infinity(),
    };
    let mut rates = Vec::new();
    let mut next = vec![0i64; traj.dim];
    let (mut ib, mut ia, mut ip) = (T::zero(), T::zero(), T::zero());
    for k in 0..n {
        let s = traj.state(k);
        let fs = f(s);
        spec.fill_rates(s, &mut rates)?;
        let (mut b, mut a, mut p, mut tau) = (T::zero(), T::zero(), T::zero(), T::zero());
        for (ch, &q) in spec.channels().iter().zip(&rates) {
            if q == T::zero() {
                continue;
            }
            for ((nx, &x), &j) in next.iter_mut().zip(s).zip(&ch.jump) {
                *nx = x + j;
            }
            let d = f(&next) - fs;
            b = b + d * q;
            a = a + d * d * q;
            p = p + expm1_minus_linear(theta * d) * q;
            tau = tau + d.abs() * q;
        }
        if !(fs.is_finite() && tau.is_finite() && a.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "observable or its rates are not finite at state {s:?}"
            )));
        }
        out.int_beta.push(ib);
        out.int_alpha.push(ia);
        out.int_phi.push(ip);
        out.f_values.push(fs);
        out.beta.push(b);
        out.alpha.push(a);
        out.phi.push(p);
        let len = traj.segment_end(k) - traj.times[k];
        if len > T::zero() && len.is_finite() {
            ib = ib + b * len;
            ia = ia + a * len;
            ip = ip + p * len;
        }
    }
    Ok(out)
}

impl<T: Real> CompensatedPath<T> {
    pub fn with_stop(mut self, stop: T) -> Self {
        self.stop = stop;
        self
    }

    fn locate(&self, t: T) -> Result<(usize, T)> {
        let t = t.min(self.stop);
        if t > self.covered_until || t < T::zero() {
            return Err(Error::Precondition(format!(
                "time {t} outside the path, which covers [0, {}]",
                self.covered_until
            )));
        }
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        Ok((k, t - self.times[k]))
    }

    pub fn integral_beta(&self, t: T) -> Result<T> {
        let (k, dt) = self.locate(t)?;
        Ok(self.int_beta[k] + self.beta[k] * dt)
    }

    pub fn integral_alpha(&self, t: T) -> Result<T> {
        let (k, dt) = self.locate(t)?;
        Ok(self.int_alpha[k] + self.alpha[k] * dt)
    }

    pub fn integral_phi(&self, t: T) -> Result<T> {
        let (k, dt) = self.locate(t)?;
        Ok(self.int_phi[k] + self.phi[k] * dt)
    }

    pub fn f_at(&self, t: T) -> Result<T> {
        Ok(self.f_values[self.locate(t)?.0])
    }

    pub fn m_at(&self, t: T) -> Result<T> {
        let (k, dt) = self.locate(t)?;
        Ok(self.f_values[k] - self.f_values[0] - (self.int_beta[k] + self.beta[k] * dt))
    }

    /// `N_t = M_t² − ∫α`.
    pub fn n_at(&self, t: T) -> Result<T> {
        let m = self.m_at(t)?;
        Ok(m * m - self.integral_alpha(t)?)
    }

    /// `Z_t`, or `None` if it overflows.
    pub fn z_at(&self, t: T) -> Result<Option<T>> {
        let z = (self.theta * self.m_at(t)? - self.integral_phi(t)?).exp();
        Ok((z.is_finite()).then_some(z))
    }

    /// `M` is linear between jumps, so its extremes over `[0, t]` sit at
    /// jump times, their left limits or `t` itself.
    fn m_extremes(&self, t: T) -> Result<(T, T)> {
        let (last, _) = self.locate(t)?;
        let t = t.min(self.stop);
        let m_of = |k: usize, s: T| self.f_values[k] - self.f_values[0] - (self.int_beta[k] + self.beta[k] * (s - self.times[k]));
        let (mut lo, mut hi) = (T::zero(), T::zero());
        for k in 0..=last {
            let end = if k < last { self.times[k + 1] } else { t };
            for v in [m_of(k, self.times[k]), m_of(k, end)] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        Ok((lo, hi))
    }

    pub fn sup_abs_m(&self, t: T) -> Result<T> {
        let (lo, hi) = self.m_extremes(t)?;
        Ok(hi.max(-lo))
    }

    pub fn sup_m(&self, t: T) -> Result<T> {
        Ok(self.m_extremes(t)?.1)
    }

    /// `|M_t + f(X_0) + ∫β − f(X_t)|`, zero up to rounding.
    pub fn reconstruction_error(&self, t: T) -> Result<T> {
        Ok((self.m_at(t)? + self.f_values[0] + self.integral_beta(t)? - self.f_at(t)?).abs())
    }
}

fn require_replicas(n: usize) -> Result<()> {
    if n < MIN_REPLICAS {
        return Err(Error::Precondition(format!("need at least {MIN_REPLICAS} replicas (got {n})")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanZeroReport {
    pub m: MeanSe,
    pub holds: bool,
}

/// `E M_{t0} = 0` within 4 standard errors.
pub fn mean_zero_check<T: Real>(paths: &[CompensatedPath<T>], t0: T) -> Result<MeanZeroReport> {
    let m = MeanSe::from_samples(
        paths
            .iter()
            .map(|p| p.m_at(t0).map(Real::to_f64_lossy))
            .collect::<Result<Vec<_>>>()?,
    );
    let holds = m.mean.abs() <= 4.0 * m.se || m.mean.abs() < 1e-12;
    Ok(MeanZeroReport { m, holds })
}

/// Doob's `L²` inequality `E sup|M|² ≤ 4 E ∫α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoobReport {
    pub sup_m_sq: MeanSe,
    pub four_alpha: MeanSe,
    pub holds: bool,
}

pub fn doob_check<T: Real>(paths: &[CompensatedPath<T>], t0: T) -> Result<DoobReport> {
    require_replicas(paths.len())?;
    let mut lhs = Vec::with_capacity(paths.len());
    let mut rhs = Vec::with_capacity(paths.len());
    for p in paths {
        lhs.push(p.sup_abs_m(t0)?.to_f64_lossy().powi(2));
        rhs.push(4.0 * p.integral_alpha(t0)?.to_f64_lossy());
    }
    let sup_m_sq = MeanSe::from_samples(lhs);
    let four_alpha = MeanSe::from_samples(rhs);
    let slack = 3.0 * sup_m_sq.se.hypot(four_alpha.se);
    Ok(DoobReport {
        sup_m_sq,
        four_alpha,
        holds: sup_m_sq.mean <= four_alpha.mean + slack,
    })
}

/// `E Z_{t0} ≤ 1` and `P(sup θM > B, ∫φ_θ ≤ A) ≤ e^{A−B}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpReport {
    pub z: MeanSe,
    pub overflowed: usize,
    pub z_holds: bool,
    pub exceed: u64,
    pub total: u64,
    pub exceed_bound: f64,
    pub exceed_holds: bool,
}

pub fn exp_check<T: Real>(paths: &[CompensatedPath<T>], t0: T, b: f64, a: f64) -> Result<ExpReport> {
    require_replicas(paths.len())?;
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::InvalidParameter("A and B must be nonnegative".into()));
    }
    let mut zs = Vec::with_capacity(paths.len());
    let mut overflowed = 0;
    let mut exceed = 0u64;
    for p in paths {
        match p.z_at(t0)? {
            Some(z) => zs.push(z.to_f64_lossy()),
            None => overflowed += 1,
        }
        let theta = p.theta.to_f64_lossy();
        let sup = if theta >= 0.0 {
            theta * p.sup_m(t0)?.to_f64_lossy()
        } else {
            -theta * (-p.m_extremes(t0)?.0.to_f64_lossy())
        };
        if sup > b && p.integral_phi(t0)?.to_f64_lossy() <= a {
            exceed += 1;
        }
    }
    let z = MeanSe::from_samples(zs);
    let total = paths.len() as u64;
    let exceed_bound = (a - b).exp();
    Ok(ExpReport {
        z,
        overflowed,
        z_holds: z.mean <= 1.0 + 3.0 * z.se + 1e-12,
        exceed,
        total,
        exceed_bound,
        exceed_holds: within_binomial_slack(exceed, total, exceed_bound, 3.0),
    })
}

/// `E Z_{t ∧ T}` on a time grid, which should not increase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    pub times: Vec<f64>,
    pub z: Vec<MeanSe>,
    pub holds: bool,
}

pub fn supermartingale_check<T: Real>(paths: &[CompensatedPath<T>], times: &[T]) -> Result<SupermartingaleReport> {
    let mut z = Vec::with_capacity(times.len());
    for &t in times {
        let vals = paths
            .iter()
            .map(|p| p.z_at(t))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .map(Real::to_f64_lossy);
        z.push(MeanSe::from_samples(vals));
    }
    let first_ok = z.first().map_or(true, |s| s.mean <= 1.0 + 3.0 * s.se + 1e-12);
    let holds = first_ok
        && z.windows(2)
            .all(|w| w[1].mean <= w[0].mean + 3.0 * w[0].se.hypot(w[1].se) + 1e-12);
    Ok(SupermartingaleReport {
        times: times.iter().map(|t| t.to_f64_lossy()).collect(),
        z,
        holds,
    })
}
