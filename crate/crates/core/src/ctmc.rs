//! Continuous-time Markov chains on integer lattices.
//!
//! A chain is declared as a finite list of reaction channels, each a fixed
//! integer jump with a state-dependent rate, together with a coordinate map
//! into `R^d`. The finite channel list makes every drift sum absolutely
//! convergent, so there is no explosion time for the drift to worry about.
//!
//! Sample paths are generated exactly from the jump chain and exponential
//! holding times.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::{sigma_theta, Real};

pub type RateFn<T> = Arc<dyn Fn(&[i64]) -> T + Send + Sync>;
pub type CoordFn<T> = Arc<dyn Fn(&[i64]) -> Vec<T> + Send + Sync>;

/// Default cap on events per replica.
pub const DEFAULT_EVENT_BUDGET: u64 = 100_000_000;

#[derive(Clone)]
pub struct Channel<T> {
    pub name: String,
    pub jump: Vec<i64>,
    rate: RateFn<T>,
}

impl<T: Real> Channel<T> {
    #[inline]
    pub fn rate(&self, state: &[i64]) -> T {
        (self.rate)(state)
    }
}

impl<T> fmt::Debug for Channel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("name", &self.name)
            .field("jump", &self.jump)
            .finish_non_exhaustive()
    }
}

/// A chain on `Z^n` given by reaction channels and a coordinate map.
#[derive(Clone)]
pub struct ChainSpec<T> {
    dim: usize,
    coord_dim: usize,
    channels: Vec<Channel<T>>,
    coord: CoordFn<T>,
    scale_hint: Option<T>,
}

impl<T> fmt::Debug for ChainSpec<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainSpec")
            .field("dim", &self.dim)
            .field("coord_dim", &self.coord_dim)
            .field("channels", &self.channels)
            .field("scale_hint", &self.scale_hint)
            .finish_non_exhaustive()
    }
}

/// Value of the exponential noise functional, with a flag set when
/// `e^{θΔ}` overflowed and the value was saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue<T> {
    pub value: T,
    pub saturated: bool,
}

impl<T: Real> ChainSpec<T> {
    /// Chain on `Z^dim` with an arbitrary coordinate map into `R^coord_dim`.
    pub fn new<F>(dim: usize, coord_dim: usize, coord: F) -> Self
    where
        F: Fn(&[i64]) -> Vec<T> + Send + Sync + 'static,
    {
        Self {
            dim,
            coord_dim,
            channels: Vec::new(),
            coord: Arc::new(coord),
            scale_hint: None,
        }
    }

    /// Chain whose coordinates are the state divided by `scale`.
    pub fn scaled(dim: usize, scale: T) -> Self {
        let mut spec = Self::new(dim, dim, move |s: &[i64]| {
            s.iter().map(|&v| T::from_count(v) / scale).collect()
        });
        spec.scale_hint = Some(scale);
        spec
    }

    /// Chain whose coordinates are the state itself.
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, dim, |s: &[i64]| s.iter().map(|&v| T::from_count(v)).collect())
    }

    pub fn with_scale_hint(mut self, scale: T) -> Self {
        self.scale_hint = Some(scale);
        self
    }

    pub fn with_channel<F>(mut self, name: &str, jump: Vec<i64>, rate: F) -> Result<Self>
    where
        F: Fn(&[i64]) -> T + Send + Sync + 'static,
    {
        self.add_channel(name, jump, rate)?;
        Ok(self)
    }

    pub fn add_channel<F>(&mut self, name: &str, jump: Vec<i64>, rate: F) -> Result<()>
    where
        F: Fn(&[i64]) -> T + Send + Sync + 'static,
    {
        if jump.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: jump.len(),
            });
        }
        if jump.iter().all(|&j| j == 0) {
            return Err(Error::InvalidModel(format!("channel `{name}` has a zero jump")));
        }
        self.channels.push(Channel {
            name: name.to_string(),
            jump,
            rate: Arc::new(rate),
        });
        Ok(())
    }

    /// Chain whose channels are those of `self` followed by those of `other`.
    /// The coordinate map of `self` is kept.
    pub fn union(&self, other: &ChainSpec<T>) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        out.channels.extend(other.channels.iter().cloned());
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coord_dim(&self) -> usize {
        self.coord_dim
    }

    pub fn channels(&self) -> &[Channel<T>] {
        &self.channels
    }

    pub fn scale_hint(&self) -> Option<T> {
        self.scale_hint
    }

    pub fn coord(&self, state: &[i64]) -> Vec<T> {
        (self.coord)(state)
    }

    pub fn coord_fn(&self) -> CoordFn<T> {
        Arc::clone(&self.coord)
    }

    fn check_state(&self, state: &[i64]) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: state.len(),
            });
        }
        Ok(())
    }

    fn checked_rate(&self, idx: usize, state: &[i64]) -> Result<T> {
        let ch = &self.channels[idx];
        let r = ch.rate(state);
        if !r.is_finite() || r < T::zero() {
            return Err(Error::InvalidRate {
                channel: ch.name.clone(),
                state: state.to_vec(),
                value: r.to_f64_lossy(),
            });
        }
        Ok(r)
    }

    /// Writes every channel rate into `buf` and returns their sum.
    pub fn fill_rates(&self, state: &[i64], buf: &mut Vec<T>) -> Result<T> {
        buf.clear();
        let mut total = T::zero();
        for idx in 0..self.channels.len() {
            let r = self.checked_rate(idx, state)?;
            total = total + r;
            buf.push(r);
        }
        Ok(total)
    }

    pub fn rates(&self, state: &[i64]) -> Result<Vec<T>> {
        self.check_state(state)?;
        let mut buf = Vec::with_capacity(self.channels.len());
        self.fill_rates(state, &mut buf)?;
        Ok(buf)
    }

    /// Total jump rate `q(ξ)`.
    pub fn total_rate(&self, state: &[i64]) -> Result<T> {
        self.check_state(state)?;
        let mut buf = Vec::with_capacity(self.channels.len());
        self.fill_rates(state, &mut buf)
    }

    /// Applies `f(Δx, rate)` to each channel with positive rate, where `Δx`
    /// is the coordinate increment of that channel's jump.
    fn for_each_increment<F>(&self, state: &[i64], mut f: F) -> Result<()>
    where
        F: FnMut(&[T], T),
    {
        self.check_state(state)?;
        let here = self.coord(state);
        let mut next = state.to_vec();
        let mut delta = vec![T::zero(); self.coord_dim];
        for (idx, ch) in self.channels.iter().enumerate() {
            let r = self.checked_rate(idx, state)?;
            if r == T::zero() {
                continue;
            }
            for ((n, &s), &j) in next.iter_mut().zip(state).zip(&ch.jump) {
                *n = s + j;
            }
            let there = self.coord(&next);
            for ((d, &a), &b) in delta.iter_mut().zip(&there).zip(&here) {
                *d = a - b;
            }
            f(&delta, r);
        }
        Ok(())
    }

    /// Drift vector `β(ξ) = Σ (x(ξ′) − x(ξ)) q(ξ, ξ′)`.
    pub fn drift(&self, state: &[i64]) -> Result<Vec<T>> {
        let mut beta = vec![T::zero(); self.coord_dim];
        self.for_each_increment(state, |dx, r| {
            for (b, &d) in beta.iter_mut().zip(dx) {
                *b = *b + d * r;
            }
        })?;
        Ok(beta)
    }

    /// Quadratic variation rate `α(ξ) = Σ |x(ξ′) − x(ξ)|² q(ξ, ξ′)`, Euclidean norm.
    pub fn alpha(&self, state: &[i64]) -> Result<T> {
        let mut acc = T::zero();
        self.for_each_increment(state, |dx, r| {
            let sq = dx.iter().fold(T::zero(), |s, &d| s + d * d);
            acc = acc + sq * r;
        })?;
        Ok(acc)
    }

    /// Per-coordinate quadratic variation rates.
    pub fn alpha_per_coord(&self, state: &[i64]) -> Result<Vec<T>> {
        let mut acc = vec![T::zero(); self.coord_dim];
        self.for_each_increment(state, |dx, r| {
            for (a, &d) in acc.iter_mut().zip(dx) {
                *a = *a + d * d * r;
            }
        })?;
        Ok(acc)
    }

    /// Per-coordinate `φ^i(ξ, θ) = Σ σ_θ(Δx^i) q(ξ, ξ′)`.
    pub fn phi_per_coord(&self, state: &[i64], theta: T) -> Result<Vec<T>> {
        let mut acc = vec![T::zero(); self.coord_dim];
        if theta == T::zero() {
            self.check_state(state)?;
            return Ok(acc);
        }
        self.for_each_increment(state, |dx, r| {
            for (a, &d) in acc.iter_mut().zip(dx) {
                *a = *a + sigma_theta(theta, d) * r;
            }
        })?;
        Ok(acc)
    }

    /// `φ(ξ, θ) = max_i φ^i(ξ, θ)`; saturates at `T::max_value()` on overflow.
    pub fn phi_exp(&self, state: &[i64], theta: T) -> Result<PhiValue<T>> {
        if theta < T::zero() {
            return Err(Error::InvalidParameter("theta must be nonnegative".into()));
        }
        let per = self.phi_per_coord(state, theta)?;
        let value = per.into_iter().fold(T::zero(), T::max);
        if value.is_finite() {
            Ok(PhiValue {
                value,
                saturated: false,
            })
        } else {
            Ok(PhiValue {
                value: T::max_value(),
                saturated: true,
            })
        }
    }
}

/// Piecewise-constant, right-continuous sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub seed: u64,
    pub stream: u64,
    pub dim: usize,
    /// Jump times, starting with 0.
    pub times: Vec<T>,
    /// Flat row-major states, one row per entry of `times`.
    pub states: Vec<i64>,
    pub horizon: T,
    pub terminated_absorbing: bool,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn jump_count(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn state(&self, k: usize) -> &[i64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn initial_state(&self) -> &[i64] {
        self.state(0)
    }

    pub fn final_state(&self) -> &[i64] {
        self.state(self.len() - 1)
    }

    /// Index of the segment in force at time `t` (right-continuous).
    pub fn segment_at(&self, t: T) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn state_at(&self, t: T) -> &[i64] {
        self.state(self.segment_at(t))
    }

    /// End time of segment `k`: next jump time, or the horizon for the last one.
    pub fn segment_end(&self, k: usize) -> T {
        if k + 1 < self.times.len() {
            self.times[k + 1]
        } else {
            self.horizon
        }
    }

    /// Last time covered by the path; infinite once absorbed.
    pub fn covered_until(&self) -> T {
        if self.terminated_absorbing {
            T::infinity()
        } else {
            self.horizon
        }
    }
}

/// Simulation failure. A truncated run keeps its partial path.
#[derive(Debug)]
pub enum SimError<T> {
    Model(Error),
    Truncated { partial: Trajectory<T>, budget: u64 },
}

impl<T: Real> From<SimError<T>> for Error {
    fn from(e: SimError<T>) -> Self {
        match e {
            SimError::Model(e) => e,
            SimError::Truncated { partial, budget } => Error::EventBudgetExceeded {
                budget,
                time: partial.times.last().map_or(0.0, |t| t.to_f64_lossy()),
            },
        }
    }
}

impl<T> From<Error> for SimError<T> {
    fn from(e: Error) -> Self {
        SimError::Model(e)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub max_events: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_events: DEFAULT_EVENT_BUDGET,
        }
    }
}

/// Exact simulation from `init` up to `t_max`, using stream 0 of `seed`.
pub fn simulate<T: Real>(
    spec: &ChainSpec<T>,
    init: &[i64],
    t_max: T,
    seed: u64,
) -> Result<Trajectory<T>, SimError<T>> {
    simulate_replica(spec, init, t_max, seed, 0, SimOptions::default())
}

/// Exact simulation of replica `replica` under master seed `seed`.
pub fn simulate_replica<T: Real>(
    spec: &ChainSpec<T>,
    init: &[i64],
    t_max: T,
    seed: u64,
    replica: u64,
    opts: SimOptions,
) -> Result<Trajectory<T>, SimError<T>> {
    let mut rng = rng::replica_rng(seed, replica);
    let mut traj = simulate_with_rng(spec, init, t_max, &mut rng, opts)?;
    traj.seed = seed;
    traj.stream = replica;
    Ok(traj)
}

pub fn simulate_with_rng<T: Real>(
    spec: &ChainSpec<T>,
    init: &[i64],
    t_max: T,
    rng: &mut StreamRng,
    opts: SimOptions,
) -> Result<Trajectory<T>, SimError<T>> {
    spec.check_state(init)?;
    if !(t_max >= T::zero()) {
        return Err(Error::InvalidParameter("t_max must be nonnegative".into()).into());
    }
    let dim = spec.dim;
    let t_end = t_max.to_f64_lossy();
    let mut traj = Trajectory {
        seed: 0,
        stream: 0,
        dim,
        times: vec![T::zero()],
        states: init.to_vec(),
        horizon: t_max,
        terminated_absorbing: false,
    };
    let mut state = init.to_vec();
    let mut rates = Vec::with_capacity(spec.channels.len());
    let mut t = 0.0_f64;
    let mut events = 0_u64;
    loop {
        let total = spec.fill_rates(&state, &mut rates)?.to_f64_lossy();
        if total <= 0.0 {
            traj.terminated_absorbing = true;
            break;
        }
        t += rng::exp_time(rng, total);
        if t > t_end {
            break;
        }
        if events >= opts.max_events {
            return Err(SimError::Truncated {
                partial: traj,
                budget: opts.max_events,
            });
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        let mut last_positive = 0;
        for (idx, r) in rates.iter().enumerate() {
            let r = r.to_f64_lossy();
            if r > 0.0 {
                last_positive = idx;
            }
            acc += r;
            if target < acc {
                chosen = Some(idx);
                break;
            }
        }
        // Rounding can leave `target` just above the final partial sum.
        let idx = chosen.unwrap_or(last_positive);
        for (s, &j) in state.iter_mut().zip(&spec.channels[idx].jump) {
            *s += j;
        }
        events += 1;
        traj.times.push(T::lit(t));
        traj.states.extend_from_slice(&state);
    }
    Ok(traj)
}

/// Coordinate image `X_t = x(X_t)` of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordPath<T> {
    pub dim: usize,
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub horizon: T,
    pub terminated_absorbing: bool,
}

impl<T: Real> CoordPath<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, k: usize) -> &[T] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn value_at(&self, t: T) -> &[T] {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.value(k)
    }

    pub fn covered_until(&self) -> T {
        if self.terminated_absorbing {
            T::infinity()
        } else {
            self.horizon
        }
    }
}

/// Projects a trajectory through the coordinate map of `spec`.
pub fn project<T: Real>(traj: &Trajectory<T>, spec: &ChainSpec<T>) -> Result<CoordPath<T>> {
    if traj.dim != spec.dim {
        return Err(Error::Dimension {
            expected: spec.dim,
            got: traj.dim,
        });
    }
    let d = spec.coord_dim;
    let mut values = Vec::with_capacity(traj.len() * d);
    for k in 0..traj.len() {
        let x = spec.coord(traj.state(k));
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        values.extend(x);
    }
    Ok(CoordPath {
        dim: d,
        times: traj.times.clone(),
        values,
        horizon: traj.horizon,
        terminated_absorbing: traj.terminated_absorbing,
    })
}

/// `∫₀^{t0} f(X_s) ds` for the piecewise-constant path.
pub fn path_integral<T, F>(traj: &Trajectory<T>, f: F, t0: T) -> Result<T>
where
    T: Real,
    F: Fn(&[i64]) -> T,
{
    if t0 > traj.covered_until() {
        return Err(Error::Precondition(format!(
            "integration limit {t0} beyond trajectory horizon {}",
            traj.horizon
        )));
    }
    let mut acc = T::zero();
    for k in 0..traj.len() {
        let start = traj.times[k];
        if start >= t0 {
            break;
        }
        let end = if k + 1 < traj.len() { traj.times[k + 1] } else { t0 };
        let len = end.min(t0) - start;
        if len > T::zero() {
            acc = acc + f(traj.state(k)) * len;
        }
    }
    Ok(acc)
}
