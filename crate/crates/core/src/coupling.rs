//! Coupling of a label process `Y_t = y(X_t)` to a Markov chain whose rates
//! are modulated by the fluid path, and the resulting decoupling bound.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bounds::{self, ErrorBudget, TheoremTag};
use crate::ctmc::{ChainSpec, SimOptions};
use crate::error::{Error, Result};
use crate::fluid::{ball_offsets, FluidModel, FluidPath};
use crate::models::{BuiltModel, EpidemicParams};
use crate::rng::{self, StreamRng};
use crate::scalar::Real;

pub type Label = Vec<i64>;
pub type LabelFn = Arc<dyn Fn(&[i64]) -> Label + Send + Sync>;
/// All `(y′, g(x, y, y′))` with `y′ ≠ y` and positive rate.
pub type TargetFn<T> = Arc<dyn Fn(&[T], &[i64]) -> Vec<(Label, T)> + Send + Sync>;
pub type LabelPredicate = Arc<dyn Fn(&[i64]) -> bool + Send + Sync>;
pub type LabelBound<T> = Arc<dyn Fn(&[i64]) -> T + Send + Sync>;

/// Headroom applied to envelopes derived from the fluid grid.
pub const GRID_ENVELOPE_MARGIN: f64 = 1.1;

#[derive(Clone)]
pub struct ModulationSpec<T> {
    label: LabelFn,
    targets: TargetFn<T>,
    i0: Option<LabelPredicate>,
    /// `G`: bound on the time-averaged rate mismatch.
    pub g_const: T,
    pub kappa: T,
    pub kappa_estimated: bool,
    rate_bound: Option<LabelBound<T>>,
}

impl<T: fmt::Debug> fmt::Debug for ModulationSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModulationSpec")
            .field("g_const", &self.g_const)
            .field("kappa", &self.kappa)
            .field("kappa_estimated", &self.kappa_estimated)
            .field("restricted", &self.i0.is_some())
            .finish_non_exhaustive()
    }
}

impl<T: Real> ModulationSpec<T> {
    pub fn new<L, G>(label: L, targets: G) -> Self
    where
        L: Fn(&[i64]) -> Label + Send + Sync + 'static,
        G: Fn(&[T], &[i64]) -> Vec<(Label, T)> + Send + Sync + 'static,
    {
        Self {
            label: Arc::new(label),
            targets: Arc::new(targets),
            i0: None,
            g_const: T::zero(),
            kappa: T::zero(),
            kappa_estimated: false,
            rate_bound: None,
        }
    }

    pub fn with_constants(mut self, g_const: T, kappa: T) -> Self {
        self.g_const = g_const;
        self.kappa = kappa;
        self
    }

    pub fn with_restriction<P>(mut self, i0: P) -> Self
    where
        P: Fn(&[i64]) -> bool + Send + Sync + 'static,
    {
        self.i0 = Some(Arc::new(i0));
        self
    }

    /// Bound `E(y) ≥ Σ_{y′} g(x_t, y, y′)` along the fluid path, used as the
    /// thinning envelope.
    pub fn with_rate_bound<B>(mut self, bound: B) -> Self
    where
        B: Fn(&[i64]) -> T + Send + Sync + 'static,
    {
        self.rate_bound = Some(Arc::new(bound));
        self
    }

    pub fn label(&self, state: &[i64]) -> Label {
        (self.label)(state)
    }

    pub fn targets(&self, x: &[T], y: &[i64]) -> Vec<(Label, T)> {
        (self.targets)(x, y)
    }

    pub fn g(&self, x: &[T], y: &[i64], y2: &[i64]) -> T {
        self.targets(x, y)
            .into_iter()
            .filter(|(l, _)| l.as_slice() == y2)
            .fold(T::zero(), |acc, (_, r)| acc + r)
    }

    pub fn in_i0(&self, y: &[i64]) -> bool {
        self.i0.as_ref().is_none_or(|p| p(y))
    }
}

/// Rate of jumps of `X` that land in label class `y2 ≠ y(state)`.
pub fn gamma<T: Real>(spec: &ChainSpec<T>, modn: &ModulationSpec<T>, state: &[i64], y2: &[i64]) -> Result<T> {
    Ok(class_rates(spec, modn, state)?
        .into_iter()
        .filter(|(l, _)| l.as_slice() == y2)
        .fold(T::zero(), |acc, (_, r)| acc + r))
}

struct Move<T> {
    next: Vec<i64>,
    next_label: Label,
    rate: T,
}

fn channel_moves<T: Real>(spec: &ChainSpec<T>, modn: &ModulationSpec<T>, state: &[i64]) -> Result<Vec<Move<T>>> {
    let rates = spec.rates(state)?;
    let mut out = Vec::new();
    for (ch, &r) in spec.channels().iter().zip(&rates) {
        if r <= T::zero() || ch.jump.iter().all(|&j| j == 0) {
            continue;
        }
        let next: Vec<i64> = state.iter().zip(&ch.jump).map(|(a, b)| a + b).collect();
        let next_label = modn.label(&next);
        out.push(Move { next, next_label, rate: r });
    }
    Ok(out)
}

/// `γ(ξ, y′)` for every class `y′ ≠ y(ξ)` reachable in one jump.
fn class_rates<T: Real>(spec: &ChainSpec<T>, modn: &ModulationSpec<T>, state: &[i64]) -> Result<Vec<(Label, T)>> {
    let here = modn.label(state);
    let mut classes: Vec<(Label, T)> = Vec::new();
    for m in channel_moves(spec, modn, state)? {
        if m.next_label == here {
            continue;
        }
        match classes.iter_mut().find(|(l, _)| *l == m.next_label) {
            Some((_, g)) => *g = *g + m.rate,
            None => classes.push((m.next_label, m.rate)),
        }
    }
    Ok(classes)
}

/// One transition of the joint chain: target `(state′, label′)` and its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMove<T> {
    pub state: Vec<i64>,
    pub label: Label,
    pub rate: T,
}

/// Jump rates of the joint chain `(X_t, y_t)` out of `(state, label)` at time `t`.
pub fn coupled_kernel<T: Real>(
    spec: &ChainSpec<T>,
    modn: &ModulationSpec<T>,
    state: &[i64],
    label: &[i64],
    t: T,
    fluid: &FluidPath<T>,
) -> Result<Vec<JointMove<T>>> {
    if t > fluid.horizon() {
        return Err(Error::Precondition(format!("t = {t} is beyond the fluid horizon {}", fluid.horizon())));
    }
    let x = fluid.value_at(t);
    kernel_at(spec, modn, state, label, &x)
}

fn kernel_at<T: Real>(
    spec: &ChainSpec<T>,
    modn: &ModulationSpec<T>,
    state: &[i64],
    label: &[i64],
    x: &[T],
) -> Result<Vec<JointMove<T>>> {
    let moves = channel_moves(spec, modn, state)?;
    let targets = modn.targets(x, label);
    let mut out = Vec::with_capacity(moves.len() + targets.len());
    let here = modn.label(state);
    if here.as_slice() != label {
        for m in moves {
            out.push(JointMove {
                state: m.next,
                label: label.to_vec(),
                rate: m.rate,
            });
        }
        for (y2, g) in targets {
            if g > T::zero() {
                out.push(JointMove {
                    state: state.to_vec(),
                    label: y2,
                    rate: g,
                });
            }
        }
        return Ok(out);
    }
    let classes = class_rates(spec, modn, state)?;
    let gamma_of = |y2: &[i64]| {
        classes
            .iter()
            .find(|(l, _)| l.as_slice() == y2)
            .map_or(T::zero(), |&(_, g)| g)
    };
    let g_of = |y2: &[i64]| {
        targets
            .iter()
            .filter(|(l, _)| l.as_slice() == y2)
            .fold(T::zero(), |acc, &(_, g)| acc + g)
    };
    for m in moves {
        if m.next_label.as_slice() == label {
            out.push(JointMove {
                state: m.next,
                label: m.next_label,
                rate: m.rate,
            });
            continue;
        }
        let gam = gamma_of(&m.next_label);
        // This channel contributes to γ, so γ > 0 here.
        debug_assert!(gam > T::zero());
        let ratio = g_of(&m.next_label) / gam;
        let follow = m.rate * ratio.min(T::one());
        let stay = m.rate * (T::one() - ratio).max(T::zero());
        if follow > T::zero() {
            out.push(JointMove {
                state: m.next.clone(),
                label: m.next_label,
                rate: follow,
            });
        }
        if stay > T::zero() {
            out.push(JointMove {
                state: m.next,
                label: label.to_vec(),
                rate: stay,
            });
        }
    }
    let mut seen: Vec<&Label> = Vec::new();
    for (y2, _) in &targets {
        if seen.contains(&y2) {
            continue;
        }
        seen.push(y2);
        let extra = (g_of(y2) - gamma_of(y2)).max(T::zero());
        if extra > T::zero() {
            out.push(JointMove {
                state: state.to_vec(),
                label: y2.clone(),
                rate: extra,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory<T> {
    pub seed: u64,
    pub stream: u64,
    pub dim: usize,
    pub label_dim: usize,
    pub times: Vec<T>,
    pub states: Vec<i64>,
    pub labels: Vec<i64>,
    pub horizon: T,
    /// First time `y(X_t) ≠ y_t`; `None` if they agree up to the horizon.
    pub decoupling_time: Option<T>,
    /// First exit of `y_t` from `I₀`, capped at the horizon.
    pub tau: T,
}

impl<T: Real> CoupledTrajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[i64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn label(&self, k: usize) -> &[i64] {
        &self.labels[k * self.label_dim..(k + 1) * self.label_dim]
    }

    pub fn label_at(&self, t: T) -> &[i64] {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.label(k)
    }

    pub fn decoupled_before(&self, t: T) -> bool {
        self.decoupling_time.is_some_and(|s| s <= t)
    }
}

/// Envelope `E(y)` for the label rates: the supplied bound, or the grid
/// maximum of `Σ g(x_t, y, ·)` with headroom.
struct Envelope<'a, T> {
    modn: &'a ModulationSpec<T>,
    fluid: &'a FluidPath<T>,
    t0: T,
    cache: HashMap<Label, T>,
}

impl<'a, T: Real> Envelope<'a, T> {
    fn new(modn: &'a ModulationSpec<T>, fluid: &'a FluidPath<T>, t0: T) -> Self {
        Self {
            modn,
            fluid,
            t0,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, y: &[i64]) -> T {
        if let Some(b) = &self.modn.rate_bound {
            return b(y);
        }
        if let Some(&v) = self.cache.get(y) {
            return v;
        }
        let mut worst = T::zero();
        for k in 0..self.fluid.len() {
            let total = self
                .modn
                .targets(self.fluid.value(k), y)
                .iter()
                .fold(T::zero(), |acc, &(_, g)| acc + g);
            worst = worst.max(total);
            if self.fluid.times[k] >= self.t0 {
                break;
            }
        }
        let v = worst * T::lit(GRID_ENVELOPE_MARGIN);
        self.cache.insert(y.to_vec(), v);
        v
    }
}

/// Exact simulation of the joint chain on `[0, t0]` by thinning against
/// `q(ξ) + E(y)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled<T: Real>(
    spec: &ChainSpec<T>,
    modn: &ModulationSpec<T>,
    init: &[i64],
    fluid: &FluidPath<T>,
    t0: T,
    seed: u64,
    replica: u64,
    opts: SimOptions,
) -> Result<CoupledTrajectory<T>> {
    if init.len() != spec.dim() {
        return Err(Error::Dimension {
            expected: spec.dim(),
            got: init.len(),
        });
    }
    if t0 > fluid.horizon() {
        return Err(Error::Precondition(format!("t0 = {t0} is beyond the fluid horizon {}", fluid.horizon())));
    }
    let mut rng = rng::replica_rng(seed, replica);
    let mut env = Envelope::new(modn, fluid, t0);
    let mut state = init.to_vec();
    let mut label = modn.label(init);
    let label_dim = label.len();
    let mut traj = CoupledTrajectory {
        seed,
        stream: replica,
        dim: spec.dim(),
        label_dim,
        times: vec![T::zero()],
        states: state.clone(),
        labels: label.clone(),
        horizon: t0,
        decoupling_time: None,
        tau: t0,
    };
    let mut tau_set = false;
    if !modn.in_i0(&label) {
        traj.tau = T::zero();
        tau_set = true;
    }
    let t_end = t0.to_f64_lossy();
    let mut t = 0.0f64;
    let mut events = 0u64;
    loop {
        let bound = (spec.total_rate(&state)? + env.get(&label)).to_f64_lossy();
        if bound <= 0.0 {
            break;
        }
        t += rng::exp_time(&mut rng, bound);
        if t >= t_end {
            break;
        }
        events += 1;
        if events > opts.max_events {
            return Err(Error::EventBudgetExceeded {
                budget: opts.max_events,
                time: t,
            });
        }
        let tt = T::lit(t);
        let kernel = kernel_at(spec, modn, &state, &label, &fluid.value_at(tt))?;
        let total: f64 = kernel.iter().map(|m| m.rate.to_f64_lossy()).sum();
        if total > bound * (1.0 + 1e-9) {
            return Err(Error::EnvelopeViolated {
                envelope: bound,
                rate: total,
                time: t,
            });
        }
        let Some(mv) = pick(&kernel, rng::open_unit(&mut rng) * bound, |m| m.rate.to_f64_lossy()) else {
            continue;
        };
        state.clone_from(&mv.state);
        label.clone_from(&mv.label);
        traj.times.push(tt);
        traj.states.extend_from_slice(&state);
        traj.labels.extend_from_slice(&label);
        if traj.decoupling_time.is_none() && modn.label(&state) != label {
            traj.decoupling_time = Some(tt);
        }
        if !tau_set && !modn.in_i0(&label) {
            traj.tau = tt;
            tau_set = true;
        }
    }
    Ok(traj)
}

/// Thinning selection: the item whose cumulative rate first exceeds `u`,
/// or `None` for a rejected proposal.
fn pick<M, F: Fn(&M) -> f64>(items: &[M], u: f64, rate: F) -> Option<&M> {
    let mut acc = 0.0;
    for m in items {
        acc += rate(m);
        if u <= acc {
            return Some(m);
        }
    }
    None
}

/// Label path of the modulated chain alone.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPath<T> {
    pub label_dim: usize,
    pub times: Vec<T>,
    pub labels: Vec<i64>,
    pub horizon: T,
}

impl<T: Real> LabelPath<T> {
    pub fn label(&self, k: usize) -> &[i64] {
        &self.labels[k * self.label_dim..(k + 1) * self.label_dim]
    }

    pub fn label_at(&self, t: T) -> &[i64] {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.label(k)
    }

    /// Time spent in labels satisfying `pred` on `[0, horizon]`.
    pub fn occupation<P: Fn(&[i64]) -> bool>(&self, pred: P) -> T {
        let mut acc = T::zero();
        for k in 0..self.times.len() {
            let end = self.times.get(k + 1).copied().unwrap_or(self.horizon);
            if pred(self.label(k)) {
                acc = acc + (end - self.times[k]);
            }
        }
        acc
    }
}

/// Simulates `(y_t)` with rates `g(x_t, y, y′)` on `[0, t0]`.
pub fn simulate_labels<T: Real>(
    modn: &ModulationSpec<T>,
    init_label: &[i64],
    fluid: &FluidPath<T>,
    t0: T,
    rng: &mut StreamRng,
) -> Result<LabelPath<T>> {
    if t0 > fluid.horizon() {
        return Err(Error::Precondition(format!("t0 = {t0} is beyond the fluid horizon {}", fluid.horizon())));
    }
    let mut env = Envelope::new(modn, fluid, t0);
    let mut label = init_label.to_vec();
    let mut path = LabelPath {
        label_dim: label.len(),
        times: vec![T::zero()],
        labels: label.clone(),
        horizon: t0,
    };
    let t_end = t0.to_f64_lossy();
    let mut t = 0.0f64;
    loop {
        let bound = env.get(&label).to_f64_lossy();
        if bound <= 0.0 {
            break;
        }
        t += rng::exp_time(rng, bound);
        if t >= t_end {
            break;
        }
        let tt = T::lit(t);
        let targets = modn.targets(&fluid.value_at(tt), &label);
        let total: f64 = targets.iter().map(|(_, g)| g.to_f64_lossy()).sum();
        if total > bound * (1.0 + 1e-9) {
            return Err(Error::EnvelopeViolated {
                envelope: bound,
                rate: total,
                time: t,
            });
        }
        if let Some((y2, _)) = pick(&targets, rng::open_unit(rng) * bound, |(_, g)| g.to_f64_lossy()) {
            label.clone_from(y2);
            path.times.push(tt);
            path.labels.extend_from_slice(&label);
        }
    }
    Ok(path)
}

/// `min(1, (G + κ) t0 + 2d exp(−δ²/(2 A t0)))`.
pub fn decoupling_bound<T: Real>(g_const: T, kappa: T, t0: T, dim: usize, delta: T, a: T) -> T {
    let raw = (g_const + kappa) * t0 + bounds::exp_tail(dim, delta, a, t0);
    if raw.is_nan() {
        T::one()
    } else {
        raw.max(T::zero()).min(T::one())
    }
}

/// The exponential budget with the decoupling term added.
pub fn budget_coupling<T: Real>(
    eps: T,
    t0: T,
    lipschitz: T,
    a: T,
    dim: usize,
    g_const: T,
    kappa: T,
) -> Result<ErrorBudget<T>> {
    if !(g_const >= T::zero() && kappa >= T::zero()) {
        return Err(Error::InvalidParameter("G and kappa must be nonnegative".into()));
    }
    let mut b = bounds::budget_exp(eps, t0, lipschitz, a, dim)?;
    b.tag = TheoremTag::Coupling;
    b.bound = decoupling_bound(g_const, kappa, t0, dim, b.delta, a);
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaEstimate<T> {
    pub kappa: T,
    /// Always set: the supremum is taken over a finite probe set.
    pub estimated: bool,
}

/// Maximizes `Σ_{y′} |g(x, y, y′) − g(x_t, y, y′)|` over grid times `t ≤ t0`,
/// probe points of the `ε`-ball and the supplied labels of `I₀`.
pub fn estimate_kappa<T: Real>(
    modn: &ModulationSpec<T>,
    fluid: &FluidPath<T>,
    eps: T,
    t0: T,
    labels: &[Label],
) -> Result<KappaEstimate<T>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let offsets = ball_offsets(fluid.dim, eps);
    let mut worst = T::zero();
    for k in 0..fluid.len() {
        if fluid.times[k] > t0 {
            break;
        }
        let xt = fluid.value(k);
        for y in labels.iter().filter(|y| modn.in_i0(y)) {
            let base = modn.targets(xt, y);
            for off in &offsets {
                let x: Vec<T> = xt.iter().zip(off).map(|(&a, &o)| a + o).collect();
                let here = modn.targets(&x, y);
                let mut keys: Vec<&Label> = base.iter().chain(&here).map(|(l, _)| l).collect();
                keys.sort();
                keys.dedup();
                let sum_of = |v: &[(Label, T)], key: &Label| {
                    v.iter().filter(|(l, _)| l == key).fold(T::zero(), |acc, &(_, g)| acc + g)
                };
                let diff = keys
                    .into_iter()
                    .fold(T::zero(), |acc, key| acc + (sum_of(&here, key) - sum_of(&base, key)).abs());
                worst = worst.max(diff);
            }
        }
    }
    Ok(KappaEstimate {
        kappa: worst,
        estimated: true,
    })
}

/// Per-individual epidemic rates: `λx²` for susceptible to infective, 1 for
/// infective to removed, 0 otherwise.
pub fn epidemic_individual_rates<T: Real>(lambda: T, x: &[T], n: i64, n2: i64) -> T {
    match (n, n2) {
        (1, 2) => lambda * x[1],
        (2, 3) => T::one(),
        _ => T::zero(),
    }
}

/// Product-form rates for `k` tracked individuals: each component moves on
/// its own clock.
pub fn epidemic_individual_targets<T: Real>(lambda: T, x: &[T], y: &[i64]) -> Vec<(Label, T)> {
    let mut out = Vec::new();
    for j in 0..y.len() {
        let next = y[j] + 1;
        let r = epidemic_individual_rates(lambda, x, y[j], next);
        if r > T::zero() {
            let mut y2 = y.to_vec();
            y2[j] = next;
            out.push((y2, r));
        }
    }
    out
}

/// Epidemic with `k` tracked individuals.
///
/// State `(ξ¹, ξ², η¹, …, ηᵏ)`: population counts plus the states in
/// `{1, 2, 3}` of the tracked individuals. Coordinates are `(ξ¹, ξ²)/N`,
/// labels are `η`, and `G = 0`, `κ = kλε`.
pub fn make_epidemic_individuals<T: Real>(
    p: &EpidemicParams,
    tracked: &[i64],
    eps: T,
) -> Result<(BuiltModel<T>, ModulationSpec<T>)> {
    let (s0, i0) = p.validate()?;
    let k = tracked.len();
    if tracked.iter().any(|&v| !(1..=3).contains(&v)) {
        return Err(Error::InvalidParameter("tracked states must lie in {1, 2, 3}".into()));
    }
    let ts = tracked.iter().filter(|&&v| v == 1).count() as i64;
    let ti = tracked.iter().filter(|&&v| v == 2).count() as i64;
    if ts > s0 || ti > i0 {
        return Err(Error::InvalidParameter("more tracked individuals than the population holds".into()));
    }
    let (lam, n) = (T::lit(p.lambda), T::lit(p.n));
    let mut spec = ChainSpec::new(2 + k, 2, move |s: &[i64]| {
        vec![T::from_count(s[0]) / n, T::from_count(s[1]) / n]
    })
    .with_scale_hint(n);
    let count = move |s: &[i64], v: i64| s[2..].iter().filter(|&&e| e == v).count() as i64;
    spec.add_channel(
        "infection",
        [vec![-1, 1], vec![0; k]].concat(),
        move |s: &[i64]| lam * T::from_count(s[0] - count(s, 1)) * T::from_count(s[1]) / n,
    )?;
    spec.add_channel("removal", [vec![0, -1], vec![0; k]].concat(), move |s: &[i64]| {
        T::from_count(s[1] - count(s, 2))
    })?;
    for j in 0..k {
        let mut inf = vec![-1, 1];
        inf.extend((0..k).map(|i| i64::from(i == j)));
        spec.add_channel(&format!("infect_{j}"), inf, move |s: &[i64]| {
            if s[2 + j] == 1 {
                lam * T::from_count(s[1]) / n
            } else {
                T::zero()
            }
        })?;
        let mut rem = vec![0, -1];
        rem.extend((0..k).map(|i| i64::from(i == j)));
        spec.add_channel(&format!("remove_{j}"), rem, move |s: &[i64]| {
            if s[2 + j] == 2 {
                T::one()
            } else {
                T::zero()
            }
        })?;
    }
    let base = crate::models::make_epidemic::<T>(p)?;
    let fluid: FluidModel<T> = base.fluid;
    let mut init = vec![s0, i0];
    init.extend_from_slice(tracked);
    let modn = ModulationSpec::new(|s: &[i64]| s[2..].to_vec(), move |x: &[T], y: &[i64]| {
        epidemic_individual_targets(lam, x, y)
    })
    .with_constants(T::zero(), T::from_usize_lossy(k) * lam * eps)
    .with_rate_bound(move |y: &[i64]| {
        // x² ≤ 1 on the unit square.
        y.iter().fold(T::zero(), |acc, &v| {
            acc + match v {
                1 => lam,
                2 => T::one(),
                _ => T::zero(),
            }
        })
    });
    Ok((BuiltModel { spec, fluid, init }, modn))
}

/// Parameters for the tracked-individual epidemic in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndividualsParams {
    #[serde(flatten)]
    pub epidemic: EpidemicParams,
    pub tracked: Vec<i64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{integrate, BoxDomain, Domain};
    use rand::{Rng, SeedableRng};

    fn small_epidemic(k: usize) -> (BuiltModel<f64>, ModulationSpec<f64>, FluidPath<f64>) {
        let p = EpidemicParams {
            n: 50.0,
            lambda: 3.0,
            p: 0.2,
        };
        let (m, modn) = make_epidemic_individuals(&p, &vec![1; k], 0.1).unwrap();
        let path = integrate(&m.fluid, 2.0, 1e-2).unwrap();
        (m, modn, path)
    }

    #[test]
    fn individual_rate_table() {
        let x = [0.5, 0.1];
        assert!((epidemic_individual_rates(5.0f64, &x, 1, 2) - 0.5).abs() < 1e-15);
        assert_eq!(epidemic_individual_rates(5.0, &x, 2, 3), 1.0);
        for n2 in 1..=3 {
            assert_eq!(epidemic_individual_rates(5.0, &x, 3, n2), 0.0);
        }
        let total: f64 = epidemic_individual_targets(5.0, &x, &[1, 2]).iter().map(|(_, r)| r).sum();
        assert!((total - 1.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_examples() {
        let (m, modn, _) = small_epidemic(1);
        let state = [30, 10, 1];
        let g = gamma(&m.spec, &modn, &state, &[2]).unwrap();
        assert!((g - 3.0 * 10.0 / 50.0).abs() < 1e-15);
        let constant = ModulationSpec::<f64>::new(|_: &[i64]| vec![0], |_: &[f64], _: &[i64]| Vec::new());
        assert_eq!(gamma(&m.spec, &constant, &state, &[1]).unwrap(), 0.0);
        let ident = ModulationSpec::<f64>::new(|s: &[i64]| s.to_vec(), |_: &[f64], _: &[i64]| Vec::new());
        assert!((gamma(&m.spec, &ident, &state, &[30, 9, 1]).unwrap() - 10.0).abs() < 1e-15);
    }

    #[test]
    fn epidemic_total_rate_matches_population_chain() {
        let (m, _, _) = small_epidemic(2);
        let plain = crate::models::make_epidemic::<f64>(&EpidemicParams {
            n: 50.0,
            lambda: 3.0,
            p: 0.2,
        })
        .unwrap();
        for s in [[30i64, 10, 1, 2], [20, 5, 2, 3], [40, 0, 1, 1]] {
            let a = m.spec.total_rate(&s).unwrap();
            let b = plain.spec.total_rate(&s[..2]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn marginals(kernel: &[JointMove<f64>]) -> (HashMap<Vec<i64>, f64>, HashMap<Label, f64>) {
        let mut by_state = HashMap::new();
        let mut by_label = HashMap::new();
        for m in kernel {
            *by_state.entry(m.state.clone()).or_insert(0.0) += m.rate;
            *by_label.entry(m.label.clone()).or_insert(0.0) += m.rate;
        }
        (by_state, by_label)
    }

    #[test]
    fn kernel_marginals_on_random_spec() {
        // Random chain on Z^2 with labels `state mod 3` and unrelated targets.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for trial in 0..50 {
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..2.0)).collect();
            let spec = ChainSpec::<f64>::identity(2)
                .with_channel("a", vec![1, 0], { let w = w[0]; move |s: &[i64]| w * (1 + s[0].rem_euclid(2)) as f64 })
                .unwrap()
                .with_channel("b", vec![0, 1], { let w = w[1]; move |_| w })
                .unwrap()
                .with_channel("c", vec![-1, 1], { let w = w[2]; move |s: &[i64]| w * (s[1].rem_euclid(3)) as f64 })
                .unwrap()
                .with_channel("d", vec![2, 0], { let w = w[3]; move |_| w })
                .unwrap();
            let gw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..3.0)).collect();
            let modn = ModulationSpec::<f64>::new(
                |s: &[i64]| vec![(s[0] + s[1]).rem_euclid(3)],
                move |x: &[f64], y: &[i64]| {
                    (0..3)
                        .filter(|&c| c != y[0])
                        .map(|c| (vec![c], gw[c as usize] * (1.0 + x[0])))
                        .collect()
                },
            );
            let fluid = integrate(
                &FluidModel::new(1, |_: &[f64]| vec![1.0], Domain::from_box(BoxDomain::everything(1)), 0.0, vec![0.0])
                    .unwrap(),
                1.0,
                0.1,
            )
            .unwrap();
            let state = vec![rng.gen_range(-5..5), rng.gen_range(-5..5)];
            let own = modn.label(&state);
            let label = if trial % 2 == 0 { own.clone() } else { vec![(own[0] + 1) % 3] };
            let t: f64 = rng.gen_range(0.0..1.0);
            let kernel = coupled_kernel(&spec, &modn, &state, &label, t, &fluid).unwrap();
            assert!(kernel.iter().all(|m| m.rate >= 0.0));
            let (by_state, by_label) = marginals(&kernel);
            // State marginal is the chain's own kernel.
            let rates = spec.rates(&state).unwrap();
            let mut expect: HashMap<Vec<i64>, f64> = HashMap::new();
            for (ch, r) in spec.channels().iter().zip(rates) {
                let next: Vec<i64> = state.iter().zip(&ch.jump).map(|(a, b)| a + b).collect();
                *expect.entry(next).or_insert(0.0) += r;
            }
            for (s, r) in &expect {
                let got = by_state.get(s).copied().unwrap_or(0.0);
                assert!((got - r).abs() < 1e-12, "state {s:?}: {got} vs {r}");
            }
            // Label marginal is g_t(y, ·).
            let x = fluid.value_at(t);
            for (y2, g) in modn.targets(&x, &label) {
                let got = by_label.get(&y2).copied().unwrap_or(0.0);
                assert!((got - g).abs() < 1e-12, "label {y2:?}: {got} vs {g}");
            }
        }
    }

    #[test]
    fn matched_rates_never_desynchronize() {
        // g(x, y, ·) = γ exactly: label is the state itself, targets follow
        // the channels.
        let spec = ChainSpec::<f64>::identity(1)
            .with_channel("up", vec![1], |_| 2.0)
            .unwrap()
            .with_channel("down", vec![-1], |s: &[i64]| s[0].max(0) as f64)
            .unwrap();
        let modn = ModulationSpec::<f64>::new(|s: &[i64]| s.to_vec(), |_: &[f64], y: &[i64]| {
            let mut v = vec![(vec![y[0] + 1], 2.0)];
            if y[0] > 0 {
                v.push((vec![y[0] - 1], y[0] as f64));
            }
            v
        });
        let fluid = integrate(
            &FluidModel::new(1, |_: &[f64]| vec![0.0], Domain::from_box(BoxDomain::everything(1)), 0.0, vec![0.0]).unwrap(),
            5.0,
            0.1,
        )
        .unwrap();
        let kernel = coupled_kernel(&spec, &modn, &[3], &[3], 1.0, &fluid).unwrap();
        assert!(kernel.iter().all(|m| modn.label(&m.state) == m.label));
        for r in 0..20 {
            let tr = simulate_coupled(&spec, &modn, &[3], &fluid, 5.0, 1, r, SimOptions::default()).unwrap();
            assert!(tr.decoupling_time.is_none());
            assert!(tr.len() > 1);
        }
    }

    #[test]
    fn coupled_epidemic_labels_track_until_decoupling() {
        let (m, modn, path) = small_epidemic(2);
        for r in 0..20 {
            let tr = simulate_coupled(&m.spec, &modn, &m.init, &path, 2.0, 4, r, SimOptions::default()).unwrap();
            let cut = tr.decoupling_time.unwrap_or(f64::INFINITY);
            for k in 0..tr.len() {
                if tr.times[k] < cut {
                    assert_eq!(modn.label(tr.state(k)), tr.label(k));
                }
            }
            assert_eq!(tr.tau, 2.0);
        }
    }

    #[test]
    fn decoupling_bound_reduces_to_exp() {
        let b = crate::bounds::budget_exp(0.1f64, 1.0, 10.0, 0.05, 2).unwrap();
        let d = decoupling_bound(0.0, 0.0, 1.0, 2, b.delta, 0.05);
        assert_eq!(d.to_bits(), b.bound.to_bits());
        let c = budget_coupling(0.1f64, 1.0, 10.0, 0.05, 2, 0.0, 0.0).unwrap();
        assert_eq!(c.bound.to_bits(), b.bound.to_bits());
        assert_eq!(c.tag, TheoremTag::Coupling);
        // κ = kλε is linear in k.
        let (lam, eps, t0) = (5.0, 1e-3, 1.0);
        let delta = crate::bounds::delta(eps, 10.0, t0);
        let f = |k: f64| decoupling_bound(0.0, k * lam * eps, t0, 2, delta, 1e-30);
        assert!((f(3.0) - f(2.0) - lam * eps * t0).abs() < 1e-15);
    }

    #[test]
    fn kappa_estimate_matches_analytic() {
        let (_, modn, path) = small_epidemic(2);
        let labels = vec![vec![1, 1], vec![1, 2], vec![2, 3]];
        let est = estimate_kappa(&modn, &path, 0.05, 1.0, &labels).unwrap();
        assert!((est.kappa - 2.0 * 3.0 * 0.05).abs() < 1e-12);
        assert!(est.estimated);
    }
}
