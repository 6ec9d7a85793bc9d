use std::f64::consts::E;

use super::positive;
use crate::ctmc::ChainSpec;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Unscaled queue with arrival rate `λ` and per-customer service rate `μ`.
pub fn mminf_chain<T: Real>(lambda: f64, mu: f64) -> Result<ChainSpec<T>> {
    positive("lambda", lambda)?;
    positive("mu", mu)?;
    let (la, mu) = (T::lit(lambda), T::lit(mu));
    ChainSpec::identity(1)
        .with_channel("arrival", vec![1], move |_| la)?
        .with_channel("service", vec![-1], move |s: &[i64]| mu * T::from_count(s[0]))
}

/// Bound on `P(sup_{s≤t} X_s ≥ x0 + log(μt) + a)` for the queue started at `x0`.
pub fn mminf_sup_tail(x0: f64, lambda: f64, mu: f64, t: f64, a: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    positive("mu", mu)?;
    if !(x0 >= 0.0) {
        return Err(Error::InvalidParameter("x0 must be nonnegative".into()));
    }
    if !(t >= 1.0 / mu) {
        return Err(Error::Precondition(format!("need t >= 1/mu = {} (got t = {t})", 1.0 / mu)));
    }
    let a_min = 3.0 * lambda * E * E / mu;
    if !(a >= a_min) {
        return Err(Error::Precondition(format!("need a >= 3 lambda e^2 / mu = {a_min} (got a = {a})")));
    }
    Ok((-a * (mu * a / (3.0 * lambda * E)).ln()).exp())
}

/// Bound on `E exp(θ ∫₀ᵗ X_s ds)` for arrival rate `λ_s`, `0 ≤ θ < μ`.
/// The arrival integral uses composite Simpson with 2000 panels.
pub fn mminf_exp_moment<F>(x0: f64, lambda_path: F, mu: f64, theta: f64, t: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    positive("mu", mu)?;
    if !(theta >= 0.0 && theta < mu) {
        return Err(Error::Precondition(format!("need 0 <= theta < mu (got theta = {theta}, mu = {mu})")));
    }
    if !(t >= 0.0 && x0 >= 0.0) {
        return Err(Error::InvalidParameter("t and x0 must be nonnegative".into()));
    }
    const PANELS: usize = 2000;
    let h = t / PANELS as f64;
    let integral = if t == 0.0 {
        0.0
    } else {
        let inner: f64 = (1..PANELS)
            .map(|i| {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                w * lambda_path(i as f64 * h)
            })
            .sum();
        h / 3.0 * (lambda_path(0.0) + inner + lambda_path(t))
    };
    Ok((mu / (mu - theta)).powf(x0) * (theta / (mu - theta) * integral).exp())
}

/// Chernoff bound `P(X ≥ x) ≤ exp(−x log(x/(λe)))` for `X ~ Poisson(λ)`,
/// reported as 1 where it is vacuous.
pub fn poisson_tail(lambda: f64, x: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("x must be nonnegative (got {x})")));
    }
    if x <= lambda * E {
        return Ok(1.0);
    }
    Ok((-x * (x / (lambda * E)).ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sup_tail_boundary_and_monotone() {
        let a = 3.0 * E * E;
        let b = mminf_sup_tail(0.0, 1.0, 1.0, 1.0, a).unwrap();
        assert!((b - (-a).exp()).abs() < 1e-18);
        let mut prev = b;
        for k in 1..10 {
            let v = mminf_sup_tail(0.0, 1.0, 1.0, 1.0, a + k as f64).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(matches!(mminf_sup_tail(0.0, 1.0, 1.0, 0.5, 25.0), Err(Error::Precondition(_))));
        assert!(matches!(mminf_sup_tail(0.0, 1.0, 1.0, 5.0, 20.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn exp_moment_cases() {
        assert_eq!(mminf_exp_moment(3.0, |_| 2.0, 1.0, 0.0, 4.0).unwrap(), 1.0);
        let v = mminf_exp_moment(0.0, |_| 1.5, 2.0, 0.5, 3.0).unwrap();
        assert!((v - (0.5 * 1.5 * 3.0 / 1.5f64).exp()).abs() < 1e-12);
        let lin = mminf_exp_moment(0.0, |s| s, 1.0, 0.5, 2.0).unwrap();
        assert!((lin - 2.0f64.exp()).abs() < 1e-10);
        assert!(mminf_exp_moment(0.0, |_| 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn poisson_tail_oracle() {
        assert_eq!(poisson_tail(2.0, 2.0 * E).unwrap(), 1.0);
        let b = poisson_tail(1.0, 10.0).unwrap();
        assert!((b - 2.2026465794806718e-6).abs() < 1e-18);
        let exact = 1.1142547833872068e-7;
        assert!(exact < b);
        assert!(poisson_tail(1.0, 11.0).unwrap() < b);
    }
}
