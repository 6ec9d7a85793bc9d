use serde::{Deserialize, Serialize};

use super::{integral, positive, BuiltModel};
use crate::ctmc::ChainSpec;
use crate::error::{Error, Result};
use crate::fluid::{Bound, BoxDomain, Domain, FluidModel};
use crate::scalar::Real;

/// General stochastic epidemic with removal rate normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemicParams {
    pub n: f64,
    pub lambda: f64,
    /// Initial infective fraction.
    pub p: f64,
}

impl EpidemicParams {
    pub fn validate(&self) -> Result<(i64, i64)> {
        positive("lambda", self.lambda)?;
        if !(self.n >= 1.0) {
            return Err(Error::InvalidParameter(format!("n must be at least 1 (got {})", self.n)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, 1) (got {})", self.p)));
        }
        let n = integral("n", self.n)?;
        let infective = integral("n * p", self.n * self.p)?;
        Ok((n - infective, infective))
    }

    /// Lipschitz constant of the field on the unit square.
    pub fn lipschitz(&self) -> f64 {
        self.lambda + self.lambda.max(1.0)
    }

    pub fn x0(&self) -> [f64; 2] {
        [1.0 - self.p, self.p]
    }
}

/// Susceptible/infective counts, coordinates `ξ/N`.
pub fn make_epidemic<T: Real>(p: &EpidemicParams) -> Result<BuiltModel<T>> {
    let (s0, i0) = p.validate()?;
    let (lam, n) = (T::lit(p.lambda), T::lit(p.n));
    let spec = ChainSpec::scaled(2, n)
        .with_channel("infection", vec![-1, 1], move |s: &[i64]| {
            lam * T::from_count(s[0]) * T::from_count(s[1]) / n
        })?
        .with_channel("removal", vec![0, -1], |s: &[i64]| T::from_count(s[1]))?;
    let fluid = FluidModel::new(
        2,
        move |x: &[T]| {
            let inf = lam * x[0] * x[1];
            vec![-inf, inf - x[1]]
        },
        Domain::from_box(BoxDomain::closed(&[T::zero(); 2], &[T::one(); 2])),
        T::lit(p.lipschitz()),
        p.x0().map(T::lit).to_vec(),
    )?;
    Ok(BuiltModel {
        spec,
        fluid,
        init: vec![s0, i0],
    })
}

/// The epidemic run on the clock `dt̃ = ξ² dt / N`: infection at rate `λξ¹`,
/// removal at rate `N`, absorbed once no infective is left.
pub fn make_epidemic_timechanged<T: Real>(p: &EpidemicParams) -> Result<BuiltModel<T>> {
    let (s0, i0) = p.validate()?;
    if i0 < 1 {
        return Err(Error::InvalidParameter("the time-changed epidemic needs an initial infective".into()));
    }
    let (lam, n) = (T::lit(p.lambda), T::lit(p.n));
    let spec = ChainSpec::scaled(2, n)
        .with_channel("infection", vec![-1, 1], move |s: &[i64]| {
            if s[1] >= 1 {
                lam * T::from_count(s[0])
            } else {
                T::zero()
            }
        })?
        .with_channel("removal", vec![0, -1], move |s: &[i64]| if s[1] >= 1 { n } else { T::zero() })?;
    let bbox = BoxDomain {
        lower: vec![Bound::open(T::zero()); 2],
        upper: vec![Bound::closed(T::one()); 2],
    };
    let fluid = FluidModel::new(
        2,
        move |x: &[T]| vec![-lam * x[0], lam * x[0] - T::one()],
        Domain::from_box(bbox),
        T::lit(p.lipschitz()),
        p.x0().map(T::lit).to_vec(),
    )?;
    Ok(BuiltModel {
        spec,
        fluid,
        init: vec![s0, i0],
    })
}

/// Root `τ ∈ (p, 1)` of `τ + (1 − p) e^{−λτ} = 1`.
pub fn sir_final_size(lambda: f64, p: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 1) (got {p})")));
    }
    let g = |t: f64| t + (1.0 - p) * (-lambda * t).exp() - 1.0;
    let (mut lo, mut hi) = (p, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::simulate;
    use crate::fluid::integrate;

    const BASELINE: EpidemicParams = EpidemicParams {
        n: 1000.0,
        lambda: 5.0,
        p: 0.1,
    };

    #[test]
    fn drift_at_reference_point() {
        let m = make_epidemic::<f64>(&BASELINE).unwrap();
        let b = m.fluid.field(&[0.9, 0.1]);
        assert!((b[0] + 0.45).abs() < 1e-15 && (b[1] - 0.35).abs() < 1e-15);
        assert_eq!(m.init, vec![900, 100]);
        assert_eq!(m.fluid.lipschitz, 10.0);
        assert_eq!(m.spec.total_rate(&[500, 0]).unwrap(), 0.0);
    }

    #[test]
    fn baseline_scenario_simulates() {
        let m = make_epidemic::<f64>(&BASELINE).unwrap();
        let traj = simulate(&m.spec, &m.init, 3.0, 11).unwrap();
        assert!(traj.jump_count() > 100);
    }

    #[test]
    fn final_size_oracle() {
        let tau = sir_final_size(5.0, 0.1).unwrap();
        assert!((tau - 0.9937431361149665).abs() < 1e-11);
        assert!((tau + 0.9 * (-5.0 * tau).exp() - 1.0).abs() <= 1e-12);
        assert!((sir_final_size(5.0, 1.0 - 1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert!((sir_final_size(1e-9, 0.3).unwrap() - 0.3).abs() < 1e-8);
    }

    #[test]
    fn timechanged_closed_form_and_exit() {
        let m = make_epidemic_timechanged::<f64>(&BASELINE).unwrap();
        assert_eq!(m.fluid.field(&[0.4, 0.77]), m.fluid.field(&[0.4, 0.1]));
        let path = integrate(&m.fluid, 1.5, 1e-3).unwrap();
        for k in (0..path.len()).step_by(50) {
            let t = path.times[k];
            let x1 = 0.9 * (-5.0 * t).exp();
            let x2 = 1.0 - t - x1;
            let x = path.value(k);
            assert!((x[0] - x1).abs() < 1e-8 && (x[1] - x2).abs() < 1e-8);
            assert!((1.0 - x[0] - x[1] - t).abs() < 1e-8);
        }
        let tau = sir_final_size(5.0, 0.1).unwrap();
        assert!((path.exit_time.unwrap() - tau).abs() < 1e-6);
    }

    #[test]
    fn timechanged_drift_matches_field() {
        let m = make_epidemic_timechanged::<f64>(&BASELINE).unwrap();
        let beta = m.spec.drift(&[600, 40]).unwrap();
        let b = m.fluid.field(&[0.6, 0.04]);
        assert!((beta[0] - b[0]).abs() < 1e-12 && (beta[1] - b[1]).abs() < 1e-12);
        assert_eq!(m.spec.total_rate(&[600, 0]).unwrap(), 0.0);
    }

    #[test]
    fn invalid_params() {
        let bad = EpidemicParams { n: 10.0, lambda: 1.0, p: 0.15 };
        assert!(make_epidemic::<f64>(&bad).is_err());
        assert!(make_epidemic::<f64>(&EpidemicParams { p: 1.0, ..BASELINE }).is_err());
    }
}
