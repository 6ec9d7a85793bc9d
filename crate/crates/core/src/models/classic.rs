use serde::{Deserialize, Serialize};

use super::{integral, nonnegative, positive, BuiltModel};
use crate::ctmc::ChainSpec;
use crate::error::{Error, Result};
use crate::fluid::{Bound, BoxDomain, Domain, FluidModel};
use crate::scalar::Real;

/// Poisson process of rate `λN`, scaled by `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonParams {
    pub lambda: f64,
    pub n: f64,
}

pub fn make_poisson<T: Real>(p: &PoissonParams) -> Result<BuiltModel<T>> {
    positive("lambda", p.lambda)?;
    positive("n", p.n)?;
    let n = T::lit(p.n);
    let rate = T::lit(p.lambda * p.n);
    let lam = T::lit(p.lambda);
    let spec = ChainSpec::scaled(1, n).with_channel("arrival", vec![1], move |_| rate)?;
    let fluid = FluidModel::new(
        1,
        move |_: &[T]| vec![lam],
        Domain::from_box(BoxDomain::everything(1)),
        T::zero(),
        vec![T::zero()],
    )?;
    Ok(BuiltModel {
        spec,
        fluid,
        init: vec![0],
    })
}

/// Queue with arrivals at rate `N`, unit-rate services and infinitely many
/// servers, scaled by `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmInfParams {
    pub n: f64,
    #[serde(default)]
    pub x0: f64,
}

pub fn make_mm_inf<T: Real>(p: &MmInfParams) -> Result<BuiltModel<T>> {
    positive("n", p.n)?;
    nonnegative("x0", p.x0)?;
    let init = integral("n * x0", p.n * p.x0)?;
    let n = T::lit(p.n);
    let spec = ChainSpec::scaled(1, n)
        .with_channel("arrival", vec![1], move |_| n)?
        .with_channel("service", vec![-1], |s: &[i64]| T::from_count(s[0]))?;
    let fluid = FluidModel::new(
        1,
        |x: &[T]| vec![T::one() - x[0]],
        Domain::from_box(BoxDomain::orthant(1)),
        T::one(),
        vec![T::lit(p.x0)],
    )?;
    Ok(BuiltModel {
        spec,
        fluid,
        init: vec![init],
    })
}

/// Reversible reaction `A + B ↔ C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionParams {
    pub lambda: f64,
    pub mu: f64,
    pub n: f64,
    pub x0: [f64; 3],
}

pub fn make_reaction<T: Real>(p: &ReactionParams) -> Result<BuiltModel<T>> {
    positive("lambda", p.lambda)?;
    positive("mu", p.mu)?;
    positive("n", p.n)?;
    for v in p.x0 {
        nonnegative("x0", v)?;
    }
    let init = p
        .x0
        .iter()
        .map(|&v| integral("n * x0", p.n * v))
        .collect::<Result<Vec<_>>>()?;
    let (lam, mu, n) = (T::lit(p.lambda), T::lit(p.mu), T::lit(p.n));
    let spec = ChainSpec::scaled(3, n)
        .with_channel("bind", vec![-1, -1, 1], move |s: &[i64]| {
            lam / n * T::from_count(s[0]) * T::from_count(s[1])
        })?
        .with_channel("unbind", vec![1, 1, -1], move |s: &[i64]| mu * T::from_count(s[2]))?;
    // A + C and B + C are conserved, which bounds every coordinate.
    let [a, b, c] = p.x0;
    let hi = [a + c, b + c, c + a.min(b)];
    let k = p.lambda * (hi[0] + hi[1]) + p.mu;
    let dom = Domain::from_box(BoxDomain::closed(&[T::zero(); 3], &hi.map(T::lit)));
    let fluid = FluidModel::new(
        3,
        move |x: &[T]| {
            let r = mu * x[2] - lam * x[0] * x[1];
            vec![r, r, -r]
        },
        dom,
        T::lit(k),
        p.x0.map(T::lit).to_vec(),
    )?
    .with_clamped_extension();
    Ok(BuiltModel { spec, fluid, init })
}

/// Two gangs firing at rates `α` (gang A) and `β` (gang B).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GunfightParams {
    pub alpha: f64,
    pub beta: f64,
    pub n: f64,
    pub a0: f64,
    pub b0: f64,
}

pub fn make_gunfight<T: Real>(p: &GunfightParams) -> Result<BuiltModel<T>> {
    positive("alpha", p.alpha)?;
    positive("beta", p.beta)?;
    positive("n", p.n)?;
    positive("a0", p.a0)?;
    positive("b0", p.b0)?;
    let init = vec![integral("n * a0", p.n * p.a0)?, integral("n * b0", p.n * p.b0)?];
    let (al, be, n) = (T::lit(p.alpha), T::lit(p.beta), T::lit(p.n));
    let spec = ChainSpec::scaled(2, n)
        .with_channel("a_hits_b", vec![0, -1], move |s: &[i64]| al * T::from_count(s[0]))?
        .with_channel("b_hits_a", vec![-1, 0], move |s: &[i64]| be * T::from_count(s[1]))?;
    // The fight ends when either gang is wiped out.
    let bbox = BoxDomain {
        lower: vec![Bound::open(T::zero()); 2],
        upper: vec![Bound::unbounded_above(); 2],
    };
    let fluid = FluidModel::new(
        2,
        move |x: &[T]| vec![-be * x[1], -al * x[0]],
        Domain::from_box(bbox),
        T::lit(p.alpha.max(p.beta)),
        vec![T::lit(p.a0), T::lit(p.b0)],
    )?;
    Ok(BuiltModel { spec, fluid, init })
}

/// Branching process with a finite-support offspring law
/// `offspring[k] = P(Z = k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingParams {
    pub n: f64,
    pub offspring: Vec<f64>,
    pub x0: f64,
}

impl BranchingParams {
    pub fn mean(&self) -> f64 {
        self.offspring.iter().enumerate().map(|(k, &p)| k as f64 * p).sum()
    }
}

pub fn make_branching<T: Real>(p: &BranchingParams) -> Result<BuiltModel<T>> {
    positive("n", p.n)?;
    nonnegative("x0", p.x0)?;
    if p.offspring.is_empty() || p.offspring.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParameter("offspring law must be a nonempty list of probabilities".into()));
    }
    let total: f64 = p.offspring.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("offspring law sums to {total}, not 1")));
    }
    let init = integral("n * x0", p.n * p.x0)?;
    let mut spec = ChainSpec::scaled(1, T::lit(p.n));
    for (k, &pk) in p.offspring.iter().enumerate() {
        if k == 1 || pk == 0.0 {
            continue;
        }
        let w = T::lit(pk);
        spec.add_channel(&format!("offspring_{k}"), vec![k as i64 - 1], move |s: &[i64]| {
            w * T::from_count(s[0])
        })?;
    }
    let growth = T::lit(p.mean() - 1.0);
    let fluid = FluidModel::new(
        1,
        move |x: &[T]| vec![growth * x[0]],
        Domain::from_box(BoxDomain::orthant(1)),
        growth.abs(),
        vec![T::lit(p.x0)],
    )?;
    Ok(BuiltModel {
        spec,
        fluid,
        init: vec![init],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_drift_and_rate() {
        let m = make_poisson::<f64>(&PoissonParams { lambda: 2.0, n: 100.0 }).unwrap();
        assert_eq!(m.spec.total_rate(&[17]).unwrap(), 200.0);
        assert!((m.spec.drift(&[17]).unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mm_inf_rates() {
        let m = make_mm_inf::<f64>(&MmInfParams { n: 10.0, x0: 1.0 }).unwrap();
        assert_eq!(m.init, vec![10]);
        assert_eq!(m.spec.total_rate(&[10]).unwrap(), 20.0);
        assert!(m.spec.drift(&[10]).unwrap()[0].abs() < 1e-12);
        assert_eq!(m.fluid.field(&[0.3]), vec![0.7]);
    }

    #[test]
    fn reaction_fixed_points_have_zero_field() {
        let p = ReactionParams {
            lambda: 2.0,
            mu: 3.0,
            n: 100.0,
            x0: [0.5, 0.4, 0.1],
        };
        let m = make_reaction::<f64>(&p).unwrap();
        for &(x1, x2) in &[(0.3, 0.4), (0.5, 0.1), (0.2, 0.2)] {
            let x3 = p.lambda * x1 * x2 / p.mu;
            assert!(m.fluid.field(&[x1, x2, x3]).iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn gunfight_drift_swaps_constants() {
        let m = make_gunfight::<f64>(&GunfightParams {
            alpha: 1.0,
            beta: 1.0,
            n: 4.0,
            a0: 0.5,
            b0: 0.25,
        })
        .unwrap();
        let d = m.spec.drift(&[2, 1]).unwrap();
        assert!((d[0] + 0.25).abs() < 1e-15 && (d[1] + 0.5).abs() < 1e-15);
        let asym = make_gunfight::<f64>(&GunfightParams {
            alpha: 2.0,
            beta: 3.0,
            n: 10.0,
            a0: 0.5,
            b0: 0.3,
        })
        .unwrap();
        assert_eq!(asym.fluid.field(&[0.5, 0.3]), vec![-3.0 * 0.3, -2.0 * 0.5]);
        let d = asym.spec.drift(&[5, 3]).unwrap();
        assert!((d[0] + 0.9).abs() < 1e-12 && (d[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn critical_branching_has_zero_field() {
        let m = make_branching::<f64>(&BranchingParams {
            n: 50.0,
            offspring: vec![0.25, 0.5, 0.25],
            x0: 1.0,
        })
        .unwrap();
        assert_eq!(m.fluid.field(&[3.7]), vec![0.0]);
        assert!(m.spec.drift(&[50]).unwrap()[0].abs() < 1e-12);
        assert!(make_branching::<f64>(&BranchingParams {
            n: 1.0,
            offspring: vec![0.5],
            x0: 1.0
        })
        .is_err());
    }
}
