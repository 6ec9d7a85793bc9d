use serde::{Deserialize, Serialize};

use super::{integral, nonnegative, positive, BuiltModel};
use crate::ctmc::ChainSpec;
use crate::error::{Error, Result};
use crate::fluid::{BoxDomain, Domain, FluidModel};
use crate::scalar::Real;

/// Genome/template/protein model of viral replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViralParams {
    pub alpha: f64,
    pub r: f64,
    pub n: f64,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub x0: f64,
}

impl ViralParams {
    pub fn x_inf(&self) -> f64 {
        (self.alpha - 1.0) / (self.alpha * self.mu * self.nu)
    }

    /// Lipschitz constant of `b` on `[0, x_∞ + 1]`.
    pub fn lipschitz(&self) -> f64 {
        self.lambda * (self.alpha - 1.0) + 2.0 * self.lambda * self.alpha * self.mu * self.nu
    }

    pub fn validate(&self) -> Result<i64> {
        if !(self.alpha > 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1 (got {})", self.alpha)));
        }
        if !(self.r >= 1.0 && self.n >= self.r) {
            return Err(Error::InvalidParameter("need R >= 1 and N >= R".into()));
        }
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("nu", self.nu)?;
        nonnegative("x0", self.x0)?;
        if self.x0 > self.x_inf() * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "x0 = {} exceeds the fixed point {}",
                self.x0,
                self.x_inf()
            )));
        }
        integral("R * x0", self.r * self.x0)
    }

    pub fn field(&self, x: f64) -> f64 {
        self.lambda * (self.alpha - 1.0) * x - self.lambda * self.alpha * self.mu * self.nu * x * x
    }
}

/// The correction `χ` that makes the coordinate drift close to `b`.
pub fn viral_chi(p: &ViralParams, s: &[i64]) -> f64 {
    let (x1, x2, x3) = (s[0] as f64, s[1] as f64, s[2] as f64);
    let (r, n) = (p.r, p.n);
    let mn = p.mu * p.nu;
    (p.alpha * x2 - mn * x1 * x3 / (r * n) - p.alpha * mn * (x1 / r) * x2) / r
}

/// The residual `Δ` with `β(ξ) = b(x(ξ)) + Δ(ξ)/R`, term by term.
pub fn viral_delta(p: &ViralParams, s: &[i64]) -> f64 {
    let (x1, x2, x3) = (s[0] as f64, s[1] as f64, s[2] as f64);
    let (al, r, n, la, mu, nu) = (p.alpha, p.r, p.n, p.lambda, p.mu, p.nu);
    let chi = viral_chi(p, s);
    la * mu * nu * x1 * x3 / (r * n) + al * la * mu * nu * (x2 + 1.0) * x1 / r
        - mu * nu * x2 * x3 / n
        - al * mu * nu * x2 * x2
        + al * mu * nu * nu * (x1 / r) * x2 * (x3 / n)
        + mu * nu * nu * (x1 * x3 / (r * n)) * (x1 + x3 - 1.0) / n
        - la * (al - 1.0) * r * chi
        + la * al * mu * nu * (2.0 * r * chi * x1 / r + r * chi * chi)
}

/// Six-reaction chain with coordinate `ξ¹/R + χ(ξ)`, domain `[0, x_∞ + 1]`.
pub fn make_viral<T: Real>(p: &ViralParams) -> Result<BuiltModel<T>> {
    let g0 = p.validate()?;
    let (al, r, n) = (T::lit(p.alpha), T::lit(p.r), T::lit(p.n));
    let (la, mu, nu) = (T::lit(p.lambda), T::lit(p.mu), T::lit(p.nu));
    let c = |s: &[i64], i: usize| T::from_count(s[i]);
    let params = *p;
    let mut spec = ChainSpec::new(3, 1, move |s: &[i64]| {
        vec![T::lit(s[0] as f64 / params.r + viral_chi(&params, s))]
    });
    spec.add_channel("genome_to_template", vec![-1, 1, 0], move |s: &[i64]| la * c(s, 0))?;
    spec.add_channel("template_decay", vec![0, -1, 0], move |s: &[i64]| r / al * c(s, 1))?;
    spec.add_channel("genome_synthesis", vec![1, 0, 0], move |s: &[i64]| r * c(s, 1))?;
    spec.add_channel("protein_synthesis", vec![0, 0, 1], move |s: &[i64]| r * n * c(s, 1))?;
    spec.add_channel("protein_decay", vec![0, 0, -1], move |s: &[i64]| r / mu * c(s, 2))?;
    spec.add_channel("assembly", vec![-1, 0, -1], move |s: &[i64]| nu * c(s, 0) * c(s, 2) / n)?;
    let spec = spec.with_scale_hint(r);
    let hi = T::lit(p.x_inf() + 1.0);
    let fluid = FluidModel::new(
        1,
        move |x: &[T]| vec![T::lit(params.field(x[0].to_f64_lossy()))],
        Domain::from_box(BoxDomain::closed(&[T::zero()], &[hi])),
        T::lit(p.lipschitz()),
        vec![T::lit(p.x0)],
    )?
    .with_clamped_extension();
    Ok(BuiltModel {
        spec,
        fluid,
        init: vec![g0, 0, 0],
    })
}
