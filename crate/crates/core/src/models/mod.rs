//! Builtin chains paired with their fluid limits.

mod classic;
mod epidemic;
mod queue;
mod viral;

pub use classic::{
    make_branching, make_gunfight, make_mm_inf, make_poisson, make_reaction, BranchingParams, GunfightParams,
    MmInfParams, PoissonParams, ReactionParams,
};
pub use epidemic::{make_epidemic, make_epidemic_timechanged, sir_final_size, EpidemicParams};
pub use queue::{mminf_chain, mminf_exp_moment, mminf_sup_tail, poisson_tail};
pub use viral::{make_viral, viral_chi, viral_delta, ViralParams};

use crate::ctmc::ChainSpec;
use crate::error::{Error, Result};
use crate::fluid::FluidModel;

/// A chain, its fluid limit and the integer start state matching `x0`.
#[derive(Debug, Clone)]
pub struct BuiltModel<T> {
    pub spec: ChainSpec<T>,
    pub fluid: FluidModel<T>,
    pub init: Vec<i64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite (got {v})")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be nonnegative and finite (got {v})")))
    }
}

/// `v` rounded to an integer, provided it is one up to rounding noise.
fn integral(name: &str, v: f64) -> Result<i64> {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        Ok(r as i64)
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be an integer")))
    }
}
