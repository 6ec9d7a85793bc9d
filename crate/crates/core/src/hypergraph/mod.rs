//! Random hypergraphs with prescribed degree and weight frequencies, their
//! k-cores, and the fluid limit of the core-finding algorithm.

mod freq;
mod instance;
mod peel;

pub use freq::{
    binomial, fluid_closed_form, limiting_frequencies, BranchingLaws, ClosedForm, CoreFrequencies, CoreLayout,
    FrequencyVectors, GStar, G_STAR_GRID,
};
pub use instance::{
    generate, generate_with_rng, k_core, terminal_cores_exhaustive, Generated, HypergraphInstance, DEFAULT_RETRY_CAP,
};
pub use peel::{empirical_core_frequencies, peel_chain, peel_chain_with_rng, PeelRun, PeelState};

use crate::error::{Error, Result};
use crate::fluid::{BoxDomain, Domain, FluidModel};

/// The peeling ODE on `{x ∈ [0, m]^D : m(x) > μ}` started from `x^{d,d} = p_d`,
/// `x^w = q_w`, with Lipschitz constant `(L−1)L³m/μ`.
pub fn core_fluid_model(freq: &FrequencyVectors, k: usize, mu: f64) -> Result<FluidModel<f64>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} must be at least 2")));
    }
    let m = freq.m();
    if !(mu > 0.0 && mu < m) {
        return Err(Error::InvalidParameter(format!("mu = {mu} must lie in (0, m = {m})")));
    }
    let layout = CoreLayout::new(k, freq.max_index());
    let dim = layout.dim();
    let x0 = fluid_closed_form(freq, k, 0.0)?.x;
    let l = layout.l as f64;
    let domain = Domain::from_box(BoxDomain::closed(&vec![0.0; dim], &vec![m; dim]))
        .with_predicate(move |x: &[f64]| layout.m_of(x) > mu);
    FluidModel::new(
        dim,
        move |x: &[f64]| layout.field(x),
        domain,
        (l - 1.0).max(1.0) * l.powi(3) * m / mu,
        x0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::integrate;

    #[test]
    fn rk4_matches_closed_form() {
        let f = FrequencyVectors::from_dense(vec![0.0, 0.3, 0.4, 0.3, 0.2], vec![0.0, 0.2, 0.6, 0.2, 0.2]).unwrap();
        for k in 2..=3 {
            let model = core_fluid_model(&f, k, 0.05).unwrap();
            let path = integrate(&model, 2.0, 1e-3).unwrap();
            for i in (0..path.len()).step_by(100) {
                let cf = fluid_closed_form(&f, k, path.times[i]).unwrap();
                let err = path.value(i).iter().zip(&cf.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-8, "k = {k}, t = {}: {err}", path.times[i]);
            }
        }
    }

    #[test]
    fn rejects_bad_mu() {
        let f = FrequencyVectors::from_dense(vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]).unwrap();
        assert!(core_fluid_model(&f, 2, 0.0).is_err());
        assert!(core_fluid_model(&f, 2, 5.0).is_err());
        assert!(core_fluid_model(&f, 1, 0.5).is_err());
    }
}
