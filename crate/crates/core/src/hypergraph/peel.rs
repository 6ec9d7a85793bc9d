use rand::Rng;

use super::freq::{CoreFrequencies, CoreLayout};
use super::instance::HypergraphInstance;
use crate::error::{Error, Result};
use crate::rng;

/// Counts `ξ^{d,d′}` of vertices with current degree `d` and original degree
/// `d′`, and `ξ^w` of edges with current weight `w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelState {
    k: usize,
    l: usize,
    xi_v: Vec<i64>,
    xi_e: Vec<i64>,
}

impl PeelState {
    fn empty(k: usize, l: usize) -> Self {
        Self {
            k,
            l,
            xi_v: vec![0; (l + 1) * (l + 1)],
            xi_e: vec![0; l + 1],
        }
    }

    /// Recount from a sub-hypergraph of `original`.
    pub fn from_instances(current: &HypergraphInstance, original: &HypergraphInstance, k: usize) -> Result<Self> {
        if !current.is_subhypergraph_of(original) {
            return Err(Error::InvalidModel("current instance is not a sub-hypergraph of the original".into()));
        }
        let l = original.max_degree().max(original.max_weight());
        let mut s = Self::empty(k, l);
        for v in 0..original.num_vertices() {
            s.xi_v[current.degree(v) * (l + 1) + original.degree(v)] += 1;
        }
        for e in 0..original.num_edges() {
            s.xi_e[current.weight(e)] += 1;
        }
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn max_index(&self) -> usize {
        self.l
    }

    pub fn vertices(&self, d: usize, d2: usize) -> i64 {
        if d > d2 || d2 > self.l {
            0
        } else {
            self.xi_v[d * (self.l + 1) + d2]
        }
    }

    pub fn edges(&self, w: usize) -> i64 {
        self.xi_e.get(w).copied().unwrap_or(0)
    }

    fn degree_total(&self, d: usize) -> i64 {
        (d..=self.l).map(|d2| self.vertices(d, d2)).sum()
    }

    /// Light vertices: current degree in `1..k`.
    pub fn n(&self) -> i64 {
        (1..self.k.min(self.l + 1)).map(|d| self.degree_total(d)).sum()
    }

    /// Incidences at light vertices.
    pub fn l_count(&self) -> i64 {
        (1..self.k.min(self.l + 1)).map(|d| d as i64 * self.degree_total(d)).sum()
    }

    /// Incidences at vertices of degree at least `k`.
    pub fn h(&self) -> i64 {
        (self.k..=self.l).map(|d| d as i64 * self.degree_total(d)).sum()
    }

    pub fn m(&self) -> i64 {
        self.xi_e.iter().enumerate().map(|(w, &c)| w as i64 * c).sum()
    }

    pub fn p(&self) -> i64 {
        self.xi_e
            .iter()
            .enumerate()
            .map(|(w, &c)| (w * w.saturating_sub(1)) as i64 * c)
            .sum()
    }

    /// Jump rate `q = m n / l`, zero once no light vertex is left.
    pub fn rate(&self) -> f64 {
        let l = self.l_count();
        if l == 0 {
            0.0
        } else {
            self.m() as f64 * self.n() as f64 / l as f64
        }
    }

    /// `Σ d ξ^{d,d′} = Σ w ξ^w`.
    pub fn incidences_balance(&self) -> bool {
        let deg: i64 = (1..=self.l).map(|d| d as i64 * self.degree_total(d)).sum();
        deg == self.m()
    }

    pub fn is_terminal(&self) -> bool {
        self.h() == self.m()
    }

    /// `ξ/N` in the peeling-coordinate layout.
    pub fn coords(&self, scale: usize) -> Vec<f64> {
        let layout = CoreLayout::new(self.k, self.l);
        let n = scale as f64;
        let mut x: Vec<f64> = layout
            .vertex_pairs()
            .map(|(d, d2)| self.vertices(d, d2) as f64 / n)
            .collect();
        x.extend((1..=self.l).map(|w| self.edges(w) as f64 / n));
        x
    }

    /// All counts normalized by `N`.
    pub fn frequencies(&self, scale: usize) -> CoreFrequencies {
        let n = scale as f64;
        let mut f = CoreFrequencies::zeros(self.l);
        for d2 in 0..=self.l {
            for d in 0..=d2 {
                f.set_pbar(d, d2, self.vertices(d, d2) as f64 / n);
            }
        }
        for w in 0..=self.l {
            f.set_qbar(w, self.edges(w) as f64 / n);
        }
        f
    }
}

/// History of the peeling chain. `times[i]` is the jump time into
/// `states[i]`, with holding times `Exp(q)` in the continuous embedding.
#[derive(Debug, Clone)]
pub struct PeelRun {
    pub states: Vec<PeelState>,
    pub times: Vec<f64>,
    pub chosen: Vec<usize>,
    pub core: HypergraphInstance,
}

impl PeelRun {
    pub fn steps(&self) -> usize {
        self.chosen.len()
    }

    pub fn terminal(&self) -> &PeelState {
        self.states.last().expect("a run has its initial state")
    }

    pub fn termination_time(&self) -> f64 {
        *self.times.last().expect("a run has its initial time")
    }
}

/// Uniform choice and O(1) removal over a set of vertex ids.
struct IndexedSet {
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl IndexedSet {
    fn new(n: usize) -> Self {
        Self {
            items: Vec::new(),
            pos: vec![usize::MAX; n],
        }
    }

    fn insert(&mut self, v: usize) {
        if self.pos[v] == usize::MAX {
            self.pos[v] = self.items.len();
            self.items.push(v);
        }
    }

    fn remove(&mut self, v: usize) {
        let i = self.pos[v];
        if i == usize::MAX {
            return;
        }
        let last = self.items.pop().expect("nonempty");
        if last != v {
            self.items[i] = last;
            self.pos[last] = i;
        }
        self.pos[v] = usize::MAX;
    }
}

pub fn peel_chain(h: &HypergraphInstance, k: usize, seed: u64) -> Result<PeelRun> {
    peel_chain_with_rng(h, k, &mut rng::replica_rng(seed, 0))
}

/// Repeatedly picks a uniform vertex of degree in `1..k` and deletes every
/// edge through it, recording the counts after each step.
pub fn peel_chain_with_rng<R: Rng + ?Sized>(h: &HypergraphInstance, k: usize, rng: &mut R) -> Result<PeelRun> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} must be at least 2")));
    }
    let l = h.max_degree().max(h.max_weight());
    let mut state = PeelState::from_instances(h, h, k)?;
    let orig: Vec<usize> = (0..h.num_vertices()).map(|v| h.degree(v)).collect();
    let mut deg = orig.clone();
    let mut alive = vec![true; h.num_edges()];
    let mut light = IndexedSet::new(h.num_vertices());
    for v in (0..h.num_vertices()).filter(|&v| deg[v] > 0 && deg[v] < k) {
        light.insert(v);
    }
    let mut states = vec![state.clone()];
    let mut times = vec![0.0];
    let mut chosen = Vec::new();
    let mut t = 0.0;
    while !light.items.is_empty() {
        t += rng::exp_time(rng, state.rate());
        let v = light.items[rng.gen_range(0..light.items.len())];
        for &e in h.vertex_edges(v) {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let w = h.weight(e);
            state.xi_e[w] -= 1;
            state.xi_e[0] += 1;
            for &u in h.edge(e) {
                let (old, d2) = (deg[u], orig[u]);
                state.xi_v[old * (l + 1) + d2] -= 1;
                state.xi_v[(old - 1) * (l + 1) + d2] += 1;
                deg[u] -= 1;
                if deg[u] > 0 && deg[u] < k {
                    light.insert(u);
                } else {
                    light.remove(u);
                }
            }
        }
        chosen.push(v);
        states.push(state.clone());
        times.push(t);
    }
    Ok(PeelRun {
        states,
        times,
        chosen,
        core: h.restrict(&alive),
    })
}

/// `P̄_{d,d′}` and `Q̄_w` of a core against its original hypergraph.
pub fn empirical_core_frequencies(core: &HypergraphInstance, original: &HypergraphInstance) -> Result<CoreFrequencies> {
    Ok(PeelState::from_instances(core, original, 2)?.frequencies(original.scale()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::freq::{limiting_frequencies, FrequencyVectors};
    use crate::hypergraph::instance::{generate, k_core};

    fn instance() -> HypergraphInstance {
        let f = FrequencyVectors::from_dense(vec![0.0, 0.3, 0.4, 0.3], vec![0.0, 0.1, 0.5, 0.3]).unwrap();
        generate(&f, 50, 4).unwrap().instance
    }

    #[test]
    fn core_instance_needs_no_peeling() {
        let c = HypergraphInstance::from_edges(1, 3, vec![vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
        let run = peel_chain(&c, 2, 1).unwrap();
        assert_eq!(run.steps(), 0);
        assert_eq!(run.core, c);
        assert!(run.terminal().is_terminal());
    }

    #[test]
    fn run_matches_core_and_recount() {
        let h = instance();
        for k in 2..=3 {
            let run = peel_chain(&h, k, 7).unwrap();
            assert_eq!(run.core, k_core(&h, k).unwrap());
            let recount = PeelState::from_instances(&run.core, &h, k).unwrap();
            assert_eq!(run.terminal(), &recount);
            assert!(run.terminal().is_terminal());
            assert_eq!(run.terminal().rate(), 0.0);
            let m0 = run.states[0].m();
            for (s, w) in run.states.iter().zip(run.times.windows(2).map(|w| w[1] - w[0]).chain([0.0])) {
                assert!(s.incidences_balance());
                assert!(s.rate() <= m0 as f64 + 1e-9);
                assert!(w >= 0.0);
            }
        }
    }

    #[test]
    fn terminal_state_equals_empirical_frequencies() {
        let h = instance();
        let run = peel_chain(&h, 2, 2).unwrap();
        let emp = empirical_core_frequencies(&run.core, &h).unwrap();
        assert_eq!(run.terminal().frequencies(h.scale()), emp);
    }

    #[test]
    fn full_and_empty_core_frequencies() {
        let f = FrequencyVectors::from_dense(vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let h = generate(&f, 30, 1).unwrap().instance;
        let emp = empirical_core_frequencies(&h, &h).unwrap();
        assert_eq!(emp.max_deviation(&limiting_frequencies(&f, 2, 1.0).unwrap(), 2), 0.0);
        let empty = h.restrict(&vec![false; h.num_edges()]);
        let emp = empirical_core_frequencies(&empty, &h).unwrap();
        assert_eq!(emp.pbar(3, 3), 0.0);
        assert!((1..=3).all(|w| emp.qbar(w) == 0.0));
        assert_eq!(emp.pbar(0, 3), 1.0);
    }

    #[test]
    fn coords_follow_layout() {
        let h = instance();
        let s = PeelState::from_instances(&h, &h, 2).unwrap();
        let x = s.coords(h.scale());
        let lay = CoreLayout::new(2, 3);
        assert_eq!(x.len(), lay.dim());
        assert!((lay.m_of(&x) - s.m() as f64 / 50.0).abs() < 1e-12);
        assert!((lay.h_of(&x) - s.h() as f64 / 50.0).abs() < 1e-12);
        assert!((lay.p_of(&x) - s.p() as f64 / 50.0).abs() < 1e-12);
    }
}
