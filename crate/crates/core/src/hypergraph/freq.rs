use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// `C(n, j)` as a float.
pub fn binomial(n: usize, j: usize) -> f64 {
    if j > n {
        return 0.0;
    }
    let j = j.min(n - j);
    (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn pgf(coef: &[f64], z: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

fn pgf_derivative(coef: &[f64], z: f64) -> f64 {
    coef.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, &c)| acc * z + i as f64 * c)
}

/// Vertex-degree and edge-weight frequencies per unit of `N`, indexed
/// `0..=L` with `p₀ = q₀ = 0` and `Σ d p_d = Σ w q_w = m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVectors {
    p: Vec<f64>,
    q: Vec<f64>,
    m: f64,
}

impl FrequencyVectors {
    pub fn new(p: &BTreeMap<usize, f64>, q: &BTreeMap<usize, f64>) -> Result<Self> {
        let l = p.keys().chain(q.keys()).copied().max().unwrap_or(0);
        let dense = |map: &BTreeMap<usize, f64>, what: &str| -> Result<Vec<f64>> {
            let mut v = vec![0.0; l + 1];
            for (&i, &x) in map {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{what}[{i}] = {x} must be nonnegative")));
                }
                if i == 0 && x != 0.0 {
                    return Err(Error::InvalidParameter(format!("{what}[0] must be zero")));
                }
                v[i] = x;
            }
            Ok(v)
        };
        Self::from_dense(dense(p, "p")?, dense(q, "q")?)
    }

    /// Builds from dense vectors indexed by degree and weight.
    pub fn from_dense(mut p: Vec<f64>, mut q: Vec<f64>) -> Result<Self> {
        let l = p.len().max(q.len()).max(1) - 1;
        p.resize(l + 1, 0.0);
        q.resize(l + 1, 0.0);
        if p[0] != 0.0 || q[0] != 0.0 {
            return Err(Error::InvalidParameter("p_0 and q_0 must be zero".into()));
        }
        if p.iter().chain(&q).any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter("frequencies must be nonnegative and finite".into()));
        }
        let mp: f64 = p.iter().enumerate().map(|(d, &x)| d as f64 * x).sum();
        let mq: f64 = q.iter().enumerate().map(|(w, &x)| w as f64 * x).sum();
        if mp == 0.0 || mq == 0.0 {
            return Err(Error::InvalidParameter("frequency vectors must be non-zero".into()));
        }
        if (mp - mq).abs() > 1e-9 * mp.max(mq) {
            return Err(Error::InvalidParameter(format!(
                "degree sum {mp} differs from weight sum {mq}"
            )));
        }
        Ok(Self { p, q, m: mp })
    }

    /// Frequencies whose size-biased laws are the given `λ` and `σ`, with `m = 1`.
    pub fn from_size_biased(lambda: &[f64], sigma: &[f64]) -> Result<Self> {
        let unbias = |law: &[f64]| -> Vec<f64> {
            let mut v = vec![0.0];
            v.extend(law.iter().enumerate().map(|(i, &x)| x / (i + 1) as f64));
            v
        };
        Self::from_dense(unbias(lambda), unbias(sigma))
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Largest degree or weight index `L`.
    pub fn max_index(&self) -> usize {
        self.p.len() - 1
    }

    pub fn p(&self, d: usize) -> f64 {
        self.p.get(d).copied().unwrap_or(0.0)
    }

    pub fn q(&self, w: usize) -> f64 {
        self.q.get(w).copied().unwrap_or(0.0)
    }

    pub fn p_dense(&self) -> &[f64] {
        &self.p
    }

    pub fn q_dense(&self) -> &[f64] {
        &self.q
    }

    /// Vertex and edge counts `N p_d`, `N q_w`, which must be integral.
    pub fn counts(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let conv = |v: &[f64], what: &str| -> Result<Vec<usize>> {
            v.iter()
                .enumerate()
                .map(|(i, &x)| {
                    let c = n as f64 * x;
                    let r = c.round();
                    if (c - r).abs() > 1e-9 * c.max(1.0) {
                        Err(Error::InvalidParameter(format!("N * {what}[{i}] = {c} is not an integer")))
                    } else {
                        Ok(r as usize)
                    }
                })
                .collect()
        };
        Ok((conv(&self.p, "p")?, conv(&self.q, "q")?))
    }

    pub fn size_biased(&self) -> BranchingLaws {
        let bias = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .skip(1)
                .map(|(i, &x)| i as f64 * x / self.m)
                .collect()
        };
        BranchingLaws {
            lambda: bias(&self.p),
            sigma: bias(&self.q),
        }
    }
}

/// Offspring laws `λ_d = (d+1)p_{d+1}/m` and `σ_w = (w+1)q_{w+1}/m` of the
/// local branching approximation, indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingLaws {
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Largest fixed point of `φ` and whether `φ(g) > g` just below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GStar {
    pub value: f64,
    pub crossing: bool,
}

pub const G_STAR_GRID: usize = 10_000;
const G_STAR_BISECTIONS: usize = 200;
const CROSSING_MESH: usize = 100;
const CROSSING_WIDTH: f64 = 1e-3;

impl BranchingLaws {
    pub fn lambda_pgf(&self, z: f64) -> f64 {
        pgf(&self.lambda, z)
    }

    /// `σ(z)`, clipped to `[0, 1]` against rounding.
    pub fn sigma_pgf(&self, z: f64) -> f64 {
        pgf(&self.sigma, z).clamp(0.0, 1.0)
    }

    pub fn sigma_pgf_derivative(&self, z: f64) -> f64 {
        pgf_derivative(&self.sigma, z)
    }

    /// `φ(g) = Σ_{j≥k−1} Σ_d C(d,j) λ_d σ(g)^j (1 − σ(g))^{d−j}`.
    pub fn phi(&self, g: f64, k: usize) -> f64 {
        let s = self.sigma_pgf(g);
        let j0 = k.saturating_sub(1);
        self.lambda
            .iter()
            .enumerate()
            .map(|(d, &ld)| {
                if ld == 0.0 {
                    return 0.0;
                }
                let tail: f64 = (j0..=d)
                    .map(|j| binomial(d, j) * s.powi(j as i32) * (1.0 - s).powi((d - j) as i32))
                    .sum();
                ld * tail
            })
            .sum()
    }

    /// Largest root of `φ(g) = g` in `[0, 1]`: a descending grid scan
    /// followed by bisection, then the crossing check on a mesh just below.
    pub fn g_star(&self, k: usize) -> GStar {
        let f = |g: f64| self.phi(g, k) - g;
        let mut value = 0.0;
        let mut prev = 1.0;
        for i in 0..=G_STAR_GRID {
            let g = 1.0 - i as f64 / G_STAR_GRID as f64;
            let fg = f(g);
            if fg >= 0.0 {
                value = if i == 0 || fg == 0.0 {
                    g
                } else {
                    let (mut lo, mut hi) = (g, prev);
                    for _ in 0..G_STAR_BISECTIONS {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if f(mid) >= 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                };
                break;
            }
            prev = g;
        }
        let crossing = value == 0.0 || {
            let width = CROSSING_WIDTH.min(value);
            (1..=CROSSING_MESH).all(|j| {
                let g = value - width * j as f64 / (CROSSING_MESH + 1) as f64;
                f(g) > 0.0
            })
        };
        GStar { value, crossing }
    }

    /// Iterates `g ← φ(g)` from `g = 1` until successive values agree to `tol`.
    pub fn iterate_phi(&self, k: usize, tol: f64, max_iter: usize) -> f64 {
        let mut g = 1.0;
        for _ in 0..max_iter {
            let next = self.phi(g, k);
            if (next - g).abs() <= tol {
                return next;
            }
            g = next;
        }
        g
    }
}

/// Core frequencies `P̄_{d,d′}` (`0 ≤ d ≤ d′ ≤ L`) and `Q̄_w` (`0 ≤ w ≤ L`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoreFrequencies {
    l: usize,
    pbar: Vec<f64>,
    qbar: Vec<f64>,
}

impl CoreFrequencies {
    pub fn zeros(l: usize) -> Self {
        Self {
            l,
            pbar: vec![0.0; (l + 1) * (l + 1)],
            qbar: vec![0.0; l + 1],
        }
    }

    pub fn max_index(&self) -> usize {
        self.l
    }

    pub fn pbar(&self, d: usize, d2: usize) -> f64 {
        if d > d2 || d2 > self.l {
            0.0
        } else {
            self.pbar[d * (self.l + 1) + d2]
        }
    }

    pub fn qbar(&self, w: usize) -> f64 {
        self.qbar.get(w).copied().unwrap_or(0.0)
    }

    pub fn set_pbar(&mut self, d: usize, d2: usize, v: f64) {
        assert!(d <= d2 && d2 <= self.l, "index ({d}, {d2}) out of range");
        self.pbar[d * (self.l + 1) + d2] = v;
    }

    pub fn set_qbar(&mut self, w: usize, v: f64) {
        self.qbar[w] = v;
    }

    /// `sup_{k≤d≤d′} |ΔP̄| ∨ sup_{w≥1} |ΔQ̄|`.
    pub fn max_deviation(&self, other: &Self, k: usize) -> f64 {
        let l = self.l.max(other.l);
        let mut dev: f64 = 0.0;
        for d in k..=l {
            for d2 in d..=l {
                dev = dev.max((self.pbar(d, d2) - other.pbar(d, d2)).abs());
            }
        }
        for w in 1..=l {
            dev = dev.max((self.qbar(w) - other.qbar(w)).abs());
        }
        dev
    }

    /// `Σ d P̄_{d,d′}` over `d ≥ k`.
    pub fn core_degree_mass(&self, k: usize) -> f64 {
        let mut s = 0.0;
        for d in k..=self.l {
            for d2 in d..=self.l {
                s += d as f64 * self.pbar(d, d2);
            }
        }
        s
    }

    /// `Σ w Q̄_w`.
    pub fn core_weight_mass(&self) -> f64 {
        self.qbar.iter().enumerate().map(|(w, &x)| w as f64 * x).sum()
    }
}

/// Predicted core frequencies
/// `p̄_{d,d′} = C(d′,d) s^d (1−s)^{d′−d} p_{d′}` with `s = σ(g*)`, `q̄_w = g*^w q_w`,
/// together with the complements `P̄_{0,d′}` and `Q̄_0`.
pub fn limiting_frequencies(freq: &FrequencyVectors, k: usize, g_star: f64) -> Result<CoreFrequencies> {
    if !(0.0..=1.0).contains(&g_star) {
        return Err(Error::InvalidParameter(format!("g* = {g_star} must lie in [0, 1]")));
    }
    let l = freq.max_index();
    let s = freq.size_biased().sigma_pgf(g_star);
    let mut out = CoreFrequencies::zeros(l);
    for d2 in 1..=l {
        let mut kept = 0.0;
        for d in k.max(1)..=d2 {
            let v = binomial(d2, d) * s.powi(d as i32) * (1.0 - s).powi((d2 - d) as i32) * freq.p(d2);
            out.set_pbar(d, d2, v);
            kept += v;
        }
        out.set_pbar(0, d2, freq.p(d2) - kept);
    }
    let mut kept = 0.0;
    for w in 1..=l {
        let v = g_star.powi(w as i32) * freq.q(w);
        out.set_qbar(w, v);
        kept += v;
    }
    out.set_qbar(0, freq.q_dense().iter().sum::<f64>() - kept);
    Ok(out)
}

/// Index layout of the peeling coordinates: `x^{d,d′}` for `k ≤ d ≤ d′ ≤ L`
/// in lexicographic order, then `x^w` for `1 ≤ w ≤ L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreLayout {
    pub k: usize,
    pub l: usize,
}

impl CoreLayout {
    pub fn new(k: usize, l: usize) -> Self {
        Self { k, l }
    }

    fn vertex_block(&self) -> usize {
        if self.k > self.l {
            0
        } else {
            let r = self.l - self.k + 1;
            r * (r + 1) / 2
        }
    }

    /// `(L−k+1)(L−k+2)/2 + L`.
    pub fn dim(&self) -> usize {
        self.vertex_block() + self.l
    }

    pub fn vertex_index(&self, d: usize, d2: usize) -> Option<usize> {
        if d < self.k || d > d2 || d2 > self.l {
            return None;
        }
        let rows_before: usize = (self.k..d).map(|r| self.l - r + 1).sum();
        Some(rows_before + (d2 - d))
    }

    pub fn weight_index(&self, w: usize) -> Option<usize> {
        (1..=self.l).contains(&w).then(|| self.vertex_block() + w - 1)
    }

    pub fn vertex_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.k..=self.l).flat_map(move |d| (d..=self.l).map(move |d2| (d, d2)))
    }

    /// `m(x) = Σ_w w x^w`.
    pub fn m_of(&self, x: &[f64]) -> f64 {
        (1..=self.l).map(|w| w as f64 * x[self.vertex_block() + w - 1]).sum()
    }

    /// `p(x) = Σ_w w(w−1) x^w`.
    pub fn p_of(&self, x: &[f64]) -> f64 {
        (1..=self.l)
            .map(|w| (w * (w - 1)) as f64 * x[self.vertex_block() + w - 1])
            .sum()
    }

    /// `h(x) = Σ_{d≥k} d x^{d,d′}`.
    pub fn h_of(&self, x: &[f64]) -> f64 {
        self.vertex_pairs()
            .enumerate()
            .map(|(i, (d, _))| d as f64 * x[i])
            .sum()
    }

    /// The peeling field `b`: `b^{d,d′} = (p/m)((d+1)x^{d+1,d′} − d x^{d,d′})`,
    /// `b^w = −w x^w`.
    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m_of(x);
        let r = if m > 0.0 { self.p_of(x) / m } else { 0.0 };
        let mut out = vec![0.0; self.dim()];
        for (i, (d, d2)) in self.vertex_pairs().enumerate() {
            let up = self.vertex_index(d + 1, d2).map_or(0.0, |j| x[j]);
            out[i] = r * ((d + 1) as f64 * up - d as f64 * x[i]);
        }
        for w in 1..=self.l {
            let i = self.vertex_block() + w - 1;
            out[i] = -(w as f64) * x[i];
        }
        out
    }
}

/// The closed-form fluid solution at time `t` and its derived functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub t: f64,
    pub x: Vec<f64>,
    pub m: f64,
    pub p: f64,
    pub h: f64,
    /// Clock with `τ̇ = p/m`, so that `e^{−τ} = σ(e^{−t})`.
    pub tau: f64,
}

pub fn fluid_closed_form(freq: &FrequencyVectors, k: usize, t: f64) -> Result<ClosedForm> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be nonnegative")));
    }
    let layout = CoreLayout::new(k, freq.max_index());
    let laws = freq.size_biased();
    let g = (-t).exp();
    let s = laws.sigma_pgf(g);
    let mut x = vec![0.0; layout.dim()];
    for (i, (d, d2)) in layout.vertex_pairs().enumerate() {
        x[i] = binomial(d2, d) * s.powi(d as i32) * (1.0 - s).powi((d2 - d) as i32) * freq.p(d2);
    }
    for w in 1..=layout.l {
        x[layout.weight_index(w).unwrap()] = g.powi(w as i32) * freq.q(w);
    }
    Ok(ClosedForm {
        t,
        m: layout.m_of(&x),
        p: layout.p_of(&x),
        h: layout.h_of(&x),
        tau: -s.ln(),
        x,
    })
}
