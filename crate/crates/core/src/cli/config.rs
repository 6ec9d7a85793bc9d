use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::bounds::admissible_a;
use crate::ctmc::ChainSpec;
use crate::error::{Error, Result};
use crate::fluid::{Bound, BoxDomain, Domain, FluidModel};
use crate::hypergraph::FrequencyVectors;
use crate::models::{self, BuiltModel};

/// A run description read from a TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin model name, or `channels` for the `[channels]` table.
    pub model: Option<String>,
    #[serde(default)]
    pub params: toml::Table,
    pub channels: Option<ChannelTable>,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicas: u64,
    pub t0: Option<f64>,
    pub eps: Option<f64>,
    /// RK4 step for the fluid path.
    #[serde(default = "default_step")]
    pub step: f64,
    pub max_events: Option<u64>,
    pub a: Option<AMode>,
    pub couple: Option<CoupleConfig>,
    pub core: Option<CoreConfig>,
    pub diagnose: Option<DiagnoseConfig>,
}

fn one() -> u64 {
    1
}

fn default_step() -> f64 {
    1e-3
}

/// `A` given outright, or chosen as the smallest value with
/// `A ≥ Q J² exp(δJ/(A t0))` from the jump-rate bound `q` and jump size `j`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum AMode {
    Value(f64),
    Auto { q: f64, j: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    pub label_map: String,
    pub tracked: Vec<i64>,
    pub g: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(default)]
    pub estimate_kappa: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreConfig {
    pub k: usize,
    pub n: usize,
    pub p: BTreeMap<String, f64>,
    pub q: BTreeMap<String, f64>,
    /// Largest allowed deviation between empirical and predicted frequencies.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub theta: f64,
    pub b: f64,
    pub a: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    5
}

/// Mass-action channels: rate `Σ coef Π ξ_i^{p_i}`, coordinates `ξ / scale`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelTable {
    pub dim: usize,
    pub scale: f64,
    pub init: Vec<i64>,
    pub lipschitz: Option<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub channel: Vec<ChannelDef>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDef {
    pub name: String,
    pub jump: Vec<i64>,
    pub rate: Vec<Monomial>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub powers: Vec<u32>,
}

pub const LIPSCHITZ_SAMPLES: usize = 4096;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if cfg.replicas == 0 {
            return Err(config_err("replicas: must be at least 1"));
        }
        if !(cfg.step > 0.0 && cfg.step.is_finite()) {
            return Err(config_err("step: must be positive"));
        }
        Ok(cfg)
    }

    pub fn t0(&self) -> Result<f64> {
        match self.t0 {
            Some(t) if t > 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(config_err(format!("t0: must be positive (got {t})"))),
            None => Err(config_err("t0: missing")),
        }
    }

    pub fn eps(&self) -> Result<f64> {
        match self.eps {
            Some(e) if e > 0.0 && e.is_finite() => Ok(e),
            Some(e) => Err(config_err(format!("eps: must be positive (got {e})"))),
            None => Err(config_err("eps: missing")),
        }
    }

    pub fn model_name(&self) -> Result<&str> {
        self.model.as_deref().ok_or_else(|| config_err("model: missing"))
    }

    /// `A` from the config, resolving the automatic choice with `K`.
    pub fn resolve_a(&self, lipschitz: f64) -> Result<(f64, bool)> {
        match self.a {
            Some(AMode::Value(a)) if a > 0.0 && a.is_finite() => Ok((a, false)),
            Some(AMode::Value(a)) => Err(config_err(format!("a: must be positive (got {a})"))),
            Some(AMode::Auto { q, j }) => Ok((admissible_a(q, j, self.eps()?, self.t0()?, lipschitz)?.a, true)),
            None => Err(config_err("a: missing (give a number or a table with q and j)")),
        }
    }

    fn params<P: DeserializeOwned>(&self) -> Result<P> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("params: {}", e.message())))
    }

    pub fn build_model(&self) -> Result<BuiltModel<f64>> {
        let name = self.model_name()?;
        if name != "channels" && self.channels.is_some() {
            return Err(config_err("channels: only used with model = \"channels\""));
        }
        let built: Result<BuiltModel<f64>> = match name {
            "poisson" => models::make_poisson(&self.params()?),
            "mm_inf" => models::make_mm_inf(&self.params()?),
            "reaction" => models::make_reaction(&self.params()?),
            "gunfight" => models::make_gunfight(&self.params()?),
            "branching" => models::make_branching(&self.params()?),
            "epidemic" => models::make_epidemic(&self.params()?),
            "epidemic_timechanged" => models::make_epidemic_timechanged(&self.params()?),
            "viral" => models::make_viral(&self.params()?),
            "channels" => {
                if !self.params.is_empty() {
                    return Err(config_err("params: not used with model = \"channels\""));
                }
                let table = self
                    .channels
                    .as_ref()
                    .ok_or_else(|| config_err("channels: missing table"))?;
                build_channels(table, self.seed)
            }
            other => return Err(config_err(format!("model: unknown model `{other}`"))),
        };
        built.map_err(as_config)
    }

    pub fn core_frequencies(&self) -> Result<(FrequencyVectors, &CoreConfig)> {
        let core = self.core.as_ref().ok_or_else(|| config_err("core: missing table"))?;
        let parse = |map: &BTreeMap<String, f64>, what: &str| -> Result<BTreeMap<usize, f64>> {
            map.iter()
                .map(|(k, &v)| {
                    k.trim()
                        .parse::<usize>()
                        .map(|i| (i, v))
                        .map_err(|_| config_err(format!("core.{what}: key `{k}` is not a nonnegative integer")))
                })
                .collect()
        };
        let freq = FrequencyVectors::new(&parse(&core.p, "p")?, &parse(&core.q, "q")?).map_err(as_config)?;
        if core.k < 2 {
            return Err(config_err("core.k: must be at least 2"));
        }
        Ok((freq, core))
    }
}

/// Parameter errors raised while building from a config are config errors.
pub fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) | Error::InvalidModel(m) => Error::Config(m),
        Error::Dimension { expected, got } => Error::Config(format!("dimension mismatch: expected {expected}, got {got}")),
        other => other,
    }
}

fn monomial_sum(terms: &[Monomial], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|m| {
            m.powers
                .iter()
                .zip(x)
                .fold(m.coef, |acc, (&p, &xi)| acc * xi.powi(p as i32))
        })
        .sum()
}

fn build_channels(t: &ChannelTable, seed: u64) -> Result<BuiltModel<f64>> {
    if t.dim == 0 || t.init.len() != t.dim {
        return Err(config_err("channels.init: length must equal dim"));
    }
    if !(t.scale > 0.0 && t.scale.is_finite()) {
        return Err(config_err("channels.scale: must be positive"));
    }
    if t.channel.is_empty() {
        return Err(config_err("channels.channel: at least one channel needed"));
    }
    let mut spec = ChainSpec::scaled(t.dim, t.scale);
    let mut field_terms = Vec::new();
    for ch in &t.channel {
        if ch.rate.iter().any(|m| m.powers.len() > t.dim || !m.coef.is_finite()) {
            return Err(config_err(format!("channels.channel `{}`: bad rate term", ch.name)));
        }
        let terms = ch.rate.clone();
        spec.add_channel(&ch.name, ch.jump.clone(), move |s: &[i64]| {
            let x: Vec<f64> = s.iter().map(|&v| v as f64).collect();
            monomial_sum(&terms, &x)
        })
        .map_err(as_config)?;
        field_terms.push((ch.jump.clone(), ch.rate.clone()));
    }
    let n = t.scale;
    let dim = t.dim;
    let field = move |x: &[f64]| {
        let counts: Vec<f64> = x.iter().map(|&v| v * n).collect();
        let mut out = vec![0.0; dim];
        for (jump, terms) in &field_terms {
            let r = monomial_sum(terms, &counts);
            for (o, &j) in out.iter_mut().zip(jump) {
                *o += j as f64 * r / n;
            }
        }
        out
    };
    let side = |v: &Option<Vec<f64>>, what: &str, default: Bound<f64>| -> Result<Vec<Bound<f64>>> {
        match v {
            None => Ok(vec![default; dim]),
            Some(v) if v.len() == dim => Ok(v.iter().map(|&b| Bound::closed(b)).collect()),
            Some(_) => Err(config_err(format!("channels.{what}: length must equal dim"))),
        }
    };
    let bbox = BoxDomain {
        lower: side(&t.lower, "lower", Bound::closed(0.0))?,
        upper: side(&t.upper, "upper", Bound::unbounded_above())?,
    };
    let x0: Vec<f64> = t.init.iter().map(|&v| v as f64 / n).collect();
    let model = FluidModel::new(dim, field, Domain::from_box(bbox), t.lipschitz.unwrap_or(0.0), x0)?;
    let fluid = match t.lipschitz {
        Some(k) if k >= 0.0 => model,
        Some(k) => return Err(config_err(format!("channels.lipschitz: must be nonnegative (got {k})"))),
        None => model
            .with_estimated_lipschitz(LIPSCHITZ_SAMPLES, seed)
            .map_err(|e| config_err(format!("channels.lipschitz: missing and not estimable ({e})")))?,
    };
    Ok(BuiltModel {
        spec,
        fluid,
        init: t.init.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPIDEMIC: &str = r#"
model = "epidemic"
seed = 3
replicas = 4
t0 = 1.0
eps = 0.1
a = 0.5
[params]
n = 100
lambda = 5.0
p = 0.1
"#;

    #[test]
    fn parses_builtin() {
        let c = RunConfig::from_toml(EPIDEMIC).unwrap();
        let m = c.build_model().unwrap();
        assert_eq!(m.init, vec![90, 10]);
        assert_eq!(c.resolve_a(10.0).unwrap(), (0.5, false));
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = EPIDEMIC.replace("replicas = 4", "replicas = 4\ncolour = 1");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = EPIDEMIC.replace("p = 0.1", "p = 0.1\nmu = 2.0");
        let c = RunConfig::from_toml(&bad).unwrap();
        let err = c.build_model().unwrap_err().to_string();
        assert!(err.contains("mu"), "{err}");
        let missing = EPIDEMIC.replace("seed = 3\n", "");
        assert!(RunConfig::from_toml(&missing).is_err());
    }

    #[test]
    fn auto_a() {
        let c = RunConfig::from_toml(&EPIDEMIC.replace("a = 0.5", "a = { q = 600.0, j = 0.01 }")).unwrap();
        let (a, auto) = c.resolve_a(10.0).unwrap();
        assert!(auto && a > 0.0);
    }

    #[test]
    fn channel_table_matches_builtin() {
        let text = r#"
model = "channels"
seed = 1
[channels]
dim = 2
scale = 100.0
init = [90, 10]
lipschitz = 10.0
upper = [1.0, 1.0]
[[channels.channel]]
name = "infection"
jump = [-1, 1]
rate = [{ coef = 0.05, powers = [1, 1] }]
[[channels.channel]]
name = "removal"
jump = [0, -1]
rate = [{ coef = 1.0, powers = [0, 1] }]
"#;
        let c = RunConfig::from_toml(text).unwrap();
        let m = c.build_model().unwrap();
        let reference = RunConfig::from_toml(EPIDEMIC).unwrap().build_model().unwrap();
        for s in [[90, 10], [40, 33], [0, 5]] {
            assert_eq!(m.spec.rates(&s).unwrap(), reference.spec.rates(&s).unwrap());
            let x = m.spec.coord(&s);
            let (a, b) = (m.fluid.field(&x), reference.fluid.field(&x));
            assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        }
        let estimated = RunConfig::from_toml(&text.replace("lipschitz = 10.0\n", "")).unwrap();
        let m = estimated.build_model().unwrap();
        assert!(m.fluid.approximate_k && m.fluid.lipschitz > 5.0);
    }
}
