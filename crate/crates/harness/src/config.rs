//! Run configuration for `verify`.

use std::fmt;
use std::path::{Path, PathBuf};

use martsparse::{Exponent, Scalar, VolatilityProfile};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MARTSPARSE_OUTPUT_DIR";

const MAX_DEPTH: usize = 24;

/// A number given either as JSON number or as a string such as `"4/3"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Num {
    pub fn exponent(&self) -> Result<Exponent> {
        match self {
            Num::Int(k) => Ok(Exponent::integer(*k)),
            Num::Float(x) => Exponent::from_f64(*x)
                .ok_or_else(|| HarnessError::Config(format!("{x} is not a simple rational"))),
            Num::Text(s) => Exponent::parse(s).map_err(|e| HarnessError::Config(e.to_string())),
        }
    }

    pub fn scalar<S: Scalar>(&self) -> Result<S> {
        match self {
            Num::Int(k) => Ok(S::from_i64(*k)),
            Num::Float(x) => Ok(S::from_f64(*x)),
            Num::Text(s) => S::parse_decimal(s).map_err(|e| HarnessError::Config(e.to_string())),
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Int(k) => write!(f, "{k}"),
            Num::Float(x) => write!(f, "{x}"),
            Num::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeKind {
    Dyadic,
    Uniform,
    Jump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TreeConfig {
    pub kind: TreeKind,
    pub depth: usize,
    /// Root split for `jump`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Num>,
    /// Branching factor for `uniform`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arity: Option<usize>,
}

/// One dimension or a list cycled over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dimensions {
    One(usize),
    Many(Vec<usize>),
}

impl Dimensions {
    pub fn list(&self) -> Vec<usize> {
        match self {
            Dimensions::One(d) => vec![*d],
            Dimensions::Many(ds) => ds.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightFamily {
    Constant,
    TwoValue,
    Power,
    /// `constant`, `two-value`, `power` by trial index mod 3.
    Cycle,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WeightParams {
    /// Power exponent; overrides `alphaFraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Num>,
    /// Power exponent as a fraction of `p - 1`. Default 0.9.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_fraction: Option<Num>,
    /// Two-value weight on the leaves below `region`. Default 4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<Num>,
    /// Two-value weight elsewhere. Default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<Num>,
    /// Default node 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WeightConfig {
    pub family: WeightFamily,
    #[serde(default)]
    pub params: WeightParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Subordination,
    WeakType,
    Sparsity,
    Domination,
    Chain,
    Theorem1,
    Theorem2,
    Doob,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Subordination,
        Suite::WeakType,
        Suite::Sparsity,
        Suite::Domination,
        Suite::Chain,
        Suite::Theorem1,
        Suite::Theorem2,
        Suite::Doob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Subordination => "subordination",
            Suite::WeakType => "weak-type",
            Suite::Sparsity => "sparsity",
            Suite::Domination => "domination",
            Suite::Chain => "chain",
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Doob => "doob",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arithmetic {
    #[default]
    Float,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub trials: u64,
    pub tree: TreeConfig,
    pub dimension: Dimensions,
    pub p: Vec<Num>,
    pub weight: WeightConfig,
    pub suites: Vec<Suite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub arithmetic: Arithmetic,
    /// Volatility profile of `X`, e.g. `mixed` or `heavy-tail:6`.
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Sparse-operator fixtures checked alongside the corpus.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sparse_fixtures: Vec<PathBuf>,
}

fn default_profile() -> String {
    "mixed".into()
}

impl Default for Config {
    /// 100 float trials on depth-6 dyadic trees with every suite.
    fn default() -> Self {
        Config {
            seed: 1,
            trials: 100,
            tree: TreeConfig {
                kind: TreeKind::Dyadic,
                depth: 6,
                epsilon: None,
                arity: None,
            },
            dimension: Dimensions::Many(vec![1, 2]),
            p: vec![Num::Int(2)],
            weight: WeightConfig {
                family: WeightFamily::Cycle,
                params: WeightParams::default(),
            },
            suites: Suite::ALL.to_vec(),
            output_dir: None,
            parallelism: None,
            arithmetic: Arithmetic::Float,
            profile: default_profile(),
            sparse_fixtures: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.into(),
            source,
        })?;
        let mut cfg: Config = serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        // fixture paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for f in &mut cfg.sparse_fixtures {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn exponents(&self) -> Result<Vec<Exponent>> {
        self.p.iter().map(Num::exponent).collect()
    }

    pub fn volatility(&self) -> Result<VolatilityProfile> {
        self.profile.parse().map_err(|e: martsparse::Error| HarnessError::Config(e.to_string()))
    }

    /// Power exponent for a given `p`.
    pub fn alpha(&self, p: Exponent) -> Result<Exponent> {
        let params = &self.weight.params;
        match (&params.alpha, &params.alpha_fraction) {
            (Some(a), _) => a.exponent(),
            (None, Some(f)) => Ok(f.exponent()? * (p - Exponent::integer(1))),
            (None, None) => Ok(Exponent::new(9, 10) * (p - Exponent::integer(1))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.tree.depth == 0 || self.tree.depth > MAX_DEPTH {
            return bad(format!("tree depth must be in 1..={MAX_DEPTH}"));
        }
        match self.tree.kind {
            TreeKind::Jump => match &self.tree.epsilon {
                None => return bad("jump trees need epsilon".into()),
                Some(e) => {
                    let e: f64 = e.scalar::<f64>()?;
                    if !(e > 0.0 && e <= 0.5) {
                        return bad(format!("epsilon {e} outside (0, 1/2]"));
                    }
                }
            },
            TreeKind::Uniform => {
                if self.tree.arity.is_some_and(|a| a < 2) {
                    return bad("arity must be at least 2".into());
                }
            }
            TreeKind::Dyadic => {}
        }
        let dims = self.dimension.list();
        if dims.is_empty() || dims.contains(&0) {
            return bad("dimension must be a positive integer or a nonempty list of them".into());
        }
        if self.p.is_empty() {
            return bad("p must list at least one exponent".into());
        }
        for p in self.exponents()? {
            if p <= Exponent::integer(1) {
                return bad(format!("p = {p} must exceed 1"));
            }
            if matches!(self.weight.family, WeightFamily::Power | WeightFamily::Cycle) {
                let a = self.alpha(p)?;
                if !(a > Exponent::integer(0) && a < p - Exponent::integer(1)) {
                    return bad(format!("power exponent {a} outside (0, p - 1) for p = {p}"));
                }
            }
        }
        if self.arithmetic == Arithmetic::Exact
            && matches!(self.weight.family, WeightFamily::Power | WeightFamily::Cycle)
        {
            // irrational leaf means make every later closure carry huge denominators
            return bad("power weights are irrational; use float arithmetic or the constant and two-value families".into());
        }
        if self.suites.is_empty() {
            return bad("suites must not be empty".into());
        }
        if self.parallelism == Some(0) {
            return bad("parallelism must be at least 1".into());
        }
        self.volatility()?;
        for n in [&self.weight.params.high, &self.weight.params.low].into_iter().flatten() {
            if n.scalar::<f64>()? <= 0.0 {
                return bad("two-value weights must be positive".into());
            }
        }
        Ok(())
    }

    /// Explicit `outputDir`, else the environment variable, else
    /// `martsparse-out`.
    pub fn resolve_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("martsparse-out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: Config = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(Config::default()).unwrap();
        v["tirals"] = 3.into();
        assert!(serde_json::from_value::<Config>(v).is_err());
        let mut v = serde_json::to_value(Config::default()).unwrap();
        v["weight"]["params"] = serde_json::json!({"alfa": 0.5});
        assert!(serde_json::from_value::<Config>(v).is_err());
    }

    #[test]
    fn numbers_accept_fractions() {
        let v: Vec<Num> = serde_json::from_str(r#"["4/3", 2, 1.5]"#).unwrap();
        let e: Vec<Exponent> = v.iter().map(|n| n.exponent().unwrap()).collect();
        assert_eq!(e, vec![Exponent::new(4, 3), Exponent::integer(2), Exponent::new(3, 2)]);
    }

    #[test]
    fn validation_catches_domain_errors() {
        let mut cfg = Config::default();
        cfg.p = vec![Num::Int(1)];
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.weight.params.alpha = Some(Num::Int(5));
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.tree.kind = TreeKind::Jump;
        assert!(cfg.validate().is_err());
        cfg.tree.epsilon = Some(Num::Text("1/1024".into()));
        cfg.validate().unwrap();
    }
}
