//! Mixed hyperparameter spaces with one level of conditional activation.
//!
//! Every parameter owns one coordinate of the encoded unit cube used by the
//! population-based tuners:
//!
//! * real: affine map of the sampling interval onto `[0, 1]`;
//! * integer: affine map of `[lo, hi]`, rounded on decode;
//! * categorical and boolean: equal-width bins, encoded at the bin midpoint.
//!
//! Inactive parameters are encoded at their default's position and dropped
//! again on decode.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Learner;

/// Real parameters are sampled from the closed interval shrunk by this much
/// at each end, keeping draws strictly inside the declared open interval.
pub const REAL_MARGIN: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpaceError {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("encoded vector has {found} coordinates, space has {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("unknown learner {0:?}")]
    UnknownLearner(String),
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Violation>),
}

/// A hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Level(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Level(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    /// Open interval `(lo, hi)`.
    Real { lo: f64, hi: f64 },
    /// Closed interval `[lo, hi]`.
    Integer { lo: i64, hi: i64 },
    Categorical { levels: Vec<String> },
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub equals: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    pub default: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    /// Value outside the range that asks the learner for its built-in
    /// behaviour. Accepted by validation, never sampled or decoded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unset: Option<Value>,
}

impl ParamSpec {
    pub fn real(name: &str, lo: f64, hi: f64, default: f64) -> Self {
        Self::new(name, ParamKind::Real { lo, hi }, Value::Real(default))
    }

    pub fn integer(name: &str, lo: i64, hi: i64, default: i64) -> Self {
        Self::new(name, ParamKind::Integer { lo, hi }, Value::Int(default))
    }

    pub fn boolean(name: &str, default: bool) -> Self {
        Self::new(name, ParamKind::Boolean, Value::Bool(default))
    }

    pub fn categorical(name: &str, levels: &[&str], default: &str) -> Self {
        Self::new(
            name,
            ParamKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            Value::Level(default.to_string()),
        )
    }

    fn new(name: &str, kind: ParamKind, default: Value) -> Self {
        Self {
            name: name.to_string(),
            kind,
            default,
            condition: None,
            unset: None,
        }
    }

    pub fn when(mut self, parent: &str, equals: Value) -> Self {
        self.condition = Some(Condition {
            parent: parent.to_string(),
            equals,
        });
        self
    }

    fn with_unset(mut self, value: Value) -> Self {
        self.unset = Some(value);
        self
    }

    pub(crate) fn level_count(&self) -> usize {
        match &self.kind {
            ParamKind::Categorical { levels } => levels.len(),
            ParamKind::Boolean => 2,
            _ => 0,
        }
    }

    /// Range/level check only; activation is the caller's concern.
    fn check(&self, value: &Value) -> Option<String> {
        if self.unset.as_ref() == Some(value) {
            return None;
        }
        match (&self.kind, value) {
            (ParamKind::Real { lo, hi }, Value::Real(v)) => {
                (!(v > lo && v < hi)).then(|| format!("{} out of ({lo},{hi})", self.name))
            }
            (ParamKind::Integer { lo, hi }, Value::Int(v)) => {
                (!(v >= lo && v <= hi)).then(|| format!("{} out of [{lo},{hi}]", self.name))
            }
            (ParamKind::Categorical { levels }, Value::Level(l)) => (!levels.contains(l))
                .then(|| format!("{} level {l:?} not in {{{}}}", self.name, levels.join(","))),
            (ParamKind::Boolean, Value::Bool(_)) => None,
            (kind, v) => Some(format!("{} has value {v} of the wrong type for {kind:?}", self.name)),
        }
    }

    pub(crate) fn sample(&self, rng: &mut impl Rng) -> Value {
        match &self.kind {
            ParamKind::Real { lo, hi } => {
                Value::Real(rng.gen_range(lo + REAL_MARGIN..=hi - REAL_MARGIN))
            }
            ParamKind::Integer { lo, hi } => Value::Int(rng.gen_range(*lo..=*hi)),
            ParamKind::Categorical { levels } => {
                Value::Level(levels[rng.gen_range(0..levels.len())].clone())
            }
            ParamKind::Boolean => Value::Bool(rng.gen_bool(0.5)),
        }
    }

    fn encode(&self, value: &Value) -> f64 {
        let x = match (&self.kind, value) {
            (ParamKind::Real { lo, hi }, Value::Real(v)) => {
                (v - lo - REAL_MARGIN) / (hi - lo - 2.0 * REAL_MARGIN)
            }
            (ParamKind::Integer { lo, hi }, Value::Int(v)) if hi > lo => {
                (v - lo) as f64 / (hi - lo) as f64
            }
            (ParamKind::Integer { .. }, Value::Int(_)) => 0.0,
            (ParamKind::Categorical { levels }, Value::Level(l)) => {
                let i = levels.iter().position(|x| x == l).unwrap_or(0);
                (i as f64 + 0.5) / levels.len() as f64
            }
            (ParamKind::Boolean, Value::Bool(b)) => {
                if *b {
                    0.75
                } else {
                    0.25
                }
            }
            // Wrong-typed or sentinel values sit at the default's position.
            _ => return self.encode(&self.default),
        };
        x.clamp(0.0, 1.0)
    }

    fn decode(&self, x: f64) -> Value {
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        match &self.kind {
            ParamKind::Real { lo, hi } => {
                let v = lo + REAL_MARGIN + x * (hi - lo - 2.0 * REAL_MARGIN);
                Value::Real(v.clamp(lo + REAL_MARGIN, hi - REAL_MARGIN))
            }
            ParamKind::Integer { lo, hi } => {
                Value::Int(lo + (x * (hi - lo) as f64).round() as i64)
            }
            ParamKind::Categorical { levels } => Value::Level(levels[bin(x, levels.len())].clone()),
            ParamKind::Boolean => Value::Bool(bin(x, 2) == 1),
        }
    }
}

/// Equal-width bin of `x` among `n`; exact interior edges go to the lower bin.
fn bin(x: f64, n: usize) -> usize {
    let t = x * n as f64;
    let i = if t > 0.0 && t.fract() == 0.0 {
        t as usize - 1
    } else {
        t as usize
    };
    i.min(n - 1)
}

/// A problem constraint broken by a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Concrete assignment of every active parameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(BTreeMap<String, Value>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: Value) -> &mut Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.set(name, value);
        self
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn real(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            Value::Real(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        match self.get(name)? {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn flag(&self, name: &str) -> Option<bool> {
        match self.get(name)? {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn level(&self, name: &str) -> Option<&str> {
        match self.get(name)? {
            Value::Level(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Point of the encoded unit cube, one coordinate per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodedConfig(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub name: String,
    params: Vec<ParamSpec>,
}

impl ParamSpace {
    /// Checks name uniqueness, ranges, defaults and that every condition
    /// refers to an earlier, unconditional parameter.
    pub fn new(name: impl Into<String>, params: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        let bad = |m: String| Err(SpaceError::InvalidSpace(m));
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return bad(format!("duplicate parameter {}", p.name));
            }
            match &p.kind {
                ParamKind::Real { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                    return bad(format!("{}: empty interval ({lo},{hi})", p.name))
                }
                // Integer ranges may collapse to a single value.
                ParamKind::Integer { lo, hi } if lo > hi => {
                    return bad(format!("{}: empty interval [{lo},{hi}]", p.name))
                }
                ParamKind::Categorical { levels } if levels.is_empty() => {
                    return bad(format!("{}: no levels", p.name))
                }
                ParamKind::Categorical { levels }
                    if levels.iter().enumerate().any(|(j, l)| levels[..j].contains(l)) =>
                {
                    return bad(format!("{}: duplicate levels", p.name))
                }
                _ => {}
            }
            if let Some(msg) = p.check(&p.default) {
                return bad(format!("default: {msg}"));
            }
            if let Some(cond) = &p.condition {
                let Some(parent) = params[..i].iter().find(|q| q.name == cond.parent) else {
                    return bad(format!(
                        "{} depends on {}, which is not declared before it",
                        p.name, cond.parent
                    ));
                };
                if parent.condition.is_some() {
                    return bad(format!("{} is nested more than one level deep", p.name));
                }
                if let Some(msg) = parent.check(&cond.equals) {
                    return bad(format!("condition of {}: {msg}", p.name));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            params,
        })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Whether `spec`'s condition holds under the (possibly partial) `config`.
    pub fn is_active(&self, spec: &ParamSpec, config: &Configuration) -> bool {
        spec.condition
            .as_ref()
            .map_or(true, |c| config.get(&c.parent) == Some(&c.equals))
    }

    pub fn defaults(&self) -> Configuration {
        let mut config = Configuration::new();
        for p in &self.params {
            if self.is_active(p, &config) {
                config.set(&p.name, p.default.clone());
            }
        }
        config
    }

    /// Applies `name=value` assignments (separated by whitespace or commas)
    /// over the defaults. Parameters switched off by a condition are
    /// dropped; newly activated ones take their default.
    pub fn parse_assignments(&self, text: &str) -> Result<Configuration, SpaceError> {
        let mut given = Configuration::new();
        let mut problems = Vec::new();
        for token in text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let Some((name, raw)) = token.split_once('=') else {
                problems.push(Violation(format!("expected name=value, got {token:?}")));
                continue;
            };
            let Some(spec) = self.param(name.trim()) else {
                problems.push(Violation(format!("unknown parameter {}", name.trim())));
                continue;
            };
            let raw = raw.trim();
            let value = match &spec.kind {
                ParamKind::Real { .. } => raw.parse().ok().map(Value::Real),
                ParamKind::Integer { .. } => raw.parse().ok().map(Value::Int),
                ParamKind::Boolean => match raw.to_ascii_lowercase().as_str() {
                    "true" | "t" | "1" | "yes" => Some(Value::Bool(true)),
                    "false" | "f" | "0" | "no" => Some(Value::Bool(false)),
                    _ => None,
                },
                ParamKind::Categorical { .. } => Some(Value::Level(raw.to_string())),
            };
            match value {
                Some(v) => {
                    given.set(&spec.name, v);
                }
                None => problems.push(Violation(format!("{}: cannot read {raw:?}", spec.name))),
            }
        }
        if !problems.is_empty() {
            return Err(SpaceError::InvalidConfig(problems));
        }
        let mut config = Configuration::new();
        for p in &self.params {
            if self.is_active(p, &config) {
                let v = given.get(&p.name).cloned().unwrap_or_else(|| p.default.clone());
                config.set(&p.name, v);
            }
        }
        self.check(&config)?;
        Ok(config)
    }

    /// Uniform draw over ranges and levels; conditional parameters are drawn
    /// only when active.
    pub fn sample(&self, rng: &mut impl Rng) -> Configuration {
        let mut config = Configuration::new();
        for p in &self.params {
            if self.is_active(p, &config) {
                let v = p.sample(rng);
                config.set(&p.name, v);
            }
        }
        config
    }

    /// Lists every range, level and activation problem. Empty means valid.
    pub fn validate(&self, config: &Configuration) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, _) in config.iter() {
            if self.param(name).is_none() {
                out.push(Violation(format!("unknown parameter {name}")));
            }
        }
        for p in &self.params {
            let active = self.is_active(p, config);
            match (config.get(&p.name), active) {
                (Some(v), true) => out.extend(p.check(v).map(Violation)),
                (Some(_), false) => out.push(Violation(format!("{} inactive", p.name))),
                (None, true) => out.push(Violation(format!("{} missing", p.name))),
                (None, false) => {}
            }
        }
        out
    }

    pub fn check(&self, config: &Configuration) -> Result<(), SpaceError> {
        let v = self.validate(config);
        if v.is_empty() {
            Ok(())
        } else {
            Err(SpaceError::InvalidConfig(v))
        }
    }

    pub fn encode(&self, config: &Configuration) -> EncodedConfig {
        EncodedConfig(
            self.params
                .iter()
                .map(|p| match config.get(&p.name) {
                    Some(v) => p.encode(v),
                    None => p.encode(&p.default),
                })
                .collect(),
        )
    }

    /// Clamps every coordinate to `[0, 1]`, decodes, then drops parameters
    /// whose condition fails.
    pub fn decode(&self, vector: &[f64]) -> Result<Configuration, SpaceError> {
        if vector.len() != self.dim() {
            return Err(SpaceError::Dimension {
                found: vector.len(),
                expected: self.dim(),
            });
        }
        let mut config = Configuration::new();
        for (p, &x) in self.params.iter().zip(vector) {
            if self.is_active(p, &config) {
                config.set(&p.name, p.decode(x));
            }
        }
        Ok(config)
    }

    /// Encoding of the default for each dimension, used for inactive
    /// coordinates.
    pub fn sentinel(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.encode(&p.default)).collect()
    }

    /// Number of distinct values along a dimension, `None` for reals.
    pub fn cardinality(&self, dim: usize) -> Option<usize> {
        let p = &self.params[dim];
        match &p.kind {
            ParamKind::Real { .. } => None,
            ParamKind::Integer { lo, hi } => Some((hi - lo + 1) as usize),
            _ => Some(p.level_count()),
        }
    }
}

/// Rounded `p^0.1` and `p^0.9`, clamped to `[1, p]`.
pub fn mtry_bounds(feature_count: usize) -> (i64, i64) {
    let p = feature_count.max(1) as f64;
    let clamp = |v: f64| (v.round() as i64).clamp(1, feature_count.max(1) as i64);
    (clamp(p.powf(0.1)), clamp(p.powf(0.9)))
}

/// The search space explored for each learner.
pub fn builtin_space(learner: Learner, feature_count: usize) -> Result<ParamSpace, SpaceError> {
    if feature_count == 0 {
        return Err(SpaceError::InvalidSpace("feature count must be at least 1".into()));
    }
    let params = match learner {
        Learner::J48 => vec![
            ParamSpec::boolean("R", false),
            ParamSpec::real("C", 0.001, 0.5, 0.25).when("R", Value::Bool(false)),
            ParamSpec::integer("M", 1, 50, 2),
            ParamSpec::integer("N", 2, 10, 3).when("R", Value::Bool(true)),
            ParamSpec::boolean("O", false),
            ParamSpec::boolean("B", false),
            ParamSpec::boolean("S", false),
            ParamSpec::boolean("A", false),
            ParamSpec::boolean("J", false),
        ],
        Learner::Cart => vec![
            ParamSpec::real("cp", 0.0001, 0.1, 0.01),
            ParamSpec::integer("minsplit", 1, 50, 20),
            ParamSpec::integer("minbucket", 1, 50, 7),
            ParamSpec::integer("maxdepth", 1, 30, 30),
            ParamSpec::categorical("usesurrogate", &["0", "1", "2"], "2"),
            ParamSpec::categorical("surrogatestyle", &["0", "1"], "0"),
        ],
        Learner::Ctree => {
            let (lo, hi) = mtry_bounds(feature_count);
            vec![
                ParamSpec::real("mincriterion", 0.9, 0.999, 0.95),
                ParamSpec::integer("minsplit", 1, 50, 20),
                ParamSpec::integer("minbucket", 1, 50, 7),
                ParamSpec::integer("mtry", lo, hi, lo).with_unset(Value::Int(0)),
                ParamSpec::integer("maxdepth", 1, 30, 30),
                ParamSpec::boolean("stump", false),
            ]
        }
    };
    let mut space = ParamSpace::new(learner.as_str(), params)?;
    if learner == Learner::Ctree {
        // mtry = 0 selects every feature, the learner's own default.
        let mtry = space.params.iter_mut().find(|p| p.name == "mtry").expect("declared");
        mtry.default = Value::Int(0);
    }
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn cart_defaults() {
        let d = builtin_space(Learner::Cart, 10).unwrap().defaults();
        assert_eq!(d.real("cp"), Some(0.01));
        assert_eq!(d.int("minsplit"), Some(20));
        assert_eq!(d.int("minbucket"), Some(7));
        assert_eq!(d.int("maxdepth"), Some(30));
        assert_eq!(d.level("usesurrogate"), Some("2"));
        assert_eq!(d.level("surrogatestyle"), Some("0"));
    }

    #[test]
    fn j48_defaults() {
        let d = builtin_space(Learner::J48, 10).unwrap().defaults();
        assert_eq!(d.real("C"), Some(0.25));
        assert_eq!(d.int("M"), Some(2));
        for b in ["R", "O", "B", "S", "A", "J"] {
            assert_eq!(d.flag(b), Some(false), "{b}");
        }
        assert!(!d.contains("N"));
    }

    #[test]
    fn ctree_mtry_bounds() {
        let s = builtin_space(Learner::Ctree, 1).unwrap();
        assert_eq!(s.param("mtry").unwrap().kind, ParamKind::Integer { lo: 1, hi: 1 });
        let s = builtin_space(Learner::Ctree, 100).unwrap();
        // 100^0.1 = 1.58, 100^0.9 = 63.1
        assert_eq!(s.param("mtry").unwrap().kind, ParamKind::Integer { lo: 2, hi: 63 });
        assert_eq!(s.defaults().int("mtry"), Some(0));
        assert!(builtin_space(Learner::Ctree, 0).is_err());
    }

    #[test]
    fn defaults_validate() {
        for l in Learner::ALL {
            for p in [1, 4, 37] {
                let s = builtin_space(l, p).unwrap();
                assert!(s.validate(&s.defaults()).is_empty(), "{l:?} p={p}");
            }
        }
    }

    #[test]
    fn j48_conditions_follow_reduced_error_flag() {
        let s = builtin_space(Learner::J48, 5).unwrap();
        let mut seen = [false; 2];
        for seed in 0..200 {
            let c = s.sample(&mut rng(seed));
            match c.flag("R").unwrap() {
                false => {
                    assert!(c.contains("C") && !c.contains("N"));
                    seen[0] = true;
                }
                true => {
                    let n = c.int("N").unwrap();
                    assert!((2..=10).contains(&n) && !c.contains("C"));
                    seen[1] = true;
                }
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn minsplit_sample_mean_in_band() {
        let s = builtin_space(Learner::Cart, 10).unwrap();
        let mut r = rng(42);
        let mean = (0..10_000)
            .map(|_| s.sample(&mut r).int("minsplit").unwrap() as f64)
            .sum::<f64>()
            / 10_000.0;
        assert!((23.5..=27.5).contains(&mean), "{mean}");
    }

    #[test]
    fn validate_reports_violations() {
        let s = builtin_space(Learner::Cart, 10).unwrap();
        let c = s.defaults().with("cp", Value::Real(0.5));
        assert_eq!(s.validate(&c), vec![Violation("cp out of (0.0001,0.1)".into())]);

        let j = builtin_space(Learner::J48, 10).unwrap();
        let c = j.defaults().with("N", Value::Int(3));
        assert_eq!(j.validate(&c), vec![Violation("N inactive".into())]);

        let mut c = s.defaults();
        c.remove("maxdepth");
        c.set("bogus", Value::Bool(true));
        let v = s.validate(&c);
        assert!(v.contains(&Violation("unknown parameter bogus".into())));
        assert!(v.contains(&Violation("maxdepth missing".into())));
        let c = s.defaults().with("minsplit", Value::Real(2.0));
        assert_eq!(s.validate(&c).len(), 1);
    }

    #[test]
    fn encode_endpoints_and_bins() {
        let s = builtin_space(Learner::Cart, 10).unwrap();
        let d = s.index_of("maxdepth").unwrap();
        let e = s.encode(&s.defaults().with("maxdepth", Value::Int(1)));
        assert_eq!(e.0[d], 0.0);
        let e = s.encode(&s.defaults().with("maxdepth", Value::Int(30)));
        assert_eq!(e.0[d], 1.0);

        let b = ParamSpace::new("b", vec![ParamSpec::boolean("flag", false)]).unwrap();
        assert_eq!(b.decode(&[0.49]).unwrap().flag("flag"), Some(false));
        assert_eq!(b.decode(&[0.51]).unwrap().flag("flag"), Some(true));
        assert_eq!(b.decode(&[0.5]).unwrap().flag("flag"), Some(false));
        assert_eq!(b.decode(&[7.0]).unwrap().flag("flag"), Some(true));
        assert_eq!(b.decode(&[-1.0]).unwrap().flag("flag"), Some(false));
        assert!(matches!(b.decode(&[0.1, 0.2]), Err(SpaceError::Dimension { found: 2, expected: 1 })));
    }

    #[test]
    fn decode_drops_inactive() {
        let s = builtin_space(Learner::J48, 3).unwrap();
        let mut x = vec![0.5; s.dim()];
        x[0] = 0.2; // R = False
        let c = s.decode(&x).unwrap();
        assert!(c.contains("C") && !c.contains("N"));
        assert!(s.validate(&c).is_empty());
    }

    #[test]
    fn invalid_spaces_rejected() {
        assert!(ParamSpace::new("x", vec![ParamSpec::real("a", 1.0, 1.0, 1.0)]).is_err());
        assert!(ParamSpace::new("x", vec![ParamSpec::integer("a", 1, 5, 9)]).is_err());
        assert!(ParamSpace::new(
            "x",
            vec![ParamSpec::integer("a", 1, 5, 2).when("b", Value::Bool(true)), ParamSpec::boolean("b", false)]
        )
        .is_err());
        assert!(ParamSpace::new("x", vec![ParamSpec::boolean("a", false), ParamSpec::boolean("a", true)]).is_err());
    }

    #[test]
    fn space_serializes_as_records() {
        let s = builtin_space(Learner::J48, 3).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains(r#""name":"N","kind":"integer","lo":2,"hi":10,"default":3,"condition":{"parent":"R","equals":true}"#));
        let back: ParamSpace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let c = s.defaults();
        let back: Configuration = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    fn assert_round_trip(s: &ParamSpace, c: &Configuration) {
        let back = s.decode(&s.encode(c).0).unwrap();
        assert_eq!(back.len(), c.len());
        for (k, v) in c.iter() {
            match (v, back.get(k).unwrap()) {
                (Value::Real(a), Value::Real(b)) => assert!((a - b).abs() <= 1e-12, "{k}: {a} vs {b}"),
                (a, b) => assert_eq!(a, b, "{k}"),
            }
        }
    }

    #[test]
    fn thousand_cart_configs_round_trip() {
        let s = builtin_space(Learner::Cart, 10).unwrap();
        let mut r = rng(5);
        for _ in 0..1000 {
            assert_round_trip(&s, &s.sample(&mut r));
        }
    }

    proptest! {
        #[test]
        fn samples_validate_and_round_trip(seed in any::<u64>(), p in 1usize..60, which in 0usize..3) {
            let s = builtin_space(Learner::ALL[which], p).unwrap();
            let c = s.sample(&mut rng(seed));
            prop_assert!(s.validate(&c).is_empty());
            assert_round_trip(&s, &c);
            if Learner::ALL[which] == Learner::J48 {
                prop_assert!(c.contains("C") ^ c.contains("N"));
            }
        }

        #[test]
        fn any_vector_decodes_to_valid(x in proptest::collection::vec(-0.5f64..1.5, 9)) {
            let s = builtin_space(Learner::J48, 4).unwrap();
            let c = s.decode(&x).unwrap();
            prop_assert!(s.validate(&c).is_empty());
        }
    }

    #[test]
    fn ten_thousand_samples_validate() {
        for l in Learner::ALL {
            let s = builtin_space(l, 12).unwrap();
            let mut r = rng(11);
            for _ in 0..10_000 {
                assert!(s.validate(&s.sample(&mut r)).is_empty());
            }
        }
    }

    #[test]
    fn assignments_over_defaults() {
        let space = builtin_space(Learner::J48, 4).unwrap();
        let c = space.parse_assignments("R=true, M=5").unwrap();
        assert_eq!(c.flag("R"), Some(true));
        assert_eq!(c.int("M"), Some(5));
        assert_eq!(c.int("N"), Some(3));
        assert!(!c.contains("C"));
        assert_eq!(space.parse_assignments("").unwrap(), space.defaults());
        assert!(space.parse_assignments("M=0").is_err());
        assert!(space.parse_assignments("Q=1").is_err());
        assert!(space.parse_assignments("M").is_err());
    }
}
