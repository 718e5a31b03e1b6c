use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_KNN_K: usize = 10;

/// A detector, named the way configs and CSV headers spell it.
///
/// | spelling | score |
/// |---|---|
/// | `msp`, `maxlogit`, `energy`, `kl` | softmax-head confidences |
/// | `mahalanobis`, `knn[:k]`, `ssd[:clusters]`, `residual[:dim]` | negated distances to the ID bank |
/// | `l1`, `lp:<p>`, `invl0`, `nan`, `embedding` | norms of `a^(L)` or `g(x)` |
/// | `hidden` | largest binarized hidden logit at the last hidden layer |
/// | `fused:<distance>` | distance divided by NAN |
/// | `react:<kind>` | any kind evaluated on the clipped trace |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScoreKind {
    Msp,
    MaxLogit,
    Energy,
    KlUniform,
    Mahalanobis,
    Knn { k: usize },
    /// `None` picks the bank's default cluster count.
    Ssd { clusters: Option<usize> },
    /// `None` picks a quarter of the feature dimension.
    Residual { dim: Option<usize> },
    L1,
    Lp { p: f64 },
    InvL0,
    Nan,
    EmbeddingMagnitude,
    HiddenConfidence,
    Fused(Box<ScoreKind>),
    React(Box<ScoreKind>),
}

impl ScoreKind {
    pub fn is_distance(&self) -> bool {
        matches!(
            self,
            ScoreKind::Mahalanobis | ScoreKind::Knn { .. } | ScoreKind::Ssd { .. } | ScoreKind::Residual { .. }
        )
    }

    /// The kind with any ReAct or fusion wrappers removed.
    pub fn innermost(&self) -> &ScoreKind {
        match self {
            ScoreKind::Fused(b) | ScoreKind::React(b) => b.innermost(),
            k => k,
        }
    }

    pub fn uses_react(&self) -> bool {
        matches!(self, ScoreKind::React(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScoreKind::Knn { k: 0 } => Err(invalid("knn needs k >= 1")),
            ScoreKind::Ssd { clusters: Some(0) } => Err(invalid("ssd needs at least one cluster")),
            ScoreKind::Residual { dim: Some(0) } => Err(invalid("residual needs dim >= 1")),
            ScoreKind::Lp { p } if !(*p > 0.0) => Err(invalid(format!("lp needs p > 0, got {p}"))),
            ScoreKind::Fused(b) if !b.is_distance() => {
                Err(invalid(format!("cannot fuse `{b}`: fusion takes a distance score")))
            }
            ScoreKind::React(b) if b.uses_react() => Err(invalid("react cannot be nested")),
            ScoreKind::Fused(b) | ScoreKind::React(b) => b.validate(),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreKind::Msp => f.write_str("msp"),
            ScoreKind::MaxLogit => f.write_str("maxlogit"),
            ScoreKind::Energy => f.write_str("energy"),
            ScoreKind::KlUniform => f.write_str("kl"),
            ScoreKind::Mahalanobis => f.write_str("mahalanobis"),
            ScoreKind::Knn { k } => write!(f, "knn:{k}"),
            ScoreKind::Ssd { clusters: None } => f.write_str("ssd"),
            ScoreKind::Ssd { clusters: Some(c) } => write!(f, "ssd:{c}"),
            ScoreKind::Residual { dim: None } => f.write_str("residual"),
            ScoreKind::Residual { dim: Some(d) } => write!(f, "residual:{d}"),
            ScoreKind::L1 => f.write_str("l1"),
            ScoreKind::Lp { p } if p.is_infinite() => f.write_str("lp:inf"),
            ScoreKind::Lp { p } => write!(f, "lp:{p}"),
            ScoreKind::InvL0 => f.write_str("invl0"),
            ScoreKind::Nan => f.write_str("nan"),
            ScoreKind::EmbeddingMagnitude => f.write_str("embedding"),
            ScoreKind::HiddenConfidence => f.write_str("hidden"),
            ScoreKind::Fused(b) => write!(f, "fused:{b}"),
            ScoreKind::React(b) => write!(f, "react:{b}"),
        }
    }
}

fn parse_count(kind: &str, arg: &str) -> Result<usize> {
    arg.parse()
        .map_err(|_| invalid(format!("`{kind}` expects a count, got `{arg}`")))
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let kind = match (head.to_ascii_lowercase().as_str(), arg) {
            ("msp", None) => ScoreKind::Msp,
            ("maxlogit", None) => ScoreKind::MaxLogit,
            ("energy", None) => ScoreKind::Energy,
            ("kl", None) => ScoreKind::KlUniform,
            ("mahalanobis", None) => ScoreKind::Mahalanobis,
            ("knn", None) => ScoreKind::Knn { k: DEFAULT_KNN_K },
            ("knn", Some(a)) => ScoreKind::Knn { k: parse_count("knn", a)? },
            ("ssd", a) => ScoreKind::Ssd {
                clusters: a.map(|a| parse_count("ssd", a)).transpose()?,
            },
            ("residual", a) => ScoreKind::Residual {
                dim: a.map(|a| parse_count("residual", a)).transpose()?,
            },
            ("l1", None) => ScoreKind::L1,
            ("lp", Some(a)) => {
                let p = if a.eq_ignore_ascii_case("inf") {
                    f64::INFINITY
                } else {
                    a.parse()
                        .map_err(|_| invalid(format!("`lp` expects an exponent, got `{a}`")))?
                };
                ScoreKind::Lp { p }
            }
            ("invl0", None) => ScoreKind::InvL0,
            ("nan", None) => ScoreKind::Nan,
            ("embedding", None) => ScoreKind::EmbeddingMagnitude,
            ("hidden", None) => ScoreKind::HiddenConfidence,
            ("fused", Some(a)) => ScoreKind::Fused(Box::new(a.parse()?)),
            ("react", Some(a)) => ScoreKind::React(Box::new(a.parse()?)),
            _ => return Err(invalid(format!("unknown score kind `{s}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl TryFrom<String> for ScoreKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScoreKind> for String {
    fn from(k: ScoreKind) -> String {
        k.to_string()
    }
}
