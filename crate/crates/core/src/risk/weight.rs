use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Shape of the weight `g` in `λ_g(A) = ∫_A g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    /// `g ≡ 1`, `p = 0`.
    Unit,
    /// `g = f`, `p = 0`.
    Density,
    /// `g = |f − c|`, `p = 1`.
    Excess,
    /// `g = |f − c|^q`, `p = q`.
    Power(f64),
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKind::Unit => f.write_str("unit"),
            WeightKind::Density => f.write_str("density"),
            WeightKind::Excess => f.write_str("excess"),
            WeightKind::Power(q) => write!(f, "power:{q}"),
        }
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    /// `unit`, `density`, `excess` or `power:<q>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "unit" | "one" => Ok(WeightKind::Unit),
            "density" => Ok(WeightKind::Density),
            "excess" => Ok(WeightKind::Excess),
            other => other
                .strip_prefix("power:")
                .and_then(|q| q.parse::<f64>().ok())
                .filter(|q| *q > 0.0 && q.is_finite())
                .map(WeightKind::Power)
                .ok_or_else(|| Error::arg(format!("unknown weight `{s}`"))),
        }
    }
}

/// A weight `g` at level `c`, with its boundary exponent `p` and the
/// boundary factor `g^(p)` for which `g(x + s n) ≈ g^(p)(x) |s|^p` near `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFunction {
    pub kind: WeightKind,
    pub level: f64,
}

impl WeightFunction {
    pub fn new(kind: WeightKind, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::arg(format!("level must be positive, got {level}")));
        }
        if let WeightKind::Power(q) = kind {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::arg(format!("power weight needs q > 0, got {q}")));
            }
        }
        Ok(Self { kind, level })
    }

    pub fn unit(level: f64) -> Result<Self> {
        Self::new(WeightKind::Unit, level)
    }

    pub fn density(level: f64) -> Result<Self> {
        Self::new(WeightKind::Density, level)
    }

    pub fn excess(level: f64) -> Result<Self> {
        Self::new(WeightKind::Excess, level)
    }

    pub fn power(level: f64, q: f64) -> Result<Self> {
        Self::new(WeightKind::Power(q), level)
    }

    pub fn p(&self) -> f64 {
        match self.kind {
            WeightKind::Unit | WeightKind::Density => 0.0,
            WeightKind::Excess => 1.0,
            WeightKind::Power(q) => q,
        }
    }

    /// `g` at a point where the true density equals `f`.
    pub fn value(&self, f: f64) -> f64 {
        match self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::Density => f,
            WeightKind::Excess => (f - self.level).abs(),
            WeightKind::Power(q) => (f - self.level).abs().powf(q),
        }
    }

    /// `g^(p)` at a boundary point with `‖∇f‖ = grad_norm`.
    pub fn boundary_factor(&self, grad_norm: f64) -> f64 {
        match self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::Density => self.level,
            WeightKind::Excess => grad_norm,
            WeightKind::Power(q) => grad_norm.powf(q),
        }
    }
}
