//! Vector families the resolvent evaluators understand: basis vectors,
//! finite nonnegative combinations, the product tail vectors, the
//! geometric/factorial `x_r` family, and two-block bilateral stacks.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VectorError {
    #[error("cannot parse vector spec: {0}")]
    Parse(String),
    #[error("invalid vector spec: {0}")]
    Invalid(String),
}

/// A vector given by family and parameters rather than raw coefficients.
///
/// Coefficients of every family are nonnegative reals; evaluation at real
/// `z > 0` then keeps the whole resolvent series nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorSpec {
    /// Canonical basis vector `e_n`.
    Basis(u64),
    /// Finitely supported `sum c_i e_(n_i)` with `c_i >= 0`, sorted by index.
    Finite(Vec<(u64, f64)>),
    /// `alpha_n = prod_{j=1}^{m} w_(n+j)`: the m-fold product tail of the
    /// weight sequence, summable when the products decay fast enough.
    TailVector { m: u32 },
    /// `a_0 = 1`, `a_n = r^n / ((n+m)! prod_{j=1}^{n} w_j)` for `0 < r <= 1`.
    XrFamily { r: f64, m: u32 },
    /// Two-block vector for the bilateral shift: `top` lives on the
    /// backward block (indices 0, -1, -2, ...), `bottom` on the forward
    /// block (indices 1, 2, ...), each in its block's natural coordinates.
    BilateralStack { top: Box<VectorSpec>, bottom: Box<VectorSpec> },
}

impl VectorSpec {
    pub fn zero() -> Self {
        VectorSpec::Finite(Vec::new())
    }

    pub fn stack(top: VectorSpec, bottom: VectorSpec) -> Result<Self, VectorError> {
        if matches!(top, VectorSpec::BilateralStack { .. })
            || matches!(bottom, VectorSpec::BilateralStack { .. })
        {
            return Err(VectorError::Invalid("stacks cannot nest".into()));
        }
        Ok(VectorSpec::BilateralStack { top: Box::new(top), bottom: Box::new(bottom) })
    }

    pub fn validate(&self) -> Result<(), VectorError> {
        match self {
            VectorSpec::Basis(_) => Ok(()),
            VectorSpec::Finite(cs) => {
                if cs.iter().any(|&(_, c)| c < 0.0 || !c.is_finite()) {
                    return Err(VectorError::Invalid("finite coefficients must be >= 0".into()));
                }
                if cs.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(VectorError::Invalid("finite indices must be strictly increasing".into()));
                }
                Ok(())
            }
            VectorSpec::TailVector { m } => {
                if *m < 1 {
                    return Err(VectorError::Invalid("tail vector needs m >= 1".into()));
                }
                Ok(())
            }
            VectorSpec::XrFamily { r, m } => {
                if !(*r > 0.0 && *r <= 1.0) {
                    return Err(VectorError::Invalid(format!("xr family needs 0 < r <= 1, got {r}")));
                }
                if *m < 1 {
                    return Err(VectorError::Invalid("xr family needs m >= 1".into()));
                }
                Ok(())
            }
            VectorSpec::BilateralStack { top, bottom } => {
                top.validate()?;
                bottom.validate()
            }
        }
    }

    /// Whether the spec is identically zero.
    pub fn is_zero(&self) -> bool {
        match self {
            VectorSpec::Finite(cs) => cs.iter().all(|&(_, c)| c == 0.0),
            VectorSpec::BilateralStack { top, bottom } => top.is_zero() && bottom.is_zero(),
            _ => false,
        }
    }

    /// First index carrying a nonzero coefficient, for finite-support specs.
    pub fn first_support(&self) -> Option<u64> {
        match self {
            VectorSpec::Basis(n) => Some(*n),
            VectorSpec::Finite(cs) => cs.iter().find(|&&(_, c)| c > 0.0).map(|&(n, _)| n),
            VectorSpec::TailVector { .. } | VectorSpec::XrFamily { .. } => Some(0),
            VectorSpec::BilateralStack { .. } => None,
        }
    }

    /// Largest support index, when the support is finite.
    pub fn last_support(&self) -> Option<u64> {
        match self {
            VectorSpec::Basis(n) => Some(*n),
            VectorSpec::Finite(cs) => cs.iter().rev().find(|&&(_, c)| c > 0.0).map(|&(n, _)| n),
            _ => None,
        }
    }

    /// Finite-support coefficient list `(index, value)`, if applicable.
    pub fn finite_coefficients(&self) -> Option<Vec<(u64, f64)>> {
        match self {
            VectorSpec::Basis(n) => Some(vec![(*n, 1.0)]),
            VectorSpec::Finite(cs) => {
                Some(cs.iter().copied().filter(|&(_, c)| c > 0.0).collect())
            }
            _ => None,
        }
    }
}

impl fmt::Display for VectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorSpec::Basis(n) => write!(f, "e:{n}"),
            VectorSpec::Finite(cs) if cs.is_empty() => write!(f, "zero"),
            VectorSpec::Finite(cs) => {
                write!(f, "finite:[")?;
                for (i, (n, c)) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({n},{c})")?;
                }
                write!(f, "]")
            }
            VectorSpec::TailVector { m } => write!(f, "tail:m={m}"),
            VectorSpec::XrFamily { r, m } => write!(f, "xr:r={r},m={m}"),
            VectorSpec::BilateralStack { top, bottom } => {
                write!(f, "stack:top={top};bottom={bottom}")
            }
        }
    }
}

impl FromStr for VectorSpec {
    type Err = VectorError;

    /// Accepts `e:3`, `finite:[(0,1),(2,0.5)]`, `tail:m=4`,
    /// `xr:r=0.5,m=5`, `stack:top=...;bottom=...`, and `zero`.
    fn from_str(s: &str) -> Result<Self, VectorError> {
        let bad = |m: &str| VectorError::Parse(format!("{m} in {s:?}"));
        if s == "zero" {
            return Ok(VectorSpec::zero());
        }
        let (head, rest) = s.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let spec = match head {
            "e" => VectorSpec::Basis(rest.parse().map_err(|_| bad("bad basis index"))?),
            "finite" => {
                let inner = rest
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| bad("expected [..]"))?;
                let mut cs = Vec::new();
                if !inner.trim().is_empty() {
                    for part in inner.split("),(") {
                        let part = part.trim_start_matches('(').trim_end_matches(')');
                        let (n, c) = part.split_once(',').ok_or_else(|| bad("expected (n,c)"))?;
                        cs.push((
                            n.trim().parse().map_err(|_| bad("bad index"))?,
                            c.trim().parse().map_err(|_| bad("bad coefficient"))?,
                        ));
                    }
                }
                cs.sort_by_key(|&(n, _)| n);
                VectorSpec::Finite(cs)
            }
            "tail" => {
                let m = rest
                    .strip_prefix("m=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("expected m=<int>"))?;
                VectorSpec::TailVector { m }
            }
            "xr" => {
                let (rs, ms) = rest.split_once(',').ok_or_else(|| bad("expected r=..,m=.."))?;
                let r = rs
                    .strip_prefix("r=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("expected r=<real>"))?;
                let m = ms
                    .strip_prefix("m=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("expected m=<int>"))?;
                VectorSpec::XrFamily { r, m }
            }
            "stack" => {
                let rest = rest.strip_prefix("top=").ok_or_else(|| bad("expected top="))?;
                let (top, bottom) =
                    rest.split_once(";bottom=").ok_or_else(|| bad("expected ;bottom="))?;
                VectorSpec::stack(top.parse()?, bottom.parse()?)?
            }
            _ => return Err(bad("unknown vector family")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        for s in [
            "e:3",
            "finite:[(0,1),(2,0.5)]",
            "tail:m=4",
            "xr:r=0.5,m=5",
            "stack:top=xr:r=0.5,m=5;bottom=zero",
            "zero",
        ] {
            let v: VectorSpec = s.parse().unwrap();
            assert_eq!(v.to_string(), s, "roundtrip failed for {s}");
        }
    }

    #[test]
    fn xr_range_validated() {
        assert!("xr:r=0,m=3".parse::<VectorSpec>().is_err());
        assert!("xr:r=1.5,m=3".parse::<VectorSpec>().is_err());
        assert!("xr:r=1,m=0".parse::<VectorSpec>().is_err());
    }

    #[test]
    fn negative_coefficients_rejected() {
        assert!("finite:[(0,-1)]".parse::<VectorSpec>().is_err());
    }

    #[test]
    fn support_bounds() {
        let v: VectorSpec = "finite:[(2,0.5),(7,1)]".parse().unwrap();
        assert_eq!(v.first_support(), Some(2));
        assert_eq!(v.last_support(), Some(7));
        assert!(!v.is_zero());
        assert!(VectorSpec::zero().is_zero());
    }

    #[test]
    fn stacks_cannot_nest() {
        let inner = VectorSpec::stack(VectorSpec::Basis(0), VectorSpec::zero()).unwrap();
        assert!(VectorSpec::stack(inner, VectorSpec::zero()).is_err());
    }
}
