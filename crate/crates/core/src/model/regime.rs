//! Partition of the `(m0, m1)` quadrant into the regimes D1–D5.
//!
//! The boundaries follow from the hypotheses under which each asymptotic
//! behaviour holds:
//!
//! | regime | condition |
//! |--------|-----------|
//! | D1 | `m0 + m1 < 1` |
//! | D2 | `m0 + m1 = 1` |
//! | D3 | `m0 + m1 > 1` and `m0 ln m0 + m1 ln m1 < 0` |
//! | D4 | `m0 + m1 > 1`, `m0 m1 <= 1` and `m0 ln m0 + m1 ln m1 >= 0` |
//! | D5 | `m0 m1 > 1` |
//!
//! Convexity of `x ln x` gives `m0 ln m0 + m1 ln m1 >= 2 m ln m` with
//! `m = (m0 + m1) / 2`, so D3 forces `m < 1`; AM-GM gives `m >= sqrt(m0 m1)`,
//! so D5 forces `m > 1`. Together with `m0 m1 <= 1` being implied by a
//! negative `xlogx` these five sets partition the open quadrant.
//!
//! The line `m0 m1 = 1` is attributed to D4 (boundary of D5).

use std::fmt;

use serde::Serialize;

use super::ModelError;

pub const DEFAULT_REGIME_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RegimeLabel {
    D1,
    D2,
    D3,
    D4,
    D5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum D4Sublabel {
    Interior,
    /// `m0 ln m0 + m1 ln m1 = 0`
    BoundaryIntermediate,
    /// `m0 m1 = 1`
    BoundarySupercritical,
}

/// A regime boundary lying within ten times the classification tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    SumMeanOne,
    ProductMeanOne,
    XlogxZero,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Regime {
    pub label: RegimeLabel,
    pub sublabel: Option<D4Sublabel>,
    pub boundary_proximity: Vec<Boundary>,
}

impl Regime {
    /// Strongly subcritical line process (D1, D2, D3): the Yaglom limit
    /// exists and the survival probability decays like `m^n`.
    pub fn is_strongly_subcritical(&self) -> bool {
        matches!(self.label, RegimeLabel::D1 | RegimeLabel::D2 | RegimeLabel::D3)
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sublabel {
            None => write!(f, "{}", self.label),
            Some(D4Sublabel::Interior) => write!(f, "{} (interior)", self.label),
            Some(D4Sublabel::BoundaryIntermediate) => {
                write!(f, "{} (boundary_intermediate)", self.label)
            }
            Some(D4Sublabel::BoundarySupercritical) => {
                write!(f, "{} (boundary_supercritical)", self.label)
            }
        }
    }
}

pub fn classify_regime(m0: f64, m1: f64, tol: f64) -> Result<Regime, ModelError> {
    if !(m0 > 0.0 && m1 > 0.0) || !m0.is_finite() || !m1.is_finite() {
        return Err(ModelError::NonPositiveMean { m0, m1 });
    }
    let sum = m0 + m1;
    let prod = m0 * m1;
    let xlogx = m0 * m0.ln() + m1 * m1.ln();

    let (label, sublabel) = if sum < 1.0 - tol {
        (RegimeLabel::D1, None)
    } else if (sum - 1.0).abs() <= tol {
        (RegimeLabel::D2, None)
    } else if prod > 1.0 + tol {
        (RegimeLabel::D5, None)
    } else if (prod - 1.0).abs() <= tol {
        (RegimeLabel::D4, Some(D4Sublabel::BoundarySupercritical))
    } else if xlogx < -tol {
        (RegimeLabel::D3, None)
    } else if xlogx.abs() <= tol {
        (RegimeLabel::D4, Some(D4Sublabel::BoundaryIntermediate))
    } else {
        (RegimeLabel::D4, Some(D4Sublabel::Interior))
    };

    let near = 10.0 * tol;
    let mut boundary_proximity = Vec::new();
    if (sum - 1.0).abs() <= near {
        boundary_proximity.push(Boundary::SumMeanOne);
    }
    if (prod - 1.0).abs() <= near {
        boundary_proximity.push(Boundary::ProductMeanOne);
    }
    if xlogx.abs() <= near {
        boundary_proximity.push(Boundary::XlogxZero);
    }
    Ok(Regime { label, sublabel, boundary_proximity })
}
