//! Decimal odds to margin-corrected implied probabilities.
//!
//! The correction is the basic multiplicative one: every inverse odd is
//! divided by the booksum, so the overround is spread proportionally.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Decimal odds for a home win, a draw and an away win.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsTriple {
    pub home: f64,
    pub draw: f64,
    pub away: f64,
}

/// Probabilities for home win, draw and away win.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbTriple {
    pub home: f64,
    pub draw: f64,
    pub away: f64,
}

impl ProbTriple {
    pub fn sum(&self) -> f64 {
        self.home + self.draw + self.away
    }
}

impl OddsTriple {
    pub fn new(home: f64, draw: f64, away: f64) -> Self {
        Self { home, draw, away }
    }

    fn check(&self) -> Result<()> {
        for (label, o) in [
            ("home", self.home),
            ("draw", self.draw),
            ("away", self.away),
        ] {
            if !(o > 1.0) || !o.is_finite() {
                return Err(Error::Domain(format!(
                    "decimal odds must be finite and > 1, got {label} = {o}"
                )));
            }
        }
        Ok(())
    }

    /// Sum of inverse odds.
    pub fn booksum(&self) -> f64 {
        1.0 / self.home + 1.0 / self.draw + 1.0 / self.away
    }

    /// Odds whose margin-corrected probabilities are `probs`, priced with the
    /// given overround. Used by the simulator and fixtures.
    pub fn from_probs(probs: ProbTriple, margin: f64) -> Result<Self> {
        let scale = 1.0 + margin;
        let odds = Self::new(
            1.0 / (probs.home * scale),
            1.0 / (probs.draw * scale),
            1.0 / (probs.away * scale),
        );
        odds.check()?;
        Ok(odds)
    }
}

/// `improb_j = (1/O_j) / Σ_k 1/O_k` for j in home, draw, away.
pub fn implied_probs(odds: &OddsTriple) -> Result<ProbTriple> {
    odds.check()?;
    let inv = [1.0 / odds.home, 1.0 / odds.draw, 1.0 / odds.away];
    let total: f64 = inv.iter().sum();
    Ok(ProbTriple {
        home: inv[0] / total,
        draw: inv[1] / total,
        away: inv[2] / total,
    })
}

/// Bookmaker margin `Σ 1/O_j − 1`. Data-quality diagnostic, no validation.
pub fn margin(odds: &OddsTriple) -> f64 {
    odds.booksum() - 1.0
}
