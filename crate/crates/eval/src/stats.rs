//! Paired comparisons.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

/// Outcome of a one-sided sign test that `a` beats `b`. Ties are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    pub p_value: f64,
}

impl SignTest {
    pub fn significant(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Pairs differing by at most `tie_eps` count as ties.
pub fn sign_test(a: &[f64], b: &[f64], tie_eps: f64) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired samples");
    let (mut wins, mut losses, mut ties) = (0u64, 0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() <= tie_eps {
            ties += 1;
        } else if x > y {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    SignTest { wins, losses, ties, p_value: sign_p_value(wins, losses) }
}

/// P(X >= wins) for X ~ Binomial(wins + losses, 1/2); 1 when every pair tied.
pub fn sign_p_value(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    if wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    (1.0 - b.cdf(wins - 1)).clamp(0.0, 1.0)
}
