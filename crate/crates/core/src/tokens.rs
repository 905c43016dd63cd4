use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Fixed-point token amount in base units (`1 token = 10^9 units`), so that
/// a `1e-9` token micropayment is one unit and ledger arithmetic is exact.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Tokens(pub u64);

impl Tokens {
    pub const ZERO: Tokens = Tokens(0);
    pub const UNITS_PER_TOKEN: u64 = 1_000_000_000;

    /// Round to the nearest base unit; negative and NaN inputs map to zero.
    pub fn from_f64(tokens: f64) -> Tokens {
        if !(tokens > 0.0) {
            return Tokens::ZERO;
        }
        Tokens((tokens * Self::UNITS_PER_TOKEN as f64).round() as u64)
    }

    /// Round up to the next base unit.
    pub fn from_f64_ceil(tokens: f64) -> Tokens {
        if !(tokens > 0.0) {
            return Tokens::ZERO;
        }
        Tokens((tokens * Self::UNITS_PER_TOKEN as f64).ceil() as u64)
    }

    pub fn whole(tokens: u64) -> Tokens {
        Tokens(tokens * Self::UNITS_PER_TOKEN)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::UNITS_PER_TOKEN as f64
    }

    pub fn checked_sub(self, rhs: Tokens) -> Option<Tokens> {
        self.0.checked_sub(rhs.0).map(Tokens)
    }

    pub fn saturating_sub(self, rhs: Tokens) -> Tokens {
        Tokens(self.0.saturating_sub(rhs.0))
    }

    pub fn min(self, rhs: Tokens) -> Tokens {
        Tokens(self.0.min(rhs.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// `floor(self * fraction)`, with `fraction` clamped to [0, 1].
    pub fn fraction(self, fraction: f64) -> Tokens {
        let f = fraction.clamp(0.0, 1.0);
        Tokens(((self.0 as f64) * f).floor() as u64).min(self)
    }
}

impl Add for Tokens {
    type Output = Tokens;
    fn add(self, rhs: Tokens) -> Tokens {
        Tokens(self.0.checked_add(rhs.0).expect("token overflow"))
    }
}

impl AddAssign for Tokens {
    fn add_assign(&mut self, rhs: Tokens) {
        *self = *self + rhs;
    }
}

impl Sum for Tokens {
    fn sum<I: Iterator<Item = Tokens>>(iter: I) -> Tokens {
        iter.fold(Tokens::ZERO, Add::add)
    }
}

impl fmt::Display for Tokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:09}",
            self.0 / Self::UNITS_PER_TOKEN,
            self.0 % Self::UNITS_PER_TOKEN
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(Tokens::from_f64(1e-9), Tokens(1));
        assert_eq!(Tokens::from_f64(-3.0), Tokens::ZERO);
        assert_eq!(Tokens::from_f64(f64::NAN), Tokens::ZERO);
        assert_eq!(Tokens::whole(2).to_string(), "2.000000000");
        assert_eq!(Tokens(10).fraction(0.5), Tokens(5));
        assert_eq!(Tokens(10).fraction(7.0), Tokens(10));
    }
}
