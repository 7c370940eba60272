//! Damerau-Levenshtein distance (restricted / optimal-string-alignment
//! variant) between DNS sequences, with configurable per-operation costs.
//!
//! Costs are non-negative rationals. Internally every cost is scaled to a
//! common integer denominator so the dynamic program runs on exact `u64`
//! arithmetic; nearest-neighbor tie-breaking therefore never depends on
//! floating-point rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DnsSequence, Token};

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A non-negative rational edit cost, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    num: u64,
    den: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("cost denominator must be nonzero")]
    ZeroDenominator,
    #[error("cost {0:?} is not a non-negative decimal")]
    BadDecimal(String),
    #[error("cost arithmetic overflow while scaling")]
    Overflow,
}

impl Cost {
    pub fn new(num: u64, den: u64) -> Result<Self, CostError> {
        if den == 0 {
            return Err(CostError::ZeroDenominator);
        }
        let g = gcd(num.max(1), den); // gcd(0, den) would be den; keep 0/1
        let g = if num == 0 { den } else { g };
        Ok(Cost {
            num: num / g,
            den: den / g,
        })
    }

    pub const fn integer(n: u64) -> Self {
        Cost { num: n, den: 1 }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::str::FromStr for Cost {
    type Err = CostError;

    /// Parses a non-negative decimal literal ("1", "0.5", "2.25") exactly.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CostError::BadDecimal(s.to_string());
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let mut num: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let mut den: u64 = 1;
        for c in frac_part.chars() {
            num = num
                .checked_mul(10)
                .and_then(|n| n.checked_add(u64::from(c as u8 - b'0')))
                .ok_or(CostError::Overflow)?;
            den = den.checked_mul(10).ok_or(CostError::Overflow)?;
        }
        Cost::new(num, den)
    }
}

/// Per-operation edit costs. The default is all-unit; tuned schedules are a
/// matter of configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSchedule {
    pub c_ins: Cost,
    pub c_del: Cost,
    pub c_sub: Cost,
    pub c_trans: Cost,
}

impl Default for CostSchedule {
    fn default() -> Self {
        CostSchedule {
            c_ins: Cost::integer(1),
            c_del: Cost::integer(1),
            c_sub: Cost::integer(1),
            c_trans: Cost::integer(1),
        }
    }
}

impl CostSchedule {
    pub fn new(c_ins: Cost, c_del: Cost, c_sub: Cost, c_trans: Cost) -> Self {
        CostSchedule {
            c_ins,
            c_del,
            c_sub,
            c_trans,
        }
    }

    /// True when transposition can never beat a delete+insert pair; a
    /// schedule violating this is legal but pointless.
    pub fn transposition_useful(&self) -> bool {
        // c_trans <= c_ins + c_del, compared exactly.
        let lhs = (self.c_trans.num as u128) * (self.c_ins.den as u128) * (self.c_del.den as u128);
        let rhs = ((self.c_ins.num as u128) * (self.c_del.den as u128)
            + (self.c_del.num as u128) * (self.c_ins.den as u128))
            * (self.c_trans.den as u128);
        lhs <= rhs
    }

    /// Scales all four costs to one common denominator.
    pub fn scaled(&self) -> Result<ScaledCosts, CostError> {
        let dens = [
            self.c_ins.den,
            self.c_del.den,
            self.c_sub.den,
            self.c_trans.den,
        ];
        let mut scale: u64 = 1;
        for d in dens {
            scale = scale
                .checked_mul(d / gcd(scale, d))
                .ok_or(CostError::Overflow)?;
        }
        let up = |c: Cost| -> Result<u64, CostError> {
            c.num.checked_mul(scale / c.den).ok_or(CostError::Overflow)
        };
        let sc = ScaledCosts {
            ins: up(self.c_ins)?,
            del: up(self.c_del)?,
            sub: up(self.c_sub)?,
            trans: up(self.c_trans)?,
            scale,
        };
        // Keep headroom so a DP over even absurdly long sequences cannot
        // overflow u64 sums.
        let max = sc.ins.max(sc.del).max(sc.sub).max(sc.trans);
        if max > u64::from(u32::MAX) {
            return Err(CostError::Overflow);
        }
        Ok(sc)
    }
}

/// Integer costs sharing one denominator (`scale`); exact distances are the
/// `u64` DP result divided by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaledCosts {
    pub ins: u64,
    pub del: u64,
    pub sub: u64,
    pub trans: u64,
    pub scale: u64,
}

/// Exact scaled distance: the minimal edit cost multiplied by `costs.scale`.
pub fn dl_distance_scaled(a: &[Token], b: &[Token], costs: &ScaledCosts) -> u64 {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m as u64 * costs.ins;
    }
    if m == 0 {
        return n as u64 * costs.del;
    }
    // Iterative dynamic program (the memoized recursion unrolled bottom-up),
    // keeping three rows: i-2 for transpositions, i-1, and the current row.
    let mut prev2 = vec![0u64; m + 1];
    let mut prev: Vec<u64> = (0..=m as u64).map(|j| j * costs.ins).collect();
    let mut cur = vec![0u64; m + 1];
    for i in 1..=n {
        cur[0] = i as u64 * costs.del;
        for j in 1..=m {
            let mut best = prev[j] + costs.del;
            let with_ins = cur[j - 1] + costs.ins;
            if with_ins < best {
                best = with_ins;
            }
            let sub_cost = if a[i - 1] == b[j - 1] { 0 } else { costs.sub };
            let with_sub = prev[j - 1] + sub_cost;
            if with_sub < best {
                best = with_sub;
            }
            if i >= 2 && j >= 2 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                let with_trans = prev2[j - 2] + costs.trans;
                if with_trans < best {
                    best = with_trans;
                }
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Minimal total cost transforming `a` into `b` with insert, delete,
/// substitute, and adjacent-transposition operations.
pub fn dl_distance(a: &DnsSequence, b: &DnsSequence, costs: &CostSchedule) -> f64 {
    let sc = costs.scaled().expect("cost schedule does not overflow");
    dl_distance_scaled(&a.tokens, &b.tokens, &sc) as f64 / sc.scale as f64
}

/// All pairwise distances, queries in rows and references in columns.
/// Rows fan out across threads; assembly preserves order, so the result is
/// identical to a sequential computation.
pub fn dl_distance_matrix(
    queries: &[DnsSequence],
    refs: &[DnsSequence],
    costs: &CostSchedule,
) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    let sc = costs.scaled().expect("cost schedule does not overflow");
    queries
        .par_iter()
        .map(|q| {
            refs.iter()
                .map(|r| dl_distance_scaled(&q.tokens, &r.tokens, &sc) as f64 / sc.scale as f64)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[Token]) -> DnsSequence {
        DnsSequence {
            tokens: tokens.to_vec(),
        }
    }

    const M468: Token = Token::Msg(468);
    const G8: Token = Token::Gap(8);

    #[test]
    fn cost_parsing() {
        assert_eq!("1".parse::<Cost>().unwrap(), Cost::integer(1));
        assert_eq!("0.5".parse::<Cost>().unwrap(), Cost::new(1, 2).unwrap());
        assert_eq!("2.25".parse::<Cost>().unwrap(), Cost::new(9, 4).unwrap());
        assert_eq!("0".parse::<Cost>().unwrap(), Cost::integer(0));
        assert!("-1".parse::<Cost>().is_err());
        assert!("x".parse::<Cost>().is_err());
        assert!(".".parse::<Cost>().is_err());
    }

    #[test]
    fn identity_is_zero() {
        let s = seq(&[M468, G8, M468]);
        assert_eq!(dl_distance(&s, &s, &CostSchedule::default()), 0.0);
    }

    #[test]
    fn single_deletion() {
        let a = seq(&[M468]);
        let b = seq(&[]);
        assert_eq!(dl_distance(&a, &b, &CostSchedule::default()), 1.0);
        assert_eq!(dl_distance(&b, &a, &CostSchedule::default()), 1.0);
    }

    #[test]
    fn transposition_half_cost() {
        let a = seq(&[Token::Msg(100), Token::Msg(200)]);
        let b = seq(&[Token::Msg(200), Token::Msg(100)]);
        let costs = CostSchedule::new(
            Cost::integer(1),
            Cost::integer(1),
            Cost::integer(1),
            "0.5".parse().unwrap(),
        );
        assert_eq!(dl_distance(&a, &b, &costs), 0.5);
    }

    #[test]
    fn tokens_compare_by_full_equality() {
        // A signed flip or a kind change is a substitution, not a match.
        let unit = CostSchedule::default();
        assert_eq!(
            dl_distance(&seq(&[Token::Msg(468)]), &seq(&[Token::Msg(-468)]), &unit),
            1.0
        );
        assert_eq!(
            dl_distance(&seq(&[Token::Msg(468)]), &seq(&[Token::Gap(8)]), &unit),
            1.0
        );
    }

    #[test]
    fn asymmetric_costs_break_symmetry() {
        let costs = CostSchedule::new(
            Cost::integer(3),
            Cost::integer(1),
            Cost::integer(1),
            Cost::integer(1),
        );
        let a = seq(&[M468]);
        let b = seq(&[]);
        assert_eq!(dl_distance(&a, &b, &costs), 1.0); // one delete
        assert_eq!(dl_distance(&b, &a, &costs), 3.0); // one insert
    }

    #[test]
    fn restricted_variant_cannot_edit_a_transposed_pair_again() {
        // The classic witness for the optimal-string-alignment variant:
        // [C, A] -> [A, B, C] costs 3 even though transpose-then-insert
        // would cost 2 in the unrestricted distance. This also means the
        // triangle inequality fails for this variant:
        // d(CA, ABC) = 3 > d(CA, AC) + d(AC, ABC) = 1 + 1.
        let c = Token::Msg(3);
        let a = Token::Msg(1);
        let b = Token::Msg(2);
        let unit = CostSchedule::default();
        let ca = seq(&[c, a]);
        let ac = seq(&[a, c]);
        let abc = seq(&[a, b, c]);
        assert_eq!(dl_distance(&ca, &abc, &unit), 3.0);
        assert_eq!(dl_distance(&ca, &ac, &unit), 1.0);
        assert_eq!(dl_distance(&ac, &abc, &unit), 1.0);
    }

    #[test]
    fn matrix_matches_pairwise() {
        let qs = vec![seq(&[M468]), seq(&[M468, G8, M468])];
        let rs = vec![seq(&[]), seq(&[M468]), seq(&[G8])];
        let costs = CostSchedule::default();
        let m = dl_distance_matrix(&qs, &rs, &costs);
        assert_eq!(m.len(), 2);
        for (i, q) in qs.iter().enumerate() {
            assert_eq!(m[i].len(), 3);
            for (j, r) in rs.iter().enumerate() {
                assert_eq!(m[i][j], dl_distance(q, r, &costs));
            }
        }
    }

    #[test]
    fn transposition_usefulness_check() {
        assert!(CostSchedule::default().transposition_useful());
        let silly = CostSchedule::new(
            Cost::integer(1),
            Cost::integer(1),
            Cost::integer(1),
            Cost::integer(5),
        );
        assert!(!silly.transposition_useful());
    }

    #[test]
    fn scaling_is_exact_for_mixed_denominators() {
        let costs = CostSchedule::new(
            "0.5".parse().unwrap(),
            "0.25".parse().unwrap(),
            "1".parse().unwrap(),
            "0.1".parse().unwrap(),
        );
        let sc = costs.scaled().unwrap();
        assert_eq!(sc.scale, 20);
        assert_eq!(sc.ins, 10);
        assert_eq!(sc.del, 5);
        assert_eq!(sc.sub, 20);
        assert_eq!(sc.trans, 2);
    }
}
