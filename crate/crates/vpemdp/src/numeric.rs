//! Exact rational arithmetic and exact solution of square linear systems.
//!
//! Everything downstream (Bellman fixed points, variance systems, reachability
//! probabilities) is computed over [`Rational`] values, so no rounding ever
//! occurs anywhere in the crate. Rationals are always kept in lowest terms
//! with a positive denominator; this is guaranteed by the underlying
//! `num`-crate representation.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational number, stored in lowest terms.
pub type Rational = BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumericError {
    #[error("malformed rational token `{0}`")]
    ParseError(String),
    #[error("zero denominator in rational token `{0}`")]
    ZeroDenominator(String),
    #[error("singular coefficient matrix (no pivot in column {column})")]
    SingularMatrix { column: usize },
    #[error("coefficient matrix is {rows}x{cols} with rhs of length {rhs}, expected square")]
    NotSquare { rows: usize, cols: usize, rhs: usize },
}

/// Shorthand for an integer-valued rational.
pub fn rational_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Shorthand for `n/d`; panics on `d == 0` (test/construction helper).
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses a rational token of the form `p` or `p/q` (decimal integers, an
/// optional leading sign on `p`). The result is normalized to lowest terms.
pub fn parse_rational(token: &str) -> Result<Rational, NumericError> {
    let malformed = || NumericError::ParseError(token.to_string());
    let parse_int = |s: &str, signed: bool| -> Result<BigInt, NumericError> {
        let digits = match s.strip_prefix(['+', '-']) {
            Some(rest) if signed => rest,
            Some(_) => return Err(malformed()),
            None => s,
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        s.parse::<BigInt>().map_err(|_| malformed())
    };
    match token.split_once('/') {
        None => Ok(Rational::from_integer(parse_int(token, true)?)),
        Some((num, den)) => {
            let num = parse_int(num, true)?;
            let den = parse_int(den, false)?;
            if den.is_zero() {
                return Err(NumericError::ZeroDenominator(token.to_string()));
            }
            Ok(Rational::new(num, den))
        }
    }
}

/// Renders a rational exactly: `p` when the denominator is one, else `p/q`.
pub fn format_rational(value: &Rational) -> String {
    value.to_string()
}

/// Decimal approximation with up to 15 significant digits, for display only.
///
/// The digits are obtained by exact long division and truncated (not rounded),
/// so the output is deterministic across platforms. Exact integers print
/// without a fractional part.
pub fn approx_decimal(value: &Rational) -> String {
    if value.is_integer() {
        return value.numer().to_string();
    }
    let neg = value.is_negative();
    let abs = value.abs();
    let int_part = abs.numer() / abs.denom();
    let int_digits = if int_part.is_zero() {
        0
    } else {
        int_part.to_string().len()
    };
    let frac_digits = 15usize.saturating_sub(int_digits);
    // Scale, divide, then re-insert the decimal point.
    let scaled = abs.numer() * BigInt::from(10u8).pow(frac_digits as u32) / abs.denom();
    let mut digits = scaled.to_string();
    if digits.len() <= frac_digits {
        digits = format!("{:0>width$}", digits, width = frac_digits + 1);
    }
    let point = digits.len() - frac_digits;
    let (int_str, frac_str) = digits.split_at(point);
    let frac_str = frac_str.trim_end_matches('0');
    let sign = if neg { "-" } else { "" };
    if frac_str.is_empty() {
        format!("{sign}{int_str}")
    } else {
        format!("{sign}{int_str}.{frac_str}")
    }
}

/// Lossy `f64` view of a rational, for statistical tolerance checks only.
pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// A dense square linear system `A x = b` over the rationals.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    coefficients: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
}

impl LinearSystem {
    pub fn new(
        coefficients: Vec<Vec<Rational>>,
        rhs: Vec<Rational>,
    ) -> Result<Self, NumericError> {
        let rows = coefficients.len();
        let cols = coefficients.first().map_or(0, Vec::len);
        if rows != rhs.len() || coefficients.iter().any(|row| row.len() != rows) {
            return Err(NumericError::NotSquare {
                rows,
                cols,
                rhs: rhs.len(),
            });
        }
        Ok(LinearSystem { coefficients, rhs })
    }

    /// All-zero system of the given dimension, to be filled in by the caller.
    pub fn zero(dimension: usize) -> Self {
        LinearSystem {
            coefficients: vec![vec![Rational::zero(); dimension]; dimension],
            rhs: vec![Rational::zero(); dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }

    pub fn coefficient_mut(&mut self, row: usize, col: usize) -> &mut Rational {
        &mut self.coefficients[row][col]
    }

    pub fn rhs_mut(&mut self, row: usize) -> &mut Rational {
        &mut self.rhs[row]
    }
}

/// Solves `A x = b` exactly by Gaussian elimination.
///
/// Pivoting only needs to locate a nonzero entry: with exact arithmetic there
/// is no notion of numerical stability, so the first nonzero candidate in the
/// column is used. Returns [`NumericError::SingularMatrix`] when a column has
/// no pivot.
pub fn solve_linear_system(sys: &LinearSystem) -> Result<Vec<Rational>, NumericError> {
    let n = sys.dimension();
    let mut a = sys.coefficients.clone();
    let mut b = sys.rhs.clone();

    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .ok_or(NumericError::SingularMatrix { column: col })?;
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col][col].clone();
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = &a[row][col] / &pivot;
            for k in col..n {
                let sub = &factor * &a[col][k];
                a[row][k] -= sub;
            }
            let sub = &factor * &b[col];
            b[row] -= sub;
        }
    }

    let mut x = vec![Rational::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for col in row + 1..n {
            acc -= &a[row][col] * &x[col];
        }
        x[row] = acc / &a[row][row];
    }

    debug_assert!(residual_is_zero(sys, &x), "solver produced A x != b");
    Ok(x)
}

fn residual_is_zero(sys: &LinearSystem, x: &[Rational]) -> bool {
    sys.coefficients
        .iter()
        .zip(&sys.rhs)
        .all(|(row, rhs)| {
            let lhs: Rational = row.iter().zip(x).map(|(a, xi)| a * xi).sum();
            lhs == *rhs
        })
}
