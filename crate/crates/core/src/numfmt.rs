//! Float formatting for on-disk artifacts: every float is written with at most
//! nine significant digits.

use serde::Serializer;

/// Rounds `x` to nine significant digits. Non-finite values pass through.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(sig9(*x))
}

pub fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&sig9(*v)),
        None => s.serialize_none(),
    }
}

pub fn ser_vec_f64<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| sig9(*x)))
}

pub fn ser_points<S: Serializer, const D: usize>(
    pts: &[[f64; D]],
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq(pts.iter().map(|p| p.iter().map(|&x| sig9(x)).collect::<Vec<f64>>()))
}

/// Formats a float for CSV output with nine significant digits.
pub fn fmt9(x: f64) -> String {
    format!("{}", sig9(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(sig9(123.456789123), 123.456789);
        assert_eq!(sig9(0.1234567891234), 0.123456789);
        assert_eq!(sig9(0.0), 0.0);
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
    }
}
