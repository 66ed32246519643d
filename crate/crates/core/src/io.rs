//! Locale-free numeric formatting shared by all text outputs.

/// Scientific notation with 17 significant digits, e.g. `-1.2500000000000000e-1`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e300, 5e-324, 0.0, 2f64.sqrt()] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.125), "1.2500000000000000e-1");
    }
}
