//! Shortest `%g`-style decimal formatting used by every text output.

/// Significant digits written for sample values and derived tables.
pub const SIG_DIGITS: usize = 9;

/// Format `v` with `digits` significant digits, `%g` style: fixed notation
/// for moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_sig(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp >= -5 && exp < digits as i32 {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

/// [`format_sig`] at [`SIG_DIGITS`].
pub fn fmt9(v: f64) -> String {
    format_sig(v, SIG_DIGITS)
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_like_printf_g() {
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(1.0), "1");
        assert_eq!(fmt9(-2.5), "-2.5");
        assert_eq!(fmt9(123.456789123), "123.456789");
        assert_eq!(fmt9(1e-7), "1e-7");
        assert_eq!(fmt9(1.5e12), "1.5e12");
        assert_eq!(fmt9(999999999.7), "1e9");
        assert_eq!(fmt9(0.000123), "0.000123");
    }

    #[test]
    fn nine_digits_round_trip_f32() {
        let mut x = 1.0f32;
        for _ in 0..2000 {
            x = x * 1.37 + 0.11;
            if x > 1e6 {
                x = -x * 1e-9;
            }
            let back: f64 = fmt9(x as f64).parse().unwrap();
            assert_eq!((back as f32).to_bits(), x.to_bits());
        }
    }
}
