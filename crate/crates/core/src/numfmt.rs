//! Locale-independent numeric formatting for the CSV interfaces: every float
//! is printed with 12 significant digits, positional when the exponent is
//! small and scientific otherwise, always parseable back by `f64::from_str`.

/// Format with 12 significant digits.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        // Never expected on the CSV paths; keep it unambiguous if it happens.
        return format!("{x}");
    }
    let neg = x < 0.0;
    let s = format!("{:.11e}", x.abs());
    let (mantissa, exp) = s.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 12);
    let body = if (-4..12).contains(&exp) {
        if exp >= 0 {
            let k = exp as usize + 1;
            if k >= digits.len() {
                digits
            } else {
                format!("{}.{}", &digits[..k], &digits[k..])
            }
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        }
    } else {
        format!("{}e{}", mantissa, exp)
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}
