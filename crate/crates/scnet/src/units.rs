//! SI-suffixed number parsing and formatting.
//!
//! Accepted forms: plain floats (`0.01`, `1e-6`) and floats with one of the
//! suffixes `k M m u n p`, optionally followed by a unit token such as
//! `V`, `A`, `s`, `F`, `Hz` or `ohm` (`2mV`, `10M`, `100k`, `1u`).

/// Exact scaling for a suffix character: multiply or divide by an integer
/// power of ten so the single rounding is the correctly rounded result.
fn apply_suffix(c: char, value: f64) -> Option<f64> {
    match c {
        'k' => Some(value * 1e3),
        'M' => Some(value * 1e6),
        'm' => Some(value / 1e3),
        'u' | 'µ' => Some(value / 1e6),
        'n' => Some(value / 1e9),
        'p' => Some(value / 1e12),
        _ => None,
    }
}

fn is_unit_token(s: &str) -> bool {
    matches!(s, "" | "V" | "A" | "s" | "F" | "Hz" | "ohm" | "Ohm" | "Ω" | "W")
}

/// Parse a number with an optional SI suffix and unit token.
pub fn parse_si(text: &str) -> Result<f64, String> {
    let s = text.trim();
    if s.is_empty() {
        return Err("empty numeric value".to_string());
    }
    // Longest prefix that parses as a plain float.
    let mut split = 0;
    for (idx, _) in s.char_indices().skip(1).chain([(s.len(), ' ')]) {
        if s[..idx].parse::<f64>().is_ok() {
            split = idx;
        }
    }
    let number: f64 = s[..split]
        .parse()
        .map_err(|_| format!("not a number: '{s}'"))?;
    let rest = s[split..].trim();
    if rest.is_empty() {
        return Ok(number);
    }
    let first = rest.chars().next().unwrap();
    if let Some(scaled) = apply_suffix(first, number) {
        let unit = rest[first.len_utf8()..].trim();
        if is_unit_token(unit) {
            return Ok(scaled);
        }
    }
    if is_unit_token(rest) {
        return Ok(number);
    }
    Err(format!("unrecognized suffix '{rest}' in '{s}'"))
}

/// Format a value so that `parse_si` recovers it bit-exactly, preferring an
/// SI suffix when the scaling loses nothing.
pub fn format_si(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs();
    let scaled: [(f64, f64, &str); 7] = [
        (1e6, value / 1e6, "M"),
        (1e3, value / 1e3, "k"),
        (1.0, value, ""),
        (1e-3, value * 1e3, "m"),
        (1e-6, value * 1e6, "u"),
        (1e-9, value * 1e9, "n"),
        (1e-12, value * 1e12, "p"),
    ];
    for (scale, mantissa, suffix) in scaled {
        if magnitude >= scale && magnitude < scale * 1000.0 {
            let candidate = format!("{mantissa}{suffix}");
            if parse_si(&candidate) == Ok(value) {
                return candidate;
            }
        }
    }
    format!("{value}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_suffixes() {
        assert_eq!(parse_si("100k").unwrap(), 100e3);
        assert_eq!(parse_si("10M").unwrap(), 10e6);
        assert_eq!(parse_si("2mV").unwrap(), 2e-3);
        assert_eq!(parse_si("1u").unwrap(), 1e-6);
        assert_eq!(parse_si("10n").unwrap(), 10e-9);
        assert_eq!(parse_si("3p").unwrap(), 3e-12);
        assert_eq!(parse_si("0.01").unwrap(), 0.01);
        assert_eq!(parse_si("1e-6").unwrap(), 1e-6);
        assert_eq!(parse_si("250kHz").unwrap(), 250e3);
        assert_eq!(parse_si(" 0.5 V ").unwrap(), 0.5);
    }

    #[test]
    fn case_distinguishes_mega_from_milli() {
        assert_eq!(parse_si("1M").unwrap(), 1e6);
        assert_eq!(parse_si("1m").unwrap(), 1e-3);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_si("").is_err());
        assert!(parse_si("fast").is_err());
        assert!(parse_si("1q").is_err());
        assert!(parse_si("1kk").is_err());
    }

    proptest! {
        #[test]
        fn format_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let text = format_si(v);
            prop_assert_eq!(parse_si(&text).unwrap(), v);
        }
    }
}
