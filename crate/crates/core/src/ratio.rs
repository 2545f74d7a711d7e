//! Exact non-negative rationals and fixed-point rendering.
//!
//! Every ratio metric is carried as an exact fraction and only rounded when
//! rendered, so acceptance checks never see floating-point drift.

use num_traits::Zero;

pub type Ratio = num_rational::Ratio<u128>;

pub fn ratio(numer: u128, denom: u128) -> Ratio {
    Ratio::new(numer, denom)
}

/// Round half-up to `decimals` places and render, e.g. `0.3736… -> "0.37"`.
pub fn render_fixed(value: &Ratio, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let scaled = value.numer() * scale;
    let denom = *value.denom();
    let rounded = (2 * scaled + denom) / (2 * denom);
    let int = rounded / scale;
    if decimals == 0 {
        return int.to_string();
    }
    let frac = rounded % scale;
    format!("{int}.{frac:0width$}", width = decimals as usize)
}

/// Render `value` as a percentage with two decimals, e.g. `0.5194 -> "51.94%"`.
pub fn render_percent(value: &Ratio) -> String {
    format!("{}%", render_fixed(&(value * Ratio::from_integer(100)), 2))
}

/// Rounded value in hundredths (`0.5439… -> 54`), used when comparing with
/// figures given to two decimals.
pub fn hundredths(value: &Ratio) -> u128 {
    let scaled = value.numer() * 100;
    let denom = *value.denom();
    (2 * scaled + denom) / (2 * denom)
}

/// Parse a decimal literal such as `"34.18"` or `"0.1"` into an exact ratio.
pub fn parse_decimal(text: &str) -> Option<Ratio> {
    let text = text.trim();
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: u128 = if digits.is_empty() {
        0
    } else {
        digits.parse().ok()?
    };
    let denom = 10u128.checked_pow(frac.len() as u32)?;
    Some(Ratio::new(numer, denom))
}

/// Unweighted mean of a list of ratios; zero for an empty list.
pub fn mean(values: &[Ratio]) -> Ratio {
    if values.is_empty() {
        return Ratio::zero();
    }
    let sum = values.iter().fold(Ratio::zero(), |acc, v| acc + v);
    sum / Ratio::from_integer(values.len() as u128)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_half_up() {
        assert_eq!(render_fixed(&ratio(229, 613), 2), "0.37");
        assert_eq!(render_fixed(&ratio(1, 8), 2), "0.13");
        assert_eq!(render_fixed(&ratio(3, 1), 2), "3.00");
        assert_eq!(render_percent(&ratio(1, 2)), "50.00%");
        assert_eq!(render_fixed(&ratio(5, 2), 0), "3");
    }

    #[test]
    fn parses_decimals() {
        assert_eq!(parse_decimal("34.18"), Some(ratio(3418, 100)));
        assert_eq!(parse_decimal("0.1"), Some(ratio(1, 10)));
        assert_eq!(parse_decimal("7"), Some(ratio(7, 1)));
        assert_eq!(parse_decimal("-1"), None);
        assert_eq!(parse_decimal("."), None);
    }

    #[test]
    fn mean_is_unweighted() {
        assert_eq!(mean(&[ratio(1, 2), ratio(1, 4)]), ratio(3, 8));
        assert_eq!(mean(&[]), Ratio::zero());
    }
}
