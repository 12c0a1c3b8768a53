//! Parsing of blocklength ranges and ε lists for sweeps.

use crate::error::{Error, Result};
use crate::mass::{parse_probability, Rational};

/// Longest blocklength list a range expression may expand to.
pub const MAX_SWEEP_POINTS: usize = 100_000;

/// Parse a comma-separated list of blocklengths. Items are `N`, `a:b`
/// (every integer), `a:b:k` (step `k`) or `a:b:xk` (multiply by `k >= 2`).
/// The result is sorted and free of duplicates; every entry is at least 1.
pub fn parse_n_list(text: &str) -> Result<Vec<u32>> {
    let bad = |msg: String| Error::validation("n", msg);
    let num = |s: &str| -> Result<u32> {
        let s = s.trim();
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad(format!("not a blocklength: {s:?}")));
        }
        let v: u32 = s.parse().map_err(|_| bad(format!("blocklength out of range: {s:?}")))?;
        if v == 0 {
            return Err(bad("blocklengths start at 1".into()));
        }
        Ok(v)
    };
    let mut out: Vec<u32> = Vec::new();
    for item in text.split(',') {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [n] => out.push(num(n)?),
            [a, b] | [a, b, _] => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(bad(format!("empty range {a}:{b}")));
                }
                let step = parts.get(2).map(|s| s.trim());
                let mut k = a;
                match step {
                    Some(s) if s.starts_with('x') => {
                        let f = num(&s[1..])?;
                        if f < 2 {
                            return Err(bad("geometric factor must be at least 2".into()));
                        }
                        loop {
                            out.push(k);
                            match k.checked_mul(f) {
                                Some(next) if next <= b => k = next,
                                _ => break,
                            }
                            if out.len() > MAX_SWEEP_POINTS {
                                return Err(bad("range expands to too many points".into()));
                            }
                        }
                    }
                    _ => {
                        let d = step.map(num).transpose()?.unwrap_or(1);
                        if ((b - a) / d) as usize >= MAX_SWEEP_POINTS {
                            return Err(bad("range expands to too many points".into()));
                        }
                        loop {
                            out.push(k);
                            match k.checked_add(d) {
                                Some(next) if next <= b => k = next,
                                _ => break,
                            }
                        }
                    }
                }
            }
            _ => return Err(bad(format!("malformed range item {item:?}"))),
        }
        if out.len() > MAX_SWEEP_POINTS {
            return Err(bad("range expands to too many points".into()));
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Parse a comma-separated list of probabilities in `[0, 1]`.
pub fn parse_eps_list(text: &str) -> Result<Vec<Rational>> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let e = parse_probability(item)?;
        let zero = Rational::from_integer(0.into());
        let one = Rational::from_integer(1.into());
        if e < zero || e > one {
            return Err(Error::validation("eps", format!("{} is not in [0, 1]", item.trim())));
        }
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn range_forms() {
        assert_eq!(parse_n_list("4:8").unwrap(), [4, 5, 6, 7, 8]);
        assert_eq!(parse_n_list("4:256:x2").unwrap(), [4, 8, 16, 32, 64, 128, 256]);
        assert_eq!(parse_n_list("1:10:4").unwrap(), [1, 5, 9]);
        assert_eq!(parse_n_list("3, 1,3").unwrap(), [1, 3]);
        for bad in ["", "0", "5:4", "1:4:x1", "1:2:3:4", "a", "1:4294967295", "-1"] {
            assert!(parse_n_list(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn eps_lists() {
        let v = parse_eps_list("0.1, 1/2,0").unwrap();
        assert_eq!(v[1], Rational::new(1.into(), 2.into()));
        assert!(parse_eps_list("1.5").is_err());
        assert!(parse_eps_list("1/0").is_err());
    }

    proptest! {
        #[test]
        fn parser_never_panics(s in "[0-9:,x ]{0,24}") {
            let _ = parse_n_list(&s);
        }

        #[test]
        fn geometric_ranges_stay_in_bounds(a in 1u32..100, b in 1u32..100_000, f in 2u32..10) {
            if let Ok(v) = parse_n_list(&format!("{a}:{b}:x{f}")) {
                prop_assert!(v.iter().all(|&n| n >= a && n <= b));
                prop_assert!(v.windows(2).all(|w| w[1] == w[0] * f));
            }
        }
    }
}
