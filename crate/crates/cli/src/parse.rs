//! Flag value parsers.

use std::str::FromStr;

use num_complex::Complex;

pub type C64 = Complex<f64>;

/// Parses `a`, `bi`, `a+bi`, `a-bi`, `i`, `-i` (exponents allowed, `j` accepted for `i`).
pub fn complex(s: &str) -> Result<C64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err("empty complex number".into());
    }
    let bad = || format!("cannot parse '{s}' as a complex number (expected a, bi or a+bi)");
    let Some(body) = t.strip_suffix('i').or_else(|| t.strip_suffix('j')) else {
        return t.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad());
    };
    // The imaginary part starts at the last sign that is not an exponent sign.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse::<f64>().map_err(|_| bad())?,
    };
    let re = re.parse::<f64>().map_err(|_| bad())?;
    Ok(C64::new(re, im))
}

/// Comma separated complex numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Complexes(pub Vec<C64>);

/// Comma separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Reals(pub Vec<f64>);

/// Comma separated non-negative integers.
#[derive(Debug, Clone, PartialEq)]
pub struct Counts(pub Vec<u64>);

impl FromStr for Complexes {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',').map(complex).collect::<Result<_, _>>().map(Self)
    }
}

impl FromStr for Reals {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("cannot parse '{v}' as a number")))
            .collect::<Result<_, _>>()
            .map(Self)
    }
}

impl FromStr for Counts {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse::<u64>().map_err(|_| format!("cannot parse '{v}' as a non-negative integer")))
            .collect::<Result<_, _>>()
            .map(Self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        let cases = [
            ("0.5", (0.5, 0.0)),
            ("-2", (-2.0, 0.0)),
            ("i", (0.0, 1.0)),
            ("-i", (0.0, -1.0)),
            ("3i", (0.0, 3.0)),
            ("1+2i", (1.0, 2.0)),
            ("1-2i", (1.0, -2.0)),
            ("-1.5e-3+4e2i", (-1.5e-3, 400.0)),
            ("1e-3-i", (1e-3, -1.0)),
            (" 2 + 0.5 i ", (2.0, 0.5)),
            ("1+2j", (1.0, 2.0)),
        ];
        for (s, (re, im)) in cases {
            assert_eq!(complex(s).unwrap(), C64::new(re, im), "{s}");
        }
        for s in ["", "abc", "1+", "1+2k", "ii", "1e+i"] {
            assert!(complex(s).is_err(), "{s}");
        }
    }

    #[test]
    fn lists() {
        assert_eq!("0.5,1-i".parse::<Complexes>().unwrap().0, vec![C64::new(0.5, 0.0), C64::new(1.0, -1.0)]);
        assert_eq!("1, 2.5".parse::<Reals>().unwrap().0, vec![1.0, 2.5]);
        assert_eq!("10,100".parse::<Counts>().unwrap().0, vec![10, 100]);
        assert!("10,-1".parse::<Counts>().is_err());
    }
}
