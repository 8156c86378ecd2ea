//! Plain-text formats: observation files and particle CSVs.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Parses an observation file: one finite number per line. Blank lines and
/// anything after `#` are ignored; a first line reading `y` is treated as a
/// header.
pub fn parse_dataset(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (out.is_empty() && line.eq_ignore_ascii_case("y")) {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("not a number: '{line}'"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("non-finite observation '{line}'"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

/// Writes observations in the format read by [`parse_dataset`]. Values round-trip exactly.
pub fn format_dataset(observations: &[f64]) -> String {
    let mut out = String::from("y\n");
    for y in observations {
        writeln!(out, "{y}").unwrap();
    }
    out
}

/// CSV with header `theta_0,...,theta_{d-1}` and one particle per row.
pub fn particles_csv(particles: &[DVector<f64>]) -> String {
    let d = particles.first().map_or(0, |p| p.len());
    let header: Vec<String> = (0..d).map(|i| format!("theta_{i}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for p in particles {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_header() {
        let y = parse_dataset("y\n# generated\n1.5\n\n -2 # trailing\n3e-1\n").unwrap();
        assert_eq!(y, vec![1.5, -2.0, 0.3]);
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(
            parse_dataset("1\nabc\n"),
            Err(Error::Parse {
                line: 2,
                message: "not a number: 'abc'".into()
            })
        );
        assert!(matches!(parse_dataset("NaN"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_dataset("1\ny\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn particle_csv_shape() {
        let s = particles_csv(&[DVector::from_vec(vec![1.0, 2.5]), DVector::from_vec(vec![-0.5, 0.0])]);
        assert_eq!(s, "theta_0,theta_1\n1,2.5\n-0.5,0\n");
    }

    proptest! {
        #[test]
        fn dataset_round_trip(y in prop::collection::vec(-1e6f64..1e6, 0..50)) {
            prop_assert_eq!(parse_dataset(&format_dataset(&y)).unwrap(), y);
        }
    }
}
