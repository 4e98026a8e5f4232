//! Parsers for model responses.

use crate::AnnotationError;

/// Values within this distance of 1.0 count as a maximum of exactly 1.
pub const MAX_TOLERANCE: f64 = 1e-6;

/// First `[...]` span of `s` that parses as a JSON array of integers.
fn first_int_array(s: &str) -> Option<Vec<i64>> {
    let bytes = s.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b != b'[' {
            continue;
        }
        if let Some(len) = s[i..].find(']') {
            if let Ok(v) = serde_json::from_str::<Vec<i64>>(&s[i..=i + len]) {
                return Some(v);
            }
        }
    }
    None
}

/// Refund levels from a response; leading or trailing prose is ignored.
pub fn parse_refund(response: &str, batch: usize) -> Result<Vec<u8>, AnnotationError> {
    let values = first_int_array(response)
        .ok_or_else(|| AnnotationError::Malformed(format!("no integer array in response {:?}", truncate(response))))?;
    for (index, &v) in values.iter().enumerate() {
        if !(0..=4).contains(&v) {
            return Err(AnnotationError::OutOfRange { index, value: v as f64 });
        }
    }
    if values.len() != batch {
        return Err(AnnotationError::LengthMismatch { expected: batch, got: values.len() });
    }
    Ok(values.into_iter().map(|v| v as u8).collect())
}

/// One 12-vector per nonblank line. A maximum within [`MAX_TOLERANCE`] of 1
/// is rescaled to exactly 1; anything else that breaks the invariants is
/// rejected.
pub fn parse_industry(response: &str, n_rows: usize) -> Result<Vec<[f64; 12]>, AnnotationError> {
    let lines: Vec<&str> = response.lines().map(str::trim).filter(|l| l.contains('[')).collect();
    if lines.len() != n_rows {
        return Err(AnnotationError::LengthMismatch { expected: n_rows, got: lines.len() });
    }
    lines
        .iter()
        .enumerate()
        .map(|(index, line)| {
            let (a, b) = (line.find('[').expect("filtered"), line.rfind(']'));
            let b = b.filter(|&b| b > a).ok_or_else(|| AnnotationError::Malformed(format!("line {index}: unclosed list")))?;
            let v: Vec<f64> = serde_json::from_str(&line[a..=b])
                .map_err(|e| AnnotationError::Malformed(format!("line {index}: {e}")))?;
            if v.len() != 12 {
                return Err(AnnotationError::Arity { index, got: v.len() });
            }
            if let Some(&bad) = v.iter().find(|&&x| !(0.0..=1.0 + MAX_TOLERANCE).contains(&x)) {
                return Err(AnnotationError::OutOfRange { index, value: bad });
            }
            let max = v.iter().fold(0.0f64, |m, &x| m.max(x));
            if (max - 1.0).abs() > MAX_TOLERANCE {
                return Err(AnnotationError::MaxConstraint { index, max });
            }
            let mut out = [0.0; 12];
            for (o, x) in out.iter_mut().zip(&v) {
                *o = if max == 1.0 { *x } else { x / max };
            }
            Ok(out)
        })
        .collect()
}

/// Single label of an industry vector: the argmax, lower index on ties.
pub fn industry_label(v: &[f64; 12]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn truncate(s: &str) -> String {
    s.chars().take(80).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refund_examples() {
        assert_eq!(parse_refund("sure! [1,2]", 2).unwrap(), vec![1, 2]);
        assert_eq!(parse_refund("[7]", 1), Err(AnnotationError::OutOfRange { index: 0, value: 7.0 }));
        assert_eq!(parse_refund("[0,1]", 3), Err(AnnotationError::LengthMismatch { expected: 3, got: 2 }));
        assert!(matches!(parse_refund("no idea", 1), Err(AnnotationError::Malformed(_))));
        // a bracketed non-array is skipped
        assert_eq!(parse_refund("[note] [3]", 1).unwrap(), vec![3]);
    }

    #[test]
    fn industry_guards() {
        let eleven = format!("[{}]", vec!["0.5"; 10].join(",") + ",1");
        assert_eq!(parse_industry(&eleven, 1), Err(AnnotationError::Arity { index: 0, got: 11 }));
        let half = format!("[{}]", vec!["0.5"; 12].join(","));
        assert!(matches!(parse_industry(&half, 1), Err(AnnotationError::MaxConstraint { index: 0, .. })));
        let near = format!("[{}, 0.9999995]", vec!["0.5"; 11].join(","));
        let v = parse_industry(&near, 1).unwrap()[0];
        assert_eq!(v[11], 1.0);
        assert!((v[0] - 0.5 / 0.9999995).abs() < 1e-15);
        let neg = format!("[{}, -0.1]", vec!["1"; 11].join(","));
        assert!(matches!(parse_industry(&neg, 1), Err(AnnotationError::OutOfRange { .. })));
    }

    #[test]
    fn label_ties_go_low() {
        let mut v = [0.0; 12];
        v[3] = 1.0;
        v[7] = 1.0;
        assert_eq!(industry_label(&v), 3);
    }
}
