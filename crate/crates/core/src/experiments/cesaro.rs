//! Plain and linearly weighted partial averages of a real sequence.

use serde::Serialize;

use super::{invalid, ExperimentError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CesaroRow {
    pub n: usize,
    /// `(1/n) Σ_{j=1}^{n} a_j`
    pub mean: f64,
    /// `(1/n²) Σ_{j=1}^{n} j a_j`
    pub weighted: f64,
}

/// Running sum with Neumaier compensation.
#[derive(Default, Clone, Copy)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Both averages at each `n` of `n_list`, where `seq[j - 1]` is `a_j`.
/// Rows come back in the order of `n_list`.
pub fn cesaro_check(seq: &[f64], n_list: &[usize]) -> Result<Vec<CesaroRow>, ExperimentError> {
    if seq.is_empty() {
        return Err(invalid("sequence", "must not be empty"));
    }
    if let Some(&bad) = n_list.iter().find(|&&n| n == 0 || n > seq.len()) {
        return Err(invalid(
            "n",
            format!("{bad} is outside 1..={}", seq.len()),
        ));
    }
    let mut order: Vec<usize> = (0..n_list.len()).collect();
    order.sort_by_key(|&i| n_list[i]);
    let mut rows = vec![None; n_list.len()];
    let (mut plain, mut weighted) = (Sum::default(), Sum::default());
    let mut done = 0usize;
    for i in order {
        let n = n_list[i];
        for (j, &a) in seq.iter().enumerate().take(n).skip(done) {
            plain.add(a);
            weighted.add((j + 1) as f64 * a);
        }
        done = n;
        let nf = n as f64;
        rows[i] = Some(CesaroRow {
            n,
            mean: plain.value() / nf,
            weighted: weighted.value() / (nf * nf),
        });
    }
    Ok(rows.into_iter().map(|r| r.expect("every row filled")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_closed_form() {
        let seq = vec![2.0; 1000];
        let rows = cesaro_check(&seq, &[1, 10, 1000]).unwrap();
        for r in rows {
            let n = r.n as f64;
            assert!((r.mean - 2.0).abs() < 1e-12);
            assert!((r.weighted - (n + 1.0) / n).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_sequence_closed_form() {
        let seq: Vec<f64> = (1..=200).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for m in [1usize, 5, 50, 100] {
            let r = cesaro_check(&seq, &[2 * m]).unwrap()[0];
            assert_eq!(r.mean, 0.0);
            let mf = m as f64;
            assert!((r.weighted - mf / (4.0 * mf * mf)).abs() < 1e-15);
        }
    }

    #[test]
    fn unsorted_requests_keep_order() {
        let seq: Vec<f64> = (1..=10).map(|j| j as f64).collect();
        let rows = cesaro_check(&seq, &[10, 1, 4]).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![10, 1, 4]);
        assert_eq!(rows[1].mean, 1.0);
        assert_eq!(rows[2].mean, 2.5);
    }

    #[test]
    fn errors() {
        assert!(cesaro_check(&[], &[1]).is_err());
        assert!(cesaro_check(&[1.0], &[2]).is_err());
        assert!(cesaro_check(&[1.0], &[0]).is_err());
    }
}
