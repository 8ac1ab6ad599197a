use crate::error::{Error, Result};
use crate::scalar::Real;

/// Margin subtracted from the lowest positive partial sum.
pub const REJECT_SLACK: f64 = 1e-6;

/// Result of evaluating a window through the soft cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CascadeOutcome<T> {
    Accepted(T),
    Rejected { round: usize, partial: T },
}

impl<T: Copy> CascadeOutcome<T> {
    pub fn score(&self) -> Option<T> {
        match *self {
            CascadeOutcome::Accepted(s) => Some(s),
            CascadeOutcome::Rejected { .. } => None,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, CascadeOutcome::Accepted(_))
    }
}

/// Per-round thresholds `r_t = min_i H_t(x_i) - REJECT_SLACK` over positive traces.
pub fn compute_reject_thresholds<T: Real>(traces: &[Vec<T>]) -> Result<Vec<T>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("reject thresholds need at least one positive trace"))?;
    let len = first.len();
    if traces.iter().any(|t| t.len() != len) {
        return Err(Error::invalid("positive traces differ in length"));
    }
    let slack = T::lit(REJECT_SLACK);
    Ok((0..len)
        .map(|t| {
            traces
                .iter()
                .map(|tr| tr[t])
                .fold(T::infinity(), |m, v| m.min(v))
                - slack
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_trace() {
        let r = compute_reject_thresholds(&[vec![0.1f64, 0.3, 0.6]]).unwrap();
        for (a, b) in r.iter().zip([0.1, 0.3, 0.6]) {
            assert!((a - (b - 1e-6)).abs() < 1e-15);
        }
    }

    #[test]
    fn elementwise_min() {
        let r = compute_reject_thresholds(&[vec![0.5f64, -0.2], vec![0.1, 0.4]]).unwrap();
        assert_eq!(r, vec![0.1 - 1e-6, -0.2 - 1e-6]);
    }

    #[test]
    fn empty_rejected() {
        assert!(compute_reject_thresholds::<f64>(&[]).is_err());
        assert!(compute_reject_thresholds(&[vec![1.0f64], vec![]]).is_err());
    }
}
