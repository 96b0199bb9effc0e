use crate::error::{Error, Result};

fn log_scores(own: &[f64], partner: &[f64], tau: f64) -> Vec<f64> {
    own.iter().zip(partner).map(|(&a, &b)| tau * a.ln() + b.ln()).collect()
}

/// Lowest index of the maximum; `-inf` entries only win when all are `-inf`.
fn argmax_total(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Decision-time re-ranking of two MindNets' scores.
///
/// `label1 = argmax(P1^τ ⊙ P2)` and `label2 = argmax(P2^τ ⊙ P1)`, evaluated as
/// `τ·ln P_self + ln P_partner`. Inputs need not be normalised; ties go to the
/// lowest class index.
pub fn db_rerank(p1: &[f64], p2: &[f64], tau: f64) -> Result<(usize, usize)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau {tau} must be positive")));
    }
    if p1.len() != p2.len() || p1.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "score lengths {} and {}",
            p1.len(),
            p2.len()
        )));
    }
    if p1.iter().chain(p2).any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::InvalidArgument("scores must be finite and non-negative".into()));
    }
    let l1 = argmax_total(&log_scores(p1, p2, tau));
    let l2 = argmax_total(&log_scores(p2, p1, tau));
    Ok((l1, l2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        // 0.6²·0.3 = 0.108 < 0.4²·0.7 = 0.112
        assert_eq!(db_rerank(&[0.6, 0.4], &[0.3, 0.7], 2.0).unwrap().0, 1);
    }

    #[test]
    fn uniform_partner_keeps_own_argmax() {
        let p = [0.1, 0.5, 0.2, 0.2];
        let u = [0.25; 4];
        assert_eq!(db_rerank(&p, &u, 2.0).unwrap().0, 1);
    }

    #[test]
    fn ties_go_low_and_bad_tau_fails() {
        assert_eq!(db_rerank(&[0.5, 0.5], &[0.5, 0.5], 1.0).unwrap(), (0, 0));
        assert!(db_rerank(&[0.5, 0.5], &[0.5, 0.5], 0.0).is_err());
        assert!(db_rerank(&[0.5, -0.5], &[0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn zero_probabilities_lose() {
        assert_eq!(db_rerank(&[0.0, 1.0], &[1.0, 0.0], 2.0).unwrap(), (0, 0));
        assert_eq!(db_rerank(&[0.0, 0.9, 0.1], &[0.5, 0.0, 0.5], 2.0).unwrap(), (2, 2));
    }
}
