use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::log_add_exp;

/// Forward variables of one transducer lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub frames: usize,
    pub labels: usize,
    /// `log_alpha[t * (U + 1) + u]`
    pub log_alpha: Vec<f64>,
    pub log_likelihood: f64,
}

fn check_inputs(posteriors: &[Vec<f64>], labels: &[usize], frames: usize) -> Result<()> {
    if frames == 0 {
        return Err(Error::Contract("lattice needs at least one frame".into()));
    }
    let u1 = labels.len() + 1;
    if posteriors.len() != frames * u1 {
        return Err(Error::Dimension {
            op: "rnnt_nll",
            left: vec![posteriors.len()],
            right: vec![frames, u1],
        });
    }
    for &l in labels {
        if l == 0 {
            return Err(Error::Contract("blank (id 0) inside label sequence".into()));
        }
        if posteriors.iter().any(|p| l >= p.len()) {
            return Err(Error::Contract(format!("label {l} outside posterior support")));
        }
    }
    Ok(())
}

/// Log-domain forward recursion over posteriors ordered `[blank, symbols...]`.
///
/// Row `t * (U + 1) + u` of `posteriors` is the distribution at node `(t, u)`;
/// `labels` are 1-based symbol ids. The last frame ends with a mandatory blank
/// from `(T-1, U)`.
pub fn forward_lattice(posteriors: &[Vec<f64>], labels: &[usize], frames: usize) -> Result<Lattice> {
    check_inputs(posteriors, labels, frames)?;
    let u1 = labels.len() + 1;
    let log_blank = |r: usize| posteriors[r][0].ln();
    let log_emit = |r: usize, u: usize| posteriors[r][labels[u]].ln();
    let mut alpha = vec![f64::NEG_INFINITY; frames * u1];
    alpha[0] = 0.0;
    for t in 0..frames {
        for u in 0..u1 {
            let r = t * u1 + u;
            if r == 0 {
                continue;
            }
            let from_blank = if t > 0 {
                alpha[r - u1] + log_blank(r - u1)
            } else {
                f64::NEG_INFINITY
            };
            let from_emit = if u > 0 {
                alpha[r - 1] + log_emit(r - 1, u - 1)
            } else {
                f64::NEG_INFINITY
            };
            alpha[r] = log_add_exp(from_blank, from_emit);
        }
    }
    let last = frames * u1 - 1;
    let ll = alpha[last] + log_blank(last);
    Ok(Lattice {
        frames,
        labels: labels.len(),
        log_alpha: alpha,
        log_likelihood: ll,
    })
}

/// Transducer negative log-likelihood, `-(α(T-1, U) + log b(T-1, U))`.
pub fn rnnt_nll(posteriors: &[Vec<f64>], labels: &[usize], frames: usize) -> Result<f64> {
    let ll = forward_lattice(posteriors, labels, frames)?.log_likelihood;
    if ll.is_nan() {
        return Err(Error::Numeric("lattice log-likelihood is NaN".into()));
    }
    Ok(-ll)
}

/// Sums the probability of every alignment path explicitly.
///
/// A path is any ordering of `T` blanks and `U` emissions that ends with a
/// blank; probabilities are multiplied directly. Exponential in `T + U`, so
/// only usable on tiny lattices.
pub fn brute_force_nll(posteriors: &[Vec<f64>], labels: &[usize], frames: usize) -> Result<f64> {
    check_inputs(posteriors, labels, frames)?;
    let u1 = labels.len() + 1;
    fn walk(p: &[Vec<f64>], labels: &[usize], frames: usize, u1: usize, t: usize, u: usize, prob: f64) -> f64 {
        let r = t * u1 + u;
        let mut total = 0.0;
        if u < labels.len() {
            total += walk(p, labels, frames, u1, t, u + 1, prob * p[r][labels[u]]);
        }
        let blank = prob * p[r][0];
        if t + 1 < frames {
            total += walk(p, labels, frames, u1, t + 1, u, blank);
        } else if u == labels.len() {
            total += blank;
        }
        total
    }
    Ok(-walk(posteriors, labels, frames, u1, 0, 0, 1.0).ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub trials: usize,
    pub max_abs_error: f64,
}

pub type LatticeFn = fn(&[Vec<f64>], &[usize], usize) -> Result<f64>;

/// Compares `dp` against [`brute_force_nll`] on random lattices with
/// `T ≤ 4`, `U ≤ 3` and at most 3 symbols.
pub fn oracle_check(dp: LatticeFn, trials: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_error: f64 = 0.0;
    for _ in 0..trials {
        let frames = rng.random_range(1..=4);
        let u = rng.random_range(0..=3);
        let symbols = rng.random_range(1..=3);
        let labels: Vec<usize> = (0..u).map(|_| rng.random_range(1..=symbols)).collect();
        let posteriors: Vec<Vec<f64>> = (0..frames * (u + 1))
            .map(|_| {
                let raw: Vec<f64> = (0..=symbols).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / z).collect()
            })
            .collect();
        let a = dp(&posteriors, &labels, frames)?;
        let b = brute_force_nll(&posteriors, &labels, frames)?;
        let err = (a - b).abs();
        if !err.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite oracle difference: dp {a}, brute {b}"
            )));
        }
        max_abs_error = max_abs_error.max(err);
    }
    Ok(OracleReport { trials, max_abs_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_no_labels_is_one_blank() {
        let nll = rnnt_nll(&[vec![0.3, 0.7]], &[], 1).unwrap();
        assert!((nll + 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_frames_one_label_uniform() {
        let p = vec![vec![0.5, 0.5]; 4];
        let nll = rnnt_nll(&p, &[1], 2).unwrap();
        assert!((nll + 0.25f64.ln()).abs() < 1e-15);
        assert!((brute_force_nll(&p, &[1], 2).unwrap() - nll).abs() < 1e-15);
    }

    #[test]
    fn alpha_origin_and_likelihood_bound() {
        let p = vec![vec![0.2, 0.5, 0.3]; 12];
        let lat = forward_lattice(&p, &[1, 2], 4).unwrap();
        assert_eq!(lat.log_alpha[0], 0.0);
        assert!(lat.log_likelihood <= 0.0);
    }

    #[test]
    fn blank_label_rejected() {
        let p = vec![vec![0.5, 0.5]; 4];
        assert!(matches!(rnnt_nll(&p, &[0], 2), Err(Error::Contract(_))));
    }

    #[test]
    fn dp_matches_enumeration() {
        let r = oracle_check(rnnt_nll, 300, 11).unwrap();
        assert!(r.max_abs_error < 1e-9, "{r:?}");
    }

    fn missing_final_blank(p: &[Vec<f64>], labels: &[usize], frames: usize) -> Result<f64> {
        let lat = forward_lattice(p, labels, frames)?;
        Ok(-lat.log_alpha[lat.log_alpha.len() - 1])
    }

    #[test]
    fn corrupted_blank_handling_is_caught() {
        let r = oracle_check(missing_final_blank, 50, 3).unwrap();
        assert!(r.max_abs_error > 1e-3);
    }
}
