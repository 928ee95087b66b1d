use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A collection of parameter tensors with a fixed enumeration order.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl ParamSet for Vec<Tensor> {
    fn tensors(&self) -> Vec<&Tensor> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.iter_mut().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, f64, f64)>,
}

/// Coordinates sampled by [`grad_check`] when the parameter count is larger.
pub const GRAD_CHECK_SAMPLES: usize = 64;

/// Compares gradients returned by `f` against central differences.
///
/// `f` returns the loss and one gradient tensor per parameter tensor, in
/// [`ParamSet::tensors`] order. At most [`GRAD_CHECK_SAMPLES`] coordinates
/// are perturbed, chosen by `seed`.
pub fn grad_check<P, F>(f: F, params: &P, eps: f64, seed: u64) -> Result<GradCheckReport>
where
    P: ParamSet,
    F: Fn(&P) -> Result<(f64, Vec<Tensor>)>,
{
    grad_check_coords(f, params, eps, seed, GRAD_CHECK_SAMPLES)
}

/// [`grad_check`] with an explicit bound on the perturbed coordinates;
/// `usize::MAX` checks every one.
pub fn grad_check_coords<P, F>(f: F, params: &P, eps: f64, seed: u64, max_coords: usize) -> Result<GradCheckReport>
where
    P: ParamSet,
    F: Fn(&P) -> Result<(f64, Vec<Tensor>)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Domain(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let (loss, grads) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {loss}")));
    }
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().iter().copied()).collect();
    let total = params.num_values();
    if analytic.len() != total {
        return Err(Error::Dimension {
            op: "grad_check",
            left: vec![analytic.len()],
            right: vec![total],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        sample(&mut rng, total, max_coords).into_vec()
    };
    coords.sort_unstable();

    let eval_at = |flat: usize, delta: f64| -> Result<f64> {
        let mut p = params.clone();
        let mut offset = flat;
        for t in p.tensors_mut() {
            if offset < t.len() {
                t.data_mut()[offset] += delta;
                break;
            }
            offset -= t.len();
        }
        let (l, _) = f(&p)?;
        if !l.is_finite() {
            return Err(Error::Numeric(format!("perturbed loss is not finite: {l}")));
        }
        Ok(l)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: coords.len(),
        worst: None,
    };
    for &c in &coords {
        let numeric = (eval_at(c, eps)? - eval_at(c, -eps)?) / (2.0 * eps);
        let a = analytic[c];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((c, a, numeric));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn sum_of_squares(p: &[Tensor]) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars: Vec<_> = p.iter().map(|t| tape.param(t.clone())).collect::<Result<_>>()?;
        let parts: Vec<_> = vars.iter().map(|&v| tape.sum_squares(v)).collect::<Result<_>>()?;
        let terms: Vec<_> = parts.iter().map(|&v| (v, 1.0)).collect();
        let loss = tape.weighted_sum(&terms)?;
        let g = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vars.iter().map(|&v| g.wrt(v)).collect()))
    }

    #[test]
    fn quadratic_is_exact() {
        let params = vec![
            Tensor::from_rows(&[vec![0.5, -1.5, 2.0], vec![3.0, 0.25, -0.75]]).unwrap(),
            Tensor::vector((0..100).map(|i| (i as f64 * 0.37).sin()).collect()),
        ];
        let r = grad_check(|p: &Vec<Tensor>| sum_of_squares(p), &params, 1e-4, 0).unwrap();
        assert_eq!(r.checked, GRAD_CHECK_SAMPLES);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let params = vec![Tensor::vector(vec![1.0, 2.0, 3.0])];
        let r = grad_check(
            |p: &Vec<Tensor>| Ok((4.2, vec![Tensor::zeros(p[0].shape())])),
            &params,
            1e-5,
            0,
        )
        .unwrap();
        assert_eq!(r.checked, 3);
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn rejects_bad_eps_and_non_finite_loss() {
        let params = vec![Tensor::vector(vec![1.0])];
        assert!(grad_check(|p: &Vec<Tensor>| sum_of_squares(p), &params, 1e-2, 0).is_err());
        let r = grad_check(
            |_: &Vec<Tensor>| Ok((f64::NAN, vec![Tensor::zeros(&[1])])),
            &params,
            1e-5,
            0,
        );
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
