use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` tensor of rank 0, 1 or 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > 2 {
            return Err(Error::Domain(format!("rank {} tensors are not supported", shape.len())));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension {
                    op: "from_rows",
                    left: vec![i, r.len()],
                    right: vec![cols],
                });
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Matrix view: rank 0 is 1x1, rank 1 is a single row.
    pub fn dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!("rank checked at construction"),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims().0
    }

    pub fn cols(&self) -> usize {
        self.dims().1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `y = x · Wᵀ + b` on row-major buffers; `x` is `n×k`, `w` is `m×k`.
pub(crate) fn linear_into(x: &[f64], n: usize, k: usize, w: &[f64], m: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for r in 0..n {
        let xr = &x[r * k..(r + 1) * k];
        let yr = &mut out[r * m..(r + 1) * m];
        for (o, y) in yr.iter_mut().enumerate() {
            let wr = &w[o * k..(o + 1) * k];
            let mut acc = 0.0;
            for (a, c) in xr.iter().zip(wr) {
                acc += a * c;
            }
            *y = acc + b.map_or(0.0, |b| b[o]);
        }
    }
    out
}

/// Applies `y = W·x + b` for a vector `x` or `y = x·Wᵀ + b` row-wise for a matrix `x`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, k) = x.dims();
    let (m, wk) = w.dims();
    if w.shape.len() != 2 || wk != k {
        return Err(Error::Dimension {
            op: "affine",
            left: w.shape.clone(),
            right: x.shape.clone(),
        });
    }
    if b.len() != m {
        return Err(Error::Dimension {
            op: "affine bias",
            left: w.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let data = linear_into(&x.data, n, k, &w.data, m, Some(&b.data));
    if x.shape.len() == 2 {
        Tensor::matrix(n, m, data)
    } else {
        Ok(Tensor::vector(data))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without cancellation for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

pub fn log_softmax(v: &Tensor) -> Result<Tensor> {
    if v.is_empty() {
        return Err(Error::Domain("log_softmax of an empty vector".into()));
    }
    if v.shape.len() > 1 {
        return Err(Error::Domain(format!(
            "log_softmax expects a rank-1 tensor, got shape {:?}",
            v.shape
        )));
    }
    let max = v.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = v.data.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(Tensor::vector(v.data.iter().map(|x| (x - max) - log_z).collect()))
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_hand_cases() {
        let y = affine(
            &Tensor::vector(vec![1.0, 2.0]),
            &Tensor::identity(2),
            &Tensor::vector(vec![0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);

        let w = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let y = affine(&Tensor::vector(vec![1.0, 1.0]), &w, &Tensor::vector(vec![1.0, -1.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);

        let w = Tensor::from_rows(&[vec![0.3, -2.0, 7.0], vec![1.5, 4.0, -0.5]]).unwrap();
        let y = affine(&Tensor::zeros(&[3]), &w, &Tensor::vector(vec![5.0, 5.0])).unwrap();
        assert_eq!(y.data(), &[5.0, 5.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let err = affine(&Tensor::zeros(&[3]), &Tensor::identity(2), &Tensor::zeros(&[2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-15);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-700.0) > 0.0 && sigmoid(700.0) <= 1.0);
        assert!(log_sigmoid(-700.0).is_finite());
        for i in -300..=300 {
            let x = i as f64 * 0.1;
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn log_softmax_cases() {
        let y = log_softmax(&Tensor::vector(vec![0.0; 4])).unwrap();
        for v in y.data() {
            assert!((v - 0.25f64.ln()).abs() < 1e-15);
        }
        let a = log_softmax(&Tensor::vector(vec![123.5; 3])).unwrap();
        let b = log_softmax(&Tensor::vector(vec![0.0; 3])).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        let y = log_softmax(&Tensor::vector(vec![2f64.ln(), 0.0])).unwrap();
        assert!((y.data()[0] - (2.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((y.data()[1] - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!(matches!(log_softmax(&Tensor::vector(vec![])), Err(Error::Domain(_))));
    }

    #[test]
    fn log_add_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((log_add_exp(-1000.0, -1000.0) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn log_softmax_normalizes(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
                let y = log_softmax(&Tensor::vector(v)).unwrap();
                let s: f64 = y.data().iter().map(|x| x.exp()).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }
}
