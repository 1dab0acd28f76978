//! Forward kernels. Each checks its inputs and returns a fresh tensor.

use alloc::vec::Vec;

use super::{Real, Tensor, TensorError};
use crate::rng::rng_for;

fn finite<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<(), TensorError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite(op))
    }
}

fn mismatch<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    finite("matmul", a)?;
    finite("matmul", b)?;
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    if k != k2 || a.shape().len() > 2 || b.shape().len() != 2 {
        return Err(mismatch("matmul", a, b));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = alloc::vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = ad[i * k + p];
            if x == T::zero() {
                continue;
            }
            for (o, &w) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o += x * w;
            }
        }
    }
    let shape = if a.shape().len() == 1 {
        alloc::vec![n]
    } else {
        alloc::vec![m, n]
    };
    Tensor::new(shape, out)
}

pub fn transpose<T: Real>(a: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (r, c) = a.dims2();
    if a.shape().len() != 2 {
        return Err(TensorError::InvalidAxis("transpose"));
    }
    let d = a.data();
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(d[i * c + j]);
        }
    }
    Tensor::new([c, r], out)
}

/// Broadcast `bias` (length = columns) over every row.
pub fn bias_add<T: Real>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    finite("bias_add", x)?;
    finite("bias_add", bias)?;
    let (_, c) = x.dims2();
    if bias.len() != c {
        return Err(mismatch("bias_add", x, bias));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if a.shape() != b.shape() {
        return Err(mismatch("add", a, b));
    }
    let mut out = a.clone();
    out.add_assign(b);
    finite("add", &out)?;
    Ok(out)
}

fn softmax_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (_, c) = x.dims2();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Softmax along `axis` (0 or 1 for matrices, 0 for vectors).
pub fn softmax<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>, TensorError> {
    finite("softmax", x)?;
    let rank = x.shape().len().max(1);
    if axis >= rank {
        return Err(TensorError::InvalidAxis("softmax"));
    }
    if axis == rank - 1 {
        Ok(softmax_rows(x))
    } else {
        transpose(&softmax_rows(&transpose(x)?))
    }
}

pub(crate) struct LayerNormOut<T> {
    pub out: Tensor<T>,
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn layer_norm_full<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<LayerNormOut<T>, TensorError> {
    finite("layer_norm", x)?;
    let (r, c) = x.dims2();
    if gain.len() != c || bias.len() != c {
        return Err(mismatch("layer_norm", x, gain));
    }
    let n = T::lit(c as f64);
    let mut xhat = x.clone();
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(r);
    for i in 0..r {
        let row = x.row(i);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        inv_std.push(inv);
        let xr = &mut xhat.data_mut()[i * c..(i + 1) * c];
        for (h, &v) in xr.iter_mut().zip(row) {
            *h = (v - mean) * inv;
        }
        let xr = &xhat.data()[i * c..(i + 1) * c];
        let or = &mut out.data_mut()[i * c..(i + 1) * c];
        for (((o, &x), &g), &b) in or.iter_mut().zip(xr).zip(gain.data()).zip(bias.data()) {
            *o = x * g + b;
        }
    }
    finite("layer_norm", &out)?;
    Ok(LayerNormOut { out, xhat, inv_std })
}

/// Per-row normalization to zero mean and unit (population) variance,
/// followed by an elementwise affine map.
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>, TensorError> {
    layer_norm_full(x, gain, bias, eps).map(|o| o.out)
}

pub(crate) fn gelu_scalar<T: Real>(x: T) -> T {
    T::lit(0.5) * x * (T::one() + (x * T::lit(core::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let cdf = T::lit(0.5) * (T::one() + (x * T::lit(core::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * T::lit(0.5)).exp() * T::lit(0.398_942_280_401_432_7);
    cdf + x * pdf
}

/// Exact (erf-based) GELU.
pub fn gelu<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    finite("gelu", x)?;
    Ok(x.map(gelu_scalar))
}

pub fn tanh<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    finite("tanh", x)?;
    Ok(x.map(T::tanh))
}

/// Inverted-dropout keep mask: each entry is 0 with probability `p`,
/// otherwise `1 / (1 - p)`.
pub(crate) fn dropout_mask<T: Real>(n: usize, p: f64, rng: &mut impl rand::Rng) -> Vec<T> {
    let scale = T::lit(1.0 / (1.0 - p));
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                scale
            }
        })
        .collect()
}

pub(crate) fn check_probability(p: f64) -> Result<(), TensorError> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(TensorError::InvalidProbability(p))
    }
}

/// Dropout with its own seeded stream. Identity when `training` is false.
pub fn dropout<T: Real>(
    x: &Tensor<T>,
    p: f64,
    seed: u64,
    training: bool,
) -> Result<Tensor<T>, TensorError> {
    check_probability(p)?;
    finite("dropout", x)?;
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask::<T>(x.len(), p, &mut rng_for(seed, &[0xD809]));
    let mut out = x.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask) {
        *o *= m;
    }
    Ok(out)
}

/// Gather rows of `table` ([vocab, dim]) for each id.
pub fn embedding_lookup<T: Real>(table: &Tensor<T>, ids: &[u32]) -> Result<Tensor<T>, TensorError> {
    let (v, d) = table.dims2();
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let id = id as usize;
        if id >= v {
            return Err(TensorError::IndexOutOfRange {
                op: "embedding_lookup",
                index: id,
                len: v,
            });
        }
        out.extend_from_slice(table.row(id));
    }
    Tensor::new([ids.len(), d], out)
}

/// Mean negative log-likelihood over the batch, plus the row softmax.
pub(crate) fn cross_entropy_full<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>), TensorError> {
    finite("cross_entropy", logits)?;
    let (b, c) = logits.dims2();
    if labels.is_empty() || b == 0 {
        return Err(TensorError::EmptyBatch);
    }
    if labels.len() != b {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            left: logits.shape().to_vec(),
            right: alloc::vec![labels.len()],
        });
    }
    let mut loss = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                index: y,
                len: c,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[y];
    }
    Ok((loss / T::lit(b as f64), softmax_rows(logits)))
}

pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<T, TensorError> {
    cross_entropy_full(logits, labels).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn matmul_and_bias() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = t(&[3, 2], &[7., 8., 9., 10., 11., 12.]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[58., 64., 139., 154.]);
        assert!(matches!(
            matmul(&a, &a),
            Err(TensorError::ShapeMismatch { .. })
        ));
        let y = bias_add(&a, &t(&[3], &[1., 0., -1.])).unwrap();
        assert_eq!(y.data(), &[2., 2., 2., 5., 5., 5.]);
        let bad = t(&[2], &[f64::NAN, 0.0]);
        assert_eq!(tanh(&bad), Err(TensorError::NonFinite("tanh")));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&t(&[2], &[0., 0.]), 0).unwrap().data(), &[0.5, 0.5]);
        let x = t(&[2, 2], &[1., 3., 2., 5.]);
        let cols = softmax(&x, 0).unwrap();
        let s0 = cols.data()[0] + cols.data()[2];
        assert!((s0 - 1.0).abs() < 1e-12);
        assert!(softmax(&x, 2).is_err());
        let big = t(&[3], &[1000., 0., -1e9]);
        let y = softmax(&big, 0).unwrap();
        assert!(y.is_finite());
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = t(&[1, 4], &[3., 3., 3., 3.]);
        let y = layer_norm(&x, &Tensor::full([4], 1.0), &Tensor::zeros([4]), 1e-12).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_eval_is_identity_and_train_is_seeded() {
        let x = t(&[5], &[1., 2., 3., 4., 5.]);
        assert_eq!(dropout(&x, 0.3, 1, false).unwrap(), x);
        assert_eq!(
            dropout(&x, 0.3, 1, true).unwrap(),
            dropout(&x, 0.3, 1, true).unwrap()
        );
        assert_eq!(
            dropout(&x, 1.0, 1, true),
            Err(TensorError::InvalidProbability(1.0))
        );
    }

    #[test]
    fn dropout_preserves_expectation() {
        let ones = Tensor::<f64>::full([10_000], 1.0);
        let y = dropout(&ones, 0.3, 42, true).unwrap();
        let mean = y.sum() / 10_000.0;
        assert!((0.97..=1.03).contains(&mean), "mean {mean}");
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
        assert!((2_700..3_300).contains(&zeros));
    }

    #[test]
    fn embedding_bounds() {
        let table = t(&[3, 2], &[0., 1., 2., 3., 4., 5.]);
        assert_eq!(
            embedding_lookup(&table, &[2, 0]).unwrap().data(),
            &[4., 5., 0., 1.]
        );
        assert!(matches!(
            embedding_lookup(&table, &[3]),
            Err(TensorError::IndexOutOfRange { index: 3, .. })
        ));
    }

    #[test]
    fn cross_entropy_examples() {
        let l = cross_entropy(&t(&[1, 2], &[10., -10.]), &[0]).unwrap();
        assert!(l < 1e-4);
        let l = cross_entropy(&t(&[1, 2], &[0., 0.]), &[0]).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        let a = cross_entropy(&t(&[1, 2], &[1., -1.]), &[0]).unwrap();
        let b = cross_entropy(&t(&[1, 2], &[-1., 1.]), &[0]).unwrap();
        let both = cross_entropy(&t(&[2, 2], &[1., -1., -1., 1.]), &[0, 0]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-12);
        assert_eq!(
            cross_entropy(&Tensor::<f64>::zeros([0, 2]), &[]),
            Err(TensorError::EmptyBatch)
        );
    }
}
