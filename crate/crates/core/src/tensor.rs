//! Dense row-major f64 tensors and the handful of numeric operations the
//! models need. No broadcasting, no views: every operation states its shape
//! contract and returns a fresh tensor, so the numeric behavior stays easy
//! to audit and bit-reproducible.

use crate::error::{Error, Result};

/// Dense n-dimensional array of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Fresh tensor with entries drawn uniformly from [lo, hi).
    pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut crate::rng::SeededRng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterpret the flat data under a new shape with the same element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Row slice of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Matrix product of a [m×k] and b [k×n]. Each output entry accumulates over
/// k in ascending order, so results are bit-reproducible.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = dims2(a, "matmul lhs")?;
    let (kb, n) = dims2(b, "matmul rhs")?;
    if k != kb {
        return Err(Error::Shape(format!(
            "matmul inner dimensions disagree: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (kk, &aval) in arow.iter().enumerate() {
            let brow = &b.data[kk * n..(kk + 1) * n];
            for j in 0..n {
                crow[j] += aval * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// aᵀ·b for a [k×m], b [k×n] -> [m×n].
pub(crate) fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = dims2(a, "matmul_tn lhs")?;
    let (kb, n) = dims2(b, "matmul_tn rhs")?;
    if k != kb {
        return Err(Error::Shape(format!(
            "matmul_tn inner dimensions disagree: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for kk in 0..k {
        let arow = &a.data[kk * m..(kk + 1) * m];
        let brow = &b.data[kk * n..(kk + 1) * n];
        for i in 0..m {
            let aval = arow[i];
            let crow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aval * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// a·bᵀ for a [m×k], b [n×k] -> [m×n].
pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = dims2(a, "matmul_nt lhs")?;
    let (n, kb) = dims2(b, "matmul_nt rhs")?;
    if k != kb {
        return Err(Error::Shape(format!(
            "matmul_nt inner dimensions disagree: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for kk in 0..k {
                acc += arow[kk] * brow[kk];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], out)
}

fn dims2<'a>(t: &'a Tensor, what: &str) -> Result<(usize, usize)> {
    if t.shape.len() != 2 {
        return Err(Error::Shape(format!(
            "{} must be 2-D, got shape {:?}",
            what, t.shape
        )));
    }
    Ok((t.shape[0], t.shape[1]))
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic sigmoid; outputs in (0, 1).
pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data.iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor {
        shape: x.shape.clone(),
        data,
    }
}

/// Elementwise tanh; outputs in (-1, 1).
pub fn tanh(x: &Tensor) -> Tensor {
    let data = x.data.iter().map(|&v| v.tanh()).collect();
    Tensor {
        shape: x.shape.clone(),
        data,
    }
}

/// Row-wise softmax of a 2-D tensor, computed with max subtraction so large
/// logits do not overflow.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (n, c) = dims2(x, "softmax_rows input")?;
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        let row = &x.data[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out[i * c..(i + 1) * c];
        let mut sum = 0.0;
        for j in 0..c {
            let e = (row[j] - max).exp();
            orow[j] = e;
            sum += e;
        }
        for v in orow.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(vec![n, c], out)
}

/// Scale each row of a 2-D tensor to unit Euclidean norm. Rows with norm
/// below `eps` come back zeroed, with their flag set; nothing is fatal here
/// because downstream cosine treats zero rows as similarity 0.
pub fn l2_normalize_rows(x: &Tensor, eps: f64) -> Result<(Tensor, Vec<bool>)> {
    let (n, d) = dims2(x, "l2_normalize_rows input")?;
    let mut out = vec![0.0; n * d];
    let mut degenerate = vec![false; n];
    for i in 0..n {
        let row = &x.data[i * d..(i + 1) * d];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let orow = &mut out[i * d..(i + 1) * d];
        if norm < eps {
            degenerate[i] = true;
        } else {
            for j in 0..d {
                orow[j] = row[j] / norm;
            }
        }
    }
    Ok((Tensor::new(vec![n, d], out)?, degenerate))
}

/// Compare an analytic gradient against central finite differences of a
/// scalar-valued function, coordinate by coordinate. Returns the maximum
/// relative error, where the denominator is max(|numeric|, |analytic|, 1e-8).
pub fn finite_diff_check<F>(mut f: F, x: &Tensor, analytic: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if x.shape != analytic.shape {
        return Err(Error::Shape(format!(
            "analytic gradient shape {:?} does not match input shape {:?}",
            analytic.shape, x.shape
        )));
    }
    let mut probe = x.clone();
    let mut max_rel = 0.0f64;
    for i in 0..x.numel() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let fp = f(&probe)?;
        probe.data[i] = orig - h;
        let fm = f(&probe)?;
        probe.data[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "finite_diff_check: non-finite function value at coordinate {}",
                i
            )));
        }
        let numeric = (fp - fm) / (2.0 * h);
        let g = analytic.data[i];
        let rel = (numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn matmul_identity_case() {
        let i = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = matmul(&i, &b).unwrap();
        assert_eq!(c.data(), b.data());
    }

    #[test]
    fn matmul_hand_computed() {
        let a = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    // Independent naive reference for the matmul oracle check.
    fn matmul_naive(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.data()[i * k + kk] * b.data()[kk * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = SeededRng::new(11);
        let a = Tensor::uniform(vec![5, 7], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(vec![7, 3], -1.0, 1.0, &mut rng);
        let c = matmul(&a, &b).unwrap();
        let reference = matmul_naive(&a, &b);
        for (x, y) in c.data().iter().zip(reference.iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn matmul_identity_is_bit_exact() {
        let mut rng = SeededRng::new(5);
        let a = Tensor::uniform(vec![4, 6], -3.0, 3.0, &mut rng);
        let mut eye = Tensor::zeros(vec![4, 4]);
        for i in 0..4 {
            eye.data_mut()[i * 4 + i] = 1.0;
        }
        let c = matmul(&eye, &a).unwrap();
        for (x, y) in c.data().iter().zip(a.data().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 2]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{}", msg);
    }

    #[test]
    fn transposed_variants_match_explicit_transpose() {
        let mut rng = SeededRng::new(17);
        let a = Tensor::uniform(vec![4, 3], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(vec![4, 5], -1.0, 1.0, &mut rng);
        // aᵀ·b
        let mut at = Tensor::zeros(vec![3, 4]);
        for i in 0..4 {
            for j in 0..3 {
                at.data_mut()[j * 4 + i] = a.data()[i * 3 + j];
            }
        }
        let want = matmul(&at, &b).unwrap();
        let got = matmul_tn(&a, &b).unwrap();
        for (x, y) in got.data().iter().zip(want.data().iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
        // a·bᵀ with a [4×3] against rows of c [6×3]
        let c = Tensor::uniform(vec![6, 3], -1.0, 1.0, &mut rng);
        let mut ct = Tensor::zeros(vec![3, 6]);
        for i in 0..6 {
            for j in 0..3 {
                ct.data_mut()[j * 6 + i] = c.data()[i * 3 + j];
            }
        }
        let want = matmul(&a, &ct).unwrap();
        let got = matmul_nt(&a, &c).unwrap();
        for (x, y) in got.data().iter().zip(want.data().iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let x = Tensor::zeros(vec![3]);
        assert_eq!(sigmoid(&x).data(), &[0.5, 0.5, 0.5]);
        assert_eq!(tanh(&x).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn sigmoid_symmetry_identity() {
        let mut rng = SeededRng::new(2);
        let x = Tensor::uniform(vec![64], -6.0, 6.0, &mut rng);
        let neg = Tensor::new(vec![64], x.data().iter().map(|v| -v).collect()).unwrap();
        let s = sigmoid(&x);
        let sn = sigmoid(&neg);
        for (a, b) in s.data().iter().zip(sn.data().iter()) {
            assert!((a + b - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_uniform_row() {
        let x = Tensor::zeros(vec![1, 3]);
        let s = softmax_rows(&x).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_large_logit_is_stable() {
        let x = Tensor::new(vec![1, 2], vec![1000.0, 0.0]).unwrap();
        let s = softmax_rows(&x).unwrap();
        assert!((s.data()[0] - 1.0).abs() <= 1e-12);
        assert!(s.data()[1].abs() <= 1e-12);
        assert!(s.is_finite());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = SeededRng::new(9);
        let x = Tensor::uniform(vec![6, 5], -4.0, 4.0, &mut rng);
        let s = softmax_rows(&x).unwrap();
        for i in 0..6 {
            let sum: f64 = s.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(s.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn normalize_three_four_five() {
        let x = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let (y, flags) = l2_normalize_rows(&x, 1e-12).unwrap();
        assert!((y.data()[0] - 0.6).abs() <= 1e-12);
        assert!((y.data()[1] - 0.8).abs() <= 1e-12);
        assert!(!flags[0]);
    }

    #[test]
    fn normalize_zero_row_is_flagged() {
        let x = Tensor::zeros(vec![1, 2]);
        let (y, flags) = l2_normalize_rows(&x, 1e-12).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
        assert!(flags[0]);
    }

    #[test]
    fn normalize_is_scale_invariant() {
        let mut rng = SeededRng::new(4);
        let v = Tensor::uniform(vec![1, 8], -1.0, 1.0, &mut rng);
        let scaled = Tensor::new(vec![1, 8], v.data().iter().map(|x| 7.3 * x).collect()).unwrap();
        let (a, _) = l2_normalize_rows(&v, 1e-12).unwrap();
        let (b, _) = l2_normalize_rows(&scaled, 1e-12).unwrap();
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn finite_diff_quadratic() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let analytic = Tensor::new(vec![2], vec![2.0, 4.0]).unwrap();
        let err = finite_diff_check(
            |t| Ok(t.data().iter().map(|v| v * v).sum()),
            &x,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-7, "relative error {}", err);
    }

    #[test]
    fn finite_diff_constant_function() {
        let x = Tensor::new(vec![3], vec![0.3, -0.2, 1.1]).unwrap();
        let analytic = Tensor::zeros(vec![3]);
        let err = finite_diff_check(|_| Ok(4.2), &x, &analytic, 1e-5).unwrap();
        assert!(err <= 1e-7);
    }

    #[test]
    fn finite_diff_rejects_non_finite() {
        let x = Tensor::new(vec![1], vec![1.0]).unwrap();
        let analytic = Tensor::zeros(vec![1]);
        let err = finite_diff_check(|_| Ok(f64::NAN), &x, &analytic, 1e-5);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
