//! Small sample-statistics helpers shared by the reward estimator and the
//! evaluation reports.

use crate::scalar::Scalar;

/// Arithmetic mean; 0 on an empty slice.
pub fn mean<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    xs.iter().copied().sum::<S>() / S::from_usize_c(xs.len())
}

/// Unbiased sample variance (divides by n−1); 0 when fewer than 2 samples.
pub fn sample_variance<S: Scalar>(xs: &[S]) -> S {
    if xs.len() < 2 {
        return S::zero();
    }
    let m = mean(xs);
    let ss = xs.iter().map(|&x| (x - m) * (x - m)).sum::<S>();
    ss / S::from_usize_c(xs.len() - 1)
}

/// Unbiased-variance standard deviation.
pub fn sample_std<S: Scalar>(xs: &[S]) -> S {
    sample_variance(xs).sqrt()
}

/// Standard error of the mean; 0 when fewer than 2 samples.
pub fn standard_error<S: Scalar>(xs: &[S]) -> S {
    if xs.len() < 2 {
        return S::zero();
    }
    sample_std(xs) / S::from_usize_c(xs.len()).sqrt()
}

/// Median by sorting a copy; 0 on an empty slice. NaNs are not expected here.
pub fn median<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median input must not contain NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / S::from_usize_c(2)
    }
}
