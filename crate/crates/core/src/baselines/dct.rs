use alloc::vec::Vec;

use num_traits::Float;

/// Orthonormal DCT-II basis for signals of length `n`, stored row-major as
/// `basis[k * n + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    n: usize,
    basis: Vec<f64>,
}

impl DctBasis {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "DCT length must be positive");
        let nf = n as f64;
        let mut basis = Vec::with_capacity(n * n);
        for k in 0..n {
            let norm = if k == 0 {
                Float::sqrt(1.0 / nf)
            } else {
                Float::sqrt(2.0 / nf)
            };
            for i in 0..n {
                let angle = core::f64::consts::PI * (i as f64 + 0.5) * k as f64 / nf;
                basis.push(norm * Float::cos(angle));
            }
        }
        Self { n, basis }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, signal: &[f64]) -> Vec<f64> {
        assert_eq!(signal.len(), self.n);
        self.basis
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(signal).map(|(b, x)| b * x).sum())
            .collect()
    }

    /// Transpose of the forward transform.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let mut out = alloc::vec![0.0; self.n];
        for (row, &c) in self.basis.chunks_exact(self.n).zip(coeffs) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        out
    }
}

pub fn dct_forward(signal: &[f64]) -> Vec<f64> {
    DctBasis::new(signal.len()).forward(signal)
}

pub fn dct_inverse(coeffs: &[f64]) -> Vec<f64> {
    DctBasis::new(coeffs.len()).inverse(coeffs)
}
