use alloc::vec::Vec;

use super::ModelError;
use crate::tensor::{Real, Tensor};

/// Quantized latent: `L x D` bits in {-1, +1}, equivalently `L` token ids.
///
/// Bit `d = 0` is the most significant bit of the token id and `+1` maps to 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentCode {
    code_length: usize,
    bits_per_token: usize,
    bits: Vec<i8>,
}

impl LatentCode {
    pub fn from_bits(code_length: usize, bits_per_token: usize, bits: Vec<i8>) -> Result<Self, ModelError> {
        if bits.len() != code_length * bits_per_token || bits.iter().any(|b| b.abs() != 1) {
            return Err(ModelError::InvalidCode(alloc::format!(
                "expected {code_length}x{bits_per_token} values in {{-1, +1}}"
            )));
        }
        Ok(Self {
            code_length,
            bits_per_token,
            bits,
        })
    }

    /// Rejects ids outside `[0, 2^D)`.
    pub fn from_token_ids(ids: &[u32], bits_per_token: usize) -> Result<Self, ModelError> {
        let vocab = 1u64 << bits_per_token;
        let mut bits = Vec::with_capacity(ids.len() * bits_per_token);
        for &id in ids {
            if u64::from(id) >= vocab {
                return Err(ModelError::TokenOutOfRange { id, vocab });
            }
            for d in 0..bits_per_token {
                let bit = (id >> (bits_per_token - 1 - d)) & 1;
                bits.push(if bit == 1 { 1 } else { -1 });
            }
        }
        Ok(Self {
            code_length: ids.len(),
            bits_per_token,
            bits,
        })
    }

    pub fn token_ids(&self) -> Vec<u32> {
        self.bits
            .chunks_exact(self.bits_per_token)
            .map(|tok| tok.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b > 0)))
            .collect()
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn bits_per_token(&self) -> usize {
        self.bits_per_token
    }

    /// Bits as an `L x D` tensor.
    pub fn to_tensor<R: Real>(&self) -> Tensor<R> {
        Tensor::from_fn(&[self.code_length, self.bits_per_token], |i| {
            R::from_f64(f64::from(self.bits[i]))
        })
    }
}

/// Sign quantizer with `sign(0) = +1`. `e` is `[.., L, D]`; one code per leading index.
pub fn quantize<R: Real>(e: &Tensor<R>) -> Vec<LatentCode> {
    let shape = e.shape();
    let bits_per_token = shape[shape.len() - 1];
    let code_length = if shape.len() >= 2 { shape[shape.len() - 2] } else { 1 };
    e.data()
        .chunks_exact(code_length * bits_per_token)
        .map(|chunk| LatentCode {
            code_length,
            bits_per_token,
            bits: chunk.iter().map(|&v| if v >= R::zero() { 1 } else { -1 }).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sign_conventions() {
        let neg = Tensor::<f32>::full(&[3, 4], -0.5);
        assert_eq!(quantize(&neg)[0].token_ids(), vec![0; 3]);
        let pos = Tensor::<f32>::full(&[3, 4], 0.5);
        assert_eq!(quantize(&pos)[0].token_ids(), vec![15; 3]);
        let zero = Tensor::<f32>::zeros(&[1, 2]);
        assert_eq!(quantize(&zero)[0].bits(), &[1, 1]);
    }

    #[test]
    fn msb_first() {
        let mut bits = vec![-1i8; 12];
        bits[0] = 1;
        let code = LatentCode::from_bits(1, 12, bits).unwrap();
        assert_eq!(code.token_ids(), vec![2048]);
    }

    #[test]
    fn all_ids_round_trip_at_twelve_bits() {
        let ids: Vec<u32> = (0..4096).collect();
        let code = LatentCode::from_token_ids(&ids, 12).unwrap();
        assert_eq!(code.token_ids(), ids);
        let again = LatentCode::from_bits(4096, 12, code.bits().to_vec()).unwrap();
        assert_eq!(again, code);
    }

    #[test]
    fn out_of_range_id_rejected() {
        assert!(matches!(
            LatentCode::from_token_ids(&[4096], 12),
            Err(ModelError::TokenOutOfRange { id: 4096, vocab: 4096 })
        ));
    }

    #[test]
    fn quantize_is_idempotent() {
        let e = Tensor::<f64>::from_fn(&[5, 3], |i| (i as f64 * 0.37).sin());
        let code = quantize(&e).remove(0);
        let again = quantize(&code.to_tensor::<f64>()).remove(0);
        assert_eq!(code, again);
    }
}
