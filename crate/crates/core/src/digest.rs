//! Content digests over weight tensors (FNV-1a 64). Used to assert the
//! frozen-LM invariant and to detect corrupt checkpoints.

use crate::real::Real;
use crate::tensor::Tensor;
use alloc::format;
use alloc::string::String;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Digest(pub u64);

impl Digest {
    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }
}

pub struct Hasher {
    state: u64,
}

impl Hasher {
    pub fn new() -> Self {
        Hasher {
            state: 0xcbf2_9ce4_8422_2325,
        }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= u64::from(b);
            self.state = self.state.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_tensor<R: Real>(&mut self, t: &Tensor<R>) {
        self.write_u64(t.rows() as u64);
        self.write_u64(t.cols() as u64);
        for &v in t.data() {
            self.write_u64(v.bits());
        }
    }

    pub fn finish(&self) -> Digest {
        Digest(self.state)
    }
}

impl Default for Hasher {
    fn default() -> Self {
        Self::new()
    }
}

/// Digest of a sequence of tensors in canonical order.
pub fn digest_tensors<'a, R: Real>(tensors: impl Iterator<Item = &'a Tensor<R>>) -> Digest {
    let mut h = Hasher::new();
    for t in tensors {
        h.write_tensor(t);
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_across_calls() {
        let t = Tensor::<f32>::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let a = digest_tensors([&t].into_iter());
        let b = digest_tensors([&t].into_iter());
        assert_eq!(a, b);
    }

    #[test]
    fn single_value_perturbation_changes_digest() {
        let t = Tensor::<f32>::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let mut u = t.clone();
        u.data_mut()[3] += 1e-6;
        assert_ne!(
            digest_tensors([&t].into_iter()),
            digest_tensors([&u].into_iter())
        );
    }
}
