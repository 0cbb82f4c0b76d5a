use std::collections::HashMap;
use std::sync::Mutex;

use cnvb_core::convspec::kernel_operator_norm;
use cnvb_core::norms::LayerNorms;
use cnvb_core::tensor::RealTensor4;
use cnvb_core::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    dims: [usize; 4],
    input_size: usize,
    bits: Vec<u64>,
}

/// Memoizes convolution operator norms by exact kernel contents, so repeated
/// distance queries over the same snapshots skip the per-frequency work.
#[derive(Debug, Default)]
pub struct NormCache {
    entries: Mutex<HashMap<Key, f64>>,
}

impl NormCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map_or(0, |m| m.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LayerNorms for NormCache {
    fn conv_norm(&self, kernel: &RealTensor4, input_size: usize) -> Result<f64> {
        let key = Key {
            dims: kernel.dims(),
            input_size,
            bits: kernel.data().iter().map(|v| v.to_bits()).collect(),
        };
        if let Some(&v) = self.entries.lock().ok().as_ref().and_then(|m| m.get(&key)) {
            return Ok(v);
        }
        let v = kernel_operator_norm(kernel, input_size)?;
        if let Ok(mut m) = self.entries.lock() {
            m.insert(key, v);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cnvb_core::norms::DirectNorms;
    use cnvb_core::rng::SeededRng;

    #[test]
    fn cached_matches_direct() {
        let cache = NormCache::new();
        let k = RealTensor4::gaussian([3, 3, 2, 2], &mut SeededRng::new(1));
        let a = cache.conv_norm(&k, 6).unwrap();
        let b = cache.conv_norm(&k, 6).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), DirectNorms.conv_norm(&k, 6).unwrap().to_bits());
        cache.conv_norm(&k, 5).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
