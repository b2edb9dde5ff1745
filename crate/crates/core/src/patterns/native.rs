use super::kernels::ArrayMemory;
use super::{bind_arrays, ArrayBinding, PatternError, PatternSpec};
use crate::layout::Layout;

/// Real arrays stored under a layout, for running kernels on actual data.
#[derive(Debug, Clone)]
pub struct NativeArrays {
    bindings: Vec<ArrayBinding>,
    data: Vec<Vec<f64>>,
}

impl NativeArrays {
    /// Zero-filled arrays for `spec`, each laid out by `layout`.
    pub fn new(spec: &PatternSpec, layout: &Layout) -> Result<Self, PatternError> {
        let bindings = bind_arrays(spec, layout)?;
        let data = bindings
            .iter()
            .map(|b| vec![0.0; b.shape().num_elements() as usize])
            .collect();
        Ok(NativeArrays { bindings, data })
    }

    pub fn bindings(&self) -> &[ArrayBinding] {
        &self.bindings
    }

    #[inline]
    fn slot(&self, array: usize, index: &[u64]) -> usize {
        let b = &self.bindings[array];
        ((b.address(index) - b.base) / b.element_size) as usize
    }

    pub fn get(&self, array: usize, index: &[u64]) -> f64 {
        self.data[array][self.slot(array, index)]
    }

    pub fn set(&mut self, array: usize, index: &[u64], value: f64) {
        let slot = self.slot(array, index);
        self.data[array][slot] = value;
    }

    /// Fills array `array` from `f(row, col)`; two-dimensional arrays only.
    pub fn fill_2d(&mut self, array: usize, f: impl Fn(u64, u64) -> f64) {
        let bits = self.bindings[array].shape().bits().to_vec();
        let (cols, rows) = (1u64 << bits[0], 1u64 << bits[1]);
        for r in 0..rows {
            for c in 0..cols {
                self.set(array, &[r, c], f(r, c));
            }
        }
    }

    /// Runs the pattern's kernel over the stored data.
    pub fn run(&mut self, spec: &PatternSpec) {
        spec.run(self);
    }
}

impl ArrayMemory for NativeArrays {
    #[inline]
    fn load(&mut self, array: usize, index: &[u64]) -> f64 {
        self.get(array, index)
    }

    #[inline]
    fn store(&mut self, array: usize, index: &[u64], value: f64) {
        self.set(array, index, value);
    }
}
