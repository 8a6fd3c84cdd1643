//! Multi-dimensional DFT on row-major grids.
//!
//! Forward transforms use `exp(-2πi k·r / N)` without scaling; inverse
//! transforms use `exp(+2πi k·r / N)` and carry the `1/N` factor.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct FftNd {
    dims: Vec<usize>,
    len: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("dims", &self.dims).finish()
    }
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        FftNd {
            dims: dims.to_vec(),
            len: dims.iter().product(),
            forward,
            inverse,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform including the `1/N` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Inverse transform without the `1/N` factor.
    pub fn inverse_unscaled(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len, "buffer does not match FFT grid");
        let ndim = self.dims.len();
        let mut line = Vec::new();
        let mut scratch = Vec::new();
        for axis in 0..ndim {
            let n = self.dims[axis];
            if n == 1 {
                continue;
            }
            let plan = &plans[axis];
            let need = plan.get_inplace_scratch_len();
            if scratch.len() < need {
                scratch.resize(need, Complex64::default());
            }
            let stride: usize = self.dims[axis + 1..].iter().product();
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch[..need]);
                continue;
            }
            line.resize(n, Complex64::default());
            let block = n * stride;
            for outer in 0..self.len / block {
                let base = outer * block;
                for inner in 0..stride {
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[base + i * stride + inner];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch[..need]);
                    for (i, v) in line.iter().enumerate() {
                        data[base + i * stride + inner] = *v;
                    }
                }
            }
        }
    }
}
