use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Scalar>(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.uniform_range(-bound, bound)))
        .collect();
    Tensor::from_vec(&[rows, cols], data).expect("xavier shape")
}

/// Standard normal entries scaled by `1 / sqrt(cols)`.
pub fn scaled_normal<T: Scalar>(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor<T> {
    let scale = 1.0 / (cols.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::lit(rng.normal() * scale)).collect();
    Tensor::from_vec(&[rows, cols], data).expect("normal shape")
}
