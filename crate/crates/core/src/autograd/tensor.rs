use super::Float;
use crate::error::{shape_err, Result};

/// Dense row-major array of rank 1 to 4. Image tensors are NCHW.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return shape_err(format!("rank must be 1..=4, got {:?}", shape));
    }
    if shape.iter().any(|&d| d == 0) {
        return shape_err(format!("extents must be positive, got {:?}", shape));
    }
    Ok(shape.iter().product())
}

impl<T: Float> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return shape_err(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            ));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self { shape: shape.to_vec(), data: vec![value; n] })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Shape padded on the right to rank 4, so `(N, C)` reads as `(N, C, 1, 1)`.
    pub fn dims4(&self) -> [usize; 4] {
        dims4(&self.shape)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return shape_err(format!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Element at a full multi-index.
    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {} out of range on axis {}", ix, i);
            flat = flat * d + ix;
        }
        self.data[flat]
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of_usize(self.data.len())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Single-channel plane `(n, c)` of an NCHW tensor.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let [_, cs, h, w] = self.dims4();
        let start = (n * cs + c) * h * w;
        &self.data[start..start + h * w]
    }
}

pub(crate) fn dims4(shape: &[usize]) -> [usize; 4] {
    let mut d = [1; 4];
    d[..shape.len()].copy_from_slice(shape);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fill() {
        let t = Tensor::<f64>::zeros(&[1, 1, 2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
    }

    #[test]
    fn ones_sum() {
        let t = Tensor::<f64>::ones(&[2, 3, 4, 4]).unwrap();
        assert_eq!(t.len(), 96);
        assert_eq!(t.sum(), 96.0);
    }

    #[test]
    fn row_major_indexing() {
        let t = Tensor::<f64>::from_f64(&[1, 2, 2, 2], &[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        assert_eq!(t.at(&[0, 1, 1, 1]), 8.0);
        // flat = ((n*C + c)*H + y)*W + x
        for c in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let flat = (c * 2 + y) * 2 + x;
                    assert_eq!(t.at(&[0, c, y, x]), (flat + 1) as f64);
                }
            }
        }
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(Tensor::<f32>::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f32>::zeros(&[0, 2]).is_err());
        assert!(Tensor::<f32>::zeros(&[1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn dims4_pads_right() {
        let t = Tensor::<f32>::zeros(&[3, 5]).unwrap();
        assert_eq!(t.dims4(), [3, 5, 1, 1]);
    }
}
