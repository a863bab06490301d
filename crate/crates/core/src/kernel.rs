//! Dense row-major matrices and affine layers with explicit backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IqaError, Result};

/// Floating type used for all parameters, activations and gradients.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Real>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(IqaError::shape(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<Real>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(values: &[Real]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[Real] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Real> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Real {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Real) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Real] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [Real] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(Real) -> Real) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: Real) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Affine map `y = x W^T + b` with gradient buffers of matching shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: Matrix,
    pub bias: Vec<Real>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<Real>,
}

impl LinearLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            grad_weight: Matrix::zeros(out_dim, in_dim),
            grad_bias: vec![0.0; out_dim],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn init_uniform<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        let bound = 1.0 / (in_dim as f64).sqrt();
        for w in layer.weight.data_mut() {
            *w = rng.gen_range(-bound..=bound) as Real;
        }
        layer
    }

    pub fn from_parts(weight: Matrix, bias: Vec<Real>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(IqaError::shape(
                "LinearLayer::from_parts",
                weight.rows(),
                bias.len(),
            ));
        }
        let (o, i) = weight.shape();
        Ok(Self {
            weight,
            bias,
            grad_weight: Matrix::zeros(o, i),
            grad_bias: vec![0.0; o],
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(IqaError::shape(
                "linear_forward",
                format!("{} input columns", self.in_dim()),
                x.cols(),
            ));
        }
        let out_dim = self.out_dim();
        let mut out = Matrix::zeros(x.rows(), out_dim);
        for b in 0..x.rows() {
            let xr = x.row(b);
            let yr = out.row_mut(b);
            for (o, y) in yr.iter_mut().enumerate() {
                *y = dot(self.weight.row(o), xr) + self.bias[o];
            }
        }
        Ok(out)
    }

    /// Accumulates `grad_weight += upstream^T x`, `grad_bias += colsum(upstream)`
    /// and returns `upstream W`.
    pub fn backward(&mut self, x: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim()
            || upstream.cols() != self.out_dim()
            || x.rows() != upstream.rows()
        {
            return Err(IqaError::shape(
                "linear_backward",
                format!("x: B x {}, upstream: B x {}", self.in_dim(), self.out_dim()),
                format!(
                    "x: {} x {}, upstream: {} x {}",
                    x.rows(),
                    x.cols(),
                    upstream.rows(),
                    upstream.cols()
                ),
            ));
        }
        let in_dim = self.in_dim();
        let mut dx = Matrix::zeros(x.rows(), in_dim);
        for b in 0..x.rows() {
            let xr = x.row(b);
            let ur = upstream.row(b);
            for (o, &u) in ur.iter().enumerate() {
                if u == 0.0 {
                    continue;
                }
                self.grad_bias[o] += u;
                axpy(u, xr, self.grad_weight.row_mut(o));
                axpy(u, self.weight.row(o), dx.row_mut(b));
            }
        }
        Ok(dx)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[inline]
pub fn dot(a: &[Real], b: &[Real]) -> Real {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0 as Real; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(alpha: Real, x: &[Real], y: &mut [Real]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(w: &[Vec<Real>], b: &[Real]) -> LinearLayer {
        LinearLayer::from_parts(Matrix::from_rows(w), b.to_vec()).unwrap()
    }

    #[test]
    fn forward_identity() {
        let l = layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]);
        let y = l.forward(&Matrix::from_rows(&[vec![3.0, 4.0]])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn forward_scalar_affine() {
        let l = layer(&[vec![2.0]], &[1.0]);
        let y = l.forward(&Matrix::from_rows(&[vec![3.0]])).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn forward_hand_matmul() {
        let l = layer(&[vec![1.0, 2.0], vec![3.0, 4.0]], &[0.5, -0.5]);
        let y = l.forward(&Matrix::from_rows(&[vec![1.0, 1.0]])).unwrap();
        assert_eq!(y.data(), &[3.5, 6.5]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let l = layer(&[vec![1.0, 2.0]], &[0.0]);
        let err = l.forward(&Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]));
        assert!(matches!(err, Err(IqaError::Shape { .. })));
    }

    #[test]
    fn backward_identity() {
        let mut l = layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]);
        let x = Matrix::from_rows(&[vec![5.0, 6.0]]);
        let dx = l
            .backward(&x, &Matrix::from_rows(&[vec![1.0, 0.0]]))
            .unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0]);
    }

    #[test]
    fn backward_scalar_chain_rule() {
        let mut l = layer(&[vec![2.0]], &[1.0]);
        let x = Matrix::from_rows(&[vec![3.0]]);
        let dx = l.backward(&x, &Matrix::from_rows(&[vec![1.0]])).unwrap();
        assert_eq!(l.grad_weight.data(), &[3.0]);
        assert_eq!(l.grad_bias, vec![1.0]);
        assert_eq!(dx.data(), &[2.0]);
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let mut l = layer(&[vec![2.0]], &[1.0]);
        let x = Matrix::from_rows(&[vec![3.0]]);
        assert!(l
            .backward(&x, &Matrix::from_rows(&[vec![1.0, 2.0]]))
            .is_err());
    }

    #[test]
    fn backward_accumulates_until_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = LinearLayer::init_uniform(3, 2, &mut rng);
        assert!(l.grad_weight.data().iter().all(|&g| g == 0.0));
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]);
        let up = Matrix::from_rows(&[vec![1.5, -0.25]]);
        l.backward(&x, &up).unwrap();
        let once = (l.grad_weight.clone(), l.grad_bias.clone());
        l.backward(&x, &up).unwrap();
        for (a, b) in l.grad_weight.data().iter().zip(once.0.data()) {
            assert_eq!(*a, 2.0 * b);
        }
        for (a, b) in l.grad_bias.iter().zip(&once.1) {
            assert_eq!(*a, 2.0 * b);
        }
        l.zero_grad();
        assert!(l.grad_weight.data().iter().all(|&g| g == 0.0));
        assert!(l.grad_bias.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = LinearLayer::init_uniform(16, 8, &mut rng);
        let bound = 0.25;
        assert!(l.weight.data().iter().all(|w| w.abs() <= bound));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }

    #[cfg(not(feature = "f32"))]
    #[test]
    fn backward_matches_central_differences() {
        // L = sum_{b,o} c[b,o] * y[b,o] + 0.5 * sum y^2
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut l = LinearLayer::init_uniform(4, 3, &mut rng);
        l.bias = vec![0.1, -0.2, 0.3];
        let x = Matrix::from_rows(&[vec![0.3, -0.7, 1.1, 0.2], vec![-0.4, 0.9, 0.05, -1.3]]);
        let c = Matrix::from_rows(&[vec![0.2, -1.0, 0.5], vec![0.7, 0.1, -0.3]]);
        let loss = |l: &LinearLayer, x: &Matrix| -> f64 {
            let y = l.forward(x).unwrap();
            y.data()
                .iter()
                .zip(c.data())
                .map(|(&y, &c)| c * y + 0.5 * y * y)
                .sum()
        };
        let y = l.forward(&x).unwrap();
        let up = Matrix::from_vec(
            2,
            3,
            y.data()
                .iter()
                .zip(c.data())
                .map(|(&y, &c)| c + y)
                .collect(),
        )
        .unwrap();
        let dx = l.backward(&x, &up).unwrap();
        let h = 1e-5;
        let close = |a: f64, n: f64| (a - n).abs() <= 1e-4 * a.abs().max(1.0);
        for i in 0..l.weight.data().len() {
            let mut p = l.clone();
            p.weight.data_mut()[i] += h;
            let mut m = l.clone();
            m.weight.data_mut()[i] -= h;
            let num = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(close(l.grad_weight.data()[i], num));
        }
        for i in 0..3 {
            let mut p = l.clone();
            p.bias[i] += h;
            let mut m = l.clone();
            m.bias[i] -= h;
            let num = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(close(l.grad_bias[i], num));
        }
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let num = (loss(&l, &xp) - loss(&l, &xm)) / (2.0 * h);
            assert!(close(dx.data()[i], num));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn forward_is_additive_in_x(
                w in proptest::collection::vec(-2.0f64..2.0, 6),
                x1 in proptest::collection::vec(-3.0f64..3.0, 3),
                x2 in proptest::collection::vec(-3.0f64..3.0, 3),
            ) {
                let w: Vec<Real> = w.into_iter().map(|v| v as Real).collect();
                let l = LinearLayer::from_parts(Matrix::from_vec(2, 3, w).unwrap(), vec![0.0; 2]).unwrap();
                let a = Matrix::from_vec(1, 3, x1.iter().map(|&v| v as Real).collect()).unwrap();
                let b = Matrix::from_vec(1, 3, x2.iter().map(|&v| v as Real).collect()).unwrap();
                let s = Matrix::from_vec(1, 3, x1.iter().zip(&x2).map(|(p, q)| (p + q) as Real).collect()).unwrap();
                let ya = l.forward(&a).unwrap();
                let yb = l.forward(&b).unwrap();
                let ys = l.forward(&s).unwrap();
                for o in 0..2 {
                    let sum = ya.get(0, o) + yb.get(0, o);
                    prop_assert!((ys.get(0, o) - sum).abs() <= 1e-5 * (1.0 + sum.abs()));
                }
            }
        }
    }
}
