//! Elementwise nonlinearities for the hidden sites of the head, including the
//! per-channel gated blend
//!
//! ```text
//! y_c = w_c * gamma_c * sigmoid(alpha_c * x_c + beta_c) + (1 - w_c) * lrelu_{a_c}(x_c),
//! w_c = sigmoid(g_c)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{IqaError, Result};
use crate::kernel::{Matrix, Real};

/// Default negative slope of the plain (non-gated) LeakyReLU.
pub const DEFAULT_LRELU_SLOPE: Real = 0.01;

pub const GATED_INIT_ALPHA: Real = 1.0;
pub const GATED_INIT_BETA: Real = 0.0;
pub const GATED_INIT_GAMMA: Real = 2.0;
pub const GATED_INIT_SLOPE: Real = 0.25;
pub const GATED_INIT_GATE: Real = 0.0;

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn leaky_relu(x: Real, slope: Real) -> Real {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`leaky_relu`]; the kink at 0 takes the positive-side slope.
#[inline]
pub fn leaky_relu_grad(x: Real, slope: Real) -> Real {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Exact GELU, `x * Phi(x)`.
#[inline]
pub fn gelu(x: Real) -> Real {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as Real
}

#[inline]
pub fn gelu_grad(x: Real) -> Real {
    let x = x as f64;
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (cdf + x * pdf) as Real
}

/// Configuration-level choice of nonlinearity for one hidden site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActivationKind {
    Sigmoid,
    LeakyRelu { slope: Real },
    Gelu,
    Tanh,
    Gated,
}

impl ActivationKind {
    pub fn lrelu() -> Self {
        ActivationKind::LeakyRelu {
            slope: DEFAULT_LRELU_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ActivationKind::LeakyRelu { slope } = self {
            if !(*slope > 0.0 && *slope < 1.0) {
                return Err(IqaError::Config(format!(
                    "LeakyReLU slope must lie in (0, 1), got {slope}"
                )));
            }
        }
        Ok(())
    }

    /// Short label used in tables, e.g. `Sig`, `LReLU`.
    pub fn label(&self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "Sig",
            ActivationKind::LeakyRelu { .. } => "LReLU",
            ActivationKind::Gelu => "GELU",
            ActivationKind::Tanh => "Tanh",
            ActivationKind::Gated => "Gated",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Sigmoid => f.write_str("sigmoid"),
            ActivationKind::LeakyRelu { slope } if *slope == DEFAULT_LRELU_SLOPE => {
                f.write_str("lrelu")
            }
            ActivationKind::LeakyRelu { slope } => write!(f, "lrelu:{slope}"),
            ActivationKind::Gelu => f.write_str("gelu"),
            ActivationKind::Tanh => f.write_str("tanh"),
            ActivationKind::Gated => f.write_str("gated"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = IqaError;

    /// Accepts `lrelu`, `lrelu:<slope>`, `sigmoid`, `gelu`, `tanh`, `gated`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let kind = match s.as_str() {
            "sigmoid" | "sig" => ActivationKind::Sigmoid,
            "lrelu" | "leakyrelu" => ActivationKind::lrelu(),
            "gelu" => ActivationKind::Gelu,
            "tanh" => ActivationKind::Tanh,
            "gated" => ActivationKind::Gated,
            other => match other.strip_prefix("lrelu:") {
                Some(slope) => ActivationKind::LeakyRelu {
                    slope: slope
                        .parse()
                        .map_err(|_| IqaError::Config(format!("bad LeakyReLU slope `{slope}`")))?,
                },
                None => {
                    return Err(IqaError::Config(format!(
                        "unknown activation `{other}` (expected lrelu, sigmoid, gelu, tanh, gated)"
                    )))
                }
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl TryFrom<String> for ActivationKind {
    type Error = IqaError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ActivationKind> for String {
    fn from(k: ActivationKind) -> String {
        k.to_string()
    }
}

/// Learnable per-channel parameters of one gated activation site.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedActivation {
    pub alpha: Vec<Real>,
    pub beta: Vec<Real>,
    pub gamma: Vec<Real>,
    pub slope: Vec<Real>,
    pub gate: Vec<Real>,
    pub grad_alpha: Vec<Real>,
    pub grad_beta: Vec<Real>,
    pub grad_gamma: Vec<Real>,
    pub grad_slope: Vec<Real>,
    pub grad_gate: Vec<Real>,
}

impl GatedActivation {
    pub const PARAMS_PER_CHANNEL: usize = 5;

    pub fn new(width: usize) -> Self {
        Self {
            alpha: vec![GATED_INIT_ALPHA; width],
            beta: vec![GATED_INIT_BETA; width],
            gamma: vec![GATED_INIT_GAMMA; width],
            slope: vec![GATED_INIT_SLOPE; width],
            gate: vec![GATED_INIT_GATE; width],
            grad_alpha: vec![0.0; width],
            grad_beta: vec![0.0; width],
            grad_gamma: vec![0.0; width],
            grad_slope: vec![0.0; width],
            grad_gate: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.alpha.len()
    }

    pub fn param_count(&self) -> usize {
        Self::PARAMS_PER_CHANNEL * self.width()
    }

    /// Gate weights `w_c = sigmoid(g_c)`.
    pub fn gate_weights(&self) -> Vec<Real> {
        self.gate.iter().map(|&g| sigmoid(g)).collect()
    }

    fn check_width(&self, op: &'static str, x: &Matrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(IqaError::shape(op, self.width(), x.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width("gated_forward", x)?;
        let w = self.gate_weights();
        let mut y = Matrix::zeros(x.rows(), x.cols());
        for b in 0..x.rows() {
            let xr = x.row(b);
            for (c, out) in y.row_mut(b).iter_mut().enumerate() {
                let xc = xr[c];
                let s = sigmoid(self.alpha[c] * xc + self.beta[c]);
                *out = w[c] * (self.gamma[c] * s) + (1.0 - w[c]) * leaky_relu(xc, self.slope[c]);
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        self.check_width("gated_backward", x)?;
        if upstream.shape() != x.shape() {
            return Err(IqaError::shape(
                "gated_backward",
                format!("{:?}", x.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        let w = self.gate_weights();
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        for b in 0..x.rows() {
            let xr = x.row(b);
            let ur = upstream.row(b);
            let dxr = dx.row_mut(b);
            for c in 0..xr.len() {
                let (xc, u) = (xr[c], ur[c]);
                let (wc, gamma) = (w[c], self.gamma[c]);
                let s = sigmoid(self.alpha[c] * xc + self.beta[c]);
                let ds = s * (1.0 - s);
                let lrelu = leaky_relu(xc, self.slope[c]);
                // d(sigmoid branch)/d(pre-activation), weighted by the gate
                let sig_pre = wc * gamma * ds;

                self.grad_alpha[c] += u * sig_pre * xc;
                self.grad_beta[c] += u * sig_pre;
                self.grad_gamma[c] += u * wc * s;
                if xc < 0.0 {
                    self.grad_slope[c] += u * (1.0 - wc) * xc;
                }
                self.grad_gate[c] += u * wc * (1.0 - wc) * (gamma * s - lrelu);
                dxr[c] =
                    u * (sig_pre * self.alpha[c] + (1.0 - wc) * leaky_relu_grad(xc, self.slope[c]));
            }
        }
        Ok(dx)
    }

    pub fn zero_grad(&mut self) {
        for g in [
            &mut self.grad_alpha,
            &mut self.grad_beta,
            &mut self.grad_gamma,
            &mut self.grad_slope,
            &mut self.grad_gate,
        ] {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// A hidden-site activation together with any learnable state it owns.
#[allow(clippy::large_enum_variant)] // one value per site; boxing buys nothing
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Sigmoid,
    LeakyRelu(Real),
    Gelu,
    Tanh,
    Gated(GatedActivation),
}

impl Activation {
    pub fn build(kind: ActivationKind, width: usize) -> Self {
        match kind {
            ActivationKind::Sigmoid => Activation::Sigmoid,
            ActivationKind::LeakyRelu { slope } => Activation::LeakyRelu(slope),
            ActivationKind::Gelu => Activation::Gelu,
            ActivationKind::Tanh => Activation::Tanh,
            ActivationKind::Gated => Activation::Gated(GatedActivation::new(width)),
        }
    }

    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Sigmoid => ActivationKind::Sigmoid,
            Activation::LeakyRelu(slope) => ActivationKind::LeakyRelu { slope: *slope },
            Activation::Gelu => ActivationKind::Gelu,
            Activation::Tanh => ActivationKind::Tanh,
            Activation::Gated(_) => ActivationKind::Gated,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Activation::Gated(g) => g.param_count(),
            _ => 0,
        }
    }

    pub fn gated(&self) -> Option<&GatedActivation> {
        match self {
            Activation::Gated(g) => Some(g),
            _ => None,
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(match self {
            Activation::Sigmoid => x.map(sigmoid),
            Activation::LeakyRelu(a) => {
                let a = *a;
                x.map(|v| leaky_relu(v, a))
            }
            Activation::Gelu => x.map(gelu),
            Activation::Tanh => x.map(Real::tanh),
            Activation::Gated(g) => return g.forward(x),
        })
    }

    pub fn backward(&mut self, x: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        if x.shape() != upstream.shape() {
            return Err(IqaError::shape(
                "activation_backward",
                format!("{:?}", x.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        let local: fn(Real, Real) -> Real = match self {
            Activation::Gated(g) => return g.backward(x, upstream),
            Activation::Sigmoid => |v, _| {
                let s = sigmoid(v);
                s * (1.0 - s)
            },
            Activation::LeakyRelu(_) => leaky_relu_grad,
            Activation::Gelu => |v, _| gelu_grad(v),
            Activation::Tanh => |v, _| {
                let t = v.tanh();
                1.0 - t * t
            },
        };
        let slope = match self {
            Activation::LeakyRelu(a) => *a,
            _ => 0.0,
        };
        let data = x
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&v, &u)| u * local(v, slope))
            .collect();
        Matrix::from_vec(x.rows(), x.cols(), data)
    }

    pub fn zero_grad(&mut self) {
        if let Activation::Gated(g) = self {
            g.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-2.0) - 0.119203).abs() < 1e-6);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-12);
        assert!(sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0).is_finite());
    }

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(3.0, 0.25), 3.0);
        assert_eq!(leaky_relu(-2.0, 0.25), -0.5);
        assert_eq!(leaky_relu(0.0, 0.25), 0.0);
        assert_eq!(leaky_relu_grad(0.0, 0.25), 1.0);
    }

    #[test]
    fn gelu_and_tanh_closed_forms() {
        // Phi(1) = 0.841344746068543, Phi(-1) = 0.158655253931457
        assert!((gelu(1.0) - 0.841344746068543).abs() < 1e-6);
        assert!((gelu(-1.0) + 0.158655253931457).abs() < 1e-6);
        assert_eq!(gelu(0.0), 0.0);
        assert!(((1.0 as Real).tanh() - 0.761594155955765).abs() < 1e-6);
        assert!(((-1.0 as Real).tanh() + 0.761594155955765).abs() < 1e-6);
        assert_eq!((0.0 as Real).tanh(), 0.0);
    }

    #[test]
    fn gated_init_values() {
        let g = GatedActivation::new(4);
        assert!(g.gate_weights().iter().all(|&w| w == 0.5));
        let y = g.forward(&Matrix::zeros(1, 4)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn gated_branch_limits() {
        let mut g = GatedActivation::new(1);
        g.gate[0] = 40.0;
        let y = g.forward(&Matrix::from_rows(&[vec![-2.0]])).unwrap();
        assert!((y.get(0, 0) - 0.238406).abs() < 1e-5);
        assert!((y.get(0, 0) - 2.0 * sigmoid(-2.0)).abs() < 1e-10);

        g.gate[0] = -40.0;
        let y = g.forward(&Matrix::from_rows(&[vec![-2.0]])).unwrap();
        assert!((y.get(0, 0) + 0.5).abs() < 1e-10);
    }

    #[test]
    fn gated_gate_gradient_at_init() {
        let mut g = GatedActivation::new(2);
        let x = Matrix::zeros(1, 2);
        g.backward(&x, &Matrix::from_rows(&[vec![1.0, -3.0]]))
            .unwrap();
        assert!((g.grad_gate[0] - 0.25).abs() < 1e-15);
        assert!((g.grad_gate[1] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn gated_zero_upstream_gives_zero_grads() {
        let mut g = GatedActivation::new(3);
        let x = Matrix::from_rows(&[vec![-1.0, 0.5, 2.0]]);
        let dx = g.backward(&x, &Matrix::zeros(1, 3)).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        for grads in [
            &g.grad_alpha,
            &g.grad_beta,
            &g.grad_gamma,
            &g.grad_slope,
            &g.grad_gate,
        ] {
            assert!(grads.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gated_rejects_width_mismatch() {
        let g = GatedActivation::new(3);
        assert!(g.forward(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn gate_weights_monotone() {
        let mut g = GatedActivation::new(5);
        g.gate = vec![-3.0, -1.0, 0.0, 2.0, 40.0];
        let w = g.gate_weights();
        assert!(w.windows(2).all(|p| p[0] < p[1]));
        assert!((w[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn activation_kind_parsing() {
        assert_eq!(
            "lrelu".parse::<ActivationKind>().unwrap(),
            ActivationKind::lrelu()
        );
        assert_eq!(
            "lrelu:0.2".parse::<ActivationKind>().unwrap(),
            ActivationKind::LeakyRelu { slope: 0.2 }
        );
        for name in ["sigmoid", "gelu", "tanh", "gated"] {
            let k: ActivationKind = name.parse().unwrap();
            assert_eq!(k.to_string(), name);
        }
        assert!("swish".parse::<ActivationKind>().is_err());
        assert!("lrelu:1.5".parse::<ActivationKind>().is_err());
    }

    #[cfg(not(feature = "f32"))]
    #[test]
    fn plain_activation_backward_matches_finite_differences() {
        let xs = [-1.7, -0.3, 0.4, 1.2];
        let h = 1e-5;
        for act in [
            Activation::Sigmoid,
            Activation::LeakyRelu(0.01),
            Activation::Gelu,
            Activation::Tanh,
        ] {
            let mut act = act;
            let x = Matrix::from_rows(&[xs.to_vec()]);
            let dx = act
                .backward(&x, &Matrix::from_rows(&[vec![1.0; 4]]))
                .unwrap();
            for (i, &v) in xs.iter().enumerate() {
                let f = |t: Real| {
                    act.forward(&Matrix::from_rows(&[vec![t]]))
                        .unwrap()
                        .get(0, 0)
                };
                let num = (f(v + h) - f(v - h)) / (2.0 * h);
                assert!(
                    (dx.get(0, i) - num).abs() <= 1e-4 * num.abs().max(1.0),
                    "{act:?} at {v}"
                );
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gated_output_is_convex_combination(
                x in -6.0f64..6.0,
                alpha in -2.0f64..2.0,
                beta in -2.0f64..2.0,
                gamma in 0.1f64..3.0,
                slope in 0.0f64..1.0,
                gate in -8.0f64..8.0,
            ) {
                let mut g = GatedActivation::new(1);
                g.alpha[0] = alpha as Real;
                g.beta[0] = beta as Real;
                g.gamma[0] = gamma as Real;
                g.slope[0] = slope as Real;
                g.gate[0] = gate as Real;
                let xr = x as Real;
                let y = g.forward(&Matrix::from_rows(&[vec![xr]])).unwrap().get(0, 0);
                let sig = g.gamma[0] * sigmoid(g.alpha[0] * xr + g.beta[0]);
                let lin = leaky_relu(xr, g.slope[0]);
                let eps = 1e-9 * (1.0 + sig.abs() + lin.abs());
                prop_assert!(y >= sig.min(lin) - eps && y <= sig.max(lin) + eps);
            }
        }
    }
}
