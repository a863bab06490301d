//! The three-layer regression head and its end-to-end forward/backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activations::{Activation, ActivationKind};
use crate::error::{IqaError, Result};
use crate::kernel::{LinearLayer, Matrix, Real};
use crate::parallel::{self, Execution};

pub const DEFAULT_HIDDEN_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    pub act1: ActivationKind,
    pub act2: ActivationKind,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN_DIM
}

impl HeadConfig {
    pub fn new(input_dim: usize, act1: ActivationKind, act2: ActivationKind) -> Self {
        Self {
            input_dim,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            act1,
            act2,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(IqaError::Config(format!(
                "head dimensions must be positive (input {}, hidden {})",
                self.input_dim, self.hidden_dim
            )));
        }
        self.act1.validate()?;
        self.act2.validate()
    }
}

/// Training-time inverted-dropout masks; entries are 0 or `1/keep`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DropoutMasks {
    pub input: Option<Matrix>,
    pub hidden1: Option<Matrix>,
    pub hidden2: Option<Matrix>,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    input: Matrix,
    z1: Matrix,
    h1: Matrix,
    z2: Matrix,
    h2: Matrix,
    masks: DropoutMasks,
}

/// A mutable view of one parameter tensor and its gradient.
pub struct ParamSlot<'a> {
    pub name: &'static str,
    pub value: &'a mut [Real],
    pub grad: &'a [Real],
}

#[derive(Debug, Clone)]
pub struct HeadModel {
    config: HeadConfig,
    pub l1: LinearLayer,
    pub act1: Activation,
    pub l2: LinearLayer,
    pub act2: Activation,
    pub l3: LinearLayer,
    cache: Option<ForwardCache>,
}

impl PartialEq for HeadModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.l1 == other.l1
            && self.act1 == other.act1
            && self.l2 == other.l2
            && self.act2 == other.act2
            && self.l3 == other.l3
    }
}

impl HeadModel {
    pub fn build(config: HeadConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let (d, h) = (config.input_dim, config.hidden_dim);
        let l1 = LinearLayer::init_uniform(d, h, &mut rng);
        let l2 = LinearLayer::init_uniform(h, h, &mut rng);
        let l3 = LinearLayer::init_uniform(h, 1, &mut rng);
        Ok(Self {
            act1: Activation::build(config.act1, h),
            act2: Activation::build(config.act2, h),
            config,
            l1,
            l2,
            l3,
            cache: None,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn linear_param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count() + self.l3.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.linear_param_count() + self.act1.param_count() + self.act2.param_count()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(IqaError::shape("predict", self.input_dim(), x.cols()));
        }
        Ok(())
    }

    /// Read-only prediction, one score per row. Does not touch the backward cache.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<Real>> {
        self.check_input(x)?;
        let h1 = self.act1.forward(&self.l1.forward(x)?)?;
        let h2 = self.act2.forward(&self.l2.forward(&h1)?)?;
        Ok(self.l3.forward(&h2)?.into_vec())
    }

    /// Prediction split into row chunks that may be evaluated concurrently.
    /// Rows are independent, so the result is identical to [`Self::predict`].
    pub fn predict_with(&self, x: &Matrix, exec: Execution) -> Result<Vec<Real>> {
        const CHUNK: usize = 256;
        self.check_input(x)?;
        if x.rows() <= CHUNK || !exec.is_parallel() {
            return self.predict(x);
        }
        let chunks: Vec<Vec<usize>> = (0..x.rows())
            .collect::<Vec<_>>()
            .chunks(CHUNK)
            .map(<[usize]>::to_vec)
            .collect();
        let parts = parallel::map(exec, chunks, |rows| self.predict(&x.select_rows(&rows)));
        let mut out = Vec::with_capacity(x.rows());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Forward pass that caches intermediates for [`Self::backward_pass`].
    pub fn forward(&mut self, x: &Matrix) -> Result<Vec<Real>> {
        self.forward_masked(x, DropoutMasks::default())
    }

    /// Forward pass with dropout masks applied to the input and/or hidden outputs.
    pub fn forward_masked(&mut self, x: &Matrix, masks: DropoutMasks) -> Result<Vec<Real>> {
        self.check_input(x)?;
        let input = match &masks.input {
            Some(m) => hadamard(x, m)?,
            None => x.clone(),
        };
        let z1 = self.l1.forward(&input)?;
        let mut h1 = self.act1.forward(&z1)?;
        if let Some(m) = &masks.hidden1 {
            h1 = hadamard(&h1, m)?;
        }
        let z2 = self.l2.forward(&h1)?;
        let mut h2 = self.act2.forward(&z2)?;
        if let Some(m) = &masks.hidden2 {
            h2 = hadamard(&h2, m)?;
        }
        let out = self.l3.forward(&h2)?.into_vec();
        self.cache = Some(ForwardCache {
            input,
            z1,
            h1,
            z2,
            h2,
            masks,
        });
        Ok(out)
    }

    /// Accumulates gradients of every parameter given `dL/dscore` per row of the
    /// last cached forward pass, and returns `dL/dx`.
    pub fn backward_pass(&mut self, dscore: &[Real]) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| IqaError::State("backward_pass called before forward".into()))?;
        if dscore.len() != cache.input.rows() {
            return Err(IqaError::shape(
                "backward_pass",
                cache.input.rows(),
                dscore.len(),
            ));
        }
        let up = Matrix::column(dscore);
        let mut dh2 = self.l3.backward(&cache.h2, &up)?;
        if let Some(m) = &cache.masks.hidden2 {
            dh2 = hadamard(&dh2, m)?;
        }
        let dz2 = self.act2.backward(&cache.z2, &dh2)?;
        let mut dh1 = self.l2.backward(&cache.h1, &dz2)?;
        if let Some(m) = &cache.masks.hidden1 {
            dh1 = hadamard(&dh1, m)?;
        }
        let dz1 = self.act1.backward(&cache.z1, &dh1)?;
        let mut dx = self.l1.backward(&cache.input, &dz1)?;
        if let Some(m) = &cache.masks.input {
            dx = hadamard(&dx, m)?;
        }
        Ok(dx)
    }

    pub fn zero_grad(&mut self) {
        self.l1.zero_grad();
        self.l2.zero_grad();
        self.l3.zero_grad();
        self.act1.zero_grad();
        self.act2.zero_grad();
    }

    /// All parameter tensors in a fixed order: layer 1, site 1, layer 2, site 2, layer 3.
    pub fn params(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = Vec::with_capacity(19);
        push_linear(&mut slots, "l1", &mut self.l1);
        push_activation(&mut slots, 1, &mut self.act1);
        push_linear(&mut slots, "l2", &mut self.l2);
        push_activation(&mut slots, 2, &mut self.act2);
        push_linear(&mut slots, "l3", &mut self.l3);
        slots
    }

    /// Names and lengths of the parameter tensors, in registry order.
    pub fn param_layout(&mut self) -> Vec<(&'static str, usize)> {
        self.params()
            .iter()
            .map(|p| (p.name, p.value.len()))
            .collect()
    }

    pub fn param_vector(&mut self) -> Vec<Real> {
        self.params()
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    pub fn grad_vector(&mut self) -> Vec<Real> {
        self.params()
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    pub fn set_param_vector(&mut self, values: &[Real]) -> Result<()> {
        let total = self.param_count();
        if values.len() != total {
            return Err(IqaError::shape("set_param_vector", total, values.len()));
        }
        let mut offset = 0;
        for slot in self.params() {
            let n = slot.value.len();
            slot.value.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Gate weights of each gated site (`None` for a plain activation).
    pub fn gate_weights(&self) -> [Option<Vec<Real>>; 2] {
        [
            self.act1.gated().map(|g| g.gate_weights()),
            self.act2.gated().map(|g| g.gate_weights()),
        ]
    }
}

fn push_linear<'a>(slots: &mut Vec<ParamSlot<'a>>, name: &'static str, l: &'a mut LinearLayer) {
    let (wname, bname) = match name {
        "l1" => ("l1.weight", "l1.bias"),
        "l2" => ("l2.weight", "l2.bias"),
        _ => ("l3.weight", "l3.bias"),
    };
    slots.push(ParamSlot {
        name: wname,
        value: l.weight.data_mut(),
        grad: l.grad_weight.data(),
    });
    slots.push(ParamSlot {
        name: bname,
        value: &mut l.bias,
        grad: &l.grad_bias,
    });
}

fn push_activation<'a>(slots: &mut Vec<ParamSlot<'a>>, site: usize, act: &'a mut Activation) {
    if let Activation::Gated(g) = act {
        let names: [&'static str; 5] = if site == 1 {
            [
                "act1.alpha",
                "act1.beta",
                "act1.gamma",
                "act1.slope",
                "act1.gate",
            ]
        } else {
            [
                "act2.alpha",
                "act2.beta",
                "act2.gamma",
                "act2.slope",
                "act2.gate",
            ]
        };
        let values = [
            &mut g.alpha,
            &mut g.beta,
            &mut g.gamma,
            &mut g.slope,
            &mut g.gate,
        ];
        let grads = [
            &g.grad_alpha,
            &g.grad_beta,
            &g.grad_gamma,
            &g.grad_slope,
            &g.grad_gate,
        ];
        for ((name, value), grad) in names.into_iter().zip(values).zip(grads) {
            slots.push(ParamSlot { name, value, grad });
        }
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(IqaError::shape(
            "dropout mask",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, m)| x * m).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}
