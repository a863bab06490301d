//! Independent oracles and checks shared by the integration suites.
#![allow(dead_code, clippy::unnecessary_cast)]

use std::cmp::Ordering;

use iqahead::activations::{Activation, ActivationKind};
use iqahead::head::{HeadConfig, HeadModel};
use iqahead::losses::{margin_loss, mse_loss};
use iqahead::metrics::{plcc, srcc};
use iqahead::{Matrix, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one acceptance check.
#[derive(Debug, Clone)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// The eight head variants: seven plain combinations plus gated+gated.
pub fn head_variants() -> Vec<(&'static str, ActivationKind, ActivationKind)> {
    use ActivationKind::*;
    let lrelu = ActivationKind::lrelu();
    vec![
        ("LReLU+LReLU", lrelu, lrelu),
        ("Sig+LReLU", Sigmoid, lrelu),
        ("Sig+GELU", Sigmoid, Gelu),
        ("GELU+GELU", Gelu, Gelu),
        ("Tanh+Tanh", Tanh, Tanh),
        ("Tanh+LReLU", Tanh, lrelu),
        ("GELU+LReLU", Gelu, lrelu),
        ("Gated+Gated", Gated, Gated),
    ]
}

pub const GRAD_H: Real = 1e-5;
pub const GRAD_RTOL: Real = 1e-4;

/// `|analytic - numeric| / max(1, |analytic|)`.
fn scaled_error(analytic: Real, numeric: Real) -> Real {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_error: Real,
    pub mismatches: Vec<String>,
}

impl GradReport {
    fn record(&mut self, what: impl FnOnce() -> String, analytic: Real, numeric: Real) {
        let err = scaled_error(analytic, numeric);
        self.checked += 1;
        self.max_error = self.max_error.max(err);
        if err.is_nan() || err > GRAD_RTOL {
            self.mismatches.push(format!(
                "{}: analytic {analytic:.10e} numeric {numeric:.10e}",
                what()
            ));
        }
    }
}

/// Random small head with every parameter (including the gated ones) moved
/// away from its initial value, plus an input batch and readout weights.
fn random_problem(
    act1: ActivationKind,
    act2: ActivationKind,
    seed: u64,
) -> (HeadModel, Matrix, Vec<Real>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=8);
    let mut cfg = HeadConfig::new(d, act1, act2);
    cfg.hidden_dim = rng.gen_range(2..=8);
    cfg.init_seed = seed;
    let mut model = HeadModel::build(cfg).unwrap();
    let params: Vec<Real> = model
        .param_vector()
        .iter()
        .map(|v| v + rng.gen_range(-0.5..0.5))
        .collect();
    model.set_param_vector(&params).unwrap();
    let batch = rng.gen_range(1..=4);
    let x = Matrix::from_vec(
        batch,
        d,
        (0..batch * d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    )
    .unwrap();
    let w = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (model, x, w)
}

fn objective(model: &HeadModel, x: &Matrix, w: &[Real]) -> Real {
    model
        .predict(x)
        .unwrap()
        .iter()
        .zip(w)
        .map(|(p, w)| p * w)
        .sum()
}

/// Central-difference check of every parameter and every input entry for
/// the objective `sum_b w_b * score_b`.
pub fn gradcheck_head(act1: ActivationKind, act2: ActivationKind, seed: u64) -> GradReport {
    let (mut model, x, w) = random_problem(act1, act2, seed);
    let mut report = GradReport::default();

    model.zero_grad();
    model.forward(&x).unwrap();
    let dx = model.backward_pass(&w).unwrap();
    let grads = model.grad_vector();
    let layout: Vec<(String, usize)> = model
        .param_layout()
        .into_iter()
        .map(|(n, l)| (n.to_string(), l))
        .collect();
    let base = model.param_vector();

    let mut probe = model.clone();
    let mut names = layout
        .iter()
        .flat_map(|(n, l)| std::iter::repeat_n(n.clone(), *l));
    for i in 0..base.len() {
        let name = names.next().unwrap();
        let mut p = base.clone();
        p[i] = base[i] + GRAD_H;
        probe.set_param_vector(&p).unwrap();
        let up = objective(&probe, &x, &w);
        p[i] = base[i] - GRAD_H;
        probe.set_param_vector(&p).unwrap();
        let down = objective(&probe, &x, &w);
        let numeric = (up - down) / (2.0 * GRAD_H);
        report.record(|| format!("seed {seed} {name}[{i}]"), grads[i], numeric);
    }
    probe.set_param_vector(&base).unwrap();

    for i in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += GRAD_H;
        let up = objective(&probe, &xp, &w);
        xp.data_mut()[i] -= 2.0 * GRAD_H;
        let down = objective(&probe, &xp, &w);
        let numeric = (up - down) / (2.0 * GRAD_H);
        report.record(|| format!("seed {seed} input[{i}]"), dx.data()[i], numeric);
    }
    report
}

pub const GRADCHECK_CONFIGS: u64 = 24;

pub fn check_gradients() -> Check {
    let mut failures = Vec::new();
    let (mut checked, mut worst): (usize, Real) = (0, 0.0);
    for (name, a1, a2) in head_variants() {
        for seed in 0..GRADCHECK_CONFIGS {
            let r = gradcheck_head(a1, a2, 1000 + seed);
            checked += r.checked;
            worst = worst.max(r.max_error);
            failures.extend(r.mismatches.into_iter().map(|m| format!("{name}: {m}")));
        }
    }
    Check::new(
        failures.is_empty(),
        format!(
            "{} variants x {GRADCHECK_CONFIGS} configs, {checked} derivatives, max scaled error {worst:.2e}, {} mismatches{}",
            head_variants().len(),
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

/// Pure-branch limits at |g| = 40 and the initial-state identities.
pub fn check_gate_limits() -> Check {
    let width = 7;
    let xs: Vec<Real> = (0..3 * width).map(|i| -3.0 + 0.29 * i as Real).collect();
    let x = Matrix::from_vec(3, width, xs.clone()).unwrap();
    let mut act = Activation::build(ActivationKind::Gated, width);
    let Activation::Gated(gated) = &mut act else {
        return Check::new(false, "gated activation did not build a gated site");
    };
    for (c, ((a, b), (g, s))) in gated
        .alpha
        .iter_mut()
        .zip(gated.beta.iter_mut())
        .zip(gated.gamma.iter_mut().zip(gated.slope.iter_mut()))
        .enumerate()
    {
        *a = 0.5 + 0.1 * c as Real;
        *b = -0.3 + 0.05 * c as Real;
        *g = 1.5 + 0.2 * c as Real;
        *s = 0.1 + 0.03 * c as Real;
    }
    let mut worst: Real = 0.0;
    for gate in [40.0, -40.0] {
        gated.gate.iter_mut().for_each(|g| *g = gate);
        let y = gated.forward(&x).unwrap();
        for (i, (&xv, &yv)) in xs.iter().zip(y.data()).enumerate() {
            let c = i % width;
            let expected = if gate > 0.0 {
                gated.gamma[c] / (1.0 + (-(gated.alpha[c] * xv + gated.beta[c])).exp())
            } else if xv >= 0.0 {
                xv
            } else {
                gated.slope[c] * xv
            };
            worst = worst.max((yv - expected).abs());
        }
    }
    let fresh = Activation::build(ActivationKind::Gated, width);
    let weights = fresh.gated().unwrap().gate_weights();
    let init_ok = weights.iter().all(|&w| w == 0.5);
    let at_zero = fresh.forward(&Matrix::zeros(1, width)).unwrap();
    let zero_ok = at_zero.data().iter().all(|&v| v == 0.5);
    Check::new(
        worst <= 1e-10 && init_ok && zero_ok,
        format!(
            "max branch deviation {worst:.2e}; init weights 0.5: {init_ok}; f(0) = 0.5: {zero_ok}"
        ),
    )
}

/// Direct transcription of the ranking loss over all ordered pairs.
pub fn brute_margin(s: &[Real], p: &[Real], lambda_m: Real) -> Real {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    let mean = s.iter().sum::<Real>() / n as Real;
    let sigma = (s.iter().map(|v| (v - mean).powi(2)).sum::<Real>() / n as Real).sqrt();
    let m = lambda_m * sigma;
    let mut twice = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let sign = match s[i].partial_cmp(&s[j]).unwrap() {
                Ordering::Greater => 1.0,
                Ordering::Less => -1.0,
                Ordering::Equal => 0.0,
            };
            twice += (m - sign * (p[i] - p[j])).max(0.0);
        }
    }
    // each unordered pair was visited twice
    (twice / 2.0) * 2.0 / (n * (n - 1)) as Real
}

pub fn brute_mse(s: &[Real], p: &[Real]) -> Real {
    s.iter()
        .zip(p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<Real>()
        / s.len() as Real
}

fn random_batch(rng: &mut ChaCha8Rng) -> (Vec<Real>, Vec<Real>) {
    let n = rng.gen_range(1..=64);
    let tied = rng.gen_bool(0.3);
    let s = (0..n)
        .map(|_| {
            if tied {
                rng.gen_range(0..5) as Real / 4.0
            } else {
                rng.gen::<Real>()
            }
        })
        .collect();
    let p = (0..n).map(|_| rng.gen_range(-0.5..1.5)).collect();
    (s, p)
}

pub fn check_loss_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: Real = 0.0;
    for _ in 0..1000 {
        let (s, p) = random_batch(&mut rng);
        let got = margin_loss(&s, &p, 0.25).unwrap().loss;
        worst = worst.max((got - brute_margin(&s, &p, 0.25)).abs());
        let mse = mse_loss(&s, &p).unwrap().loss;
        worst = worst.max((mse - brute_mse(&s, &p)).abs());
    }
    let ex0 = margin_loss(&[0.2, 0.8], &[0.3, 0.9], 0.25).unwrap().loss;
    let ex1 = margin_loss(&[0.2, 0.8], &[0.9, 0.3], 0.25).unwrap().loss;
    let examples = ex0 == 0.0 && (ex1 - 0.675).abs() <= 1e-15;
    Check::new(
        worst <= 1e-12 && examples,
        format!("max |production - brute force| = {worst:.2e} over 1000 batches; examples {ex0} and {ex1}"),
    )
}

/// Rank of each value counting ties by their mean position (1-based).
pub fn brute_ranks(x: &[Real]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn brute_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn brute_srcc(a: &[Real], b: &[Real]) -> f64 {
    brute_pearson(&brute_ranks(a), &brute_ranks(b))
}

fn widen(x: &[Real]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<Real>, Vec<Real>) {
    let n = rng.gen_range(3..=80);
    let levels = rng.gen_range(2..=6);
    let a: Vec<Real> = (0..n).map(|_| rng.gen_range(0..levels) as Real).collect();
    let b: Vec<Real> = a
        .iter()
        .map(|&v| {
            if rng.gen_bool(0.5) {
                v + rng.gen_range(-1.0..1.0)
            } else {
                rng.gen_range(0..levels) as Real
            }
        })
        .collect();
    (a, b)
}

pub fn check_metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let (mut worst, mut tested, mut worst_inv): (f64, usize, f64) = (0.0, 0, 0.0);
    while tested < 1000 {
        let (a, b) = random_pair(&mut rng);
        let (Ok(s), Ok(p)) = (srcc(&a, &b), plcc(&a, &b)) else {
            continue; // a constant vector has no defined correlation
        };
        tested += 1;
        worst = worst.max((s - brute_srcc(&a, &b)).abs());
        worst = worst.max((p - brute_pearson(&widen(&a), &widen(&b))).abs());

        // strictly increasing map keeps every rank
        let shift = rng.gen_range(-3.0..3.0);
        let mono: Vec<Real> = a
            .iter()
            .map(|v| (v * 0.7 + shift).exp() + v.powi(3))
            .collect();
        worst_inv = worst_inv.max((srcc(&mono, &b).unwrap() - s).abs());
        let scale = rng.gen_range(0.01..100.0);
        let affine: Vec<Real> = a.iter().map(|v| scale * v + shift).collect();
        worst_inv = worst_inv.max((plcc(&affine, &b).unwrap() - p).abs());
    }
    Check::new(
        worst <= 1e-10 && worst_inv <= 1e-10,
        format!("max deviation from brute force {worst:.2e}, max invariance drift {worst_inv:.2e} over {tested} tied vectors"),
    )
}
