#![allow(dead_code)]

use marginprop::baselines::ConvMlpParams;
use marginprop::data::encode_row;
use marginprop::ops::NoCount;
use marginprop::trainer::Trainable;
use marginprop::{mp, mp_grad, DifferentialValue, GradRule, MlpParams, PerceptronParams, SvmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bisection on `sum_i [L_i - z]_+ = gamma`, independent of the sort-based solver.
pub fn bisect_mp(scores: &[f64], gamma: f64) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g = |z: f64| scores.iter().map(|&l| (l - z).max(0.0)).sum::<f64>() - gamma;
    let (mut lo, mut hi) = (max - gamma - 1.0, max);
    while g(lo) < 0.0 {
        lo -= 2.0 * (max - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub const FD_H: f64 = 1e-6;

/// Component-wise check: `|a - fd| <= atol + rtol |fd|` for every entry.
pub fn grads_match(analytic: &[f64], fd: &[f64], rtol: f64) -> bool {
    analytic.len() == fd.len() && analytic.iter().zip(fd).all(|(a, f)| (a - f).abs() <= 1e-8 + rtol * f.abs())
}

/// Central differences of `f` around `theta`.
pub fn central_diff(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            buf[k] = theta[k] + h;
            let up = f(&buf);
            buf[k] = theta[k] - h;
            let down = f(&buf);
            buf[k] = theta[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Per-sample L1 error through the [`Trainable`] interface.
pub fn l1_error<M: Trainable>(model: &M, prepared: &M::Prepared, y_plus: f64) -> f64 {
    let (p, q) = model.output_pair(prepared, &mut NoCount).unwrap();
    (y_plus - p).abs() + (1.0 - y_plus - q).abs()
}

/// Analytic vs central-difference gradient of the L1 error for one probe.
pub fn trainable_probe<M: Trainable>(model: &M, prepared: &M::Prepared, y_plus: f64, rule: GradRule) -> (Vec<f64>, Vec<f64>) {
    let analytic = model.sample_grad(prepared, y_plus, rule).unwrap();
    let theta = model.params_flat();
    let mut work = model.clone();
    let fd = central_diff(&theta, FD_H, |t| {
        work.set_params_flat(t);
        l1_error(&work, prepared, y_plus)
    });
    (analytic, fd)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub const PROBES: usize = 200;
pub const MIN_PASS: f64 = 0.95;
pub const KINK_FREE: f64 = 10.0 * FD_H;

pub fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<DifferentialValue> {
    encode_row(&(0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>())
}

/// Draws kink-free probes until `PROBES` are collected; returns the pass rate.
fn pass_rate(mut probe: impl FnMut(&mut ChaCha8Rng) -> Option<bool>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut seen, mut passed) = (0, 0);
    let mut attempts = 0;
    while seen < PROBES {
        attempts += 1;
        assert!(attempts < 100 * PROBES, "too few kink-free probes");
        if let Some(ok) = probe(&mut rng) {
            seen += 1;
            passed += usize::from(ok);
        }
    }
    passed as f64 / seen as f64
}

/// Pass rate of `mp_grad` against central differences.
pub fn mp_grad_pass_rate(seed: u64) -> f64 {
    pass_rate(
        |rng| {
            let n = rng.random_range(1..=16);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let gamma = rng.random_range(0.05..5.0);
            let r = mp(&scores, gamma).unwrap();
            if scores.iter().any(|l| (l - r.z).abs() < KINK_FREE) {
                return None;
            }
            let fd = central_diff(&scores, FD_H, |s| mp(s, gamma).unwrap().z);
            Some(grads_match(&mp_grad(&scores, &r), &fd, 1e-4))
        },
        seed,
    )
}

pub fn perceptron_pass_rate(seed: u64) -> f64 {
    pass_rate(
        |rng| {
            let n = rng.random_range(1..=6);
            let p = PerceptronParams::random(n, rng.random_range(0.2..2.0), rng);
            let x = random_input(rng, n);
            let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
            if p.kink_margin(&x).unwrap() < KINK_FREE {
                return None;
            }
            let prepared = p.prepare(&x).unwrap();
            let (a, fd) = trainable_probe(&p, &prepared, y, GradRule::Exact);
            Some(grads_match(&a, &fd, 1e-4))
        },
        seed,
    )
}

pub fn mlp_pass_rate(seed: u64) -> f64 {
    pass_rate(
        |rng| {
            let i = rng.random_range(1..=4);
            let j = rng.random_range(1..=6);
            let m = MlpParams::random(i, j, rng.random_range(0.2..2.0), rng.random_range(0.2..2.0), rng);
            let x = random_input(rng, i);
            let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
            if m.kink_margin(&x).unwrap() < KINK_FREE {
                return None;
            }
            let prepared = m.prepare(&x).unwrap();
            let (a, fd) = trainable_probe(&m, &prepared, y, GradRule::Exact);
            Some(grads_match(&a, &fd, 1e-4))
        },
        seed,
    )
}

pub fn svm_pass_rate(seed: u64) -> f64 {
    pass_rate(
        |rng| {
            let n = rng.random_range(1..=3);
            let s = rng.random_range(2..=8);
            let centers: Vec<_> = (0..s).map(|_| random_input(rng, n)).collect();
            let gamma = rng.random_range(0.1..2.0);
            let gamma2 = rng.random_range(0.5..10.0);
            let c = rng.random_range(0.5..5.0);
            let p = SvmParams::from_centers(&centers, gamma, gamma2, c, rng).unwrap();
            let x = random_input(rng, n);
            let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
            if p.kink_margin(&x).unwrap() < KINK_FREE {
                return None;
            }
            let prepared = p.prepare(&x).unwrap();
            let (a, fd) = trainable_probe(&p, &prepared, y, GradRule::Exact);
            Some(grads_match(&a, &fd, 1e-4))
        },
        seed,
    )
}

/// Conventional MLP, squared error, tighter tolerance.
pub fn conv_mlp_pass_rate(seed: u64) -> f64 {
    pass_rate(
        |rng| {
            let i = rng.random_range(1..=4);
            let j = rng.random_range(1..=6);
            let m = ConvMlpParams::random(i, j, rng);
            let x = random_input(rng, i);
            let t = if rng.random::<bool>() { 1.0 } else { 0.0 };
            let a = m.sample_grad(&x, t).unwrap();
            let mut work = m.clone();
            let fd = central_diff(&m.params_flat(), FD_H, |theta| {
                work.set_params_flat(theta);
                work.sample_loss(&x, t).unwrap()
            });
            Some(grads_match(&a, &fd, 1e-5))
        },
        seed,
    )
}


/// Step-by-step accumulation of operation counts, one entry per stage of the
/// forward and backward passes.
#[derive(Default)]
pub struct Tally {
    pub adds: f64,
    pub mults: f64,
    pub compares: f64,
    pub shifts: f64,
    pub other: f64,
}

impl Tally {
    pub fn mac(&mut self, n: f64) {
        self.adds += n;
        self.mults += n;
    }
}

pub fn conventional_training(i: f64, j: f64, t: f64) -> Tally {
    let k = 1.0;
    let mut c = Tally::default();
    c.mac(t * j * i); // S_JT = W_JI X_IT
    c.other += t * j; // f(S_JT)
    c.mac(t * j * k); // S_KT = W_KJ Z_JT
    c.other += t * k; // f(S_KT)
    c.mac(t * k); // E_KT
    c.mac(t * k * j); // D_KJ
    c.adds += k * j; // W_KJ update
    c.mac(t * k * j); // W_JK E_KT
    c.mults += j * t; // f'(S_JT) elementwise
    c.mac(t * j * i); // D_JI
    c.adds += i * j; // W_JI update
    c
}

pub fn mp_training(i: f64, j: f64, t: f64, f: f64) -> Tally {
    let mut c = Tally::default();
    // forward, layer I -> J
    c.adds += 2.0 * j * t * 2.0 * i;
    c.compares += 2.0 * j * t * f * (2.0 * i).log2();
    // forward, layer J -> K
    c.adds += 2.0 * t * 2.0 * j;
    c.compares += 2.0 * t * f * (2.0 * j).log2();
    // backward, layer J K: error terms
    c.adds += 4.0 * t;
    // indicator products
    c.compares += 2.0 * t + 4.0 * t * j;
    c.shifts += 4.0 * t * j;
    // W_JK update
    c.adds += 2.0 * j;
    // layer I J
    c.adds += 4.0 * t + 4.0 * t * i * j + 2.0 * i * j;
    c.compares += 2.0 * t * j + 4.0 * t * i * j;
    c.shifts += 8.0 * t * i * j + 4.0 * t * j;
    c
}
