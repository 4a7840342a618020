//! Gumbel noise, the Gumbel-Softmax relaxation and its straight-through
//! discretization.
//!
//! For log-probabilities `l` over a vocabulary, noise `g` and temperature `τ`,
//! the relaxed sample is `softmax((l + g) / τ)`. The straight-through step
//! emits `one_hot(argmax)` on the forward pass and hands the upstream gradient
//! to the relaxation unchanged on the backward pass.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Clamp applied to uniform draws before the double log.
pub const UNIFORM_EPS: f64 = 1e-12;

/// Default fine-tuning temperature.
pub const DEFAULT_TAU: f64 = 0.9;

/// Maps a uniform draw to a standard Gumbel variate, `−ln(−ln u)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS);
    -(-u.ln()).ln()
}

/// `count` independent standard Gumbel draws.
pub fn sample_gumbel<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| gumbel_from_uniform(rng.gen::<f64>())).collect()
}

/// Source of the per-step perturbation used while decoding.
pub enum Noise<'a> {
    /// Fresh Gumbel draws from the given generator at every step.
    Gumbel(&'a mut dyn rand::RngCore),
    /// All-zero noise: the relaxation reduces to a tempered softmax.
    Zero,
}

impl Noise<'_> {
    pub fn draw(&mut self, count: usize) -> Vec<f64> {
        match self {
            Noise::Gumbel(rng) => sample_gumbel(count, *rng),
            Noise::Zero => vec![0.0; count],
        }
    }
}

/// One relaxed decoding step: the continuous sample `y_tilde`, its discrete
/// counterpart `s`, and the noise and temperature that produced them.
#[derive(Debug, Clone)]
pub struct GumbelSample {
    pub y_tilde: Var,
    pub s: Var,
    pub tau: f64,
    pub g: Vec<f64>,
    /// `argmax(s)`, the emitted token id.
    pub index: usize,
}

/// `softmax((log_probs + g) / τ)`, recorded on the tape so it is
/// differentiable with respect to `log_probs`.
pub fn gumbel_softmax(tape: &mut Tape, log_probs: Var, g: &[f64], tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
    }
    if tape.value(log_probs).len() != g.len() {
        return Err(Error::Dimension(format!(
            "noise of length {} for {} log-probabilities",
            g.len(),
            tape.value(log_probs).len()
        )));
    }
    let noise = tape.constant(Tensor::new(tape.shape(log_probs).to_vec(), g.to_vec())?);
    let perturbed = tape.add(log_probs, noise)?;
    let scaled = tape.scale(perturbed, 1.0 / tau);
    tape.softmax_rows(scaled)
}

/// Discretizes a relaxation: forward `one_hot(argmax(y))`, backward identity.
pub fn straight_through(tape: &mut Tape, y_tilde: Var) -> Result<Var> {
    tape.straight_through(y_tilde)
}

/// Gumbel-Softmax followed by straight-through discretization.
pub fn sample_step(tape: &mut Tape, log_probs: Var, noise: &mut Noise<'_>, tau: f64) -> Result<GumbelSample> {
    let g = noise.draw(tape.value(log_probs).len());
    let y_tilde = gumbel_softmax(tape, log_probs, &g, tau)?;
    let s = straight_through(tape, y_tilde)?;
    let index = tape.value(s).argmax();
    Ok(GumbelSample {
        y_tilde,
        s,
        tau,
        g,
        index,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::{check_gradients, softmax};

    fn entropy(p: &[f64]) -> f64 {
        -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
    }

    #[test]
    fn gumbel_inverse_cdf_points() {
        assert!(gumbel_from_uniform((-1f64).exp()).abs() < 1e-15);
        assert!((gumbel_from_uniform((-std::f64::consts::E).exp()) + 1.0).abs() < 1e-12);
        assert!(gumbel_from_uniform(0.0).is_finite());
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let mean = sample_gumbel(n, &mut rng).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "{mean}");
    }

    #[test]
    fn zero_noise_unit_temperature_is_softmax() {
        let lp = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        let mut t = Tape::new();
        let v = t.constant(Tensor::vector(lp.to_vec()));
        let y = gumbel_softmax(&mut t, v, &[0.0; 3], 1.0).unwrap();
        for (a, b) in t.value(y).data().iter().zip(softmax(&lp)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn low_temperature_approaches_one_hot() {
        let lp = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        let g = [0.3, -0.2, 0.1];
        let mut t = Tape::new();
        let v = t.constant(Tensor::vector(lp.to_vec()));
        let y = gumbel_softmax(&mut t, v, &g, 0.01).unwrap();
        let perturbed: Vec<f64> = lp.iter().zip(g).map(|(a, b)| a + b).collect();
        let hot = crate::autodiff::argmax(&perturbed);
        for (i, &p) in t.value(y).data().iter().enumerate() {
            let target = if i == hot { 1.0 } else { 0.0 };
            assert!((p - target).abs() < 1e-6, "{i}: {p}");
        }
    }

    #[test]
    fn matches_scalar_formula() {
        let lp = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        let g = [0.1, -0.2, 0.0];
        let tau = 0.9;
        let num: Vec<f64> = lp.iter().zip(g).map(|(l, g)| ((l + g) / tau).exp()).collect();
        let den: f64 = num.iter().sum();
        let mut t = Tape::new();
        let v = t.constant(Tensor::vector(lp.to_vec()));
        let y = gumbel_softmax(&mut t, v, &g, tau).unwrap();
        for (a, n) in t.value(y).data().iter().zip(&num) {
            assert!((a - n / den).abs() < 1e-14);
        }
        let s: f64 = t.value(y).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let mut t = Tape::new();
        let v = t.constant(Tensor::vector(vec![0.0, 0.0]));
        assert!(matches!(gumbel_softmax(&mut t, v, &[0.0, 0.0], 0.0), Err(Error::Contract(_))));
        assert!(gumbel_softmax(&mut t, v, &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn entropy_grows_with_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let lp: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..0.0)).collect();
            let g = sample_gumbel(6, &mut rng);
            let mut t = Tape::new();
            let v = t.constant(Tensor::vector(lp));
            let cold = gumbel_softmax(&mut t, v, &g, 0.5).unwrap();
            let hot = gumbel_softmax(&mut t, v, &g, 1.5).unwrap();
            assert!(entropy(t.value(hot).data()) >= entropy(t.value(cold).data()));
        }
    }

    #[test]
    fn gumbel_softmax_gradient() {
        let g = [0.3, -0.1, 0.7, 0.0];
        let err = check_gradients(
            |t, v| {
                let y = gumbel_softmax(t, v[0], &g, 0.9)?;
                let w = t.constant(Tensor::vector(vec![1.0, -2.0, 0.5, 3.0]));
                let p = t.mul(y, w)?;
                Ok(t.sum(p))
            },
            &[Tensor::vector(vec![-1.2, -0.7, -2.0, -1.5])],
        )
        .unwrap();
        assert!(err <= 1e-4);
    }

    #[test]
    fn sample_step_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = Tape::new();
        let v = t.leaf(Tensor::vector(vec![-1.0, -0.5, -2.0]), true);
        let s = sample_step(&mut t, v, &mut Noise::Gumbel(&mut rng), DEFAULT_TAU).unwrap();
        assert_eq!(s.index, t.value(s.y_tilde).argmax());
        assert_eq!(t.value(s.s).data().iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(s.g.len(), 3);
    }
}
