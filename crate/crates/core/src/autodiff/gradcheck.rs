use rand::seq::index::sample;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Check at most this many randomly chosen coordinates per input.
    pub max_coords: Option<usize>,
    /// Seeds the coordinate sampling.
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

/// Largest relative error between the tape gradient and central differences
/// over every coordinate of every input, with `eps = 1e-5`.
///
/// Relative error is `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    gradcheck_with(
        f,
        inputs,
        &GradcheckOptions {
            eps,
            ..Default::default()
        },
    )
}

pub fn gradcheck_with<F>(f: F, inputs: &[Tensor], opts: &GradcheckOptions) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if !v.is_scalar() {
            return Err(Error::shape("gradcheck", "function must return a scalar"));
        }
        if !v.item().is_finite() {
            return Err(Error::NonFinite {
                op: "gradcheck",
                context: None,
            });
        }
        Ok(v.item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut rng = rng::pcg(opts.seed, Stream::Gradcheck);
    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[i].shape());
        let analytic = grads.get(*var).unwrap_or(&zeros);
        let n = inputs[i].len();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => {
                let mut c = sample(&mut rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for j in coords {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + opts.eps;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - opts.eps;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
