//! Scalar and vector primitives shared by the rest of the crate.

use ndarray::Array2;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Elu,
}

/// Elementwise nonlinearity `h` used by every layer of the recurrent cell.
///
/// The derivative at exactly zero is taken from the right (value 1) for both
/// kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activation {
    pub kind: ActivationKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl Default for Activation {
    fn default() -> Self {
        Activation::ELU
    }
}

impl Activation {
    pub const RELU: Activation = Activation {
        kind: ActivationKind::Relu,
        alpha: 1.0,
    };
    pub const ELU: Activation = Activation {
        kind: ActivationKind::Elu,
        alpha: 1.0,
    };

    pub fn elu(alpha: f64) -> Result<Self> {
        let act = Activation {
            kind: ActivationKind::Elu,
            alpha,
        };
        act.validate()?;
        Ok(act)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ActivationKind::Elu && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ELU alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::Elu => {
                if x > 0.0 {
                    x
                } else {
                    self.alpha * x.exp_m1()
                }
            }
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if x >= 0.0 {
            return 1.0;
        }
        match self.kind {
            ActivationKind::Relu => 0.0,
            ActivationKind::Elu => self.alpha * x.exp(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y = h(x)`.
    /// Avoids a second `exp` for ELU, where `h'(x) = y + alpha` on `x < 0`.
    #[inline]
    pub(crate) fn derivative_from_output(&self, x: f64, y: f64) -> f64 {
        if x >= 0.0 {
            return 1.0;
        }
        match self.kind {
            ActivationKind::Relu => 0.0,
            ActivationKind::Elu => y + self.alpha,
        }
    }
}

/// Group soft-thresholding, the proximal map of `tau * ||w||_2`.
///
/// Returns the zero vector when `||w||_2 <= tau`, otherwise `w * (1 - tau/||w||_2)`.
pub fn group_soft_threshold(w: &[f64], tau: f64) -> Result<Vec<f64>> {
    let mut out = w.to_vec();
    shrink_in_place(&mut out, tau)?;
    Ok(out)
}

/// In-place variant of [`group_soft_threshold`]. Returns the norm of the
/// shrunk vector (zero exactly when the group was thresholded away).
pub fn shrink_in_place(w: &mut [f64], tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::NegativeThreshold(tau));
    }
    Ok(shrink_unchecked(w, tau))
}

#[inline]
pub(crate) fn shrink_unchecked(w: &mut [f64], tau: f64) -> f64 {
    if tau == 0.0 {
        return l2_norm(w);
    }
    let norm = l2_norm(w);
    if norm <= tau {
        w.iter_mut().for_each(|v| *v = 0.0);
        0.0
    } else {
        let scale = 1.0 - tau / norm;
        w.iter_mut().for_each(|v| *v *= scale);
        norm - tau
    }
}

#[inline]
pub fn l2_norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Deterministic random source: ChaCha8 keyed by a 64-bit seed.
///
/// The stream depends only on the seed, on every platform.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh generator for task `index`, keyed by [`child_seed`].
    pub fn child(&self, index: u64) -> SeededRng {
        SeededRng::new(child_seed(self.seed, index))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed-splitting rule `(seed, task index) -> child seed`.
///
/// `splitmix64(seed ^ splitmix64(index))`. Parallel tasks each own a child
/// generator so results never depend on scheduling.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// `rows x cols` matrix of i.i.d. `N(0, variance)` entries, filled row-major.
pub fn sample_gaussian_matrix(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut SeededRng,
) -> Result<Array2<f64>> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::NonPositiveVariance(variance));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "gaussian matrix needs at least one row and column, got {rows}x{cols}"
        )));
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite positive std");
    Ok(Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng)))
}
