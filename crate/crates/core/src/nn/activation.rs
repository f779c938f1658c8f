use core::f64::consts::{FRAC_1_SQRT_2, PI};
use serde::{Deserialize, Serialize};

/// Activation catalogue. `PRelu` carries learnable slopes held by the model,
/// so its scalar form here takes the slope explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Tanh,
    ReLU,
    LeakyReLU,
    PReLU,
    ELU,
    GELU,
}

pub const LEAKY_SLOPE: f64 = 0.01;
pub const PRELU_INIT: f64 = 0.25;

impl Activation {
    pub const ALL: [Activation; 7] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::ReLU,
        Activation::LeakyReLU,
        Activation::PReLU,
        Activation::ELU,
        Activation::GELU,
    ];

    /// Value at `x`. For `PReLU` the default initial slope is used; layers
    /// use [`prelu`] with their own slopes.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => libm::tanh(x),
            Activation::ReLU => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyReLU => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::PReLU => prelu(x, PRELU_INIT),
            Activation::ELU => {
                if x > 0.0 {
                    x
                } else {
                    libm::expm1(x)
                }
            }
            Activation::GELU => x * std_normal_cdf(x),
        }
    }

    /// Derivative with respect to the input.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::PReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    PRELU_INIT
                }
            }
            Activation::ELU => {
                if x > 0.0 {
                    1.0
                } else {
                    libm::exp(x)
                }
            }
            Activation::GELU => std_normal_cdf(x) + x * std_normal_pdf(x),
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(self, Activation::PReLU)
    }
}

#[inline]
pub fn prelu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Exact Gaussian CDF via `erf`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn std_normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}
