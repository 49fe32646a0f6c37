use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `phi(t, x) = p(t) sin(k pi x) e_i`, with `p` a polynomial in `t`
/// (coefficients in increasing degree). Vanishes at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub mode: u32,
    pub component: usize,
    #[serde(default = "unit_poly")]
    pub time_poly: Vec<f64>,
}

fn unit_poly() -> Vec<f64> {
    vec![1.0]
}

impl TestFunction {
    pub fn sine(mode: u32, component: usize) -> Self {
        TestFunction { mode, component, time_poly: unit_poly() }
    }

    fn poly(&self, t: f64) -> f64 {
        self.time_poly.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn poly_dt(&self, t: f64) -> f64 {
        self.time_poly.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
    }

    fn shape(&self, x: f64) -> f64 {
        (self.mode as f64 * PI * x).sin()
    }

    /// Scalar amplitude of `phi(t, x)` in its component.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.poly(t) * self.shape(x)
    }

    /// `d^2 phi / dx^2`, analytic.
    pub fn d2x(&self, t: f64, x: f64) -> f64 {
        let k = self.mode as f64 * PI;
        -k * k * self.value(t, x)
    }

    /// `d phi / dt`, analytic.
    pub fn dt(&self, t: f64, x: f64) -> f64 {
        self.poly_dt(t) * self.shape(x)
    }
}
