//! Harmonic extension of boundary data from the unit circle.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::geometry::Point;

/// Trailing coefficients below this fraction of the largest one are dropped;
/// the trapezoidal fit carries round-off noise of up to about 1e-15 of it.
const TRUNCATION: f64 = 1e-14;

/// A harmonic function `Re Σ c_n z^n` on the closed unit disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HarmonicSeries {
    coeffs: Vec<Complex64>,
    /// Number of boundary samples used in the fit.
    pub nodes: usize,
    /// Size of the upper half of the computed spectrum relative to the
    /// largest coefficient; an aliasing indicator.
    pub tail: f64,
}

impl HarmonicSeries {
    pub fn zero() -> Self {
        HarmonicSeries::default()
    }

    pub fn constant(c: f64) -> Self {
        HarmonicSeries {
            coeffs: vec![Complex64::new(c, 0.0)],
            nodes: 1,
            tail: 0.0,
        }
    }

    /// Fits `g(θ)` at `nodes` equispaced angles by the trapezoidal rule.
    pub fn from_boundary(g: impl Fn(f64) -> f64, nodes: usize) -> Self {
        assert!(nodes >= 4 && nodes.is_multiple_of(2), "boundary node count must be even and >= 4");
        let mut buf: Vec<Complex64> = (0..nodes)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / nodes as f64;
                Complex64::new(g(th), 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(nodes).process(&mut buf);
        let half = nodes / 2;
        let scale = 1.0 / nodes as f64;
        let mut coeffs: Vec<Complex64> = (0..=half)
            .map(|n| {
                let c = buf[n] * scale;
                if n == 0 || n == half {
                    c
                } else {
                    c * 2.0
                }
            })
            .collect();
        let largest = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let upper = coeffs[half / 2..].iter().map(|c| c.norm()).fold(0.0, f64::max);
        let tail = if largest > 0.0 { upper / largest } else { 0.0 };
        while coeffs
            .last()
            .is_some_and(|c| c.norm() <= TRUNCATION * largest)
        {
            coeffs.pop();
        }
        HarmonicSeries {
            coeffs,
            nodes,
            tail,
        }
    }

    /// Doubles the node count from `nodes` until the spectral tail drops
    /// below `tol` or `cap` is reached. The flag reports convergence.
    pub fn fit(g: impl Fn(f64) -> f64, mut nodes: usize, cap: usize, tol: f64) -> (Self, bool) {
        loop {
            let s = Self::from_boundary(&g, nodes);
            if s.tail <= tol {
                return (s, true);
            }
            if nodes * 2 > cap {
                return (s, false);
            }
            nodes *= 2;
        }
    }

    pub fn terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: Point) -> f64 {
        let z = Complex64::new(x.x, x.y);
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
            .re
    }
}
