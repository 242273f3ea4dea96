//! Dense real polynomials with coefficients in ascending order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Degree, with the zero polynomial reported as `None`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// `self + a*x`.
    pub fn add_linear(&self, a: f64) -> Polynomial {
        let mut c = self.coeffs.clone();
        if c.len() < 2 {
            c.resize(2, 0.0);
        }
        c[1] += a;
        Polynomial::new(c)
    }

    /// Cauchy bound: every real root lies in `[-b, b]`.
    fn root_bound(&self) -> f64 {
        let lead = self.leading();
        1.0 + self.coeffs[..self.coeffs.len() - 1]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0, f64::max)
    }

    /// Real roots in ascending order, isolated between the critical points
    /// (roots of the derivative, found recursively) and refined by bisection.
    pub fn real_roots(&self) -> Vec<f64> {
        match self.degree() {
            None | Some(0) => return Vec::new(),
            Some(1) => return vec![-self.coeffs[0] / self.coeffs[1]],
            _ => {}
        }
        let bound = self.root_bound();
        let mut breaks = vec![-bound];
        breaks.extend(
            self.derivative()
                .real_roots()
                .into_iter()
                .filter(|x| x.abs() < bound),
        );
        breaks.push(bound);

        let mut roots: Vec<f64> = Vec::new();
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            let root = if fa == 0.0 {
                Some(a)
            } else if fb == 0.0 {
                Some(b)
            } else if fa.signum() != fb.signum() {
                Some(bisect(|x| self.eval(x), a, b, fa))
            } else {
                None
            };
            if let Some(r) = root {
                let dup = roots
                    .last()
                    .is_some_and(|&prev| (prev - r).abs() <= 1e-12 * (1.0 + r.abs()));
                if !dup {
                    roots.push(r);
                }
            }
        }
        roots
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}
