//! Dense univariate polynomials with ascending coefficients. Used for the
//! exact antiderivatives of the model's polynomial nonlinearities.

#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly(coeffs)
    }

    /// Monic-free construction from roots: k * prod (x - r_i).
    pub fn from_roots(k: f64, roots: &[f64]) -> Self {
        let mut p = Poly(vec![k]);
        for &r in roots {
            p = p.mul(&Poly(vec![-r, 1.0]));
        }
        p
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect())
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Poly {
        let mut out = vec![0.0; self.0.len() + 1];
        for (i, &c) in self.0.iter().enumerate() {
            out[i + 1] = c / (i + 1) as f64;
        }
        Poly(out)
    }
}
