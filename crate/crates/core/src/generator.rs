//! Time-dependent Hamiltonians written as `H(t) = Σ_k a_k e^{iω_k t} O_k`.
//!
//! Every Hamiltonian in this crate has that shape, so propagation only needs
//! the list of terms. `rate_scale` converts the operator's energy unit into
//! angular frequency per time unit (`1/ħ` for meV and ps, `1` for
//! dimensionless problems).

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::ComplexOperator;

/// `amplitude · e^{i·frequency·t}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficient {
    pub amplitude: C64,
    /// Angular frequency per time unit.
    pub frequency: f64,
}

impl Coefficient {
    pub fn constant(amplitude: C64) -> Self {
        Self {
            amplitude,
            frequency: 0.0,
        }
    }

    pub fn oscillating(amplitude: C64, frequency: f64) -> Self {
        Self {
            amplitude,
            frequency,
        }
    }

    pub fn at(&self, t: f64) -> C64 {
        if self.frequency == 0.0 {
            self.amplitude
        } else {
            self.amplitude * C64::from_polar(1.0, self.frequency * t)
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            amplitude: self.amplitude.conj(),
            frequency: -self.frequency,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coefficient: Coefficient,
    pub operator: ComplexOperator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    dim: usize,
    terms: Vec<Term>,
    rate_scale: f64,
}

impl Generator {
    pub fn new(dim: usize, rate_scale: f64) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            rate_scale,
        }
    }

    /// Dimensionless constant Hamiltonian.
    pub fn constant(op: ComplexOperator) -> Self {
        let mut g = Self::new(op.dim(), 1.0);
        g.terms.push(Term {
            coefficient: Coefficient::constant(C64::new(1.0, 0.0)),
            operator: op,
        });
        g
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn push(&mut self, coefficient: Coefficient, operator: ComplexOperator) -> Result<()> {
        if operator.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: operator.dim(),
            });
        }
        if coefficient.amplitude != C64::new(0.0, 0.0) {
            self.terms.push(Term {
                coefficient,
                operator,
            });
        }
        Ok(())
    }

    /// Adds `c·O` together with its Hermitian conjugate `c*·O†`.
    pub fn push_with_conjugate(
        &mut self,
        coefficient: Coefficient,
        operator: ComplexOperator,
    ) -> Result<()> {
        let dag = operator.dagger();
        self.push(coefficient, operator)?;
        self.push(coefficient.conj(), dag)
    }

    /// Dense snapshot `H(t)` in the operator's own energy unit.
    pub fn at(&self, t: f64) -> ComplexOperator {
        let mut h = ComplexOperator::zeros(self.dim);
        for term in &self.terms {
            h = &h + &term.operator.scale(term.coefficient.at(t));
        }
        h
    }

    /// Fastest explicit oscillation, in angular frequency per time unit.
    pub fn max_frequency(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient.frequency.abs())
            .fold(0.0, f64::max)
    }

    /// Upper bound on `‖H(t)‖` (max row sum), converted to angular frequency.
    pub fn norm_bound(&self) -> f64 {
        let n = self.dim;
        let mut rows = vec![0.0; n];
        for term in &self.terms {
            let a = term.coefficient.amplitude.norm();
            let m = term.operator.matrix();
            for (i, row) in rows.iter_mut().enumerate() {
                *row += a * (0..n).map(|j| m[(i, j)].norm()).sum::<f64>();
            }
        }
        rows.into_iter().fold(0.0, f64::max) * self.rate_scale
    }

    /// Largest `‖H(t) - H(t)†‖` over a handful of probe times.
    pub fn hermiticity_error(&self, probe_times: &[f64]) -> f64 {
        probe_times
            .iter()
            .map(|&t| self.at(t).hermiticity_error())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::fock_annihilation;

    #[test]
    fn conjugate_pairs_are_hermitian() {
        let a = fock_annihilation(3).unwrap();
        let mut g = Generator::new(4, 1.0);
        g.push_with_conjugate(Coefficient::oscillating(C64::new(0.3, -0.2), 1.7), a)
            .unwrap();
        assert!(g.hermiticity_error(&[0.0, 0.4, 2.9, 17.0]) < 1e-15);
        assert_eq!(g.max_frequency(), 1.7);
    }

    #[test]
    fn zero_amplitude_terms_are_dropped() {
        let mut g = Generator::new(2, 1.0);
        g.push(Coefficient::constant(C64::new(0.0, 0.0)), ComplexOperator::identity(2))
            .unwrap();
        assert!(g.terms().is_empty());
        assert!(g
            .push(Coefficient::constant(C64::new(1.0, 0.0)), ComplexOperator::identity(3))
            .is_err());
    }
}
