//! Compiled form of a [`Generator`] for repeated right-hand-side evaluation.
//!
//! All terms share one CSR pattern; each stored entry keeps the list of
//! `(term, value)` contributions, so assembling `H(t)` costs one pass over the
//! nonzeros. Propagation is further restricted to the set of basis states
//! reachable from the initial support through any term or jump operator.
//! That set is invariant under the dynamics, so the restriction is exact.

use std::collections::{BTreeMap, VecDeque};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::hilbert::{ComplexOperator, ZERO};

const PATTERN_EPS: f64 = 0.0;

/// Ordered list of retained full-space indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subspace {
    full_dim: usize,
    indices: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl Subspace {
    pub fn full(dim: usize) -> Self {
        Self::from_indices(dim, (0..dim).collect())
    }

    pub fn from_indices(full_dim: usize, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        let mut position = vec![None; full_dim];
        for (k, &i) in indices.iter().enumerate() {
            position[i] = Some(k);
        }
        Self {
            full_dim,
            indices,
            position,
        }
    }

    /// Closure of `seeds` under the nonzero patterns of `operators` and their
    /// adjoints.
    pub fn reachable<'a>(
        full_dim: usize,
        seeds: impl IntoIterator<Item = usize>,
        operators: impl IntoIterator<Item = &'a ComplexOperator>,
    ) -> Self {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); full_dim];
        for op in operators {
            let m = op.matrix();
            for j in 0..full_dim {
                for i in 0..full_dim {
                    if m[(i, j)].norm() > PATTERN_EPS {
                        adjacency[j].push(i);
                        adjacency[i].push(j);
                    }
                }
            }
        }
        let mut seen = vec![false; full_dim];
        let mut queue = VecDeque::new();
        for s in seeds {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        let indices = (0..full_dim).filter(|&i| seen[i]).collect();
        Self::from_indices(full_dim, indices)
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn position(&self, full_index: usize) -> Option<usize> {
        self.position[full_index]
    }

    pub fn restrict_vector(&self, full: &[C64]) -> Result<Vec<C64>> {
        for (i, v) in full.iter().enumerate() {
            if *v != ZERO && self.position[i].is_none() {
                return Err(Error::invalid(format!(
                    "state has weight on basis index {i} outside the propagation subspace"
                )));
            }
        }
        Ok(self.indices.iter().map(|&i| full[i]).collect())
    }

    pub fn expand_vector(&self, reduced: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.full_dim];
        for (k, &i) in self.indices.iter().enumerate() {
            out[i] = reduced[k];
        }
        out
    }

    /// Row-major reduced copy of a full operator.
    pub fn restrict_matrix(&self, op: &ComplexOperator) -> Result<Vec<C64>> {
        let n = self.dim();
        let m = op.matrix();
        for i in 0..self.full_dim {
            for j in 0..self.full_dim {
                let outside = self.position[i].is_none() || self.position[j].is_none();
                if outside && m[(i, j)] != ZERO {
                    return Err(Error::invalid(format!(
                        "operator entry ({i}, {j}) lies outside the propagation subspace"
                    )));
                }
            }
        }
        let mut out = vec![ZERO; n * n];
        for (a, &i) in self.indices.iter().enumerate() {
            for (b, &j) in self.indices.iter().enumerate() {
                out[a * n + b] = m[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn expand_matrix(&self, reduced: &[C64]) -> ComplexOperator {
        let n = self.dim();
        let mut op = ComplexOperator::zeros(self.full_dim);
        for (a, &i) in self.indices.iter().enumerate() {
            for (b, &j) in self.indices.iter().enumerate() {
                op.set(i, j, reduced[a * n + b]);
            }
        }
        op
    }
}

/// Constant sparse matrix in CSR form on a subspace.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    pub fn from_operator(op: &ComplexOperator, subspace: &Subspace, scale: C64) -> Self {
        let n = subspace.dim();
        let m = op.matrix();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in subspace.indices() {
            for (b, &j) in subspace.indices().iter().enumerate() {
                let v = m[(i, j)];
                if v != ZERO {
                    cols.push(b);
                    values.push(v * scale);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim: n,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = self · x` for a vector.
    pub fn mul_vec(&self, x: &[C64], out: &mut [C64]) {
        csr_mul_vec(&self.row_ptr, &self.cols, &self.values, x, out);
    }

    /// `out = self · X` for a row-major `dim × dim` matrix.
    pub fn mul_mat(&self, x: &[C64], out: &mut [C64]) {
        csr_mul_mat(self.dim, &self.row_ptr, &self.cols, &self.values, x, out);
    }
}

fn csr_mul_vec(row_ptr: &[usize], cols: &[usize], values: &[C64], x: &[C64], out: &mut [C64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = ZERO;
        for e in row_ptr[i]..row_ptr[i + 1] {
            acc += values[e] * x[cols[e]];
        }
        *o = acc;
    }
}

fn csr_mul_mat(
    n: usize,
    row_ptr: &[usize],
    cols: &[usize],
    values: &[C64],
    x: &[C64],
    out: &mut [C64],
) {
    for i in 0..n {
        let row_out = &mut out[i * n..(i + 1) * n];
        row_out.fill(ZERO);
        for e in row_ptr[i]..row_ptr[i + 1] {
            let v = values[e];
            let row_x = &x[cols[e] * n..(cols[e] + 1) * n];
            for (o, xv) in row_out.iter_mut().zip(row_x) {
                *o += v * xv;
            }
        }
    }
}

/// `H(t)` in angular-frequency units on a subspace, with an optional
/// constant addend (used for the non-Hermitian loss term).
#[derive(Clone, Debug)]
pub struct CompiledGenerator {
    dim: usize,
    amplitudes: Vec<C64>,
    frequencies: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    contrib_ptr: Vec<usize>,
    contrib_term: Vec<usize>,
    contrib_value: Vec<C64>,
    constant: Vec<C64>,
    max_frequency: f64,
}

impl CompiledGenerator {
    /// `constant` is in the generator's energy unit and is scaled by
    /// `rate_scale` like every term.
    pub fn compile(
        gen: &Generator,
        constant: Option<&ComplexOperator>,
        subspace: &Subspace,
    ) -> Result<Self> {
        if gen.dim() != subspace.full_dim() {
            return Err(Error::DimensionMismatch {
                expected: subspace.full_dim(),
                found: gen.dim(),
            });
        }
        let n = subspace.dim();
        let mut entries: Vec<BTreeMap<usize, (Vec<(usize, C64)>, C64)>> = vec![BTreeMap::new(); n];
        let idx = subspace.indices();
        let check_closed = |op: &ComplexOperator| -> Result<()> {
            let m = op.matrix();
            for &j in idx {
                for i in 0..subspace.full_dim() {
                    if m[(i, j)] != ZERO && subspace.position(i).is_none() {
                        return Err(Error::invalid(format!(
                            "operator maps retained state {j} to {i} outside the subspace"
                        )));
                    }
                }
            }
            Ok(())
        };
        for (k, term) in gen.terms().iter().enumerate() {
            check_closed(&term.operator)?;
            let m = term.operator.matrix();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    let v = m[(i, j)];
                    if v != ZERO {
                        entries[a].entry(b).or_insert((Vec::new(), ZERO)).0.push((k, v));
                    }
                }
            }
        }
        if let Some(c) = constant {
            check_closed(c)?;
            if c.dim() != subspace.full_dim() {
                return Err(Error::DimensionMismatch {
                    expected: subspace.full_dim(),
                    found: c.dim(),
                });
            }
            let m = c.matrix();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    let v = m[(i, j)];
                    if v != ZERO {
                        entries[a].entry(b).or_insert((Vec::new(), ZERO)).1 += v * gen.rate_scale();
                    }
                }
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut contrib_ptr = vec![0];
        let mut contrib_term = Vec::new();
        let mut contrib_value = Vec::new();
        let mut constant_values = Vec::new();
        for row in entries {
            for (col, (contribs, cst)) in row {
                cols.push(col);
                for (k, v) in contribs {
                    contrib_term.push(k);
                    contrib_value.push(v);
                }
                contrib_ptr.push(contrib_term.len());
                constant_values.push(cst);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            dim: n,
            amplitudes: gen
                .terms()
                .iter()
                .map(|t| t.coefficient.amplitude * gen.rate_scale())
                .collect(),
            frequencies: gen.terms().iter().map(|t| t.coefficient.frequency).collect(),
            row_ptr,
            cols,
            contrib_ptr,
            contrib_term,
            contrib_value,
            constant: constant_values,
            max_frequency: gen.max_frequency(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn max_frequency(&self) -> f64 {
        self.max_frequency
    }

    /// Fills `values` (length `nnz`) with the entries of `H(t)`.
    pub fn assemble(&self, t: f64, coeffs: &mut Vec<C64>, values: &mut [C64]) {
        coeffs.clear();
        coeffs.extend(
            self.amplitudes
                .iter()
                .zip(&self.frequencies)
                .map(|(a, &w)| if w == 0.0 { *a } else { a * C64::from_polar(1.0, w * t) }),
        );
        for (e, v) in values.iter_mut().enumerate() {
            let mut acc = self.constant[e];
            for c in self.contrib_ptr[e]..self.contrib_ptr[e + 1] {
                acc += coeffs[self.contrib_term[c]] * self.contrib_value[c];
            }
            *v = acc;
        }
    }

    pub fn mul_vec(&self, values: &[C64], x: &[C64], out: &mut [C64]) {
        csr_mul_vec(&self.row_ptr, &self.cols, values, x, out);
    }

    pub fn mul_mat(&self, values: &[C64], x: &[C64], out: &mut [C64]) {
        csr_mul_mat(self.dim, &self.row_ptr, &self.cols, values, x, out);
    }
}
