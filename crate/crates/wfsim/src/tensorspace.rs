//! Composite Hilbert-space bookkeeping: tensor factors, state construction,
//! operator embedding, partial trace, overlaps.
//!
//! The global index convention is row-major over the layout order: the
//! leftmost factor varies slowest. All outputs (CSV columns, density-matrix
//! indices, oracle comparisons) rely on this convention being fixed at
//! construction.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Result, WfError};
use crate::gemm::zgemm;
use crate::tol;

/// One tensor factor of the composite space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// Ordered register of tensor factors with a fixed index convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemLayout {
    factors: Vec<Factor>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl SubsystemLayout {
    /// Build a layout from `(label, dim)` pairs. Labels must be unique and
    /// dimensions positive. Factor order is fixed here and defines the global
    /// index convention (leftmost slowest).
    pub fn compose(factors: &[(&str, usize)]) -> Result<Arc<Self>> {
        let mut seen: Vec<&str> = Vec::with_capacity(factors.len());
        for &(label, dim) in factors {
            if dim == 0 {
                return Err(WfError::ZeroDim(label.to_string()));
            }
            if seen.contains(&label) {
                return Err(WfError::DuplicateLabel(label.to_string()));
            }
            seen.push(label);
        }
        let factors: Vec<Factor> = factors
            .iter()
            .map(|&(label, dim)| Factor {
                label: label.to_string(),
                dim,
            })
            .collect();
        let mut strides = vec![1usize; factors.len()];
        for i in (0..factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * factors[i + 1].dim;
        }
        let total_dim = factors.iter().map(|f| f.dim).product();
        Ok(Arc::new(SubsystemLayout {
            factors,
            strides,
            total_dim,
        }))
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn labels(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.label.as_str()).collect()
    }

    /// Position of a label in the layout order.
    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| WfError::UnknownLeg(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.position(label)?].dim)
    }

    pub fn stride_of(&self, label: &str) -> Result<usize> {
        Ok(self.strides[self.position(label)?])
    }

    /// Layout over a subset of factors, in layout order.
    pub fn sublayout(&self, keep: &[&str]) -> Result<Arc<Self>> {
        let mut positions = Vec::with_capacity(keep.len());
        for label in keep {
            positions.push(self.position(label)?);
        }
        positions.sort_unstable();
        positions.dedup();
        let pairs: Vec<(&str, usize)> = positions
            .iter()
            .map(|&p| (self.factors[p].label.as_str(), self.factors[p].dim))
            .collect();
        SubsystemLayout::compose(&pairs)
    }

    /// Flat index of a full basis assignment, one entry per factor in any
    /// order.
    pub fn index_of(&self, assignment: &[(&str, usize)]) -> Result<usize> {
        if assignment.len() != self.factors.len() {
            return Err(WfError::LayoutMismatch(format!(
                "assignment covers {} of {} factors",
                assignment.len(),
                self.factors.len()
            )));
        }
        let mut idx = 0usize;
        for &(label, value) in assignment {
            let pos = self.position(label)?;
            if value >= self.factors[pos].dim {
                return Err(WfError::LayoutMismatch(format!(
                    "basis value {value} out of range for leg `{label}`"
                )));
            }
            idx += value * self.strides[pos];
        }
        Ok(idx)
    }
}

/// Gather/scatter plan for a subset of legs: the state is viewed as a
/// (block × rest) matrix without ever materializing the full-space operator.
#[derive(Debug, Clone)]
pub(crate) struct LegPlan {
    pub block_dim: usize,
    pub rest_dim: usize,
    block_offsets: Vec<usize>,
    rest_offsets: Vec<usize>,
}

impl LegPlan {
    /// Plan for `legs` (in the order given; leftmost varies slowest within
    /// the block index).
    pub fn new(layout: &SubsystemLayout, legs: &[&str]) -> Result<Self> {
        let mut positions = Vec::with_capacity(legs.len());
        for label in legs {
            let p = layout.position(label)?;
            if positions.contains(&p) {
                return Err(WfError::DuplicateLabel((*label).to_string()));
            }
            positions.push(p);
        }
        let dims: Vec<usize> = positions.iter().map(|&p| layout.factors[p].dim).collect();
        let strides: Vec<usize> = positions.iter().map(|&p| layout.strides[p]).collect();
        let block_dim: usize = dims.iter().product();
        let block_offsets = mixed_radix_offsets(&dims, &strides);

        let rest: Vec<usize> = (0..layout.factors.len())
            .filter(|p| !positions.contains(p))
            .collect();
        let rest_dims: Vec<usize> = rest.iter().map(|&p| layout.factors[p].dim).collect();
        let rest_strides: Vec<usize> = rest.iter().map(|&p| layout.strides[p]).collect();
        let rest_dim: usize = rest_dims.iter().product();
        let rest_offsets = mixed_radix_offsets(&rest_dims, &rest_strides);

        Ok(LegPlan {
            block_dim,
            rest_dim,
            block_offsets,
            rest_offsets,
        })
    }

    pub fn offset_of_block(&self, k: usize) -> usize {
        self.block_offsets[k]
    }

    pub fn offset_of_rest(&self, r: usize) -> usize {
        self.rest_offsets[r]
    }

    /// Gather the state into a column-major (block_dim × rest_dim) buffer.
    pub fn gather(&self, src: &[C64], dst: &mut [C64]) {
        let k = self.block_dim;
        for (r, &ro) in self.rest_offsets.iter().enumerate() {
            let col = &mut dst[r * k..(r + 1) * k];
            for (slot, &bo) in col.iter_mut().zip(&self.block_offsets) {
                *slot = src[bo + ro];
            }
        }
    }

    /// Scatter a column-major (block_dim × rest_dim) buffer back.
    pub fn scatter(&self, src: &[C64], dst: &mut [C64]) {
        let k = self.block_dim;
        for (r, &ro) in self.rest_offsets.iter().enumerate() {
            let col = &src[r * k..(r + 1) * k];
            for (&value, &bo) in col.iter().zip(&self.block_offsets) {
                dst[bo + ro] = value;
            }
        }
    }
}

fn mixed_radix_offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let mut offsets = Vec::with_capacity(total);
    let mut digits = vec![0usize; dims.len()];
    for _ in 0..total {
        offsets.push(digits.iter().zip(strides).map(|(&d, &s)| d * s).sum());
        for pos in (0..dims.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < dims[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    offsets
}

/// Complex-amplitude state of the full composite.
#[derive(Debug, Clone)]
pub struct StateVector {
    layout: Arc<SubsystemLayout>,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn from_amplitudes(layout: Arc<SubsystemLayout>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(WfError::BadAmplitudeCount {
                got: amps.len(),
                want: layout.total_dim(),
            });
        }
        Ok(StateVector { layout, amps })
    }

    /// Basis state selected by one `(label, value)` pair per factor.
    pub fn basis(layout: &Arc<SubsystemLayout>, assignment: &[(&str, usize)]) -> Result<Self> {
        let idx = layout.index_of(assignment)?;
        let mut amps = vec![C64::ZERO; layout.total_dim()];
        amps[idx] = C64::ONE;
        Ok(StateVector {
            layout: layout.clone(),
            amps,
        })
    }

    /// Tensor product of single-factor states covering `layout` in order.
    pub fn kron_state(layout: &Arc<SubsystemLayout>, parts: &[&StateVector]) -> Result<Self> {
        let part_factors: Vec<&Factor> = parts
            .iter()
            .flat_map(|p| p.layout.factors().iter())
            .collect();
        let matches = part_factors.len() == layout.factors().len()
            && part_factors
                .iter()
                .zip(layout.factors())
                .all(|(a, b)| **a == *b);
        if !matches {
            return Err(WfError::LayoutMismatch(
                "tensor-product parts must cover all layout factors in layout order".into(),
            ));
        }
        let mut amps = vec![C64::ONE];
        for part in parts {
            let mut next = Vec::with_capacity(amps.len() * part.amps.len());
            for &a in &amps {
                for &b in &part.amps {
                    next.push(a * b);
                }
            }
            amps = next;
        }
        Ok(StateVector {
            layout: layout.clone(),
            amps,
        })
    }

    /// Linear combination of same-layout states.
    pub fn superpose(terms: &[(C64, &StateVector)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| WfError::LayoutMismatch("empty superposition".into()))?;
        let layout = first.layout.clone();
        let mut amps = vec![C64::ZERO; layout.total_dim()];
        for (coeff, state) in terms {
            if state.layout != layout {
                return Err(WfError::LayoutMismatch(
                    "superposition terms live on different layouts".into(),
                ));
            }
            for (out, &a) in amps.iter_mut().zip(&state.amps) {
                *out += coeff * a;
            }
        }
        Ok(StateVector { layout, amps })
    }

    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n <= 0.0 {
            return Err(WfError::NotNormalized(n));
        }
        let inv = C64::new(1.0 / n, 0.0);
        for a in &mut self.amps {
            *a *= inv;
        }
        Ok(self)
    }

    pub fn scaled(mut self, c: C64) -> Self {
        for a in &mut self.amps {
            *a *= c;
        }
        self
    }

    /// ⟨self|other⟩: conjugate-linear in `self`, linear in `other`.
    pub fn overlap(&self, other: &StateVector) -> Result<C64> {
        if self.layout != other.layout {
            return Err(WfError::LayoutMismatch(
                "overlap requires identical layouts".into(),
            ));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// A Hamiltonian term tagged with the subset of tensor legs it acts on.
///
/// The matrix is indexed mixed-radix over the named legs in the order given
/// (leftmost slowest), matching the global convention.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    legs: Vec<String>,
    matrix: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(layout: &SubsystemLayout, legs: &[&str], matrix: DMatrix<C64>) -> Result<Self> {
        let mut span = 1usize;
        for label in legs {
            span *= layout.dim_of(label)?;
        }
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != span {
            return Err(WfError::BadOperatorDim {
                got: matrix.nrows(),
                want: span,
            });
        }
        let herm_err = hermiticity_error(&matrix);
        if herm_err > tol::HERMITICITY {
            return Err(WfError::NotHermitian(herm_err));
        }
        Ok(HermitianOperator {
            legs: legs.iter().map(|s| s.to_string()).collect(),
            matrix,
        })
    }

    pub fn from_real(
        layout: &SubsystemLayout,
        legs: &[&str],
        matrix: &DMatrix<f64>,
    ) -> Result<Self> {
        HermitianOperator::new(layout, legs, matrix.map(|x| C64::new(x, 0.0)))
    }

    pub fn legs(&self) -> Vec<&str> {
        self.legs.iter().map(|s| s.as_str()).collect()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Full-space linear action of an operator on its legs, identity elsewhere.
///
/// Realized by leg-wise contraction; the total_dim × total_dim matrix is
/// never materialized.
#[derive(Debug, Clone)]
pub struct EmbeddedOp {
    plan: LegPlan,
    matrix: DMatrix<C64>,
    layout: Arc<SubsystemLayout>,
}

pub fn embed(op: &HermitianOperator, layout: &Arc<SubsystemLayout>) -> Result<EmbeddedOp> {
    let legs = op.legs();
    let plan = LegPlan::new(layout, &legs)?;
    if plan.block_dim != op.dim() {
        return Err(WfError::BadOperatorDim {
            got: op.dim(),
            want: plan.block_dim,
        });
    }
    Ok(EmbeddedOp {
        plan,
        matrix: op.matrix().clone(),
        layout: layout.clone(),
    })
}

impl EmbeddedOp {
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if *state.layout() != self.layout {
            return Err(WfError::LayoutMismatch(
                "state layout differs from the embedding layout".into(),
            ));
        }
        let k = self.plan.block_dim;
        let r = self.plan.rest_dim;
        let mut gathered = vec![C64::ZERO; k * r];
        self.plan.gather(state.amplitudes(), &mut gathered);
        let mut out = vec![C64::ZERO; k * r];
        // column-major everywhere: matrix (k×k), buffers (k×r)
        zgemm(
            k,
            k,
            r,
            self.matrix.as_slice(),
            1,
            k as isize,
            &gathered,
            1,
            k as isize,
            &mut out,
            1,
            k as isize,
        );
        let mut amps = state.amplitudes().to_vec();
        self.plan.scatter(&out, &mut amps);
        StateVector::from_amplitudes(self.layout.clone(), amps)
    }

    /// ⟨state|Op|state⟩.
    pub fn expectation(&self, state: &StateVector) -> Result<C64> {
        state.overlap(&self.apply(state)?)
    }
}

/// Complex square matrix over the kept subsystems.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    layout: Arc<SubsystemLayout>,
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.layout
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.entries.diagonal().sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Tr(ρ²), real part.
    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += (self.entries[(i, j)] * self.entries[(j, i)]).re;
            }
        }
        acc
    }

    /// ⟨a|ρ|b⟩ for states on the kept layout.
    pub fn sandwich(&self, a: &StateVector, b: &StateVector) -> Result<C64> {
        if *a.layout() != self.layout || *b.layout() != self.layout {
            return Err(WfError::LayoutMismatch(
                "sandwich states must live on the kept layout".into(),
            ));
        }
        let rb = {
            let mut out = vec![C64::ZERO; self.dim()];
            zgemm(
                self.dim(),
                self.dim(),
                1,
                self.entries.as_slice(),
                1,
                self.dim() as isize,
                b.amplitudes(),
                1,
                self.dim() as isize,
                &mut out,
                1,
                self.dim() as isize,
            );
            out
        };
        Ok(a.amplitudes()
            .iter()
            .zip(&rb)
            .map(|(x, y)| x.conj() * y)
            .sum())
    }

    pub fn diagonal_probabilities(&self) -> Vec<f64> {
        self.entries.diagonal().iter().map(|c| c.re).collect()
    }
}

/// Trace out everything but `keep` from a pure state.
///
/// The kept-leg order is canonicalized to layout order. Memory use is
/// total_dim + kept_dim² rather than total_dim².
pub fn partial_trace(state: &StateVector, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(WfError::EmptyKeep);
    }
    let layout = state.layout();
    let sub = layout.sublayout(keep)?;
    let keep_ordered: Vec<&str> = sub.labels();
    let plan = LegPlan::new(layout, &keep_ordered)?;
    let k = plan.block_dim;
    let t = plan.rest_dim;
    let mut m = vec![C64::ZERO; k * t];
    plan.gather(state.amplitudes(), &mut m);
    // ρ = M·M† over the traced index; M†(t, j) = conj(M[j, t])
    let m_conj: Vec<C64> = m.iter().map(|c| c.conj()).collect();
    let mut rho = DMatrix::<C64>::zeros(k, k);
    zgemm(
        k,
        t,
        k,
        &m,
        1,
        k as isize,
        &m_conj,
        k as isize,
        1,
        rho.as_mut_slice(),
        1,
        k as isize,
    );
    Ok(DensityMatrix {
        layout: sub,
        entries: rho,
    })
}

/// Trace out everything but `keep` from a density matrix.
pub fn partial_trace_density(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(WfError::EmptyKeep);
    }
    let layout = rho.layout();
    let sub = layout.sublayout(keep)?;
    let keep_ordered: Vec<&str> = sub.labels();
    let plan = LegPlan::new(layout, &keep_ordered)?;
    let k = plan.block_dim;
    let mut out = DMatrix::<C64>::zeros(k, k);
    for k1 in 0..k {
        for k2 in 0..k {
            let mut acc = C64::ZERO;
            for r in 0..plan.rest_dim {
                let i = plan.block_offsets[k1] + plan.rest_offsets[r];
                let j = plan.block_offsets[k2] + plan.rest_offsets[r];
                acc += rho.entries[(i, j)];
            }
            out[(k1, k2)] = acc;
        }
    }
    Ok(DensityMatrix {
        layout: sub,
        entries: out,
    })
}
