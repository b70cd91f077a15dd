//! Exact unitary time evolution through stage schedules.
//!
//! Each stage's terms are grouped into clusters of overlapping legs; every
//! cluster is exponentiated once by Hermitian eigendecomposition of its
//! block and reused for all sample times in the stage. Disjoint clusters
//! commute, so applying their factor propagators in sequence is exact. The
//! full-space operator is never materialized.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Result, WfError};
use crate::gemm::zgemm;
use crate::hambuilder::StageSchedule;
use crate::tensorspace::{HermitianOperator, LegPlan, StateVector, SubsystemLayout};
use crate::tol;

/// Largest block a single eigendecomposition may span. Exceeding it is an
/// error, not a silent fallback: the caller must re-partition legs.
pub const DEFAULT_BLOCK_CAP: usize = 4096;

/// Unitary factor exp(-i H t) for the summed terms on one leg cluster,
/// stored as the eigenbasis and spectrum of the restricted block.
#[derive(Debug)]
pub struct Propagator {
    legs: Vec<String>,
    layout: Arc<SubsystemLayout>,
    plan: LegPlan,
    eigvals: Vec<f64>,
    eigvecs: DMatrix<C64>,
    eigvecs_adjoint: DMatrix<C64>,
}

/// Assemble the dense block matrix of `term` inside the cluster spanned by
/// `block_layout` (identity on cluster legs the term does not touch).
fn assemble_into(
    block: &mut DMatrix<C64>,
    block_layout: &SubsystemLayout,
    term: &HermitianOperator,
) -> Result<()> {
    let plan = LegPlan::new(block_layout, &term.legs())?;
    let k = plan.block_dim;
    let m = term.matrix();
    for r in 0..plan.rest_dim {
        let ro = plan.offset_of_rest(r);
        for i in 0..k {
            let bi = plan.offset_of_block(i) + ro;
            for j in 0..k {
                let bj = plan.offset_of_block(j) + ro;
                block[(bi, bj)] += m[(i, j)];
            }
        }
    }
    Ok(())
}

/// Exponentiate the summed terms over their shared leg cluster.
///
/// All terms must act within `legs` (given in layout order); the block
/// dimension is the product of the cluster leg dims and must stay at or
/// below `cap`.
pub fn exponentiate(
    layout: &Arc<SubsystemLayout>,
    legs: &[&str],
    terms: &[&HermitianOperator],
    cap: usize,
) -> Result<Propagator> {
    let sub = layout.sublayout(legs)?;
    let dim = sub.total_dim();
    if dim > cap {
        return Err(WfError::BlockTooLarge { dim, cap });
    }
    for term in terms {
        for leg in term.legs() {
            sub.position(leg)?;
        }
    }
    let mut block = DMatrix::<C64>::zeros(dim, dim);
    for term in terms {
        assemble_into(&mut block, &sub, term)?;
    }
    let eig = block.symmetric_eigen();
    let eigvecs_adjoint = eig.eigenvectors.adjoint();
    let labels = sub.labels();
    let plan = LegPlan::new(layout, &labels)?;
    Ok(Propagator {
        legs: labels.iter().map(|s| s.to_string()).collect(),
        layout: layout.clone(),
        plan,
        eigvals: eig.eigenvalues.iter().copied().collect(),
        eigvecs: eig.eigenvectors,
        eigvecs_adjoint,
    })
}

impl Propagator {
    pub fn legs(&self) -> Vec<&str> {
        self.legs.iter().map(|s| s.as_str()).collect()
    }

    pub fn block_dim(&self) -> usize {
        self.eigvals.len()
    }

    /// Dense exp(-i H t) on the block, for small-dimension checks.
    pub fn block_matrix(&self, t: f64) -> DMatrix<C64> {
        let k = self.block_dim();
        let mut phased = self.eigvecs.clone();
        for (mut c, &lambda) in phased.column_iter_mut().zip(&self.eigvals) {
            let phase = C64::from_polar(1.0, -lambda * t);
            for x in c.iter_mut() {
                *x *= phase;
            }
        }
        let mut out = DMatrix::<C64>::zeros(k, k);
        zgemm(
            k,
            k,
            k,
            phased.as_slice(),
            1,
            k as isize,
            self.eigvecs_adjoint.as_slice(),
            1,
            k as isize,
            out.as_mut_slice(),
            1,
            k as isize,
        );
        out
    }

    /// Max-norm deviation of U(t)·U(t)† from the identity at t = 1.
    pub fn unitarity_error(&self) -> f64 {
        let u = self.block_matrix(1.0);
        let ud = u.adjoint();
        let prod = &u * &ud;
        let mut worst = 0.0f64;
        for i in 0..prod.nrows() {
            for j in 0..prod.ncols() {
                let expect = if i == j { C64::ONE } else { C64::ZERO };
                worst = worst.max((prod[(i, j)] - expect).norm());
            }
        }
        worst
    }

    /// Apply exp(-i H t) to the state, contracting only the cluster legs.
    pub fn apply(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        if *state.layout() != self.layout {
            return Err(WfError::LayoutMismatch(
                "state layout differs from the propagator layout".into(),
            ));
        }
        let mut amps = state.amplitudes().to_vec();
        let mut scratch = Scratch::for_plan(&self.plan);
        self.apply_in_place(&mut amps, t, &mut scratch);
        StateVector::from_amplitudes(self.layout.clone(), amps)
    }

    pub(crate) fn apply_in_place(&self, amps: &mut [C64], t: f64, scratch: &mut Scratch) {
        let k = self.plan.block_dim;
        let r = self.plan.rest_dim;
        self.plan.gather(amps, &mut scratch.gathered);
        // w = Q† x
        zgemm(
            k,
            k,
            r,
            self.eigvecs_adjoint.as_slice(),
            1,
            k as isize,
            &scratch.gathered,
            1,
            k as isize,
            &mut scratch.rotated,
            1,
            k as isize,
        );
        // w *= e^{-i λ t} row-wise
        if scratch.phases.len() != k {
            scratch.phases.resize(k, C64::ONE);
        }
        for (p, &lambda) in scratch.phases.iter_mut().zip(&self.eigvals) {
            *p = C64::from_polar(1.0, -lambda * t);
        }
        for col in 0..r {
            let chunk = &mut scratch.rotated[col * k..(col + 1) * k];
            for (x, p) in chunk.iter_mut().zip(&scratch.phases) {
                *x *= p;
            }
        }
        // y = Q w
        zgemm(
            k,
            k,
            r,
            self.eigvecs.as_slice(),
            1,
            k as isize,
            &scratch.rotated,
            1,
            k as isize,
            &mut scratch.gathered,
            1,
            k as isize,
        );
        self.plan.scatter(&scratch.gathered, amps);
    }
}

pub(crate) struct Scratch {
    gathered: Vec<C64>,
    rotated: Vec<C64>,
    phases: Vec<C64>,
}

impl Scratch {
    fn for_plan(plan: &LegPlan) -> Self {
        let n = plan.block_dim * plan.rest_dim;
        Scratch {
            gathered: vec![C64::ZERO; n],
            rotated: vec![C64::ZERO; n],
            phases: Vec::new(),
        }
    }

    fn for_total(total: usize) -> Self {
        Scratch {
            gathered: vec![C64::ZERO; total],
            rotated: vec![C64::ZERO; total],
            phases: Vec::new(),
        }
    }
}

/// Group stage terms into clusters of transitively overlapping legs.
fn cluster_terms<'a>(
    layout: &'a SubsystemLayout,
    terms: &'a [HermitianOperator],
) -> Result<Vec<(Vec<&'a str>, Vec<&'a HermitianOperator>)>> {
    let n_factors = layout.factors().len();
    let mut parent: Vec<usize> = (0..n_factors).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for term in terms {
        let positions: Vec<usize> = term
            .legs()
            .iter()
            .map(|l| layout.position(l))
            .collect::<Result<_>>()?;
        for w in positions.windows(2) {
            let a = find(&mut parent, w[0]);
            let b = find(&mut parent, w[1]);
            parent[a.max(b)] = a.min(b);
        }
    }
    // cluster id -> (legs in layout order, member terms)
    let mut clusters: Vec<(Vec<&str>, Vec<&HermitianOperator>)> = Vec::new();
    let mut root_of_cluster: Vec<usize> = Vec::new();
    for term in terms {
        let first = layout.position(term.legs()[0])?;
        let root = find(&mut parent, first);
        let idx = match root_of_cluster.iter().position(|&r| r == root) {
            Some(i) => i,
            None => {
                root_of_cluster.push(root);
                let legs: Vec<&str> = layout
                    .factors()
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| find(&mut parent, *p) == root)
                    .map(|(_, f)| f.label.as_str())
                    .collect();
                // only legs actually touched by terms belong in the block
                clusters.push((legs, Vec::new()));
                root_of_cluster.len() - 1
            }
        };
        clusters[idx].1.push(term);
    }
    // prune cluster legs down to those referenced by its terms, keeping
    // layout order
    for (legs, members) in &mut clusters {
        legs.retain(|l| members.iter().any(|m| m.legs().contains(l)));
    }
    clusters.sort_by_key(|(legs, _)| layout.position(legs[0]).unwrap_or(usize::MAX));
    Ok(clusters)
}

/// States at the sample grid of a schedule.
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub max_norm_drift: f64,
}

/// Walk a schedule, handing every sampled state to the observer. Returns the
/// final state and the worst norm drift seen.
///
/// Sample times are exact: each state is produced from the stage-start state
/// by a single factor-propagator application per cluster, so errors do not
/// accumulate across samples within a stage.
pub fn run_schedule_observed<F>(
    initial: &StateVector,
    schedule: &StageSchedule,
    mut observe: F,
) -> Result<(StateVector, f64)>
where
    F: FnMut(f64, &StateVector) -> Result<()>,
{
    let norm0 = initial.norm();
    if (norm0 - 1.0).abs() > 1e-9 {
        return Err(WfError::NotNormalized(norm0));
    }
    let layout = initial.layout().clone();
    let mut drift = (norm0 - 1.0).abs();
    observe(0.0, initial)?;
    let mut stage_start = initial.clone();
    let mut t0 = 0.0;
    let mut scratch = Scratch::for_total(layout.total_dim());
    for stage in &schedule.stages {
        let clusters = cluster_terms(&layout, &stage.terms)?;
        let propagators: Vec<Propagator> = clusters
            .iter()
            .map(|(legs, members)| exponentiate(&layout, legs, members, DEFAULT_BLOCK_CAP))
            .collect::<Result<_>>()?;
        let steps = stage.samples.max(1);
        let dt = stage.duration / steps as f64;
        let mut last = stage_start.clone();
        for j in 1..=steps {
            let elapsed = dt * j as f64;
            let mut amps = stage_start.amplitudes().to_vec();
            for p in &propagators {
                p.apply_in_place(&mut amps, elapsed, &mut scratch);
            }
            let state = StateVector::from_amplitudes(layout.clone(), amps)?;
            drift = drift.max((state.norm() - 1.0).abs());
            observe(t0 + elapsed, &state)?;
            last = state;
        }
        t0 += stage.duration;
        stage_start = last;
    }
    if drift > tol::NORM_DRIFT {
        return Err(WfError::NotNormalized(1.0 + drift));
    }
    Ok((stage_start, drift))
}

/// Collecting variant of [`run_schedule_observed`], for small composites.
pub fn run_schedule(initial: &StateVector, schedule: &StageSchedule) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let (_, max_norm_drift) = run_schedule_observed(initial, schedule, |t, s| {
        times.push(t);
        states.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        times,
        states,
        max_norm_drift,
    })
}
