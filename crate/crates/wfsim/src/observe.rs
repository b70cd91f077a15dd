//! Diagnostics over propagated states: branch environment extraction,
//! overlap and autocorrelation series, reduced-matrix coefficients, and
//! windowed/ensemble averages.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Result, WfError};
use crate::tensorspace::{LegPlan, StateVector, SubsystemLayout};
use crate::tol;

/// Per-branch environment states and weights of a pointer decomposition.
///
/// A branch with weight below [`tol::BRANCH_FLOOR`] has no defined
/// environment state.
#[derive(Debug, Clone)]
pub struct BranchDecomposition {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    pub env_states: Vec<Option<StateVector>>,
    env_layout: Arc<SubsystemLayout>,
}

impl BranchDecomposition {
    pub fn env_layout(&self) -> &Arc<SubsystemLayout> {
        &self.env_layout
    }

    /// Environment state of a branch, or an error if its weight vanished.
    pub fn env_state(&self, branch: usize) -> Result<&StateVector> {
        self.env_states[branch]
            .as_ref()
            .ok_or(WfError::UndefinedBranch {
                branch,
                floor: tol::BRANCH_FLOOR,
            })
    }

    /// Rebuild Σ √w_i |branch_i⟩ ⊗ |ε_i⟩ over the full layout. Equals the
    /// decomposed state when the branch projectors are complete.
    pub fn reassemble(
        &self,
        layout: &Arc<SubsystemLayout>,
        branches: &[&StateVector],
    ) -> Result<StateVector> {
        let branch_legs = branches[0].layout().labels();
        let plan = LegPlan::new(layout, &branch_legs)?;
        let mut amps = vec![C64::ZERO; layout.total_dim()];
        for (i, branch) in branches.iter().enumerate() {
            let Some(env) = &self.env_states[i] else {
                continue;
            };
            let w = self.weights[i].sqrt();
            for (k, &b) in branch.amplitudes().iter().enumerate() {
                if b.norm_sqr() == 0.0 {
                    continue;
                }
                let bo = plan.offset_of_block(k);
                for (r, &e) in env.amplitudes().iter().enumerate() {
                    amps[bo + plan.offset_of_rest(r)] += C64::new(w, 0.0) * b * e;
                }
            }
        }
        StateVector::from_amplitudes(layout.clone(), amps)
    }
}

/// Split a state along orthogonal branch states spanning a leg subset; the
/// complement legs carry the per-branch environment states.
pub fn extract_branches(
    state: &StateVector,
    branches: &[(&str, &StateVector)],
) -> Result<BranchDecomposition> {
    if branches.is_empty() {
        return Err(WfError::BadParameter("no branch states given".into()));
    }
    let branch_layout = branches[0].1.layout().clone();
    for (i, (_, a)) in branches.iter().enumerate() {
        if *a.layout() != branch_layout {
            return Err(WfError::LayoutMismatch(
                "branch states live on different layouts".into(),
            ));
        }
        for (_, b) in &branches[i + 1..] {
            if a.overlap(b)?.norm() > 1e-10 {
                return Err(WfError::BadParameter(
                    "branch states must be orthogonal".into(),
                ));
            }
        }
    }
    let layout = state.layout();
    let branch_legs = branch_layout.labels();
    let plan = LegPlan::new(layout, &branch_legs)?;
    let env_labels: Vec<&str> = layout
        .labels()
        .into_iter()
        .filter(|l| !branch_legs.contains(l))
        .collect();
    let env_layout = layout.sublayout(&env_labels)?;

    let mut labels = Vec::new();
    let mut weights = Vec::new();
    let mut env_states = Vec::new();
    for (name, branch) in branches {
        // ⟨branch ⊗ e_r | state⟩ for every environment basis index r
        let mut contracted = vec![C64::ZERO; plan.rest_dim];
        for (k, &b) in branch.amplitudes().iter().enumerate() {
            if b.norm_sqr() == 0.0 {
                continue;
            }
            let bo = plan.offset_of_block(k);
            let bc = b.conj();
            for (r, slot) in contracted.iter_mut().enumerate() {
                *slot += bc * state.amplitudes()[bo + plan.offset_of_rest(r)];
            }
        }
        let weight: f64 = contracted.iter().map(|c| c.norm_sqr()).sum();
        labels.push(name.to_string());
        weights.push(weight);
        if weight > tol::BRANCH_FLOOR {
            let inv = C64::new(1.0 / weight.sqrt(), 0.0);
            let normalized: Vec<C64> = contracted.iter().map(|c| c * inv).collect();
            env_states.push(Some(StateVector::from_amplitudes(
                env_layout.clone(),
                normalized,
            )?));
        } else {
            env_states.push(None);
        }
    }
    Ok(BranchDecomposition {
        labels,
        weights,
        env_states,
        env_layout,
    })
}

/// |⟨ε_1(t)|ε_2(t)⟩|² between the first two branches of each decomposition.
pub fn branch_overlap_series(
    decomps: &[(f64, BranchDecomposition)],
) -> Result<Vec<(f64, f64)>> {
    decomps
        .iter()
        .map(|(t, d)| {
            let e1 = d.env_state(0)?;
            let e2 = d.env_state(1)?;
            Ok((*t, e1.overlap(e2)?.norm_sqr().min(1.0 + 1e-10)))
        })
        .collect()
}

/// Autocorrelation C(τ) = |⟨ε(t)|ε(t+τ)⟩|², double-averaged over base times
/// and (by the caller) over realizations.
#[derive(Debug, Clone)]
pub struct CorrelationSeries {
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    pub realization_count: usize,
    pub base_time_count: usize,
}

/// Base-time grid target; longer trajectories are subsampled down to it,
/// shorter ones use every stored sample.
pub const BASE_TIME_SAMPLES: usize = 10_000;

/// Compute C(τ) from one realization's environment series on a uniform grid
/// with spacing `dt`. Base times run over `[0, base_span]`; `tau` over
/// `[0, tau_max]` in steps of `dt`.
pub fn autocorrelation(
    env_series: &[StateVector],
    dt: f64,
    base_span: f64,
    tau_max: f64,
) -> Result<CorrelationSeries> {
    let span = (env_series.len().saturating_sub(1)) as f64 * dt;
    if base_span + tau_max > span + 1e-12 {
        return Err(WfError::WindowOutOfRange {
            lo: base_span,
            hi: base_span + tau_max,
        });
    }
    let base_last = (base_span / dt).floor() as usize;
    let stride = (base_last / BASE_TIME_SAMPLES).max(1);
    let base_indices: Vec<usize> = (0..=base_last).step_by(stride).collect();
    let tau_count = (tau_max / dt).floor() as usize;
    let mut tau = Vec::with_capacity(tau_count + 1);
    let mut values = Vec::with_capacity(tau_count + 1);
    for j in 0..=tau_count {
        let mut acc = 0.0;
        for &i in &base_indices {
            let o = env_series[i].overlap(&env_series[i + j])?;
            acc += o.norm_sqr();
        }
        tau.push(j as f64 * dt);
        values.push(acc / base_indices.len() as f64);
    }
    Ok(CorrelationSeries {
        tau,
        values,
        realization_count: 1,
        base_time_count: base_indices.len(),
    })
}

/// Average several per-realization series over realizations (equal grids).
pub fn average_correlations(series: &[CorrelationSeries]) -> Result<CorrelationSeries> {
    let first = series
        .first()
        .ok_or_else(|| WfError::BadParameter("no correlation series to average".into()))?;
    let mut values = vec![0.0; first.values.len()];
    for s in series {
        if s.values.len() != values.len() {
            return Err(WfError::BadParameter(
                "correlation series have mismatched grids".into(),
            ));
        }
        for (acc, v) in values.iter_mut().zip(&s.values) {
            *acc += v;
        }
    }
    let n = series.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(CorrelationSeries {
        tau: first.tau.clone(),
        values,
        realization_count: series.len(),
        base_time_count: first.base_time_count,
    })
}

/// The four matrix elements of a reduced density matrix in a chosen
/// orthonormal pair, plus the combined off-diagonal magnitude.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientSample {
    pub c00: C64,
    pub c01: C64,
    pub c10: C64,
    pub c11: C64,
}

impl CoefficientSample {
    /// sqrt(|c01|² + |c10|²)
    pub fn c_nd(&self) -> f64 {
        (self.c01.norm_sqr() + self.c10.norm_sqr()).sqrt()
    }

    /// Sum of the diagonal elements (real parts).
    pub fn diagonal_sum(&self) -> f64 {
        self.c00.re + self.c11.re
    }
}

/// Time series of reduced coefficients.
#[derive(Debug, Clone, Default)]
pub struct ReducedCoefficients {
    pub times: Vec<f64>,
    pub samples: Vec<CoefficientSample>,
}

impl ReducedCoefficients {
    pub fn push(&mut self, t: f64, sample: CoefficientSample) {
        self.times.push(t);
        self.samples.push(sample);
    }

    pub fn series(&self, pick: impl Fn(&CoefficientSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(pick).collect()
    }
}

/// Matrix elements of partial_trace(state, keep) in the orthonormal pair
/// `(u, w)`, computed by contraction without materializing the reduced
/// matrix: ⟨u|ρ|w⟩ = Σ_r ⟨u ⊗ e_r|Ψ⟩ ⟨Ψ|w ⊗ e_r⟩.
pub fn reduced_coefficients(
    state: &StateVector,
    keep: &[&str],
    basis: (&StateVector, &StateVector),
) -> Result<CoefficientSample> {
    let (u, w) = basis;
    let uu = (u.overlap(u)?.re - 1.0).abs();
    let ww = (w.overlap(w)?.re - 1.0).abs();
    let uw = u.overlap(w)?.norm();
    let residual = uu.max(ww).max(uw);
    if residual > tol::BRANCH_ORTHO {
        return Err(WfError::BasisNotOrthonormal(residual));
    }
    let layout = state.layout();
    let sub = layout.sublayout(keep)?;
    if *u.layout() != sub || *w.layout() != sub {
        return Err(WfError::LayoutMismatch(
            "basis states must live on the kept sublayout".into(),
        ));
    }
    let keep_ordered = sub.labels();
    let plan = LegPlan::new(layout, &keep_ordered)?;
    let contract = |x: &StateVector| -> Vec<C64> {
        let mut out = vec![C64::ZERO; plan.rest_dim];
        for (k, &b) in x.amplitudes().iter().enumerate() {
            if b.norm_sqr() == 0.0 {
                continue;
            }
            let bo = plan.offset_of_block(k);
            let bc = b.conj();
            for (r, slot) in out.iter_mut().enumerate() {
                *slot += bc * state.amplitudes()[bo + plan.offset_of_rest(r)];
            }
        }
        out
    };
    let vu = contract(u);
    let vw = contract(w);
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x * y.conj()).sum() };
    Ok(CoefficientSample {
        c00: dot(&vu, &vu),
        c01: dot(&vu, &vw),
        c10: dot(&vw, &vu),
        c11: dot(&vw, &vw),
    })
}

/// Arithmetic mean of the samples whose time lies in `[window.0, window.1]`.
pub fn long_time_average(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (t, v) in times.iter().zip(values) {
        if *t >= window.0 - 1e-12 && *t <= window.1 + 1e-12 {
            acc += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(WfError::WindowOutOfRange {
            lo: window.0,
            hi: window.1,
        });
    }
    Ok(acc / n as f64)
}

/// Mean and standard error over realizations.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleStats {
    pub mean: f64,
    pub stderr: f64,
}

pub fn ensemble_stats(values: &[f64]) -> EnsembleStats {
    let n = values.len();
    if n == 0 {
        return EnsembleStats {
            mean: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return EnsembleStats { mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    EnsembleStats {
        mean,
        stderr: (var / n as f64).sqrt(),
    }
}
