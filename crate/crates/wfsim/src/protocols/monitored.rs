//! Monitored-laboratory ensemble studies: branch-environment overlap decay,
//! the environment autocorrelation, and their scaling with register size and
//! band exponent.
//!
//! The composite is (system, apparatus, environment) with the apparatus
//! monitored through pointer-conditioned couplings. After the
//! pre-measurement the two pointer branches carry environment states that
//! evolve under their own coupling matrices alone, so the ensemble drivers
//! propagate those branch environments directly through the real
//! eigendecomposition of each coupling. Equivalence with the full composite
//! propagation is checked in the tests.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::observe::{
    autocorrelation, average_correlations, ensemble_stats, long_time_average, CorrelationSeries,
    EnsembleStats,
};
use crate::randmat::{sample_coupling, EnsembleSpec};
use crate::tensorspace::{StateVector, SubsystemLayout};

use super::coupling_stream;

/// One monitored laboratory: environment of `n_qubits` qubits coupled to the
/// apparatus by banded random matrices.
#[derive(Debug, Clone, Copy)]
pub struct MonitoredModel {
    pub n_qubits: usize,
    pub band_exponent: f64,
    pub seed: u64,
}

impl MonitoredModel {
    pub fn env_dim(&self) -> usize {
        1usize << self.n_qubits
    }

    fn ensemble(&self) -> EnsembleSpec {
        EnsembleSpec {
            dim: self.env_dim(),
            band_exponent: self.band_exponent,
            seed: self.seed,
        }
    }

    /// The two branch-environment propagators of one realization.
    pub fn branch_propagators(&self, realization: u64) -> Result<(EnvPropagator, EnvPropagator)> {
        let spec = self.ensemble();
        let vh = sample_coupling(&spec, coupling_stream(realization, 0))?;
        let vv = sample_coupling(&spec, coupling_stream(realization, 1))?;
        Ok((EnvPropagator::new(&vh), EnvPropagator::new(&vv)))
    }
}

/// Exact evolution of an environment state under one real symmetric
/// coupling, from the basis state |ε_0⟩.
pub struct EnvPropagator {
    eigvals: Vec<f64>,
    eigvecs: DMatrix<f64>,
    /// eigenbasis coefficients of |ε_0⟩
    coeffs: Vec<f64>,
}

impl EnvPropagator {
    pub fn new(v: &DMatrix<f64>) -> Self {
        let eig = v.clone().symmetric_eigen();
        let coeffs: Vec<f64> = (0..v.nrows()).map(|k| eig.eigenvectors[(0, k)]).collect();
        EnvPropagator {
            eigvals: eig.eigenvalues.iter().copied().collect(),
            eigvecs: eig.eigenvectors,
            coeffs,
        }
    }

    /// Amplitudes of exp(-i V t)|ε_0⟩.
    pub fn state_at(&self, t: f64) -> Vec<C64> {
        let d = self.coeffs.len();
        let mut rotated = vec![C64::ZERO; d];
        for k in 0..d {
            rotated[k] = C64::from_polar(self.coeffs[k], -self.eigvals[k] * t);
        }
        let mut out = vec![C64::ZERO; d];
        for (k, &rk) in rotated.iter().enumerate() {
            let col = self.eigvecs.column(k);
            for (slot, &q) in out.iter_mut().zip(col.iter()) {
                *slot += rk * q;
            }
        }
        out
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Branch-overlap series |⟨ε_1(t)|ε_2(t)⟩|² averaged over realizations.
#[derive(Debug, Clone)]
pub struct OverlapSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub realization_count: usize,
    /// Per-realization long-time averages over the requested window.
    pub window_means: Vec<f64>,
}

/// Run the overlap-decay experiment: `realizations` independent coupling
/// pairs, sampled on `samples`+1 uniform times over [0, t_max]; the decay is
/// summarized by the per-realization average over `window`.
pub fn overlap_experiment(
    model: &MonitoredModel,
    realizations: usize,
    t_max: f64,
    samples: usize,
    window: (f64, f64),
) -> Result<OverlapSeries> {
    let times: Vec<f64> = (0..=samples)
        .map(|j| t_max * j as f64 / samples as f64)
        .collect();
    let per_real: Vec<Vec<f64>> = run_over_realizations(realizations, |r| {
        let (p1, p2) = model.branch_propagators(r)?;
        Ok(times
            .iter()
            .map(|&t| dot(&p1.state_at(t), &p2.state_at(t)).norm_sqr())
            .collect())
    })?;
    let mut mean = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let col: Vec<f64> = per_real.iter().map(|v| v[i]).collect();
        let s = ensemble_stats(&col);
        mean.push(s.mean);
        stderr.push(s.stderr);
    }
    let window_means = per_real
        .iter()
        .map(|v| long_time_average(&times, v, window))
        .collect::<Result<Vec<f64>>>()?;
    Ok(OverlapSeries {
        times,
        mean,
        stderr,
        realization_count: realizations,
        window_means,
    })
}

/// Long-time overlap average against register size, one entry per `n`.
pub fn overlap_longtime_scaling(
    n_list: &[usize],
    band_exponent: f64,
    seed: u64,
    realizations: usize,
    t_max: f64,
    samples: usize,
    window: (f64, f64),
) -> Result<Vec<(usize, EnsembleStats)>> {
    n_list
        .iter()
        .map(|&n| {
            let model = MonitoredModel {
                n_qubits: n,
                band_exponent,
                seed,
            };
            let series = overlap_experiment(&model, realizations, t_max, samples, window)?;
            Ok((n, ensemble_stats(&series.window_means)))
        })
        .collect()
}

/// Environment autocorrelation C(τ) averaged over realizations and base
/// times. The stored series covers [0, base_span + tau_max] with spacing
/// `dt`.
pub fn correlation_experiment(
    model: &MonitoredModel,
    realizations: usize,
    dt: f64,
    base_span: f64,
    tau_max: f64,
) -> Result<CorrelationSeries> {
    let total = base_span + tau_max;
    let steps = (total / dt).ceil() as usize;
    let layout = SubsystemLayout::compose(&[("env", model.env_dim())])?;
    let per_real: Vec<CorrelationSeries> = run_over_realizations(realizations, |r| {
        let (p1, _) = model.branch_propagators(r)?;
        let series: Vec<StateVector> = (0..=steps)
            .map(|j| {
                StateVector::from_amplitudes(layout.clone(), p1.state_at(j as f64 * dt))
            })
            .collect::<Result<_>>()?;
        autocorrelation(&series, dt, base_span, tau_max)
    })?;
    average_correlations(&per_real)
}

/// Deterministic realization loop: results are collected in realization
/// order regardless of scheduling.
fn run_over_realizations<T: Send>(
    realizations: usize,
    job: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..realizations as u64)
        .into_par_iter()
        .map(&job)
        .collect::<std::result::Result<Vec<T>, _>>()
}
