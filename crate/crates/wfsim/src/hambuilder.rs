//! Builders for every Hamiltonian term in the protocols: pre-measurement
//! couplings, apparatus–environment monitors, optional system drift, and the
//! staged combinations used by the interference experiments.
//!
//! Conventions (ħ = 1 throughout): pointer legs are two-level with index 0
//! the initial record and index 1 the flipped record; a pre-measurement term
//! `g |trigger⟩⟨trigger| ⊗ [[1,-1],[-1,1]]` transfers pointer 0 to pointer 1
//! exactly when evolved for `g·τ = π/2`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Result, WfError};
use crate::tensorspace::{HermitianOperator, StateVector, SubsystemLayout};
use crate::tol;

/// The flip bracket |0⟩⟨0| + |1⟩⟨1| - |0⟩⟨1| - |1⟩⟨0| on a pointer leg.
fn flip_bracket() -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::ONE,
            -C64::ONE,
            -C64::ONE,
            C64::ONE,
        ],
    )
}

/// System–apparatus coupling driven by a basis-state trigger on the measured
/// leg (index 1, the `|v⟩`-like state). The complementary branch is
/// annihilated by the term.
#[derive(Debug, Clone)]
pub struct MeasurementCoupling {
    pub g: f64,
    pub measured_leg: String,
    pub apparatus_leg: String,
}

impl MeasurementCoupling {
    /// Interaction time that completes the pointer transfer.
    pub fn transfer_time(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.g
    }

    pub fn build(&self, layout: &SubsystemLayout) -> Result<HermitianOperator> {
        build_premeasurement(layout, self.g, &self.measured_leg, &self.apparatus_leg)
    }
}

/// Build the C-NOT-type pre-measurement term on `(measured, apparatus)`.
pub fn build_premeasurement(
    layout: &SubsystemLayout,
    g: f64,
    measured_leg: &str,
    apparatus_leg: &str,
) -> Result<HermitianOperator> {
    if layout.dim_of(measured_leg)? != 2 || layout.dim_of(apparatus_leg)? != 2 {
        return Err(WfError::BadParameter(format!(
            "pre-measurement legs `{measured_leg}`, `{apparatus_leg}` must both be two-level"
        )));
    }
    let bracket = flip_bracket();
    let mut m = DMatrix::<C64>::zeros(4, 4);
    // trigger = |1><1| on the measured leg; apparatus varies fastest
    for a in 0..2 {
        for b in 0..2 {
            m[(2 + a, 2 + b)] = C64::new(g, 0.0) * bracket[(a, b)];
        }
    }
    HermitianOperator::new(layout, &[measured_leg, apparatus_leg], m)
}

/// Pre-measurement driven by a rank-one projector onto an arbitrary trigger
/// state spanning several legs (the external agent's interference
/// measurement). The apparatus leg is appended after the trigger legs.
pub fn build_projector_premeasurement(
    layout: &SubsystemLayout,
    g: f64,
    trigger: &StateVector,
    apparatus_leg: &str,
) -> Result<HermitianOperator> {
    let norm = trigger.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(WfError::NotNormalized(norm));
    }
    if layout.dim_of(apparatus_leg)? != 2 {
        return Err(WfError::BadParameter(format!(
            "apparatus leg `{apparatus_leg}` must be two-level"
        )));
    }
    let trigger_legs = trigger.layout().labels();
    if trigger_legs.iter().any(|l| *l == apparatus_leg) {
        return Err(WfError::BadParameter(
            "trigger state must not span the apparatus leg".into(),
        ));
    }
    let td = trigger.layout().total_dim();
    let bracket = flip_bracket();
    let mut m = DMatrix::<C64>::zeros(2 * td, 2 * td);
    let amps = trigger.amplitudes();
    for i in 0..td {
        if amps[i].norm_sqr() == 0.0 {
            continue;
        }
        for j in 0..td {
            let p = C64::new(g, 0.0) * amps[i] * amps[j].conj();
            if p.norm_sqr() == 0.0 {
                continue;
            }
            for a in 0..2 {
                for b in 0..2 {
                    m[(2 * i + a, 2 * j + b)] += p * bracket[(a, b)];
                }
            }
        }
    }
    let mut legs: Vec<&str> = trigger_legs.clone();
    legs.push(apparatus_leg);
    HermitianOperator::new(layout, &legs, m)
}

/// Pointer-conditioned environment couplings: one Hermitian environment
/// matrix per pointer label. Block-diagonal in the pointer basis, so pointer
/// populations are conserved under its evolution.
#[derive(Debug, Clone)]
pub struct MonitorCoupling {
    pub pointer_leg: String,
    pub env_leg: String,
    pub couplings: Vec<DMatrix<f64>>,
}

impl MonitorCoupling {
    pub fn build(&self, layout: &SubsystemLayout) -> Result<HermitianOperator> {
        build_monitor(layout, &self.pointer_leg, &self.env_leg, &self.couplings)
    }
}

/// Build the monitor term on `(pointer, env)` from per-pointer couplings.
pub fn build_monitor(
    layout: &SubsystemLayout,
    pointer_leg: &str,
    env_leg: &str,
    couplings: &[DMatrix<f64>],
) -> Result<HermitianOperator> {
    let pd = layout.dim_of(pointer_leg)?;
    let ed = layout.dim_of(env_leg)?;
    if couplings.len() != pd {
        return Err(WfError::BadParameter(format!(
            "need one coupling matrix per pointer label ({pd}), got {}",
            couplings.len()
        )));
    }
    for v in couplings {
        if v.nrows() != ed || v.ncols() != ed {
            return Err(WfError::BadOperatorDim {
                got: v.nrows(),
                want: ed,
            });
        }
    }
    let dim = pd * ed;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for (p, v) in couplings.iter().enumerate() {
        for n in 0..ed {
            for k in 0..ed {
                m[(p * ed + n, p * ed + k)] = C64::new(v[(n, k)], 0.0);
            }
        }
    }
    HermitianOperator::new(layout, &[pointer_leg, env_leg], m)
}

/// Own Hamiltonian of the measured system, acting on its leg alone. Commutes
/// with any monitor term because the legs are disjoint.
pub fn build_system_drift(
    layout: &SubsystemLayout,
    leg: &str,
    h_s: DMatrix<C64>,
) -> Result<HermitianOperator> {
    HermitianOperator::new(layout, &[leg], h_s)
}

/// Stage-1 Hamiltonian: both laboratories monitored, no external coupling.
/// The two terms act on disjoint legs and commute.
pub fn build_stage1(
    internal_monitor: &HermitianOperator,
    external_monitor: &HermitianOperator,
) -> Result<Vec<HermitianOperator>> {
    let int_legs = internal_monitor.legs();
    if external_monitor.legs().iter().any(|l| int_legs.contains(l)) {
        return Err(WfError::BadParameter(
            "stage-1 monitors must act on disjoint legs".into(),
        ));
    }
    Ok(vec![internal_monitor.clone(), external_monitor.clone()])
}

/// Stage-2 Hamiltonian: the internal monitor stays on while the external
/// apparatus is driven by a rank-one projector onto the exact propagated
/// trigger state (the interference branch at the stage boundary). The
/// external environment is switched off for the duration.
pub fn build_stage2(
    layout: &SubsystemLayout,
    beta_state: &StateVector,
    g: f64,
    external_apparatus_leg: &str,
    internal_monitor: &HermitianOperator,
) -> Result<Vec<HermitianOperator>> {
    let external =
        build_projector_premeasurement(layout, g, beta_state, external_apparatus_leg)?;
    Ok(vec![internal_monitor.clone(), external])
}

/// θ-rotated interference pair over two orthonormal branch states:
/// returns (sinθ·h + cosθ·v, -cosθ·h + sinθ·v).
pub fn make_interference_basis(
    theta: f64,
    h_branch: &StateVector,
    v_branch: &StateVector,
) -> Result<(StateVector, StateVector)> {
    let hh = (h_branch.overlap(h_branch)?.re - 1.0).abs();
    let vv = (v_branch.overlap(v_branch)?.re - 1.0).abs();
    let hv = h_branch.overlap(v_branch)?.norm();
    let residual = hh.max(vv).max(hv);
    if residual > tol::BRANCH_ORTHO {
        return Err(WfError::BasisNotOrthonormal(residual));
    }
    let (s, c) = theta.sin_cos();
    let alpha = StateVector::superpose(&[
        (C64::new(s, 0.0), h_branch),
        (C64::new(c, 0.0), v_branch),
    ])?;
    let beta = StateVector::superpose(&[
        (C64::new(-c, 0.0), h_branch),
        (C64::new(s, 0.0), v_branch),
    ])?;
    Ok((alpha, beta))
}

/// One piecewise-constant stage: a set of Hermitian terms, a duration, and
/// the number of uniform sampling intervals.
#[derive(Debug, Clone)]
pub struct Stage {
    pub terms: Vec<HermitianOperator>,
    pub duration: f64,
    pub samples: usize,
}

impl Stage {
    pub fn new(terms: Vec<HermitianOperator>, duration: f64) -> Self {
        Stage {
            terms,
            duration,
            samples: DEFAULT_STAGE_SAMPLES,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples.max(1);
        self
    }
}

/// Ordered list of stages. Sample times are the uniform grid within each
/// stage plus the exact stage boundaries.
#[derive(Debug, Clone)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
}

pub const DEFAULT_STAGE_SAMPLES: usize = 512;

impl StageSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        for (i, s) in stages.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(WfError::BadStageDuration(i));
            }
        }
        Ok(StageSchedule { stages })
    }

    /// Stage boundary times, starting at 0.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut t = 0.0;
        for s in &self.stages {
            t += s.duration;
            out.push(t);
        }
        out
    }

    pub fn total_duration(&self) -> f64 {
        self.stages.iter().map(|s| s.duration).sum()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::propagate::{exponentiate, run_schedule, DEFAULT_BLOCK_CAP};
    use crate::tensorspace::partial_trace;
    use crate::testkit::{dense_of, rk4_evolve, TestRand};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_leg_layout() -> Arc<SubsystemLayout> {
        SubsystemLayout::compose(&[("s", 2), ("A", 2)]).unwrap()
    }

    fn plus_times_pointer0(layout: &Arc<SubsystemLayout>) -> StateVector {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let h = StateVector::basis(layout, &[("s", 0), ("A", 0)]).unwrap();
        let v = StateVector::basis(layout, &[("s", 1), ("A", 0)]).unwrap();
        StateVector::superpose(&[(c(inv, 0.0), &h), (c(inv, 0.0), &v)]).unwrap()
    }

    #[test]
    fn premeasurement_transfers_pointer_at_quarter_period() {
        let layout = two_leg_layout();
        let g = 3.7;
        let term = build_premeasurement(&layout, g, "s", "A").unwrap();
        let u = exponentiate(&layout, &["s", "A"], &[&term], DEFAULT_BLOCK_CAP).unwrap();
        let tau = std::f64::consts::FRAC_PI_2 / g;
        let out = u.apply(&plus_times_pointer0(&layout), tau).unwrap();
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let hh = StateVector::basis(&layout, &[("s", 0), ("A", 0)]).unwrap();
        let vv = StateVector::basis(&layout, &[("s", 1), ("A", 1)]).unwrap();
        let expect =
            StateVector::superpose(&[(c(inv, 0.0), &hh), (c(inv, 0.0), &vv)]).unwrap();
        let fidelity = expect.overlap(&out).unwrap().norm();
        assert!(fidelity >= 1.0 - 1e-10, "fidelity {fidelity}");
    }

    #[test]
    fn premeasurement_annihilates_untriggered_branch() {
        let layout = two_leg_layout();
        let term = build_premeasurement(&layout, 2.0, "s", "A").unwrap();
        // the h-branch column and row of the matrix are zero
        for i in 0..2 {
            for j in 0..4 {
                assert_eq!(term.matrix()[(i, j)], C64::ZERO);
                assert_eq!(term.matrix()[(j, i)], C64::ZERO);
            }
        }
        let u = exponentiate(&layout, &["s", "A"], &[&term], DEFAULT_BLOCK_CAP).unwrap();
        let h_branch = StateVector::basis(&layout, &[("s", 0), ("A", 0)]).unwrap();
        for tau in [0.013, 0.4, 2.9, 17.0] {
            let out = u.apply(&h_branch, tau).unwrap();
            let fid = h_branch.overlap(&out).unwrap();
            assert!((fid - C64::ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn premeasurement_double_duration_restores_triggered_branch() {
        let layout = two_leg_layout();
        let g = 1.9;
        let term = build_premeasurement(&layout, g, "s", "A").unwrap();
        let u = exponentiate(&layout, &["s", "A"], &[&term], DEFAULT_BLOCK_CAP).unwrap();
        let tau = std::f64::consts::PI / g;
        let start = StateVector::basis(&layout, &[("s", 1), ("A", 0)]).unwrap();
        let out = u.apply(&start, tau).unwrap();
        let fid = start.overlap(&out).unwrap().norm();
        assert!((fid - 1.0).abs() < 1e-10, "|overlap| {fid}");
        // matrix-exponential oracle: fixed-step integration of the same term
        let dense = dense_of(&term, &layout);
        let oracle = rk4_evolve(&dense, start.amplitudes(), tau, 20_000);
        for (a, b) in out.amplitudes().iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn monitor_commutes_with_pointer_projectors() {
        let layout = SubsystemLayout::compose(&[("A", 2), ("e", 3)]).unwrap();
        let mut r = TestRand(41);
        let mut vs = Vec::new();
        for _ in 0..2 {
            let mut v = DMatrix::<f64>::zeros(3, 3);
            for i in 0..3 {
                for j in i..3 {
                    let x = r.next_f64();
                    v[(i, j)] = x;
                    v[(j, i)] = x;
                }
            }
            vs.push(v);
        }
        let monitor = build_monitor(&layout, "A", "e", &vs).unwrap();
        for p in 0..2 {
            let mut proj = DMatrix::<C64>::zeros(2, 2);
            proj[(p, p)] = C64::ONE;
            let proj_term = HermitianOperator::new(&layout, &["A"], proj).unwrap();
            let a = dense_of(&monitor, &layout);
            let b = dense_of(&proj_term, &layout);
            let comm = &a * &b - &b * &a;
            assert!(comm.iter().all(|x| x.norm() == 0.0));
        }
    }

    #[test]
    fn monitor_conserves_branch_populations() {
        let layout = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 4)]).unwrap();
        let mut r = TestRand(77);
        let mut vs = Vec::new();
        for _ in 0..2 {
            let mut v = DMatrix::<f64>::zeros(4, 4);
            for i in 0..4 {
                for j in i..4 {
                    let x = r.next_f64() * 2.0;
                    v[(i, j)] = x;
                    v[(j, i)] = x;
                }
            }
            vs.push(v);
        }
        let monitor = build_monitor(&layout, "A", "e", &vs).unwrap();
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let h = StateVector::basis(&layout, &[("s", 0), ("A", 0), ("e", 0)]).unwrap();
        let v = StateVector::basis(&layout, &[("s", 1), ("A", 1), ("e", 0)]).unwrap();
        let psi = StateVector::superpose(&[(c(inv, 0.0), &h), (c(inv, 0.0), &v)]).unwrap();
        let schedule = StageSchedule::new(vec![
            Stage::new(vec![monitor], 3.0).with_samples(48),
        ])
        .unwrap();
        let traj = run_schedule(&psi, &schedule).unwrap();
        for state in &traj.states {
            // population of the (s=0, A=0) block
            let mut w = 0.0;
            for e in 0..4 {
                let idx = layout.index_of(&[("s", 0), ("A", 0), ("e", e)]).unwrap();
                w += state.amplitudes()[idx].norm_sqr();
            }
            assert!((w - 0.5).abs() < 1e-13, "weight {w}");
        }
    }

    #[test]
    fn single_qubit_environment_never_completes_the_measurement() {
        // d = 2 environment: the two branch environment states keep a large
        // overlap at long times.
        let layout = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let spec = crate::randmat::EnsembleSpec::goe(2, 4242);
        let vh = crate::randmat::sample_coupling(&spec, 0).unwrap();
        let vv = crate::randmat::sample_coupling(&spec, 1).unwrap();
        let monitor = build_monitor(&layout, "A", "e", &[vh, vv]).unwrap();
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let h = StateVector::basis(&layout, &[("s", 0), ("A", 0), ("e", 0)]).unwrap();
        let v = StateVector::basis(&layout, &[("s", 1), ("A", 1), ("e", 0)]).unwrap();
        let psi = StateVector::superpose(&[(c(inv, 0.0), &h), (c(inv, 0.0), &v)]).unwrap();
        let schedule =
            StageSchedule::new(vec![Stage::new(vec![monitor], 10.0).with_samples(200)]).unwrap();
        let traj = run_schedule(&psi, &schedule).unwrap();
        let mut overlaps = Vec::new();
        for (t, state) in traj.times.iter().zip(&traj.states) {
            if *t < 2.0 {
                continue;
            }
            // branch environment states, each carrying weight 1/2
            let e1: Vec<C64> = (0..2)
                .map(|e| {
                    state.amplitudes()[layout.index_of(&[("s", 0), ("A", 0), ("e", e)]).unwrap()]
                })
                .collect();
            let e2: Vec<C64> = (0..2)
                .map(|e| {
                    state.amplitudes()[layout.index_of(&[("s", 1), ("A", 1), ("e", e)]).unwrap()]
                })
                .collect();
            let dot: C64 = e1.iter().zip(&e2).map(|(a, b)| a.conj() * b).sum();
            overlaps.push((dot.norm_sqr() * 4.0).min(1.0)); // weights 1/2 each
        }
        let mean = overlaps.iter().sum::<f64>() / overlaps.len() as f64;
        assert!(mean > 0.2, "long-time mean overlap {mean}");
    }

    #[test]
    fn zero_drift_keeps_branch_states_fixed() {
        let layout = SubsystemLayout::compose(&[("s", 2), ("A", 2)]).unwrap();
        let drift = build_system_drift(&layout, "s", DMatrix::zeros(2, 2)).unwrap();
        let u = exponentiate(&layout, &["s"], &[&drift], DEFAULT_BLOCK_CAP).unwrap();
        let state = plus_times_pointer0(&layout);
        let out = u.apply(&state, 5.0).unwrap();
        assert!((state.overlap(&out).unwrap() - C64::ONE).norm() < 1e-13);
    }

    #[test]
    fn pauli_drift_dephases_branches_but_keeps_weights() {
        let layout = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let mut hs = DMatrix::<C64>::zeros(2, 2);
        hs[(0, 0)] = c(0.8, 0.0);
        hs[(1, 1)] = c(-0.8, 0.0);
        let drift = build_system_drift(&layout, "s", hs.clone()).unwrap();
        let spec = crate::randmat::EnsembleSpec::goe(2, 7);
        let monitor = build_monitor(
            &layout,
            "A",
            "e",
            &[
                crate::randmat::sample_coupling(&spec, 0).unwrap(),
                crate::randmat::sample_coupling(&spec, 1).unwrap(),
            ],
        )
        .unwrap();
        // disjoint legs: embedded commutator vanishes
        let a = dense_of(&drift, &layout);
        let b = dense_of(&monitor, &layout);
        let comm = &a * &b - &b * &a;
        assert!(comm.iter().all(|x| x.norm() < 1e-14));

        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let h = StateVector::basis(&layout, &[("s", 0), ("A", 0), ("e", 0)]).unwrap();
        let v = StateVector::basis(&layout, &[("s", 1), ("A", 1), ("e", 0)]).unwrap();
        let psi = StateVector::superpose(&[(c(inv, 0.0), &h), (c(inv, 0.0), &v)]).unwrap();
        let schedule = StageSchedule::new(vec![
            Stage::new(vec![drift, monitor], 2.0).with_samples(16),
        ])
        .unwrap();
        let traj = run_schedule(&psi, &schedule).unwrap();
        let last = traj.states.last().unwrap();
        let rho = partial_trace(last, &["s", "A"]).unwrap();
        let hh = StateVector::basis(rho.layout(), &[("s", 0), ("A", 0)]).unwrap();
        let vv = StateVector::basis(rho.layout(), &[("s", 1), ("A", 1)]).unwrap();
        // 2x2 exponential oracle for the drift phases: weights stay 1/2
        let w_h = rho.sandwich(&hh, &hh).unwrap().re;
        let w_v = rho.sandwich(&vv, &vv).unwrap().re;
        assert!((w_h - 0.5).abs() < 1e-10);
        assert!((w_v - 0.5).abs() < 1e-10);
        // branch phases match the 2x2 exponential of the drift alone: the
        // ratio to the drift-free run is exp(-i E_h t) on the h branch
        let oracle = rk4_evolve(&hs, &[C64::ONE, C64::ZERO], 2.0, 4_000);
        let idx = layout.index_of(&[("s", 0), ("A", 0), ("e", 0)]).unwrap();
        let with_drift = last.amplitudes()[idx];
        let schedule_free = StageSchedule::new(vec![Stage::new(
            vec![build_monitor(
                &layout,
                "A",
                "e",
                &[
                    crate::randmat::sample_coupling(&spec, 0).unwrap(),
                    crate::randmat::sample_coupling(&spec, 1).unwrap(),
                ],
            )
            .unwrap()],
            2.0,
        )
        .with_samples(16)])
        .unwrap();
        let free = run_schedule(&psi, &schedule_free).unwrap();
        let free_amp = free.states.last().unwrap().amplitudes()[idx];
        let ratio = with_drift / free_amp;
        assert!((ratio - oracle[0]).norm() < 1e-6);
    }

    #[test]
    fn stage1_terms_commute_and_preserve_c_hh() {
        let layout = SubsystemLayout::compose(&[
            ("s", 2),
            ("A", 2),
            ("e", 2),
            ("Ap", 2),
            ("ep", 2),
        ])
        .unwrap();
        let spec = crate::randmat::EnsembleSpec::goe(2, 99);
        let sample = |k: u64| crate::randmat::sample_coupling(&spec, k).unwrap();
        let int_mon = build_monitor(&layout, "A", "e", &[sample(0), sample(1)]).unwrap();
        let ext_mon = build_monitor(&layout, "Ap", "ep", &[sample(2), sample(3)]).unwrap();
        let stage1 = build_stage1(&int_mon, &ext_mon).unwrap();
        let a = dense_of(&stage1[0], &layout);
        let b = dense_of(&stage1[1], &layout);
        let comm = &a * &b - &b * &a;
        assert!(comm.iter().all(|x| x.norm() < 1e-14));

        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let h = StateVector::basis(&layout, &[("s", 0), ("A", 0), ("e", 0), ("Ap", 0), ("ep", 0)])
            .unwrap();
        let v = StateVector::basis(&layout, &[("s", 1), ("A", 1), ("e", 0), ("Ap", 0), ("ep", 0)])
            .unwrap();
        let psi = StateVector::superpose(&[(c(inv, 0.0), &h), (c(inv, 0.0), &v)]).unwrap();
        let schedule =
            StageSchedule::new(vec![Stage::new(stage1, 4.0).with_samples(32)]).unwrap();
        let traj = run_schedule(&psi, &schedule).unwrap();
        for state in &traj.states {
            let rho = partial_trace(state, &["s", "A"]).unwrap();
            let hh = StateVector::basis(rho.layout(), &[("s", 0), ("A", 0)]).unwrap();
            let c_hh = rho.sandwich(&hh, &hh).unwrap().re;
            assert!((c_hh - 0.5).abs() < 1e-11, "C_hh {c_hh}");
        }
    }

    #[test]
    fn stage1_rejects_overlapping_monitors() {
        let layout = SubsystemLayout::compose(&[("A", 2), ("e", 2)]).unwrap();
        let spec = crate::randmat::EnsembleSpec::goe(2, 1);
        let sample = |k: u64| crate::randmat::sample_coupling(&spec, k).unwrap();
        let m = build_monitor(&layout, "A", "e", &[sample(0), sample(1)]).unwrap();
        assert!(build_stage1(&m, &m).is_err());
    }

    fn random_branches(
        layout: &Arc<SubsystemLayout>,
        seed: u64,
    ) -> (StateVector, StateVector) {
        // orthonormal because the (s, A) tags differ
        let mut r = TestRand(seed);
        let mut e1: Vec<C64> = (0..2).map(|_| r.complex()).collect();
        let mut e2: Vec<C64> = (0..2).map(|_| r.complex()).collect();
        let n1 = e1.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let n2 = e2.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        e1.iter_mut().for_each(|x| *x /= n1);
        e2.iter_mut().for_each(|x| *x /= n2);
        let mut h_amps = vec![C64::ZERO; layout.total_dim()];
        let mut v_amps = vec![C64::ZERO; layout.total_dim()];
        for e in 0..2 {
            h_amps[layout.index_of(&[("s", 0), ("A", 0), ("e", e)]).unwrap()] = e1[e];
            v_amps[layout.index_of(&[("s", 1), ("A", 1), ("e", e)]).unwrap()] = e2[e];
        }
        (
            StateVector::from_amplitudes(layout.clone(), h_amps).unwrap(),
            StateVector::from_amplitudes(layout.clone(), v_amps).unwrap(),
        )
    }

    #[test]
    fn stage2_external_term_flips_only_the_trigger_branch() {
        let lab = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let full =
            SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2), ("Ap", 2)]).unwrap();
        let (h_b, v_b) = random_branches(&lab, 2021);
        let theta = 0.71;
        let (alpha, beta) = make_interference_basis(theta, &h_b, &v_b).unwrap();
        let g = 25.0;
        let term = build_projector_premeasurement(&full, g, &beta, "Ap").unwrap();
        let u = exponentiate(
            &full,
            &["s", "A", "e", "Ap"],
            &[&term],
            DEFAULT_BLOCK_CAP,
        )
        .unwrap();
        let tau = std::f64::consts::FRAC_PI_2 / g;

        let embed_with_pointer = |lab_state: &StateVector, a: usize| {
            let mut amps = vec![C64::ZERO; full.total_dim()];
            for (i, &x) in lab_state.amplitudes().iter().enumerate() {
                amps[i * 2 + a] = x;
            }
            StateVector::from_amplitudes(full.clone(), amps).unwrap()
        };

        let start = embed_with_pointer(&beta, 0);
        let want = embed_with_pointer(&beta, 1);
        let out = u.apply(&start, tau).unwrap();
        let fid = want.overlap(&out).unwrap().norm();
        assert!(fid >= 1.0 - 1e-10, "trigger fidelity {fid}");

        let start_alpha = embed_with_pointer(&alpha, 0);
        let out_alpha = u.apply(&start_alpha, tau).unwrap();
        let fid_alpha = start_alpha.overlap(&out_alpha).unwrap();
        assert!((fid_alpha - C64::ONE).norm() < 1e-12, "orthogonal branch moved");
    }

    #[test]
    fn stage2_restricted_to_interference_span_is_the_premeasurement_matrix() {
        let lab = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let full =
            SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2), ("Ap", 2)]).unwrap();
        let (h_b, v_b) = random_branches(&lab, 77);
        let (alpha, beta) = make_interference_basis(0.42, &h_b, &v_b).unwrap();
        let g = 4.0;
        let term = build_projector_premeasurement(&full, g, &beta, "Ap").unwrap();
        // basis u_{branch, pointer} with branch slowest, matching the 4x4
        // convention of the plain pre-measurement on (branch, pointer)
        let mut span = Vec::new();
        for branch in [&alpha, &beta] {
            for a in 0..2usize {
                let mut amps = vec![C64::ZERO; full.total_dim()];
                for (i, &x) in branch.amplitudes().iter().enumerate() {
                    amps[i * 2 + a] = x;
                }
                span.push(StateVector::from_amplitudes(full.clone(), amps).unwrap());
            }
        }
        let action = crate::tensorspace::embed(&term, &full).unwrap();
        let mut restricted = DMatrix::<C64>::zeros(4, 4);
        for (j, u_j) in span.iter().enumerate() {
            let image = action.apply(u_j).unwrap();
            for (i, u_i) in span.iter().enumerate() {
                restricted[(i, j)] = u_i.overlap(&image).unwrap();
            }
        }
        let four = two_leg_layout();
        let reference = build_premeasurement(&four, g, "s", "A").unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (restricted[(i, j)] - reference.matrix()[(i, j)]).norm() < 1e-12,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn interference_basis_at_right_angle_returns_branches() {
        let lab = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let (h_b, v_b) = random_branches(&lab, 5);
        let (alpha, beta) =
            make_interference_basis(std::f64::consts::FRAC_PI_2, &h_b, &v_b).unwrap();
        assert!((alpha.overlap(&h_b).unwrap().norm() - 1.0).abs() < 1e-12);
        assert!((beta.overlap(&v_b).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interference_basis_at_pi_over_four_gives_plus_minus() {
        let lab = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let (h_b, v_b) = random_branches(&lab, 6);
        let (alpha, _beta) =
            make_interference_basis(std::f64::consts::FRAC_PI_4, &h_b, &v_b).unwrap();
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::superpose(&[(c(inv, 0.0), &h_b), (c(inv, 0.0), &v_b)]).unwrap();
        assert!((alpha.overlap(&plus).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interference_basis_at_pi_over_eight_has_stated_coefficients() {
        let lab = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let (h_b, v_b) = random_branches(&lab, 7);
        let theta = std::f64::consts::FRAC_PI_8;
        let (alpha, beta) = make_interference_basis(theta, &h_b, &v_b).unwrap();
        assert!((h_b.overlap(&alpha).unwrap().re - theta.sin()).abs() < 1e-12);
        assert!((v_b.overlap(&alpha).unwrap().re - theta.cos()).abs() < 1e-12);
        assert!((h_b.overlap(&beta).unwrap().re + theta.cos()).abs() < 1e-12);
        assert!((v_b.overlap(&beta).unwrap().re - theta.sin()).abs() < 1e-12);
        let ortho = alpha.overlap(&beta).unwrap().norm();
        assert!(ortho < 1e-12);
    }

    #[test]
    fn interference_basis_rejects_skewed_branches() {
        let lab = SubsystemLayout::compose(&[("s", 2), ("A", 2), ("e", 2)]).unwrap();
        let (h_b, v_b) = random_branches(&lab, 8);
        let skew = StateVector::superpose(&[(c(0.99, 0.0), &v_b), (c(0.14, 0.0), &h_b)])
            .unwrap();
        assert!(matches!(
            make_interference_basis(0.3, &h_b, &skew),
            Err(WfError::BasisNotOrthonormal(_))
        ));
    }

    #[test]
    fn monitor_rejects_wrong_shapes() {
        let layout = SubsystemLayout::compose(&[("A", 2), ("e", 3)]).unwrap();
        let v = DMatrix::<f64>::zeros(2, 2);
        assert!(build_monitor(&layout, "A", "e", &[v.clone(), v]).is_err());
        let good = DMatrix::<f64>::zeros(3, 3);
        assert!(build_monitor(&layout, "A", "e", &[good]).is_err());
    }
}
