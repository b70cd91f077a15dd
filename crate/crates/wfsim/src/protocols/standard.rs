//! The single-observer interference protocol: an internal agent's completed
//! measurement, an external agent's interference pre-measurement in the
//! θ-rotated laboratory basis, and the monitoring that makes the external
//! record definite.
//!
//! Three stages over the composite (a, Aa, ea, ApA, epA):
//!   1. [0, τ1]      both monitors on;
//!   2. [τ1, τ2]     internal monitor on, external apparatus driven by the
//!                   rank-one projector onto the propagated β(τ1) branch,
//!                   external monitor off (τ2 - τ1 = π/(2g));
//!   3. [τ2, t_end]  both monitors on again.
//!
//! The internal agent's record is read in the fixed (|h A_h⟩, |v A_v⟩) pair
//! after tracing out (ea, ApA, epA); the external agent's record in the
//! co-moving (α(t) ⊗ A'_α, β(t) ⊗ A'_β) pair after tracing out epA.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::hambuilder::{
    build_monitor, build_stage1, build_stage2, make_interference_basis, Stage, StageSchedule,
};
use crate::observe::{reduced_coefficients, ReducedCoefficients};
use crate::propagate::{exponentiate, run_schedule_observed, Propagator, DEFAULT_BLOCK_CAP};
use crate::randmat::{sample_coupling, EnsembleSpec};
use crate::tensorspace::{StateVector, SubsystemLayout};

use super::{coupling_stream, Mode, ProtocolConfig};

/// Coefficient series from one realization of the protocol.
pub struct StandardRun {
    pub times: Vec<f64>,
    pub internal: ReducedCoefficients,
    pub external: ReducedCoefficients,
    pub final_state: StateVector,
    pub max_norm_drift: f64,
}

/// Reference evolution of the internal-laboratory branch states under the
/// monitor alone; these define the interference basis at any time.
struct BranchReferences {
    h0: StateVector,
    v0: StateVector,
    monitor_prop: Option<Propagator>,
}

impl BranchReferences {
    fn at(&self, t: f64) -> Result<(StateVector, StateVector)> {
        match &self.monitor_prop {
            None => Ok((self.h0.clone(), self.v0.clone())),
            Some(p) => Ok((p.apply(&self.h0, t)?, p.apply(&self.v0, t)?)),
        }
    }
}

/// Run one realization of the protocol and sample both agents' reduced
/// coefficients on the schedule grid.
pub fn run_standard(config: &ProtocolConfig) -> Result<StandardRun> {
    config.validate()?;
    let di = config.int_env_dim();
    let de = config.ext_env_dim();
    // the widest block is the interference stage: (a, Aa, ea, ApA)
    let stage2_block = 8 * di;
    if stage2_block > DEFAULT_BLOCK_CAP {
        return Err(crate::error::WfError::BlockTooLarge {
            dim: stage2_block,
            cap: DEFAULT_BLOCK_CAP,
        });
    }
    let layout = SubsystemLayout::compose(&[
        ("a", 2),
        ("Aa", 2),
        ("ea", di),
        ("ApA", 2),
        ("epA", de),
    ])?;
    let lab = SubsystemLayout::compose(&[("a", 2), ("Aa", 2), ("ea", di)])?;

    // coupling draws (decoherent mode only)
    let mut int_monitor = None;
    let mut ext_monitor = None;
    let mut lab_monitor_prop = None;
    if config.mode == Mode::Decoherent {
        let int_spec = EnsembleSpec::goe(di, config.seed);
        let ext_spec = EnsembleSpec::goe(de, config.seed);
        let vh = sample_coupling(&int_spec, coupling_stream(config.realization, 0))?;
        let vv = sample_coupling(&int_spec, coupling_stream(config.realization, 1))?;
        let va = sample_coupling(&ext_spec, coupling_stream(config.realization, 2))?;
        let vb = sample_coupling(&ext_spec, coupling_stream(config.realization, 3))?;
        int_monitor = Some(build_monitor(&layout, "Aa", "ea", &[vh.clone(), vv.clone()])?);
        ext_monitor = Some(build_monitor(&layout, "ApA", "epA", &[va, vb])?);
        let lab_mon = build_monitor(&lab, "Aa", "ea", &[vh, vv])?;
        lab_monitor_prop = Some(exponentiate(
            &lab,
            &["Aa", "ea"],
            &[&lab_mon],
            DEFAULT_BLOCK_CAP,
        )?);
    }

    let refs = BranchReferences {
        h0: StateVector::basis(&lab, &[("a", 0), ("Aa", 0), ("ea", 0)])?,
        v0: StateVector::basis(&lab, &[("a", 1), ("Aa", 1), ("ea", 0)])?,
        monitor_prop: lab_monitor_prop,
    };

    // initial state: pre-measured photon-apparatus pair, environments and
    // external apparatus at their zero states
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let h_full = StateVector::basis(
        &layout,
        &[("a", 0), ("Aa", 0), ("ea", 0), ("ApA", 0), ("epA", 0)],
    )?;
    let v_full = StateVector::basis(
        &layout,
        &[("a", 1), ("Aa", 1), ("ea", 0), ("ApA", 0), ("epA", 0)],
    )?;
    let initial = StateVector::superpose(&[
        (C64::new(inv, 0.0), &h_full),
        (C64::new(inv, 0.0), &v_full),
    ])?;

    // β(τ1) from the reference evolution, honoring the exact-knowledge
    // requisites
    let (h_tau1, v_tau1) = refs.at(config.tau1)?;
    let (_, beta_tau1) = make_interference_basis(config.theta, &h_tau1, &v_tau1)?;

    let stage2_duration = config.premeasure_time();
    let tau2 = config.tau1 + stage2_duration;
    if config.t_end <= tau2 {
        return Err(crate::error::WfError::BadParameter(format!(
            "t_end = {} must exceed tau2 = {tau2}",
            config.t_end
        )));
    }

    let mut stages = Vec::new();
    match (&int_monitor, &ext_monitor) {
        (Some(int_m), Some(ext_m)) => {
            stages.push(Stage::new(build_stage1(int_m, ext_m)?, config.tau1));
            stages.push(Stage::new(
                build_stage2(&layout, &beta_tau1, config.g, "ApA", int_m)?,
                stage2_duration,
            ));
            stages.push(Stage::new(build_stage1(int_m, ext_m)?, config.t_end - tau2));
        }
        _ => {
            let external = crate::hambuilder::build_projector_premeasurement(
                &layout,
                config.g,
                &beta_tau1,
                "ApA",
            )?;
            stages.push(Stage::new(vec![], config.tau1));
            stages.push(Stage::new(vec![external], stage2_duration));
            stages.push(Stage::new(vec![], config.t_end - tau2));
        }
    }
    let stages = stages
        .into_iter()
        .map(|s| s.with_samples(config.samples_per_stage))
        .collect();
    let schedule = StageSchedule::new(stages)?;

    // fixed internal pointer pair
    let int_sub = layout.sublayout(&["a", "Aa"])?;
    let hb = StateVector::basis(&int_sub, &[("a", 0), ("Aa", 0)])?;
    let vb = StateVector::basis(&int_sub, &[("a", 1), ("Aa", 1)])?;
    let ext_sub = layout.sublayout(&["a", "Aa", "ea", "ApA"])?;

    let mut times = Vec::new();
    let mut internal = ReducedCoefficients::default();
    let mut external = ReducedCoefficients::default();
    let (final_state, max_norm_drift) =
        run_schedule_observed(&initial, &schedule, |t, state| {
            let int_sample = reduced_coefficients(state, &["a", "Aa"], (&hb, &vb))?;
            let (h_t, v_t) = refs.at(t)?;
            let (alpha_t, beta_t) = make_interference_basis(config.theta, &h_t, &v_t)?;
            let u_alpha = lab_with_pointer(&ext_sub, &alpha_t, 0)?;
            let u_beta = lab_with_pointer(&ext_sub, &beta_t, 1)?;
            let ext_sample =
                reduced_coefficients(state, &["a", "Aa", "ea", "ApA"], (&u_alpha, &u_beta))?;
            times.push(t);
            internal.push(t, int_sample);
            external.push(t, ext_sample);
            Ok(())
        })?;
    Ok(StandardRun {
        times,
        internal,
        external,
        final_state,
        max_norm_drift,
    })
}

/// Tensor a laboratory state with a pointer basis state appended as the
/// (last, fastest-varying) leg of `target`.
pub(crate) fn lab_with_pointer(
    target: &Arc<SubsystemLayout>,
    lab_state: &StateVector,
    pointer: usize,
) -> Result<StateVector> {
    let lab_dim = lab_state.layout().total_dim();
    let pointer_dim = target.total_dim() / lab_dim;
    let mut amps = vec![C64::ZERO; target.total_dim()];
    for (i, &x) in lab_state.amplitudes().iter().enumerate() {
        amps[i * pointer_dim + pointer] = x;
    }
    StateVector::from_amplitudes(target.clone(), amps)
}
