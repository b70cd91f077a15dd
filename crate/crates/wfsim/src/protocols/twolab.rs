//! Shared scaffolding for the two-laboratory protocols: the ten-leg
//! composite (two internal laboratories, two external observers), its
//! monitors, pre-measurement terms, and reference branch evolutions.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Result, WfError};
use crate::hambuilder::{build_monitor, build_premeasurement, build_projector_premeasurement};
use crate::propagate::{exponentiate, Propagator, DEFAULT_BLOCK_CAP};
use crate::randmat::{sample_coupling, EnsembleSpec};
use crate::tensorspace::{HermitianOperator, StateVector, SubsystemLayout};

use super::{coupling_stream, Mode, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Lab {
    A,
    B,
}

impl Lab {
    pub fn photon(self) -> &'static str {
        match self {
            Lab::A => "a",
            Lab::B => "b",
        }
    }

    pub fn apparatus(self) -> &'static str {
        match self {
            Lab::A => "Aa",
            Lab::B => "Ab",
        }
    }

    pub fn env(self) -> &'static str {
        match self {
            Lab::A => "ea",
            Lab::B => "eb",
        }
    }

    pub fn ext_apparatus(self) -> &'static str {
        match self {
            Lab::A => "ApA",
            Lab::B => "ApB",
        }
    }
}

pub(crate) struct TwoLabSetup {
    pub layout: Arc<SubsystemLayout>,
    pub lab_a: Arc<SubsystemLayout>,
    pub lab_b: Arc<SubsystemLayout>,
    pub config: ProtocolConfig,
    int_monitor_a: Option<HermitianOperator>,
    int_monitor_b: Option<HermitianOperator>,
    ext_monitor_a: Option<HermitianOperator>,
    ext_monitor_b: Option<HermitianOperator>,
    lab_a_prop: Option<Propagator>,
    lab_b_prop: Option<Propagator>,
}

/// Which monitors are running in a given stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MonitorSel {
    IntA,
    IntB,
    ExtA,
    ExtB,
}

impl TwoLabSetup {
    pub fn new(config: &ProtocolConfig) -> Result<Self> {
        config.validate()?;
        let di = config.int_env_dim();
        let de = config.ext_env_dim();
        // the widest block is an external pre-measurement: (photon, A, e, Ap)
        let trigger_block = 8 * di;
        if trigger_block > DEFAULT_BLOCK_CAP {
            return Err(WfError::BlockTooLarge {
                dim: trigger_block,
                cap: DEFAULT_BLOCK_CAP,
            });
        }
        let layout = SubsystemLayout::compose(&[
            ("a", 2),
            ("Aa", 2),
            ("ea", di),
            ("b", 2),
            ("Ab", 2),
            ("eb", di),
            ("ApA", 2),
            ("epA", de),
            ("ApB", 2),
            ("epB", de),
        ])?;
        let lab_a = layout.sublayout(&["a", "Aa", "ea"])?;
        let lab_b = layout.sublayout(&["b", "Ab", "eb"])?;

        let mut setup = TwoLabSetup {
            layout,
            lab_a,
            lab_b,
            config: config.clone(),
            int_monitor_a: None,
            int_monitor_b: None,
            ext_monitor_a: None,
            ext_monitor_b: None,
            lab_a_prop: None,
            lab_b_prop: None,
        };
        if config.mode == Mode::Decoherent {
            let int_spec = EnsembleSpec::goe(di, config.seed);
            let ext_spec = EnsembleSpec::goe(de, config.seed);
            let draw = |spec: &EnsembleSpec, role: u64| {
                sample_coupling(spec, coupling_stream(config.realization, role))
            };
            let vh_a = draw(&int_spec, 0)?;
            let vv_a = draw(&int_spec, 1)?;
            let vh_b = draw(&int_spec, 2)?;
            let vv_b = draw(&int_spec, 3)?;
            setup.int_monitor_a = Some(build_monitor(
                &setup.layout,
                "Aa",
                "ea",
                &[vh_a.clone(), vv_a.clone()],
            )?);
            setup.int_monitor_b = Some(build_monitor(
                &setup.layout,
                "Ab",
                "eb",
                &[vh_b.clone(), vv_b.clone()],
            )?);
            setup.ext_monitor_a = Some(build_monitor(
                &setup.layout,
                "ApA",
                "epA",
                &[draw(&ext_spec, 4)?, draw(&ext_spec, 5)?],
            )?);
            setup.ext_monitor_b = Some(build_monitor(
                &setup.layout,
                "ApB",
                "epB",
                &[draw(&ext_spec, 6)?, draw(&ext_spec, 7)?],
            )?);
            let mon_a = build_monitor(&setup.lab_a, "Aa", "ea", &[vh_a, vv_a])?;
            let mon_b = build_monitor(&setup.lab_b, "Ab", "eb", &[vh_b, vv_b])?;
            setup.lab_a_prop = Some(exponentiate(
                &setup.lab_a,
                &["Aa", "ea"],
                &[&mon_a],
                DEFAULT_BLOCK_CAP,
            )?);
            setup.lab_b_prop = Some(exponentiate(
                &setup.lab_b,
                &["Ab", "eb"],
                &[&mon_b],
                DEFAULT_BLOCK_CAP,
            )?);
        }
        Ok(setup)
    }

    /// Product state: photons in the given two-photon amplitudes, both
    /// apparatus pairs and all environments at their zero states.
    pub fn initial_state(&self, photon_amps: &[(usize, usize, C64)]) -> Result<StateVector> {
        let mut amps = vec![C64::ZERO; self.layout.total_dim()];
        for &(ia, ib, amp) in photon_amps {
            let idx = self.layout.index_of(&[
                ("a", ia),
                ("Aa", 0),
                ("ea", 0),
                ("b", ib),
                ("Ab", 0),
                ("eb", 0),
                ("ApA", 0),
                ("epA", 0),
                ("ApB", 0),
                ("epB", 0),
            ])?;
            amps[idx] = amp;
        }
        let state = StateVector::from_amplitudes(self.layout.clone(), amps)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(WfError::NotNormalized(norm));
        }
        Ok(state)
    }

    /// Branch reference states of one laboratory after its monitor has run
    /// for `monitor_elapsed`.
    pub fn lab_refs(
        &self,
        lab: Lab,
        monitor_elapsed: f64,
    ) -> Result<(StateVector, StateVector)> {
        let (sub, prop) = match lab {
            Lab::A => (&self.lab_a, &self.lab_a_prop),
            Lab::B => (&self.lab_b, &self.lab_b_prop),
        };
        let h0 = StateVector::basis(
            sub,
            &[(lab.photon(), 0), (lab.apparatus(), 0), (lab.env(), 0)],
        )?;
        let v0 = StateVector::basis(
            sub,
            &[(lab.photon(), 1), (lab.apparatus(), 1), (lab.env(), 0)],
        )?;
        match prop {
            None => Ok((h0, v0)),
            Some(p) => Ok((
                p.apply(&h0, monitor_elapsed)?,
                p.apply(&v0, monitor_elapsed)?,
            )),
        }
    }

    /// Internal pre-measurement terms for both laboratories.
    pub fn internal_cnots(&self) -> Result<Vec<HermitianOperator>> {
        Ok(vec![
            build_premeasurement(&self.layout, self.config.g, "a", "Aa")?,
            build_premeasurement(&self.layout, self.config.g, "b", "Ab")?,
        ])
    }

    /// External interference pre-measurement on one laboratory: rank-one
    /// projector onto the propagated (h - v)/√2 branch combination, flipping
    /// that observer's apparatus.
    pub fn external_premeasure(
        &self,
        lab: Lab,
        monitor_elapsed: f64,
    ) -> Result<HermitianOperator> {
        let (h_t, v_t) = self.lab_refs(lab, monitor_elapsed)?;
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let minus = StateVector::superpose(&[
            (C64::new(inv, 0.0), &h_t),
            (C64::new(-inv, 0.0), &v_t),
        ])?;
        build_projector_premeasurement(&self.layout, self.config.g, &minus, lab.ext_apparatus())
    }

    /// The selected monitor terms (empty in ideal mode).
    pub fn monitors(&self, selection: &[MonitorSel]) -> Vec<HermitianOperator> {
        selection
            .iter()
            .filter_map(|sel| match sel {
                MonitorSel::IntA => self.int_monitor_a.clone(),
                MonitorSel::IntB => self.int_monitor_b.clone(),
                MonitorSel::ExtA => self.ext_monitor_a.clone(),
                MonitorSel::ExtB => self.ext_monitor_b.clone(),
            })
            .collect()
    }

    pub fn is_decoherent(&self) -> bool {
        self.config.mode == Mode::Decoherent
    }
}
