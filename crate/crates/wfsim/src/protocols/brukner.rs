//! The correlation-test variant of the two-laboratory experiment: internal
//! agents measure the photon pair, external agents perform interference
//! measurements of the whole laboratories, and a CHSH combination is read
//! either from the agents' memory registers or from the laboratory states.

use num_complex::Complex64 as C64;

use crate::error::{Result, WfError};
use crate::hambuilder::{Stage, StageSchedule};
use crate::propagate::run_schedule_observed;
use crate::tensorspace::{embed, HermitianOperator, StateVector};

use super::twolab::{Lab, MonitorSel, TwoLabSetup};
use super::ProtocolConfig;

/// Protocol stage at which the state is returned. Stage `2a` and stage `2b`
/// both follow stage 1 (only one external agent has measured); stage 3
/// follows either.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BruknerStage {
    Stage1,
    Stage2a,
    Stage2b,
    Stage3,
}

impl std::str::FromStr for BruknerStage {
    type Err = WfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(BruknerStage::Stage1),
            "2a" => Ok(BruknerStage::Stage2a),
            "2b" => Ok(BruknerStage::Stage2b),
            "3" => Ok(BruknerStage::Stage3),
            other => Err(WfError::Config(format!(
                "stage must be 1, 2a, 2b, or 3 (got `{other}`)"
            ))),
        }
    }
}

/// A staged state plus the laboratory branch references at its time, needed
/// to build the laboratory-state observables.
pub struct BruknerOutcome {
    pub state: StateVector,
    pub lab_a_refs: (StateVector, StateVector),
    pub lab_b_refs: (StateVector, StateVector),
    pub max_norm_drift: f64,
    setup: TwoLabSetup,
}

/// Photon-pair amplitudes: (cos(π/8)(|hv⟩+|vh⟩) + sin(π/8)(|hh⟩-|vv⟩))/√2.
fn initial_photon_amplitudes() -> Vec<(usize, usize, C64)> {
    let c = (std::f64::consts::FRAC_PI_8).cos() * std::f64::consts::FRAC_1_SQRT_2;
    let s = (std::f64::consts::FRAC_PI_8).sin() * std::f64::consts::FRAC_1_SQRT_2;
    vec![
        (0, 1, C64::new(c, 0.0)),
        (1, 0, C64::new(c, 0.0)),
        (0, 0, C64::new(s, 0.0)),
        (1, 1, C64::new(-s, 0.0)),
    ]
}

/// Run the variant to the requested stage.
pub fn run_brukner(config: &ProtocolConfig, stage: BruknerStage) -> Result<BruknerOutcome> {
    let setup = TwoLabSetup::new(config)?;
    let initial = setup.initial_state(&initial_photon_amplitudes())?;
    let pre = config.premeasure_time();
    let settle = config.settle;
    let samples = config.samples_per_stage;
    let deco = setup.is_decoherent();

    let mut stages: Vec<Stage> = Vec::new();
    let mut int_clock = 0.0; // internal monitor elapsed time

    stages.push(Stage::new(setup.internal_cnots()?, pre).with_samples(samples));
    if deco {
        stages.push(
            Stage::new(
                setup.monitors(&[MonitorSel::IntA, MonitorSel::IntB]),
                settle,
            )
            .with_samples(samples),
        );
        int_clock += settle;
    }

    let push_external = |stages: &mut Vec<Stage>,
                             int_clock: &mut f64,
                             lab: Lab,
                             running: &[MonitorSel]|
     -> Result<()> {
        let mut terms = vec![setup.external_premeasure(lab, *int_clock)?];
        terms.extend(setup.monitors(running));
        stages.push(Stage::new(terms, pre).with_samples(samples));
        if deco {
            let mut after = running.to_vec();
            after.push(match lab {
                Lab::A => MonitorSel::ExtA,
                Lab::B => MonitorSel::ExtB,
            });
            stages.push(Stage::new(setup.monitors(&after), settle).with_samples(samples));
            *int_clock += pre + settle;
        }
        Ok(())
    };

    match stage {
        BruknerStage::Stage1 => {}
        BruknerStage::Stage2a => {
            push_external(
                &mut stages,
                &mut int_clock,
                Lab::A,
                &[MonitorSel::IntA, MonitorSel::IntB],
            )?;
        }
        BruknerStage::Stage2b => {
            push_external(
                &mut stages,
                &mut int_clock,
                Lab::B,
                &[MonitorSel::IntA, MonitorSel::IntB],
            )?;
        }
        BruknerStage::Stage3 => {
            push_external(
                &mut stages,
                &mut int_clock,
                Lab::A,
                &[MonitorSel::IntA, MonitorSel::IntB],
            )?;
            push_external(
                &mut stages,
                &mut int_clock,
                Lab::B,
                &[MonitorSel::IntA, MonitorSel::IntB, MonitorSel::ExtA],
            )?;
        }
    }

    let schedule = StageSchedule::new(stages)?;
    let (state, max_norm_drift) = run_schedule_observed(&initial, &schedule, |_, _| Ok(()))?;
    let lab_a_refs = setup.lab_refs(Lab::A, int_clock)?;
    let lab_b_refs = setup.lab_refs(Lab::B, int_clock)?;
    Ok(BruknerOutcome {
        state,
        lab_a_refs,
        lab_b_refs,
        max_norm_drift,
        setup,
    })
}

/// Observables entering the CHSH combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableSet {
    /// Pointer readouts of the agents' memory registers.
    Memories,
    /// Interference projectors onto the laboratory branch states.
    Laboratories,
}

impl std::str::FromStr for ObservableSet {
    type Err = WfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memories" => Ok(ObservableSet::Memories),
            "laboratories" => Ok(ObservableSet::Laboratories),
            other => Err(WfError::Config(format!(
                "observables must be `memories` or `laboratories` (got `{other}`)"
            ))),
        }
    }
}

/// The four correlators and S = ⟨A1B1⟩ + ⟨A1B0⟩ + ⟨A0B1⟩ - ⟨A0B0⟩.
#[derive(Debug, Clone)]
pub struct ChshReport {
    pub a1b1: f64,
    pub a1b0: f64,
    pub a0b1: f64,
    pub a0b0: f64,
    pub s_value: f64,
    pub definitions: [String; 4],
}

/// Internal pointer readout ±1 on (photon, apparatus): +1 on the h-pointer
/// product, -1 on the v-pointer product, 0 on the mismatched states.
fn internal_readout(setup: &TwoLabSetup, lab: Lab) -> Result<HermitianOperator> {
    let mut m = nalgebra::DMatrix::<C64>::zeros(4, 4);
    m[(0, 0)] = C64::ONE;
    m[(3, 3)] = -C64::ONE;
    HermitianOperator::new(&setup.layout, &[lab.photon(), lab.apparatus()], m)
}

/// External pointer readout ±1 on the external apparatus leg.
fn external_readout(setup: &TwoLabSetup, lab: Lab) -> Result<HermitianOperator> {
    let mut m = nalgebra::DMatrix::<C64>::zeros(2, 2);
    m[(0, 0)] = C64::ONE;
    m[(1, 1)] = -C64::ONE;
    HermitianOperator::new(&setup.layout, &[lab.ext_apparatus()], m)
}

/// Laboratory interference observable |+(τ)⟩⟨+(τ)| - |-(τ)⟩⟨-(τ)| over one
/// laboratory's legs.
fn laboratory_observable(
    setup: &TwoLabSetup,
    lab: Lab,
    refs: &(StateVector, StateVector),
) -> Result<HermitianOperator> {
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let plus = StateVector::superpose(&[
        (C64::new(inv, 0.0), &refs.0),
        (C64::new(inv, 0.0), &refs.1),
    ])?;
    let minus = StateVector::superpose(&[
        (C64::new(inv, 0.0), &refs.0),
        (C64::new(-inv, 0.0), &refs.1),
    ])?;
    let d = plus.amplitudes().len();
    let mut m = nalgebra::DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = plus.amplitudes()[i] * plus.amplitudes()[j].conj()
                - minus.amplitudes()[i] * minus.amplitudes()[j].conj();
        }
    }
    HermitianOperator::new(
        &setup.layout,
        &[lab.photon(), lab.apparatus(), lab.env()],
        m,
    )
}

/// Evaluate the CHSH combination on a staged state.
pub fn chsh(outcome: &BruknerOutcome, set: ObservableSet) -> Result<ChshReport> {
    let setup = &outcome.setup;
    let a0 = internal_readout(setup, Lab::A)?;
    let b0 = internal_readout(setup, Lab::B)?;
    let (a1, b1, definitions) = match set {
        ObservableSet::Memories => (
            external_readout(setup, Lab::A)?,
            external_readout(setup, Lab::B)?,
            [
                "A0: pointer readout of (a, Aa)".to_string(),
                "B0: pointer readout of (b, Ab)".to_string(),
                "A1: pointer readout of ApA".to_string(),
                "B1: pointer readout of ApB".to_string(),
            ],
        ),
        ObservableSet::Laboratories => (
            laboratory_observable(setup, Lab::A, &outcome.lab_a_refs)?,
            laboratory_observable(setup, Lab::B, &outcome.lab_b_refs)?,
            [
                "A0: pointer readout of (a, Aa)".to_string(),
                "B0: pointer readout of (b, Ab)".to_string(),
                "A1: branch interference projector on laboratory A".to_string(),
                "B1: branch interference projector on laboratory B".to_string(),
            ],
        ),
    };
    let correlator = |oa: &HermitianOperator, ob: &HermitianOperator| -> Result<f64> {
        let ea = embed(oa, &setup.layout)?;
        let eb = embed(ob, &setup.layout)?;
        let value = outcome.state.overlap(&ea.apply(&eb.apply(&outcome.state)?)?)?;
        let bound = 1.0 + 1e-9;
        if value.re.abs() > bound || value.im.abs() > 1e-9 {
            return Err(WfError::BadParameter(format!(
                "correlator out of range: {value}"
            )));
        }
        Ok(value.re)
    };
    let a1b1 = correlator(&a1, &b1)?;
    let a1b0 = correlator(&a1, &b0)?;
    let a0b1 = correlator(&a0, &b1)?;
    let a0b0 = correlator(&a0, &b0)?;
    Ok(ChshReport {
        a1b1,
        a1b0,
        a0b1,
        a0b0,
        s_value: a1b1 + a1b0 + a0b1 - a0b0,
        definitions,
    })
}
