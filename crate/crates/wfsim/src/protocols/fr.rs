//! The two-laboratory certainty-chain protocol: entangled photon pair,
//! internal measurements in the h/v bases, then interference measurements of
//! whole laboratories in their ±(τ) bases, with memory-record tables read at
//! three checkpoints.
//!
//! Measurement ordering is fixed: I_A, I_B, E_A, E_B.

use num_complex::Complex64 as C64;

use crate::error::{Result, WfError};
use crate::hambuilder::{Stage, StageSchedule};
use crate::propagate::run_schedule_observed;
use crate::tensorspace::{partial_trace, StateVector};
use crate::tol;

use super::twolab::{Lab, MonitorSel, TwoLabSetup};
use super::ProtocolConfig;

/// Checkpoint at which the memory records are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrTag {
    /// After both internal measurements are complete.
    BeforeEa,
    /// After E_A's interference measurement is complete.
    AfterEa,
    /// After all four measurements are complete.
    Final,
}

/// One agent's memory register: the legs read out and the pointer
/// assignments that count as definite outcomes.
#[derive(Debug, Clone)]
struct AgentMemory {
    name: &'static str,
    legs: Vec<&'static str>,
    outcomes: Vec<(&'static str, Vec<usize>)>,
}

fn internal_memory(lab: Lab) -> AgentMemory {
    AgentMemory {
        name: match lab {
            Lab::A => "I_A",
            Lab::B => "I_B",
        },
        legs: vec![lab.photon(), lab.apparatus()],
        outcomes: vec![("h", vec![0, 0]), ("v", vec![1, 1])],
    }
}

fn external_memory(lab: Lab) -> AgentMemory {
    AgentMemory {
        name: match lab {
            Lab::A => "E_A",
            Lab::B => "E_B",
        },
        legs: vec![lab.ext_apparatus()],
        outcomes: vec![("plus", vec![0]), ("minus", vec![1])],
    }
}

/// Joint assignment over agent memory labels → probability, read from the
/// reduced density matrix diagonal in the pointer basis.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    pub agents: Vec<String>,
    pub outcomes: Vec<Vec<String>>,
    /// Flat joint probabilities, first agent varying slowest.
    pub probabilities: Vec<f64>,
    /// Diagonal weight outside the pointer-consistent support.
    pub off_support_mass: f64,
    /// Largest reduced-matrix off-diagonal magnitude within the support.
    pub max_offdiagonal: f64,
    /// Records count as definite when the off-diagonal residue is below the
    /// definiteness threshold.
    pub definite: bool,
}

impl OutcomeTable {
    fn from_state(state: &StateVector, agents: &[AgentMemory]) -> Result<OutcomeTable> {
        let kept: Vec<&str> = agents.iter().flat_map(|a| a.legs.iter().copied()).collect();
        let rho = partial_trace(state, &kept)?;
        let sub = rho.layout().clone();
        if sub.labels() != kept {
            return Err(WfError::LayoutMismatch(
                "agent memory legs must follow the layout order".into(),
            ));
        }
        let mut combos = vec![Vec::new()];
        for agent in agents {
            let mut next = Vec::new();
            for prefix in &combos {
                for (o, _) in &agent.outcomes {
                    let mut with = prefix.clone();
                    with.push(*o);
                    next.push(with);
                }
            }
            combos = next;
        }
        let mut support_states = Vec::with_capacity(combos.len());
        for combo in &combos {
            let mut assignment = Vec::new();
            for (agent, outcome) in agents.iter().zip(combo) {
                let values = &agent
                    .outcomes
                    .iter()
                    .find(|(o, _)| o == outcome)
                    .expect("outcome label")
                    .1;
                for (leg, &value) in agent.legs.iter().zip(values) {
                    assignment.push((*leg, value));
                }
            }
            support_states.push(StateVector::basis(&sub, &assignment)?);
        }
        let mut probabilities = Vec::with_capacity(combos.len());
        let mut max_offdiagonal = 0.0f64;
        for (i, si) in support_states.iter().enumerate() {
            probabilities.push(rho.sandwich(si, si)?.re.max(0.0));
            for sj in support_states.iter().skip(i + 1) {
                max_offdiagonal = max_offdiagonal.max(rho.sandwich(si, sj)?.norm());
            }
        }
        let total: f64 = probabilities.iter().sum();
        Ok(OutcomeTable {
            agents: agents.iter().map(|a| a.name.to_string()).collect(),
            outcomes: agents
                .iter()
                .map(|a| a.outcomes.iter().map(|(o, _)| o.to_string()).collect())
                .collect(),
            probabilities,
            off_support_mass: (1.0 - total).max(0.0),
            max_offdiagonal,
            definite: max_offdiagonal <= tol::DEFINITENESS,
        })
    }

    fn agent_index(&self, agent: &str) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a == agent)
            .ok_or_else(|| WfError::BadParameter(format!("unknown agent `{agent}`")))
    }

    /// Marginal probability of a partial assignment, e.g.
    /// `[("I_A", "v"), ("E_B", "plus")]`.
    pub fn probability(&self, partial: &[(&str, &str)]) -> Result<f64> {
        let mut filters: Vec<Option<usize>> = vec![None; self.agents.len()];
        for (agent, outcome) in partial {
            let ai = self.agent_index(agent)?;
            let oi = self.outcomes[ai]
                .iter()
                .position(|o| o == outcome)
                .ok_or_else(|| {
                    WfError::BadParameter(format!("unknown outcome `{outcome}` for `{agent}`"))
                })?;
            filters[ai] = Some(oi);
        }
        let mut total = 0.0;
        for (flat, p) in self.probabilities.iter().enumerate() {
            let mut idx = flat;
            let mut keep = true;
            for ai in (0..self.agents.len()).rev() {
                let k = self.outcomes[ai].len();
                let digit = idx % k;
                idx /= k;
                if let Some(want) = filters[ai] {
                    if digit != want {
                        keep = false;
                        break;
                    }
                }
            }
            if keep {
                total += p;
            }
        }
        Ok(total)
    }

    /// Conditional probability renormalized over the positive-probability
    /// support of the condition.
    pub fn conditional(&self, target: &[(&str, &str)], given: &[(&str, &str)]) -> Result<f64> {
        let p_given = self.probability(given)?;
        if p_given <= 0.0 {
            return Err(WfError::BadParameter(
                "conditioning event has zero probability".into(),
            ));
        }
        let mut joint = target.to_vec();
        joint.extend_from_slice(given);
        Ok(self.probability(&joint)? / p_given)
    }
}

/// Entangled initial pair: √(1/3)|h_a v_b⟩ + √(2/3)|v_a +_b⟩, expanded over
/// the photon basis.
fn initial_photon_amplitudes() -> Vec<(usize, usize, C64)> {
    let third = (1.0f64 / 3.0).sqrt();
    vec![
        (0, 1, C64::new(third, 0.0)),
        (1, 0, C64::new(third, 0.0)),
        (1, 1, C64::new(third, 0.0)),
    ]
}

fn schedule_for(setup: &TwoLabSetup, tag: FrTag) -> Result<StageSchedule> {
    let config = &setup.config;
    let pre = config.premeasure_time();
    let settle = config.settle;
    let samples = config.samples_per_stage;
    let mut stages: Vec<Stage> = Vec::new();

    // internal pre-measurements
    stages.push(Stage::new(setup.internal_cnots()?, pre).with_samples(samples));
    if setup.is_decoherent() {
        stages.push(
            Stage::new(
                setup.monitors(&[MonitorSel::IntA, MonitorSel::IntB]),
                settle,
            )
            .with_samples(samples),
        );
    }
    if tag == FrTag::BeforeEa {
        return Ok(StageSchedule::new(stages)?);
    }

    // E_A's interference pre-measurement; internal monitors stay on
    let t_mon_ea = if setup.is_decoherent() { settle } else { 0.0 };
    let mut ea_terms = vec![setup.external_premeasure(Lab::A, t_mon_ea)?];
    ea_terms.extend(setup.monitors(&[MonitorSel::IntA, MonitorSel::IntB]));
    stages.push(Stage::new(ea_terms, pre).with_samples(samples));
    if setup.is_decoherent() {
        stages.push(
            Stage::new(
                setup.monitors(&[MonitorSel::IntA, MonitorSel::IntB, MonitorSel::ExtA]),
                settle,
            )
            .with_samples(samples),
        );
    }
    if tag == FrTag::AfterEa {
        return Ok(StageSchedule::new(stages)?);
    }

    // E_B's interference pre-measurement
    let t_mon_eb = if setup.is_decoherent() {
        settle + pre + settle
    } else {
        0.0
    };
    let mut eb_terms = vec![setup.external_premeasure(Lab::B, t_mon_eb)?];
    eb_terms.extend(setup.monitors(&[
        MonitorSel::IntA,
        MonitorSel::IntB,
        MonitorSel::ExtA,
    ]));
    stages.push(Stage::new(eb_terms, pre).with_samples(samples));
    if setup.is_decoherent() {
        stages.push(
            Stage::new(
                setup.monitors(&[
                    MonitorSel::IntA,
                    MonitorSel::IntB,
                    MonitorSel::ExtA,
                    MonitorSel::ExtB,
                ]),
                settle,
            )
            .with_samples(samples),
        );
    }
    Ok(StageSchedule::new(stages)?)
}

/// Run the protocol to the tagged checkpoint and read the corresponding
/// memory table: both internal agents before/after E_A, all four agents at
/// the end.
pub fn run_fr(config: &ProtocolConfig, tag: FrTag) -> Result<OutcomeTable> {
    let (state, _) = run_fr_state(config, tag)?;
    let agents = match tag {
        FrTag::BeforeEa | FrTag::AfterEa => {
            vec![internal_memory(Lab::A), internal_memory(Lab::B)]
        }
        FrTag::Final => vec![
            internal_memory(Lab::A),
            internal_memory(Lab::B),
            external_memory(Lab::A),
            external_memory(Lab::B),
        ],
    };
    OutcomeTable::from_state(&state, &agents)
}

/// The propagated composite state at a checkpoint (exposed for diagnostics
/// and tests).
pub fn run_fr_state(config: &ProtocolConfig, tag: FrTag) -> Result<(StateVector, f64)> {
    let setup = TwoLabSetup::new(config)?;
    let initial = setup.initial_state(&initial_photon_amplitudes())?;
    let schedule = schedule_for(&setup, tag)?;
    let (state, drift) = run_schedule_observed(&initial, &schedule, |_, _| Ok(()))?;
    Ok((state, drift))
}

/// The same final state written in the four product bases available when
/// measurements are read as plain correlations: laboratory h/v against
/// laboratory h/v, ± against h/v, h/v against ±, and ± against ±.
///
/// Amplitude orderings are (side-A index slowest, side-B fastest), with
/// |±⟩ = (|h⟩ ± |v⟩)/√2 on the rewritten side.
#[derive(Debug, Clone)]
pub struct BasisAmbiguity {
    pub lab_lab: [C64; 4],
    pub pm_lab: [C64; 4],
    pub lab_pm: [C64; 4],
    pub pm_pm: [C64; 4],
}

impl BasisAmbiguity {
    /// Convert any of the four forms back to the (h/v ⊗ h/v) amplitudes.
    pub fn to_lab_basis(form: &[C64; 4], a_rotated: bool, b_rotated: bool) -> [C64; 4] {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = *form;
        if a_rotated {
            // c_h = (c_+ + c_-)/√2, c_v = (c_+ - c_-)/√2 per B column
            let mut next = [C64::ZERO; 4];
            for b in 0..2 {
                next[b] = (out[b] + out[2 + b]) * C64::new(inv, 0.0);
                next[2 + b] = (out[b] - out[2 + b]) * C64::new(inv, 0.0);
            }
            out = next;
        }
        if b_rotated {
            let mut next = [C64::ZERO; 4];
            for a in 0..2 {
                next[2 * a] = (out[2 * a] + out[2 * a + 1]) * C64::new(inv, 0.0);
                next[2 * a + 1] = (out[2 * a] - out[2 * a + 1]) * C64::new(inv, 0.0);
            }
            out = next;
        }
        out
    }
}

/// Final-state amplitudes of the protocol without environments, in all four
/// bases. Each form is derived from the lab/lab amplitudes by an explicit
/// 2×2 rotation, so the four describe one and the same state.
pub fn fr_basis_ambiguity() -> BasisAmbiguity {
    let third = (1.0f64 / 3.0).sqrt();
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let lab_lab = [
        C64::ZERO,
        C64::new(third, 0.0),
        C64::new(third, 0.0),
        C64::new(third, 0.0),
    ];
    let rot_a = |x: &[C64; 4]| -> [C64; 4] {
        let mut out = [C64::ZERO; 4];
        for b in 0..2 {
            out[b] = (x[b] + x[2 + b]) * C64::new(inv, 0.0);
            out[2 + b] = (x[b] - x[2 + b]) * C64::new(inv, 0.0);
        }
        out
    };
    let rot_b = |x: &[C64; 4]| -> [C64; 4] {
        let mut out = [C64::ZERO; 4];
        for a in 0..2 {
            out[2 * a] = (x[2 * a] + x[2 * a + 1]) * C64::new(inv, 0.0);
            out[2 * a + 1] = (x[2 * a] - x[2 * a + 1]) * C64::new(inv, 0.0);
        }
        out
    };
    let pm_lab = rot_a(&lab_lab);
    let lab_pm = rot_b(&lab_lab);
    let pm_pm = rot_b(&pm_lab);
    BasisAmbiguity {
        lab_lab,
        pm_lab,
        lab_pm,
        pm_pm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::Mode;

    fn ideal_config() -> ProtocolConfig {
        ProtocolConfig {
            mode: Mode::Ideal,
            n_int: 0,
            n_ext: 0,
            g: 50.0,
            samples_per_stage: 16,
            ..ProtocolConfig::default()
        }
    }

    fn decoherent_config() -> ProtocolConfig {
        ProtocolConfig {
            mode: Mode::Decoherent,
            n_int: 2,
            n_ext: 2,
            g: 100.0,
            settle: 1.0,
            samples_per_stage: 8,
            seed: 21,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn before_ea_reproduces_the_two_agent_certainties() {
        let table = run_fr(&ideal_config(), FrTag::BeforeEa).unwrap();
        assert!(table.probability(&[("I_A", "h"), ("I_B", "h")]).unwrap() < 1e-12);
        for (pair, expect) in [
            ([("I_A", "v"), ("I_B", "h")], 1.0 / 3.0),
            ([("I_A", "v"), ("I_B", "v")], 1.0 / 3.0),
            ([("I_A", "h"), ("I_B", "v")], 1.0 / 3.0),
        ] {
            assert!((table.probability(&pair).unwrap() - expect).abs() < 1e-9);
        }
        // both certainty chains hold at this checkpoint
        let p = table
            .conditional(&[("I_A", "v")], &[("I_B", "h")])
            .unwrap();
        assert!((p - 1.0).abs() < 1e-9);
        let q = table
            .conditional(&[("I_B", "v")], &[("I_A", "h")])
            .unwrap();
        assert!((q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn after_ea_the_certainty_weakens_to_two_thirds() {
        let table = run_fr(&ideal_config(), FrTag::AfterEa).unwrap();
        for (pair, expect) in [
            ([("I_A", "h"), ("I_B", "v")], 1.0 / 3.0),
            ([("I_A", "v"), ("I_B", "v")], 1.0 / 3.0),
            ([("I_A", "h"), ("I_B", "h")], 1.0 / 6.0),
            ([("I_A", "v"), ("I_B", "h")], 1.0 / 6.0),
        ] {
            let got = table.probability(&pair).unwrap();
            assert!((got - expect).abs() < 1e-9, "{pair:?}: {got} vs {expect}");
        }
        // the interference measurement on laboratory A leaves lab B's
        // marginal untouched but redistributes lab A's records
        let p_hb = table.probability(&[("I_B", "h")]).unwrap();
        assert!((p_hb - 1.0 / 3.0).abs() < 1e-9);
        let weakened = table
            .conditional(&[("I_B", "v")], &[("I_A", "h")])
            .unwrap();
        assert!((weakened - 2.0 / 3.0).abs() < 1e-9, "got {weakened}");
        let sym = table
            .conditional(&[("I_A", "v")], &[("I_B", "h")])
            .unwrap();
        assert!((sym - 0.5).abs() < 1e-9, "got {sym}");
    }

    #[test]
    fn final_tables_match_the_closed_form_amplitudes() {
        let table = run_fr(&ideal_config(), FrTag::Final).unwrap();
        let p_mm = table
            .probability(&[("E_A", "minus"), ("E_B", "minus")])
            .unwrap();
        assert!((p_mm - 1.0 / 12.0).abs() < 1e-9, "p(-,-) = {p_mm}");
        let p_pp = table
            .probability(&[("E_A", "plus"), ("E_B", "plus")])
            .unwrap();
        assert!((p_pp - 0.75).abs() < 1e-9);
        let p_cond = table
            .conditional(&[("E_B", "plus")], &[("I_A", "v")])
            .unwrap();
        assert!((p_cond - 5.0 / 6.0).abs() < 1e-9, "p(+_B | v_a) = {p_cond}");
    }

    #[test]
    fn conditionals_recompose_into_marginals() {
        let table = run_fr(&ideal_config(), FrTag::Final).unwrap();
        // Σ_y p(x|y) p(y) = p(x)
        let p_x = table.probability(&[("E_B", "plus")]).unwrap();
        let mut total = 0.0;
        for y in ["h", "v"] {
            let p_y = table.probability(&[("I_A", y)]).unwrap();
            if p_y > 0.0 {
                total += table.conditional(&[("E_B", "plus")], &[("I_A", y)]).unwrap() * p_y;
            }
        }
        assert!((total - p_x).abs() < 1e-9);
    }

    #[test]
    fn decoherent_records_land_near_the_ideal_numbers() {
        let config = decoherent_config();
        let before = run_fr(&config, FrTag::BeforeEa).unwrap();
        assert!(before.probability(&[("I_A", "h"), ("I_B", "h")]).unwrap() < 0.02);
        let after = run_fr(&config, FrTag::AfterEa).unwrap();
        let weakened = after
            .conditional(&[("I_B", "v")], &[("I_A", "h")])
            .unwrap();
        assert!((weakened - 2.0 / 3.0).abs() < 0.03, "got {weakened}");
        let table = run_fr(&config, FrTag::Final).unwrap();
        let p_mm = table
            .probability(&[("E_A", "minus"), ("E_B", "minus")])
            .unwrap();
        assert!((p_mm - 1.0 / 12.0).abs() < 0.02, "p(-,-) = {p_mm}");
        let p_cond = table
            .conditional(&[("E_B", "plus")], &[("I_A", "v")])
            .unwrap();
        assert!((p_cond - 5.0 / 6.0).abs() < 0.03, "p(+_B|v_a) = {p_cond}");
    }

    #[test]
    fn tables_sum_to_one_with_negligible_off_support_mass() {
        let table = run_fr(&ideal_config(), FrTag::Final).unwrap();
        let total: f64 = table.probabilities.iter().sum();
        assert!((total + table.off_support_mass - 1.0).abs() < 1e-9);
        assert!(table.off_support_mass < 1e-9);
    }

    #[test]
    fn all_four_basis_forms_describe_one_state() {
        let forms = fr_basis_ambiguity();
        let reference = forms.lab_lab;
        for (form, a_rot, b_rot) in [
            (&forms.pm_lab, true, false),
            (&forms.lab_pm, false, true),
            (&forms.pm_pm, true, true),
        ] {
            let back = BasisAmbiguity::to_lab_basis(form, a_rot, b_rot);
            for (x, y) in back.iter().zip(&reference) {
                assert!((x - y).norm() < 1e-12);
            }
        }
        for form in [
            &forms.lab_lab,
            &forms.pm_lab,
            &forms.lab_pm,
            &forms.pm_pm,
        ] {
            let norm: f64 = form.iter().map(|c| c.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_forms_carry_the_expected_weights_and_certainties() {
        let forms = fr_basis_ambiguity();
        // (± ⊗ ±) weights: 3/4 on (+,+), 1/12 on each remaining entry
        assert!((forms.pm_pm[0].norm_sqr() - 0.75).abs() < 1e-12);
        for k in 1..4 {
            assert!((forms.pm_pm[k].norm_sqr() - 1.0 / 12.0).abs() < 1e-12);
        }
        // (± ⊗ lab): the (-, v) entry vanishes: minus on side A certifies h
        // on side B
        assert!(forms.pm_lab[3].norm() < 1e-12);
        // (lab ⊗ ±): the (v, -) entry vanishes: v on side A certifies plus
        // on side B
        assert!(forms.lab_pm[3].norm() < 1e-12);
    }
}
