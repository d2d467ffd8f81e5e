//! Synthetic visit-trajectory generator with planted temporal structure:
//! lab panels recur on a fixed per-patient daily phase, abnormal results
//! tend to be retested at the next panel, and administering a paired
//! medication lowers the abnormal probability of its lab at the next
//! panel. Stands in for access-restricted hospital data while giving the
//! timestamp features and the recency signal something real to learn.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{EventType, LabFlag, MedicalEvent, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub patients: usize,
    pub lab_codes: usize,
    /// Medications `M00..` pair 1:1 with the first `med_codes` lab codes.
    pub med_codes: usize,
    pub diagnosis_codes: usize,
    pub procedure_codes: usize,
    /// Panel cycle length; lab panels occur at `phase (mod period)`.
    pub panel_period_hours: f64,
    /// Probability an abnormal lab reappears abnormal at the next panel.
    pub retest_prob: f64,
    /// Base probability a lab code joins a panel.
    pub panel_inclusion: f64,
    /// Base probability an included lab is flagged abnormal.
    pub base_abnormal: f64,
    /// Multiplier on abnormal probabilities when the paired medication was
    /// administered since the previous panel.
    pub med_effect: f64,
    /// Probability each medication is administered within a panel gap.
    pub med_prob: f64,
    /// Probability of a procedure event within a panel gap.
    pub procedure_prob: f64,
    pub visit_hours_min: f64,
    pub visit_hours_max: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patients: 200,
            lab_codes: 20,
            med_codes: 6,
            diagnosis_codes: 8,
            procedure_codes: 4,
            panel_period_hours: 24.0,
            retest_prob: 0.8,
            panel_inclusion: 0.35,
            base_abnormal: 0.25,
            med_effect: 0.2,
            med_prob: 0.3,
            procedure_prob: 0.15,
            visit_hours_min: 96.0,
            visit_hours_max: 168.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patients == 0 || self.lab_codes == 0 {
            return Err(Error::Config("need at least one patient and one lab code".into()));
        }
        if self.med_codes > self.lab_codes {
            return Err(Error::Config(format!(
                "{} medications cannot pair with {} lab codes",
                self.med_codes, self.lab_codes
            )));
        }
        for (name, p) in [
            ("retest_prob", self.retest_prob),
            ("panel_inclusion", self.panel_inclusion),
            ("base_abnormal", self.base_abnormal),
            ("med_effect", self.med_effect),
            ("med_prob", self.med_prob),
            ("procedure_prob", self.procedure_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.panel_period_hours <= 0.0 {
            return Err(Error::Config("panel period must be positive".into()));
        }
        if !(self.visit_hours_min <= self.visit_hours_max) {
            return Err(Error::Config("visit duration range is inverted".into()));
        }
        if self.visit_hours_min < 2.0 * self.panel_period_hours {
            return Err(Error::Config(
                "visits must span at least two panel periods for the recency rules to act".into(),
            ));
        }
        Ok(())
    }
}

fn lab_code(i: usize) -> alloc::string::String {
    format!("L{i:02}")
}

fn med_code(i: usize) -> alloc::string::String {
    format!("M{i:02}")
}

/// Deterministic generation: the same (config, seed) yields the same
/// trajectories event for event.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.patients);
    for p in 0..config.patients {
        out.push(generate_patient(config, p, &mut rng)?);
    }
    Ok(out)
}

fn generate_patient(
    config: &SynthConfig,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let period = config.panel_period_hours;
    let phase = 2.0 + rng.gen::<f64>() * period;
    let duration =
        config.visit_hours_min + rng.gen::<f64>() * (config.visit_hours_max - config.visit_hours_min);
    let mut events: Vec<MedicalEvent> = Vec::new();

    let n_diag = rng.gen_range(1..=3usize);
    for _ in 0..n_diag {
        let d = rng.gen_range(0..config.diagnosis_codes.max(1));
        events.push(MedicalEvent::new(format!("D{d:02}"), EventType::Diagnosis, None, 0.0)?);
    }

    let mut panel_times = Vec::new();
    let mut t = phase;
    while t <= duration {
        panel_times.push(t);
        t += period;
    }

    let mut prev_abnormal = alloc::vec![false; config.lab_codes];
    for (k, &panel_t) in panel_times.iter().enumerate() {
        let mut medicated = alloc::vec![false; config.lab_codes];
        if k > 0 {
            let gap = (panel_times[k - 1] + 0.5, panel_t - 0.5);
            for m in 0..config.med_codes {
                if rng.gen::<f64>() < config.med_prob {
                    let at = gap.0 + rng.gen::<f64>() * (gap.1 - gap.0);
                    events.push(MedicalEvent::new(med_code(m), EventType::Medication, None, at)?);
                    medicated[m] = true;
                }
            }
            if config.procedure_codes > 0 && rng.gen::<f64>() < config.procedure_prob {
                let x = rng.gen_range(0..config.procedure_codes);
                let at = gap.0 + rng.gen::<f64>() * (gap.1 - gap.0);
                events.push(MedicalEvent::new(format!("X{x:02}"), EventType::Procedure, None, at)?);
            }
        }

        let mut abnormal = alloc::vec![false; config.lab_codes];
        let mut included = alloc::vec![false; config.lab_codes];
        for c in 0..config.lab_codes {
            let med_mult = if medicated[c] { config.med_effect } else { 1.0 };
            if prev_abnormal[c] && rng.gen::<f64>() < config.retest_prob * med_mult {
                included[c] = true;
                abnormal[c] = true;
                continue;
            }
            if rng.gen::<f64>() < config.panel_inclusion {
                included[c] = true;
                abnormal[c] = rng.gen::<f64>() < config.base_abnormal * med_mult;
            }
        }
        if !included.iter().any(|&i| i) {
            let c = rng.gen_range(0..config.lab_codes);
            included[c] = true;
            let med_mult = if medicated[c] { config.med_effect } else { 1.0 };
            abnormal[c] = rng.gen::<f64>() < config.base_abnormal * med_mult;
        }
        for c in 0..config.lab_codes {
            if included[c] {
                let flag = if abnormal[c] { LabFlag::Abnormal } else { LabFlag::Normal };
                events.push(MedicalEvent::lab(lab_code(c), flag, panel_t)?);
            }
        }
        prev_abnormal = abnormal;
    }

    Ok(Trajectory::new(format!("p{index:04}"), "v1", events))
}

/// Same-timestamp lab groups of a trajectory, in time order.
pub fn lab_panels(traj: &Trajectory) -> Vec<(f64, Vec<&MedicalEvent>)> {
    let mut panels: Vec<(f64, Vec<&MedicalEvent>)> = Vec::new();
    for ev in traj.events().iter().filter(|e| e.is_lab()) {
        match panels.last_mut() {
            Some((t, group)) if *t == ev.hours() => group.push(ev),
            _ => panels.push((ev.hours(), alloc::vec![ev])),
        }
    }
    panels
}
