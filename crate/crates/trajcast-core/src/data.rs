//! Domain model for visit trajectories: events, nowcast instances, the
//! vocabulary, and batch encoding for the model.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reserved input-vocabulary ids.
pub const PAD_ID: usize = 0;
pub const MASK_ID: usize = 1;
pub const UNK_ID: usize = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const MASK_TOKEN: &str = "<mask>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventType {
    Diagnosis,
    Procedure,
    Medication,
    Lab,
}

impl EventType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::Diagnosis => "diagnosis",
            EventType::Procedure => "procedure",
            EventType::Medication => "medication",
            EventType::Lab => "lab",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "diagnosis" => Some(EventType::Diagnosis),
            "procedure" => Some(EventType::Procedure),
            "medication" => Some(EventType::Medication),
            "lab" => Some(EventType::Lab),
            _ => None,
        }
    }
}

/// Qualitative result annotation on a laboratory event. `Normal`/`Abnormal`
/// is the binary regime; `Low`/`Normal`/`High` the reference-bound regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabFlag {
    Normal,
    Abnormal,
    Low,
    High,
}

impl LabFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabFlag::Normal => "normal",
            LabFlag::Abnormal => "abnormal",
            LabFlag::Low => "low",
            LabFlag::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(LabFlag::Normal),
            "abnormal" => Some(LabFlag::Abnormal),
            "low" => Some(LabFlag::Low),
            "high" => Some(LabFlag::High),
            _ => None,
        }
    }
}

/// One timestamped medical event within a visit.
#[derive(Debug, Clone, PartialEq)]
pub struct MedicalEvent {
    code: String,
    event_type: EventType,
    flag: Option<LabFlag>,
    hours: f64,
}

impl MedicalEvent {
    /// Validates the schema: a flag is present iff the event is a lab, and
    /// the timestamp is a finite non-negative hour offset.
    pub fn new(
        code: impl Into<String>,
        event_type: EventType,
        flag: Option<LabFlag>,
        hours: f64,
    ) -> Result<Self> {
        let code = code.into();
        if code.is_empty() {
            return Err(Error::Schema("event code must be non-empty".into()));
        }
        match (event_type, flag) {
            (EventType::Lab, None) => {
                return Err(Error::Schema(format!("lab event {code} is missing its flag")))
            }
            (EventType::Lab, Some(_)) => {}
            (other, Some(f)) => {
                return Err(Error::Schema(format!(
                    "flag {} not allowed on {} event {code}",
                    f.as_str(),
                    other.as_str()
                )))
            }
            (_, None) => {}
        }
        if !hours.is_finite() || hours < 0.0 {
            return Err(Error::Schema(format!(
                "timestamp of {code} must be a non-negative number of hours, got {hours}"
            )));
        }
        Ok(Self { code, event_type, flag, hours })
    }

    pub fn lab(code: impl Into<String>, flag: LabFlag, hours: f64) -> Result<Self> {
        Self::new(code, EventType::Lab, Some(flag), hours)
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn event_type(&self) -> EventType {
        self.event_type
    }

    pub fn flag(&self) -> Option<LabFlag> {
        self.flag
    }

    pub fn hours(&self) -> f64 {
        self.hours
    }

    pub fn is_lab(&self) -> bool {
        self.event_type == EventType::Lab
    }

    /// Input-vocabulary token: labs carry their observed flag, everything
    /// else is the bare code.
    pub fn input_token(&self) -> String {
        match self.flag {
            Some(f) => format!("{}:{}", self.code, f.as_str()),
            None => self.code.clone(),
        }
    }
}

/// Time-ordered events of one (patient, visit).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    patient_id: String,
    visit_id: String,
    events: Vec<MedicalEvent>,
}

impl Trajectory {
    /// Events are stably re-sorted by timestamp so the ordering invariant
    /// holds regardless of input order.
    pub fn new(
        patient_id: impl Into<String>,
        visit_id: impl Into<String>,
        mut events: Vec<MedicalEvent>,
    ) -> Self {
        events.sort_by(|a, b| a.hours.total_cmp(&b.hours));
        Self { patient_id: patient_id.into(), visit_id: visit_id.into(), events }
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn visit_id(&self) -> &str {
        &self.visit_id
    }

    pub fn events(&self) -> &[MedicalEvent] {
        &self.events
    }
}

/// A supervised example: history up to some time, and the group of lab
/// events that all occur at `target_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct NowcastInstance {
    pub patient_id: String,
    pub visit_id: String,
    pub history: Vec<MedicalEvent>,
    pub target_time: f64,
    pub targets: Vec<MedicalEvent>,
}

/// Targets of a trajectory = its final maximal group of lab events sharing
/// the last lab timestamp; history = everything strictly before that
/// timestamp. Returns `None` when the trajectory has no lab event or the
/// history would be empty.
pub fn extract_instance(traj: &Trajectory) -> Option<NowcastInstance> {
    let last_lab_time = traj.events.iter().rev().find(|e| e.is_lab())?.hours;
    instance_at(traj, last_lab_time)
}

/// One instance per same-timestamp lab group in the trajectory (skipping
/// groups with empty history). With `augment` false, only the final group
/// is emitted.
pub fn extract_instances(traj: &Trajectory, augment: bool) -> Vec<NowcastInstance> {
    if !augment {
        return extract_instance(traj).into_iter().collect();
    }
    let mut times: Vec<f64> = traj.events.iter().filter(|e| e.is_lab()).map(|e| e.hours).collect();
    times.dedup();
    times.iter().filter_map(|&t| instance_at(traj, t)).collect()
}

fn instance_at(traj: &Trajectory, t: f64) -> Option<NowcastInstance> {
    let targets: Vec<MedicalEvent> =
        traj.events.iter().filter(|e| e.is_lab() && e.hours == t).cloned().collect();
    let history: Vec<MedicalEvent> =
        traj.events.iter().filter(|e| e.hours < t).cloned().collect();
    if targets.is_empty() || history.is_empty() {
        return None;
    }
    Some(NowcastInstance {
        patient_id: traj.patient_id.clone(),
        visit_id: traj.visit_id.clone(),
        history,
        target_time: t,
        targets,
    })
}

/// Keep the most recent `n` events, order preserved.
pub fn window(history: &[MedicalEvent], n: usize) -> &[MedicalEvent] {
    debug_assert!(n >= 1);
    &history[history.len().saturating_sub(n)..]
}

/// Whether a label is the lab code alone or the (code, flag) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// Predict (code, flag) outcomes, e.g. `L07:high`.
    #[default]
    CodeAndFlag,
    /// Collapse to bare codes, e.g. `L07`.
    CodeOnly,
}

impl LabelMode {
    pub fn label_token(&self, event: &MedicalEvent) -> Option<String> {
        if !event.is_lab() {
            return None;
        }
        Some(match self {
            LabelMode::CodeAndFlag => event.input_token(),
            LabelMode::CodeOnly => event.code.clone(),
        })
    }
}

/// Timestamp carried by the appended mask token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskTimeMode {
    /// The (scheduled, known) draw time of the target group.
    #[default]
    TargetTime,
    /// The last observed history timestamp; strict nowcast.
    LastEvent,
}

/// Bidirectional token maps for input events and target labels.
///
/// Input ids 0/1/2 are reserved for padding, the mask token, and
/// out-of-vocabulary codes. Tokens are assigned ids in sorted order, so a
/// vocabulary is a pure function of the token set.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    input_tokens: Vec<String>,
    input_ids: BTreeMap<String, usize>,
    label_tokens: Vec<String>,
    label_ids: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Collect tokens from training trajectories. Labels come from every
    /// lab event observed in the split.
    pub fn build(trajectories: &[Trajectory], mode: LabelMode) -> Result<Self> {
        let mut inputs: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        for traj in trajectories {
            for ev in traj.events() {
                inputs.push(ev.input_token());
                if let Some(tok) = mode.label_token(ev) {
                    labels.push(tok);
                }
            }
        }
        inputs.sort();
        inputs.dedup();
        labels.sort();
        labels.dedup();
        Self::from_parts(inputs, labels)
    }

    /// Assemble from already-sorted unique token lists (reserved tokens are
    /// prepended here, not expected in the input).
    pub fn from_parts(input_tokens: Vec<String>, label_tokens: Vec<String>) -> Result<Self> {
        let reserved = [PAD_TOKEN, MASK_TOKEN, UNK_TOKEN];
        let mut tokens: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        for t in &input_tokens {
            if reserved.contains(&t.as_str()) {
                return Err(Error::Schema(format!("token {t} collides with a reserved token")));
            }
            tokens.push(t.clone());
        }
        let mut input_ids = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if input_ids.insert(t.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate input token {t}")));
            }
        }
        let mut label_ids = BTreeMap::new();
        for (i, t) in label_tokens.iter().enumerate() {
            if label_ids.insert(t.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate label token {t}")));
            }
        }
        Ok(Self { input_tokens: tokens, input_ids, label_tokens, label_ids })
    }

    /// Input id, falling back to the out-of-vocabulary bucket.
    pub fn input_id(&self, token: &str) -> usize {
        self.input_ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn lookup_input(&self, token: &str) -> Option<usize> {
        self.input_ids.get(token).copied()
    }

    pub fn label_id(&self, token: &str) -> Option<usize> {
        self.label_ids.get(token).copied()
    }

    pub fn input_len(&self) -> usize {
        self.input_tokens.len()
    }

    pub fn label_len(&self) -> usize {
        self.label_tokens.len()
    }

    pub fn input_tokens(&self) -> &[String] {
        &self.input_tokens
    }

    pub fn label_tokens(&self) -> &[String] {
        &self.label_tokens
    }

    pub fn label_token(&self, id: usize) -> Option<&str> {
        self.label_tokens.get(id).map(|s| s.as_str())
    }
}

/// Multi-hot target vector over the label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    bits: Vec<bool>,
}

impl LabelVector {
    /// Marks the label of every representable target event; errors if none
    /// of the targets exist in the label vocabulary.
    pub fn from_targets(
        targets: &[MedicalEvent],
        vocab: &Vocabulary,
        mode: LabelMode,
    ) -> Result<Self> {
        let mut bits = vec![false; vocab.label_len()];
        let mut any = false;
        for ev in targets {
            if let Some(tok) = mode.label_token(ev) {
                if let Some(id) = vocab.label_id(&tok) {
                    bits[id] = true;
                    any = true;
                }
            }
        }
        if !any {
            return Err(Error::Data(
                "instance has no target representable in the label vocabulary".into(),
            ));
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_set(&self, id: usize) -> bool {
        self.bits[id]
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_row(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// One encoded input row: windowed history tokens, the mask token, then
/// right-padding up to `n_max + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRow {
    pub token_ids: Vec<usize>,
    pub times: Vec<f64>,
    pub real: Vec<bool>,
    pub mask_position: usize,
}

pub fn encode_row(
    history: &[MedicalEvent],
    mask_time: f64,
    vocab: &Vocabulary,
    n_max: usize,
) -> EncodedRow {
    let width = n_max + 1;
    let kept = window(history, n_max);
    let mut token_ids = vec![PAD_ID; width];
    let mut times = vec![0.0; width];
    let mut real = vec![false; width];
    for (i, ev) in kept.iter().enumerate() {
        token_ids[i] = vocab.input_id(&ev.input_token());
        times[i] = ev.hours();
        real[i] = true;
    }
    let mask_position = kept.len();
    token_ids[mask_position] = MASK_ID;
    times[mask_position] = mask_time;
    real[mask_position] = true;
    EncodedRow { token_ids, times, real, mask_position }
}

/// A batch of encoded instances, row-major over `batch × (n_max + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub batch: usize,
    pub width: usize,
    pub token_ids: Vec<usize>,
    pub times: Vec<f64>,
    pub real: Vec<bool>,
    pub mask_positions: Vec<usize>,
    pub labels: Tensor,
}

pub fn encode_batch(
    instances: &[NowcastInstance],
    vocab: &Vocabulary,
    n_max: usize,
    mask_time: MaskTimeMode,
    mode: LabelMode,
) -> Result<EncodedBatch> {
    if instances.is_empty() {
        return Err(Error::Data("cannot encode an empty batch".into()));
    }
    let width = n_max + 1;
    let mut token_ids = Vec::with_capacity(instances.len() * width);
    let mut times = Vec::with_capacity(instances.len() * width);
    let mut real = Vec::with_capacity(instances.len() * width);
    let mut mask_positions = Vec::with_capacity(instances.len());
    let mut labels = Vec::with_capacity(instances.len() * vocab.label_len());
    for inst in instances {
        let t_mask = match mask_time {
            MaskTimeMode::TargetTime => inst.target_time,
            MaskTimeMode::LastEvent => {
                inst.history.last().map(|e| e.hours()).unwrap_or(inst.target_time)
            }
        };
        let row = encode_row(&inst.history, t_mask, vocab, n_max);
        token_ids.extend_from_slice(&row.token_ids);
        times.extend_from_slice(&row.times);
        real.extend_from_slice(&row.real);
        mask_positions.push(row.mask_position);
        labels.extend(LabelVector::from_targets(&inst.targets, vocab, mode)?.to_row());
    }
    Ok(EncodedBatch {
        batch: instances.len(),
        width,
        token_ids,
        times,
        real,
        mask_positions,
        labels: Tensor::matrix(instances.len(), vocab.label_len(), labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(code: &str, flag: LabFlag, t: f64) -> MedicalEvent {
        MedicalEvent::lab(code, flag, t).unwrap()
    }

    fn med(code: &str, t: f64) -> MedicalEvent {
        MedicalEvent::new(code, EventType::Medication, None, t).unwrap()
    }

    #[test]
    fn flag_on_non_lab_is_a_schema_error() {
        let err = MedicalEvent::new("M1", EventType::Medication, Some(LabFlag::High), 1.0)
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = MedicalEvent::new("L1", EventType::Lab, None, 1.0).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn trajectory_sorts_events_by_time() {
        let traj = Trajectory::new("p", "v", vec![med("M1", 5.0), med("M2", 3.0)]);
        let times: Vec<f64> = traj.events().iter().map(|e| e.hours()).collect();
        assert_eq!(times, vec![3.0, 5.0]);
    }

    #[test]
    fn extract_takes_final_lab_group() {
        let traj = Trajectory::new(
            "p",
            "v",
            vec![med("M1", 1.0), lab("A", LabFlag::Normal, 4.0), lab("B", LabFlag::High, 4.0)],
        );
        let inst = extract_instance(&traj).unwrap();
        assert_eq!(inst.history.len(), 1);
        assert_eq!(inst.history[0].code(), "M1");
        assert_eq!(inst.target_time, 4.0);
        let codes: Vec<&str> = inst.targets.iter().map(|e| e.code()).collect();
        assert_eq!(codes, vec!["A", "B"]);
    }

    #[test]
    fn extract_rejects_empty_history() {
        let traj = Trajectory::new("p", "v", vec![lab("A", LabFlag::Normal, 4.0)]);
        assert!(extract_instance(&traj).is_none());
        let no_labs = Trajectory::new("p", "v", vec![med("M1", 1.0)]);
        assert!(extract_instance(&no_labs).is_none());
    }

    #[test]
    fn extract_groups_trailing_same_timestamp_labs() {
        // hand-trace: A@2, A@2, B@5, C@5, D@5 → targets {B,C,D}@5, history = both A@2
        let traj = Trajectory::new(
            "p",
            "v",
            vec![
                lab("A", LabFlag::Normal, 2.0),
                lab("A", LabFlag::Abnormal, 2.0),
                lab("B", LabFlag::Normal, 5.0),
                lab("C", LabFlag::Normal, 5.0),
                lab("D", LabFlag::High, 5.0),
            ],
        );
        let inst = extract_instance(&traj).unwrap();
        assert_eq!(inst.target_time, 5.0);
        assert_eq!(inst.targets.len(), 3);
        assert_eq!(inst.history.len(), 2);
        assert!(inst.history.iter().all(|e| e.code() == "A" && e.hours() == 2.0));
    }

    #[test]
    fn augmented_extraction_yields_one_instance_per_group() {
        let traj = Trajectory::new(
            "p",
            "v",
            vec![
                med("M1", 0.5),
                lab("A", LabFlag::Normal, 2.0),
                lab("B", LabFlag::Normal, 5.0),
                lab("C", LabFlag::High, 9.0),
            ],
        );
        let all = extract_instances(&traj, true);
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].target_time, 2.0);
        assert_eq!(all[2].target_time, 9.0);
        let last_only = extract_instances(&traj, false);
        assert_eq!(last_only.len(), 1);
        assert_eq!(last_only[0].target_time, 9.0);
    }

    #[test]
    fn window_keeps_most_recent() {
        let events: Vec<MedicalEvent> =
            (0..10).map(|i| med(&format!("M{i}"), i as f64)).collect();
        assert_eq!(window(&events[..3], 8).len(), 3);
        let kept = window(&events, 4);
        assert_eq!(kept.len(), 4);
        assert_eq!(kept[0].code(), "M6");
        assert_eq!(kept[3].code(), "M9");
        assert_eq!(window(&events, 10).len(), 10);
    }

    fn tiny_vocab() -> Vocabulary {
        let trajs = vec![Trajectory::new(
            "p",
            "v",
            vec![
                med("M1", 1.0),
                lab("A", LabFlag::Normal, 2.0),
                lab("A", LabFlag::Abnormal, 4.0),
                lab("B", LabFlag::High, 4.0),
            ],
        )];
        Vocabulary::build(&trajs, LabelMode::CodeAndFlag).unwrap()
    }

    #[test]
    fn vocabulary_is_sorted_and_reserves_ids() {
        let vocab = tiny_vocab();
        assert_eq!(vocab.input_tokens()[PAD_ID], PAD_TOKEN);
        assert_eq!(vocab.input_tokens()[MASK_ID], MASK_TOKEN);
        assert_eq!(vocab.input_tokens()[UNK_ID], UNK_TOKEN);
        // sorted content tokens after the reserved block
        assert_eq!(vocab.input_tokens()[3..], ["A:abnormal", "A:normal", "B:high", "M1"]);
        assert_eq!(vocab.label_tokens(), ["A:abnormal", "A:normal", "B:high"]);
        assert_eq!(vocab.input_id("nope"), UNK_ID);
        assert_eq!(vocab.input_id("M1"), 6);
    }

    #[test]
    fn encode_layout_contract() {
        let vocab = tiny_vocab();
        let inst = NowcastInstance {
            patient_id: "p".into(),
            visit_id: "v".into(),
            history: vec![med("M1", 1.0), lab("A", LabFlag::Normal, 2.0)],
            target_time: 4.0,
            targets: vec![lab("B", LabFlag::High, 4.0)],
        };
        let batch =
            encode_batch(&[inst], &vocab, 4, MaskTimeMode::TargetTime, LabelMode::CodeAndFlag)
                .unwrap();
        assert_eq!(batch.width, 5);
        assert_eq!(batch.token_ids, vec![6, 4, MASK_ID, PAD_ID, PAD_ID]);
        assert_eq!(batch.real, vec![true, true, true, false, false]);
        assert_eq!(batch.times, vec![1.0, 2.0, 4.0, 0.0, 0.0]);
        assert_eq!(batch.mask_positions, vec![2]);
        // exactly m ones in the label row
        assert_eq!(batch.labels.data().iter().filter(|&&x| x == 1.0).count(), 1);
    }

    #[test]
    fn encode_batch_shapes_with_mixed_lengths() {
        let vocab = tiny_vocab();
        let short = NowcastInstance {
            patient_id: "p".into(),
            visit_id: "v".into(),
            history: vec![med("M1", 1.0)],
            target_time: 4.0,
            targets: vec![lab("A", LabFlag::Abnormal, 4.0)],
        };
        let long = NowcastInstance {
            patient_id: "p".into(),
            visit_id: "v".into(),
            history: vec![med("M1", 0.5), lab("A", LabFlag::Normal, 1.0), med("M1", 2.0)],
            target_time: 4.0,
            targets: vec![lab("A", LabFlag::Abnormal, 4.0), lab("B", LabFlag::High, 4.0)],
        };
        let batch = encode_batch(
            &[short, long],
            &vocab,
            3,
            MaskTimeMode::TargetTime,
            LabelMode::CodeAndFlag,
        )
        .unwrap();
        assert_eq!((batch.batch, batch.width), (2, 4));
        assert_eq!(batch.token_ids.len(), 8);
        assert_eq!(batch.labels.shape(), &[2, 3]);
        // pad-mask count per row is min(len, N) + 1
        for (b, inst_len) in [(0usize, 1usize), (1, 3)] {
            let real = &batch.real[b * 4..(b + 1) * 4];
            assert_eq!(real.iter().filter(|&&r| r).count(), inst_len.min(3) + 1);
        }
    }

    #[test]
    fn mask_time_modes() {
        let vocab = tiny_vocab();
        let inst = NowcastInstance {
            patient_id: "p".into(),
            visit_id: "v".into(),
            history: vec![med("M1", 1.5)],
            target_time: 26.0,
            targets: vec![lab("A", LabFlag::Normal, 26.0)],
        };
        let by_target =
            encode_batch(&[inst.clone()], &vocab, 2, MaskTimeMode::TargetTime, LabelMode::CodeAndFlag)
                .unwrap();
        assert_eq!(by_target.times[1], 26.0);
        let by_last =
            encode_batch(&[inst], &vocab, 2, MaskTimeMode::LastEvent, LabelMode::CodeAndFlag)
                .unwrap();
        assert_eq!(by_last.times[1], 1.5);
    }
}
