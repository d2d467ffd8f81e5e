//! File formats: line-delimited trajectory records (one self-describing
//! JSON object per line) and `token<TAB>id` vocabulary files. Both are
//! byte-stable: serialization order is fixed and floats use the shortest
//! round-trip representation.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use trajcast_core::data::{EventType, LabFlag, MedicalEvent, Trajectory};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    code: String,
    #[serde(rename = "type")]
    event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flag: Option<String>,
    t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRecord {
    patient_id: String,
    visit_id: String,
    events: Vec<EventRecord>,
}

fn event_from_record(rec: EventRecord, path: &Path, line: usize) -> Result<MedicalEvent> {
    let event_type = EventType::parse(&rec.event_type).ok_or_else(|| CliError::Parse {
        path: path.to_path_buf(),
        line,
        detail: format!("unknown event type {:?} on code {}", rec.event_type, rec.code),
    })?;
    let flag = match rec.flag {
        None => None,
        Some(f) => Some(LabFlag::parse(&f).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line,
            detail: format!("unknown flag {f:?} on code {}", rec.code),
        })?),
    };
    MedicalEvent::new(rec.code, event_type, flag, rec.t).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line,
        detail: e.to_string(),
    })
}

/// Parse a trajectory file; events are re-sorted by timestamp, malformed
/// lines are reported with their line number.
pub fn parse_trajectory_file(path: &Path) -> Result<Vec<Trajectory>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord =
            serde_json::from_str(&line).map_err(|e| CliError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                detail: e.to_string(),
            })?;
        let mut events = Vec::with_capacity(record.events.len());
        for ev in record.events {
            events.push(event_from_record(ev, path, line_no)?);
        }
        out.push(Trajectory::new(record.patient_id, record.visit_id, events));
    }
    Ok(out)
}

fn record_of(traj: &Trajectory) -> TrajectoryRecord {
    TrajectoryRecord {
        patient_id: traj.patient_id().to_string(),
        visit_id: traj.visit_id().to_string(),
        events: traj
            .events()
            .iter()
            .map(|ev| EventRecord {
                code: ev.code().to_string(),
                event_type: ev.event_type().as_str().to_string(),
                flag: ev.flag().map(|f| f.as_str().to_string()),
                t: ev.hours(),
            })
            .collect(),
    }
}

pub fn trajectories_to_string(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for traj in trajectories {
        out.push_str(&serde_json::to_string(&record_of(traj)).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Write atomically: temp file in the target directory, then rename.
pub fn write_trajectory_file(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    atomic_write(path, trajectories_to_string(trajectories).as_bytes())
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
        f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// `token<TAB>id` lines, one per token, in ascending id order.
pub fn vocab_to_string(tokens: &[String]) -> String {
    let mut out = String::new();
    for (id, tok) in tokens.iter().enumerate() {
        out.push_str(tok);
        out.push('\t');
        out.push_str(&id.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_vocab_str(content: &str, path: &Path) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (tok, id) = line.rsplit_once('\t').ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            detail: "expected token<TAB>id".into(),
        })?;
        let id: usize = id.parse().map_err(|_| CliError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            detail: format!("id {id:?} is not an integer"),
        })?;
        if id != tokens.len() {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                detail: format!("id {id} out of order, expected {}", tokens.len()),
            });
        }
        tokens.push(tok.to_string());
    }
    Ok(tokens)
}

pub fn write_vocab_file(path: &Path, tokens: &[String]) -> Result<()> {
    atomic_write(path, vocab_to_string(tokens).as_bytes())
}

pub fn read_vocab_file(path: &Path) -> Result<Vec<String>> {
    let content = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_vocab_str(&content, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_minimal_record() {
        let f = write_temp(
            r#"{"patient_id":"p1","visit_id":"v1","events":[{"code":"L1","type":"lab","flag":"high","t":2.0}]}"#,
        );
        let trajs = parse_trajectory_file(f.path()).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].events().len(), 1);
        assert_eq!(trajs[0].events()[0].flag(), Some(LabFlag::High));
    }

    #[test]
    fn sorts_events_on_ingest() {
        let f = write_temp(
            r#"{"patient_id":"p1","visit_id":"v1","events":[{"code":"A","type":"medication","t":5.0},{"code":"B","type":"medication","t":3.0}]}"#,
        );
        let trajs = parse_trajectory_file(f.path()).unwrap();
        let times: Vec<f64> = trajs[0].events().iter().map(|e| e.hours()).collect();
        assert_eq!(times, vec![3.0, 5.0]);
    }

    #[test]
    fn flag_on_medication_is_an_error_naming_the_line() {
        let f = write_temp(
            r#"{"patient_id":"p1","visit_id":"v1","events":[{"code":"M1","type":"medication","flag":"high","t":1.0}]}"#,
        );
        let err = parse_trajectory_file(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":1:"), "missing line number: {msg}");
        assert!(msg.contains("not allowed"), "unexpected message: {msg}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let f = write_temp("{\"patient_id\":\"p1\"\nnot json\n");
        let err = parse_trajectory_file(f.path()).unwrap_err();
        assert!(err.to_string().contains(":1:"));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_trajectory_file(Path::new("/nonexistent/file.jsonl")).unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
    }

    #[test]
    fn vocab_round_trip() {
        let tokens = vec!["<pad>".to_string(), "<mask>".to_string(), "A:high".to_string()];
        let s = vocab_to_string(&tokens);
        assert_eq!(s, "<pad>\t0\n<mask>\t1\nA:high\t2\n");
        let parsed = parse_vocab_str(&s, Path::new("mem")).unwrap();
        assert_eq!(parsed, tokens);
    }
}
