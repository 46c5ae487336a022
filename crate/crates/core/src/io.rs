//! JSON Lines readers and writers for trajectories, segments, boundary sets
//! and loss traces.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::types::{BoundaryReason, BoundarySet, EventSet, Segment, Step, Token, Trajectory};

#[derive(Serialize, Deserialize)]
struct Header {
    id: String,
    obs_vocab: usize,
    act_vocab: usize,
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    t: usize,
    obs: Token,
    act: Token,
    events: EventSet,
    skill: Option<u32>,
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes a header line followed by one record per step.
pub fn write_trajectory<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    write_line(
        &mut w,
        &Header {
            id: traj.id.clone(),
            obs_vocab: traj.obs_vocab,
            act_vocab: traj.act_vocab,
        },
    )?;
    for s in &traj.steps {
        write_line(
            &mut w,
            &StepRecord {
                t: s.index,
                obs: s.obs,
                act: s.act,
                events: s.events.clone(),
                skill: s.skill,
            },
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory and checks it against its own invariants.
pub fn read_trajectory<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut lines = r
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
    let header: Header = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Contract("trajectory file is empty".into())),
    };
    let mut steps = Vec::new();
    for line in lines {
        let rec: StepRecord = serde_json::from_str(&line?)?;
        steps.push(Step {
            index: rec.t,
            obs: rec.obs,
            act: rec.act,
            events: rec.events,
            skill: rec.skill,
        });
    }
    let traj = Trajectory {
        id: header.id,
        obs_vocab: header.obs_vocab,
        act_vocab: header.act_vocab,
        steps,
    };
    traj.ensure_valid()?;
    Ok(traj)
}

pub fn write_jsonl<W: Write, T: Serialize>(items: &[T], mut w: W) -> Result<()> {
    for item in items {
        write_line(&mut w, item)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_segments<W: Write>(segments: &[Segment], w: W) -> Result<()> {
    write_jsonl(segments, w)
}

pub fn read_segments<R: BufRead>(r: R) -> Result<Vec<Segment>> {
    read_jsonl(r)
}

pub fn write_boundary_sets<W: Write>(sets: &[BoundarySet], w: W) -> Result<()> {
    write_jsonl(sets, w)
}

pub fn read_boundary_sets<R: BufRead>(r: R) -> Result<Vec<BoundarySet>> {
    read_jsonl(r)
}

#[derive(Serialize)]
struct LossRecord {
    t: usize,
    /// `null` when the loss is infinite.
    loss: Option<f64>,
    boundary: bool,
    reason: Option<BoundaryReason>,
}

/// One `{"t", "loss", "boundary", "reason"}` line per step.
pub fn write_loss_trace<W: Write>(detection: &Detection, mut w: W) -> Result<()> {
    let mut bounds = detection.boundaries.boundaries().iter().peekable();
    for l in &detection.losses {
        let here = bounds.next_if(|b| b.index == l.index);
        write_line(
            &mut w,
            &LossRecord {
                t: l.index,
                loss: l.loss.is_finite().then_some(l.loss),
                boundary: here.is_some(),
                reason: here.and_then(|b| b.reason),
            },
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect_boundaries, IndicatorTrack};
    use crate::predictor::PolicyTable;
    use crate::types::DetectorConfig;

    fn sample() -> Trajectory {
        let mut t = Trajectory::from_tokens("a-1", 3, 2, &[0, 2, 1], &[1, 0, 1]);
        t.steps[1].events.insert("mine_block:stone");
        t.steps[1].events.insert("craft_item:stick");
        t.steps[2].skill = Some(4);
        t
    }

    #[test]
    fn trajectory_round_trip() {
        let mut buf = Vec::new();
        write_trajectory(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"id":"a-1","obs_vocab":3,"act_vocab":2}"#);
        assert_eq!(
            lines[2],
            r#"{"t":1,"obs":2,"act":0,"events":["craft_item:stick","mine_block:stone"],"skill":null}"#
        );
        assert_eq!(read_trajectory(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn invalid_trajectory_rejected() {
        let text = "{\"id\":\"x\",\"obs_vocab\":1,\"act_vocab\":1}\n{\"t\":0,\"obs\":0,\"act\":3,\"events\":[],\"skill\":null}\n";
        assert!(matches!(
            read_trajectory(text.as_bytes()),
            Err(Error::Contract(_))
        ));
        assert!(read_trajectory(&b""[..]).is_err());
    }

    #[test]
    fn segments_round_trip() {
        let segs = vec![
            Segment {
                trajectory_id: "a".into(),
                start: 0,
                end: 5,
                reason: None,
            },
            Segment {
                trajectory_id: "a".into(),
                start: 5,
                end: 9,
                reason: Some(BoundaryReason::Loss),
            },
        ];
        let mut buf = Vec::new();
        write_segments(&segs, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains(r#""reason":"loss""#));
        assert_eq!(read_segments(&buf[..]).unwrap(), segs);
    }

    #[test]
    fn boundary_sets_validate_on_read() {
        let bad = r#"{"trajectory_id":"a","boundaries":[{"index":4,"reason":null},{"index":2,"reason":null}]}"#;
        assert!(read_boundary_sets(bad.as_bytes()).is_err());
    }

    #[test]
    fn loss_trace_lines() {
        let pi = PolicyTable::from_rows(&[vec![0.9, 0.1]]).unwrap();
        let t = Trajectory::from_tokens("a", 1, 2, &[0; 4], &[0, 0, 0, 1]);
        let det = detect_boundaries(
            &t,
            &mut pi.clone(),
            &DetectorConfig::loss_only(1.0, 8),
            &IndicatorTrack::none(4),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_loss_trace(&det, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with(r#"{"t":3,"loss":2.302"#), "{last}");
        assert!(
            last.ends_with(r#""boundary":true,"reason":"loss"}"#),
            "{last}"
        );
    }
}
