use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::GazeVector;
use crate::error::{Error, Result};

/// Frame rate of the recordings, frames per second.
pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FacilitatorType {
    Teacher,
    Musician,
    MusicTeacher,
    Synthetic,
}

impl FacilitatorType {
    pub const ALL: [FacilitatorType; 4] = [
        FacilitatorType::Teacher,
        FacilitatorType::Musician,
        FacilitatorType::MusicTeacher,
        FacilitatorType::Synthetic,
    ];

    /// Machine-readable key.
    pub fn key(self) -> &'static str {
        match self {
            FacilitatorType::Teacher => "teacher",
            FacilitatorType::Musician => "musician",
            FacilitatorType::MusicTeacher => "music_teacher",
            FacilitatorType::Synthetic => "synthetic",
        }
    }

    /// Row label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            FacilitatorType::Teacher => "Teacher",
            FacilitatorType::Musician => "Musician",
            FacilitatorType::MusicTeacher => "M. Teacher",
            FacilitatorType::Synthetic => "Synthetic",
        }
    }
}

impl fmt::Display for FacilitatorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for FacilitatorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.key() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown facilitator type '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub facilitator: GazeVector,
    pub participants: Vec<GazeVector>,
    /// Facilitator gaze velocity in rad/s.
    pub velocity: GazeVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecording {
    pub id: String,
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub participant_count: usize,
    pub facilitator_type: FacilitatorType,
    /// Set once [`compute_velocities`] has filled the frame velocities.
    pub velocities_computed: bool,
}

impl SessionRecording {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks frame numbering, participant counts and finiteness.
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Invalid(format!("fps must be positive, got {}", self.fps)));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i {
                return Err(Error::Invalid(format!(
                    "session {}: frame {} has index {}",
                    self.id, i, f.index
                )));
            }
            if f.participants.len() != self.participant_count {
                return Err(Error::Dimension {
                    context: "participants per frame",
                    expected: self.participant_count,
                    actual: f.participants.len(),
                });
            }
            if !f.facilitator.is_finite()
                || !f.velocity.is_finite()
                || f.participants.iter().any(|p| !p.is_finite())
            {
                return Err(Error::NonFinite(format!("session {} frame {i}", self.id)));
            }
        }
        Ok(())
    }
}

/// Column names of a session file with `p` participants.
pub fn session_header(p: usize) -> Vec<String> {
    let mut cols = vec!["frame".to_owned(), "fac_yaw".into(), "fac_pitch".into()];
    for i in 1..=p {
        cols.push(format!("p{i}_yaw"));
        cols.push(format!("p{i}_pitch"));
    }
    cols
}

/// Reads a session CSV.
///
/// Angles are canonicalized (yaw wrapped to `(-pi, pi]`); velocities are left
/// at zero until [`compute_velocities`] runs. The session id is the file stem.
pub fn load_session(path: &Path, expected_participants: usize) -> Result<SessionRecording> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 3 || (header.len() - 3) % 2 != 0 {
        return Err(parse_err(1, format!("unexpected column count {}", header.len())));
    }
    let file_participants = (header.len() - 3) / 2;
    if file_participants != expected_participants {
        return Err(Error::Dimension {
            context: "session participant count",
            expected: expected_participants,
            actual: file_participants,
        });
    }
    let expected_header = session_header(expected_participants);
    if header.iter().ne(expected_header.iter().map(String::as_str)) {
        return Err(parse_err(
            1,
            format!("header must be '{}'", expected_header.join(",")),
        ));
    }

    let mut frames = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        let index: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("invalid frame index '{}'", &record[0])))?;
        if index != frames.len() {
            return Err(parse_err(
                line,
                format!("frame index {index}, expected {}", frames.len()),
            ));
        }
        let mut values = Vec::with_capacity(record.len() - 1);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("invalid number '{field}'")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value '{field}'")));
            }
            values.push(v);
        }
        let gaze = |k: usize| {
            GazeVector::new(values[2 * k], values[2 * k + 1])
                .canonicalize()
                .map_err(|e| parse_err(line, e.to_string()))
        };
        let facilitator = gaze(0)?;
        let participants = (1..=expected_participants)
            .map(gaze)
            .collect::<Result<Vec<_>>>()?;
        frames.push(Frame {
            index,
            facilitator,
            participants,
            velocity: GazeVector::ZERO,
        });
    }

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(SessionRecording {
        id,
        frames,
        fps: DEFAULT_FPS,
        participant_count: expected_participants,
        facilitator_type: FacilitatorType::Synthetic,
        velocities_computed: false,
    })
}

/// Writes a session in the CSV layout read by [`load_session`].
pub fn write_session(path: &Path, session: &SessionRecording) -> Result<()> {
    let mut out = String::new();
    out.push_str(&session_header(session.participant_count).join(","));
    out.push('\n');
    for f in &session.frames {
        out.push_str(&format!("{},{},{}", f.index, f.facilitator.yaw, f.facilitator.pitch));
        for p in &f.participants {
            out.push_str(&format!(",{},{}", p.yaw, p.pitch));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Fills per-frame facilitator velocities by backward differences.
///
/// The first frame has zero velocity.
pub fn compute_velocities(mut session: SessionRecording) -> Result<SessionRecording> {
    if !(session.fps > 0.0 && session.fps.is_finite()) {
        return Err(Error::Invalid(format!(
            "fps must be positive, got {}",
            session.fps
        )));
    }
    let fps = session.fps;
    let mut prev: Option<GazeVector> = None;
    for frame in &mut session.frames {
        frame.velocity = match prev {
            None => GazeVector::ZERO,
            Some(p) => (frame.facilitator - p) * fps,
        };
        prev = Some(frame.facilitator);
    }
    session.velocities_computed = true;
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn header(p: usize) -> String {
        session_header(p).join(",")
    }

    fn row(i: usize, p: usize) -> String {
        let mut s = format!("{i},0.{i},-0.1");
        for k in 0..p {
            s.push_str(&format!(",0.{k},0.0{k}"));
        }
        s
    }

    #[test]
    fn parses_three_rows() {
        let text = format!("{}\n{}\n{}\n{}\n", header(5), row(0, 5), row(1, 5), row(2, 5));
        let f = write_tmp(&text);
        let s = load_session(f.path(), 5).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.frames.iter().all(|fr| fr.participants.len() == 5));
        assert_eq!(s.frames[2].facilitator, GazeVector::new(0.2, -0.1));
        assert_eq!(s.frames[1].participants[3], GazeVector::new(0.3, 0.03));
        assert!(!s.velocities_computed);
    }

    #[test]
    fn nan_row_names_line() {
        let bad = row(1, 5).replacen("0.1", "NaN", 1);
        let text = format!("{}\n{}\n{}\n", header(5), row(0, 5), bad);
        let f = write_tmp(&text);
        match load_session(f.path(), 5) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_participant_count() {
        let text = format!("{}\n{}\n", header(3), row(0, 3));
        let f = write_tmp(&text);
        assert!(matches!(
            load_session(f.path(), 5),
            Err(Error::Dimension { expected: 5, actual: 3, .. })
        ));
    }

    #[test]
    fn short_row_and_bad_index() {
        let text = format!("{}\n{}\n1,0.1\n", header(2), row(0, 2));
        let f = write_tmp(&text);
        assert!(matches!(load_session(f.path(), 2), Err(Error::Parse { line: 3, .. })));
        let text = format!("{}\n{}\n", header(2), row(4, 2));
        let f = write_tmp(&text);
        assert!(matches!(load_session(f.path(), 2), Err(Error::Parse { line: 2, .. })));
    }

    fn session_from(yaws: &[f64]) -> SessionRecording {
        SessionRecording {
            id: "s".into(),
            frames: yaws
                .iter()
                .enumerate()
                .map(|(i, &y)| Frame {
                    index: i,
                    facilitator: GazeVector::new(y, 0.5),
                    participants: vec![],
                    velocity: GazeVector::new(9.0, 9.0),
                })
                .collect(),
            fps: DEFAULT_FPS,
            participant_count: 0,
            facilitator_type: FacilitatorType::Synthetic,
            velocities_computed: false,
        }
    }

    #[test]
    fn constant_gaze_zero_velocity() {
        let s = compute_velocities(session_from(&[0.2; 6])).unwrap();
        assert!(s.frames.iter().all(|f| f.velocity == GazeVector::ZERO));
    }

    #[test]
    fn step_of_a_tenth_is_three_rad_per_second() {
        let s = compute_velocities(session_from(&[0.0, 0.1])).unwrap();
        assert_eq!(s.frames[0].velocity, GazeVector::ZERO);
        assert!((s.frames[1].velocity.yaw - 3.0).abs() < 1e-12);
        assert_eq!(s.frames[1].velocity.pitch, 0.0);
    }

    #[test]
    fn write_then_load_round_trip() {
        let mut s = session_from(&[0.1, -0.25, 0.3]);
        s.participant_count = 1;
        for f in &mut s.frames {
            f.participants = vec![GazeVector::new(0.7, -0.05)];
            f.velocity = GazeVector::ZERO;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_session(&path, &s).unwrap();
        let back = load_session(&path, 1).unwrap();
        assert_eq!(back, s);
    }
}
