use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold: u32,
    pub role: Role,
    pub session_id: String,
}

/// Train/test assignment of session ids for each fold.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FoldSpec {
    pub assignments: Vec<FoldAssignment>,
}

/// The sessions of one fold, borrowed from the caller's list.
#[derive(Debug)]
pub struct FoldSplit<'a, T> {
    pub fold: u32,
    pub train: Vec<&'a T>,
    pub test: Vec<&'a T>,
}

impl FoldSpec {
    /// Two folds over `ids`: fold 1 holds out the last 3/7 of the sessions,
    /// fold 2 the first 2/7 (4:3 and 5:2 for seven sessions).
    pub fn two_fold(ids: &[String]) -> Self {
        let n = ids.len();
        let test1 = ((3 * n) as f64 / 7.0).round() as usize;
        let test2 = ((2 * n) as f64 / 7.0).round() as usize;
        let mut assignments = Vec::with_capacity(2 * n);
        for (i, id) in ids.iter().enumerate() {
            let role = if i >= n - test1 { Role::Test } else { Role::Train };
            assignments.push(FoldAssignment {
                fold: 1,
                role,
                session_id: id.clone(),
            });
        }
        for (i, id) in ids.iter().enumerate() {
            let role = if i < test2 { Role::Test } else { Role::Train };
            assignments.push(FoldAssignment {
                fold: 2,
                role,
                session_id: id.clone(),
            });
        }
        Self { assignments }
    }

    pub fn folds(&self) -> Vec<u32> {
        self.assignments
            .iter()
            .map(|a| a.fold)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Parses `fold,role,session_id` lines (header line required).
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_owned(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "fold,role,session_id" => {}
            _ => return Err(err(1, "header must be 'fold,role,session_id'".into())),
        }
        let mut assignments = Vec::new();
        for (i, raw) in lines {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(line, format!("expected 3 fields, found {}", fields.len())));
            }
            let fold = fields[0]
                .parse()
                .map_err(|_| err(line, format!("invalid fold '{}'", fields[0])))?;
            let role = match fields[1] {
                "train" => Role::Train,
                "test" => Role::Test,
                other => return Err(err(line, format!("invalid role '{other}'"))),
            };
            if fields[2].is_empty() {
                return Err(err(line, "empty session id".into()));
            }
            assignments.push(FoldAssignment {
                fold,
                role,
                session_id: fields[2].to_owned(),
            });
        }
        Ok(Self { assignments })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("fold,role,session_id\n");
        for a in &self.assignments {
            out.push_str(&format!("{},{},{}\n", a.fold, a.role, a.session_id));
        }
        out
    }
}

/// Splits `sessions` per fold, checking that every fold's train and test
/// sets are disjoint and together cover every session exactly once.
pub fn split_folds<'a, T>(
    sessions: &'a [T],
    spec: &FoldSpec,
    id_of: impl Fn(&T) -> &str,
) -> Result<Vec<FoldSplit<'a, T>>> {
    let all: BTreeSet<&str> = sessions.iter().map(&id_of).collect();
    if all.len() != sessions.len() {
        return Err(Error::Invalid("duplicate session ids".into()));
    }
    let folds = spec.folds();
    if folds.is_empty() {
        return Err(Error::Invalid("fold spec is empty".into()));
    }
    let mut splits = Vec::with_capacity(folds.len());
    for fold in folds {
        let mut train = BTreeSet::new();
        let mut test = BTreeSet::new();
        for a in spec.assignments.iter().filter(|a| a.fold == fold) {
            if !all.contains(a.session_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "fold {fold}: unknown session '{}'",
                    a.session_id
                )));
            }
            let (mine, other) = match a.role {
                Role::Train => (&mut train, &test),
                Role::Test => (&mut test, &train),
            };
            if other.contains(a.session_id.as_str()) || !mine.insert(a.session_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "fold {fold}: session '{}' assigned more than once",
                    a.session_id
                )));
            }
        }
        if let Some(missing) = all.iter().find(|id| !train.contains(*id) && !test.contains(*id)) {
            return Err(Error::Invalid(format!(
                "fold {fold}: session '{missing}' not assigned"
            )));
        }
        splits.push(FoldSplit {
            fold,
            train: sessions.iter().filter(|s| train.contains(id_of(s))).collect(),
            test: sessions.iter().filter(|s| test.contains(id_of(s))).collect(),
        });
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn seven_sessions_four_three_and_five_two() {
        let sessions = ids(7);
        let spec = FoldSpec::two_fold(&sessions);
        let splits = split_folds(&sessions, &spec, |s| s.as_str()).unwrap();
        assert_eq!(splits.len(), 2);
        assert_eq!((splits[0].train.len(), splits[0].test.len()), (4, 3));
        assert_eq!((splits[1].train.len(), splits[1].test.len()), (5, 2));
    }

    #[test]
    fn overlap_is_rejected() {
        let sessions = ids(3);
        let text = "fold,role,session_id\n1,train,s0\n1,train,s1\n1,test,s1\n1,test,s2\n";
        let spec = FoldSpec::parse(text, Path::new("f.csv")).unwrap();
        assert!(split_folds(&sessions, &spec, |s| s.as_str()).is_err());
    }

    #[test]
    fn omission_and_unknown_rejected() {
        let sessions = ids(3);
        let spec = FoldSpec::parse("fold,role,session_id\n1,train,s0\n1,test,s1\n", Path::new("f"))
            .unwrap();
        assert!(split_folds(&sessions, &spec, |s| s.as_str()).is_err());
        let spec = FoldSpec::parse(
            "fold,role,session_id\n1,train,s0\n1,test,s1\n1,test,s2\n1,test,s9\n",
            Path::new("f"),
        )
        .unwrap();
        assert!(split_folds(&sessions, &spec, |s| s.as_str()).is_err());
    }

    #[test]
    fn text_round_trip() {
        let spec = FoldSpec::two_fold(&ids(5));
        let back = FoldSpec::parse(&spec.to_text(), Path::new("x")).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = FoldSpec::parse("fold,role,session_id\n1,train,s0\nx,test,s1\n", Path::new("f"));
        assert!(matches!(e, Err(Error::Parse { line: 3, .. })));
        let e = FoldSpec::parse("1,train,s0\n", Path::new("f"));
        assert!(matches!(e, Err(Error::Parse { line: 1, .. })));
    }
}
