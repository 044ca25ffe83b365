use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::evaluate::{type_means, PolicyEvaluation};
use crate::data::FacilitatorType;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowGroup {
    Type(FacilitatorType),
    Average,
}

impl RowGroup {
    pub fn key(self) -> &'static str {
        match self {
            RowGroup::Type(t) => t.key(),
            RowGroup::Average => "average",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RowGroup::Type(t) => t.label(),
            RowGroup::Average => "Average",
        }
    }
}

impl FromStr for RowGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("average") {
            Ok(RowGroup::Average)
        } else {
            s.parse().map(RowGroup::Type)
        }
    }
}

/// A report column: an evaluated policy or externally reported numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    Policy(PolicyKind),
    Reported,
}

impl Column {
    pub fn key(self) -> &'static str {
        match self {
            Column::Policy(k) => k.key(),
            Column::Reported => "reported",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Column::Policy(k) => k.label(),
            Column::Reported => "Reported",
        }
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("reported") {
            Ok(Column::Reported)
        } else {
            s.parse().map(Column::Policy)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub group: RowGroup,
    pub column: Column,
    pub episodes: usize,
    pub asm: Option<f64>,
    pub r2_pitch: Option<f64>,
    pub r2_yaw: Option<f64>,
    pub sparc_pitch: Option<f64>,
    pub sparc_yaw: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub asm: bool,
    pub r2: bool,
    pub sparc: bool,
}

impl MetricSet {
    pub const ALL: MetricSet = MetricSet {
        asm: true,
        r2: true,
        sparc: true,
    };
}

impl FromStr for MetricSet {
    type Err = Error;

    /// Comma-separated subset of `asm`, `r2`, `sparc`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = MetricSet {
            asm: false,
            r2: false,
            sparc: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "asm" => set.asm = true,
                "r2" => set.r2 = true,
                "sparc" => set.sparc = true,
                "all" => set = MetricSet::ALL,
                other => return Err(Error::Invalid(format!("unknown metric '{other}'"))),
            }
        }
        if set == (MetricSet { asm: false, r2: false, sparc: false }) {
            return Err(Error::Invalid("no metrics selected".into()));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

pub const CSV_HEADER: &str = "facilitator,policy,episodes,asm,r2_pitch,r2_yaw,sparc_pitch,sparc_yaw";

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    /// One row per facilitator type and policy, then one Average row per
    /// policy holding the mean of that policy's type rows.
    pub fn aggregate(evaluations: &[PolicyEvaluation]) -> Self {
        let types: BTreeSet<FacilitatorType> = evaluations
            .iter()
            .flat_map(|e| e.episodes.iter().map(|r| r.facilitator_type))
            .collect();
        let mut per_policy = Vec::new();
        for ev in evaluations {
            let rs = &ev.episodes;
            let asm = type_means(rs, |r| Some(if r.success { 1.0 } else { 0.0 }));
            let r2p = type_means(rs, |r| r.r2[0]);
            let r2y = type_means(rs, |r| r.r2[1]);
            let sp = type_means(rs, |r| r.sparc[0]);
            let sy = type_means(rs, |r| r.sparc[1]);
            let rows: Vec<MetricsRow> = types
                .iter()
                .map(|&t| MetricsRow {
                    group: RowGroup::Type(t),
                    column: Column::Policy(ev.kind),
                    episodes: rs.iter().filter(|r| r.facilitator_type == t).count(),
                    asm: asm.get(&t).copied(),
                    r2_pitch: r2p.get(&t).copied(),
                    r2_yaw: r2y.get(&t).copied(),
                    sparc_pitch: sp.get(&t).copied(),
                    sparc_yaw: sy.get(&t).copied(),
                })
                .collect();
            per_policy.push((ev.kind, rows));
        }
        let mut report = MetricsReport::default();
        for &t in &types {
            for (_, rows) in &per_policy {
                report
                    .rows
                    .extend(rows.iter().filter(|r| r.group == RowGroup::Type(t)).cloned());
            }
        }
        for (kind, rows) in &per_policy {
            report.rows.push(average_row(Column::Policy(*kind), rows));
        }
        report
    }

    pub fn columns(&self) -> Vec<Column> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.column) {
                seen.push(r.column);
            }
        }
        seen.sort();
        seen
    }

    pub fn groups(&self) -> Vec<RowGroup> {
        let set: BTreeSet<RowGroup> = self.rows.iter().map(|r| r.group).collect();
        set.into_iter().collect()
    }

    pub fn get(&self, group: RowGroup, column: Column) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.group == group && r.column == column)
    }

    /// Blanks every metric outside `set`.
    pub fn filtered(&self, set: MetricSet) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| MetricsRow {
                asm: r.asm.filter(|_| set.asm),
                r2_pitch: r.r2_pitch.filter(|_| set.r2),
                r2_yaw: r.r2_yaw.filter(|_| set.r2),
                sparc_pitch: r.sparc_pitch.filter(|_| set.sparc),
                sparc_yaw: r.sparc_yaw.filter(|_| set.sparc),
                ..r.clone()
            })
            .collect();
        MetricsReport { rows }
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.group.key(),
                r.column.key(),
                r.episodes,
                cell(r.asm),
                cell(r.r2_pitch),
                cell(r.r2_yaw),
                cell(r.sparc_pitch),
                cell(r.sparc_yaw)
            );
        }
        out
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != CSV_HEADER {
            return Err(parse_err(1, format!("expected header '{CSV_HEADER}'")));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            let opt = |k: usize| -> Result<Option<f64>> {
                let s = &rec[k];
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| parse_err(line, format!("column {}: {e}", k + 1)))
            };
            rows.push(MetricsRow {
                group: rec[0].parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
                column: rec[1].parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
                episodes: rec[2]
                    .parse()
                    .map_err(|e| parse_err(line, format!("episodes: {e}")))?,
                asm: opt(3)?,
                r2_pitch: opt(4)?,
                r2_yaw: opt(5)?,
                sparc_pitch: opt(6)?,
                sparc_yaw: opt(7)?,
            });
        }
        let report = MetricsReport { rows };
        report.validate().map_err(|e| parse_err(0, e.to_string()))?;
        Ok(report)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.asm.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Invalid(format!("asm outside [0, 1] in {} row", r.group.label())));
            }
            if [r.sparc_pitch, r.sparc_yaw].iter().flatten().any(|&v| v > 0.0) {
                return Err(Error::Invalid(format!("positive sparc in {} row", r.group.label())));
            }
            if [r.r2_pitch, r.r2_yaw].iter().flatten().any(|&v| v > 1.0) {
                return Err(Error::Invalid(format!("r2 above 1 in {} row", r.group.label())));
            }
        }
        let mut keys = BTreeSet::new();
        for r in &self.rows {
            if !keys.insert((r.group, r.column)) {
                return Err(Error::Invalid(format!(
                    "duplicate row {}/{}",
                    r.group.key(),
                    r.column.key()
                )));
            }
        }
        Ok(())
    }

    /// Text tables: success, R² and SPARC, each only when some value exists.
    pub fn render_text(&self) -> String {
        let groups = self.groups();
        let columns = self.columns();
        let mut out = String::new();
        let any = |f: &dyn Fn(&MetricsRow) -> Option<f64>, c: Column| {
            self.rows.iter().any(|r| r.column == c && f(r).is_some())
        };

        let asm_cols: Vec<Column> = columns.iter().copied().filter(|&c| any(&|r| r.asm, c)).collect();
        if !asm_cols.is_empty() {
            let header: Vec<String> = asm_cols.iter().map(|c| c.label().to_string()).collect();
            let body = groups
                .iter()
                .map(|&g| {
                    let cells = asm_cols
                        .iter()
                        .map(|&c| cell(self.get(g, c).and_then(|r| r.asm)))
                        .collect();
                    (g.label(), cells)
                })
                .collect();
            out += &table("Average success metric", &[header], body);
        }

        type Pair = (&'static str, fn(&MetricsRow) -> Option<f64>, fn(&MetricsRow) -> Option<f64>);
        let paired: [Pair; 2] = [
            ("R²", |r| r.r2_pitch, |r| r.r2_yaw),
            ("SPARC", |r| r.sparc_pitch, |r| r.sparc_yaw),
        ];
        for (title, pitch, yaw) in paired {
            let cols: Vec<Column> = columns
                .iter()
                .copied()
                .filter(|&c| any(&pitch, c) || any(&yaw, c))
                .collect();
            if cols.is_empty() {
                continue;
            }
            let top = cols
                .iter()
                .flat_map(|c| [c.label().to_string(), String::new()])
                .collect();
            let sub = cols
                .iter()
                .flat_map(|_| ["Pitch".to_string(), "Yaw".to_string()])
                .collect();
            let body = groups
                .iter()
                .map(|&g| {
                    let cells = cols
                        .iter()
                        .flat_map(|&c| {
                            let r = self.get(g, c);
                            [cell(r.and_then(pitch)), cell(r.and_then(yaw))]
                        })
                        .collect();
                    (g.label(), cells)
                })
                .collect();
            if !out.is_empty() {
                out.push('\n');
            }
            out += &table(title, &[top, sub], body);
        }
        out
    }
}

fn average_row(column: Column, rows: &[MetricsRow]) -> MetricsRow {
    MetricsRow {
        group: RowGroup::Average,
        column,
        episodes: rows.iter().map(|r| r.episodes).sum(),
        asm: mean(rows.iter().filter_map(|r| r.asm)),
        r2_pitch: mean(rows.iter().filter_map(|r| r.r2_pitch)),
        r2_yaw: mean(rows.iter().filter_map(|r| r.r2_yaw)),
        sparc_pitch: mean(rows.iter().filter_map(|r| r.sparc_pitch)),
        sparc_yaw: mean(rows.iter().filter_map(|r| r.sparc_yaw)),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Fixed-width table with a rule under the header and above the Average row.
fn table(title: &str, header: &[Vec<String>], body: Vec<(&str, Vec<String>)>) -> String {
    let ncols = header[0].len();
    let first = body
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain([title.chars().count()])
        .max()
        .unwrap_or(0);
    let mut widths = vec![0; ncols];
    for row in header.iter().chain(body.iter().map(|(_, c)| c)) {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let pad_left = |s: &str, w: usize| format!("{}{s}", " ".repeat(w - s.chars().count()));
    let pad_right = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let total = first + widths.iter().map(|w| w + 2).sum::<usize>();
    let rule = "-".repeat(total);
    let mut out = String::new();
    for (i, h) in header.iter().enumerate() {
        let label = if i == 0 { title } else { "" };
        let mut line = pad_right(label, first);
        for (c, w) in h.iter().zip(&widths) {
            line += "  ";
            line += &pad_left(c, *w);
        }
        out += line.trim_end();
        out.push('\n');
    }
    out += &rule;
    out.push('\n');
    for (label, cells) in body {
        if label == RowGroup::Average.label() {
            out += &rule;
            out.push('\n');
        }
        let mut line = pad_right(label, first);
        for (c, w) in cells.iter().zip(&widths) {
            line += "  ";
            line += &pad_left(c, *w);
        }
        out += &line;
        out.push('\n');
    }
    out
}

/// Writes one trajectory CSV per evaluated episode into `dir`.
pub fn write_plot_data(dir: &Path, evaluations: &[PolicyEvaluation]) -> Result<usize> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = 0;
    for ev in evaluations {
        for r in &ev.episodes {
            let name = format!("{}_{}_{:06}.csv", ev.kind.key(), r.session_id, r.start_frame);
            r.trajectory.write_csv(&dir.join(name))?;
            written += 1;
        }
    }
    Ok(written)
}
