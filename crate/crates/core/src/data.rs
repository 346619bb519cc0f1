//! Problem CSV files.
//!
//! Header required; columns are matched by name:
//! `Ha,pHa,La,Hb,pHb,Lb,LotNum,LotShape,Corr,Amb`, optionally `Id` and
//! observed block B-rates `B1..B5`.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::problem::{Block, Corr, LotShape, Problem};

pub const PROBLEM_COLUMNS: [&str; 10] = [
    "Ha", "pHa", "La", "Hb", "pHb", "Lb", "LotNum", "LotShape", "Corr", "Amb",
];
pub const B_COLUMNS: [&str; Block::COUNT] = ["B1", "B2", "B3", "B4", "B5"];
pub const ID_COLUMN: &str = "Id";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("{file}: line {line}: {msg}")]
    Csv { file: String, line: u64, msg: String },
    #[error("{file}: missing column {column}")]
    MissingColumn { file: String, column: String },
    #[error("{file}: line {line}, column {column}: {msg}")]
    Field {
        file: String,
        line: u64,
        column: String,
        msg: String,
    },
    #[error("{file}: line {line}: {msg}")]
    Row { file: String, line: u64, msg: String },
    #[error("{file}: no data rows")]
    Empty { file: String },
}

/// One CSV row: a problem and, when present, its observed B-rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemRecord {
    pub id: String,
    pub problem: Problem,
    pub observed: Option<[f64; Block::COUNT]>,
}

/// A problem with all five observed block B-rates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProblem {
    pub id: String,
    pub problem: Problem,
    pub observed: [f64; Block::COUNT],
}

pub fn read_problems(path: &Path) -> Result<Vec<ProblemRecord>, DataError> {
    let file = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|source| DataError::Io {
        file: file.clone(),
        source,
    })?;
    read_problems_from(f, &file)
}

/// Parses problem rows from any reader; `file` names the source in errors.
pub fn read_problems_from<R: Read>(reader: R, file: &str) -> Result<Vec<ProblemRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Csv {
            file: file.to_string(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| -> Result<usize, DataError> {
        index.get(name).copied().ok_or_else(|| DataError::MissingColumn {
            file: file.to_string(),
            column: name.to_string(),
        })
    };
    let problem_cols = PROBLEM_COLUMNS
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>, _>>()?;
    let has_labels = B_COLUMNS.iter().any(|c| index.contains_key(c));
    let label_cols = if has_labels {
        Some(B_COLUMNS.iter().map(|c| column(c)).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    let id_col = index.get(ID_COLUMN).copied();

    let mut out = Vec::new();
    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv {
            file: file.to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(row_no as u64 + 2);
        let field = |col: usize| rec.get(col).unwrap_or("");
        let field_err = |name: &str, msg: String| DataError::Field {
            file: file.to_string(),
            line,
            column: name.to_string(),
            msg,
        };
        let number = |k: usize| -> Result<f64, DataError> {
            let name = PROBLEM_COLUMNS[k];
            let raw = field(problem_cols[k]);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| field_err(name, format!("invalid number {raw:?}")))
        };

        let lot_num_raw = number(6)?;
        if lot_num_raw < 1.0 || lot_num_raw.fract() != 0.0 {
            return Err(field_err(
                "LotNum",
                format!("expected a positive integer, got {lot_num_raw}"),
            ));
        }
        let lot_shape: LotShape = field(problem_cols[7])
            .parse()
            .map_err(|e: crate::problem::ProblemError| field_err("LotShape", e.to_string()))?;
        let corr = Corr::from_value(number(8)?).map_err(|e| field_err("Corr", e.to_string()))?;
        let amb = number(9)?;
        let ambiguous = if amb == 0.0 {
            false
        } else if amb == 1.0 {
            true
        } else {
            return Err(field_err("Amb", format!("must be 0 or 1, got {amb}")));
        };
        let problem = Problem::new(
            number(0)?,
            number(1)?,
            number(2)?,
            number(3)?,
            number(4)?,
            number(5)?,
            lot_num_raw as u32,
            lot_shape,
            corr,
            ambiguous,
        )
        .map_err(|e| DataError::Row {
            file: file.to_string(),
            line,
            msg: e.to_string(),
        })?;

        let observed = match &label_cols {
            None => None,
            Some(cols) => {
                let mut b = [0.0; Block::COUNT];
                for (k, &col) in cols.iter().enumerate() {
                    let name = B_COLUMNS[k];
                    let raw = field(col);
                    b[k] = raw
                        .parse::<f64>()
                        .ok()
                        .filter(|v| (0.0..=1.0).contains(v))
                        .ok_or_else(|| field_err(name, format!("expected a B-rate in [0, 1], got {raw:?}")))?;
                }
                Some(b)
            }
        };
        let id = match id_col {
            Some(c) => field(c).to_string(),
            None => (row_no + 1).to_string(),
        };
        out.push(ProblemRecord { id, problem, observed });
    }
    if out.is_empty() {
        return Err(DataError::Empty { file: file.to_string() });
    }
    Ok(out)
}

/// Keeps only labeled rows; fails naming the first missing B column if the
/// file carries no labels.
pub fn require_labels(records: Vec<ProblemRecord>, file: &str) -> Result<Vec<LabeledProblem>, DataError> {
    records
        .into_iter()
        .map(|r| match r.observed {
            Some(observed) => Ok(LabeledProblem {
                id: r.id,
                problem: r.problem,
                observed,
            }),
            None => Err(DataError::MissingColumn {
                file: file.to_string(),
                column: B_COLUMNS[0].to_string(),
            }),
        })
        .collect()
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledProblem>, DataError> {
    require_labels(read_problems(path)?, &path.display().to_string())
}

/// The ten problem fields as CSV cells, in [`PROBLEM_COLUMNS`] order.
pub fn problem_cells(p: &Problem) -> [String; 10] {
    [
        p.ha.to_string(),
        p.pha.to_string(),
        p.la.to_string(),
        p.hb.to_string(),
        p.phb.to_string(),
        p.lb.to_string(),
        p.lot_num.to_string(),
        p.lot_shape.token().to_string(),
        p.corr.value().to_string(),
        if p.ambiguous { "1" } else { "0" }.to_string(),
    ]
}

/// Serializes problems (and labels, if every record has them) to CSV text.
pub fn problems_to_csv(records: &[ProblemRecord]) -> String {
    let labeled = !records.is_empty() && records.iter().all(|r| r.observed.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = vec![ID_COLUMN];
    header.extend(PROBLEM_COLUMNS);
    if labeled {
        header.extend(B_COLUMNS);
    }
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let mut row: Vec<String> = vec![r.id.clone()];
        row.extend(problem_cells(&r.problem));
        if let (true, Some(b)) = (labeled, r.observed) {
            row.extend(b.iter().map(|x| format!("{x:.6}")));
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
