//! File formats: model, codebook, schema and threshold JSON; symbol, feature,
//! report and table CSV.
//!
//! States are 0-based in memory and 1-based in files. Outputs are written to
//! a sibling temporary file and renamed into place, so a failed run never
//! leaves a partial file behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detector::{TimedStream, WindowReport};
use crate::error::{Error, Result};
use crate::markov::{pair_encode, Alphabet, TransitionModel};
use crate::quantizer::{FeatureRecord, FeatureSchema};
use crate::threshold::Reference;

/// On-disk transition model: `q` is the row-major `N × N` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n_states: usize,
    pub q: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_model(model: &TransitionModel) -> Self {
        let q = model.q();
        Self {
            n_states: q.nrows(),
            q: q.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn to_model(&self) -> Result<TransitionModel> {
        let n = self.n_states;
        if self.q.len() != n || self.q.iter().any(|r| r.len() != n) {
            return Err(Error::Input(format!(
                "model declares n_states={n} but q is not {n}×{n}"
            )));
        }
        let flat: Vec<f64> = self.q.iter().flatten().copied().collect();
        TransitionModel::from_q(DMatrix::from_row_slice(n, n, &flat))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Runs `f` against a temporary sibling of `path`, then renames it into place.
pub fn write_atomic<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("not a file path: {}", path.display())))?;
    tmp.set_file_name(format!(".{}.partial", name.to_string_lossy()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn read_model(path: &Path) -> Result<TransitionModel> {
    read_json::<ModelFile>(path)?.to_model()
}

pub fn write_model(path: &Path, model: &TransitionModel) -> Result<()> {
    write_json(path, &ModelFile::from_model(model))
}

pub fn read_schema(path: &Path) -> Result<FeatureSchema> {
    let schema: FeatureSchema = read_json(path)?;
    schema.validate()?;
    Ok(schema)
}

/// A symbol stream as read from disk, states shifted to 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFile {
    pub states: Vec<usize>,
    pub timestamps: Option<Vec<f64>>,
}

impl SymbolFile {
    /// Largest state plus one, the smallest alphabet that fits.
    pub fn min_states(&self) -> usize {
        self.states.iter().max().map_or(0, |&m| m + 1)
    }

    /// Stream over `alphabet`; without a timestamp column, row `i` is time `i`.
    pub fn into_stream(self, alphabet: Alphabet) -> Result<TimedStream> {
        match self.timestamps {
            Some(ts) => TimedStream::new(alphabet, ts, self.states),
            None => TimedStream::indexed(alphabet, self.states),
        }
    }
}

/// Reads a symbol CSV. A header row is optional; with one, a `timestamp`
/// column is recognized and the other column holds the symbols.
pub fn read_symbols(path: &Path) -> Result<SymbolFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut records = rdr.records();
    let Some(first) = records.next().transpose()? else {
        return Ok(SymbolFile {
            states: Vec::new(),
            timestamps: None,
        });
    };
    let is_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let (sym_col, ts_col) = if is_header {
        let ts = first.iter().position(|h| h == "timestamp");
        let others: Vec<usize> = (0..first.len()).filter(|&c| Some(c) != ts).collect();
        let sym = match others.as_slice() {
            [c] => *c,
            _ => others
                .iter()
                .copied()
                .find(|&c| matches!(&first[c], "symbol" | "state"))
                .ok_or_else(|| {
                    Error::Input(format!(
                        "{}: expected one symbol column besides `timestamp`",
                        path.display()
                    ))
                })?,
        };
        (sym, ts)
    } else if first.len() == 1 {
        (0, None)
    } else {
        return Err(Error::Input(format!(
            "{}: a headerless symbol CSV must have exactly one column",
            path.display()
        )));
    };

    let mut states = Vec::new();
    let mut timestamps = ts_col.map(|_| Vec::new());
    let rows = std::iter::once(Ok(first))
        .skip(usize::from(is_header))
        .chain(records);
    for (row, rec) in rows.enumerate() {
        let rec = rec?;
        let line = row + 1 + usize::from(is_header);
        let field = rec.get(sym_col).unwrap_or("");
        let s: usize = field.parse().map_err(|_| {
            Error::Input(format!("{}:{line}: bad symbol `{field}`", path.display()))
        })?;
        if s == 0 {
            return Err(Error::Input(format!(
                "{}:{line}: symbols are 1-based, got 0",
                path.display()
            )));
        }
        states.push(s - 1);
        if let (Some(c), Some(ts)) = (ts_col, timestamps.as_mut()) {
            let field = rec.get(c).unwrap_or("");
            let t: f64 = field.parse().map_err(|_| {
                Error::Input(format!("{}:{line}: bad timestamp `{field}`", path.display()))
            })?;
            ts.push(t);
        }
    }
    Ok(SymbolFile { states, timestamps })
}

/// Reads a symbol CSV as a stream over `n_states` (inferred when `None`).
pub fn read_stream(path: &Path, n_states: Option<usize>) -> Result<TimedStream> {
    let file = read_symbols(path)?;
    let n = n_states.unwrap_or_else(|| file.min_states().max(1));
    file.into_stream(Alphabet::new(n)?)
}

pub fn write_symbols(path: &Path, states: &[usize], timestamps: Option<&[f64]>) -> Result<()> {
    if let Some(ts) = timestamps {
        if ts.len() != states.len() {
            return Err(Error::Input(format!(
                "{} timestamps for {} symbols",
                ts.len(),
                states.len()
            )));
        }
    }
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        match timestamps {
            Some(ts) => {
                wtr.write_record(["timestamp", "symbol"])?;
                for (t, s) in ts.iter().zip(states) {
                    wtr.write_record([t.to_string(), (s + 1).to_string()])?;
                }
            }
            None => {
                wtr.write_record(["symbol"])?;
                for s in states {
                    wtr.write_record([(s + 1).to_string()])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    })
}

/// Loads a reference: a model JSON (`.json`) or a symbol CSV path, which is
/// pair-encoded over `n_states` states (inferred when `None`).
pub fn read_reference(path: &Path, n_states: Option<usize>) -> Result<Reference> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let model = read_model(path)?;
        if let Some(n) = n_states {
            if n != model.alphabet().n_states() {
                return Err(Error::Config(format!(
                    "--states {n} disagrees with model n_states={}",
                    model.alphabet().n_states()
                )));
            }
        }
        return Ok(Reference::Model(model));
    }
    let file = read_symbols(path)?;
    let n = n_states.unwrap_or_else(|| file.min_states().max(1));
    let alphabet = Alphabet::new(n)?;
    Ok(Reference::Path(pair_encode(&file.states, alphabet)?))
}

/// Reads feature records. The header must contain `timestamp` and every
/// column named in the schema.
pub fn read_records(path: &Path, schema: &FeatureSchema) -> Result<Vec<FeatureRecord>> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!(
                "schema column `{name}` not found in {}",
                path.display()
            ))
        })
    };
    let ts_col = col("timestamp")?;
    let cluster_cols = schema
        .cluster
        .as_ref()
        .map_or(Ok(Vec::new()), |c| c.columns.iter().map(|n| col(n)).collect())?;
    let scalar_cols = schema
        .scalars
        .iter()
        .map(|s| col(&s.name))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| -> Result<f64> {
            let field = rec.get(c).unwrap_or("");
            field.parse().map_err(|_| {
                Error::Input(format!(
                    "{}:{}: column `{}` is not a number: `{field}`",
                    path.display(),
                    row + 2,
                    &headers[c]
                ))
            })
        };
        out.push(FeatureRecord {
            timestamp: get(ts_col)?,
            cluster: cluster_cols.iter().map(|&c| get(c)).collect::<Result<_>>()?,
            scalars: scalar_cols.iter().map(|&c| get(c)).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// One row of the detection report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub window_start: f64,
    pub window_end: f64,
    pub n: usize,
    pub divergence: Option<f64>,
    pub threshold: Option<f64>,
    pub flagged: bool,
    /// 1-based law index; empty for the ordinary test and skipped windows.
    pub law_index: Option<usize>,
}

impl From<&WindowReport> for ReportRow {
    fn from(r: &WindowReport) -> Self {
        Self {
            window_start: r.start,
            window_end: r.end,
            n: r.n,
            divergence: r.stat,
            threshold: r.eta,
            flagged: r.flagged,
            law_index: r.law_index.map(|l| l + 1),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "window_start",
    "window_end",
    "n",
    "divergence",
    "threshold",
    "flagged",
    "law_index",
];

pub fn write_report(path: &Path, reports: &[WindowReport]) -> Result<()> {
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    write_table(path, &REPORT_COLUMNS, &rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Writes serde rows under an explicit header, so an empty table still
/// carries its columns.
pub fn write_table<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record(columns)?;
        for r in rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    })
}
