//! Measured conditional tables, run configuration, unit conversion and
//! sweep output.
//!
//! Conditional tables are whitespace-separated ASCII. The first
//! non-comment line holds the column labels `(m_Q,k,m_C)`; every later
//! line starts with a row label `(n_Q,n_C)` followed by one value per
//! column. Lines starting with `#` are ignored. Parsing is label driven, so
//! rows and columns may come in any order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use log::warn;
use regex::Regex;

use crate::channels::{AtomLevel, CavityPrep, ErrorKind, ErrorModel, MAX_RELAXATION};
use crate::entropy::{EpResult, EstimatorOptions, HeatSource};
use crate::error::{Error, Result};
use crate::protocol::{Conditionals, Direction, Mode, Simulation, SIGMA_TOLERANCE};
use crate::statespace::{SystemDims, SILENT_TOLERANCE, WARN_TOLERANCE};

const PLANCK: f64 = 6.626_070_15e-34;
const BOLTZMANN: f64 = 1.380_649e-23;
const CLAMP_TOLERANCE: f64 = 1e-6;

/// `h·f/(k_B·T)` for a temperature in kelvin and a frequency in GHz.
pub fn kelvin_to_beta_omega(t_kelvin: f64, f_ghz: f64) -> Result<f64> {
    if !(t_kelvin > 0.0) {
        return Err(Error::OutOfRange {
            name: "temperature".into(),
            value: t_kelvin,
            range: "(0, inf) K",
        });
    }
    if !(f_ghz > 0.0 && f_ghz.is_finite()) {
        return Err(Error::OutOfRange {
            name: "frequency".into(),
            value: f_ghz,
            range: "(0, inf) GHz",
        });
    }
    Ok(PLANCK * f_ghz * 1e9 / (BOLTZMANN * t_kelvin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Rows are initial states; each row is a distribution over outcomes.
    ForwardRowsInitial,
    /// Rows are final states; each column is a distribution over them.
    BackwardRowsFinal,
}

impl Orientation {
    fn direction(self) -> Direction {
        match self {
            Orientation::ForwardRowsInitial => Direction::Forward,
            Orientation::BackwardRowsFinal => Direction::Backward,
        }
    }
}

/// A labelled probability matrix as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub row_labels: Vec<(usize, usize)>,
    pub col_labels: Vec<(usize, usize, usize)>,
    /// `values[row][col]`.
    pub values: Vec<Vec<f64>>,
    pub orientation: Orientation,
}

fn row_label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\((\d+),(\d+)\)$").unwrap())
}

fn col_label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\((\d+),(\d+),(\d+)\)$").unwrap())
}

fn parse_row_label(line: usize, tok: &str) -> Result<(usize, usize)> {
    let caps = row_label_re()
        .captures(tok)
        .ok_or_else(|| Error::MalformedLabel {
            line,
            label: tok.into(),
        })?;
    let n = |i: usize| {
        caps[i].parse::<usize>().map_err(|_| Error::MalformedLabel {
            line,
            label: tok.into(),
        })
    };
    Ok((n(1)?, n(2)?))
}

fn parse_col_label(line: usize, tok: &str) -> Result<(usize, usize, usize)> {
    let caps = col_label_re()
        .captures(tok)
        .ok_or_else(|| Error::MalformedLabel {
            line,
            label: tok.into(),
        })?;
    let n = |i: usize| {
        caps[i].parse::<usize>().map_err(|_| Error::MalformedLabel {
            line,
            label: tok.into(),
        })
    };
    Ok((n(1)?, n(2)?, n(3)?))
}

fn fmt_row(l: (usize, usize)) -> String {
    format!("({},{})", l.0, l.1)
}

fn fmt_col(l: (usize, usize, usize)) -> String {
    format!("({},{},{})", l.0, l.1, l.2)
}

fn clamp_value(label: String, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        return Ok(v);
    }
    if (-CLAMP_TOLERANCE..0.0).contains(&v) {
        warn!("{label}: clamping {v} to 0");
        return Ok(0.0);
    }
    if v > 1.0 && v <= 1.0 + CLAMP_TOLERANCE {
        warn!("{label}: clamping {v} to 1");
        return Ok(1.0);
    }
    Err(Error::TableValue { label, value: v })
}

/// Applies the tolerance policy to one row or column in place.
fn renormalize(what: &'static str, label: String, values: &mut [&mut f64]) -> Result<()> {
    let sum: f64 = values.iter().map(|v| **v).sum();
    let dev = (sum - 1.0).abs();
    if dev > WARN_TOLERANCE + 1e-12 {
        return Err(Error::TableNormalization { what, label, sum });
    }
    if dev > SILENT_TOLERANCE {
        warn!("{what} {label} sums to {sum}; renormalizing");
    }
    if dev > 0.0 {
        values.iter_mut().for_each(|v| **v /= sum);
    }
    Ok(())
}

/// Parses an ASCII conditional table and checks it against `orientation`.
pub fn parse_table<R: BufRead>(reader: R, orientation: Orientation) -> Result<ConditionalTable> {
    let mut cols: Option<Vec<(usize, usize, usize)>> = None;
    let mut row_labels = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let Some(header) = &cols else {
            let labels = tokens
                .iter()
                .map(|t| parse_col_label(lineno, t))
                .collect::<Result<Vec<_>>>()?;
            cols = Some(labels);
            continue;
        };
        let row = parse_row_label(lineno, tokens[0])?;
        if tokens.len() - 1 != header.len() {
            return Err(Error::RaggedRow {
                line: lineno,
                expected: header.len(),
                found: tokens.len() - 1,
            });
        }
        let mut rv = Vec::with_capacity(header.len());
        for (tok, col) in tokens[1..].iter().zip(header) {
            let v: f64 = tok.parse().map_err(|_| Error::BadNumber {
                line: lineno,
                token: (*tok).into(),
            })?;
            rv.push(clamp_value(
                format!("{} {}", fmt_row(row), fmt_col(*col)),
                v,
            )?);
        }
        row_labels.push(row);
        values.push(rv);
    }
    let col_labels = cols.ok_or(Error::EmptyTable)?;
    if row_labels.is_empty() {
        return Err(Error::EmptyTable);
    }
    check_unique(row_labels.iter().map(|&l| fmt_row(l)))?;
    check_unique(col_labels.iter().map(|&l| fmt_col(l)))?;

    match orientation {
        Orientation::ForwardRowsInitial => {
            for (r, row) in values.iter_mut().enumerate() {
                let mut refs: Vec<&mut f64> = row.iter_mut().collect();
                renormalize("row", fmt_row(row_labels[r]), &mut refs)?;
            }
        }
        Orientation::BackwardRowsFinal => {
            for (c, &label) in col_labels.iter().enumerate() {
                let mut refs: Vec<&mut f64> = values.iter_mut().map(|row| &mut row[c]).collect();
                let unencodable = AtomLevel::from_logical(label.0, label.1).is_none();
                if unencodable && refs.iter().all(|v| **v == 0.0) {
                    continue;
                }
                renormalize("column", fmt_col(label), &mut refs)?;
            }
        }
    }
    Ok(ConditionalTable {
        row_labels,
        col_labels,
        values,
        orientation,
    })
}

fn check_unique(labels: impl Iterator<Item = String>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l.clone()) {
            return Err(Error::LabelMismatch(format!("duplicate label {l}")));
        }
    }
    Ok(())
}

pub fn parse_table_file(path: &Path, orientation: Orientation) -> Result<ConditionalTable> {
    let file = fs::File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(BufReader::new(file), orientation)
}

/// Writes a table in the format [`parse_table`] reads. Values use the
/// shortest representation that round-trips exactly.
pub fn write_table<W: Write>(table: &ConditionalTable, mut w: W) -> Result<()> {
    let header: Vec<String> = table.col_labels.iter().map(|&l| fmt_col(l)).collect();
    writeln!(
        w,
        "{:>8}{}",
        "",
        header
            .iter()
            .map(|h| format!(" {h:>24}"))
            .collect::<String>()
    )?;
    for (label, row) in table.row_labels.iter().zip(&table.values) {
        let mut line = format!("{:<8}", fmt_row(*label));
        for v in row {
            write!(line, " {:>24}", format!("{v:?}")).unwrap();
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_table_file(table: &ConditionalTable, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    write_table(table, &mut w)?;
    w.flush()?;
    Ok(())
}

impl ConditionalTable {
    pub fn from_conditionals(c: &Conditionals) -> Self {
        let cols = c.dims().joint_len();
        let values = c.values().chunks(cols).map(|r| r.to_vec()).collect();
        ConditionalTable {
            row_labels: c.row_labels(),
            col_labels: c.col_labels(),
            values,
            orientation: match c.direction() {
                Direction::Forward => Orientation::ForwardRowsInitial,
                Direction::Backward => Orientation::BackwardRowsFinal,
            },
        }
    }

    /// Places the labelled values on the index set of `dims`. Absent columns
    /// are zero; every forward initial state must be present.
    pub fn to_conditionals(&self, dims: SystemDims) -> Result<Conditionals> {
        let direction = self.orientation.direction();
        let rows_c = match direction {
            Direction::Forward => dims.cavity_init,
            Direction::Backward => dims.cavity_full,
        };
        let cols = dims.joint_len();
        let mut p = vec![0.0; dims.qubit * rows_c * cols];
        let col_index: Vec<usize> = self
            .col_labels
            .iter()
            .map(|&(m_q, k, m_c)| {
                if m_q < dims.qubit && k < dims.demon && m_c < dims.cavity_full {
                    Ok(dims.index(m_q, k, m_c))
                } else {
                    Err(Error::LabelMismatch(format!(
                        "column {} is outside the state space",
                        fmt_col((m_q, k, m_c))
                    )))
                }
            })
            .collect::<Result<_>>()?;
        let mut present: HashMap<(usize, usize), ()> = HashMap::new();
        for (&(n_q, n_c), row) in self.row_labels.iter().zip(&self.values) {
            if n_q >= dims.qubit || n_c >= rows_c {
                return Err(Error::LabelMismatch(format!(
                    "row {} is outside the state space",
                    fmt_row((n_q, n_c))
                )));
            }
            present.insert((n_q, n_c), ());
            let base = (n_q * rows_c + n_c) * cols;
            for (&ci, &v) in col_index.iter().zip(row) {
                p[base + ci] = v;
            }
        }
        if direction == Direction::Forward {
            for n_q in 0..dims.qubit {
                for n_c in 0..rows_c {
                    if !present.contains_key(&(n_q, n_c)) {
                        return Err(Error::LabelMismatch(format!(
                            "forward table lacks initial state {}",
                            fmt_row((n_q, n_c))
                        )));
                    }
                }
            }
        }
        Conditionals::new(dims, direction, p)
    }
}

/// Output layout of a sweep CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    /// Drop Σ₃–Σ₅.
    pub forward_only: bool,
    /// Append the limiting-line column.
    pub asymptote: bool,
}

fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn sweep_csv_header(opts: CsvOptions) -> String {
    let mut cols = vec!["dbeta_tilde", "sigma1", "sigma2"];
    if !opts.forward_only {
        cols.extend(["sigma3", "sigma4", "sigma5"]);
    }
    cols.extend(["sigma6", "heat_C", "mean_info", "flags"]);
    if opts.asymptote {
        cols.push("asymptote");
    }
    cols.join(",")
}

/// Renders sweep results as CSV text.
pub fn format_sweep_csv(results: &[EpResult], opts: CsvOptions) -> Result<String> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut out = sweep_csv_header(opts);
    out.push('\n');
    for r in results {
        let mut fields = vec![
            fmt_float(r.dbeta_tilde),
            fmt_float(r.sigma1),
            fmt_float(r.sigma2),
        ];
        if !opts.forward_only {
            for s in [r.sigma3, r.sigma4, r.sigma5] {
                fields.push(s.map(fmt_float).unwrap_or_default());
            }
        }
        fields.extend([
            fmt_float(r.sigma6),
            fmt_float(r.heat_c),
            fmt_float(r.mean_info),
            r.flags.join(";"),
        ]);
        if opts.asymptote {
            fields.push(fmt_float(r.asymptote));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_sweep_csv(results: &[EpResult], path: &Path, opts: CsvOptions) -> Result<()> {
    let text = format_sweep_csv(results, opts)?;
    fs::write(path, text).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// A parsed sweep CSV: header names and raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SweepCsv {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or(Error::EmptyTable)?
            .split(',')
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let row: Vec<String> = l.split(',').map(String::from).collect();
            if row.len() != header.len() {
                return Err(Error::RaggedRow {
                    line: i + 2,
                    expected: header.len(),
                    found: row.len(),
                });
            }
            rows.push(row);
        }
        Ok(SweepCsv { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric value of a field; `inf` parses as infinity.
    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        let c = self.column(name)?;
        self.rows.get(row)?.get(c)?.parse().ok()
    }
}

/// Everything a run needs, with defaults for the measured apparatus.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub temperature_c_kelvin: f64,
    pub frequency_ghz: f64,
    pub dbeta_min: f64,
    pub dbeta_max: f64,
    pub dbeta_step: f64,
    pub mode: Mode,
    /// Error parameters before `mode` and `active_errors` are applied.
    pub model: ErrorModel,
    /// When set, every other imperfection is switched off.
    pub active_errors: Option<Vec<ErrorKind>>,
    pub output: Option<PathBuf>,
    pub floor: Option<f64>,
    pub heat_source: HeatSource,
    /// Apply the imperfections in the backward protocol too.
    pub backward_errors: bool,
    pub sigma_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            temperature_c_kelvin: 2.8,
            frequency_ghz: 51.0,
            dbeta_min: -6.0,
            dbeta_max: 6.0,
            dbeta_step: 0.25,
            mode: Mode::Physical,
            model: ErrorModel::default(),
            active_errors: None,
            output: None,
            floor: None,
            heat_source: HeatSource::Atomic,
            backward_errors: true,
            sigma_tol: SIGMA_TOLERANCE,
        }
    }
}

impl RunConfig {
    pub fn beta_c(&self) -> Result<f64> {
        kelvin_to_beta_omega(self.temperature_c_kelvin, self.frequency_ghz)
    }

    /// `dbeta_min, dbeta_min + step, …` up to `dbeta_max` inclusive.
    pub fn grid(&self) -> Result<Vec<f64>> {
        dbeta_grid(self.dbeta_min, self.dbeta_max, self.dbeta_step)
    }

    /// The imperfections actually simulated.
    pub fn effective_model(&self) -> ErrorModel {
        match (self.mode, &self.active_errors) {
            (Mode::Ideal, _) => ErrorModel::none(),
            (Mode::Physical, Some(kinds)) => self.model.only(kinds),
            (Mode::Physical, None) => self.model.clone(),
        }
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            heat_source: self.heat_source,
            floor: self.floor,
            sigma_tol: self.sigma_tol,
        }
    }

    pub fn simulation(&self) -> Result<Simulation> {
        Ok(
            Simulation::new(SystemDims::default(), self.mode, &self.effective_model())?
                .with_ideal_backward(!self.backward_errors),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.beta_c()?;
        self.grid()?;
        self.model.validate(&SystemDims::default())?;
        if let Some(f) = self.floor {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::OutOfRange {
                    name: "floor".into(),
                    value: f,
                    range: "(0, 1)",
                });
            }
        }
        if !(self.sigma_tol > 0.0) {
            return Err(Error::OutOfRange {
                name: "sigma_tol".into(),
                value: self.sigma_tol,
                range: "(0, inf)",
            });
        }
        Ok(())
    }
}

pub fn dbeta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::OutOfRange {
            name: "dbeta_step".into(),
            value: step,
            range: "(0, inf)",
        });
    }
    if !(min.is_finite() && max.is_finite()) || min > max {
        return Err(Error::InvalidConfig(format!(
            "empty grid from {min} to {max}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|_| Error::Config {
        line,
        message: format!("`{key}` expects a number, got `{value}`"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config {
            line,
            message: format!("`{key}` expects true or false, got `{value}`"),
        }),
    }
}

fn probability(line: usize, key: &str, value: &str, max: f64) -> Result<f64> {
    let v = parse_f64(line, key, value)?;
    if !(0.0..=max).contains(&v) {
        return Err(Error::Config {
            line,
            message: format!("`{key}` = {v} is outside [0, {max}]"),
        });
    }
    Ok(v)
}

/// Parses `key = value` lines over the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    use AtomLevel::{E, F, G};
    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let cfg_err = |message: String| Error::Config { line, message };
        match key {
            "temperature_C_kelvin" => cfg.temperature_c_kelvin = parse_f64(line, key, value)?,
            "frequency_GHz" => cfg.frequency_ghz = parse_f64(line, key, value)?,
            "dbeta_min" => cfg.dbeta_min = parse_f64(line, key, value)?,
            "dbeta_max" => cfg.dbeta_max = parse_f64(line, key, value)?,
            "dbeta_step" => cfg.dbeta_step = parse_f64(line, key, value)?,
            "mode" => cfg.mode = value.parse().map_err(|e: Error| cfg_err(e.to_string()))?,
            "eps_prep" => cfg.model.eps_prep = probability(line, key, value, 1.0)?,
            "eps_read" => cfg.model.eps_read = probability(line, key, value, 1.0)?,
            "eps_feed" => cfg.model.eps_feed = probability(line, key, value, 1.0)?,
            "eta_e_f" | "eta_f_e" | "eta_e_g" | "eta_g_e" | "eta_g_f" | "eta_f_g" => {
                let level = |c: u8| match c {
                    b'e' => E,
                    b'g' => G,
                    _ => F,
                };
                let b = key.as_bytes();
                let v = probability(line, key, value, 1.0)?;
                cfg.model
                    .detect_confusion
                    .set(level(b[4]), level(b[6]), v)
                    .map_err(|e| cfg_err(e.to_string()))?;
            }
            "cavity_prep" => {
                cfg.model.cavity_prep = match value {
                    "realistic" => CavityPrep::realistic(),
                    "ideal" => CavityPrep::Ideal,
                    _ => {
                        return Err(cfg_err(format!(
                            "`cavity_prep` expects realistic or ideal, got `{value}`"
                        )))
                    }
                }
            }
            "relax_atom_prob" => {
                cfg.model.relax_atom_prob = probability(line, key, value, MAX_RELAXATION)?
            }
            "relax_cavity_prob" => {
                cfg.model.relax_cavity_prob = probability(line, key, value, MAX_RELAXATION)?
            }
            "nbar_atoms" => cfg.model.nbar_atoms = parse_f64(line, key, value)?,
            "detect_eff" => cfg.model.detect_eff = probability(line, key, value, 1.0)?,
            "active_errors" => {
                cfg.active_errors = if value == "all" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .filter(|s| !s.trim().is_empty())
                            .map(str::parse)
                            .collect::<Result<Vec<ErrorKind>>>()
                            .map_err(|e| cfg_err(e.to_string()))?,
                    )
                }
            }
            "output" => cfg.output = Some(PathBuf::from(value)),
            "floor" => {
                cfg.floor = match value {
                    "off" | "none" => None,
                    _ => Some(parse_f64(line, key, value)?),
                }
            }
            "heat_source" => {
                cfg.heat_source = value.parse().map_err(|e: Error| cfg_err(e.to_string()))?
            }
            "backward_errors" => cfg.backward_errors = parse_bool(line, key, value)?,
            "sigma_tol" => cfg.sigma_tol = parse_f64(line, key, value)?,
            _ => return Err(cfg_err(format!("unknown key `{key}`"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file, or returns the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn forward_identity_text() -> String {
        "   (0,1,0) (1,1,0) (0,1,1)\n(0,0)  1.0 0.0 0.0\n(1,0)  0.0 1.0 0.0\n".into()
    }

    #[test]
    fn thermal_conversion() {
        let x = kelvin_to_beta_omega(2.8, 51.0).unwrap();
        assert_abs_diff_eq!(x, 0.87414, epsilon = 1e-5);
        assert_abs_diff_eq!(
            x,
            6.62607015e-34 * 51e9 / (1.380649e-23 * 2.8),
            epsilon = 1e-15
        );
        assert!(kelvin_to_beta_omega(1e12, 51.0).unwrap() < 1e-10);
        assert!(kelvin_to_beta_omega(0.0, 51.0).is_err());
        assert!(kelvin_to_beta_omega(-1.0, 51.0).is_err());
        let a = kelvin_to_beta_omega(2.0, 51.0).unwrap();
        assert!(a > kelvin_to_beta_omega(3.0, 51.0).unwrap());
        assert_abs_diff_eq!(
            kelvin_to_beta_omega(2.0, 102.0).unwrap(),
            2.0 * a,
            epsilon = 1e-14
        );
    }

    #[test]
    fn parses_toy_identity_table() {
        let t = parse_table(
            forward_identity_text().as_bytes(),
            Orientation::ForwardRowsInitial,
        )
        .unwrap();
        assert_eq!(t.row_labels, vec![(0, 0), (1, 0)]);
        assert_eq!(t.col_labels, vec![(0, 1, 0), (1, 1, 0), (0, 1, 1)]);
        assert_eq!(t.values[1], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn tolerance_policy() {
        let t = parse_table(
            "(0,1,0) (0,0,0)\n(0,0) 0.5 0.499\n".as_bytes(),
            Orientation::ForwardRowsInitial,
        )
        .unwrap();
        assert_abs_diff_eq!(t.values[0].iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            parse_table(
                "(0,1,0) (0,0,0)\n(0,0) 0.5 0.4\n".as_bytes(),
                Orientation::ForwardRowsInitial
            ),
            Err(Error::TableNormalization { .. })
        ));
        let clamped = parse_table(
            "(0,1,0) (0,0,0)\n(0,0) -1e-7 1.0\n".as_bytes(),
            Orientation::ForwardRowsInitial,
        )
        .unwrap();
        assert_eq!(clamped.values[0][0], 0.0);
        assert!(matches!(
            parse_table(
                "(0,1,0) (0,0,0)\n(0,0) -0.1 1.1\n".as_bytes(),
                Orientation::ForwardRowsInitial
            ),
            Err(Error::TableValue { .. })
        ));
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            parse_table(
                "(0,1,0) (1,2)\n(0,0) 0.5 0.5\n".as_bytes(),
                Orientation::ForwardRowsInitial
            ),
            Err(Error::MalformedLabel { line: 1, .. })
        ));
        assert!(matches!(
            parse_table(
                "(0,1,0) (0,0,0)\n(0,0) 0.5\n".as_bytes(),
                Orientation::ForwardRowsInitial
            ),
            Err(Error::RaggedRow { line: 2, .. })
        ));
        assert!(matches!(
            parse_table(
                "(0,1,0)\n(0,0) x\n".as_bytes(),
                Orientation::ForwardRowsInitial
            ),
            Err(Error::BadNumber { .. })
        ));
        assert!(matches!(
            parse_table("# nothing\n".as_bytes(), Orientation::ForwardRowsInitial),
            Err(Error::EmptyTable)
        ));
        assert!(parse_table(
            "(0,1,0) (0,1,0)\n(0,0) 0.5 0.5\n".as_bytes(),
            Orientation::ForwardRowsInitial
        )
        .is_err());
    }

    #[test]
    fn backward_columns_and_unencodable_labels() {
        let text = "# comment\n(0,1,0) (1,0,0)\n(0,0) 0.25 0\n(1,0) 0.75 0\n";
        let t = parse_table(text.as_bytes(), Orientation::BackwardRowsFinal).unwrap();
        assert_eq!(t.values[1][0], 0.75);
        let bad = "(0,1,0) (0,0,0)\n(0,0) 0.25 0\n(1,0) 0.75 0\n";
        assert!(parse_table(bad.as_bytes(), Orientation::BackwardRowsFinal).is_err());
    }

    #[test]
    fn conditional_round_trip() {
        let sim = Simulation::new(
            SystemDims::default(),
            Mode::Physical,
            &ErrorModel::default(),
        )
        .unwrap();
        let (f, b) = sim.conditionals().unwrap();
        for c in [f, b] {
            let table = ConditionalTable::from_conditionals(&c);
            let mut buf = Vec::new();
            write_table(&table, &mut buf).unwrap();
            let back = parse_table(buf.as_slice(), table.orientation).unwrap();
            assert_eq!(back.row_labels, table.row_labels);
            assert_eq!(back.col_labels, table.col_labels);
            for (r1, r2) in back.values.iter().zip(&table.values) {
                for (a, b) in r1.iter().zip(r2) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-15);
                }
            }
            let again = back.to_conditionals(SystemDims::default()).unwrap();
            for (a, b) in again.values().iter().zip(c.values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn toy_table_reconstruction() {
        let labels: Vec<(usize, usize)> =
            (0..2).flat_map(|q| (0..4).map(move |c| (q, c))).collect();
        let mut text: String = labels
            .iter()
            .map(|&(q, c)| format!(" ({q},1,{c})"))
            .collect();
        text.push('\n');
        for (i, &l) in labels.iter().enumerate() {
            let row: Vec<&str> = (0..labels.len())
                .map(|j| if i == j { "1" } else { "0" })
                .collect();
            let _ = writeln!(text, "{} {}", fmt_row(l), row.join(" "));
        }
        let t = parse_table(text.as_bytes(), Orientation::ForwardRowsInitial).unwrap();
        let c = t.to_conditionals(SystemDims::default()).unwrap();
        for (n_q, n_c) in labels {
            assert_eq!(c.get(n_q, n_c, n_q, 1, n_c), 1.0);
        }
        let partial = parse_table(
            "(0,1,0)\n(0,0) 1\n".as_bytes(),
            Orientation::ForwardRowsInitial,
        )
        .unwrap();
        assert!(matches!(
            partial.to_conditionals(SystemDims::default()),
            Err(Error::LabelMismatch(_))
        ));
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(
            (cfg.model.eps_prep, cfg.model.eps_read, cfg.model.eps_feed),
            (0.1, 0.11, 0.03)
        );
        assert_eq!(cfg.grid().unwrap().len(), 49);

        let ideal = parse_config("mode = ideal\n").unwrap();
        assert_eq!(ideal.effective_model(), ErrorModel::none());

        let err = parse_config("# header\neps_read = 1.5\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        assert_eq!(err.exit_code(), 1);
        assert!(matches!(
            parse_config("bogus = 1\n"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("dbeta_step = 0\n"),
            Err(Error::OutOfRange { .. })
        ));

        let cfg = parse_config(
            "active_errors = eps_read, eps_meas\neta_e_g = 0.1  # inline comment\nbackward_errors = false\nfloor = 1e-6\n",
        )
        .unwrap();
        assert_eq!(
            cfg.active_errors,
            Some(vec![ErrorKind::Read, ErrorKind::Meas])
        );
        assert_abs_diff_eq!(
            cfg.model.detect_confusion.get(AtomLevel::G, AtomLevel::G),
            0.88,
            epsilon = 1e-15
        );
        assert!(!cfg.backward_errors);
        assert_eq!(cfg.floor, Some(1e-6));
        assert_eq!(cfg.effective_model().eps_feed, 0.0);
    }

    #[test]
    fn csv_layout() {
        let r = EpResult {
            dbeta_tilde: 0.0,
            sigma1: 0.5,
            sigma2: 0.5,
            sigma3: Some(f64::INFINITY),
            sigma4: Some(0.5),
            sigma5: Some(0.5),
            sigma6: 0.5,
            heat_c: 0.0,
            mean_info: 0.5,
            asymptote: 0.0,
            flags: vec!["sigma3_inf".into(), "floored".into()],
            support: vec![],
        };
        let text = format_sweep_csv(std::slice::from_ref(&r), CsvOptions::default()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "dbeta_tilde,sigma1,sigma2,sigma3,sigma4,sigma5,sigma6,heat_C,mean_info,flags"
        );
        let row = lines.next().unwrap();
        assert!(row.contains(",inf,"));
        assert!(row.ends_with("sigma3_inf;floored"));
        assert!(row.starts_with("0.0000000000000000e0,5.0000000000000000e-1"));
        let csv = SweepCsv::parse(&text).unwrap();
        assert_eq!(csv.value(0, "sigma3"), Some(f64::INFINITY));

        let fo = format_sweep_csv(
            &[r],
            CsvOptions {
                forward_only: true,
                asymptote: true,
            },
        )
        .unwrap();
        assert!(
            fo.starts_with("dbeta_tilde,sigma1,sigma2,sigma6,heat_C,mean_info,flags,asymptote\n")
        );
        assert!(matches!(
            format_sweep_csv(&[], CsvOptions::default()),
            Err(Error::EmptyResults)
        ));
    }

    proptest! {
        #[test]
        fn conversion_monotone(t1 in 0.1f64..100.0, t2 in 0.1f64..100.0, f in 1.0f64..200.0) {
            let (a, b) = (kelvin_to_beta_omega(t1, f).unwrap(), kelvin_to_beta_omega(t2, f).unwrap());
            if t1 < t2 {
                prop_assert!(a > b);
            }
        }

        #[test]
        fn table_round_trip_is_exact(values in proptest::collection::vec(0.0f64..1.0, 6)) {
            let s1: f64 = values[..3].iter().sum::<f64>().max(1e-3);
            let s2: f64 = values[3..].iter().sum::<f64>().max(1e-3);
            let table = ConditionalTable {
                row_labels: vec![(0, 0), (1, 2)],
                col_labels: vec![(0, 0, 0), (0, 1, 4), (1, 1, 3)],
                values: vec![
                    values[..3].iter().map(|v| v / s1).collect(),
                    values[3..].iter().map(|v| v / s2).collect(),
                ],
                orientation: Orientation::ForwardRowsInitial,
            };
            prop_assume!(table.values.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9));
            let mut buf = Vec::new();
            write_table(&table, &mut buf).unwrap();
            let back = parse_table(buf.as_slice(), Orientation::ForwardRowsInitial).unwrap();
            prop_assert_eq!(&back.row_labels, &table.row_labels);
            for (r1, r2) in back.values.iter().zip(&table.values) {
                for (a, b) in r1.iter().zip(r2) {
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }
        }
    }
}
