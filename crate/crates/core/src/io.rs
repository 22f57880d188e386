//! CSV matrix ingestion, the variance-stabilizing count transform, and
//! JSON/CSV serialization of fit results, selection traces and study
//! reports.
//!
//! Numbers are written with 17 significant digits so that every double
//! round-trips exactly; JSON output is deterministic for identical
//! inputs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::{FPCAResult, FittedComponent, Method};
use crate::grid::TimeGrid;
use crate::rank_one::ComponentFit;
use crate::selection::{Criterion, SelectionTrace};
use crate::simulation::{RatioSummary, SimConfig, SimulationReport};

/// Version stamp written into every JSON document.
pub const FORMAT_VERSION: u32 = 1;

/// Where the time grid comes from when loading a matrix.
#[derive(Debug, Clone)]
pub enum GridSource {
    /// First CSV row holds the m observation times.
    Header,
    /// One-column file of observation times.
    File(PathBuf),
    /// No grid available: unit spacing 1..m, flagged so callers can warn.
    UnitSpacing,
}

/// A parsed data matrix with its grid.
#[derive(Debug, Clone)]
pub struct LoadedMatrix {
    pub matrix: DMatrix<f64>,
    pub grid: TimeGrid,
    /// True when no grid was supplied and unit spacing was substituted.
    pub grid_defaulted: bool,
}

fn parse_cell(cell: &str, line: usize, col: usize) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::NonNumericCell { line, col: col + 1 })
}

/// Parses CSV text into rows of numbers, reporting 1-based line numbers.
/// Blank lines are skipped.
fn parse_rows(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in raw.split(',').enumerate() {
            row.push(parse_cell(cell, line, col)?);
        }
        rows.push((line, row));
    }
    Ok(rows)
}

/// Loads an n x m numeric CSV matrix and its grid. With
/// [`GridSource::Header`] the first row is interpreted as the m
/// observation times; with [`GridSource::File`] the grid is read from a
/// one-column file; otherwise a unit-spaced grid is substituted and
/// flagged.
pub fn load_matrix(path: &Path, source: &GridSource) -> Result<LoadedMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = parse_rows(&text)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    let (times, grid_defaulted) = match source {
        GridSource::Header => {
            let (_, header) = rows.remove(0);
            (Some(header), false)
        }
        GridSource::File(grid_path) => {
            let grid_text = std::fs::read_to_string(grid_path)?;
            let grid_rows = parse_rows(&grid_text)?;
            let mut times = Vec::with_capacity(grid_rows.len());
            for (line, row) in grid_rows {
                if row.len() != 1 {
                    return Err(Error::RaggedRow {
                        line,
                        expected: 1,
                        got: row.len(),
                    });
                }
                times.push(row[0]);
            }
            (Some(times), false)
        }
        GridSource::UnitSpacing => (None, true),
    };

    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = rows[0].1.len();
    for (line, row) in &rows {
        if row.len() != m {
            return Err(Error::RaggedRow {
                line: *line,
                expected: m,
                got: row.len(),
            });
        }
    }
    let n = rows.len();
    let matrix = DMatrix::from_fn(n, m, |i, j| rows[i].1[j]);

    let grid = match times {
        Some(times) => {
            if times.len() != m {
                return Err(Error::GridLengthMismatch {
                    grid: times.len(),
                    cols: m,
                });
            }
            TimeGrid::new(times)?
        }
        None => TimeGrid::unit(m)?,
    };

    Ok(LoadedMatrix {
        matrix,
        grid,
        grid_defaulted,
    })
}

/// Elementwise X = sqrt(N + 1/4), the variance-stabilizing transform
/// for count data. Rejects negative entries.
pub fn sqrt_count_transform(counts: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for j in 0..counts.ncols() {
        for i in 0..counts.nrows() {
            if counts[(i, j)] < 0.0 {
                return Err(Error::NegativeCount {
                    row: i + 1,
                    col: j + 1,
                    value: counts[(i, j)],
                });
            }
        }
    }
    Ok(counts.map(|c| (c + 0.25).sqrt()))
}

/// 17-significant-digit decimal form; doubles round-trip exactly.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Row-major CSV of a matrix, no header.
pub fn matrix_to_csv(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols()).map(|j| format_value(x[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// CSV with a `t` column followed by one named column per curve.
pub fn curves_to_csv(ts: &[f64], columns: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("t");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, t) in ts.iter().enumerate() {
        out.push_str(&format_value(*t));
        for (_, values) in columns {
            out.push(',');
            out.push_str(&format_value(values[i]));
        }
        out.push('\n');
    }
    out
}

/// CSV of a selection trace: alpha, score, chosen flag. Failed grid
/// points carry an empty score cell.
pub fn trace_to_csv(trace: &SelectionTrace) -> String {
    let mut out = String::from("alpha,score,chosen\n");
    for i in 0..trace.alphas.len() {
        let score = if trace.failed[i] {
            String::new()
        } else {
            format_value(trace.scores[i])
        };
        let chosen = if i == trace.chosen_index { 1 } else { 0 };
        out.push_str(&format!("{},{},{}\n", format_value(trace.alphas[i]), score, chosen));
    }
    out
}

fn criterion_name(criterion: Criterion) -> &'static str {
    criterion.as_str()
}

fn criterion_from_name(name: &str) -> Result<Criterion> {
    match name {
        "cv" => Ok(Criterion::Cv),
        "gcv" => Ok(Criterion::Gcv),
        "row_cv" => Ok(Criterion::RowCv),
        other => Err(Error::InvalidConfig(format!("unknown criterion '{other}'"))),
    }
}

#[derive(Serialize, Deserialize)]
struct TraceDoc {
    criterion: String,
    alphas: Vec<f64>,
    /// `null` marks a grid point whose evaluation failed.
    scores: Vec<Option<f64>>,
    chosen_index: usize,
}

impl From<&SelectionTrace> for TraceDoc {
    fn from(trace: &SelectionTrace) -> Self {
        TraceDoc {
            criterion: criterion_name(trace.criterion).to_string(),
            alphas: trace.alphas.clone(),
            scores: trace
                .scores
                .iter()
                .zip(trace.failed.iter())
                .map(|(s, f)| if *f { None } else { Some(*s) })
                .collect(),
            chosen_index: trace.chosen_index,
        }
    }
}

impl TraceDoc {
    fn into_trace(self) -> Result<SelectionTrace> {
        let criterion = criterion_from_name(&self.criterion)?;
        let failed: Vec<bool> = self.scores.iter().map(|s| s.is_none()).collect();
        let scores: Vec<f64> = self
            .scores
            .iter()
            .map(|s| s.unwrap_or(f64::INFINITY))
            .collect();
        if self.chosen_index >= self.alphas.len() || self.alphas.len() != scores.len() {
            return Err(Error::InvalidConfig("malformed selection trace".into()));
        }
        Ok(SelectionTrace {
            alphas: self.alphas,
            scores,
            failed,
            chosen_index: self.chosen_index,
            criterion,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentDoc {
    alpha: f64,
    loading: Vec<f64>,
    scores: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    variance_fraction: f64,
    trace: TraceDoc,
}

#[derive(Serialize, Deserialize)]
struct ResultDoc {
    format_version: u32,
    method: String,
    times: Vec<f64>,
    column_means: Vec<f64>,
    centered_fro_norm: f64,
    residual_fro_norm: f64,
    components: Vec<ComponentDoc>,
}

/// Serializes a fit result to pretty-printed JSON.
pub fn result_to_json(result: &FPCAResult) -> String {
    let fractions = result.variance_fractions();
    let doc = ResultDoc {
        format_version: FORMAT_VERSION,
        method: result.method.as_str().to_string(),
        times: result.grid.times().to_vec(),
        column_means: result.column_means.as_slice().to_vec(),
        centered_fro_norm: result.centered_fro_norm,
        residual_fro_norm: result.residual_fro_norm,
        components: result
            .components
            .iter()
            .zip(fractions)
            .map(|(c, variance_fraction)| ComponentDoc {
                alpha: c.fit.alpha,
                loading: c.fit.loading.as_slice().to_vec(),
                scores: c.fit.scores.as_slice().to_vec(),
                objective: c.fit.objective,
                iterations: c.fit.iterations,
                converged: c.fit.converged,
                variance_fraction,
                trace: TraceDoc::from(&c.trace),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("result serializes");
    text.push('\n');
    text
}

/// Parses a fit result saved by [`result_to_json`]; loadings, scores
/// and alphas are restored bit-for-bit.
pub fn result_from_json(text: &str) -> Result<FPCAResult> {
    let doc: ResultDoc = serde_json::from_str(text)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedFormatVersion {
            found: doc.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let method = match doc.method.as_str() {
        "mpdc" => Method::Mpdc,
        "spdr" => Method::Spdr,
        other => {
            return Err(Error::InvalidConfig(format!("unknown method '{other}'")));
        }
    };
    let grid = TimeGrid::new(doc.times)?;
    let mut components = Vec::with_capacity(doc.components.len());
    for c in doc.components {
        components.push(FittedComponent {
            fit: ComponentFit {
                scores: DVector::from_vec(c.scores),
                loading: DVector::from_vec(c.loading),
                alpha: c.alpha,
                objective: c.objective,
                iterations: c.iterations,
                converged: c.converged,
            },
            trace: c.trace.into_trace()?,
        });
    }
    Ok(FPCAResult {
        method,
        grid,
        column_means: DVector::from_vec(doc.column_means),
        components,
        centered_fro_norm: doc.centered_fro_norm,
        residual_fro_norm: doc.residual_fro_norm,
    })
}

#[derive(Serialize, Deserialize)]
struct SimConfigDoc {
    n: usize,
    m: usize,
    sigma1: f64,
    sigma2: f64,
    sigma: f64,
    t_min: f64,
    t_max: f64,
    replicates: usize,
    base_seed: u64,
    mean_curve: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ReplicateDoc {
    replicate: usize,
    mse_mpdc: (f64, f64),
    mse_spdr: (f64, f64),
    mpdc_alphas: (f64, f64),
    spdr_alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct SummaryDoc {
    q1: f64,
    median: f64,
    mean: f64,
    q3: f64,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    format_version: u32,
    config: SimConfigDoc,
    failed_replicates: usize,
    ratio_summary: (SummaryDoc, SummaryDoc),
    sign_test_p: (f64, f64),
    per_replicate: Vec<ReplicateDoc>,
}

fn summary_doc(s: &RatioSummary) -> SummaryDoc {
    SummaryDoc {
        q1: s.q1,
        median: s.median,
        mean: s.mean,
        q3: s.q3,
    }
}

/// Serializes a study report (with its configuration) to JSON.
pub fn report_to_json(cfg: &SimConfig, report: &SimulationReport) -> String {
    let doc = ReportDoc {
        format_version: FORMAT_VERSION,
        config: SimConfigDoc {
            n: cfg.n,
            m: cfg.m,
            sigma1: cfg.sigma1,
            sigma2: cfg.sigma2,
            sigma: cfg.sigma,
            t_min: cfg.t_min,
            t_max: cfg.t_max,
            replicates: cfg.replicates,
            base_seed: cfg.base_seed,
            mean_curve: cfg.mean_curve.clone(),
        },
        failed_replicates: report.failed_replicates,
        ratio_summary: (
            summary_doc(&report.ratio_summary.0),
            summary_doc(&report.ratio_summary.1),
        ),
        sign_test_p: report.sign_test_p,
        per_replicate: report
            .per_replicate
            .iter()
            .map(|r| ReplicateDoc {
                replicate: r.replicate,
                mse_mpdc: r.mse_mpdc,
                mse_spdr: r.mse_spdr,
                mpdc_alphas: r.mpdc_alphas,
                spdr_alpha: r.spdr_alpha,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

/// Summary table of the SPDR/MPDC MSE ratios, one row per component.
pub fn report_table_csv(report: &SimulationReport) -> String {
    let mut out = String::from("component,q1,median,mean,q3,sign_test_p\n");
    for (name, s, p) in [
        ("fpc1", &report.ratio_summary.0, report.sign_test_p.0),
        ("fpc2", &report.ratio_summary.1, report.sign_test_p.1),
    ] {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            name,
            format_value(s.q1),
            format_value(s.median),
            format_value(s.mean),
            format_value(s.q3),
            format_value(p),
        ));
    }
    out
}

/// Per-replicate MSE table (raw values; the 1e4 display factor of the
/// reference tables is left to presentation).
pub fn report_replicates_csv(report: &SimulationReport) -> String {
    let mut out = String::from(
        "replicate,mse_mpdc_fpc1,mse_mpdc_fpc2,mse_spdr_fpc1,mse_spdr_fpc2,alpha_mpdc_fpc1,alpha_mpdc_fpc2,alpha_spdr\n",
    );
    for r in &report.per_replicate {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.replicate,
            format_value(r.mse_mpdc.0),
            format_value(r.mse_mpdc.1),
            format_value(r.mse_spdr.0),
            format_value(r.mse_spdr.1),
            format_value(r.mpdc_alphas.0),
            format_value(r.mpdc_alphas.1),
            format_value(r.spdr_alpha),
        ));
    }
    out
}
