//! Implementations of the `fit`, `simulate` and `evaluate` commands.

use nalgebra::DMatrix;
use pfpca_core::fpca::{fit_mpdc, fit_spdr, CenteredDataset, FPCAResult};
use pfpca_core::grid::{PenaltyOperator, TimeGrid};
use pfpca_core::io::{
    self, curves_to_csv, matrix_to_csv, result_to_json, sqrt_count_transform, trace_to_csv,
    GridSource,
};
use pfpca_core::rank_one::FitConfig;
use pfpca_core::selection::{AlphaGrid, Criterion};
use pfpca_core::simulation::{generate, run_study, SimConfig};
use pfpca_core::spline::SplineFunction;
use pfpca_core::{Error, Result};

use crate::files::{ensure_dir, write_atomic};
use crate::{EvaluateArgs, FitArgs, SimulateArgs};

fn parse_float_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|cell| {
            cell.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("{what}: '{cell}' is not a number")))
        })
        .collect()
}

fn parse_int_range(text: &str, what: &str) -> Result<(i32, i32)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidConfig(format!("{what}: expected MIN:MAX, got '{text}'")));
    }
    let lo = parts[0]
        .trim()
        .parse::<i32>()
        .map_err(|_| Error::InvalidConfig(format!("{what}: bad integer '{}'", parts[0])))?;
    let hi = parts[1]
        .trim()
        .parse::<i32>()
        .map_err(|_| Error::InvalidConfig(format!("{what}: bad integer '{}'", parts[1])))?;
    if lo > hi {
        return Err(Error::InvalidConfig(format!("{what}: MIN must not exceed MAX")));
    }
    Ok((lo, hi))
}

fn alpha_grid(alphas: &Option<String>, powers: &Option<String>) -> Result<AlphaGrid> {
    match (alphas, powers) {
        (Some(list), _) => AlphaGrid::new(parse_float_list(list, "--alphas")?),
        (None, Some(range)) => {
            let (lo, hi) = parse_int_range(range, "--alpha-powers")?;
            Ok(AlphaGrid::powers(lo, hi))
        }
        (None, None) => Ok(AlphaGrid::default()),
    }
}

/// Evaluation points for exported loading curves: the knot span refined
/// tenfold.
fn refined_times(grid: &TimeGrid) -> Vec<f64> {
    let m = grid.len();
    let count = (m - 1) * 10 + 1;
    let (lo, hi) = (grid.first(), grid.last());
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
        .collect()
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let source = if args.header_grid {
        GridSource::Header
    } else if let Some(path) = &args.grid_file {
        GridSource::File(path.clone())
    } else {
        GridSource::UnitSpacing
    };
    let loaded = io::load_matrix(&args.input, &source)?;
    if loaded.grid_defaulted {
        eprintln!(
            "pfpca: warning: no grid supplied; using unit spacing 1..{}",
            loaded.grid.len()
        );
    }

    let matrix = match args.transform.as_str() {
        "sqrt-count" => sqrt_count_transform(&loaded.matrix)?,
        _ => loaded.matrix.clone(),
    };

    let data = if args.no_center {
        CenteredDataset::assume_centered(&matrix, &loaded.grid)?
    } else {
        CenteredDataset::center_columns(&matrix, &loaded.grid)?
    };
    let penalty = PenaltyOperator::new(&loaded.grid)?;
    let grid = alpha_grid(&args.alphas, &args.alpha_powers)?;
    let criterion = match args.criterion.as_str() {
        "gcv" => Criterion::Gcv,
        _ => Criterion::Cv,
    };
    let cfg = FitConfig::default();
    let result = match args.method.as_str() {
        "spdr" => fit_spdr(&data, &penalty, args.components, &grid, &cfg)?,
        _ => fit_mpdc(&data, &penalty, args.components, &grid, criterion, &cfg)?,
    };
    if result.components.len() < args.components {
        eprintln!(
            "pfpca: warning: residual became numerically zero after {} of {} components",
            result.components.len(),
            args.components
        );
    }

    ensure_dir(&args.out_dir)?;
    write_result_artifacts(&args.out_dir, &result)?;
    if args.dump_penalty {
        write_atomic(&args.out_dir.join("omega.csv"), &matrix_to_csv(penalty.omega()))?;
        write_atomic(
            &args.out_dir.join("eigvecs.csv"),
            &matrix_to_csv(penalty.eigenvectors()),
        )?;
        let eigvals = DMatrix::from_fn(penalty.len(), 1, |i, _| penalty.eigenvalues()[i]);
        write_atomic(&args.out_dir.join("eigvals.csv"), &matrix_to_csv(&eigvals))?;
    }
    Ok(())
}

fn write_result_artifacts(out_dir: &std::path::Path, result: &FPCAResult) -> Result<()> {
    write_atomic(&out_dir.join("result.json"), &result_to_json(result))?;

    let knots = result.grid.times().to_vec();
    let means: Vec<f64> = result.column_means.as_slice().to_vec();
    write_atomic(
        &out_dir.join("mean_curve.csv"),
        &curves_to_csv(&knots, &[("mean".to_string(), means)]),
    )?;

    let ts = refined_times(&result.grid);
    for (idx, comp) in result.components.iter().enumerate() {
        let spline = SplineFunction::interpolate(&result.grid, comp.fit.loading.as_slice())?;
        let values: Vec<f64> = ts.iter().map(|t| spline.evaluate(*t)).collect();
        let name = format!("fpc{}", idx + 1);
        write_atomic(
            &out_dir.join(format!("loading_{}.csv", idx + 1)),
            &curves_to_csv(&ts, &[(name, values)]),
        )?;
        write_atomic(
            &out_dir.join(format!("trace_{}.csv", idx + 1)),
            &trace_to_csv(&comp.trace),
        )?;
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    for (name, value) in [
        ("--sigma1", args.sigma1),
        ("--sigma2", args.sigma2),
        ("--sigma", args.sigma),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }

    let mut cfg = SimConfig {
        n: args.n,
        m: args.m,
        sigma1: args.sigma1,
        sigma2: args.sigma2,
        sigma: args.sigma,
        t_min: args.t_min,
        t_max: args.t_max,
        replicates: args.replicates,
        base_seed: args.seed,
        mean_curve: None,
    };
    cfg.validate()?;
    if args.with_mean {
        cfg.mean_curve = Some(SimConfig::default_mean_curve(&cfg.grid()?));
    } else if let Some(path) = &args.mean_file {
        let text = std::fs::read_to_string(path)?;
        let mut curve = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            curve.push(line.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                line: idx + 1,
                col: 1,
            })?);
        }
        cfg.mean_curve = Some(curve);
        cfg.validate()?;
    }

    ensure_dir(&args.out_dir)?;
    if let Some(replicate) = args.dump_replicate {
        if replicate >= cfg.replicates {
            return Err(Error::InvalidConfig(format!(
                "--dump-replicate {replicate} out of range (replicates = {})",
                cfg.replicates
            )));
        }
        let x = generate(&cfg, replicate)?;
        let grid = cfg.grid()?;
        let header: Vec<String> = grid.times().iter().map(|t| io::format_value(*t)).collect();
        let mut dump = header.join(",");
        dump.push('\n');
        dump.push_str(&matrix_to_csv(&x));
        write_atomic(
            &args.out_dir.join(format!("replicate_{replicate}.csv")),
            &dump,
        )?;
    }

    let report = run_study(&cfg)?;
    if report.failed_replicates > 0 {
        eprintln!(
            "pfpca: warning: {} of {} replicates failed and were excluded",
            report.failed_replicates, cfg.replicates
        );
    }
    write_atomic(
        &args.out_dir.join("report.json"),
        &io::report_to_json(&cfg, &report),
    )?;
    write_atomic(&args.out_dir.join("table.csv"), &io::report_table_csv(&report))?;
    write_atomic(
        &args.out_dir.join("replicates.csv"),
        &io::report_replicates_csv(&report),
    )?;
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.result)?;
    let result = io::result_from_json(&text)?;
    let available = result.components.len();

    let indices: Vec<usize> = match &args.components {
        Some(list) => {
            let mut out = Vec::new();
            for cell in list.split(',') {
                let idx: usize = cell.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("--components: '{cell}' is not an index"))
                })?;
                if idx == 0 || idx > available {
                    return Err(Error::UnknownComponent { index: idx, available });
                }
                out.push(idx - 1);
            }
            out
        }
        None => (0..available).collect(),
    };

    let points: Vec<f64> = if let Some(list) = &args.points {
        parse_float_list(list, "--points")?
    } else if let (Some(range), Some(num)) = (&args.range, args.num) {
        let bounds: Vec<f64> = range
            .split(':')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("--range: '{cell}' is not a number"))
                })
            })
            .collect::<Result<_>>()?;
        if bounds.len() != 2 || !(bounds[0] < bounds[1]) {
            return Err(Error::InvalidConfig(format!(
                "--range: expected MIN:MAX with MIN < MAX, got '{range}'"
            )));
        }
        if num < 2 {
            return Err(Error::InvalidConfig("--num must be at least 2".into()));
        }
        let step = (bounds[1] - bounds[0]) / (num - 1) as f64;
        (0..num)
            .map(|i| {
                if i + 1 == num {
                    bounds[1]
                } else {
                    bounds[0] + step * i as f64
                }
            })
            .collect()
    } else {
        refined_times(&result.grid)
    };

    let mut columns = Vec::with_capacity(indices.len());
    for idx in indices {
        let comp = &result.components[idx];
        let spline = SplineFunction::interpolate(&result.grid, comp.fit.loading.as_slice())?;
        let values: Vec<f64> = points.iter().map(|t| spline.evaluate(*t)).collect();
        columns.push((format!("fpc{}", idx + 1), values));
    }
    write_atomic(&args.output, &curves_to_csv(&points, &columns))?;
    Ok(())
}
