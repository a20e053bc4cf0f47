use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{ExperimentConfig, Resolved};
use crate::alphabet::frame_alphabets;
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::quantizer::{self, check_stability, StabilityCheck};
use crate::reconstruction::{
    canonical_left_inverse, error_diagnostics, sobolev_left_inverse, RunContext,
};

pub const CSV_HEADER: &str =
    "N,err_canonical,err_sobolev,err_memoryless,max_state_norm,apriori_bound,l_dr_norm";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    ErrCanonical,
    ErrSobolev,
    ErrMemoryless,
    MaxStateNorm,
    AprioriBound,
    LDrNorm,
}

impl Column {
    pub const ALL: [Column; 6] = [
        Column::ErrCanonical,
        Column::ErrSobolev,
        Column::ErrMemoryless,
        Column::MaxStateNorm,
        Column::AprioriBound,
        Column::LDrNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::ErrCanonical => "err_canonical",
            Column::ErrSobolev => "err_sobolev",
            Column::ErrMemoryless => "err_memoryless",
            Column::MaxStateNorm => "max_state_norm",
            Column::AprioriBound => "apriori_bound",
            Column::LDrNorm => "l_dr_norm",
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Column::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::BadParameter(format!("unknown column {s:?}")))
    }
}

/// Per-row quantities that are checked but not written to CSV.
#[derive(Clone, Debug, Default)]
pub struct RowDiagnostics {
    /// Largest `‖(x - x̃) - L(y - q)‖` over both left inverses.
    pub identity_residual: f64,
    /// `‖L(y - q) - L D^r G v‖` for the Sobolev inverse.
    pub chain_residual: f64,
    /// Largest `‖x - L T x‖` over both left inverses.
    pub pipeline_residual: f64,
    /// `‖y - q - (I - H) v‖`.
    pub recursion_residual: f64,
    pub g_norm: f64,
    pub g_norm_converged: bool,
    pub apriori_bound_canonical: f64,
    pub stability: Option<StabilityCheck>,
    /// Occurrences of each symbol value in the index stream.
    pub symbol_counts: Vec<usize>,
    /// Every symbol fits its subspace alphabet.
    pub symbols_in_range: bool,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ResultRow {
    pub n: usize,
    pub err_canonical: f64,
    pub err_sobolev: f64,
    pub err_memoryless: Option<f64>,
    pub max_state_norm: f64,
    pub apriori_bound: f64,
    pub l_dr_norm: f64,
    pub diagnostics: RowDiagnostics,
}

impl ResultRow {
    pub fn get(&self, column: Column) -> Option<f64> {
        match column {
            Column::ErrCanonical => Some(self.err_canonical),
            Column::ErrSobolev => Some(self.err_sobolev),
            Column::ErrMemoryless => self.err_memoryless,
            Column::MaxStateNorm => Some(self.max_state_norm),
            Column::AprioriBound => Some(self.apriori_bound),
            Column::LDrNorm => Some(self.l_dr_norm),
        }
    }

    fn csv_line(&self) -> String {
        let mem = self.err_memoryless.map(|e| format!("{e:e}")).unwrap_or_default();
        format!(
            "{},{:e},{:e},{},{:e},{:e},{:e}",
            self.n,
            self.err_canonical,
            self.err_sobolev,
            mem,
            self.max_state_norm,
            self.apriori_bound,
            self.l_dr_norm
        )
    }
}

/// One grid point: build the frame, quantize, reconstruct both ways.
pub fn compute_row(cfg: &ExperimentConfig, resolved: &Resolved, n: usize) -> Result<ResultRow> {
    let filter = &resolved.filter;
    let r = filter.order();
    let frame = cfg.frame_for(n)?;
    let x = cfg.signal_vector();
    let y = frame.analysis(&x)?;
    let alphabets = frame_alphabets(&frame);
    let run = quantizer::ffsd_run_with(&frame, &alphabets, filter, &y)?;

    let canonical = canonical_left_inverse(&frame)?;
    let sobolev = sobolev_left_inverse(&frame, r)?;
    let ctx = || RunContext { x: &x, y: &y, run: &run };
    let sob = error_diagnostics(&frame, filter, &sobolev, &resolved.stability, Some(ctx()))?;
    // Reuse the G estimate: it does not depend on the left inverse.
    let l_dr_canonical = canonical.l_dr_norm(&frame, r)?;
    let can_err = (&x - canonical.reconstruct(&run.q)?).norm();
    let can_identity = (&x - canonical.reconstruct(&run.q)? - canonical.reconstruct(&y.sub(&run.q))?).norm();

    let err_memoryless = if cfg.memoryless {
        let mem = quantizer::memoryless_run(&frame, &y)?;
        Some((&x - canonical.reconstruct(&mem.q)?).norm())
    } else {
        None
    };

    let pipeline_residual = [&canonical, &sobolev]
        .iter()
        .map(|l| l.reconstruct(&y).map(|xr| (&x - xr).norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let max_symbol = frame.max_dim();
    let mut symbol_counts = vec![0; max_symbol + 1];
    for &k in &run.q_indices {
        if k <= max_symbol {
            symbol_counts[k] += 1;
        }
    }
    let symbols_in_range = run
        .q_indices
        .iter()
        .zip(frame.subspaces())
        .all(|(&k, s)| k <= s.dim());

    let sqrt_n = (n as f64).sqrt();
    Ok(ResultRow {
        n,
        err_canonical: can_err,
        err_sobolev: sob.observed_error.unwrap_or(f64::NAN),
        err_memoryless,
        max_state_norm: run.max_state_norm,
        apriori_bound: sob.apriori_bound,
        l_dr_norm: sob.l_dr_norm,
        diagnostics: RowDiagnostics {
            identity_residual: sob.identity_residual.unwrap_or(f64::NAN).max(can_identity),
            chain_residual: sob.chain_residual.unwrap_or(f64::NAN),
            pipeline_residual,
            recursion_residual: quantizer::recursion_residual(&frame, filter, &y, &run),
            g_norm: sob.g_norm,
            g_norm_converged: sob.g_norm_converged,
            apriori_bound_canonical: sob.g_norm * sob.c_bound * sqrt_n * l_dr_canonical,
            stability: Some(check_stability(&y, &run, &resolved.stability)),
            symbol_counts,
            symbols_in_range,
            indices: run.q_indices.clone(),
        },
    })
}

/// Runs every grid point (in parallel) and writes any configured outputs.
/// Rows come back sorted by `N`; if a grid point fails, the rows that did
/// succeed are still written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let resolved = cfg.resolve()?;
    let mut grid = cfg.n_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    info!(
        "experiment: r = {}, σ = {}, α = {}, {} grid points",
        resolved.filter.order(),
        resolved.filter.sigma(),
        resolved.stability.alpha,
        grid.len()
    );
    let results: Vec<Result<ResultRow>> =
        grid.par_iter().map(|&n| compute_row(cfg, &resolved, n)).collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut first_error = None;
    for res in results {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                warn!("grid point failed: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    write_outputs(cfg, &resolved.filter, &rows)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

fn write_outputs(cfg: &ExperimentConfig, filter: &FilterSpec, rows: &[ResultRow]) -> Result<()> {
    let out = &cfg.outputs;
    if let Some(path) = &out.csv {
        write_csv(rows, std::fs::File::create(path)?)?;
        let script = out
            .plot_script
            .clone()
            .unwrap_or_else(|| path.with_extension("gp"));
        std::fs::write(script, plot_script(path, filter.order(), cfg.memoryless))?;
    }
    if let Some(path) = &out.indices {
        let streams: BTreeMap<String, &[usize]> = rows
            .iter()
            .map(|r| (r.n.to_string(), r.diagnostics.indices.as_slice()))
            .collect();
        std::fs::write(path, serde_json::to_string(&streams)?)?;
    }
    Ok(())
}

pub fn write_csv(rows: &[ResultRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::BadData(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::BadData(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::BadData(format!("unexpected CSV header {:?}", header.join(","))));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse().map_err(|e| Error::BadData(format!("bad number {s:?}: {e}")))
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::BadData(e.to_string()))?;
            let mem = &rec[3];
            Ok(ResultRow {
                n: rec[0]
                    .parse()
                    .map_err(|e| Error::BadData(format!("bad N {:?}: {e}", &rec[0])))?,
                err_canonical: parse(&rec[1])?,
                err_sobolev: parse(&rec[2])?,
                err_memoryless: if mem.is_empty() { None } else { Some(parse(mem)?) },
                max_state_norm: parse(&rec[4])?,
                apriori_bound: parse(&rec[5])?,
                l_dr_norm: parse(&rec[6])?,
                diagnostics: RowDiagnostics::default(),
            })
        })
        .collect()
}

/// Gnuplot script plotting the error columns and reference curves
/// `2/N` and `100/N²` (order 2) or `10⁴/N³` (order 3).
pub fn plot_script(csv: &Path, order: usize, memoryless: bool) -> String {
    let file = csv.display();
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale xy\n");
    s.push_str("set key top right\n");
    s.push_str("set xlabel 'N'\nset ylabel 'error'\n");
    s.push_str(&format!("set title 'order {order} fusion frame Sigma-Delta'\n"));
    let mut curves = vec![
        format!("'{file}' using 1:2 with linespoints title 'canonical'"),
        format!("'{file}' using 1:3 with linespoints title 'Sobolev'"),
    ];
    if memoryless {
        curves.push(format!("'{file}' using 1:4 with linespoints title 'memoryless'"));
    }
    curves.push("2/x with lines dashtype 2 title '2/N'".into());
    match order {
        2 => curves.push("100/x**2 with lines dashtype 3 title '100/N^2'".into()),
        3 => curves.push("1e4/x**3 with lines dashtype 3 title '10^4/N^3'".into()),
        _ => {}
    }
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s
}

/// Least-squares slope of `log₁₀ value` against `log₁₀ N`.
pub fn fit_slope_points(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::BadData(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some((n, v)) = points.iter().find(|(n, v)| !(*n > 0.0 && *v > 0.0)) {
        return Err(Error::BadData(format!("nonpositive value {v} at N = {n}")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(n, v)| (n.log10(), v.log10())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::BadData("all N values are equal".into()));
    }
    Ok(sxy / sxx)
}

pub fn fit_slope(rows: &[ResultRow], column: Column) -> Result<f64> {
    let points = rows
        .iter()
        .map(|r| {
            r.get(column)
                .map(|v| (r.n as f64, v))
                .ok_or_else(|| Error::BadData(format!("column {column} missing at N = {}", r.n)))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_slope_points(&points)
}

/// Slope over rows with `N ≥ 2 n_r`, where every tap of the filter is active.
pub fn fit_slope_active(rows: &[ResultRow], column: Column, filter: &FilterSpec) -> Result<f64> {
    let min_n = 2 * filter.length();
    let active: Vec<ResultRow> = rows.iter().filter(|r| r.n >= min_n).cloned().collect();
    fit_slope(&active, column)
}
