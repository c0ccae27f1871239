//! Monte Carlo grid sweep over the cost weights and the habituation factor,
//! with CSV and SVG heatmap output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bandit::PriorSpec;
use crate::env::ModelRecord;
use crate::error::{Error, Result};
use crate::features::CostParams;
use crate::sim::{mean_cumulative_quality, percentile25_cumulative_quality, run_trial, StudyConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub xi1_grid: Vec<f64>,
    pub xi2_grid: Vec<f64>,
    pub e_values: Vec<f64>,
    pub mc_trials: usize,
    pub study: StudyConfig,
    /// Reuse the same per-trial seeds in every cell.
    pub common_random_numbers: bool,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

pub fn default_grid() -> Vec<f64> {
    (0..10).map(|i| 20.0 * i as f64).collect()
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            xi1_grid: default_grid(),
            xi2_grid: default_grid(),
            e_values: vec![0.0, 0.5, 0.8],
            mc_trials: 100,
            study: StudyConfig::default(),
            common_random_numbers: true,
            workers: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let grids = [
            ("xi1 grid", &self.xi1_grid),
            ("xi2 grid", &self.xi2_grid),
            ("E values", &self.e_values),
        ];
        for (name, g) in grids {
            if g.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} is empty")));
            }
            if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must hold finite non-negative values"
                )));
            }
        }
        if self.mc_trials == 0 {
            return Err(Error::InvalidArgument("mc_trials must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        self.study.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Mean over users of cumulative quality.
    MeanCumulative,
    /// 25th percentile over users of cumulative quality.
    Percentile25,
}

impl Criterion {
    pub const ALL: [Criterion; 2] = [Criterion::MeanCumulative, Criterion::Percentile25];

    pub fn slug(self) -> &'static str {
        match self {
            Criterion::MeanCumulative => "mean",
            Criterion::Percentile25 => "p25",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Criterion::MeanCumulative => "mean cumulative quality",
            Criterion::Percentile25 => "25th percentile cumulative quality",
        }
    }
}

/// Both criteria for one simulated study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialCriteria {
    pub mean_cumulative: f64,
    pub percentile25: f64,
}

impl TrialCriteria {
    pub fn get(&self, c: Criterion) -> f64 {
        match c {
            Criterion::MeanCumulative => self.mean_cumulative,
            Criterion::Percentile25 => self.percentile25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over trials divided by the square root of
    /// the trial count; zero with a single trial.
    pub std_error: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Self { mean, std_error }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub e: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub trials: Vec<TrialCriteria>,
}

impl CellResult {
    pub fn estimate(&self, c: Criterion) -> Estimate {
        let v: Vec<f64> = self.trials.iter().map(|t| t.get(c)).collect();
        Estimate::of(&v)
    }
}

/// Cells ordered by E, then xi1, then xi2, each in ascending grid order.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub xi1_grid: Vec<f64>,
    pub xi2_grid: Vec<f64>,
    pub e_values: Vec<f64>,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, e: f64, xi1: f64, xi2: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.e == e && c.xi1 == xi1 && c.xi2 == xi2)
    }

    /// Cell with the highest mean for `criterion` at `e`; ties go to the
    /// smallest xi1, then the smallest xi2.
    pub fn argmax(&self, e: f64, criterion: Criterion) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        for c in self.cells.iter().filter(|c| c.e == e) {
            let m = c.estimate(criterion).mean;
            let better = match best {
                None => true,
                Some((bm, bx1, bx2)) => {
                    m > bm || (m == bm && (c.xi1, c.xi2) < (bx1, bx2))
                }
            };
            if better {
                best = Some((m, c.xi1, c.xi2));
            }
        }
        best.map(|(_, a, b)| (a, b))
    }
}

fn sorted_unique(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Seed for one cell: the master seed under common random numbers,
/// otherwise a mix of the master seed and the cell coordinates.
pub fn cell_seed(master_seed: u64, e: f64, xi1: f64, xi2: f64, common: bool) -> u64 {
    if common {
        return master_seed;
    }
    let mut h = master_seed;
    for v in [e, xi1, xi2] {
        h = splitmix64(h ^ v.to_bits());
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Criteria for one study in one cell.
pub fn run_cell_trial(
    config: &SweepConfig,
    pool: &[ModelRecord],
    prior: &PriorSpec,
    e: f64,
    xi1: f64,
    xi2: f64,
    trial: usize,
) -> Result<TrialCriteria> {
    let mut study = config.study.clone();
    study.cost_params = CostParams {
        xi1,
        xi2,
        ..config.study.cost_params
    };
    study.effect_shrink = e;
    study.master_seed = cell_seed(
        config.study.master_seed,
        e,
        xi1,
        xi2,
        config.common_random_numbers,
    );
    let result = run_trial(&study, pool, prior, trial as u64).map_err(|source| Error::Sweep {
        e,
        xi1,
        xi2,
        trial,
        source: Box::new(source),
    })?;
    Ok(TrialCriteria {
        mean_cumulative: mean_cumulative_quality(&result),
        percentile25: percentile25_cumulative_quality(&result),
    })
}

pub fn run_sweep(
    config: &SweepConfig,
    pool: &[ModelRecord],
    prior: &PriorSpec,
) -> Result<SweepResult> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::InvalidArgument("user model pool is empty".into()));
    }
    let xi1_grid = sorted_unique(&config.xi1_grid);
    let xi2_grid = sorted_unique(&config.xi2_grid);
    let e_values = sorted_unique(&config.e_values);

    let mut tasks = Vec::new();
    for &e in &e_values {
        for &xi1 in &xi1_grid {
            for &xi2 in &xi2_grid {
                for trial in 0..config.mc_trials {
                    tasks.push((e, xi1, xi2, trial));
                }
            }
        }
    }
    let run = || -> Result<Vec<TrialCriteria>> {
        tasks
            .par_iter()
            .map(|&(e, xi1, xi2, trial)| run_cell_trial(config, pool, prior, e, xi1, xi2, trial))
            .collect()
    };
    let outcomes = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let cells = outcomes
        .chunks(config.mc_trials)
        .zip(tasks.iter().step_by(config.mc_trials))
        .map(|(trials, &(e, xi1, xi2, _))| CellResult {
            e,
            xi1,
            xi2,
            trials: trials.to_vec(),
        })
        .collect();
    Ok(SweepResult {
        xi1_grid,
        xi2_grid,
        e_values,
        cells,
    })
}

pub const TRIALS_FILE: &str = "trials.csv";
const TRIALS_HEADER: [&str; 6] = ["E", "xi1", "xi2", "trial", "mean_cumulative", "percentile25"];

pub fn write_trials(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIALS_HEADER)?;
    for c in &result.cells {
        for (i, t) in c.trials.iter().enumerate() {
            w.write_record([
                c.e.to_string(),
                c.xi1.to_string(),
                c.xi2.to_string(),
                i.to_string(),
                t.mean_cumulative.to_string(),
                t.percentile25.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Rebuild a sweep result from a per-trial CSV.
pub fn read_trials(path: &Path) -> Result<SweepResult> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().collect::<Vec<_>>() != TRIALS_HEADER {
        return Err(Error::SchemaMismatch(format!(
            "{} header must be {}",
            path.display(),
            TRIALS_HEADER.join(",")
        )));
    }
    let mut rows: Vec<(f64, f64, f64, usize, TrialCriteria)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            let raw = rec.get(k).unwrap_or("");
            raw.parse().map_err(|_| Error::UnparseableNumeric {
                row: i + 2,
                field: TRIALS_HEADER[k].into(),
                value: raw.into(),
            })
        };
        rows.push((
            num(0)?,
            num(1)?,
            num(2)?,
            num(3)? as usize,
            TrialCriteria {
                mean_cumulative: num(4)?,
                percentile25: num(5)?,
            },
        ));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no trials", path.display())));
    }
    rows.sort_by(|a, b| {
        (a.0, a.1, a.2, a.3)
            .partial_cmp(&(b.0, b.1, b.2, b.3))
            .expect("finite coordinates")
    });
    let e_values = sorted_unique(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let xi1_grid = sorted_unique(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let xi2_grid = sorted_unique(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    let mut cells: Vec<CellResult> = Vec::new();
    for (e, xi1, xi2, _, t) in rows {
        match cells.last_mut() {
            Some(c) if c.e == e && c.xi1 == xi1 && c.xi2 == xi2 => c.trials.push(t),
            _ => cells.push(CellResult {
                e,
                xi1,
                xi2,
                trials: vec![t],
            }),
        }
    }
    Ok(SweepResult {
        xi1_grid,
        xi2_grid,
        e_values,
        cells,
    })
}

pub fn heatmap_stem(e: f64, criterion: Criterion) -> String {
    format!("heatmap_E{e}_{}", criterion.slug())
}

/// Grid of cell means at `e`, rows by xi1 and columns by xi2. Missing cells are NaN.
fn mean_matrix(result: &SweepResult, e: f64, criterion: Criterion) -> Vec<Vec<f64>> {
    result
        .xi1_grid
        .iter()
        .map(|&xi1| {
            result
                .xi2_grid
                .iter()
                .map(|&xi2| {
                    result
                        .cell(e, xi1, xi2)
                        .map_or(f64::NAN, |c| c.estimate(criterion).mean)
                })
                .collect()
        })
        .collect()
}

/// Write the CSV matrix and SVG heatmap for one `(E, criterion)` pair;
/// returns the two paths.
pub fn emit_heatmap(
    result: &SweepResult,
    e: f64,
    criterion: Criterion,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let stem = heatmap_stem(e, criterion);
    let csv_path = dir.join(format!("{stem}.csv"));
    let svg_path = dir.join(format!("{stem}.svg"));
    let matrix = mean_matrix(result, e, criterion);

    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["xi1\\xi2".to_string()];
    header.extend(result.xi2_grid.iter().map(f64::to_string));
    w.write_record(&header)?;
    for (xi1, row) in result.xi1_grid.iter().zip(&matrix) {
        let mut line = vec![xi1.to_string()];
        line.extend(row.iter().map(f64::to_string));
        w.write_record(&line)?;
    }
    w.flush().map_err(|err| Error::io(&csv_path, err))?;

    let argmax = result.argmax(e, criterion);
    let svg = render_svg(result, &matrix, e, criterion, argmax);
    fs::write(&svg_path, svg).map_err(|err| Error::io(&svg_path, err))?;
    Ok((csv_path, svg_path))
}

/// Row grid, column grid and the matrix of cell values.
pub type HeatmapTable = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

/// Parse a heatmap CSV back into `(xi1 grid, xi2 grid, matrix)`.
pub fn read_heatmap_csv(path: &Path) -> Result<HeatmapTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = rdr.records();
    let parse = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::UnparseableNumeric {
            row: 0,
            field: "heatmap".into(),
            value: s.into(),
        })
    };
    let header = records
        .next()
        .ok_or_else(|| Error::SchemaMismatch("empty heatmap".into()))??;
    let xi2 = header.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
    let mut xi1 = Vec::new();
    let mut matrix = Vec::new();
    for rec in records {
        let rec = rec?;
        let mut it = rec.iter();
        xi1.push(parse(it.next().unwrap_or(""))?);
        matrix.push(it.map(parse).collect::<Result<Vec<_>>>()?);
    }
    Ok((xi1, xi2, matrix))
}

/// Two-stop blue to yellow ramp.
fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(38.0, 250.0),
        lerp(70.0, 220.0),
        lerp(140.0, 60.0)
    )
}

fn render_svg(
    result: &SweepResult,
    matrix: &[Vec<f64>],
    e: f64,
    criterion: Criterion,
    argmax: Option<(f64, f64)>,
) -> String {
    const CELL: f64 = 56.0;
    const LEFT: f64 = 70.0;
    const TOP: f64 = 60.0;
    let rows = result.xi1_grid.len() as f64;
    let cols = result.xi2_grid.len() as f64;
    let width = LEFT + cols * CELL + 20.0;
    let height = TOP + rows * CELL + 50.0;

    let finite: Vec<f64> = matrix.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut s = String::new();
    let argmax_attr = argmax.map_or(String::new(), |(a, b)| format!(" data-argmax=\"{a},{b}\""));
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\"{argmax_attr}>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{LEFT}\" y=\"20\" font-size=\"14\">{} (E = {e})</text>",
        criterion.label()
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"42\" text-anchor=\"middle\">xi2</text>",
        LEFT + cols * CELL / 2.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">xi1</text>",
        TOP + rows * CELL / 2.0,
        TOP + rows * CELL / 2.0
    );
    for (j, xi2) in result.xi2_grid.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xi2}</text>",
            LEFT + (j as f64 + 0.5) * CELL,
            TOP - 4.0
        );
    }
    for (i, (xi1, row)) in result.xi1_grid.iter().zip(matrix).enumerate() {
        let y = TOP + i as f64 * CELL;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{xi1}</text>",
            LEFT - 6.0,
            y + CELL / 2.0 + 4.0
        );
        for (j, v) in row.iter().enumerate() {
            let x = LEFT + j as f64 * CELL;
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"><title>xi1={xi1} xi2={} value={v}</title></rect>",
                ramp((v - lo) / span),
                result.xi2_grid[j]
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{:.0}</text>",
                x + CELL / 2.0,
                y + CELL / 2.0 + 3.0,
                v
            );
        }
    }
    if let Some((a, b)) = argmax {
        let i = result.xi1_grid.iter().position(|v| *v == a);
        let j = result.xi2_grid.iter().position(|v| *v == b);
        if let (Some(i), Some(j)) = (i, j) {
            let _ = writeln!(
                s,
                "<rect class=\"argmax\" x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"none\" stroke=\"#000\" stroke-width=\"3\"/>",
                LEFT + j as f64 * CELL,
                TOP + i as f64 * CELL
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{LEFT}\" y=\"{}\">range {lo:.1} to {hi:.1}</text>",
        TOP + rows * CELL + 25.0
    );
    s.push_str("</svg>\n");
    s
}

/// Write `trials.csv` plus a CSV and SVG heatmap per `(E, criterion)`.
/// Returns every written path.
pub fn write_outputs(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trials = dir.join(TRIALS_FILE);
    write_trials(&trials, result)?;
    let mut paths = vec![trials];
    paths.extend(emit_all_heatmaps(result, dir)?);
    Ok(paths)
}

pub fn emit_all_heatmaps(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for &e in &result.e_values {
        for c in Criterion::ALL {
            let (csv, svg) = emit_heatmap(result, e, c, dir)?;
            paths.push(csv);
            paths.push(svg);
        }
    }
    Ok(paths)
}
