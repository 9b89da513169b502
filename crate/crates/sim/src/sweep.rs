//! Replicated sweeps over scales and policies, and the sublinearity report.
//!
//! Every `(policy, r, replica)` task gets its own generator stream derived from
//! the root seed and the task index, runs on the rayon pool, and is gathered back
//! by index. Aggregates are computed from sorted replica values, so neither the
//! schedule nor the replica order can change a single output bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use grand_core::analysis::{occupancy_floor_report, FloorRow};
use grand_core::fluid::{distance_to_optimal_set, objective_gap};
use grand_core::stats::{batch_half_width, BATCHES};
use grand_core::{min_admissible_p, simulate, solve_lp, FluidPoint, LpSolution, Policy, RunRecord, RunSpec};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::Config;
use crate::csv::{config_label, field, join, real};

/// Frank–Wolfe tolerance for distances to the optimal set.
pub const DISTANCE_TOL: f64 = 1e-9;
/// Level of the one-sided Welch tests behind the trend verdicts.
pub const WELCH_LEVEL: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub config: Config,
    pub r_grid: Vec<f64>,
    pub policies: Vec<Policy>,
    pub replicas: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn from_config(config: &Config) -> Self {
        Self {
            config: config.clone(),
            r_grid: config.r_grid.clone(),
            policies: config.policies.clone(),
            replicas: config.replicas,
            seed: config.seed,
        }
    }

    fn cells(&self) -> Vec<(Policy, f64)> {
        self.policies.iter().flat_map(|&p| self.r_grid.iter().map(move |&r| (p, r))).collect()
    }
}

/// Fluid gaps of one completed run.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub record: RunRecord,
    /// `Σ_k x̄_k − L*` for the time-averaged state.
    pub gap_over_r: f64,
    /// Distance from the time-averaged state to `X*`.
    pub distance_over_r: f64,
    pub batch_gaps: Vec<f64>,
    pub batch_distances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub cell: usize,
    pub policy: Policy,
    pub r: f64,
    pub replica: usize,
    pub seed: u64,
    pub stream: u64,
    pub result: Result<RunMetrics, String>,
}

/// Mean with a 95% half-width and the sample it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub samples: Vec<f64>,
}

impl Estimate {
    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiSource {
    Replicas,
    BatchMeans,
}

impl CiSource {
    fn name(self) -> &'static str {
        match self {
            Self::Replicas => "replicas",
            Self::BatchMeans => "batch-means",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub policy: Policy,
    pub r: f64,
    pub ok: usize,
    pub failed: usize,
    pub ci_source: CiSource,
    pub gap_over_r: Option<Estimate>,
    pub distance_over_r: Option<Estimate>,
    /// Mean fractions of time the three monitored conditions held.
    pub diagnostics: [f64; 3],
    pub floors: Vec<FloorRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Objective,
    Distance,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Objective => "objective",
            Self::Distance => "distance",
        }
    }
}

/// Trend verdict for one policy and one gap variant.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub policy: Policy,
    pub variant: Variant,
    pub kind: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub lp: LpSolution,
    pub runs: Vec<RunOutcome>,
    pub cells: Vec<CellReport>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

impl GapReport {
    pub fn cell(&self, policy: Policy, r: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.policy == policy && c.r == r)
    }

    pub fn verdict(&self, policy: Policy, variant: Variant) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.policy == policy && v.variant == variant)
    }
}

fn run_one(spec: &RunSpec, lp: &LpSolution, rho: &[f64]) -> Result<RunMetrics, String> {
    let record = simulate(spec).map_err(|e| e.to_string())?;
    let ps = &*spec.packing;
    let distance = |x: &FluidPoint| distance_to_optimal_set(ps, rho, lp.l_star, x, DISTANCE_TOL).map_err(|e| e.to_string());
    let gap_over_r = objective_gap(&record.mean_x, lp.l_star);
    let distance_over_r = distance(&record.mean_x)?;
    let batch_gaps = record.x_batches.iter().map(|x| objective_gap(x, lp.l_star)).collect();
    let batch_distances = record.x_batches.iter().map(distance).collect::<Result<_, _>>()?;
    Ok(RunMetrics { record, gap_over_r, distance_over_r, batch_gaps, batch_distances })
}

/// Runs every `(policy, r, replica)` task and aggregates the results.
///
/// Engine faults are recorded per run and never abort the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<GapReport> {
    let config = &spec.config;
    let rho = config.rho();
    let lp = solve_lp(&config.packing, &rho).context("solving the fluid LP")?;
    let cells = spec.cells();
    let replicas = spec.replicas.max(1);

    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..replicas).map(move |k| (c, k))).collect();
    let runs: Vec<RunOutcome> = tasks
        .par_iter()
        .map(|&(cell, replica)| {
            let (policy, r) = cells[cell];
            let stream = (cell * replicas + replica) as u64;
            let result = config.run_spec(policy, r).map_err(|e| e.to_string()).and_then(|mut run| {
                run.seed = spec.seed;
                run.stream = stream;
                run_one(&run, &lp, &rho)
            });
            RunOutcome { cell, policy, r, replica, seed: spec.seed, stream, result }
        })
        .collect();
    Ok(assemble(config, spec, lp, runs))
}

/// Aggregates already-computed runs, in any order, into a report.
pub fn reaggregate(config: &Config, spec: &SweepSpec, runs: Vec<RunOutcome>) -> GapReport {
    let lp = solve_lp(&config.packing, &config.rho()).expect("the LP solved when the runs were made");
    assemble(config, spec, lp, runs)
}

fn assemble(config: &Config, spec: &SweepSpec, lp: LpSolution, runs: Vec<RunOutcome>) -> GapReport {
    let mut warnings = Vec::new();
    let p_min = min_admissible_p(&config.packing);
    for policy in &spec.policies {
        if let Policy::GrandZp { p } = *policy {
            if p <= p_min {
                warnings.push(format!("p = {p} is not above 1 - 1/(8 kappa) = {p_min}; results are outside the proven range"));
            }
        }
    }
    let reports: Vec<CellReport> = spec
        .cells()
        .iter()
        .enumerate()
        .map(|(n, &(policy, r))| aggregate(config, policy, r, runs.iter().filter(|o| o.cell == n)))
        .collect();
    let verdicts = spec.policies.iter().flat_map(|&p| verdicts_for(p, &reports)).collect();
    GapReport { lp, runs, cells: reports, verdicts, warnings }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Two-sided 95% Student half-width of the mean of `xs` (requires `n ≥ 2`).
fn t_half_width(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2").inverse_cdf(0.975);
    t * (sample_variance(xs) / n).sqrt()
}

fn estimate_from_replicas(values: Vec<f64>) -> Estimate {
    let samples = sorted(values);
    Estimate { mean: mean(&samples), half_width: t_half_width(&samples), samples }
}

fn estimate_from_batches(point: f64, batches: &[f64]) -> Estimate {
    Estimate { mean: point, half_width: batch_half_width(batches), samples: batches.to_vec() }
}

fn aggregate<'a>(config: &Config, policy: Policy, r: f64, runs: impl Iterator<Item = &'a RunOutcome>) -> CellReport {
    let (done, failed): (Vec<&RunOutcome>, Vec<&RunOutcome>) = runs.partition(|o| o.result.is_ok());
    let metrics: Vec<&RunMetrics> = done.iter().map(|o| o.result.as_ref().unwrap()).collect();
    let ci_source = if metrics.len() >= 2 { CiSource::Replicas } else { CiSource::BatchMeans };

    let (gap, dist) = match metrics.as_slice() {
        [] => (None, None),
        [only] if only.batch_gaps.len() == BATCHES => (
            Some(estimate_from_batches(only.gap_over_r, &only.batch_gaps)),
            Some(estimate_from_batches(only.distance_over_r, &only.batch_distances)),
        ),
        [_] => (None, None),
        many => (
            Some(estimate_from_replicas(many.iter().map(|m| m.gap_over_r).collect())),
            Some(estimate_from_replicas(many.iter().map(|m| m.distance_over_r).collect())),
        ),
    };

    let mut diagnostics = [0.0; 3];
    if !metrics.is_empty() {
        let d = |f: fn(&RunRecord) -> f64| mean(&sorted(metrics.iter().map(|m| f(&m.record)).collect()));
        diagnostics = [
            d(|r| r.diagnostics.total_near_scale),
            d(|r| r.diagnostics.types_near_load),
            d(|r| r.diagnostics.occupancy_floor),
        ];
    }
    let floors = match policy {
        Policy::GrandZp { p } if !metrics.is_empty() => {
            let records: Vec<RunRecord> = metrics.iter().map(|m| m.record.clone()).collect();
            occupancy_floor_report(&config.packing, &records, p, r)
        }
        _ => Vec::new(),
    };
    CellReport {
        policy,
        r,
        ok: metrics.len(),
        failed: failed.len(),
        ci_source,
        gap_over_r: gap,
        distance_over_r: dist,
        diagnostics,
        floors,
    }
}

/// One-sided Welch test of `mean(first) > mean(second)`; returns the p-value.
pub fn welch_greater(first: &[f64], second: &[f64]) -> Option<f64> {
    if first.len() < 2 || second.len() < 2 {
        return None;
    }
    let (n1, n2) = (first.len() as f64, second.len() as f64);
    let (v1, v2) = (sample_variance(first) / n1, sample_variance(second) / n2);
    let se2 = v1 + v2;
    let diff = mean(first) - mean(second);
    if se2 == 0.0 {
        return Some(if diff > 0.0 { 0.0 } else { 1.0 });
    }
    let df = se2 * se2 / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    let t = diff / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(1.0 - dist.cdf(t))
}

fn pick(cell: &CellReport, variant: Variant) -> Option<&Estimate> {
    match variant {
        Variant::Objective => cell.gap_over_r.as_ref(),
        Variant::Distance => cell.distance_over_r.as_ref(),
    }
}

fn verdicts_for(policy: Policy, cells: &[CellReport]) -> Vec<Verdict> {
    let row: Vec<&CellReport> = cells.iter().filter(|c| c.policy == policy).collect();
    [Variant::Objective, Variant::Distance]
        .into_iter()
        .map(|variant| {
            let est: Option<Vec<&Estimate>> = row.iter().map(|c| pick(c, variant)).collect();
            match (policy, est) {
                (_, None) => Verdict { policy, variant, kind: "incomplete", pass: false, detail: "some cells have no estimate".into() },
                (_, Some(est)) if est.len() < 2 => {
                    Verdict { policy, variant, kind: "incomplete", pass: false, detail: "need at least two grid points".into() }
                }
                (Policy::GrandZp { .. }, Some(est)) => decreasing(policy, variant, &est),
                (Policy::GrandAz { .. }, Some(est)) => stabilizing(policy, variant, &est),
            }
        })
        .collect()
}

/// gap/r strictly decreasing in the means, with CI-separated endpoints and a
/// significant one-sided Welch test between them.
fn decreasing(policy: Policy, variant: Variant, est: &[&Estimate]) -> Verdict {
    let monotone = est.windows(2).all(|w| w[1].mean < w[0].mean);
    let (first, last) = (est[0], est[est.len() - 1]);
    let separated = first.lo() > last.hi();
    let p = welch_greater(&first.samples, &last.samples);
    let significant = p.is_some_and(|p| p < WELCH_LEVEL);
    let means = est.iter().map(|e| format!("{:.4e}", e.mean)).collect::<Vec<_>>().join(" > ");
    let detail = format!(
        "means {means}; monotone={monotone} ci_separated={separated} welch_p={}",
        p.map_or("n/a".into(), |p| format!("{p:.3e}"))
    );
    Verdict { policy, variant, kind: "decreasing", pass: monotone && separated && significant, detail }
}

/// gap/r at the last two grid points agree within their mutual CIs.
fn stabilizing(policy: Policy, variant: Variant, est: &[&Estimate]) -> Verdict {
    let (a, b) = (est[est.len() - 2], est[est.len() - 1]);
    let diff = (a.mean - b.mean).abs();
    let tol = a.half_width + b.half_width;
    let pass = diff <= tol;
    let detail = format!("last two means {:.4e}, {:.4e}; |diff| {:.3e} vs half-width sum {:.3e}", a.mean, b.mean, diff, tol);
    Verdict { policy, variant, kind: "stabilizing", pass, detail }
}

fn policy_cells(policy: Policy) -> [String; 2] {
    [policy.name().to_string(), real(policy.parameter())]
}

/// `runs.csv`: one row per `(policy, r, replica)`.
pub fn runs_csv(config: &Config, report: &GapReport) -> String {
    let ps = &config.packing;
    let mut header = vec!["run_id", "r", "policy", "param", "replica", "seed", "stream", "status"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(run_value_header(config));
    let width = header.len();
    let mut out = join(header);
    out.push('\n');
    for (id, o) in report.runs.iter().enumerate() {
        let mut cells = vec![id.to_string(), real(o.r)];
        cells.extend(policy_cells(o.policy));
        cells.extend([o.replica.to_string(), o.seed.to_string(), o.stream.to_string()]);
        match &o.result {
            Ok(m) => {
                cells.push("ok".into());
                cells.extend(run_values(&m.record, o.r, Some((m.gap_over_r, m.distance_over_r))));
            }
            Err(e) => {
                cells.push(field(&format!("failed: {e}")));
                cells.resize(width, String::new());
            }
        }
        debug_assert_eq!(cells.len(), width, "{}", ps.len());
        out.push_str(&join(cells));
        out.push('\n');
    }
    out
}

/// Columns shared by `simulate` output and `runs.csv` after the identifying prefix.
pub fn run_value_header(config: &Config) -> Vec<String> {
    let ps = &config.packing;
    let mut h = Vec::new();
    h.extend(ps.configs().iter().map(|k| format!("x_{}", config_label(k))));
    h.extend((0..ps.num_types()).map(|i| format!("y_{i}")));
    h.push("z".into());
    h.extend(["frac_total_near_scale", "frac_types_near_load", "frac_occupancy_floor"].map(String::from));
    h.extend(ps.configs().iter().map(|k| format!("hw_x_{}", config_label(k))));
    h.extend((0..ps.num_types()).map(|i| format!("hw_y_{i}")));
    h.push("hw_z".into());
    h.extend(["samples", "gap_over_r", "distance_over_r"].map(String::from));
    h
}

pub fn run_values(rec: &RunRecord, _r: f64, gaps: Option<(f64, f64)>) -> Vec<String> {
    let mut v = Vec::new();
    v.extend(rec.mean_x.as_slice().iter().map(|&x| real(x)));
    v.extend(rec.mean_y.iter().map(|&y| real(y)));
    v.push(real(rec.mean_z));
    let d = rec.diagnostics;
    v.extend([d.total_near_scale, d.types_near_load, d.occupancy_floor].map(real));
    v.extend(rec.half_widths.x.iter().map(|&x| real(x)));
    v.extend(rec.half_widths.y.iter().map(|&y| real(y)));
    v.push(real(rec.half_widths.z));
    v.push(rec.samples.to_string());
    match gaps {
        Some((g, d)) => v.extend([real(g), real(d)]),
        None => v.extend([String::new(), String::new()]),
    }
    v
}

/// `report.csv`: one row per `(policy, r)` cell.
pub fn report_csv(report: &GapReport) -> String {
    let header = [
        "policy", "param", "r", "replicas_ok", "replicas_failed", "ci_source",
        "objective_gap", "objective_gap_hw", "gap_over_r", "gap_over_r_hw",
        "distance", "distance_hw", "distance_over_r", "distance_over_r_hw",
        "frac_total_near_scale", "frac_types_near_load", "frac_occupancy_floor",
        "min_x0_over_r_p",
    ];
    let mut out = join(header.map(String::from));
    out.push('\n');
    for c in &report.cells {
        let mut cells = policy_cells(c.policy).to_vec();
        cells.extend([real(c.r), c.ok.to_string(), c.failed.to_string(), c.ci_source.name().into()]);
        for est in [&c.gap_over_r, &c.distance_over_r] {
            match est {
                Some(e) => cells.extend([real(e.mean * c.r), real(e.half_width * c.r), real(e.mean), real(e.half_width)]),
                None => cells.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        cells.extend(c.diagnostics.map(real));
        cells.push(c.floors.first().map_or(String::new(), |row| real(row.ratio)));
        out.push_str(&join(cells));
        out.push('\n');
    }
    out
}

/// `verdicts.txt`: one line per policy and gap variant, then warnings.
pub fn verdicts_txt(report: &GapReport) -> String {
    let mut out = String::new();
    for v in &report.verdicts {
        let _ = writeln!(
            out,
            "{} {}={} {} gap/r {}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            if matches!(v.policy, Policy::GrandZp { .. }) { "p" } else { "a" },
            v.policy.parameter(),
            v.policy.name(),
            v.variant.name(),
            v.kind,
            v.detail
        );
    }
    let failed: usize = report.cells.iter().map(|c| c.failed).sum();
    if failed > 0 {
        let _ = writeln!(out, "WARN {failed} run(s) failed; see runs.csv");
    }
    for w in &report.warnings {
        let _ = writeln!(out, "WARN {w}");
    }
    out
}

/// `floors.csv`: occupancy floors of every `GRAND(Z^p)` cell.
pub fn floors_csv(report: &GapReport) -> String {
    let mut out = String::from("policy,param,r,config,min_count,exponent,scale,ratio\n");
    for c in &report.cells {
        for row in &c.floors {
            let mut cells = policy_cells(c.policy).to_vec();
            cells.extend([
                real(c.r),
                config_label(&row.config),
                row.min_count.to_string(),
                real(row.exponent),
                real(row.scale),
                real(row.ratio),
            ]);
            out.push_str(&join(cells));
            out.push('\n');
        }
    }
    out
}

/// Writes `runs.csv`, `report.csv`, `verdicts.txt` and `floors.csv` into `dir`.
pub fn write_outputs(config: &Config, report: &GapReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = [
        ("runs.csv", runs_csv(config, report)),
        ("report.csv", report_csv(report)),
        ("verdicts.txt", verdicts_txt(report)),
        ("floors.csv", floors_csv(report)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
