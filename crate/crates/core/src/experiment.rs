//! End-to-end runs: sample, solve, reconstruct and compare the surrogate's
//! moments with Monte Carlo and quasi-Monte Carlo estimates against a
//! QMC reference.

use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::fem::{assemble_mass, assemble_stiffness, ParametricSolver};
use crate::field::{ParameterDomain, ProblemSpec, CATALOG};
use crate::mesh::Mesh2D;
use crate::poly::{BasisFamily, BasisSpec};
use crate::reconstruct::{reconstruct_with_stiffness, AlsConfig, FitReport};
use crate::sampling::{map_unit, pseudo_point};
use crate::scalar::Real;
use crate::sobol::SobolSequence;
use crate::sparse::SparseSpdOperator;
use crate::tt::TensorTrain;

/// Column names of the error CSV.
pub const CSV_HEADER: [&str; 10] = [
    "N",
    "mean_rel_err_reco",
    "mean_rel_err_mc",
    "mean_rel_err_qmc",
    "var_rel_err_reco",
    "var_rel_err_mc",
    "var_rel_err_qmc",
    "holdout_rel_err",
    "ranks",
    "sweeps",
];

/// First pseudo-random counter of the held-out test set. Training sets use
/// counters `0..N`, so the two never overlap.
pub const HOLDOUT_OFFSET: u64 = 1 << 40;

/// Solves per parallel batch when streaming reference samples.
const SOLVE_BATCH: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    /// Number of parameters (ignored for `cookie`, which has nine).
    #[serde(rename = "M")]
    pub modes: usize,
    /// Polynomial degree per mode; each mode gets `degree + 1` basis functions.
    pub degree: usize,
    pub mesh_n: usize,
    /// Training set sizes, strictly increasing.
    pub samples: Vec<usize>,
    pub max_rank: usize,
    pub seed: u64,
    pub ref_samples: usize,
    pub test_samples: usize,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "affine".into(),
            modes: 5,
            degree: 4,
            mesh_n: 32,
            samples: vec![250, 500, 1000, 2000],
            max_rank: 40,
            seed: 1,
            ref_samples: 100_000,
            test_samples: 1000,
            workers: 1,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| VmcError::Parse(format!("run config: {e}")))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| VmcError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VmcError::invalid(m));
        if !CATALOG.contains(&self.problem.as_str()) {
            return bad(format!(
                "unknown problem '{}', expected one of {CATALOG:?}",
                self.problem
            ));
        }
        if self.modes == 0 && self.problem != "cookie" {
            return bad("M must be at least 1".into());
        }
        if self.mesh_n < 2 {
            return bad("mesh n must be at least 2".into());
        }
        if self.samples.is_empty() {
            return bad("the sample schedule is empty".into());
        }
        if self.samples[0] < 2 {
            return bad("every schedule entry needs at least two samples".into());
        }
        if self.samples.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "sample schedule {:?} is not strictly increasing",
                self.samples
            ));
        }
        let largest = *self.samples.last().expect("non-empty");
        if self.ref_samples < largest.saturating_mul(10) {
            return bad(format!(
                "reference size {} below ten times the largest training size {largest}",
                self.ref_samples
            ));
        }
        if self.max_rank == 0 {
            return bad("max rank must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("worker count must be at least 1".into());
        }
        Ok(())
    }

    pub fn problem_spec<T: Real>(&self) -> Result<ProblemSpec<T>> {
        ProblemSpec::from_catalog(&self.problem, self.modes, self.mesh_n)
    }

    pub fn als_config(&self) -> AlsConfig {
        AlsConfig {
            max_rank: self.max_rank,
            seed: self.seed,
            ..AlsConfig::default()
        }
    }
}

/// One row of the error curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub n: usize,
    pub mean_rel_err_reco: f64,
    pub mean_rel_err_mc: f64,
    pub mean_rel_err_qmc: f64,
    pub var_rel_err_reco: f64,
    pub var_rel_err_mc: f64,
    pub var_rel_err_qmc: f64,
    /// `None` when the test set is empty.
    pub holdout_rel_err: Option<f64>,
    pub ranks: Vec<usize>,
    pub sweeps: usize,
}

impl ErrorRecord {
    fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        [
            self.mean_rel_err_reco,
            self.mean_rel_err_mc,
            self.mean_rel_err_qmc,
            self.var_rel_err_reco,
            self.var_rel_err_mc,
            self.var_rel_err_qmc,
        ]
        .into_iter()
        .chain(self.holdout_rel_err)
    }

    /// All errors finite and non-negative.
    pub fn is_valid(&self) -> bool {
        self.errors().all(|e| e.is_finite() && e >= 0.0)
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let ranks: Vec<String> = self.ranks.iter().map(|r| r.to_string()).collect();
        vec![
            self.n.to_string(),
            self.mean_rel_err_reco.to_string(),
            self.mean_rel_err_mc.to_string(),
            self.mean_rel_err_qmc.to_string(),
            self.var_rel_err_reco.to_string(),
            self.var_rel_err_mc.to_string(),
            self.var_rel_err_qmc.to_string(),
            self.holdout_rel_err
                .map(|e| e.to_string())
                .unwrap_or_default(),
            ranks.join("/"),
            self.sweeps.to_string(),
        ]
    }

    pub fn from_csv_fields(fields: &csv::StringRecord) -> Result<Self> {
        if fields.len() != CSV_HEADER.len() {
            return Err(VmcError::Parse(format!(
                "expected {} columns, got {}",
                CSV_HEADER.len(),
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| VmcError::Parse(format!("column {}: '{}'", CSV_HEADER[i], &fields[i])))
        };
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| VmcError::Parse(format!("column {}: '{}'", CSV_HEADER[i], &fields[i])))
        };
        let ranks = if fields[8].is_empty() {
            Vec::new()
        } else {
            fields[8]
                .split('/')
                .map(|r| {
                    r.parse()
                        .map_err(|_| VmcError::Parse(format!("rank '{r}'")))
                })
                .collect::<Result<_>>()?
        };
        Ok(Self {
            n: int(0)?,
            mean_rel_err_reco: num(1)?,
            mean_rel_err_mc: num(2)?,
            mean_rel_err_qmc: num(3)?,
            var_rel_err_reco: num(4)?,
            var_rel_err_mc: num(5)?,
            var_rel_err_qmc: num(6)?,
            holdout_rel_err: if fields[7].is_empty() {
                None
            } else {
                Some(num(7)?)
            },
            ranks,
            sweeps: int(9)?,
        })
    }
}

/// Reads a CSV written by [`run_pipeline`].
pub fn read_error_csv(path: &Path) -> Result<Vec<ErrorRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| VmcError::Io(e.to_string()))?;
    let header = reader.headers().map_err(|e| VmcError::Io(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(VmcError::Parse(format!("unexpected header {header:?}")));
    }
    reader
        .records()
        .map(|r| ErrorRecord::from_csv_fields(&r.map_err(|e| VmcError::Io(e.to_string()))?))
        .collect()
}

/// Sample mean and variance (`1/(N-1)`) of nodal fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub count: usize,
    pub mean: Vec<T>,
    pub variance: Vec<T>,
}

/// Streaming Welford accumulator. Fields are pushed in sample order, so the
/// result does not depend on how the solves were scheduled.
#[derive(Debug, Clone)]
pub struct MomentAccumulator<T> {
    count: usize,
    mean: Vec<T>,
    m2: Vec<T>,
}

impl<T: Real> MomentAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![T::zero(); dim],
            m2: vec![T::zero(); dim],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &[T]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(VmcError::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        self.count += 1;
        let n = T::from_count(self.count);
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
        Ok(())
    }

    pub fn moments(&self) -> Result<Moments<T>> {
        if self.count < 2 {
            return Err(VmcError::invalid(format!(
                "sample variance needs at least two samples, got {}",
                self.count
            )));
        }
        let d = T::from_count(self.count - 1);
        Ok(Moments {
            count: self.count,
            mean: self.mean.clone(),
            variance: self.m2.iter().map(|&s| s / d).collect(),
        })
    }
}

/// Moments of a list of solution vectors, in list order.
pub fn sample_moments<T: Real>(fields: &[Vec<T>]) -> Result<Moments<T>> {
    let dim = fields.first().map_or(0, Vec::len);
    let mut acc = MomentAccumulator::new(dim);
    for f in fields {
        acc.push(f)?;
    }
    acc.moments()
}

/// FE solves at the given points, in parallel on the current rayon pool.
pub fn solve_all<T: Real>(solver: &ParametricSolver<T>, points: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    points
        .par_iter()
        .map(|y| solver.solve(y).map(|u| u.coefficients))
        .collect()
}

fn to_real<T: Real>(p: &[f64]) -> Vec<T> {
    p.iter().map(|&v| T::lit(v)).collect()
}

/// Pseudo-random points with counters `start..start+count`.
pub fn pseudo_points<T: Real>(
    dim: usize,
    start: u64,
    count: usize,
    seed: u64,
    domain: ParameterDomain,
) -> Vec<Vec<T>> {
    (0..count as u64)
        .map(|i| to_real(&pseudo_point(dim, start + i, seed, domain)))
        .collect()
}

/// QMC moments over Sobol points `1..=n` for every `n` in `counts`
/// (ascending). Each snapshot equals [`qmc_estimate`] at that size.
pub fn qmc_estimates<T: Real>(
    solver: &ParametricSolver<T>,
    counts: &[usize],
) -> Result<Vec<Moments<T>>> {
    if counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(VmcError::invalid("QMC sizes must be ascending"));
    }
    let Some(&total) = counts.last() else {
        return Ok(Vec::new());
    };
    let dim = solver.parameter_dim();
    let domain = domain_of(solver);
    let seq = SobolSequence::new(dim)?;
    let mut acc = MomentAccumulator::new(solver.space().num_dofs());
    let mut out = Vec::with_capacity(counts.len());
    let mut next = counts.iter().peekable();
    let mut buf = vec![0.0; dim];
    let mut start = 0;
    while start < total {
        let len = SOLVE_BATCH.min(total - start);
        let points: Vec<Vec<T>> = (start..start + len)
            .map(|i| {
                seq.point_into(i as u64 + 1, &mut buf);
                buf.iter().map(|&t| T::lit(map_unit(t, domain))).collect()
            })
            .collect();
        for u in solve_all(solver, &points)? {
            acc.push(&u)?;
            while next.peek().is_some_and(|&&n| n == acc.count()) {
                out.push(acc.moments()?);
                next.next();
            }
        }
        start += len;
    }
    // Sizes below two fail inside `moments`; zero never matches a count.
    if out.len() != counts.len() {
        return Err(VmcError::invalid(
            "sample variance needs at least two samples",
        ));
    }
    Ok(out)
}

pub fn qmc_estimate<T: Real>(solver: &ParametricSolver<T>, n: usize) -> Result<Moments<T>> {
    Ok(qmc_estimates(solver, &[n])?.remove(0))
}

/// Reference moments from the first `n_ref` Sobol points.
pub fn compute_reference<T: Real>(
    solver: &ParametricSolver<T>,
    n_ref: usize,
) -> Result<Moments<T>> {
    qmc_estimate(solver, n_ref)
}

/// Monte Carlo moments over pseudo-random counters `0..n`.
pub fn mc_estimate<T: Real>(
    solver: &ParametricSolver<T>,
    n: usize,
    seed: u64,
) -> Result<Moments<T>> {
    let points = pseudo_points(solver.parameter_dim(), 0, n, seed, domain_of(solver));
    sample_moments(&solve_all(solver, &points)?)
}

fn domain_of<T: Real>(solver: &ParametricSolver<T>) -> ParameterDomain {
    solver.domain()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Energy norm of the unit-coefficient stiffness matrix.
    H1,
    /// Mass-weighted nodal norm.
    L2,
}

impl std::str::FromStr for Metric {
    type Err = VmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h1" => Ok(Self::H1),
            "l2" => Ok(Self::L2),
            other => Err(VmcError::invalid(format!(
                "unknown metric '{other}', expected h1 or l2"
            ))),
        }
    }
}

/// Stiffness and mass matrices of a mesh, used as field norms.
#[derive(Debug, Clone)]
pub struct NormOperators<T> {
    pub stiffness: SparseSpdOperator<T>,
    pub mass: SparseSpdOperator<T>,
}

impl<T: Real> NormOperators<T> {
    pub fn new(mesh: &Mesh2D<T>) -> Result<Self> {
        Ok(Self {
            stiffness: assemble_stiffness(mesh, |_| T::one())?,
            mass: assemble_mass(mesh),
        })
    }

    pub fn operator(&self, metric: Metric) -> &SparseSpdOperator<T> {
        match metric {
            Metric::H1 => &self.stiffness,
            Metric::L2 => &self.mass,
        }
    }

    pub fn norm(&self, v: &[T], metric: Metric) -> Result<T> {
        Ok(self.operator(metric).bilinear(v, v)?.max(T::zero()).sqrt())
    }

    pub fn distance(&self, a: &[T], b: &[T], metric: Metric) -> Result<T> {
        if a.len() != b.len() {
            return Err(VmcError::DimensionMismatch {
                expected: b.len(),
                found: a.len(),
            });
        }
        let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        self.norm(&d, metric)
    }
}

/// `‖cand − ref‖ / ‖ref‖` in the chosen norm.
pub fn relative_field_error<T: Real>(
    norms: &NormOperators<T>,
    candidate: &[T],
    reference: &[T],
    metric: Metric,
) -> Result<T> {
    let r = norms.norm(reference, metric)?;
    if r <= T::zero() {
        return Err(VmcError::UndefinedRelativeError);
    }
    Ok(norms.distance(candidate, reference, metric)? / r)
}

/// Relative error, falling back to the absolute error when the reference
/// vanishes (the variance of a deterministic problem).
fn relative_or_absolute<T: Real>(
    norms: &NormOperators<T>,
    cand: &[T],
    reference: &[T],
    metric: Metric,
) -> Result<f64> {
    match relative_field_error(norms, cand, reference, metric) {
        Err(VmcError::UndefinedRelativeError) => {
            Ok(norms.distance(cand, reference, metric)?.as_f64())
        }
        other => other.map(T::as_f64),
    }
}

/// Mean relative H¹ error of the surrogate over a test set.
pub fn holdout_error<T: Real>(
    w: &TensorTrain<T>,
    basis: &BasisSpec,
    norms: &NormOperators<T>,
    params: &[Vec<T>],
    solutions: &[Vec<T>],
) -> Result<Option<f64>> {
    if params.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for (y, u) in params.iter().zip(solutions) {
        let phi = w.eval_at(&basis.eval(y)?)?;
        total += relative_field_error(norms, &phi, u, Metric::H1)?.as_f64();
    }
    Ok(Some(total / params.len() as f64))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub records: Vec<ErrorRecord>,
    pub reports: Vec<FitReport>,
}

/// Runs a catalog problem on a pool of `config.workers` threads.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let problem = config.problem_spec::<f64>()?;
    run_problem(&problem, config, &config.als_config())
}

/// Runs the pipeline for an explicit problem; `config.problem`, `M` and
/// `mesh-n` are taken from `problem` instead.
pub fn run_problem<T: Real>(
    problem: &ProblemSpec<T>,
    config: &RunConfig,
    als: &AlsConfig,
) -> Result<PipelineOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| VmcError::invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(problem, config, als))
}

fn run_inner<T: Real>(
    problem: &ProblemSpec<T>,
    config: &RunConfig,
    als: &AlsConfig,
) -> Result<PipelineOutput> {
    let solver = ParametricSolver::new(problem)?;
    let norms = NormOperators::new(solver.mesh())?;
    let dim = problem.parameter_dim();
    let domain = problem.domain();
    let basis = BasisSpec::uniform(BasisFamily::for_domain(domain), dim, config.degree + 1)?;

    let mut writer = match &config.out {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| VmcError::Io(format!("{}: {e}", path.display())))?;
            let mut w = csv::Writer::from_writer(file);
            write_row(&mut w, CSV_HEADER.iter().map(|s| s.to_string()))?;
            Some(w)
        }
        None => None,
    };

    let mut counts = config.samples.clone();
    counts.push(config.ref_samples);
    let mut qmc = qmc_estimates(&solver, &counts)?;
    let reference = qmc.pop().expect("reference snapshot");

    let largest = *config
        .samples
        .last()
        .ok_or_else(|| VmcError::invalid("empty schedule"))?;
    let train_params = pseudo_points::<T>(dim, 0, largest, config.seed, domain);
    let train_solutions = solve_all(&solver, &train_params)?;
    let test_params = pseudo_points::<T>(
        dim,
        HOLDOUT_OFFSET,
        config.test_samples,
        config.seed,
        domain,
    );
    let test_solutions = solve_all(&solver, &test_params)?;

    let mut records = Vec::with_capacity(config.samples.len());
    let mut reports = Vec::with_capacity(config.samples.len());
    for (&n, qmc_n) in config.samples.iter().zip(&qmc) {
        let (w, report) = reconstruct_with_stiffness(
            &train_params[..n],
            &train_solutions[..n],
            &norms.stiffness,
            &basis,
            als,
        )?;
        let mc = sample_moments(&train_solutions[..n])?;
        let reco_mean = w.mean();
        let reco_var = w.variance_diagonal();
        let mean_err =
            |m: &[T]| relative_field_error(&norms, m, &reference.mean, Metric::H1).map(T::as_f64);
        let var_err = |v: &[T]| relative_or_absolute(&norms, v, &reference.variance, Metric::L2);
        let record = ErrorRecord {
            n,
            mean_rel_err_reco: mean_err(&reco_mean)?,
            mean_rel_err_mc: mean_err(&mc.mean)?,
            mean_rel_err_qmc: mean_err(&qmc_n.mean)?,
            var_rel_err_reco: var_err(&reco_var)?,
            var_rel_err_mc: var_err(&mc.variance)?,
            var_rel_err_qmc: var_err(&qmc_n.variance)?,
            holdout_rel_err: holdout_error(&w, &basis, &norms, &test_params, &test_solutions)?,
            ranks: report.ranks.clone(),
            sweeps: report.sweeps,
        };
        if !record.is_valid() {
            return Err(VmcError::NumericalBreakdown(format!(
                "non-finite error at N = {n}"
            )));
        }
        if let Some(w) = writer.as_mut() {
            write_row(w, record.csv_fields())?;
        }
        records.push(record);
        reports.push(report);
    }
    Ok(PipelineOutput { records, reports })
}

fn write_row<I: IntoIterator<Item = String>>(w: &mut csv::Writer<File>, fields: I) -> Result<()> {
    w.write_record(fields)
        .map_err(|e| VmcError::Io(e.to_string()))?;
    w.flush().map_err(|e| VmcError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AffineExpansion, CoefficientModel};

    fn affine(modes: usize, theta: f64, n: usize) -> ProblemSpec<f64> {
        ProblemSpec {
            model: CoefficientModel::Affine(AffineExpansion {
                a0: 1.0,
                modes,
                theta,
            }),
            mesh_n: n,
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let fields: Vec<Vec<f64>> = (0..7)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.5, 3.0])
            .collect();
        let m = sample_moments(&fields).unwrap();
        for d in 0..3 {
            let mean = fields.iter().map(|f| f[d]).sum::<f64>() / 7.0;
            let var = fields.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / 6.0;
            assert!((m.mean[d] - mean).abs() < 1e-12);
            assert!((m.variance[d] - var).abs() < 1e-12);
        }
        assert_eq!(m.variance[2], 0.0);
        assert!(sample_moments(&fields[..1]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = [
            RunConfig {
                samples: vec![500, 250],
                ..Default::default()
            },
            RunConfig {
                samples: vec![250, 250],
                ..Default::default()
            },
            RunConfig {
                ref_samples: 19_999,
                ..Default::default()
            },
            RunConfig {
                problem: "sine".into(),
                ..Default::default()
            },
            RunConfig {
                workers: 0,
                ..Default::default()
            },
            RunConfig {
                samples: vec![],
                ..Default::default()
            },
        ];
        for c in bad {
            let e = c.validate().unwrap_err();
            assert!(e.is_config_error(), "{c:?}");
        }
    }

    #[test]
    fn config_json_keys_match_flags() {
        let c = RunConfig::from_json_str(
            r#"{"problem": "lognormal", "M": 3, "mesh-n": 8, "samples": [10, 20], "ref-samples": 200, "out": "x.csv"}"#,
        )
        .unwrap();
        assert_eq!(c.modes, 3);
        assert_eq!(c.mesh_n, 8);
        assert_eq!(c.samples, vec![10, 20]);
        assert_eq!(c.degree, 4);
        assert_eq!(c.out.as_deref(), Some(Path::new("x.csv")));
        assert!(RunConfig::from_json_str(r#"{"mesh_n": 8}"#).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let mesh = crate::mesh::build_unit_square_mesh::<f64>(4).unwrap();
        let norms = NormOperators::new(&mesh).unwrap();
        let r: Vec<f64> = (0..9).map(|i| 1.0 + i as f64 * 0.1).collect();
        let twice: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        for metric in [Metric::H1, Metric::L2] {
            assert_eq!(relative_field_error(&norms, &r, &r, metric).unwrap(), 0.0);
            assert!(
                (relative_field_error(&norms, &twice, &r, metric).unwrap() - 1.0).abs() < 1e-14
            );
            // unit bump: ‖e_j‖ = sqrt(A_jj)
            let mut bumped = r.clone();
            bumped[4] += 1.0;
            let a = norms.operator(metric);
            let expect = a.get(4, 4).sqrt() / a.bilinear(&r, &r).unwrap().sqrt();
            assert!(
                (relative_field_error(&norms, &bumped, &r, metric).unwrap() - expect).abs() < 1e-14
            );
        }
        assert!(matches!(
            relative_field_error(&norms, &r, &[0.0; 9], Metric::H1),
            Err(VmcError::UndefinedRelativeError)
        ));
    }

    #[test]
    fn deterministic_reference_has_zero_variance() {
        let problem = affine(2, 0.0, 4);
        let solver = ParametricSolver::new(&problem).unwrap();
        let m = compute_reference(&solver, 50).unwrap();
        let u = solver.solve(&[0.3, -0.2]).unwrap();
        assert!(m.variance.iter().all(|v| v.abs() < 1e-20));
        for (a, b) in m.mean.iter().zip(&u.coefficients) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(compute_reference(&solver, 1).is_err());
    }

    #[test]
    fn qmc_snapshots_equal_direct_estimates() {
        let problem = affine(3, 0.9, 4);
        let solver = ParametricSolver::new(&problem).unwrap();
        let snaps = qmc_estimates(&solver, &[5, 40, 3000]).unwrap();
        assert_eq!(snaps[1], qmc_estimate(&solver, 40).unwrap());
        assert_eq!(snaps[2], compute_reference(&solver, 3000).unwrap());
        assert!(qmc_estimates(&solver, &[40, 5]).is_err());
    }
}
