//! End-to-end identification runs and the parameter studies built on them.
//!
//! A run goes through the stages initial condition, simulation, library,
//! preconditioning, regression, selection and metrics, in that order. Errors
//! are wrapped with the name of the stage that produced them.

use std::collections::BTreeMap;
use std::time::Instant;

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::library::{build_library, describe_term, CandidateLibrary, LibrarySpec, TermDescriptor};
use crate::linalg::{condition_number, lstsq};
use crate::oracle::{classify_terms, empirical_order, mae_mre, AnalyticMde, CaseId, OrderEstimate};
use crate::precondition::{compute_vif, puffer_transform, scale_columns, VifOptions, DEFAULT_PUFFER_RANK_TOL};
use crate::regress::{run_sweep, Algorithm, Hyperparameters, RegressionProblem, SparseModel, SweepGrids};
use crate::select::{bic_score, optimal_choice, select_best};
use crate::solvers::{run_simulation, Grid1D, Scheme, SolutionField};
use crate::spline::{gauss_ic, SplineArtifact, TEST_KNOTS, TRAINING_KNOTS};
use crate::swarm::{optimize_ic, GridSpec, SwarmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcMode {
    SplineOptimized,
    Gauss,
    Provided,
}

impl IcMode {
    pub fn name(self) -> &'static str {
        match self {
            IcMode::SplineOptimized => "spline",
            IcMode::Gauss => "gauss",
            IcMode::Provided => "provided",
        }
    }
}

fn default_training_knots() -> usize {
    TRAINING_KNOTS
}

fn default_test_knots() -> usize {
    TEST_KNOTS
}

fn default_test_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub scheme: Scheme,
    pub grid: GridSpec,
    pub library: LibrarySpec,
    pub ic_mode: IcMode,
    /// Library whose RMS-VIF the initial-condition search minimises; defaults
    /// to `library`.
    #[serde(default)]
    pub ic_library: Option<LibrarySpec>,
    #[serde(default)]
    pub swarm: SwarmConfig,
    #[serde(default = "default_training_knots")]
    pub training_knots: usize,
    #[serde(default = "default_test_knots")]
    pub test_knots: usize,
    #[serde(default = "default_test_seed")]
    pub test_seed: u64,
    /// Previously optimised training spline; skips the search when present.
    #[serde(default)]
    pub training_spline: Option<SplineArtifact>,
    #[serde(default)]
    pub test_spline: Option<SplineArtifact>,
    /// Initial values for `IcMode::Provided`, one per grid point.
    #[serde(default)]
    pub provided_ic: Option<Vec<f64>>,
    #[serde(default)]
    pub use_puffer: bool,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub grids: SweepGrids,
    /// Effective sample size of the BIC; defaults to `nx`.
    #[serde(default)]
    pub n_eff: Option<usize>,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.library.validate()?;
        if let Some(l) = &self.ic_library {
            l.validate()?;
        }
        if self.grid.nx < 2 || self.grid.nt < 2 || !(self.grid.cfl > 0.0) {
            return Err(Error::invalid("grid needs nx >= 2, nt >= 2 and a positive CFL number"));
        }
        self.swarm.validate()?;
        if self.ic_mode == IcMode::Provided {
            match &self.provided_ic {
                Some(v) if v.len() == self.grid.nx => {}
                Some(v) => {
                    return Err(Error::invalid(format!(
                        "provided_ic has {} values, grid has {} points",
                        v.len(),
                        self.grid.nx
                    )))
                }
                None => return Err(Error::invalid("ic_mode `provided` needs provided_ic")),
            }
        }
        if self.n_eff == Some(0) {
            return Err(Error::invalid("n_eff must be positive"));
        }
        Ok(())
    }

    pub fn case_id(&self) -> CaseId {
        CaseId::for_scheme(&self.scheme)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// SHA-256 over the fields the optimised initial conditions depend on.
    pub fn ic_hash(&self) -> String {
        let swarm = SwarmConfig {
            parallelism: Parallelism::Sequential,
            ..self.swarm
        };
        let key = (
            &self.scheme,
            &self.grid,
            self.ic_library.as_ref().unwrap_or(&self.library),
            self.ic_mode == IcMode::SplineOptimized,
            swarm,
            self.training_knots,
            self.test_knots,
            self.test_seed,
        );
        let bytes = serde_json::to_vec(&key).expect("key serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn swarm_for(&self, seed: u64) -> SwarmConfig {
        SwarmConfig {
            seed,
            parallelism: self.parallelism,
            ..self.swarm
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Default)]
struct Timer {
    stages: Vec<StageTiming>,
}

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        let seconds = start.elapsed().as_secs_f64();
        info!("{stage}: {seconds:.3} s");
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        out
    }
}

/// Simulations and libraries shared by every regression variant of a run.
#[derive(Debug, Clone)]
pub struct SiteData {
    pub training: SolutionField,
    pub test: SolutionField,
    pub training_library: CandidateLibrary,
    pub test_library: CandidateLibrary,
    pub training_spline: Option<SplineArtifact>,
    pub test_spline: SplineArtifact,
    pub truth: AnalyticMde,
}

fn optimised_spline(
    config: &PipelineConfig,
    cached: &Option<SplineArtifact>,
    knots: usize,
    seed: u64,
) -> Result<SplineArtifact> {
    if let Some(a) = cached {
        return Ok(a.clone());
    }
    let spec = config.ic_library.as_ref().unwrap_or(&config.library);
    let r = optimize_ic(config.scheme, &config.grid, spec, &config.swarm_for(seed), knots)?;
    Ok(r.artifact)
}

/// Finds (or loads) the initial conditions, runs both simulations and builds
/// both libraries.
pub fn prepare_data(config: &PipelineConfig) -> Result<SiteData> {
    let mut t = Timer::default();
    prepare_data_timed(config, &mut t)
}

fn prepare_data_timed(config: &PipelineConfig, timer: &mut Timer) -> Result<SiteData> {
    config.validate()?;
    let nx = config.grid.nx;
    let (u0, training_spline, test_spline) = timer.run("initial condition", || {
        let (u0, training_spline) = match config.ic_mode {
            IcMode::SplineOptimized => {
                let a = optimised_spline(
                    config,
                    &config.training_spline,
                    config.training_knots,
                    config.swarm.seed,
                )?;
                (a.spline.sample(nx), Some(a))
            }
            IcMode::Gauss => {
                let x: Vec<f64> = (0..nx).map(|i| i as f64 / nx as f64).collect();
                (gauss_ic(&x), None)
            }
            IcMode::Provided => (config.provided_ic.clone().expect("validated"), None),
        };
        let test = optimised_spline(config, &config.test_spline, config.test_knots, config.test_seed)?;
        Ok((u0, training_spline, test))
    })?;
    let (training, test) = timer.run("simulation", || {
        let grid = config.grid.grid_for(&config.scheme, &u0)?;
        let training = run_simulation(config.scheme, &u0, grid, None)?;
        // the test run shares dx and dt with the training run
        let test = run_simulation(config.scheme, &test_spline.spline.sample(nx), grid, None)?;
        Ok((training, test))
    })?;
    let (training_library, test_library) = timer.run("library", || {
        Ok((
            build_library(&training, &config.library)?,
            build_library(&test, &config.library)?,
        ))
    })?;
    let truth = AnalyticMde::for_scheme(&config.scheme, training.grid.dx, training.grid.dt)?;
    Ok(SiteData {
        training,
        test,
        training_library,
        test_library,
        training_spline,
        test_spline,
        truth,
    })
}

/// One candidate model in physical units, scored and compared to the oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub algorithm: Algorithm,
    pub hyperparameters: Hyperparameters,
    pub refit_ols: bool,
    pub converged: bool,
    pub support: Vec<usize>,
    pub terms: Vec<String>,
    /// Physical coefficients of `terms`, in the same order.
    pub coefficients: Vec<f64>,
    pub training_residual: f64,
    pub test_residual_sq: f64,
    pub bic: f64,
    pub correct: usize,
    pub incorrect: usize,
    pub valid: bool,
    pub mae: Option<f64>,
    pub mre: Option<f64>,
}

impl CandidateRecord {
    pub fn term_count(&self) -> usize {
        self.support.len()
    }

    pub fn coefficient_of(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.coefficients[i])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermReport {
    pub term: String,
    pub predicted: f64,
    pub analytic: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_samples: usize,
    pub n_terms: usize,
    pub rms_vif: f64,
    pub max_vif: f64,
    pub condition_raw: f64,
    pub condition_scaled: f64,
    pub condition_puffered: Option<f64>,
    pub training_cfl: f64,
    pub test_max_abs_u: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub grid: Grid1D,
    pub h: f64,
    pub library_terms: Vec<String>,
    pub diagnostics: Diagnostics,
    pub candidates: Vec<CandidateRecord>,
    /// Index into `candidates` of the BIC maximiser.
    pub selected: usize,
    /// Index into `candidates` of the oracle's optimal choice, if any.
    pub optimal: Option<usize>,
    pub selected_terms: Vec<TermReport>,
    pub analytic: Vec<TermReport>,
    pub training_spline: Option<SplineArtifact>,
    pub test_spline: SplineArtifact,
    pub timings: Vec<StageTiming>,
}

impl ExperimentReport {
    pub fn selected_model(&self) -> &CandidateRecord {
        &self.candidates[self.selected]
    }

    pub fn optimal_model(&self) -> Option<&CandidateRecord> {
        self.optimal.map(|i| &self.candidates[i])
    }
}

/// Regression problem after scaling and optional puffer, with the target
/// normalised to unit length so that sweep grids are scale free.
struct Prepared {
    scaled: crate::precondition::PreconditionedSystem,
    problem: RegressionProblem,
    target_norm: f64,
    condition_puffered: Option<f64>,
}

fn precondition(library: &CandidateLibrary, use_puffer: bool) -> Result<Prepared> {
    let scaled = scale_columns(library)?;
    let (theta, target, condition_puffered) = if use_puffer {
        let p = puffer_transform(&scaled, DEFAULT_PUFFER_RANK_TOL)?;
        let k = condition_number(&p.theta);
        (p.theta, p.target, Some(k))
    } else {
        (scaled.theta.clone(), scaled.target.clone(), None)
    };
    let target_norm = target.norm();
    if target_norm == 0.0 {
        return Err(Error::invalid("target u_t is identically zero"));
    }
    let problem = RegressionProblem::new(theta, target / target_norm)?;
    Ok(Prepared {
        scaled,
        problem,
        target_norm,
        condition_puffered,
    })
}

/// Physical coefficients of a swept model. OLS-refit models are refit on the
/// scaled, un-puffered training system.
fn to_physical(prep: &Prepared, model: &SparseModel) -> Result<(DVector<f64>, f64)> {
    let p = prep.scaled.theta.ncols();
    let xi_bar = if model.refit_ols {
        let mut xi = DVector::zeros(p);
        if !model.support.is_empty() {
            let sol = lstsq(&prep.scaled.theta.select_columns(&model.support), &prep.scaled.target)?;
            for (&j, &c) in model.support.iter().zip(sol.x.iter()) {
                xi[j] = c;
            }
        }
        xi
    } else {
        &model.coefficients * prep.target_norm
    };
    let residual = (&prep.scaled.theta * &xi_bar - &prep.scaled.target).norm();
    Ok((prep.scaled.unscale(&xi_bar), residual))
}

fn score_models(
    data: &SiteData,
    prep: &Prepared,
    algorithm: Algorithm,
    models: &[SparseModel],
    n_eff: usize,
    mode: Parallelism,
) -> Result<Vec<CandidateRecord>> {
    let terms = &data.training_library.terms;
    let names: Vec<String> = terms.iter().map(describe_term).collect();
    let out = exec::map(mode, models, |m| -> Result<CandidateRecord> {
        let (xi, training_residual) = to_physical(prep, m)?;
        let physical = SparseModel {
            coefficients: xi.clone(),
            ..m.clone()
        };
        let score = bic_score(&physical, &data.test_library, n_eff)?;
        let cls = classify_terms(&physical, terms, &data.truth);
        let err = mae_mre(&physical, terms, &data.truth);
        Ok(CandidateRecord {
            algorithm,
            hyperparameters: m.hyperparameters,
            refit_ols: m.refit_ols,
            converged: m.converged,
            support: m.support.clone(),
            terms: m.support.iter().map(|&j| names[j].clone()).collect(),
            coefficients: m.support.iter().map(|&j| xi[j]).collect(),
            training_residual,
            test_residual_sq: score.test_residual_sq,
            bic: score.bic,
            correct: cls.correct.len(),
            incorrect: cls.incorrect.len(),
            valid: err.valid,
            mae: err.mae,
            mre: err.mre,
        })
    });
    out.into_iter().collect()
}

/// Regression, scoring and metrics for one algorithm / puffer setting on
/// prepared data.
pub fn identify(
    data: &SiteData,
    algorithm: Algorithm,
    use_puffer: bool,
    grids: &SweepGrids,
    n_eff: usize,
    mode: Parallelism,
) -> Result<Vec<CandidateRecord>> {
    let prep = precondition(&data.training_library, use_puffer).map_err(|e| e.in_stage("preconditioning"))?;
    let sweep = run_sweep(&prep.problem, algorithm, grids, mode).map_err(|e| e.in_stage("regression"))?;
    score_models(data, &prep, algorithm, &sweep.models, n_eff, mode).map_err(|e| e.in_stage("selection"))
}

fn term_reports(record: &CandidateRecord, truth: &AnalyticMde) -> Vec<TermReport> {
    record
        .terms
        .iter()
        .zip(&record.coefficients)
        .map(|(name, &predicted)| {
            let analytic = TermDescriptor::parse(name).ok().and_then(|t| truth.coefficient(&t));
            let abs_error = analytic.map(|a| (predicted - a).abs());
            TermReport {
                term: name.clone(),
                predicted,
                analytic,
                abs_error,
                rel_error: analytic.zip(abs_error).map(|(a, e)| e / a.abs()),
            }
        })
        .collect()
}

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs every stage for one configuration.
pub fn run_site(config: &PipelineConfig) -> Result<ExperimentReport> {
    let mut timer = Timer::default();
    let data = prepare_data_timed(config, &mut timer)?;
    run_on_data(config, &data, timer)
}

fn run_on_data(config: &PipelineConfig, data: &SiteData, mut timer: Timer) -> Result<ExperimentReport> {
    let lib = &data.training_library;
    let n_eff = config.n_eff.unwrap_or(config.grid.nx);
    let prep = timer.run("preconditioning", || precondition(lib, config.use_puffer))?;
    let diagnostics = timer.run("diagnostics", || {
        let vif = compute_vif(&lib.theta, &VifOptions::default())?;
        Ok(Diagnostics {
            n_samples: lib.n_samples(),
            n_terms: lib.n_terms(),
            rms_vif: vif.rms(),
            max_vif: vif.max(),
            condition_raw: condition_number(&lib.theta),
            condition_scaled: condition_number(&prep.scaled.theta),
            condition_puffered: prep.condition_puffered,
            training_cfl: data.training.cfl,
            test_max_abs_u: max_abs(data.test.values.row(0).iter().copied()),
        })
    })?;
    let sweep = timer.run("regression", || {
        run_sweep(&prep.problem, config.algorithm, &config.grids, config.parallelism)
    })?;
    let candidates = timer.run("selection", || {
        score_models(data, &prep, config.algorithm, &sweep.models, n_eff, config.parallelism)
    })?;
    let (selected, optimal) = timer.run("metrics", || {
        let scores: Vec<crate::select::ModelScore> = candidates
            .iter()
            .map(|c| crate::select::ModelScore {
                model: SparseModel::empty(0, &DVector::zeros(0), c.hyperparameters),
                bic: c.bic,
                n_eff,
                test_residual_sq: c.test_residual_sq,
                term_count: c.term_count(),
            })
            .collect();
        let selected = select_best(&scores)?;
        let models: Vec<SparseModel> = candidates
            .iter()
            .map(|c| {
                let mut m = SparseModel::empty(lib.n_terms(), &DVector::zeros(0), c.hyperparameters);
                m.support = c.support.clone();
                m
            })
            .collect();
        Ok((selected, optimal_choice(&models, &lib.terms, &data.truth)))
    })?;
    let selected_terms = term_reports(&candidates[selected], &data.truth);
    let analytic = data
        .truth
        .terms
        .iter()
        .map(|t| TermReport {
            term: describe_term(&t.term),
            predicted: candidates[selected]
                .coefficient_of(&describe_term(&t.term))
                .unwrap_or(0.0),
            analytic: Some(t.coefficient),
            abs_error: None,
            rel_error: None,
        })
        .collect();
    info!(
        "{}: selected {} terms ({} correct, {} incorrect) out of {} candidates",
        config.name,
        candidates[selected].term_count(),
        candidates[selected].correct,
        candidates[selected].incorrect,
        candidates.len()
    );
    Ok(ExperimentReport {
        config: config.clone(),
        config_hash: config.hash(),
        grid: data.training.grid,
        h: data.training.grid.h(),
        library_terms: lib.term_names(),
        diagnostics,
        candidates,
        selected,
        optimal,
        selected_terms,
        analytic,
        training_spline: data.training_spline.clone(),
        test_spline: data.test_spline.clone(),
        timings: timer.stages,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub algorithm: Algorithm,
    pub ic_mode: IcMode,
    pub puffer: bool,
    pub term_count: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub valid: bool,
    pub mre: Option<f64>,
    pub mae: Option<f64>,
    pub refit_ols: bool,
    pub terms: Vec<String>,
}

/// Every deduplicated model of every algorithm for each initial-condition
/// and puffer setting. Algorithms share the simulation of their IC mode.
pub fn algorithm_comparison(
    config: &PipelineConfig,
    algorithms: &[Algorithm],
    ic_modes: &[IcMode],
    puffer_modes: &[bool],
) -> Result<Vec<ComparisonRecord>> {
    let n_eff = config.n_eff.unwrap_or(config.grid.nx);
    let mut out = Vec::new();
    for &ic_mode in ic_modes {
        let cfg = PipelineConfig {
            ic_mode,
            ..config.clone()
        };
        let data = prepare_data(&cfg)?;
        let setups: Vec<(bool, Algorithm)> = puffer_modes
            .iter()
            .flat_map(|&p| algorithms.iter().map(move |&a| (p, a)))
            .collect();
        let results = exec::map(config.parallelism, &setups, |&(puffer, algorithm)| {
            identify(&data, algorithm, puffer, &config.grids, n_eff, Parallelism::Sequential)
        });
        for ((puffer, algorithm), records) in setups.into_iter().zip(results) {
            for c in records? {
                out.push(ComparisonRecord {
                    algorithm,
                    ic_mode,
                    puffer,
                    term_count: c.term_count(),
                    correct: c.correct,
                    incorrect: c.incorrect,
                    valid: c.valid,
                    mre: c.mre,
                    mae: c.mae,
                    refit_ols: c.refit_ols,
                    terms: c.terms,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub term_count: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub mre: Option<f64>,
    pub mae: Option<f64>,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl ModelSummary {
    fn from_record(c: &CandidateRecord) -> Self {
        ModelSummary {
            term_count: c.term_count(),
            correct: c.correct,
            incorrect: c.incorrect,
            mre: c.mre,
            mae: c.mae,
            terms: c.terms.clone(),
            coefficients: c.coefficients.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolutionRecord {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub bic: Option<ModelSummary>,
    pub optimal: Option<ModelSummary>,
    pub failure: Option<String>,
}

impl ResolutionRecord {
    /// BIC picked the optimal model.
    pub fn bic_matches_optimal(&self) -> bool {
        match (&self.bic, &self.optimal) {
            (Some(b), Some(o)) => b.terms == o.terms,
            _ => false,
        }
    }
}

/// Optimises the spline initial conditions once on the base grid and stores
/// them in the config so that other resolutions resample the same curves.
pub fn with_cached_splines(config: &PipelineConfig) -> Result<PipelineConfig> {
    let mut cfg = config.clone();
    if cfg.ic_mode == IcMode::SplineOptimized && cfg.training_spline.is_none() {
        cfg.training_spline = Some(
            optimised_spline(config, &None, config.training_knots, config.swarm.seed)
                .map_err(|e| e.in_stage("initial condition"))?,
        );
    }
    if cfg.test_spline.is_none() {
        cfg.test_spline = Some(
            optimised_spline(config, &None, config.test_knots, config.test_seed)
                .map_err(|e| e.in_stage("initial condition"))?,
        );
    }
    Ok(cfg)
}

/// Optimised initial conditions of one configuration, stored so that the
/// swarm search need not be repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineCache {
    pub ic_hash: String,
    pub training: Option<SplineArtifact>,
    pub test: SplineArtifact,
}

impl SplineCache {
    /// Runs (or reuses) the searches of `config`.
    pub fn build(config: &PipelineConfig) -> Result<Self> {
        let cfg = with_cached_splines(config)?;
        Ok(SplineCache {
            ic_hash: config.ic_hash(),
            training: cfg.training_spline,
            test: cfg.test_spline.expect("filled by with_cached_splines"),
        })
    }

    /// Stores the cached curves in `config`; fails if the cache was built for
    /// a different initial-condition setup.
    pub fn apply(&self, config: &mut PipelineConfig) -> Result<()> {
        let expected = config.ic_hash();
        if self.ic_hash != expected {
            return Err(Error::invalid(format!(
                "spline cache {} does not match the configuration ({expected})",
                self.ic_hash
            )));
        }
        if config.ic_mode == IcMode::SplineOptimized {
            config.training_spline.clone_from(&self.training);
        }
        config.test_spline = Some(self.test.clone());
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("spline cache: {e}")))
    }
}

/// BIC and optimal-choice models over a grid of resolutions. The spline
/// initial conditions are optimised once on the base grid and resampled.
pub fn resolution_study(
    config: &PipelineConfig,
    nx_list: &[usize],
    nt_list: &[usize],
) -> Result<Vec<ResolutionRecord>> {
    let base = with_cached_splines(config)?;
    let points: Vec<(usize, usize)> = nt_list
        .iter()
        .flat_map(|&nt| nx_list.iter().map(move |&nx| (nx, nt)))
        .collect();
    let out = exec::map(config.parallelism, &points, |&(nx, nt)| {
        let cfg = PipelineConfig {
            grid: GridSpec { nx, nt, ..base.grid },
            provided_ic: None,
            parallelism: Parallelism::Sequential,
            ..base.clone()
        };
        let mut rec = ResolutionRecord {
            nx,
            nt,
            dx: 1.0 / nx as f64,
            dt: f64::NAN,
            bic: None,
            optimal: None,
            failure: None,
        };
        match run_site(&cfg) {
            Ok(r) => {
                rec.dt = r.grid.dt;
                rec.bic = Some(ModelSummary::from_record(r.selected_model()));
                rec.optimal = r.optimal_model().map(ModelSummary::from_record);
            }
            Err(e) => rec.failure = Some(e.to_string()),
        }
        rec
    });
    Ok(out)
}

/// Empirical order of every analytic term over a resolution sequence, using
/// the coefficients of the chosen model at each resolution (BIC by default,
/// the optimal choice with `use_optimal`).
pub fn empirical_orders(
    records: &[ResolutionRecord],
    truth_terms: &[TermDescriptor],
    use_optimal: bool,
) -> Result<BTreeMap<String, OrderEstimate>> {
    let mut out = BTreeMap::new();
    for term in truth_terms {
        let name = describe_term(term);
        let mut series = Vec::new();
        for r in records {
            let m = if use_optimal { &r.optimal } else { &r.bic };
            if let Some(m) = m {
                if let Some(i) = m.terms.iter().position(|t| t == &name) {
                    series.push((r.dx, m.coefficients[i]));
                }
            }
        }
        if series.len() >= 2 {
            out.insert(name, empirical_order(&series)?);
        }
    }
    Ok(out)
}
