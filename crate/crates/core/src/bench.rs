//! Benchmark configuration and the offline / online / report / Péclet
//! workflows driven by the command line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::peclet_field;
use crate::ocp::{export_solution, OcpSolution};
use crate::persist::{load_model, save_model};
use crate::plot::{line_chart, Series};
use crate::problems::{build_problem, OcpDefinition, ProblemId, ProblemSettings, TimeGrid};
use crate::rom::{evaluate_test_set, relative_errors, ErrorRow, ReducedModel, StabilizationMode, TruthCache};
use crate::sampling::{sample_for_rule, sample_monte_carlo, BetaParameterBox, Rule, WeightedSample};
use crate::wpod::run_offline;

/// Preset size: `Desk` for quick runs, `Paper` for the full experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::config("scale", format!("unknown scale `{s}`; valid scales: desk, paper"))),
        }
    }
}

/// Full description of one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub problem: ProblemId,
    /// Target mesh size.
    pub h: f64,
    /// SUPG constant `δ_K`, uniform over the mesh.
    pub delta: f64,
    /// Control penalization.
    pub alpha: f64,
    /// Constant desired state on the observation region.
    pub y_d: f64,
    /// Target training set size (sparse grids pick the largest level below it).
    pub n_train: usize,
    /// Largest reduced basis size.
    pub n_max: usize,
    /// Testing set size.
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    pub rules: Vec<Rule>,
    pub modes: Vec<StabilizationMode>,
    pub seed: u64,
    /// Repetitions per timed solve; the median is reported.
    pub timing_reps: usize,
    pub output: PathBuf,
    pub param_box: BetaParameterBox,
}

impl BenchmarkConfig {
    pub fn preset(problem: ProblemId, scale: Scale) -> Self {
        use ProblemId::*;
        let (h, n_train, n_max, n_test, n_t) = match (problem, scale) {
            (GraetzSteady, Scale::Desk) => (0.05, 50, 15, 30, None),
            (GraetzSteady, Scale::Paper) => (0.034, 100, 20, 100, None),
            (GraetzParabolic, Scale::Desk) => (0.08, 30, 10, 20, Some(10)),
            (GraetzParabolic, Scale::Paper) => (0.038, 100, 15, 100, Some(30)),
            (SquareSteady, Scale::Desk) => (0.05, 50, 15, 30, None),
            (SquareSteady, Scale::Paper) => (0.025, 100, 50, 100, None),
            (SquareParabolic, Scale::Desk) => (0.07, 30, 10, 20, Some(10)),
            (SquareParabolic, Scale::Paper) => (0.036, 100, 30, 100, Some(30)),
        };
        Self {
            problem,
            h,
            delta: 1.0,
            alpha: 0.01,
            y_d: problem.default_y_d(),
            n_train,
            n_max,
            n_test,
            n_t,
            t_final: n_t.map(|_| 3.0),
            rules: Rule::ALL.to_vec(),
            modes: StabilizationMode::ALL.to_vec(),
            seed: 2024,
            timing_reps: 3,
            output: PathBuf::from(format!("runs/{}", problem.tag())),
            param_box: problem.default_box(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("h", self.h)?;
        positive("alpha", self.alpha)?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::config("delta", format!("must be nonnegative, got {}", self.delta)));
        }
        for (field, v) in [("n_train", self.n_train), ("n_max", self.n_max), ("n_test", self.n_test), ("timing_reps", self.timing_reps)] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.rules.is_empty() {
            return Err(Error::config("rules", "at least one rule is required"));
        }
        if self.modes.is_empty() {
            return Err(Error::config("modes", "at least one mode is required"));
        }
        match (self.problem.is_parabolic(), self.n_t, self.t_final) {
            (true, Some(n), Some(t)) => {
                if n == 0 {
                    return Err(Error::config("n_t", "must be at least 1"));
                }
                positive("t_final", t)?;
            }
            (true, _, _) => return Err(Error::config("n_t", format!("{} needs n_t and t_final", self.problem))),
            (false, None, None) => {}
            (false, _, _) => return Err(Error::config("n_t", format!("{} is steady; remove n_t and t_final", self.problem))),
        }
        if self.param_box.dim() != 2 {
            return Err(Error::config("param_box", "both benchmarks have two parameters"));
        }
        BetaParameterBox::new(self.param_box.bounds.clone(), self.param_box.shapes.clone())
            .map_err(|e| Error::config("param_box", e.to_string()))?;
        let bx = &self.param_box;
        if self.problem.is_graetz() && bx.bounds[1][0] <= 0.0 {
            return Err(Error::config("param_box", "the channel length mu2 must stay positive"));
        }
        if bx.bounds[0][0] <= 0.0 {
            return Err(Error::config("param_box", "mu1 enters as 1/mu1 and must stay positive"));
        }
        Ok(())
    }

    pub fn settings(&self) -> ProblemSettings {
        ProblemSettings {
            h: self.h,
            delta: self.delta,
            alpha: self.alpha,
            y_d: self.y_d,
            time: self.n_t.zip(self.t_final).map(|(n_t, t_final)| TimeGrid { n_t, t_final }),
            param_box: self.param_box.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", format!("cannot serialize: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn model_dir(&self, rule: Rule) -> PathBuf {
        self.output.join("models").join(rule.tag())
    }

    pub fn build_problem(&self) -> Result<OcpDefinition> {
        self.validate()?;
        build_problem(self.problem, &self.settings())
    }

    /// Training set of a rule; Standard POD samples the box uniformly.
    pub fn training_sample(&self, rule: Rule) -> Result<WeightedSample> {
        sample_for_rule(&self.param_box, rule, self.n_train, self.seed)
    }

    /// Testing set drawn from the parameter law, or uniformly for Standard POD.
    pub fn testing_sample(&self, uniform: bool) -> Result<WeightedSample> {
        let seed = self.seed.wrapping_add(0x5eed);
        if uniform {
            let bx = BetaParameterBox::uniform(self.param_box.bounds.clone())?;
            sample_monte_carlo(&bx, self.n_test, seed)
        } else {
            sample_monte_carlo(&self.param_box, self.n_test, seed)
        }
    }
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, data).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Outcome of the offline phase for one rule.
#[derive(Debug, Clone)]
pub struct OfflineSummary {
    pub rule: Rule,
    pub n_train: usize,
    pub n_basis: usize,
    pub eigenvalues_y: Vec<f64>,
    pub dir: PathBuf,
}

pub fn offline_rule(config: &BenchmarkConfig, problem: &OcpDefinition, rule: Rule) -> Result<(ReducedModel, WeightedSample)> {
    let sample = config.training_sample(rule)?;
    info!("{} [{rule}]: {} training nodes", config.problem, sample.len());
    let model = run_offline(problem, &sample, config.n_max)?;
    Ok((model, sample))
}

/// Offline phase for every configured rule, persisting one model per rule.
pub fn cmd_offline(config: &BenchmarkConfig) -> Result<Vec<OfflineSummary>> {
    let problem = config.build_problem()?;
    info!("{}: {} vertices, {} unknowns", config.problem, problem.n(), problem.n_total());
    write_file(&config.output.join("config.toml"), config.to_toml()?.as_bytes())?;
    let mut out = Vec::new();
    for &rule in &config.rules {
        let (model, sample) = offline_rule(config, &problem, rule)?;
        let dir = config.model_dir(rule);
        save_model(&model, &dir)?;
        let mut csv = Vec::new();
        sample.write_csv(&mut csv).map_err(|e| Error::io(&dir, e))?;
        write_file(&dir.join("training.csv"), &csv)?;
        out.push(OfflineSummary {
            rule,
            n_train: sample.len(),
            n_basis: model.n_max,
            eigenvalues_y: model.eigenvalues[0].clone(),
            dir,
        });
    }
    Ok(out)
}

fn load_rule_model(config: &BenchmarkConfig, rule: Rule, problem: &OcpDefinition) -> Result<ReducedModel> {
    let dir = config.model_dir(rule);
    if !dir.join(crate::persist::MANIFEST).exists() {
        return Err(Error::config(
            "rules",
            format!("no model for rule `{rule}` in {}; run `offline` with this configuration first", dir.display()),
        ));
    }
    let model = load_model(&dir)?;
    if model.problem != config.problem || model.n_vertices != problem.n() || model.n_t != problem.n_t() {
        return Err(Error::config(
            "output",
            format!("model in {} was built for a different problem or mesh; rerun `offline`", dir.display()),
        ));
    }
    Ok(model)
}

/// Result of a single online query.
#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub reduced_dim: usize,
    pub online_seconds: f64,
    /// Errors against the truth solution, when requested.
    pub errors: Option<[f64; 3]>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_online(
    config: &BenchmarkConfig,
    rule: Rule,
    mu: &[f64],
    n: usize,
    mode: StabilizationMode,
    compare: bool,
) -> Result<OnlineOutcome> {
    let problem = config.build_problem()?;
    problem.check_mu(mu)?;
    let model = load_rule_model(config, rule, &problem)?;
    if n == 0 || n > model.n_max {
        return Err(Error::config("n", format!("reduced size must be in 1..={}", model.n_max)));
    }
    let t0 = std::time::Instant::now();
    let red = model.solve_reduced(mu, n, mode)?;
    let online_seconds = t0.elapsed().as_secs_f64();
    let rec = model.reconstruct(&red);
    let sol = OcpSolution {
        n: problem.n(),
        n_t: problem.n_t(),
        ybar: rec.ybar.clone(),
        y: rec.y.clone(),
        u: rec.u.clone(),
        p: rec.p.clone(),
        relative_residual: f64::NAN,
    };
    let dir = config.output.join("online").join(rule.tag());
    let files = export_solution(&dir, &problem, &sol, &[])?;
    let errors = if compare {
        let truth = crate::ocp::solve_truth(&problem, mu, crate::fem::Mode::Stabilized)?;
        Some(relative_errors(&problem, &truth, &rec))
    } else {
        None
    };
    Ok(OnlineOutcome {
        reduced_dim: model.reduced_dim(n),
        online_seconds,
        errors,
        files,
    })
}

/// Everything `report` computes, also used programmatically.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<ErrorRow>,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn series(&self, rule: Rule, mode: StabilizationMode) -> Vec<&ErrorRow> {
        self.rows.iter().filter(|r| r.rule == rule && r.mode == mode).collect()
    }
}

/// Evaluates a set of in-memory models, sharing truth solutions across
/// rules and modes.
pub fn evaluate_models(config: &BenchmarkConfig, problem: &OcpDefinition, models: &[ReducedModel]) -> Result<Vec<ErrorRow>> {
    let mut caches: BTreeMap<bool, TruthCache> = BTreeMap::new();
    let sweep: Vec<usize> = (1..=config.n_max).collect();
    let mut rows = Vec::new();
    for model in models {
        let uniform = model.rule == Rule::StandardPod;
        if !caches.contains_key(&uniform) {
            let sample = config.testing_sample(uniform)?;
            info!("{}: {} truth solves for the {} testing set", config.problem, sample.len(), if uniform { "uniform" } else { "weighted" });
            caches.insert(uniform, TruthCache::compute(problem, &sample, config.timing_reps)?);
        }
        let cache = &caches[&uniform];
        for &mode in &config.modes {
            rows.extend(evaluate_test_set(model, problem, cache, &sweep, mode, config.timing_reps)?);
        }
    }
    Ok(rows)
}

fn fmt_e(v: f64) -> String {
    format!("{v:.6e}")
}

/// `rule,mode,N,e_y,e_u,e_p,speedup`
pub fn errors_csv(rows: &[&ErrorRow]) -> String {
    let mut s = String::from("rule,mode,N,e_y,e_u,e_p,speedup\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{},{:.3}", r.rule, r.mode, r.n, fmt_e(r.e_y), fmt_e(r.e_u), fmt_e(r.e_p), r.speedup);
    }
    s
}

/// Base-10 logarithms of the mean errors, without timing columns.
pub fn log10_errors_csv(rows: &[&ErrorRow]) -> String {
    let mut s = String::from("rule,mode,N,log10_e_y,log10_e_u,log10_e_p\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6},{:.6},{:.6}", r.rule, r.mode, r.n, r.e_y.log10(), r.e_u.log10(), r.e_p.log10());
    }
    s
}

/// One row per `N`, one column per rule, Offline-Online mode.
pub fn speedup_csv(rows: &[ErrorRow], rules: &[Rule]) -> String {
    let mut s = String::from("N");
    for r in rules {
        let _ = write!(s, ",{r}");
    }
    s.push('\n');
    let max_n = rows.iter().map(|r| r.n).max().unwrap_or(0);
    for n in 1..=max_n {
        let _ = write!(s, "{n}");
        for rule in rules {
            match rows.iter().find(|r| r.n == n && r.rule == *rule && r.mode == StabilizationMode::OfflineOnline) {
                Some(r) => {
                    let _ = write!(s, ",{:.3}", r.speedup);
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// Writes the CSV tables (and plots unless disabled) for a set of rows.
pub fn write_report(config: &BenchmarkConfig, rows: &[ErrorRow], plots: bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for &mode in &config.modes {
        let sel: Vec<&ErrorRow> = rows.iter().filter(|r| r.mode == mode).collect();
        let p = config.output.join(format!("errors_{mode}.csv"));
        write_file(&p, errors_csv(&sel).as_bytes())?;
        files.push(p);
        let p = config.output.join(format!("log10_errors_{mode}.csv"));
        write_file(&p, log10_errors_csv(&sel).as_bytes())?;
        files.push(p);
        if plots {
            for (var, pick) in [("y", 0usize), ("u", 1), ("p", 2)] {
                let series: Vec<Series> = config
                    .rules
                    .iter()
                    .map(|&rule| Series {
                        label: rule.tag().to_string(),
                        points: sel
                            .iter()
                            .filter(|r| r.rule == rule)
                            .map(|r| (r.n as f64, [r.e_y, r.e_u, r.e_p][pick].log10()))
                            .collect(),
                    })
                    .collect();
                let title = format!("{} {mode}: mean relative error of {var}", config.problem);
                let svg = line_chart(&title, "N", &format!("log10 e_{var}"), &series);
                let p = config.output.join("plots").join(format!("errors_{mode}_{var}.svg"));
                write_file(&p, svg.as_bytes())?;
                files.push(p);
            }
        }
    }
    if config.modes.contains(&StabilizationMode::OfflineOnline) {
        let p = config.output.join("speedup.csv");
        write_file(&p, speedup_csv(rows, &config.rules).as_bytes())?;
        files.push(p);
    }
    Ok(files)
}

/// Loads the persisted models, evaluates them on the testing sets and
/// writes the report files.
pub fn cmd_report(config: &BenchmarkConfig, plots: bool) -> Result<Report> {
    let problem = config.build_problem()?;
    let models = config
        .rules
        .iter()
        .map(|&rule| load_rule_model(config, rule, &problem))
        .collect::<Result<Vec<_>>>()?;
    let rows = evaluate_models(config, &problem, &models)?;
    let files = write_report(config, &rows, plots)?;
    Ok(Report { rows, files })
}

/// Offline and report in one pass without touching the model files.
pub fn run_in_memory(config: &BenchmarkConfig, problem: &OcpDefinition) -> Result<Vec<ErrorRow>> {
    let models = config
        .rules
        .iter()
        .map(|&rule| offline_rule(config, problem, rule).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    evaluate_models(config, problem, &models)
}

/// Local Péclet statistics at one parameter.
#[derive(Debug, Clone)]
pub struct PecletSummary {
    pub mu: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub advection_dominated: bool,
    pub file: PathBuf,
}

/// Writes `peclet.csv` (triangle, barycenter, Pe) using the physical
/// diffusion `1/μ₁` and advection field.
pub fn cmd_peclet(config: &BenchmarkConfig, mu: Option<Vec<f64>>) -> Result<PecletSummary> {
    let problem = config.build_problem()?;
    let mu = mu.unwrap_or_else(|| config.param_box.bounds.iter().map(|b| b[1]).collect());
    problem.check_mu(&mu)?;
    let field = &problem.field;
    let label0 = problem.mesh.subdomain_labels()[0].clone();
    let pe = peclet_field(&problem.mesh, |_, _| 1.0 / mu[0], |x| field.eta(&label0, x, &mu).unwrap_or([0.0, 0.0]))?;
    let mut csv = String::from("triangle,x,y,peclet\n");
    for (k, v) in pe.values.iter().enumerate() {
        let c = problem.mesh.barycenter(k);
        let _ = writeln!(csv, "{k},{:.6},{:.6},{v:.6e}", c[0], c[1]);
    }
    let file = config.output.join("peclet.csv");
    write_file(&file, csv.as_bytes())?;
    Ok(PecletSummary {
        min: pe.values.iter().copied().fold(f64::INFINITY, f64::min),
        max: pe.values.iter().copied().fold(0.0, f64::max),
        advection_dominated: pe.advection_dominated,
        mu,
        file,
    })
}
