//! Command-line experiments.
//!
//! Model files are JSON objects tagged by `kind`:
//!
//! ```text
//! {"kind": "site-potential", "values": [2, 3], "probabilities": [0.5, 0.5], "d": 1}
//! {"kind": "bond-percolation", "p": 0.5, "d": 2}
//! {"kind": "site-percolation", "p": 0.5}
//! ```
//!
//! `d` is optional and overridden by `--dim`. For percolation, `p` is the
//! probability that an edge (or site) is open. Self-similar spec files hold
//! the fields of [`SelfSimilarSpec`] plus an optional `kernel`
//! (`{"kind": "laplacian"}`, `{"kind": "adjacency"}` or
//! `{"kind": "constant", "value": 1.0}`, default Laplacian).
//!
//! Every command writes `report.json` (`"schema": 1`) and one `lambda,value`
//! CSV per step function into `--out`. Exit status: 0 on success, 1 on usage
//! errors, unreadable inputs or exceeded size caps, 2 when a reported
//! distance exceeds its bound.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bratteli::{self, CauchyReport};
use crate::checks;
use crate::linalg::DEFAULT_RANK_TOL;
use crate::models::{self, DisorderModel};
use crate::selfsimilar::{self, KernelSpec, PatternKernel, SelfSimilarSpec};
use crate::stepfn::{sup_distance, StepFunction, MERGE_TOL};
use crate::Error;

pub const SCHEMA: u32 = 1;
pub const THREADS_ENV: &str = "IDS_THREADS";
/// Confidence level of the Monte Carlo radius.
pub const MC_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, Parser)]
#[command(name = "ids", version, about = "Integrated density of states via rank-ring approximants")]
pub struct ExperimentConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Level-wise approximants and their certified Cauchy chain.
    IdsApprox(Common),
    /// One sampled box against its tile decomposition and the approximant.
    IdsEmpirical(Common),
    /// Monte Carlo average over sampled cubes, compared with the exact approximant.
    IdsMc(Common),
    /// Plateau at zero of bond and site percolation across a grid of p.
    Percolation(Common),
    /// Tower of a self-similar graph with a pattern-invariant kernel.
    Selfsimilar(Common),
    /// Randomized invariant checks.
    Verify(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model file; defaults to the uniform site potential on {2, 3}.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Self-similar spec file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Level `i` (first level of a chain, tile level, cube level).
    #[arg(long)]
    pub level: Option<usize>,
    /// Last level of a chain or tower.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Box side for `ids-empirical`.
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; falls back to the IDS_THREADS variable, then to the
    /// available parallelism. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Relative singular-value cutoff for ranks.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Percolation parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Census radius for `selfsimilar`.
    #[arg(long)]
    pub radius: Option<usize>,
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::IdsApprox(c)
            | Command::IdsEmpirical(c)
            | Command::IdsMc(c)
            | Command::Percolation(c)
            | Command::Selfsimilar(c)
            | Command::Verify(c) => c,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::IdsApprox(_) => "ids-approx",
            Command::IdsEmpirical(_) => "ids-empirical",
            Command::IdsMc(_) => "ids-mc",
            Command::Percolation(_) => "percolation",
            Command::Selfsimilar(_) => "selfsimilar",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    model: DisorderModel,
    d: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct SpecFile {
    #[serde(flatten)]
    spec: SelfSimilarSpec,
    kernel: Option<KernelSpec>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl<E: Into<Error>> From<E> for Box<Failure>
where
    E: std::error::Error,
{
    fn from(e: E) -> Self {
        Box::new(Failure::Lib(e.into()))
    }
}

type Outcome<T> = Result<T, Box<Failure>>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Box::new(Failure::Usage(msg.into())))
}

/// Collected output of one command.
struct Output {
    report: Value,
    csv: Vec<(String, String)>,
    violations: Vec<String>,
}

impl Output {
    fn new() -> Self {
        Self {
            report: json!({}),
            csv: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn step(&mut self, name: String, f: &StepFunction) -> String {
        let file = format!("{name}.csv");
        self.csv.push((file.clone(), f.to_csv()));
        file
    }

    /// Records `distance ≤ bound`; returns its JSON entry.
    fn bounded(&mut self, what: String, distance: f64, bound: f64) -> Value {
        let holds = distance <= bound;
        if !holds {
            self.violations.push(format!("{what}: {distance} > {bound}"));
        }
        json!({"distance": distance, "bound": bound, "holds": holds})
    }
}

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Box::new(Failure::Io(format!("cannot read {}: {e}", path.display()))))
}

fn load_model(c: &Common) -> Outcome<(DisorderModel, usize)> {
    let (model, file_d) = match &c.model {
        None => (DisorderModel::uniform_site_potential(vec![2.0, 3.0])?, None),
        Some(path) => {
            let file: ModelFile = serde_json::from_str(&read(path)?)
                .map_err(|e| Box::new(Failure::Usage(format!("cannot parse {}: {e}", path.display()))))?;
            file.model.validate()?;
            (file.model, file.d)
        }
    };
    let d = c.dim.or(file_d).unwrap_or(1);
    if d == 0 {
        return usage("dimension must be at least 1");
    }
    Ok((model, d))
}

/// Site potentials with values below 1 are shifted to positive ones before
/// any spectral comparison; the shift is recorded in the report.
fn positive_model(model: DisorderModel, d: usize) -> Outcome<(DisorderModel, f64)> {
    if model.is_positive() {
        Ok((model, 0.0))
    } else {
        Ok(models::shift_to_positive(&model, d)?)
    }
}

fn seed_of(c: &Common, command: &str) -> Outcome<u64> {
    match c.seed {
        Some(s) => Ok(s),
        None => usage(format!("{command} is stochastic and needs --seed")),
    }
}

fn tol_of(c: &Common) -> Outcome<f64> {
    let tol = c.tol.unwrap_or(DEFAULT_RANK_TOL);
    if !(tol.is_finite() && tol > 0.0) {
        return usage("--tol must be positive");
    }
    Ok(tol)
}

fn cauchy_json(out: &mut Output, r: &CauchyReport) -> Value {
    let rank = out.bounded(
        format!("rank distance {}->{}", r.i, r.j),
        r.rank_distance,
        r.bound + 1e-9,
    );
    let ids = out.bounded(
        format!("ids distance {}->{}", r.i, r.j),
        r.ids_distance,
        r.rank_distance + 1e-8,
    );
    json!({
        "i": r.i,
        "j": r.j,
        "rank_distance": rank,
        "boundary_fraction": r.bound,
        "ids_distance": ids,
    })
}

fn ids_approx_cmd(c: &Common, out: &mut Output) -> Outcome<()> {
    let (model, d) = load_model(c)?;
    let (model, shift) = positive_model(model, d)?;
    let tol = tol_of(c)?;
    let first = c.level.unwrap_or(1);
    let last = c.levels.unwrap_or(first);
    if last < first {
        return usage("--levels must be at least --level");
    }
    let chain = bratteli::certified_chain(&model, d, first, last, tol)?;
    let mut levels = Vec::new();
    let mut steps = Vec::new();
    for l in &chain.levels {
        let file = out.step(format!("ids_level{}", l.level), &l.ids);
        levels.push(json!({"level": l.level, "csv": file, "certified_tail": l.certified_tail}));
        if let Some(s) = &l.step {
            steps.push(cauchy_json(out, s));
        }
    }
    if first == last {
        let r = bratteli::cauchy_report(&model, first, first, d, tol)?;
        steps.push(cauchy_json(out, &r));
    }
    out.report = json!({
        "model": model,
        "d": d,
        "shift": shift,
        "tol": tol,
        "levels": levels,
        "steps": steps,
        "truncated_at": chain.truncated_at,
    });
    Ok(())
}

fn ids_empirical_cmd(c: &Common, out: &mut Output) -> Outcome<()> {
    let (model, d) = load_model(c)?;
    let (model, shift) = positive_model(model, d)?;
    let seed = seed_of(c, "ids-empirical")?;
    let j = c.level.unwrap_or(2);
    let side = c.side.unwrap_or(1 << 12);
    let r = bratteli::empirical_run(&model, d, side, j, seed)?;
    let vertices = side.pow(d as u32) as f64;
    let tile_volume = (1usize << (j * d)) as f64;
    let covered = r.tile_count as f64 * tile_volume / vertices;
    // ‖N_tiles − ids_approx‖ ≤ Σ |covered·R − p| + uncovered fraction.
    let mut frequency_term = 1.0 - covered;
    for (f, p) in r.frequencies.iter().zip(&r.probabilities) {
        frequency_term += (covered * f - p).abs();
    }
    let files = [
        out.step("n_box".into(), &r.n_box),
        out.step("n_tiles".into(), &r.n_tiles),
        out.step(format!("ids_level{j}"), &r.ids_approx),
    ];
    let box_tiles = out.bounded("box vs tiles".into(), r.dist_box_tiles, r.rank_defect + 1e-8);
    let box_ids = out.bounded(
        "box vs approximant".into(),
        r.dist_box_ids,
        r.rank_defect + frequency_term + 1e-8,
    );
    out.report = json!({
        "model": model,
        "d": d,
        "shift": shift,
        "side": side,
        "tile_level": j,
        "seed": seed,
        "csv": files,
        "tile_count": r.tile_count,
        "frequencies": r.frequencies,
        "probabilities": r.probabilities,
        "rank_defect": r.rank_defect,
        "tile_boundary_fraction": r.tile_boundary_fraction,
        "frequency_term": frequency_term,
        "box_vs_tiles": box_tiles,
        "box_vs_approximant": box_ids,
    });
    Ok(())
}

fn ids_mc_cmd(c: &Common, out: &mut Output) -> Outcome<()> {
    let (model, d) = load_model(c)?;
    let (model, shift) = positive_model(model, d)?;
    let seed = seed_of(c, "ids-mc")?;
    let i = c.level.unwrap_or(2);
    let samples = c.samples.unwrap_or(10_000);
    let mc = bratteli::ids_monte_carlo(&model, i, d, samples, seed)?;
    let mc_file = out.step(format!("ids_mc_level{i}"), &mc);
    let radius = bratteli::monte_carlo_radius(samples, MC_ALPHA);
    let exact = match bratteli::ids_approx(&model, i, d) {
        Ok(f) => {
            let file = out.step(format!("ids_level{i}"), &f);
            let cmp = out.bounded("monte carlo vs exact".into(), sup_distance(&mc, &f), radius);
            json!({"csv": file, "comparison": cmp})
        }
        Err(e) => {
            let e = Error::from(e);
            if !e.is_cap() {
                return Err(Box::new(Failure::Lib(e)));
            }
            json!(null)
        }
    };
    out.report = json!({
        "model": model,
        "d": d,
        "shift": shift,
        "level": i,
        "samples": samples,
        "seed": seed,
        "csv": mc_file,
        "radius": radius,
        "alpha": MC_ALPHA,
        "exact": exact,
    });
    Ok(())
}

fn percolation_cmd(c: &Common, out: &mut Output) -> Outcome<()> {
    let d = c.dim.unwrap_or(1);
    if d == 0 {
        return usage("dimension must be at least 1");
    }
    let level = c.level.unwrap_or(1);
    let grid = if c.p.is_empty() { vec![0.1, 0.5, 0.9] } else { c.p.clone() };
    let mut rows = Vec::new();
    for &p in &grid {
        for (kind, model) in [
            ("bond", DisorderModel::bond_percolation(p)?),
            ("site", DisorderModel::site_percolation(p)?),
        ] {
            let f = bratteli::ids_approx(&model, level, d)?;
            let file = out.step(format!("{kind}_p{p}_level{level}"), &f);
            let plateau = f.eval(0.0);
            // Known values on the two-vertex cube.
            let closed = (d == 1 && level == 1).then(|| match kind {
                "bond" => 1.0 - p / 2.0,
                _ => 1.0 - p * p / 2.0,
            });
            let check = closed.map(|v| {
                let flat = f.eval(2.0 - MERGE_TOL) == plateau;
                let cmp = out.bounded(format!("{kind} plateau at p={p}"), (plateau - v).abs(), 1e-10);
                if !flat {
                    out.violations.push(format!("{kind} plateau at p={p} not flat on [0,2)"));
                }
                json!({"closed_form": v, "comparison": cmp, "flat_on_0_2": flat})
            });
            rows.push(json!({"kind": kind, "p": p, "csv": file, "plateau": plateau, "check": check}));
        }
    }
    out.report = json!({"d": d, "level": level, "rows": rows});
    Ok(())
}

fn selfsimilar_cmd(c: &Common, out: &mut Output) -> Outcome<()> {
    let (spec, kernel_spec) = match &c.spec {
        None => (SelfSimilarSpec::path(), KernelSpec::Laplacian),
        Some(path) => {
            let file: SpecFile = serde_json::from_str(&read(path)?)
                .map_err(|e| Box::new(Failure::Usage(format!("cannot parse {}: {e}", path.display()))))?;
            (file.spec, file.kernel.unwrap_or(KernelSpec::Laplacian))
        }
    };
    spec.validate()?;
    let kernel = PatternKernel::from(&kernel_spec);
    let top = c.levels.unwrap_or(6);
    let radius = c.radius.unwrap_or(1);
    let tower = selfsimilar::tower_ids(&spec, &kernel, top)?;
    let shape = selfsimilar::check_self_similar(&spec, top)?;
    let mut levels = Vec::new();
    for l in &tower.levels {
        let file = out.step(format!("ids_level{}", l.level), &l.ids);
        levels.push(json!({
            "level": l.level,
            "vertices": l.vertices,
            "csv": file,
            "certified_tail": l.certified_tail,
        }));
    }
    let mut steps = Vec::new();
    for s in &tower.steps {
        let dist = out.bounded(format!("tower distance {}", s.from), s.distance, s.measured_defect + 1e-8);
        let defect = out.bounded(
            format!("tower defect {}", s.from),
            s.measured_defect,
            s.structural_bound,
        );
        steps.push(json!({"from": s.from, "distance": dist, "defect": defect}));
    }
    let graph = selfsimilar::build_level(&spec, top)?.graph;
    let census: Vec<Value> = selfsimilar::pattern_census(&graph, radius)
        .into_iter()
        .map(|(k, f)| json!({"pattern": k.key(), "frequency": f}))
        .collect();
    out.report = json!({
        "spec": spec,
        "kernel": kernel_spec,
        "levels": levels,
        "steps": steps,
        "connecting_ratios": shape.ratios,
        "folner_defects": shape.folner_defects,
        "looks_self_similar": shape.looks_self_similar,
        "census_radius": radius,
        "census_level": top,
        "census": census,
    });
    Ok(())
}

fn verify_cmd(c: &Common, out: &mut Output) -> Outcome<()> {
    let (model, d) = load_model(c)?;
    let (model, shift) = positive_model(model, d)?;
    let seed = c.seed.unwrap_or(0);
    let tol = tol_of(c)?;
    let report = checks::verify_suite(&model, d, seed, tol)?;
    for check in &report.checks {
        println!("{} {}", if check.passed { "PASS" } else { "FAIL" }, check.name);
        if !check.passed {
            out.violations.push(format!("{}: {} > {}", check.name, check.observed, check.bound));
        }
    }
    out.report = json!({
        "model": model,
        "d": d,
        "shift": shift,
        "seed": seed,
        "tol": tol,
        "checks": report.checks,
        "all_passed": report.all_passed(),
    });
    Ok(())
}

fn thread_count(c: &Common) -> Outcome<Option<usize>> {
    let n = match c.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) => Some(n),
                Err(_) => return usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
            },
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return usage("thread count must be positive");
    }
    Ok(n)
}

fn execute(config: &ExperimentConfig) -> Outcome<Output> {
    let c = config.command.common();
    let mut out = Output::new();
    match &config.command {
        Command::IdsApprox(c) => ids_approx_cmd(c, &mut out)?,
        Command::IdsEmpirical(c) => ids_empirical_cmd(c, &mut out)?,
        Command::IdsMc(c) => ids_mc_cmd(c, &mut out)?,
        Command::Percolation(c) => percolation_cmd(c, &mut out)?,
        Command::Selfsimilar(c) => selfsimilar_cmd(c, &mut out)?,
        Command::Verify(c) => verify_cmd(c, &mut out)?,
    }
    if let Value::Object(map) = &mut out.report {
        map.insert("schema".into(), json!(SCHEMA));
        map.insert("command".into(), json!(config.command.name()));
        map.insert("violations".into(), json!(out.violations));
    }
    write_outputs(&c.out, &out)?;
    Ok(out)
}

fn write_outputs(dir: &Path, out: &Output) -> Outcome<()> {
    let io = |e: std::io::Error| Box::new(Failure::Io(format!("cannot write to {}: {e}", dir.display())));
    fs::create_dir_all(dir).map_err(io)?;
    for (name, text) in &out.csv {
        fs::write(dir.join(name), text).map_err(io)?;
    }
    let mut report = serde_json::to_string_pretty(&out.report).expect("report serializes");
    report.push('\n');
    fs::write(dir.join("report.json"), report).map_err(io)?;
    Ok(())
}

/// Runs one experiment on its own thread pool and returns the exit status.
pub fn run(config: &ExperimentConfig) -> i32 {
    let threads = match thread_count(config.command.common()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(config)) {
        Ok(out) if out.violations.is_empty() => 0,
        Ok(out) => {
            for v in &out.violations {
                eprintln!("bound violated: {v}");
            }
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Failure::Lib(inner) = &*e {
                if inner.is_cap() {
                    eprintln!("hint: lower --level, --dim or --side; exact levels enumerate every configuration of the cube");
                }
            }
            1
        }
    }
}

/// Parses `args` (program name first) and runs.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match ExperimentConfig::try_parse_from(args) {
        Ok(config) => run(&config),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}

pub fn main_from_env() -> i32 {
    run_from_args(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> ExperimentConfig {
        ExperimentConfig::try_parse_from(args).unwrap()
    }

    #[test]
    fn parses_flags() {
        let c = parse(&["ids", "percolation", "--p", "0.1,0.2", "--dim", "2", "--out", "x"]);
        let common = c.command.common();
        assert_eq!(common.p, vec![0.1, 0.2]);
        assert_eq!(common.dim, Some(2));
        assert_eq!(c.command.name(), "percolation");
    }

    #[test]
    fn model_file_format() {
        let f: ModelFile =
            serde_json::from_str(r#"{"kind": "site-potential", "values": [2, 3], "probabilities": [0.5, 0.5], "d": 2}"#)
                .unwrap();
        assert_eq!(f.d, Some(2));
        assert_eq!(f.model, DisorderModel::uniform_site_potential(vec![2.0, 3.0]).unwrap());
        let f: ModelFile = serde_json::from_str(r#"{"kind": "bond-percolation", "p": 0.3}"#).unwrap();
        assert_eq!(f.d, None);
        assert!(serde_json::from_str::<ModelFile>(r#"{"kind": "other"}"#).is_err());
    }

    #[test]
    fn spec_file_format() {
        let mut v = serde_json::to_value(SelfSimilarSpec::path()).unwrap();
        v["kernel"] = json!({"kind": "constant", "value": 2.0});
        let f: SpecFile = serde_json::from_value(v).unwrap();
        assert_eq!(f.spec, SelfSimilarSpec::path());
        assert_eq!(f.kernel, Some(KernelSpec::Constant { value: 2.0 }));
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_from_args(["ids", "ids-mc", "--samples", "10", "--out", out]), 1);
        assert_eq!(run_from_args(["ids", "ids-empirical", "--side", "16", "--out", out]), 1);
    }

    #[test]
    fn equal_levels_record_zero_distance() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_from_args(["ids", "ids-approx", "--level", "2", "--levels", "2", "--out", out]), 0);
        let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report["schema"], json!(1));
        assert_eq!(report["steps"][0]["ids_distance"]["distance"], json!(0.0));
        assert_eq!(report["steps"][0]["rank_distance"]["distance"], json!(0.0));
    }

    #[test]
    fn cap_and_usage_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_from_args(["ids", "ids-approx", "--level", "5", "--out", out]), 1);
        assert_eq!(run_from_args(["ids", "ids-approx", "--level", "2", "--levels", "1", "--out", out]), 1);
        assert_eq!(run_from_args(["ids", "no-such-command"]), 1);
        assert_eq!(run_from_args(["ids", "verify", "--threads", "0", "--out", out]), 1);
        assert_eq!(run_from_args(["ids", "--help"]), 0);
    }
}
