//! Command-line front end: generation, solving, certification, batch runs
//! and reports.

mod records;
mod report;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{generate_instance, load_instance, save_instance, CostKind, GciInstance, MixedProfile};
use crate::sgm::{certify_equilibrium, direct_procedure, sgm_procedure, two_level_procedure, ProcedureConfig};

pub use records::{parse_records, read_records, write_records, Method, RecordSink, RunRecord, RunStatus};
pub use report::{
    geometric_mean, performance_profiles, profiles_csv, profiles_svg, stats_csv, stats_summary, subset_label,
    ProfileCurve, StatsRow,
};

// Aliases keep clap from treating these comma lists as repeated flags.
type Sizes = Vec<usize>;
type Kinds = Vec<CostKind>;
type Methods = Vec<Method>;

#[derive(Debug, Parser)]
#[command(name = "pwl-sgm", version, about = "Approximate Nash equilibria of cybersecurity investment games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random instance.
    Generate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_kind)]
        kind: CostKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance and print its run record.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Twolevel)]
        method: Method,
        #[command(flatten)]
        solver: SolverArgs,
        /// Solution JSON; the run record is appended to `<out>.csv` as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest regret of a solution in the original game.
    Certify {
        instance: PathBuf,
        solution: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run every method on a grid of generated instances.
    Bench {
        #[arg(long, value_parser = parse_range, default_value = "2-7")]
        m: Sizes,
        #[arg(long, value_parser = parse_range, default_value = "2-10")]
        n: Sizes,
        #[arg(long, value_parser = parse_kinds, default_value = "isr,log,ncf")]
        kind: Kinds,
        #[arg(long, value_parser = parse_methods, default_value = "sgm,direct,twolevel")]
        method: Methods,
        /// Instances per (m, n, kind) cell.
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Results CSV; existing rows are kept and not rerun.
        #[arg(long)]
        out: PathBuf,
    },
    /// Performance profiles of a results CSV.
    Profile {
        input: PathBuf,
        /// Output prefix for `<out>.csv` and `<out>.svg`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve rate, geometric mean time and iterations per subset and method.
    Stats {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub delta_f: f64,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    #[arg(long = "delta-0", default_value_t = 0.05)]
    pub delta_0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seconds per run.
    #[arg(long, default_value_t = 900.0)]
    pub time_limit: f64,
}

impl SolverArgs {
    pub fn config(&self) -> ProcedureConfig {
        ProcedureConfig {
            delta_f: self.delta_f,
            mu: self.mu,
            delta_0: self.delta_0,
            time_limit_s: self.time_limit,
            seed: self.seed,
            ..ProcedureConfig::default()
        }
    }
}

fn parse_kind(s: &str) -> Result<CostKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kinds(s: &str) -> Result<Vec<CostKind>, String> {
    s.split(',').map(parse_kind).collect()
}

fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    s.split(',').map(|t| t.trim().parse().map_err(|e: Error| e.to_string())).collect()
}

/// `"2-4"`, `"2,5,7"` or `"3"`.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let bad = || format!("invalid range {s:?}");
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

/// A solved run before it is tied to an instance id.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub profile: MixedProfile,
    pub status: RunStatus,
    pub wall_time_s: f64,
    pub iterations_stage1: usize,
    pub iterations_stage2: usize,
}

/// Runs one method; the wall time covers the solve only.
pub fn solve_with(inst: &GciInstance, method: Method, cfg: &ProcedureConfig) -> Result<SolveResult> {
    let start = Instant::now();
    let (profile, status, it1, it2) = match method {
        Method::Sgm => {
            let o = sgm_procedure(inst, cfg)?;
            (o.profile, o.status, o.iterations, 0)
        }
        Method::Direct => {
            let (p, o) = direct_procedure(inst, cfg)?;
            (p, o.status, o.iterations, 0)
        }
        Method::Twolevel => {
            let o = two_level_procedure(inst, cfg)?;
            let status = o.status();
            let it2 = o.stage2.as_ref().map_or(0, |s| s.iterations);
            (o.profile, status, o.stage1.iterations, it2)
        }
    };
    Ok(SolveResult {
        profile,
        status: status.into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        iterations_stage1: it1,
        iterations_stage2: it2,
    })
}

/// Solve plus certification, as one record.
pub fn run_record(id: &str, inst: &GciInstance, method: Method, cfg: &ProcedureConfig) -> Result<(RunRecord, MixedProfile)> {
    let res = solve_with(inst, method, cfg)?;
    let certified_regret = certify_equilibrium(inst, &res.profile, cfg.delta_gap())?;
    let record = RunRecord {
        instance_id: id.to_string(),
        m: inst.num_players(),
        n: inst.num_markets(),
        cost_kind: inst.cost_kind(),
        method,
        status: res.status,
        wall_time_s: res.wall_time_s,
        iterations_stage1: res.iterations_stage1,
        iterations_stage2: res.iterations_stage2,
        certified_regret,
    };
    Ok((record, res.profile))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub instance_id: String,
    pub method: Method,
    pub status: RunStatus,
    pub certified_regret: f64,
    pub profile: MixedProfile,
}

pub fn instance_id_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| "instance".to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_generate(m: usize, n: usize, kind: CostKind, seed: u64, out: &Path) -> Result<GciInstance> {
    let inst = generate_instance(m, n, kind, seed)?;
    save_instance(&inst, out)?;
    Ok(inst)
}

/// Solves the instance at `path`; with `out` the solution JSON is written
/// there and the record appended to the CSV next to it.
pub fn cmd_solve(path: &Path, method: Method, cfg: &ProcedureConfig, out: Option<&Path>) -> Result<RunRecord> {
    let inst = load_instance(path)?;
    let id = instance_id_of(path);
    let (record, profile) = run_record(&id, &inst, method, cfg)?;
    if let Some(out) = out {
        let file = SolutionFile {
            instance_id: id,
            method,
            status: record.status,
            certified_regret: record.certified_regret,
            profile,
        };
        std::fs::write(out, serde_json::to_string_pretty(&file)?)?;
        RecordSink::append(out.with_extension("csv"))?.push(&record)?;
    }
    Ok(record)
}

pub fn cmd_certify(instance: &Path, solution: &Path, delta_gap: f64) -> Result<f64> {
    let inst = load_instance(instance)?;
    let file: SolutionFile = serde_json::from_str(&std::fs::read_to_string(solution)?)?;
    certify_equilibrium(&inst, &file.profile, delta_gap)
}

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub ms: Vec<usize>,
    pub ns: Vec<usize>,
    pub kinds: Vec<CostKind>,
    pub instances_per_cell: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub config: ProcedureConfig,
    pub jobs: usize,
}

/// Seed of the `k`-th instance of a cell, independent of the other cells.
pub fn cell_seed(base: u64, m: usize, n: usize, kind: CostKind, k: usize) -> u64 {
    let kind_index = CostKind::ALL.iter().position(|&c| c == kind).unwrap_or(0) as u64;
    let mut z = base;
    for v in [m as u64, n as u64, kind_index, k as u64] {
        z = (z ^ v).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

pub fn bench_instance_id(m: usize, n: usize, kind: CostKind, k: usize) -> String {
    format!("m{m}_n{n}_{kind}_{k}")
}

/// Runs the missing (instance, method) pairs and appends them to `out`.
/// Returns the newly written records; failed runs are recorded, not raised.
pub fn cmd_bench(spec: &BenchSpec, out: &Path) -> Result<Vec<RunRecord>> {
    let done: HashSet<(String, Method)> = if out.exists() {
        read_records(out)?.into_iter().map(|r| (r.instance_id, r.method)).collect()
    } else {
        HashSet::new()
    };
    let mut tasks = Vec::new();
    for &m in &spec.ms {
        for &n in &spec.ns {
            for &kind in &spec.kinds {
                for k in 0..spec.instances_per_cell {
                    for &method in &spec.methods {
                        let id = bench_instance_id(m, n, kind, k);
                        if !done.contains(&(id.clone(), method)) {
                            tasks.push((id, m, n, kind, k, method));
                        }
                    }
                }
            }
        }
    }
    let sink = Mutex::new((RecordSink::append(out)?, Vec::new()));
    let next = AtomicUsize::new(0);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let worker = || loop {
        let t = next.fetch_add(1, Ordering::SeqCst);
        let Some((id, m, n, kind, k, method)) = tasks.get(t) else { break };
        let record = generate_instance(*m, *n, *kind, cell_seed(spec.seed, *m, *n, *kind, *k))
            .and_then(|inst| run_record(id, &inst, *method, &spec.config).map(|(r, _)| r))
            .unwrap_or_else(|_| RunRecord {
                instance_id: id.clone(),
                m: *m,
                n: *n,
                cost_kind: *kind,
                method: *method,
                status: RunStatus::Failed,
                wall_time_s: 0.0,
                iterations_stage1: 0,
                iterations_stage2: 0,
                certified_regret: f64::INFINITY,
            });
        let mut guard = sink.lock().expect("sink lock");
        if let Err(e) = guard.0.push(&record) {
            first_error.lock().expect("error lock").get_or_insert(e);
            break;
        }
        guard.1.push(record);
    };
    std::thread::scope(|scope| {
        for _ in 0..spec.jobs.max(1) {
            scope.spawn(worker);
        }
    });
    if let Some(e) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }
    Ok(sink.into_inner().expect("sink lock").1)
}

/// Executes a parsed command line, printing results to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { m, n, kind, seed, out } => {
            cmd_generate(m, n, kind, seed, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Solve { instance, method, solver, out } => {
            let record = cmd_solve(&instance, method, &solver.config(), out.as_deref())?;
            write_records(std::io::stdout().lock(), &[record])?;
        }
        Command::Certify { instance, solution, solver } => {
            let cfg = solver.config();
            let gap = cfg.delta_gap();
            let regret = cmd_certify(&instance, &solution, gap)?;
            let bound = cfg.delta_f + gap + 1e-9;
            let verdict = if regret <= bound { "pass" } else { "fail" };
            println!("max_regret={} bound={} {verdict}", crate::numfmt::format_g(regret, 9), crate::numfmt::format_g(bound, 9));
        }
        Command::Bench { m, n, kind, method, instances, jobs, solver, out } => {
            let spec = BenchSpec {
                ms: m,
                ns: n,
                kinds: kind,
                instances_per_cell: instances,
                methods: method,
                seed: solver.seed,
                config: solver.config(),
                jobs,
            };
            let new = cmd_bench(&spec, &out)?;
            println!("{} new runs written to {}", new.len(), out.display());
        }
        Command::Profile { input, out } => {
            let curves = performance_profiles(&read_records(&input)?)?;
            std::fs::write(out.with_extension("csv"), profiles_csv(&curves))?;
            std::fs::write(out.with_extension("svg"), profiles_svg(&curves))?;
            print!("{}", profiles_csv(&curves));
        }
        Command::Stats { input, out } => {
            let table = stats_csv(&stats_summary(&read_records(&input)?));
            if let Some(out) = out {
                std::fs::write(out, &table)?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2-4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_range("2,5").unwrap(), vec![2, 5]);
        assert_eq!(parse_range("7").unwrap(), vec![7]);
        assert!(parse_range("4-2").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(1, 2, 2, CostKind::Log, 0);
        assert_ne!(a, cell_seed(1, 2, 2, CostKind::Log, 1));
        assert_ne!(a, cell_seed(1, 2, 2, CostKind::Isr, 0));
        assert_ne!(a, cell_seed(2, 2, 2, CostKind::Log, 0));
        assert_eq!(a, cell_seed(1, 2, 2, CostKind::Log, 0));
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from(["pwl-sgm", "bench", "--m", "2", "--n", "2-3", "--instances", "2", "--out", "x.csv"]).unwrap();
        match cli.command {
            Command::Bench { m, n, kind, method, solver, .. } => {
                assert_eq!((m, n), (vec![2], vec![2, 3]));
                assert_eq!(kind, CostKind::ALL.to_vec());
                assert_eq!(method, Method::ALL.to_vec());
                assert_eq!((solver.delta_f, solver.mu, solver.delta_0, solver.time_limit), (1e-4, 0.5, 0.05, 900.0));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["pwl-sgm", "generate", "--m", "2", "--n", "2", "--kind", "bogus", "--out", "a"]).is_err());
    }
}
