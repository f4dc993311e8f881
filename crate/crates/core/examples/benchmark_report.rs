//! A small benchmark grid followed by performance profiles and summary
//! statistics, written to a temporary directory.

use pwl_sgm::cli::{cmd_bench, performance_profiles, profiles_csv, stats_csv, stats_summary, BenchSpec, Method};
use pwl_sgm::game::CostKind;
use pwl_sgm::sgm::ProcedureConfig;

fn main() -> pwl_sgm::Result<()> {
    let dir = std::env::temp_dir().join("pwl_sgm_bench_example");
    std::fs::create_dir_all(&dir)?;
    let out = dir.join("runs.csv");
    let _ = std::fs::remove_file(&out);
    let spec = BenchSpec {
        ms: vec![2],
        ns: vec![2, 3],
        kinds: CostKind::ALL.to_vec(),
        instances_per_cell: 1,
        methods: Method::ALL.to_vec(),
        seed: 0,
        config: ProcedureConfig { time_limit_s: 60.0, ..ProcedureConfig::default() },
        jobs: 1,
    };
    let records = cmd_bench(&spec, &out)?;
    println!("{} runs written to {}", records.len(), out.display());
    print!("{}", profiles_csv(&performance_profiles(&records)?));
    print!("{}", stats_csv(&stats_summary(&records)));
    Ok(())
}
