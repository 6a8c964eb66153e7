//! A small Monte Carlo study: RMSE and bias per parameter group and cell.
use cosmar::montecarlo::{run_with_manifest, summarize, McConfig, Preset, GROUP_AVERAGE};

fn main() -> cosmar::Result<()> {
    let mut cfg = McConfig::preset(Preset::Quick);
    cfg.params.pi *= 0.5;
    cfg.replications = 10;
    let (result, manifest) = run_with_manifest(&cfg)?;
    println!("{:<6} {:>4} {:>4} {:>9} {:>9}", "group", "n", "T", "rmse", "bias");
    for row in summarize(&result).iter().filter(|r| r.param == GROUP_AVERAGE) {
        println!("{:<6} {:>4} {:>4} {:>9.4} {:>9.4}", row.param_group, row.n, row.horizon, row.rmse, row.bias);
    }
    println!("exclusion rate {:.2}, {:.2}s on {} threads", manifest.exclusion_rate, manifest.wall_time_secs, manifest.threads);
    Ok(())
}
