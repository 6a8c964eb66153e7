//! Simulates a panel on a rook grid and maps it back to compositions.
use cosmar::model::{temporal_radius, ModelParams};
use cosmar::simplex::IlrBasis;
use cosmar::simulate::{simulate_compositions, SimConfig};
use cosmar::weights::rook_grid;

fn main() -> cosmar::Result<()> {
    let w = rook_grid(5)?.row_standardize();
    let mut params = ModelParams::simulation_design();
    // halving the temporal matrix keeps the process stationary on this grid
    params.pi *= 0.5;
    println!("temporal radius: {:.4}", temporal_radius(&params.psi, &params.pi, &w).unwrap_or(f64::NAN));

    let cfg = SimConfig::new(params, 12, 2024);
    let basis = IlrBasis::balanced(3)?;
    let (data, comps) = simulate_compositions(&cfg, &w, &basis)?;
    println!("{} units, {} periods, regressors {:?}", data.n(), data.t(), data.regressor_names);
    for (unit, c) in comps.last().unwrap().iter().take(3).enumerate() {
        let shares: Vec<String> = c.parts().iter().map(|v| format!("{v:.3e}")).collect();
        println!("unit {unit} at the last period: [{}]", shares.join(", "));
    }
    Ok(())
}
