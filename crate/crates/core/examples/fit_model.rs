//! Fits the model to a simulated panel and prints the coefficient table.
use cosmar::estimate::{fit, FitOptions};
use cosmar::io::fit_rows;
use cosmar::model::ModelParams;
use cosmar::simulate::{simulate, SimConfig};
use cosmar::weights::rook_grid;

fn main() -> cosmar::Result<()> {
    let w = rook_grid(6)?.row_standardize();
    let mut truth = ModelParams::simulation_design();
    truth.pi *= 0.5;
    let data = simulate(&SimConfig::new(truth.clone(), 60, 7), &w)?;

    let result = fit(&data, &w, &FitOptions::default())?;
    println!("loglik {:.3}, converged {} after {} iterations", result.loglik, result.converged, result.iterations);
    println!("{:<14} {:>10} {:>10} {:>9}", "coef", "estimate", "se", "t");
    for row in fit_rows(&result) {
        let se = row.std_error.map_or("-".into(), |v| format!("{v:.4}"));
        let t = row.t_stat.map_or("-".into(), |v| format!("{v:.2}"));
        println!("{:<14} {:>10.4} {:>10} {:>9}", row.coef, row.estimate, se, t);
    }
    println!("true psi {:?}\ntrue pi  {:?}", truth.psi.as_slice(), truth.pi.as_slice());
    Ok(())
}
