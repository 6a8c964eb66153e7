//! File round trip: write a share panel, load it with a basis, fit, save the table.
use cosmar::estimate::{fit, FitOptions};
use cosmar::io::{self, IdMap, PanelOptions};
use cosmar::model::{ModelParams, INTERCEPT};
use cosmar::simplex::{BasisMode, Partition};
use cosmar::simulate::{simulate, to_compositions, SimConfig};
use cosmar::weights::rook_grid;
use cosmar::IlrBasis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("cosmar-csv-pipeline");
    std::fs::create_dir_all(&dir)?;
    let w = rook_grid(4)?.row_standardize();
    let mut truth = ModelParams::simulation_design();
    truth.pi *= 0.5;
    let data = simulate(&SimConfig::new(truth, 30, 11), &w)?;

    let panel_path = dir.join("panel.csv");
    let ids = IdMap::synthetic(data.n(), data.t() + 1, io::part_labels(3));
    io::save_panel(&panel_path, &ids, &to_compositions(&data, &IlrBasis::balanced(3)?)?)?;

    let opts = PanelOptions { basis: Some(BasisMode::Balance(Partition::balanced(3)?)), ..PanelOptions::default() };
    let loaded = io::load_panel(&panel_path, &opts)?;
    let names: Vec<String> = data.regressor_names.iter().filter(|n| n.as_str() != INTERCEPT).cloned().collect();
    let xs = data.x.iter().map(|t| t[1..].to_vec()).collect();
    let panel = io::attach_regressors(&loaded.data, true, names, xs)?;

    let result = fit(&panel, &w, &FitOptions::default())?;
    let fit_path = dir.join("fit.csv");
    io::save_fit(&fit_path, &result)?;
    println!("panel: {} ({} units, {} periods)", panel_path.display(), panel.n(), panel.t());
    println!("fit table: {} ({} rows)", fit_path.display(), io::read_fit(&fit_path)?.len());
    println!("psi estimate {:?}", result.params.psi.as_slice());
    Ok(())
}
