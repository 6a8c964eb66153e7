//! Rook, adjacency-list and distance-cutoff weights with their diagnostics.
use cosmar::model::stability_check;
use cosmar::weights::{distance_cutoff, from_adjacency, rook_grid};
use nalgebra::DMatrix;

fn main() -> cosmar::Result<()> {
    let rook = rook_grid(4)?;
    println!("rook 4x4: {} units, {} directed edges, symmetric {}", rook.n(), rook.nnz(), rook.is_symmetric());
    let w = rook.row_standardize();
    println!("row sums after standardising: {:?}", &w.row_sums()[..4]);

    let ring = from_adjacency(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])?.row_standardize();
    println!("ring of 5: neighbours {:?}", ring.neighbor_counts());

    let points = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (5.0, 5.0)];
    let near = distance_cutoff(&points, 1.5)?;
    println!("distance cutoff 1.5: islands {:?}, sparsity {:.3}", near.islands(), near.sparsity());

    let psi = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.1, 0.7]);
    let report = stability_check(&psi, &w, 0.0);
    println!("spatial radius with the design psi: {:.4} (stable {})", report.spectral_radius, report.stable);
    Ok(())
}
