//! Closure, perturbation, powering and the ilr isometry on a few shares.
use cosmar::simplex::{aitchison_dist, closure, perturb, power, BasisMode, IlrBasis, Partition};

fn main() -> cosmar::Result<()> {
    let x = closure(&[40.0, 35.0, 25.0], 100.0)?;
    let y = closure(&[20.0, 50.0, 30.0], 100.0)?;
    println!("x = {:?} (kappa {})", x.parts(), x.kappa());
    println!("x (+) y = {:?}", perturb(&x, &y)?.parts());
    println!("2 (.) x = {:?}", power(2.0, &x)?.parts());

    let bases = [
        ("helmert", IlrBasis::helmert(3)?),
        ("pivot", IlrBasis::pivot(3)?),
        ("balance", IlrBasis::build(3, BasisMode::Balance(Partition::parse("(0,(1,2))")?))?),
    ];
    let dist = aitchison_dist(&x, &y)?;
    for (name, basis) in &bases {
        let (u, v) = (basis.ilr(&x)?, basis.ilr(&y)?);
        println!("{name:8} ilr(x) = [{:+.4}, {:+.4}]  |ilr x - ilr y| = {:.6}", u[0], u[1], (&u - &v).norm());
    }
    println!("aitchison distance       = {dist:.6}");

    let back = bases[0].1.ilr_inv(&bases[0].1.ilr(&x)?, 100.0)?;
    println!("round trip = {:?}", back.parts());
    Ok(())
}
