//! Darcy friction factor across flow regimes, with the Colebrook-White
//! residual of every turbulent value.
//!
//! cargo run --release --example friction_factor

use dh_softsense::hydro::{colebrook_residual, friction_factor, FrictionOpts};

fn main() -> anyhow::Result<()> {
    let opts = FrictionOpts::default();
    let roughness = [0.0, 1e-4, 1e-3, 1e-2, 5e-2];
    print!("{:>10}", "Re");
    for rr in roughness {
        print!("  ks/D={rr:<9}");
    }
    println!();
    let mut worst: f64 = 0.0;
    for re in [500.0, 2000.0, 4e3, 1e4, 1e5, 1e6, 1e7, 1e8] {
        print!("{re:>10.0e}");
        for rr in roughness {
            let lambda = friction_factor(re, rr, 1.0, &opts)?;
            if re > opts.laminar_limit {
                worst = worst.max(colebrook_residual(lambda, re, rr).abs());
            }
            print!("  {lambda:<15.6e}");
        }
        println!();
    }
    println!("largest turbulent residual {worst:.2e}");
    Ok(())
}
