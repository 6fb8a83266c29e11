//! Ideal-protocol sweep: all six estimators coincide and approach the
//! linear limit at large δβ̃.

use demon_ep::channels::ErrorModel;
use demon_ep::dataio::{dbeta_grid, kelvin_to_beta_omega};
use demon_ep::entropy::EstimatorOptions;
use demon_ep::protocol::{Mode, Simulation};
use demon_ep::statespace::SystemDims;
use demon_ep::sweep::run_sweep;

fn main() -> demon_ep::error::Result<()> {
    let beta_c = kelvin_to_beta_omega(2.8, 51.0)?;
    let sim = Simulation::new(SystemDims::default(), Mode::Ideal, &ErrorModel::none())?;
    let grid = dbeta_grid(-6.0, 6.0, 1.0)?;
    println!(
        "{:>6} {:>12} {:>12} {:>12}",
        "dbeta", "Sigma", "spread", "limit"
    );
    for r in run_sweep(&sim, beta_c, &grid, &EstimatorOptions::default(), false)? {
        println!(
            "{:>6.1} {:>12.6} {:>12.1e} {:>12.6}",
            r.dbeta_tilde,
            r.sigma1,
            r.max_pairwise_gap(),
            r.asymptote
        );
    }
    Ok(())
}
