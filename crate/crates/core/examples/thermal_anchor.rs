//! Cavity temperature in natural units and the resulting photon statistics.

use demon_ep::channels::{two_atom_probability, ErrorModel};
use demon_ep::dataio::kelvin_to_beta_omega;
use demon_ep::statespace::{gibbs_distribution, mean_occupation, GibbsSpec, SystemDims};

fn main() -> demon_ep::error::Result<()> {
    let beta_c = kelvin_to_beta_omega(2.8, 51.0)?;
    let nbar = mean_occupation(&gibbs_distribution(beta_c, 400, true)?);
    println!("beta_C hbar omega = {beta_c:.10}");
    println!("mean photon number = {nbar:.6}");
    let dims = SystemDims::default();
    let g = GibbsSpec::from_dbeta(beta_c, 0.0)?;
    println!("prepared cavity prior: {:?}", g.cavity_prior(&dims).probs());
    println!("reference weights:     {:?}", g.cavity_reference(&dims));
    let m = ErrorModel::default();
    println!(
        "two-atom probability at nbar = {}, efficiency = {}: {:.4}",
        m.nbar_atoms,
        m.detect_eff,
        two_atom_probability(m.nbar_atoms, m.detect_eff)?
    );
    Ok(())
}
