//! Information the demon acquires in the readout and the balance between
//! that information, the heat it extracts and the entropy produced.

use demon_ep::channels::ErrorModel;
use demon_ep::dataio::kelvin_to_beta_omega;
use demon_ep::entropy::{evaluate, feedback_balance_residual, EstimatorOptions};
use demon_ep::protocol::{Mode, Simulation};
use demon_ep::statespace::{mutual_information, GibbsSpec, Subsystem, SystemDims};

fn main() -> demon_ep::error::Result<()> {
    let beta_c = kelvin_to_beta_omega(2.8, 51.0)?;
    let sim = Simulation::new(SystemDims::default(), Mode::Ideal, &ErrorModel::none())?;
    let circuit = sim.circuit()?;
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "dbeta", "I(Q:D)", "<I>", "heat_C", "Sigma", "residual"
    );
    for i in -6..=6 {
        let dbeta = f64::from(i);
        let g = GibbsSpec::from_dbeta(beta_c, dbeta)?;
        let taps = circuit.oracle(&g)?;
        let info = mutual_information(&taps.post_readout, &[Subsystem::Qubit])?;
        let (f, b) = sim.tables(&g)?;
        let r = evaluate(&f, Some(&b), &EstimatorOptions::default())?;
        let residual = feedback_balance_residual(&taps.post_readout, &taps.post_feedback, &g)?;
        println!(
            "{:>6.1} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.1e}",
            dbeta, info, r.mean_info, r.heat_c, r.sigma1, residual
        );
    }
    Ok(())
}
