//! Per-trajectory entropy production and its forward/backward histogram.
//!
//! Every bin obeys ln(p/p̃) = σ. The forward average of e^{-σ} falls short
//! of one by the backward weight of trajectories the forward run never
//! produces.

use demon_ep::channels::ErrorModel;
use demon_ep::dataio::kelvin_to_beta_omega;
use demon_ep::protocol::{sigma_histogram, Mode, Simulation};
use demon_ep::statespace::{GibbsSpec, SystemDims};
use demon_ep::validation::forward_exp_average;

fn main() -> demon_ep::error::Result<()> {
    let beta_c = kelvin_to_beta_omega(2.8, 51.0)?;
    let dbeta = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    let sim = Simulation::new(SystemDims::default(), Mode::Ideal, &ErrorModel::none())?;
    let (f, b) = sim.tables(&GibbsSpec::from_dbeta(beta_c, dbeta)?)?;
    let h = sigma_histogram(&f, &b, 1e-9)?;
    println!(
        "{:>14} {:>14} {:>14} {:>12}",
        "sigma", "p", "p_b", "ln(p/p_b)"
    );
    for bin in &h.bins {
        println!(
            "{:>14.8} {:>14.8} {:>14.8} {:>12.8}",
            bin.sigma,
            bin.forward,
            bin.backward,
            (bin.forward / bin.backward).ln()
        );
    }
    let avg = forward_exp_average(&f)?;
    println!("<e^-sigma>                 {avg:.10}");
    println!("unreached backward weight  {:.10}", h.unreached_backward);
    println!("total backward weight      {:.10}", b.total());
    Ok(())
}
