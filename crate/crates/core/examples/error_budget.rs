//! Each imperfection switched on alone, compared against the ideal run at
//! both ends of the temperature range.

use demon_ep::channels::{ErrorKind, ErrorModel};
use demon_ep::dataio::kelvin_to_beta_omega;
use demon_ep::entropy::{evaluate, EpResult, EstimatorOptions};
use demon_ep::error::Result;
use demon_ep::protocol::{Mode, Simulation};
use demon_ep::statespace::{GibbsSpec, SystemDims};

fn point(model: &ErrorModel, beta_c: f64, dbeta: f64) -> Result<EpResult> {
    let sim = Simulation::new(SystemDims::default(), Mode::Physical, model)?;
    let (f, b) = sim.tables(&GibbsSpec::from_dbeta(beta_c, dbeta)?)?;
    evaluate(&f, Some(&b), &EstimatorOptions::default())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

fn main() -> Result<()> {
    let beta_c = kelvin_to_beta_omega(2.8, 51.0)?;
    let mut runs = vec![("ideal".to_string(), ErrorModel::none())];
    runs.extend(
        ErrorKind::ALL
            .iter()
            .map(|k| (k.to_string(), ErrorModel::default().only(&[*k]))),
    );
    runs.push(("all".into(), ErrorModel::default()));
    for dbeta in [-6.0, 6.0] {
        println!("dbeta_tilde = {dbeta}");
        println!(
            "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "errors", "S1", "S2", "S3", "S4", "S5", "S6"
        );
        for (name, model) in &runs {
            let r = point(model, beta_c, dbeta)?;
            println!(
                "{:<12} {:>8.4} {:>8.4} {:>8} {:>8} {:>8} {:>8.4}",
                name,
                r.sigma1,
                r.sigma2,
                fmt(r.sigma3),
                fmt(r.sigma4),
                fmt(r.sigma5),
                r.sigma6
            );
        }
        println!();
    }
    Ok(())
}
