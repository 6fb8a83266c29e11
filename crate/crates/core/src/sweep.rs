//! Estimators over a grid of relative inverse temperatures.
//!
//! Grid points are independent and run in parallel on the current rayon
//! pool; results come back in grid order.

use rayon::prelude::*;

use crate::entropy::{evaluate, EpResult, EstimatorOptions};
use crate::error::Result;
use crate::protocol::{
    forward_from_conditionals, tables_from_conditionals, Conditionals, Simulation,
};
use crate::statespace::GibbsSpec;

/// Simulates the apparatus at every grid point.
pub fn run_sweep(
    sim: &Simulation,
    beta_c: f64,
    grid: &[f64],
    opts: &EstimatorOptions,
    forward_only: bool,
) -> Result<Vec<EpResult>> {
    let (fwd, bwd) = sim.conditionals()?;
    run_analysis(&fwd, (!forward_only).then_some(&bwd), beta_c, grid, opts)
}

/// Reweights fixed conditionals at every grid point. Without backward
/// conditionals only the forward estimators are computed.
pub fn run_analysis(
    fwd: &Conditionals,
    bwd: Option<&Conditionals>,
    beta_c: f64,
    grid: &[f64],
    opts: &EstimatorOptions,
) -> Result<Vec<EpResult>> {
    grid.par_iter()
        .map(|&dbeta| {
            let gibbs = GibbsSpec::from_dbeta(beta_c, dbeta)?;
            match bwd {
                Some(b) => {
                    let (f, b) = tables_from_conditionals(fwd, b, &gibbs)?;
                    evaluate(&f, Some(&b), opts)
                }
                None => evaluate(&forward_from_conditionals(fwd, &gibbs)?, None, opts),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ErrorModel;
    use crate::dataio::dbeta_grid;
    use crate::protocol::Mode;
    use crate::statespace::SystemDims;

    const X: f64 = 0.874_147_845_505_990_2;

    #[test]
    fn ideal_sweep_rows_agree() {
        let sim = Simulation::new(SystemDims::default(), Mode::Ideal, &ErrorModel::none()).unwrap();
        let grid = dbeta_grid(-6.0, 6.0, 0.25).unwrap();
        let rows = run_sweep(&sim, X, &grid, &EstimatorOptions::default(), false).unwrap();
        assert_eq!(rows.len(), 49);
        for (r, d) in rows.iter().zip(&grid) {
            assert_eq!(r.dbeta_tilde, *d);
            assert!(r.max_pairwise_gap() < 1e-9);
        }
    }

    #[test]
    fn forward_only_skips_backward_estimators() {
        let sim = Simulation::new(
            SystemDims::default(),
            Mode::Physical,
            &ErrorModel::default(),
        )
        .unwrap();
        let rows = run_sweep(&sim, X, &[0.0, 6.0], &EstimatorOptions::default(), true).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.sigma3.is_none() && r.sigma4.is_none() && r.sigma5.is_none()));
        let full = run_sweep(&sim, X, &[0.0, 6.0], &EstimatorOptions::default(), false).unwrap();
        assert_eq!(rows[1].sigma1, full[1].sigma1);
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let sim = Simulation::new(
            SystemDims::default(),
            Mode::Physical,
            &ErrorModel::default(),
        )
        .unwrap();
        let grid = dbeta_grid(-6.0, 6.0, 0.5).unwrap();
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| run_sweep(&sim, X, &grid, &EstimatorOptions::default(), false).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
