//! Writes simulated conditionals in the measured-data table format, reads
//! them back and evaluates the estimators from the files alone.

use demon_ep::channels::ErrorModel;
use demon_ep::dataio::{
    dbeta_grid, format_sweep_csv, kelvin_to_beta_omega, parse_table_file, write_table_file,
    ConditionalTable, CsvOptions, Orientation,
};
use demon_ep::entropy::EstimatorOptions;
use demon_ep::protocol::{Mode, Simulation};
use demon_ep::statespace::SystemDims;
use demon_ep::sweep::run_analysis;

fn main() -> demon_ep::error::Result<()> {
    let dims = SystemDims::default();
    let dir = std::env::temp_dir().join("demon-ep-tables");
    std::fs::create_dir_all(&dir)?;
    let (fwd, bwd) =
        Simulation::new(dims, Mode::Physical, &ErrorModel::default())?.conditionals()?;
    let (fp, bp) = (dir.join("forward.dat"), dir.join("backward.dat"));
    write_table_file(&ConditionalTable::from_conditionals(&fwd), &fp)?;
    write_table_file(&ConditionalTable::from_conditionals(&bwd), &bp)?;
    println!("tables in {}", dir.display());

    let fwd = parse_table_file(&fp, Orientation::ForwardRowsInitial)?.to_conditionals(dims)?;
    let bwd = parse_table_file(&bp, Orientation::BackwardRowsFinal)?.to_conditionals(dims)?;
    let rows = run_analysis(
        &fwd,
        Some(&bwd),
        kelvin_to_beta_omega(2.8, 51.0)?,
        &dbeta_grid(-6.0, 6.0, 2.0)?,
        &EstimatorOptions::default(),
    )?;
    print!("{}", format_sweep_csv(&rows, CsvOptions::default())?);
    Ok(())
}
