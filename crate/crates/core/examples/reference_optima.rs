//! Regenerates `data/reference_optima.txt` for the built-in benchmark pairings.
//!
//! cargo run --release -p bope-core --example reference_optima > crates/core/data/reference_optima.txt

use bope_core::problems::{
    estimate_optimum, format_sidecar_line, OutputProblem, UtilityFunction, ORACLE_POINTS, ORACLE_SEED,
    SIDECAR_VERSION,
};

fn main() -> bope_core::Result<()> {
    println!("# reference-optima {SIDECAR_VERSION}");
    println!("# problem utility params_hash value oracle_seed sweep_points");
    for name in ["DTLZ2", "VLMOP3", "ZDT1", "OSY"] {
        let problem = OutputProblem::builtin(name)?;
        let utility = UtilityFunction::default_for(problem.kind()).expect("built-in pairing");
        let opt = estimate_optimum(&problem, &utility, ORACLE_SEED, ORACLE_POINTS)?;
        eprintln!("{name}: {:.15e} at {:?}", opt.value, opt.x);
        println!("{}", format_sidecar_line(&problem, &utility, &opt));
    }
    Ok(())
}
