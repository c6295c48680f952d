//! Voltage regulation restricted to buses 2, 4 and 7. Prints the design
//! theta for a 2 % bound, the omega boundary at theta = 0 and the simulated
//! phases, including the drop of omega to that boundary.
//!
//! cargo run --release --example case2_critical_nodes

use dcgrid::report::{design_theta, omega_range};
use dcgrid::scenario::parse_scenario;
use dcgrid::sim::run;

fn main() -> dcgrid::Result<()> {
    let spec = parse_scenario("case2")?;
    let (model, mode, omega) = (&spec.model, spec.controller.mode, spec.controller.omega);
    print!("{}", design_theta(model, mode, omega, 0.02)?);
    print!("{}", omega_range(model, mode, omega, 0.0)?);

    let trace = run(&spec)?;
    println!("\n{:>6} {:>6} {:>13} {:>14}  Ipu", "theta", "omega", "critical MVDR", "ordinary MCDR");
    for p in &trace.phases {
        let ipu: Vec<String> = p.ipu.iter().map(|x| format!("{x:.3}")).collect();
        println!(
            "{:>6} {:>6} {:>13.5} {:>14.2e}  {}",
            p.theta,
            p.omega,
            p.critical_mvdr,
            p.ordinary_mcdr.unwrap_or(0.0),
            ipu.join(" ")
        );
    }
    Ok(())
}
