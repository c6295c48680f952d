//! Uniform control on the 7-bus network: closed-form operating points, then
//! a simulated sweep of theta from 1 through the 3 % design value to 0.
//!
//! cargo run --release --example case1_compromise

use dcgrid::report::{analyze, AnalyzeOptions};
use dcgrid::scenario::parse_scenario;
use dcgrid::sim::run;

fn main() -> dcgrid::Result<()> {
    let spec = parse_scenario("case1")?;
    let opts = AnalyzeOptions {
        gamma_v: spec.gamma_v,
        ..AnalyzeOptions::default()
    };
    print!("{}", analyze(&spec.name, &spec.model, spec.controller.mode, spec.controller.omega, &opts)?);

    println!("\nsimulating {} s ...", spec.duration);
    let trace = run(&spec)?;
    println!("{:>6} {:>8} {:>8} {:>10}", "theta", "MVDR", "MCDR", "V_3 (V)");
    for p in &trace.phases {
        println!("{:>6} {:>8.5} {:>8.5} {:>10.3}", p.theta, p.report.mvdr, p.report.mcdr, p.v[2]);
    }
    Ok(())
}
