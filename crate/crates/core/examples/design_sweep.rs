//! The voltage/current trade-off curve on the 7-bus network, and the largest
//! theta for a range of admissible voltage deviations.
//!
//! cargo run --example design_sweep

use dcgrid::analysis::{critical_steady, uniform_steady};
use dcgrid::linalg::norm_inf;
use dcgrid::plant::partitioned_admittance;
use dcgrid::scenario::parse_scenario;

fn main() -> dcgrid::Result<()> {
    let m = parse_scenario("case1")?.model;
    let ss = uniform_steady(&m.network, &m.ratings)?;
    println!("{:>5} {:>8} {:>8}", "theta", "MVDR", "MCDR");
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        println!("{t:>5.1} {:>8.5} {:>8.5}", norm_inf(&ss.delta_v(t)?), norm_inf(&ss.delta_i(t)?));
    }

    let c = parse_scenario("case2")?.model;
    let pa = partitioned_admittance(&c.network, &c.partition)?;
    let css = critical_steady(&pa, &c.ratings, 2.0)?;
    println!("\n{:>6} {:>9} {:>16}", "gamma", "uniform", "critical (w=2)");
    for g in [0.0, 0.005, 0.01, 0.02, 0.03, 0.05, 0.07] {
        println!("{g:>6.3} {:>9.4} {:>16.4}", ss.design_theta(g)?, css.design_theta(g)?);
    }
    Ok(())
}
