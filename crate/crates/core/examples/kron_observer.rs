//! How ordinary buses that only relay estimates shape the observer graph
//! seen by the critical buses.
//!
//! cargo run --example kron_observer

use dcgrid::scenario::parse_scenario;
use dcgrid::topology::{kron_reduce, laplacian, ordinary_relay_map};

fn main() -> dcgrid::Result<()> {
    let spec = parse_scenario("case2")?;
    let lap = laplacian(&spec.model.graph);
    let p = &spec.model.partition;
    println!("communication Laplacian{}", lap.as_matrix());

    let reduced = kron_reduce(&lap, p.critical())?;
    let ids: Vec<usize> = p.critical().iter().map(|i| i + 1).collect();
    println!("reduced onto buses {ids:?}{}", reduced.as_matrix());

    // Each relay's estimate is a convex combination of critical estimates.
    let relay = ordinary_relay_map(&lap, p)?;
    for (row, &bus) in p.ordinary().iter().enumerate() {
        let w: Vec<String> = relay.row(row).iter().map(|x| format!("{x:.3}")).collect();
        println!("bus {} relays {}", bus + 1, w.join(" "));
    }
    Ok(())
}
