//! Current sharing and voltage consensus can both be exact only when every
//! converter rating is proportional to its local load conductance.
//!
//! cargo run --example conflict_check

use dcgrid::analysis::{conflict_check, uniform_steady};
use dcgrid::linalg::norm_inf;
use dcgrid::plant::DgRatings;
use dcgrid::scenario::parse_scenario;

fn main() -> dcgrid::Result<()> {
    let m = parse_scenario("case1")?.model;
    let check = conflict_check(&m.network, &m.ratings);
    println!("bundled ratings compatible: {}  I*/Y_L = {:.0?}", check.compatible, check.ratios);

    // Re-rate every converter to 0.4 * V_rat * Y_L.
    let cap: Vec<f64> = m.network.load_conductance().iter().map(|g| 0.4 * 380.0 * g).collect();
    let matched = DgRatings::with_rating_inverse_droop(cap, 380.0, 0.05)?;
    println!("matched ratings compatible: {}", conflict_check(&m.network, &matched).compatible);
    let ss = uniform_steady(&m.network, &matched)?;
    println!(
        "matched: MVDR at theta = 1 is {:.1e}, MCDR at theta = 0 is {:.1e}",
        norm_inf(&ss.delta_v(1.0)?),
        norm_inf(&ss.delta_i(0.0)?)
    );
    Ok(())
}
