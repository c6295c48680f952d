//! DG 6 leaves at t = 4 s, its bus keeps relaying consensus messages, and it
//! rejoins at t = 12 s.
//!
//! cargo run --release --example case3_plug_and_play

use dcgrid::scenario::parse_scenario;
use dcgrid::sim::run;

fn main() -> dcgrid::Result<()> {
    let spec = parse_scenario("case3")?;
    let trace = run(&spec)?;
    for p in &trace.phases {
        let plugged: Vec<usize> = p.plugged.iter().enumerate().filter(|(_, &on)| on).map(|(i, _)| i + 1).collect();
        println!(
            "[{:>4.1}, {:>4.1}] s  DGs {:?}  V_6 = {:.3} V  settled {}  predicted gap {:.1e}",
            p.start,
            p.end,
            plugged,
            p.v[5],
            p.settled,
            p.prediction_error()
        );
    }
    let v6: Vec<String> = trace
        .samples
        .iter()
        .step_by(500)
        .map(|s| format!("{:.1}:{:.2}", s.t, s.v[5]))
        .collect();
    println!("V_6 every 0.5 s: {}", v6.join(" "));
    Ok(())
}
