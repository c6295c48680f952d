//! Frozen values for the bundled 7-bus network. The constants were computed
//! by an independent dense re-implementation and are pinned here.

use dcgrid::analysis::{critical_steady, i_b1, uniform_steady};
use dcgrid::linalg::{norm_inf, Factorized};
use dcgrid::plant::{load_augmented_admittance, partitioned_admittance, steady_state_oracle, OracleMode};
use dcgrid::scenario::parse_scenario;
use dcgrid::topology::is_connected;
use nalgebra::DVector;

const TOL: f64 = 5e-7;

#[test]
fn uniform_constants() {
    let spec = parse_scenario("case1").unwrap();
    let ss = uniform_steady(&spec.model.network, &spec.model.ratings).unwrap();
    assert!((ss.mu - 2.511607).abs() < TOL, "mu {}", ss.mu);
    assert!((norm_inf(&ss.psi) - 0.153663).abs() < TOL);
    assert!((ss.max_mvdr() - 0.061181).abs() < TOL);
    assert!((ss.design_theta(0.03).unwrap() - 0.276972).abs() < TOL);
    // Bus 3 carries the worst deviation at theta = 1.
    let dv = ss.delta_v(1.0).unwrap();
    assert_eq!(dv.iamax(), 2);
    assert!(dv[2] < 0.0);
}

#[test]
fn critical_constants() {
    let spec = parse_scenario("case2").unwrap();
    let pa = partitioned_admittance(&spec.model.network, &spec.model.partition).unwrap();
    let css = critical_steady(&pa, &spec.model.ratings, 2.0).unwrap();
    assert!((css.mu - 2.523707).abs() < TOL, "mu {}", css.mu);
    assert!((norm_inf(&css.psi1) - 0.074422).abs() < TOL);
    assert!((css.design_theta(0.02).unwrap() - 0.625506).abs() < TOL);
    let range = css.omega_range(0.0).unwrap();
    assert!((range.lower - 1.70873).abs() < 1e-5, "omega_min {}", range.lower);
    assert_eq!(range.binding_node, 6);
    assert!(css.upsilon1.iter().all(|&u| u > 0.0));
    assert!(pa.schur_cri_inv().iter().all(|&s| s > 0.0));
}

#[test]
fn i_b1_sum_two_ways() {
    let spec = parse_scenario("case2").unwrap();
    let m = &spec.model;
    let pa = partitioned_admittance(&m.network, &m.partition).unwrap();
    let block = i_b1(&pa, &m.ratings, 2.0).unwrap();
    // Full solve: fix critical voltages, inject I* at ordinary buses.
    let y = load_augmented_admittance(&m.network);
    let (c, o) = (m.partition.critical(), m.partition.ordinary());
    let y22 = y.select_rows(o).select_columns(o);
    let y21 = y.select_rows(o).select_columns(c);
    let v1 = DVector::from_element(c.len(), 2.0 * 380.0);
    let i2 = DVector::from_iterator(o.len(), o.iter().map(|&k| m.ratings.current_capacity()[k]));
    let v2 = Factorized::new(&y22, "Y22").unwrap().solve(&(i2 - y21 * &v1));
    let full = y.select_rows(c).select_columns(c) * &v1 + y.select_rows(c).select_columns(o) * v2;
    assert!((block.sum() - full.sum()).abs() < 1e-9 * full.sum().abs());
}

#[test]
fn closed_form_matches_oracle_at_half_theta() {
    let spec = parse_scenario("case1").unwrap();
    let (net, r) = (&spec.model.network, &spec.model.ratings);
    let ss = uniform_steady(net, r).unwrap();
    let sol = steady_state_oracle(net, r, &ss.reference(0.5).unwrap(), OracleMode::Uniform).unwrap();
    assert!((ss.voltages(0.5).unwrap() - sol.v).amax() < 1e-6);
    assert!((ss.currents(0.5).unwrap() - sol.i).amax() < 1e-6);

    let spec = parse_scenario("case2").unwrap();
    let m = &spec.model;
    let pa = partitioned_admittance(&m.network, &m.partition).unwrap();
    let css = critical_steady(&pa, &m.ratings, 2.0).unwrap();
    let mut reference = m.ratings.capacity_vector();
    for (k, &i) in m.partition.critical().iter().enumerate() {
        reference[i] = css.reference1(0.5).unwrap()[k];
    }
    let sol = steady_state_oracle(&m.network, &m.ratings, &reference, OracleMode::Critical(&m.partition)).unwrap();
    let (v, i) = css.profile(0.5).unwrap();
    assert!((v - sol.v).amax() < 1e-6);
    assert!((i - sol.i).amax() < 1e-6);
}

#[test]
fn ring_survives_one_disabled_node() {
    let spec = parse_scenario("case3").unwrap();
    let g = &spec.model.graph;
    let mut active = vec![true; 7];
    active[5] = false;
    assert!(is_connected(&g.with_active(&active)));
    active[1] = false;
    assert!(!is_connected(&g.with_active(&active)));
}

#[test]
fn ordinary_per_unit_falls_with_omega() {
    let spec = parse_scenario("case2").unwrap();
    let m = &spec.model;
    let pa = partitioned_admittance(&m.network, &m.partition).unwrap();
    let lower = critical_steady(&pa, &m.ratings, 2.0).unwrap().omega_range(0.0).unwrap().lower;
    let mut prev = f64::INFINITY;
    for k in 0..=20 {
        let w = lower + 0.1 * k as f64;
        let css = critical_steady(&pa, &m.ratings, w).unwrap();
        let (_, i) = css.profile(0.0).unwrap();
        let ipu2 = i[0] / m.ratings.current_capacity()[0];
        assert!(ipu2 < prev, "omega {w}");
        prev = ipu2;
    }
}
