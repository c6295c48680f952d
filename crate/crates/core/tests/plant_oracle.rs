mod common;

use dcgrid::control::{ControlMode, Controller, ControllerConfig, ControllerState};
use dcgrid::plant::{plant_derivatives, ElectricalNetwork, PlantState};
use dcgrid::scenario::parse_scenario;
use dcgrid::sim::step;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `Q x' = (J - R) x + G v_t` with `H = x' Q x / 2`, assembled from the raw
/// line list. State order is `[I_line, I_conv, V_bus]`.
struct PortHamiltonian {
    q: DVector<f64>,
    jr: DMatrix<f64>,
    m: usize,
    n: usize,
}

impl PortHamiltonian {
    fn new(net: &ElectricalNetwork) -> Self {
        let (m, n) = (net.line_count(), net.bus_count());
        let mut q = DVector::zeros(m + 2 * n);
        let mut jr = DMatrix::zeros(m + 2 * n, m + 2 * n);
        for (k, l) in net.lines().iter().enumerate() {
            q[k] = l.inductance;
            jr[(k, k)] = -l.resistance;
            jr[(k, m + n + l.from)] = 1.0;
            jr[(k, m + n + l.to)] = -1.0;
            jr[(m + n + l.from, k)] = -1.0;
            jr[(m + n + l.to, k)] = 1.0;
        }
        for i in 0..n {
            q[m + i] = net.filter_inductance()[i];
            q[m + n + i] = net.filter_capacitance()[i];
            jr[(m + i, m + n + i)] = -1.0;
            jr[(m + n + i, m + i)] = 1.0;
            jr[(m + n + i, m + n + i)] = -net.load_conductance()[i];
        }
        Self { q, jr, m, n }
    }

    fn pack(&self, s: &PlantState) -> DVector<f64> {
        let mut x = DVector::zeros(self.m + 2 * self.n);
        x.rows_mut(0, self.m).copy_from(&s.i_line);
        x.rows_mut(self.m, self.n).copy_from(&s.i_conv);
        x.rows_mut(self.m + self.n, self.n).copy_from(&s.v_bus);
        x
    }

    fn derivative(&self, x: &DVector<f64>, v_t: &DVector<f64>) -> DVector<f64> {
        let mut rhs = &self.jr * x;
        for i in 0..self.n {
            rhs[self.m + i] += v_t[i];
        }
        rhs.component_div(&self.q)
    }

    fn dissipation(&self, x: &DVector<f64>) -> f64 {
        -x.dot(&(&self.jr * x))
    }
}

fn random_state(rng: &mut rand_chacha::ChaCha8Rng, net: &ElectricalNetwork) -> PlantState {
    let mut s = PlantState::zeros(net);
    s.i_line.iter_mut().for_each(|x| *x = rng.random_range(-20.0..20.0));
    s.i_conv.iter_mut().for_each(|x| *x = rng.random_range(-5.0..40.0));
    s.v_bus.iter_mut().for_each(|x| *x = rng.random_range(340.0..420.0));
    s
}

#[test]
fn derivatives_match_port_hamiltonian_form() {
    for seed in 0..40 {
        let mut rng = common::rng(seed);
        let n = rng.random_range(2..12);
        let net = common::network(&mut rng, n, true);
        let ph = PortHamiltonian::new(&net);
        let s = random_state(&mut rng, &net);
        let v_t = DVector::from_fn(n, |_, _| rng.random_range(340.0..420.0));
        let d = plant_derivatives(&net, &s, &v_t);
        let expected = ph.derivative(&ph.pack(&s), &v_t);
        let got = ph.pack(&d);
        assert!((&got - &expected).amax() <= 1e-12 * expected.amax(), "seed {seed}");
    }
}

#[test]
fn skew_part_is_lossless() {
    for seed in 0..10 {
        let mut rng = common::rng(seed);
        let net = common::network(&mut rng, 6, true);
        let ph = PortHamiltonian::new(&net);
        let skew = (&ph.jr - ph.jr.transpose()) * 0.5;
        let x = ph.pack(&random_state(&mut rng, &net));
        assert!(x.dot(&(&skew * &x)).abs() < 1e-9 * x.norm_squared());
    }
}

#[test]
fn energy_is_non_increasing_with_shorted_converters() {
    for seed in 0..10 {
        let mut rng = common::rng(100 + seed);
        let n = rng.random_range(2..9);
        let net = common::network(&mut rng, n, true);
        let ph = PortHamiltonian::new(&net);
        let zero = DVector::zeros(n);
        let mut s = random_state(&mut rng, &net);

        // Instantaneous rate equals minus the resistive dissipation.
        let x = ph.pack(&s);
        let rate = x.component_mul(&ph.q).dot(&ph.pack(&plant_derivatives(&net, &s, &zero)));
        let dissipation = ph.dissipation(&x);
        assert!(dissipation >= 0.0);
        assert!((rate + dissipation).abs() <= 1e-9 * dissipation.max(1.0), "seed {seed}");

        let h = 2e-6;
        let mut energy = s.stored_energy(&net);
        for _ in 0..3000 {
            let f = |p: &PlantState| plant_derivatives(&net, p, &zero);
            let add = |p: &PlantState, d: &PlantState, c: f64| PlantState {
                i_line: &p.i_line + &d.i_line * c,
                i_conv: &p.i_conv + &d.i_conv * c,
                v_bus: &p.v_bus + &d.v_bus * c,
            };
            let k1 = f(&s);
            let k2 = f(&add(&s, &k1, h / 2.0));
            let k3 = f(&add(&s, &k2, h / 2.0));
            let k4 = f(&add(&s, &k3, h));
            s = add(&s, &k1, h / 6.0);
            s = add(&s, &k2, h / 3.0);
            s = add(&s, &k3, h / 3.0);
            s = add(&s, &k4, h / 6.0);
            let e = s.stored_energy(&net);
            assert!(e <= energy * (1.0 + 1e-12), "seed {seed}: energy rose from {energy} to {e}");
            energy = e;
        }
    }
}

#[test]
fn rk4_step_is_fourth_order() {
    let spec = parse_scenario("case1").unwrap();
    let model = spec.model;
    let controller = Controller::new(&model, ControllerConfig::new(ControlMode::Uniform, 0.5, 1.0).with_gains(200.0, 40.0)).unwrap();
    let mut plant = PlantState::zeros(&model.network);
    plant.v_bus.fill(380.0);
    let ctrl = ControllerState::cold(&plant.v_bus);
    let horizon = 1e-4;
    let integrate = |h: f64| {
        let steps = (horizon / h).round() as usize;
        let (mut p, mut c) = (plant.clone(), ctrl.clone());
        for _ in 0..steps {
            (p, c) = step(&model, &controller, &p, &c, h).unwrap();
        }
        (p, c)
    };
    let (p_ref, _) = integrate(1.25e-7);
    let err = |h: f64| {
        let (p, _) = integrate(h);
        (&p.v_bus - &p_ref.v_bus).amax().max((&p.i_line - &p_ref.i_line).amax())
    };
    let (e1, e2, e3) = (err(2e-6), err(1e-6), err(5e-7));
    let (r1, r2) = (e1 / e2, e2 / e3);
    assert!((12.0..20.0).contains(&r1) && (12.0..20.0).contains(&r2), "ratios {r1} {r2} from {e1} {e2} {e3}");
}
