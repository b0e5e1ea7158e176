use std::f64::consts::PI;

use qtraj::feedback::{rabi_ensemble, run_rabi, zeno_drag, zeno_retention, RabiConfig, ZenoDragConfig};
use qtraj::hilbert::{DensityMatrix, SpaceShape};
use qtraj::sme::{
    simulate_trajectory, ControlAction, Controller, Integrator, Observation, ReplayNoise, SimOptions, WienerStream,
};

#[test]
fn static_axis_pins_pointer_state() {
    let cfg = ZenoDragConfig::new(0.0, 1.0, 1.0, 10.0).unwrap();
    let r = zeno_retention(&cfg, 2000, 5, 0).unwrap();
    let success = 0.5 * (1.0 + r[0]);
    assert!(success >= 0.999, "{success}");
}

#[test]
fn paper_rate_shows_dragged_and_jumped_runs() {
    let nu = 2.0 * PI * 0.05;
    let cfg = ZenoDragConfig::new(nu, 5.0 * nu, 1.0, 5.0).unwrap();
    assert!(cfg.regime_ok());
    let mut dragged = 0;
    let mut jumped = 0;
    for i in 0..200 {
        let run = zeno_drag(&cfg, &mut WienerStream::new(17, i)).unwrap();
        if run.success {
            dragged += 1;
        } else {
            jumped += 1;
        }
    }
    assert!(dragged > 0 && jumped > 0, "{dragged} dragged, {jumped} jumped");
    assert!(dragged > jumped);
}

/// Rabi controller whose drive is replayed from its own log.
#[test]
fn controller_log_replays_bit_exactly() {
    let cfg = RabiConfig::default();
    let dt = 2e-3;
    let first = run_rabi(&cfg, 4.0, dt, &mut WienerStream::new(3, 0), 50).unwrap();
    assert_eq!(first.controller_log.len(), first.times.len());
    let mut replay = ReplayNoise::from_increments(&first.increments[0], dt);
    let model = qtraj::feedback::rabi_model(&cfg).unwrap();
    let mut ctl = qtraj::feedback::rabi_stabilization_controller(&cfg, dt).unwrap();
    let rho0 = DensityMatrix::basis(SpaceShape::qubit(), 0).unwrap();
    let opts = SimOptions { thinning: 50, store_records: true, integrator: Integrator::Povm };
    let second = simulate_trajectory(&model, &rho0, 4.0, dt, &mut replay, Some(&mut ctl), &opts).unwrap();
    assert_eq!(first.controller_log, second.controller_log);
    assert_eq!(first.records, second.records);
    for (a, b) in first.states.iter().zip(&second.states) {
        assert_eq!(a.matrix(), b.matrix());
    }
}

struct Counting(usize);

impl Controller for Counting {
    fn observe(&mut self, obs: &Observation<'_>) -> qtraj::Result<ControlAction> {
        assert_eq!(obs.step, self.0);
        self.0 += 1;
        Ok(ControlAction { log: vec![obs.records[0]], ..Default::default() })
    }
}

#[test]
fn controller_sees_every_step_in_order() {
    let cfg = RabiConfig::default();
    let model = qtraj::feedback::rabi_model(&cfg).unwrap();
    let rho0 = DensityMatrix::basis(SpaceShape::qubit(), 0).unwrap();
    let mut c = Counting(0);
    let rec = simulate_trajectory(&model, &rho0, 1.0, 1e-3, &mut WienerStream::new(1, 1), Some(&mut c), &SimOptions::default())
        .unwrap();
    assert_eq!(c.0, 1000);
    let logged: Vec<f64> = rec.controller_log.iter().map(|l| l[0]).collect();
    assert_eq!(logged, rec.records[0]);
}

#[test]
fn stabilized_amplitude_grows_with_efficiency() {
    let dt = 2e-3;
    let base = RabiConfig::default();
    let t_end = 20.0 / base.decay_rate();
    let amps: Vec<f64> = [0.2, 0.4, 0.8]
        .iter()
        .map(|&eta| {
            let cfg = RabiConfig { eta, ..base.clone() };
            rabi_ensemble(&cfg, t_end, dt, 200, 2, 0, 10).unwrap().amplitude(cfg.omega_r, t_end - 5.0, t_end)
        })
        .collect();
    assert!(amps[0] < amps[1] && amps[1] < amps[2], "{amps:?}");
}
