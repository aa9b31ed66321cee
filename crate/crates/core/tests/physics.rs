mod common;

use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tidegym::dr::{DrKey, Overlay, Sample};
use tidegym::engine::{BatchSim, EnvParams, ReferenceSim, ResetDraw, SimConfig};
use tidegym::kinematics::Pose;
use tidegym::vehicle::VehicleConfig;

fn at_depth(depth: f64) -> Pose {
    Pose::new(Vector3::new(0.0, 0.0, depth), Default::default())
}

fn reference(vehicle: &VehicleConfig, overlay: &Overlay) -> ReferenceSim {
    let params = EnvParams::new(vehicle, overlay).unwrap();
    ReferenceSim::new(
        params,
        at_depth(5.0),
        Vector6::zeros(),
        Vector3::zeros(),
        &SimConfig::default(),
    )
}

#[test]
fn neutral_vehicle_at_rest_stays_at_rest() {
    let vehicle = common::neutral_bluerov();
    let mut sim = reference(&vehicle, &Overlay::new());
    let zeros = vec![0.0; vehicle.command_width()];
    for _ in 0..500 {
        sim.step(&zeros).unwrap();
    }
    assert!((sim.pose.position - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-9);
    assert!(sim.velocity.norm() < 1e-9);
}

#[test]
fn payload_makes_a_neutral_vehicle_sink() {
    let vehicle = common::neutral_bluerov();
    let mut overlay = Overlay::new();
    overlay.insert(DrKey::PayloadMass, Sample::ratio(0.2));
    let mut sim = reference(&vehicle, &overlay);
    let zeros = vec![0.0; vehicle.command_width()];
    for _ in 0..200 {
        sim.step(&zeros).unwrap();
    }
    // NED: positive z is down
    assert!(sim.pose.position.z > 5.05, "depth {}", sim.pose.position.z);
    assert!(sim.velocity[2] > 0.0);
}

#[test]
fn heavier_payload_sinks_faster() {
    let vehicle = common::neutral_bluerov();
    let zeros = vec![0.0; vehicle.command_width()];
    let depth = |ratio: f64| {
        let mut overlay = Overlay::new();
        overlay.insert(DrKey::PayloadMass, Sample::ratio(ratio));
        let mut sim = reference(&vehicle, &overlay);
        for _ in 0..100 {
            sim.step(&zeros).unwrap();
        }
        sim.pose.position.z
    };
    assert!(depth(0.3) > depth(0.1));
}

fn random_draw(rng: &mut ChaCha8Rng) -> ResetDraw {
    let p = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        5.0,
    );
    let mut draw = ResetDraw::at_rest(Pose::from_euler(p, 0.1, -0.1, rng.random_range(-3.0..3.0)));
    draw.velocity = Vector6::from_fn(|_, _| rng.random_range(-0.2..0.2));
    draw
}

#[test]
fn envs_do_not_couple() {
    let n = 8;
    let vehicle = VehicleConfig::builtin("bluerov_heavy").unwrap();
    let width = vehicle.command_width();
    let run = |poke: bool| {
        let mut sim = BatchSim::new(SimConfig::with_envs(n), vehicle.clone(), 11).unwrap();
        sim.reset_all(&|_env: usize, rng: &mut ChaCha8Rng| Ok(random_draw(rng)))
            .unwrap();
        let mut commands = vec![0.3; n * width];
        if poke {
            commands[3 * width..4 * width].fill(-1.0);
        }
        for _ in 0..50 {
            sim.step(&commands).unwrap();
        }
        sim.state().clone()
    };
    let base = run(false);
    let poked = run(true);
    for i in 0..n {
        if i == 3 {
            assert_ne!(base.poses[i], poked.poses[i]);
        } else {
            assert_eq!(base.poses[i], poked.poses[i]);
            assert_eq!(base.velocities[i], poked.velocities[i]);
        }
    }
}

#[test]
fn overlays_apply_per_env() {
    let n = 4;
    let vehicle = VehicleConfig::builtin("bluerov").unwrap();
    let mut sim = BatchSim::new(SimConfig::with_envs(n), vehicle.clone(), 0).unwrap();
    sim.reset_all(&|env: usize, _rng: &mut ChaCha8Rng| {
        let mut draw = ResetDraw::at_rest(at_depth(5.0));
        if env == 2 {
            draw.overlay.insert(DrKey::Mass, Sample::ratio(1.2));
        }
        Ok(draw)
    })
    .unwrap();
    let st = sim.state();
    for i in 0..n {
        let mass = st.params[i].vehicle.rigid_body.mass;
        let expected = if i == 2 {
            1.2 * vehicle.rigid_body.mass
        } else {
            vehicle.rigid_body.mass
        };
        assert!((mass - expected).abs() < 1e-12);
    }
}

#[test]
fn batch_reports_divergence_per_env() {
    let n = 3;
    let vehicle = VehicleConfig::builtin("bluerov").unwrap();
    let mut sim = BatchSim::new(SimConfig::with_envs(n), vehicle.clone(), 0).unwrap();
    sim.reset_all(&|_env: usize, _rng: &mut ChaCha8Rng| Ok(ResetDraw::at_rest(at_depth(5.0))))
        .unwrap();
    sim.state_mut().velocities[1] = Vector6::repeat(f64::NAN);
    sim.step(&vec![0.0; n * vehicle.command_width()]).unwrap();
    assert_eq!(sim.state().diverged, vec![false, true, false]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unforced_restoring_free_motion_loses_energy(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vehicle = common::random_restoring_free_vehicle(&mut rng);
        let nu0 = Vector6::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let params = EnvParams::new(&vehicle, &Overlay::new()).unwrap();
        let mass = params.mass.clone();
        let mut sim = ReferenceSim::new(params, at_depth(5.0), nu0, Vector3::zeros(), &SimConfig::default());
        let energy = |nu: &Vector6<f64>| mass.kinetic_energy(nu);
        let e0 = energy(&sim.velocity);
        let zeros = vec![0.0; vehicle.command_width()];
        for _ in 0..200 {
            sim.step(&zeros).unwrap();
        }
        prop_assert!(energy(&sim.velocity) <= e0 + 1e-12);
    }
}
