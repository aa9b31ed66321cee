#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::Rng;
use tidegym::vehicle::VehicleConfig;

/// BlueROV with buoyancy trimmed to equal weight.
pub fn neutral_bluerov() -> VehicleConfig {
    let mut v = VehicleConfig::builtin("bluerov").unwrap();
    let rb = &mut v.rigid_body;
    rb.volume = rb.mass / v.hydrodynamics.fluid_density;
    v
}

/// Random neutrally buoyant vehicle with the centre of buoyancy at the
/// centre of gravity, so restoring forces vanish in every attitude.
pub fn random_restoring_free_vehicle<R: Rng>(rng: &mut R) -> VehicleConfig {
    let mut v = VehicleConfig::builtin("bluerov").unwrap();
    let mass = rng.random_range(5.0..50.0);
    let rb = &mut v.rigid_body;
    rb.mass = mass;
    rb.inertia = Matrix3::from_diagonal(&Vector3::from_fn(|_, _| rng.random_range(0.1..2.0)));
    rb.cog = Vector3::from_fn(|_, _| rng.random_range(-0.02..0.02));
    rb.cob = rb.cog;
    rb.volume = mass / v.hydrodynamics.fluid_density;
    let h = &mut v.hydrodynamics;
    let lin = |rng: &mut R, lo: f64, hi: f64| rng.random_range(lo..hi);
    h.added_mass = Matrix6::from_diagonal(&Vector6::new(
        lin(rng, 1.0, 20.0),
        lin(rng, 1.0, 20.0),
        lin(rng, 1.0, 20.0),
        lin(rng, 0.05, 1.0),
        lin(rng, 0.05, 1.0),
        lin(rng, 0.05, 1.0),
    ));
    h.linear_damping = Matrix6::from_diagonal(&Vector6::new(
        lin(rng, 2.0, 30.0),
        lin(rng, 2.0, 30.0),
        lin(rng, 2.0, 30.0),
        lin(rng, 0.5, 3.0),
        lin(rng, 0.5, 3.0),
        lin(rng, 0.5, 3.0),
    ));
    h.quadratic_damping = Matrix6::from_diagonal(&Vector6::new(
        lin(rng, 5.0, 50.0),
        lin(rng, 5.0, 50.0),
        lin(rng, 5.0, 50.0),
        lin(rng, 0.5, 5.0),
        lin(rng, 0.5, 5.0),
        lin(rng, 0.5, 5.0),
    ));
    v.name = "random".into();
    v.validate().unwrap();
    v
}
