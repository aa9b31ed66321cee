//! Batched stepping of N independent vehicles.
//!
//! State is kept as structure-of-arrays. Each environment's update depends
//! only on its own rows, so the batch is split across rayon workers without
//! changing any result bit.

use std::sync::Arc;

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuation::{actuator_wrench, aggregate_wrenches, apply_command, ActuatorState};
use crate::dr::{DrKey, Mode, Overlay};
use crate::error::{Error, Result};
use crate::hydrodynamics::{
    acceleration, coriolis_force, hydro_wrench, rb_mass_matrix, MassMatrix, RigidBodyParams,
};
use crate::kinematics::{integrate_pose, BodyVelocity, Pose};
use crate::vehicle::{apply_overlay, compose_rigid_body, Payload, VehicleConfig};

/// Envs handed to a worker at a time.
const MIN_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub substeps: usize,
    pub n_envs: usize,
    /// Worker cap; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 1,
            n_envs: 1,
            workers: None,
        }
    }
}

impl SimConfig {
    pub fn with_envs(n_envs: usize) -> Self {
        Self {
            n_envs,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "sim.dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("sim.substeps", "must be >= 1"));
        }
        if self.n_envs == 0 {
            return Err(Error::invalid("sim.n_envs", "must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("sim.workers", "must be >= 1"));
        }
        Ok(())
    }

    /// Integration step used inside one control step.
    pub fn physics_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// Physical parameters of one environment after randomization.
#[derive(Debug, Clone)]
pub struct EnvParams {
    /// Vehicle with the overlay applied (payload excluded).
    pub vehicle: VehicleConfig,
    pub payload: Payload,
    /// Composite rigid body including the payload.
    pub rigid_body: RigidBodyParams,
    pub rb_mass: Matrix6<f64>,
    /// `M_RB + M_A`.
    pub mass: MassMatrix,
    pub overlay: Overlay,
}

impl EnvParams {
    pub fn new(base: &VehicleConfig, overlay: &Overlay) -> Result<Self> {
        let vehicle = if overlay.keys().any(|k| !k.is_environmental()) {
            apply_overlay(base, overlay)?
        } else {
            base.clone()
        };
        let payload = payload_from_overlay(base, overlay)?;
        let rigid_body = compose_rigid_body(&vehicle.rigid_body, &payload);
        let rb_mass = rb_mass_matrix(&rigid_body)?;
        let mass = MassMatrix::new(rb_mass + vehicle.hydrodynamics.added_mass)?;
        Ok(Self {
            vehicle,
            payload,
            rigid_body,
            rb_mass,
            mass,
            overlay: overlay.clone(),
        })
    }
}

/// Payload implied by an overlay. Ratio masses are relative to the base
/// vehicle's nominal mass; the attach point defaults to the vehicle's
/// geometry hint.
pub fn payload_from_overlay(base: &VehicleConfig, overlay: &Overlay) -> Result<Payload> {
    let mass = match overlay.get(&DrKey::PayloadMass) {
        None => 0.0,
        Some(s) => {
            let v = s
                .value
                .scalar()
                .ok_or_else(|| Error::invalid("overlay[payload_mass*]", "expected a scalar"))?;
            match s.mode {
                Mode::Ratio => v * base.rigid_body.mass,
                Mode::Absolute => v,
            }
        }
    };
    let position = match overlay.get(&DrKey::PayloadPosition) {
        None => base.geometry.payload_attach_m,
        Some(s) => s
            .value
            .vector()
            .ok_or_else(|| Error::invalid("overlay[payload_position]", "expected a 3-vector"))?,
    };
    Payload::new(mass, position)
}

/// Body-frame current: linear part `Rᵀ(q)·current_ned`, angular part zero.
#[inline]
pub fn current_in_body(pose: &Pose, current_ned: &Vector3<f64>) -> Vector6<f64> {
    let v = pose.attitude.inverse_transform_vector(current_ned);
    Vector6::new(v.x, v.y, v.z, 0.0, 0.0, 0.0)
}

/// Key of a counter-based random substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngKey {
    pub seed: u64,
    pub stream: u64,
    pub episode: u64,
}

impl RngKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.episode.to_le_bytes());
        key[16..24].copy_from_slice(b"envreset");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng
    }
}

/// What a reset sampler decides for one environment.
#[derive(Debug, Clone)]
pub struct ResetDraw {
    pub pose: Pose,
    pub velocity: Vector6<f64>,
    pub overlay: Overlay,
    pub current_ned: Vector3<f64>,
}

impl ResetDraw {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            velocity: Vector6::zeros(),
            overlay: Overlay::new(),
            current_ned: Vector3::zeros(),
        }
    }
}

/// Per-environment reset policy. Receives the env index and its substream.
pub trait ResetSampler: Sync {
    fn draw(&self, env: usize, rng: &mut ChaCha8Rng) -> Result<ResetDraw>;
}

impl<F> ResetSampler for F
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<ResetDraw> + Sync,
{
    fn draw(&self, env: usize, rng: &mut ChaCha8Rng) -> Result<ResetDraw> {
        self(env, rng)
    }
}

/// Structure-of-arrays state of the whole batch.
#[derive(Debug, Clone)]
pub struct BatchState {
    pub poses: Vec<Pose>,
    pub velocities: Vec<Vector6<f64>>,
    /// `N × actuator_count`, row-major.
    pub actuators: Vec<ActuatorState>,
    pub params: Vec<Arc<EnvParams>>,
    pub currents: Vec<Vector3<f64>>,
    /// Steps taken in the current episode.
    pub steps: Vec<u64>,
    /// Resets performed so far; the next reset uses this as its episode key.
    pub episodes: Vec<u64>,
    pub diverged: Vec<bool>,
    /// Last applied (clamped) commands, `N × command_width`.
    pub commands: Vec<f64>,
}

impl BatchState {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Owns a batch of environments sharing one base vehicle.
pub struct BatchSim {
    config: SimConfig,
    vehicle: Arc<VehicleConfig>,
    nominal: Arc<EnvParams>,
    seed: u64,
    n_actuators: usize,
    width: usize,
    pool: Option<rayon::ThreadPool>,
    state: BatchState,
}

impl BatchSim {
    /// Builds a batch with every env at the origin, at rest, with nominal
    /// parameters. Call [`BatchSim::reset`] to draw initial states.
    pub fn new(config: SimConfig, vehicle: VehicleConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        vehicle.validate()?;
        let nominal = Arc::new(EnvParams::new(&vehicle, &Overlay::new())?);
        let n = config.n_envs;
        let n_actuators = vehicle.actuators.len();
        let width = vehicle.command_width();
        let pool = match config.workers {
            Some(w) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::invalid("sim.workers", e.to_string()))?,
            ),
            None => None,
        };
        let state = BatchState {
            poses: vec![Pose::identity(); n],
            velocities: vec![Vector6::zeros(); n],
            actuators: vec![ActuatorState::default(); n * n_actuators],
            params: vec![Arc::clone(&nominal); n],
            currents: vec![Vector3::zeros(); n],
            steps: vec![0; n],
            episodes: vec![0; n],
            diverged: vec![false; n],
            commands: vec![0.0; n * width],
        };
        Ok(Self {
            config,
            vehicle: Arc::new(vehicle),
            nominal,
            seed,
            n_actuators,
            width,
            pool,
            state,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn vehicle(&self) -> &VehicleConfig {
        &self.vehicle
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_envs(&self) -> usize {
        self.config.n_envs
    }

    pub fn command_width(&self) -> usize {
        self.width
    }

    pub fn state(&self) -> &BatchState {
        &self.state
    }

    /// Direct state access for tests and tooling. Callers are responsible for
    /// keeping the per-env invariants.
    pub fn state_mut(&mut self) -> &mut BatchState {
        &mut self.state
    }

    /// Runs `f` on this simulator's worker pool, or the global pool when none is set.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// Advances every non-diverged env by one control step.
    ///
    /// `commands` is `N × command_width`, row-major; values are clamped to
    /// `[-1, 1]`. Envs whose state turns non-finite are restored to their
    /// pre-step state and flagged in `diverged`.
    pub fn step(&mut self, commands: &[f64]) -> Result<()> {
        let n = self.config.n_envs;
        let width = self.width;
        if commands.len() != n * width {
            return Err(Error::Shape {
                expected: n * width,
                got: commands.len(),
            });
        }
        if let Some(i) = commands.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(
                format!("commands[{}][{}]", i / width, i % width),
                "non-finite",
            ));
        }
        let dt = self.config.physics_dt();
        let substeps = self.config.substeps;
        let n_act = self.n_actuators;
        let pool = self.pool.take();
        let state = &mut self.state;
        let mut run = || {
            (
                state.poses.par_iter_mut(),
                state.velocities.par_iter_mut(),
                state.actuators.par_chunks_mut(n_act),
                state.params.par_iter(),
                state.currents.par_iter(),
                state.steps.par_iter_mut(),
                state.diverged.par_iter_mut(),
                state.commands.par_chunks_mut(width),
                commands.par_chunks(width),
            )
                .into_par_iter()
                .with_min_len(MIN_CHUNK)
                .for_each(
                    |(pose, nu, acts, params, current, steps, diverged, last, cmds)| {
                        if *diverged {
                            return;
                        }
                        for (dst, src) in last.iter_mut().zip(cmds) {
                            *dst = src.clamp(-1.0, 1.0);
                        }
                        // Rotor speeds and surface angles stay bounded, so only the
                        // rigid-body state needs restoring.
                        let saved = (*pose, *nu);
                        if step_env(params, pose, nu, acts, current, last, dt, substeps) {
                            *steps += 1;
                        } else {
                            *pose = saved.0;
                            *nu = saved.1;
                            *diverged = true;
                        }
                    },
                );
        };
        match &pool {
            Some(p) => p.install(run),
            None => run(),
        }
        self.pool = pool;
        Ok(())
    }

    /// Re-initializes the masked envs from `sampler` using each env's own
    /// substream `(seed, env, episodes[env])`.
    pub fn reset(&mut self, mask: &[bool], sampler: &dyn ResetSampler) -> Result<()> {
        let seed = self.seed;
        let episodes = self.state.episodes.clone();
        self.reset_with_keys(
            mask,
            &|env| RngKey {
                seed,
                stream: env as u64,
                episode: episodes[env],
            },
            sampler,
        )
    }

    /// Like [`BatchSim::reset`], with caller-chosen substream keys. Used for
    /// common random numbers across candidates and fixed evaluation seeds.
    pub fn reset_with_keys(
        &mut self,
        mask: &[bool],
        key: &(dyn Fn(usize) -> RngKey + Sync),
        sampler: &dyn ResetSampler,
    ) -> Result<()> {
        let n = self.config.n_envs;
        if mask.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: mask.len(),
            });
        }
        let targets: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if targets.is_empty() {
            return Ok(());
        }
        let base = Arc::clone(&self.vehicle);
        let nominal = Arc::clone(&self.nominal);
        let draws: Vec<Result<(ResetDraw, Arc<EnvParams>)>> = self.install(|| {
            targets
                .par_iter()
                .with_min_len(8)
                .map(|&env| {
                    let mut rng = key(env).rng();
                    let draw = sampler.draw(env, &mut rng)?;
                    let params = if draw.overlay.is_empty() {
                        Arc::clone(&nominal)
                    } else {
                        Arc::new(EnvParams::new(&base, &draw.overlay)?)
                    };
                    Ok((draw, params))
                })
                .collect()
        });
        let n_act = self.n_actuators;
        let width = self.width;
        let st = &mut self.state;
        for (&env, result) in targets.iter().zip(draws) {
            let (draw, params) = result?;
            if !draw.pose.is_finite() || !draw.velocity.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid(
                    format!("reset[{env}]"),
                    "sampler produced a non-finite state",
                ));
            }
            st.poses[env] = draw.pose;
            st.velocities[env] = draw.velocity;
            st.currents[env] = draw.current_ned;
            st.params[env] = params;
            st.actuators[env * n_act..(env + 1) * n_act].fill(ActuatorState::default());
            st.commands[env * width..(env + 1) * width].fill(0.0);
            st.steps[env] = 0;
            st.episodes[env] += 1;
            st.diverged[env] = false;
        }
        Ok(())
    }

    /// Resets every env.
    pub fn reset_all(&mut self, sampler: &dyn ResetSampler) -> Result<()> {
        let mask = vec![true; self.config.n_envs];
        self.reset(&mask, sampler)
    }
}

/// Advances one env by `substeps` integration steps. Returns `false` if the
/// resulting state is non-finite.
#[allow(clippy::too_many_arguments)]
#[inline]
fn step_env(
    params: &EnvParams,
    pose: &mut Pose,
    nu: &mut Vector6<f64>,
    acts: &mut [ActuatorState],
    current_ned: &Vector3<f64>,
    commands: &[f64],
    dt: f64,
    substeps: usize,
) -> bool {
    let vehicle = &params.vehicle;
    let density = vehicle.hydrodynamics.fluid_density;
    for _ in 0..substeps {
        let mut offset = 0;
        for (spec, st) in vehicle.actuators.iter().zip(acts.iter_mut()) {
            let w = spec.channels();
            apply_command(spec, st, &commands[offset..offset + w], dt)
                .expect("dt validated at construction");
            offset += w;
        }
        let nu_c = current_in_body(pose, current_ned);
        let mut tau = Vector6::zeros();
        for (spec, st) in vehicle.actuators.iter().zip(acts.iter()) {
            tau += actuator_wrench(spec, st, nu, &nu_c, density).resultant();
        }
        let rhs = tau - coriolis_force(&params.rb_mass, nu)
            + hydro_wrench(pose, nu, &nu_c, &params.rigid_body, &vehicle.hydrodynamics);
        let nu_dot = acceleration(&params.mass, &rhs);
        *nu += nu_dot * dt;
        *pose = integrate_pose(pose, &BodyVelocity::from_vector(nu), dt);
    }
    pose.is_finite() && nu.iter().all(|x| x.is_finite())
}

/// Plain single-environment simulator used as an oracle for the batched
/// path. It shares the physics functions but none of the batching code.
#[derive(Debug, Clone)]
pub struct ReferenceSim {
    pub params: EnvParams,
    pub pose: Pose,
    pub velocity: Vector6<f64>,
    pub actuators: Vec<ActuatorState>,
    pub current_ned: Vector3<f64>,
    pub dt: f64,
    pub substeps: usize,
}

impl ReferenceSim {
    pub fn new(
        params: EnvParams,
        pose: Pose,
        velocity: Vector6<f64>,
        current_ned: Vector3<f64>,
        config: &SimConfig,
    ) -> Self {
        let actuators = vec![ActuatorState::default(); params.vehicle.actuators.len()];
        Self {
            params,
            pose,
            velocity,
            actuators,
            current_ned,
            dt: config.physics_dt(),
            substeps: config.substeps,
        }
    }

    pub fn step(&mut self, commands: &[f64]) -> Result<()> {
        let clamped: Vec<f64> = commands.iter().map(|c| c.clamp(-1.0, 1.0)).collect();
        let vehicle = &self.params.vehicle;
        for _ in 0..self.substeps {
            let mut offset = 0;
            for (i, spec) in vehicle.actuators.iter().enumerate() {
                let w = spec.channels();
                apply_command(
                    spec,
                    &mut self.actuators[i],
                    &clamped[offset..offset + w],
                    self.dt,
                )?;
                offset += w;
            }
            let nu_c = current_in_body(&self.pose, &self.current_ned);
            let wrenches: Vec<_> = vehicle
                .actuators
                .iter()
                .zip(&self.actuators)
                .map(|(spec, st)| {
                    actuator_wrench(
                        spec,
                        st,
                        &self.velocity,
                        &nu_c,
                        vehicle.hydrodynamics.fluid_density,
                    )
                })
                .collect();
            let tau = aggregate_wrenches(&wrenches);
            let hydro = hydro_wrench(
                &self.pose,
                &self.velocity,
                &nu_c,
                &self.params.rigid_body,
                &vehicle.hydrodynamics,
            );
            let rhs = tau - coriolis_force(&self.params.rb_mass, &self.velocity) + hydro;
            let nu_dot = acceleration(&self.params.mass, &rhs);
            self.velocity += nu_dot * self.dt;
            self.pose = integrate_pose(
                &self.pose,
                &BodyVelocity::from_vector(&self.velocity),
                self.dt,
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dr::{sample_overlay, Preset, Sample};
    use crate::vehicle::load_vehicle;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn neutral_vehicle() -> VehicleConfig {
        let mut v = load_vehicle("bluerov").unwrap();
        let h = &v.hydrodynamics;
        v.rigid_body.volume = v.rigid_body.mass / h.fluid_density;
        v.rigid_body.cob = v.rigid_body.cog;
        v
    }

    fn random_sampler(env: usize, rng: &mut ChaCha8Rng) -> Result<ResetDraw> {
        let _ = env;
        let pose = Pose::from_euler(
            Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-3.0..3.0),
        );
        let velocity = Vector6::from_fn(|_, _| rng.random_range(-0.2..0.2));
        let overlay = sample_overlay(&Preset::Train.spec(), rng);
        let current_ned = crate::dr::current_from_overlay(&overlay, rng);
        Ok(ResetDraw {
            pose,
            velocity,
            overlay,
            current_ned,
        })
    }

    fn commands(n: usize, width: usize, step: usize) -> Vec<f64> {
        (0..n * width)
            .map(|k| (0.37 * k as f64 + 0.11 * step as f64).sin() * 1.2)
            .collect()
    }

    #[test]
    fn current_projection_examples() {
        let id = Pose::identity();
        assert_eq!(current_in_body(&id, &Vector3::zeros()), Vector6::zeros());
        assert_eq!(
            current_in_body(&id, &Vector3::x()),
            Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );
        let yawed = Pose::from_euler(Vector3::zeros(), 0.0, 0.0, FRAC_PI_2);
        let c = current_in_body(&yawed, &Vector3::x());
        assert!((c - Vector6::new(0.0, -1.0, 0.0, 0.0, 0.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn neutral_equilibrium() {
        let mut sim = BatchSim::new(SimConfig::with_envs(3), neutral_vehicle(), 0).unwrap();
        let width = sim.command_width();
        for _ in 0..100 {
            sim.step(&vec![0.0; 3 * width]).unwrap();
        }
        let st = sim.state();
        for i in 0..3 {
            assert!(st.poses[i].position.norm() < 1e-12);
            assert!(st.poses[i].attitude.angle() < 1e-12);
            assert!(st.velocities[i].amax() < 1e-12);
            assert_eq!(st.steps[i], 100);
        }
    }

    #[test]
    fn identical_envs_stay_identical() {
        let n = 16;
        let mut sim = BatchSim::new(
            SimConfig::with_envs(n),
            load_vehicle("bluerov_heavy").unwrap(),
            3,
        )
        .unwrap();
        let init = |_: usize, _: &mut ChaCha8Rng| {
            Ok(ResetDraw {
                pose: Pose::from_euler(Vector3::new(0.0, 0.0, 5.0), 0.1, -0.2, 0.5),
                velocity: Vector6::new(0.1, 0.0, 0.0, 0.0, 0.05, 0.0),
                overlay: Overlay::new(),
                current_ned: Vector3::new(0.2, 0.1, 0.0),
            })
        };
        sim.reset_all(&init).unwrap();
        let width = sim.command_width();
        for step in 0..200 {
            let row: Vec<f64> = commands(1, width, step);
            let cmds: Vec<f64> = (0..n).flat_map(|_| row.iter().copied()).collect();
            sim.step(&cmds).unwrap();
        }
        let st = sim.state();
        for i in 1..n {
            assert_eq!(st.poses[i], st.poses[0]);
            assert_eq!(st.velocities[i], st.velocities[0]);
        }
    }

    #[test]
    fn batched_matches_reference() {
        for name in ["bluerov", "lauv", "hauv"] {
            let n = 8;
            let config = SimConfig {
                substeps: 2,
                ..SimConfig::with_envs(n)
            };
            let vehicle = load_vehicle(name).unwrap();
            let mut sim = BatchSim::new(config.clone(), vehicle.clone(), 42).unwrap();
            sim.reset_all(&random_sampler).unwrap();
            let mut refs: Vec<ReferenceSim> = (0..n)
                .map(|i| {
                    let st = sim.state();
                    ReferenceSim::new(
                        (*st.params[i]).clone(),
                        st.poses[i],
                        st.velocities[i],
                        st.currents[i],
                        &config,
                    )
                })
                .collect();
            let width = sim.command_width();
            for step in 0..300 {
                let cmds = commands(n, width, step);
                sim.step(&cmds).unwrap();
                for (i, r) in refs.iter_mut().enumerate() {
                    r.step(&cmds[i * width..(i + 1) * width]).unwrap();
                }
            }
            for (i, r) in refs.iter().enumerate() {
                assert_eq!(sim.state().poses[i], r.pose, "{name} env {i}");
                assert_eq!(sim.state().velocities[i], r.velocity, "{name} env {i}");
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let run = |workers| {
            let config = SimConfig {
                workers: Some(workers),
                ..SimConfig::with_envs(300)
            };
            let mut sim = BatchSim::new(config, load_vehicle("bluerov_heavy").unwrap(), 9).unwrap();
            sim.reset_all(&random_sampler).unwrap();
            let width = sim.command_width();
            for step in 0..50 {
                sim.step(&commands(300, width, step)).unwrap();
            }
            (sim.state().poses.clone(), sim.state().velocities.clone())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn reset_mask_semantics() {
        let mut sim =
            BatchSim::new(SimConfig::with_envs(6), load_vehicle("bluerov").unwrap(), 5).unwrap();
        sim.reset_all(&random_sampler).unwrap();
        let before = sim.state().clone();
        sim.reset(&[false; 6], &random_sampler).unwrap();
        assert_eq!(sim.state().poses, before.poses);
        assert_eq!(sim.state().episodes, before.episodes);

        let mask = [true, false, true, false, false, false];
        sim.reset(&mask, &random_sampler).unwrap();
        let after = sim.state().clone();
        for i in 0..6 {
            if mask[i] {
                assert_ne!(after.poses[i], before.poses[i]);
                assert_eq!(after.episodes[i], before.episodes[i] + 1);
            } else {
                assert_eq!(after.poses[i], before.poses[i]);
                assert_eq!(after.episodes[i], before.episodes[i]);
            }
        }
        assert!(sim.reset(&[true; 5], &random_sampler).is_err());
    }

    #[test]
    fn reset_is_reproducible() {
        let build = || {
            let mut sim =
                BatchSim::new(SimConfig::with_envs(10), load_vehicle("iauv").unwrap(), 77).unwrap();
            sim.reset_all(&random_sampler).unwrap();
            sim.reset(
                &[
                    true, false, true, false, true, false, true, false, true, false,
                ],
                &random_sampler,
            )
            .unwrap();
            sim
        };
        let (a, b) = (build(), build());
        assert_eq!(a.state().poses, b.state().poses);
        assert_eq!(a.state().currents, b.state().currents);
        for i in 0..10 {
            assert_eq!(a.state().params[i].overlay, b.state().params[i].overlay);
        }
    }

    #[test]
    fn reset_rows_satisfy_invariants() {
        let mut sim = BatchSim::new(
            SimConfig::with_envs(200),
            load_vehicle("bluerov_heavy").unwrap(),
            1,
        )
        .unwrap();
        sim.reset_all(&random_sampler).unwrap();
        let st = sim.state();
        for i in 0..200 {
            assert!(st.poses[i].is_finite());
            assert!((st.poses[i].attitude.quaternion().norm() - 1.0).abs() < 1e-12);
            assert!(st.currents[i].norm() <= 0.5 + 1e-12);
            st.params[i].vehicle.validate().unwrap();
            st.params[i].rigid_body.validate().unwrap();
            assert!(st.params[i].payload.mass_kg <= 0.3 * 13.5 + 1e-12);
        }
    }

    #[test]
    fn no_cross_env_coupling() {
        let run = |perturb: bool| {
            let mut sim =
                BatchSim::new(SimConfig::with_envs(4), load_vehicle("bluerov").unwrap(), 2)
                    .unwrap();
            sim.reset_all(&random_sampler).unwrap();
            let width = sim.command_width();
            for step in 0..100 {
                let mut cmds = commands(4, width, step);
                if perturb {
                    cmds[2 * width..3 * width].fill(1.0);
                }
                sim.step(&cmds).unwrap();
            }
            sim.state().clone()
        };
        let (a, b) = (run(false), run(true));
        for i in [0, 1, 3] {
            assert_eq!(a.poses[i], b.poses[i]);
        }
        assert_ne!(a.poses[2], b.poses[2]);
    }

    #[test]
    fn divergence_is_flagged_and_frozen() {
        let mut sim =
            BatchSim::new(SimConfig::with_envs(2), load_vehicle("bluerov").unwrap(), 0).unwrap();
        let blowup = |env: usize, _: &mut ChaCha8Rng| {
            let mut d = ResetDraw::at_rest(Pose::identity());
            if env == 1 {
                d.overlay.insert(DrKey::ThrustCoeff, Sample::ratio(1e300));
            }
            Ok(d)
        };
        sim.reset_all(&blowup).unwrap();
        let width = sim.command_width();
        for _ in 0..3 {
            sim.step(&vec![1.0; 2 * width]).unwrap();
        }
        let st = sim.state();
        assert!(!st.diverged[0]);
        assert!(st.diverged[1]);
        assert!(st.poses[1].is_finite());
        assert!(st.velocities[1].iter().all(|x| x.is_finite()));
        assert_eq!(st.steps[0], 3);
    }

    #[test]
    fn step_validates_commands() {
        let mut sim =
            BatchSim::new(SimConfig::with_envs(2), load_vehicle("bluerov").unwrap(), 0).unwrap();
        assert!(matches!(
            sim.step(&[0.0; 5]),
            Err(Error::Shape {
                expected: 12,
                got: 5
            })
        ));
        let mut cmds = vec![0.0; 12];
        cmds[3] = f64::NAN;
        assert!(sim.step(&cmds).is_err());
        let cfg = SimConfig {
            dt: 0.0,
            ..SimConfig::default()
        };
        assert!(BatchSim::new(cfg, load_vehicle("bluerov").unwrap(), 0).is_err());
    }

    #[test]
    fn commands_are_clamped() {
        let mut a =
            BatchSim::new(SimConfig::with_envs(1), load_vehicle("bluerov").unwrap(), 0).unwrap();
        let mut b =
            BatchSim::new(SimConfig::with_envs(1), load_vehicle("bluerov").unwrap(), 0).unwrap();
        for _ in 0..20 {
            a.step(&[5.0, -3.0, 1.0, 0.0, 2.0, -9.0]).unwrap();
            b.step(&[1.0, -1.0, 1.0, 0.0, 1.0, -1.0]).unwrap();
        }
        assert_eq!(a.state().poses, b.state().poses);
        assert_eq!(a.state().commands, vec![1.0, -1.0, 1.0, 0.0, 1.0, -1.0]);
    }

    #[test]
    fn thrust_moves_vehicle_forward() {
        let mut sim =
            BatchSim::new(SimConfig::with_envs(1), load_vehicle("bluerov").unwrap(), 0).unwrap();
        for _ in 0..200 {
            sim.step(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        }
        let st = sim.state();
        assert!(st.poses[0].position.x > 0.5);
        assert!(st.poses[0].position.y.abs() < 0.05);
        assert!(
            st.poses[0].euler().yaw.abs() < 0.05,
            "{:?}",
            st.poses[0].euler()
        );
    }
}
