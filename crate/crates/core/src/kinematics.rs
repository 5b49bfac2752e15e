//! Classical atomic motion in a circular, wall-coated cell.
//!
//! Atoms fly ballistically between wall collisions. At the wall they are
//! re-emitted diffusely: the outgoing direction follows Knudsen's cosine law
//! about the inward normal and the new speed is drawn from the flux-weighted
//! distribution, which keeps the bulk speed distribution at the 2D
//! Maxwell-Boltzmann law. Each collision may also reset the atomic spin.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::consts::{BOLTZMANN, RB87_MASS};
use crate::{Error, Result};

/// Relative tolerance on |r| = R used for boundary checks and containment.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Initial speeds below this fraction of sigma are re-drawn.
pub const MIN_SPEED_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * libm::cos(theta), r * libm::sin(theta))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    /// Cell radius in mm.
    pub radius: f64,
    /// Vapor temperature in K.
    pub temperature: f64,
    /// Probability that a wall collision resets the atomic spin.
    pub wall_reset_probability: f64,
    /// Atomic mass in kg.
    pub atom_mass: f64,
}

impl CellGeometry {
    pub fn new(radius: f64, temperature: f64, wall_reset_probability: f64) -> Result<Self> {
        let geom = Self {
            radius,
            temperature,
            wall_reset_probability,
            atom_mass: RB87_MASS,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "radius_cell",
                reason: "must be positive",
            });
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "temperature",
                reason: "must be positive",
            });
        }
        if !(0.0..=1.0).contains(&self.wall_reset_probability) {
            return Err(Error::InvalidParameter {
                name: "wall_reset_probability",
                reason: "must lie in [0, 1]",
            });
        }
        if !(self.atom_mass > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mass_atom",
                reason: "must be positive",
            });
        }
        Ok(())
    }

    /// sigma = sqrt(k_B T / m) in mm/ms.
    pub fn thermal_sigma(&self) -> f64 {
        libm::sqrt(BOLTZMANN * self.temperature / self.atom_mass)
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    /// mm
    pub position: Vec2,
    /// mm/ms
    pub velocity: Vec2,
    /// ms
    pub time: f64,
    pub phase_reset_pending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<AtomState>,
    /// Times (ms) at which a wall collision reset the spin.
    pub reset_events: Vec<f64>,
    pub wall_hits: usize,
}

/// Uniform point on the disk: r² uniform on [0, R²], θ uniform on [0, 2π).
pub fn sample_initial_position<R: Rng + ?Sized>(geom: &CellGeometry, rng: &mut R) -> Vec2 {
    let u: f64 = rng.random();
    let theta = 2.0 * PI * rng.random::<f64>();
    Vec2::from_polar(geom.radius * libm::sqrt(u), theta)
}

/// Speed from f(v) = (v/σ²) exp(−v²/2σ²) (Rayleigh).
pub fn mb2d_speed<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    sigma * libm::sqrt(-2.0 * libm::log(u))
}

/// Speed from g(v) = sqrt(2/π)(v²/σ³) exp(−v²/2σ²): the norm of three
/// independent N(0, σ²) components.
pub fn flux_weighted_speed<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    let c: f64 = rng.sample(StandardNormal);
    sigma * libm::sqrt(a * a + b * b + c * c)
}

pub fn sample_speed_mb2d<R: Rng + ?Sized>(geom: &CellGeometry, rng: &mut R) -> f64 {
    mb2d_speed(geom.thermal_sigma(), rng)
}

pub fn sample_speed_flux_weighted<R: Rng + ?Sized>(geom: &CellGeometry, rng: &mut R) -> f64 {
    flux_weighted_speed(geom.thermal_sigma(), rng)
}

/// Reflection angle from the inward normal with density cos(ε)/2 on (−π/2, π/2).
pub fn sample_cosine_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    libm::asin(2.0 * u - 1.0)
}

/// CDF of g(v) with σ = 1, used by tests and diagnostics.
pub fn flux_weighted_cdf(v: f64) -> f64 {
    // ∫0^v sqrt(2/π) t² e^{-t²/2} dt = erf(v/√2) − sqrt(2/π) v e^{-v²/2}
    libm::erf(v / core::f64::consts::SQRT_2) - libm::sqrt(2.0 / PI) * v * libm::exp(-0.5 * v * v)
}

/// CDF of f(v) with σ = 1.
pub fn mb2d_cdf(v: f64) -> f64 {
    1.0 - libm::exp(-0.5 * v * v)
}

/// Draws a complete equilibrium state: uniform position, isotropic direction,
/// 2D Maxwell-Boltzmann speed (re-drawn when degenerate).
pub fn sample_initial_state<R: Rng + ?Sized>(geom: &CellGeometry, rng: &mut R) -> AtomState {
    let position = sample_initial_position(geom, rng);
    let sigma = geom.thermal_sigma();
    let mut speed = mb2d_speed(sigma, rng);
    while speed < MIN_SPEED_FRACTION * sigma {
        speed = mb2d_speed(sigma, rng);
    }
    let phi = 2.0 * PI * rng.random::<f64>();
    AtomState {
        position,
        velocity: Vec2::from_polar(speed, phi),
        time: 0.0,
        phase_reset_pending: false,
    }
}

/// Time for a point inside the disk moving with `velocity` to reach the wall.
/// Returns `f64::INFINITY` for a zero velocity.
pub fn time_to_wall(position: Vec2, velocity: Vec2, radius: f64) -> f64 {
    let a = velocity.norm_sq();
    if a == 0.0 {
        return f64::INFINITY;
    }
    let b = 2.0 * position.dot(velocity);
    // c <= 0 inside; clamp tiny positive round-off on the boundary.
    let c = (position.norm_sq() - radius * radius).min(0.0);
    let disc = libm::sqrt(b * b - 4.0 * a * c);
    if b > 0.0 {
        (-2.0 * c) / (b + disc)
    } else {
        (-b + disc) / (2.0 * a)
    }
}

fn clamp_to_circle(p: Vec2, radius: f64) -> Vec2 {
    let r = p.norm();
    if r == 0.0 {
        p
    } else {
        p * (radius / r)
    }
}

/// Moves the atom ballistically for up to `dt`. If the wall is reached first,
/// returns the state on the wall and the elapsed time to the hit.
pub fn advance_free_flight(state: &AtomState, dt: f64, geom: &CellGeometry) -> (AtomState, Option<f64>) {
    let t_hit = time_to_wall(state.position, state.velocity, geom.radius);
    let mut next = *state;
    if t_hit <= dt {
        next.position = clamp_to_circle(state.position + state.velocity * t_hit, geom.radius);
        next.time = state.time + t_hit;
        (next, Some(t_hit))
    } else {
        next.position = state.position + state.velocity * dt;
        next.time = state.time + dt;
        (next, None)
    }
}

fn diffuse_direction<R: Rng + ?Sized>(position: Vec2, rng: &mut R) -> Vec2 {
    let r = position.norm();
    let normal = Vec2::new(-position.x / r, -position.y / r);
    let tangent = Vec2::new(-normal.y, normal.x);
    let eps = sample_cosine_angle(rng);
    normal * libm::cos(eps) + tangent * libm::sin(eps)
}

/// Diffuse re-emission from the wall with flux-weighted speed; flags a spin
/// reset with the cell's wall-reset probability.
pub fn reflect_at_wall<R: Rng + ?Sized>(state: &AtomState, geom: &CellGeometry, rng: &mut R) -> Result<AtomState> {
    let r = state.position.norm();
    if libm::fabs(r - geom.radius) > 1e-6 * geom.radius {
        return Err(Error::NotOnBoundary {
            radius: r,
            cell_radius: geom.radius,
        });
    }
    let dir = diffuse_direction(state.position, rng);
    let speed = sample_speed_flux_weighted(geom, rng);
    let reset = rng.random::<f64>() < geom.wall_reset_probability;
    Ok(AtomState {
        position: clamp_to_circle(state.position, geom.radius),
        velocity: dir * speed,
        time: state.time,
        phase_reset_pending: state.phase_reset_pending || reset,
    })
}

/// Samples a trajectory at uniform `dt`, resolving every wall collision
/// exactly between samples.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    geom: &CellGeometry,
    duration: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    geom.validate()?;
    if !(duration > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "duration/dt",
            reason: "must be positive",
        });
    }
    let initial = sample_initial_state(geom, rng);
    trajectory_from(initial, geom, duration, dt, rng)
}

/// Same as [`simulate_trajectory`] from a given initial state.
pub fn trajectory_from<R: Rng + ?Sized>(
    initial: AtomState,
    geom: &CellGeometry,
    duration: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    if initial.velocity.norm() < MIN_SPEED_FRACTION * geom.thermal_sigma() {
        return Err(Error::InvalidParameter {
            name: "velocity",
            reason: "initial speed is degenerate",
        });
    }
    let steps = libm::round(duration / dt) as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut reset_events = Vec::new();
    let mut wall_hits = 0;
    let mut state = initial;
    samples.push(state);
    for k in 1..=steps {
        let target = initial.time + k as f64 * dt;
        loop {
            let remaining = target - state.time;
            let (next, hit) = advance_free_flight(&state, remaining.max(0.0), geom);
            state = next;
            match hit {
                Some(_) => {
                    wall_hits += 1;
                    state = reflect_at_wall(&state, geom, rng)?;
                    if state.phase_reset_pending {
                        reset_events.push(state.time);
                        state.phase_reset_pending = false;
                    }
                }
                None => break,
            }
        }
        state.time = target;
        samples.push(state);
    }
    Ok(Trajectory {
        dt,
        samples,
        reset_events,
        wall_hits,
    })
}

/// Event-driven straight-line flight used by the ensemble integrator: the
/// position at any time is `origin + velocity (t − t0)` until `t_hit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flight {
    pub origin: Vec2,
    pub velocity: Vec2,
    pub t0: f64,
    pub t_hit: f64,
}

impl Flight {
    pub fn from_state(state: &AtomState, geom: &CellGeometry) -> Self {
        Self {
            origin: state.position,
            velocity: state.velocity,
            t0: state.time,
            t_hit: state.time + time_to_wall(state.position, state.velocity, geom.radius),
        }
    }

    pub fn stationary(position: Vec2) -> Self {
        Self {
            origin: position,
            velocity: Vec2::ZERO,
            t0: 0.0,
            t_hit: f64::INFINITY,
        }
    }

    #[inline]
    pub fn position_at(&self, t: f64) -> Vec2 {
        self.origin + self.velocity * (t - self.t0)
    }

    /// Advances through every wall hit up to time `t`. Returns the number of
    /// hits and whether any of them reset the spin.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t: f64, geom: &CellGeometry, rng: &mut R) -> (u32, bool) {
        let mut hits = 0;
        let mut reset = false;
        while self.t_hit <= t {
            let wall = clamp_to_circle(self.position_at(self.t_hit), geom.radius);
            let dir = diffuse_direction(wall, rng);
            let speed = sample_speed_flux_weighted(geom, rng);
            reset |= rng.random::<f64>() < geom.wall_reset_probability;
            hits += 1;
            self.origin = wall;
            self.velocity = dir * speed;
            self.t0 = self.t_hit;
            self.t_hit = self.t0 + time_to_wall(wall, self.velocity, geom.radius);
        }
        (hits, reset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{child, Stream};

    fn unit_cell() -> CellGeometry {
        CellGeometry::new(1.0, 331.0, 0.0).unwrap()
    }

    fn state(p: Vec2, v: Vec2) -> AtomState {
        AtomState {
            position: p,
            velocity: v,
            time: 0.0,
            phase_reset_pending: false,
        }
    }

    #[test]
    fn radial_flight_hits_wall_at_half() {
        let (s, hit) = advance_free_flight(&state(Vec2::ZERO, Vec2::new(0.0, 2.0)), 1.0, &unit_cell());
        assert!((hit.unwrap() - 0.5).abs() < 1e-15);
        assert!((s.position.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collinear_chord_hit() {
        let (s, hit) = advance_free_flight(&state(Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0)), 1.0, &unit_cell());
        assert!((hit.unwrap() - 0.5).abs() < 1e-15);
        assert!((s.position.x - 1.0).abs() < 1e-15 && s.position.y.abs() < 1e-15);
    }

    #[test]
    fn interior_step_has_no_hit() {
        let (s, hit) = advance_free_flight(&state(Vec2::ZERO, Vec2::new(1.0, 0.0)), 0.3, &unit_cell());
        assert!(hit.is_none());
        assert!((s.position.x - 0.3).abs() < 1e-15);
    }

    #[test]
    fn first_leg_from_center_takes_r_over_v() {
        let mut rng = child(1, Stream::Test, 0);
        for _ in 0..100 {
            let phi = 2.0 * PI * rng.random::<f64>();
            let v = 0.1 + rng.random::<f64>();
            let t = time_to_wall(Vec2::ZERO, Vec2::from_polar(v, phi), 1.7);
            assert!((t - 1.7 / v).abs() < 1e-12 * (1.7 / v));
        }
    }

    #[test]
    fn reflection_rejects_interior_points() {
        let mut rng = child(1, Stream::Test, 1);
        let err = reflect_at_wall(&state(Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0)), &unit_cell(), &mut rng);
        assert!(matches!(err, Err(Error::NotOnBoundary { .. })));
    }

    #[test]
    fn reflected_velocity_points_inward() {
        let mut rng = child(1, Stream::Test, 2);
        let geom = unit_cell();
        for k in 0..10_000 {
            let theta = 0.001 * k as f64;
            let s = state(Vec2::from_polar(1.0, theta), Vec2::from_polar(1.0, theta));
            let out = reflect_at_wall(&s, &geom, &mut rng).unwrap();
            assert!(out.velocity.dot(out.position) < 0.0);
        }
    }

    #[test]
    fn initial_positions_are_contained() {
        let mut rng = child(1, Stream::Test, 3);
        let geom = unit_cell();
        for _ in 0..10_000 {
            assert!(sample_initial_position(&geom, &mut rng).norm() <= 1.0);
        }
    }

    #[test]
    fn wall_reset_probability_one_flags_every_hit() {
        let geom = CellGeometry::new(1.0, 331.0, 1.0).unwrap();
        let mut rng = child(1, Stream::Test, 4);
        let traj = simulate_trajectory(&geom, 0.5, 1e-3, &mut rng).unwrap();
        assert!(traj.wall_hits > 0);
        assert_eq!(traj.reset_events.len(), traj.wall_hits);
    }

    #[test]
    fn degenerate_initial_speed_is_rejected() {
        let geom = unit_cell();
        let mut rng = child(1, Stream::Test, 5);
        let s = state(Vec2::ZERO, Vec2::ZERO);
        assert!(trajectory_from(s, &geom, 1.0, 0.1, &mut rng).is_err());
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(CellGeometry::new(0.0, 300.0, 0.1).is_err());
        assert!(CellGeometry::new(1.0, -1.0, 0.1).is_err());
        assert!(CellGeometry::new(1.0, 300.0, 1.5).is_err());
    }

    #[test]
    fn flight_matches_stepwise_trajectory_geometry() {
        let geom = CellGeometry::new(1.69, 331.0, 0.0).unwrap();
        let mut rng = child(2, Stream::Test, 6);
        let s = sample_initial_state(&geom, &mut rng);
        let mut f = Flight::from_state(&s, &geom);
        let mut t = 0.0;
        while t < 0.2 {
            t += 1e-4;
            f.advance_to(t, &geom, &mut rng);
            assert!(f.position_at(t).norm() <= geom.radius * (1.0 + BOUNDARY_TOLERANCE));
        }
    }
}
