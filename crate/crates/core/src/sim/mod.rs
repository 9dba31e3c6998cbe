//! Physics-lite parallel gripper holding one object, stepped at 160 Hz.
//!
//! The object is squeezed between two fingers driven by a single angle
//! `theta`. Contact is a linear spring capped at [`FORCE_CAP_N`], the two
//! contacts hold at most `2·mu·F_n` of tangential load, and any overload
//! makes the object creep along the fingers. Once the creep exceeds the
//! usable finger length, or contact is lost under load, the object drops.

mod catalog;

pub use catalog::{parse_catalog, Catalog, DEFAULT_CATALOG, TEST_OBJECTS};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Simulation rate.
pub const TICK_HZ: f64 = 160.0;
pub const THETA_MIN_DEG: f64 = 0.0;
pub const THETA_MAX_DEG: f64 = 90.0;
/// Finger separation at `theta = 0`.
pub const APERTURE_OPEN_MM: f64 = 80.0;
/// 30 deg/s actuation limit expressed per tick.
pub const SLEW_DEG_PER_TICK: f64 = 30.0 / TICK_HZ;
pub const FORCE_CAP_N: f64 = 40.0;
/// Creep per newton of overload per tick.
pub const K_SLIP_MM_PER_N: f64 = 0.5;
pub const GRAVITY: f64 = 9.81;
pub const VIBRATION_HZ: f64 = 8.0;
pub const FINGER_LEN_MM: f64 = 12.0;
/// Fixed top-grasp pose: position (m) then quaternion (x, y, z, w).
pub const TOP_GRASP_POSE: [f64; 7] = [0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 1.0];

/// Aperture change per degree of closing.
pub const MM_PER_DEG: f64 = APERTURE_OPEN_MM / THETA_MAX_DEG;

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub name: String,
    pub mass_g: f64,
    /// Undeformed width at the grasp line.
    pub width_mm: f64,
    pub stiffness_n_per_mm: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
    /// Maximum water that can be added.
    pub max_fill_g: f64,
}

impl ObjectSpec {
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        }
        if self.name.trim().is_empty() {
            return Err(Error::Validation {
                field: "name",
                reason: "must not be empty".into(),
            });
        }
        positive("mass_g", self.mass_g)?;
        positive("width_mm", self.width_mm)?;
        positive("stiffness_n_per_mm", self.stiffness_n_per_mm)?;
        if !(self.mu.is_finite() && self.mu > 0.0 && self.mu <= 2.0) {
            return Err(Error::Validation {
                field: "mu",
                reason: format!("must lie in (0, 2], got {}", self.mu),
            });
        }
        if !(self.max_fill_g.is_finite() && self.max_fill_g >= 0.0) {
            return Err(Error::Validation {
                field: "max_fill_g",
                reason: format!("must be finite and >= 0, got {}", self.max_fill_g),
            });
        }
        Ok(())
    }

    /// Gravity load of the object with `fill_g` of water, in newtons.
    pub fn weight_n(&self, fill_g: f64) -> f64 {
        (self.mass_g + fill_g) * GRAVITY / 1000.0
    }

    /// Normal force at a given aperture, before any state bookkeeping.
    pub fn normal_force(&self, aperture_mm: f64) -> f64 {
        (self.stiffness_n_per_mm * (self.width_mm - aperture_mm).max(0.0)).min(FORCE_CAP_N)
    }

    /// Angle at which the fingers first touch the object.
    pub fn contact_angle_deg(&self) -> f64 {
        (THETA_MAX_DEG * (1.0 - self.width_mm / APERTURE_OPEN_MM)).clamp(THETA_MIN_DEG, THETA_MAX_DEG)
    }

    /// Friction capacity at a given angle.
    pub fn capacity_at(&self, theta_deg: f64) -> f64 {
        2.0 * self.mu * self.normal_force(aperture_mm(theta_deg))
    }

    /// Largest friction capacity the gripper can reach on this object.
    pub fn max_capacity_n(&self) -> f64 {
        self.capacity_at(THETA_MAX_DEG)
    }
}

pub fn aperture_mm(theta_deg: f64) -> f64 {
    APERTURE_OPEN_MM * (1.0 - theta_deg / THETA_MAX_DEG)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GripperState {
    pub theta_deg: f64,
    pub aperture_mm: f64,
    pub normal_force_n: f64,
    pub finger_len_mm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DisturbanceKind {
    /// Added downward force, N.
    Pull,
    /// Peak of an 8 Hz zero-mean tangential force, N.
    Vibration,
    /// Fill rate, g/s.
    Water,
}

impl DisturbanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DisturbanceKind::Pull => "pull",
            DisturbanceKind::Vibration => "vibration",
            DisturbanceKind::Water => "water",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pull" => Some(DisturbanceKind::Pull),
            "vibration" => Some(DisturbanceKind::Vibration),
            "water" => Some(DisturbanceKind::Water),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisturbanceEvent {
    pub kind: DisturbanceKind,
    pub magnitude: f64,
    pub duration_s: f64,
}

impl DisturbanceEvent {
    pub fn new(kind: DisturbanceKind, magnitude: f64, duration_s: f64) -> Self {
        Self {
            kind,
            magnitude,
            duration_s,
        }
    }

    pub fn duration_ticks(&self) -> u64 {
        (self.duration_s * TICK_HZ).ceil() as u64
    }

    fn validate(&self) -> Result<()> {
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(Error::Validation {
                field: "magnitude",
                reason: format!("must be finite and >= 0, got {}", self.magnitude),
            });
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Validation {
                field: "duration_s",
                reason: format!("must be finite and > 0, got {}", self.duration_s),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ActiveDisturbance {
    event: DisturbanceEvent,
    elapsed: u64,
    total: u64,
}

/// Full simulator state. Plain value: clone it to snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t_tick: u64,
    pub gripper: GripperState,
    /// Commanded angle the actuator slews toward.
    pub target_theta_deg: f64,
    pub object: ObjectSpec,
    pub fill_g: f64,
    pub slip_mm: f64,
    pub dropped: bool,
    /// While false the object rests on the table and carries no load.
    pub lifted: bool,
    pub end_effector_pose: [f64; 7],
    pub rng_seed: u64,
    /// Tangential load applied during the last step, N.
    pub last_load_n: f64,
    active: Vec<ActiveDisturbance>,
}

/// Snapshot of the finger/object contact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactState {
    pub normal_force_n: f64,
    /// Contact location along the finger; 0.5 is centered, 0 the fingertip.
    pub contact_center: f64,
    pub in_contact: bool,
}

impl SimState {
    pub fn reset(object: ObjectSpec, seed: u64) -> Result<Self> {
        object.validate()?;
        Ok(Self {
            t_tick: 0,
            gripper: GripperState {
                theta_deg: THETA_MIN_DEG,
                aperture_mm: APERTURE_OPEN_MM,
                normal_force_n: 0.0,
                finger_len_mm: FINGER_LEN_MM,
            },
            target_theta_deg: THETA_MIN_DEG,
            object,
            fill_g: 0.0,
            slip_mm: 0.0,
            dropped: false,
            lifted: false,
            end_effector_pose: TOP_GRASP_POSE,
            rng_seed: seed,
            last_load_n: 0.0,
            active: Vec::new(),
        })
    }

    /// Command a new angle. Out-of-range targets are clamped; NaN is ignored.
    pub fn set_target_angle(&mut self, theta_deg: f64) {
        if theta_deg.is_nan() {
            return;
        }
        self.target_theta_deg = theta_deg.clamp(THETA_MIN_DEG, THETA_MAX_DEG);
    }

    /// Queue a disturbance. It becomes active on the next step.
    pub fn inject_disturbance(&mut self, ev: DisturbanceEvent) -> Result<()> {
        if self.dropped {
            return Err(Error::EpisodeOver { tick: self.t_tick });
        }
        ev.validate()?;
        let total = ev.duration_ticks();
        self.active.push(ActiveDisturbance {
            event: ev,
            elapsed: 0,
            total,
        });
        Ok(())
    }

    /// Lift the object off the table; its weight now loads the contacts.
    pub fn lift(&mut self) {
        self.lifted = true;
    }

    pub fn active_disturbances(&self) -> usize {
        self.active.len()
    }

    pub fn capacity_n(&self) -> f64 {
        2.0 * self.object.mu * self.gripper.normal_force_n
    }

    /// Load the current state would carry if nothing changed this tick
    /// (gravity plus active pulls; vibration excluded).
    pub fn static_load_n(&self) -> f64 {
        if !self.lifted {
            return 0.0;
        }
        let pull: f64 = self
            .active
            .iter()
            .filter(|d| d.event.kind == DisturbanceKind::Pull)
            .map(|d| d.event.magnitude)
            .sum();
        self.object.weight_n(self.fill_g) + pull
    }

    /// Advance one tick.
    pub fn step(&mut self) {
        self.t_tick += 1;
        if self.dropped {
            return;
        }

        let diff = self.target_theta_deg - self.gripper.theta_deg;
        let moved = diff.clamp(-SLEW_DEG_PER_TICK, SLEW_DEG_PER_TICK);
        self.gripper.theta_deg = (self.gripper.theta_deg + moved).clamp(THETA_MIN_DEG, THETA_MAX_DEG);
        self.gripper.aperture_mm = aperture_mm(self.gripper.theta_deg);
        self.gripper.normal_force_n = self.object.normal_force(self.gripper.aperture_mm);

        let mut pull = 0.0;
        let mut vibration = 0.0;
        for d in &mut self.active {
            match d.event.kind {
                DisturbanceKind::Pull => pull += d.event.magnitude,
                DisturbanceKind::Vibration => {
                    let t = d.elapsed as f64 / TICK_HZ;
                    vibration += d.event.magnitude * (2.0 * PI * VIBRATION_HZ * t).sin();
                }
                DisturbanceKind::Water => {
                    self.fill_g = (self.fill_g + d.event.magnitude / TICK_HZ).min(self.object.max_fill_g);
                }
            }
            d.elapsed += 1;
        }
        self.active.retain(|d| d.elapsed < d.total);

        let load = if self.lifted {
            self.object.weight_n(self.fill_g) + pull + vibration
        } else {
            0.0
        };
        let force = self.gripper.normal_force_n;
        let capacity = 2.0 * self.object.mu * force;
        if force > 0.0 && load > capacity {
            self.slip_mm += K_SLIP_MM_PER_N * (load - capacity);
        }
        if (force == 0.0 && load > 0.0) || self.slip_mm > self.gripper.finger_len_mm {
            self.dropped = true;
        }
        self.last_load_n = load;
    }

    /// A dropped object is no longer between the fingers.
    pub fn contact_state(&self) -> ContactState {
        let f = if self.dropped { 0.0 } else { self.gripper.normal_force_n };
        let center = (0.5 - self.slip_mm / self.gripper.finger_len_mm * 0.5).clamp(0.0, 1.0);
        ContactState {
            normal_force_n: f,
            contact_center: center,
            in_contact: f > 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bottle() -> ObjectSpec {
        ObjectSpec {
            name: "test_bottle".into(),
            mass_g: 100.0,
            width_mm: 40.0,
            stiffness_n_per_mm: 0.5,
            mu: 0.6,
            max_fill_g: 50.0,
        }
    }

    /// State with the fingers at an angle giving exactly `force` newtons.
    fn holding(force: f64) -> SimState {
        let obj = bottle();
        let mut s = SimState::reset(obj.clone(), 1).unwrap();
        let aperture = obj.width_mm - force / obj.stiffness_n_per_mm;
        let theta = THETA_MAX_DEG * (1.0 - aperture / APERTURE_OPEN_MM);
        s.gripper.theta_deg = theta;
        s.target_theta_deg = theta;
        s.lift();
        s
    }

    #[test]
    fn reset_is_open_and_deterministic() {
        let a = SimState::reset(bottle(), 7).unwrap();
        let b = SimState::reset(bottle(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gripper.theta_deg, 0.0);
        assert!(!a.dropped);
        assert_eq!(a.end_effector_pose, TOP_GRASP_POSE);
        let q = &a.end_effector_pose[3..];
        assert!((q.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reset_rejects_bad_fields() {
        let mut o = bottle();
        o.mass_g = -1.0;
        match SimState::reset(o, 0) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "mass_g"),
            other => panic!("expected validation error, got {other:?}"),
        }
        let mut o = bottle();
        o.mu = 2.5;
        assert!(matches!(SimState::reset(o, 0), Err(Error::Validation { field: "mu", .. })));
    }

    #[test]
    fn target_clamps_and_slews() {
        let mut s = SimState::reset(bottle(), 0).unwrap();
        s.set_target_angle(95.0);
        assert_eq!(s.target_theta_deg, 90.0);

        s.gripper.theta_deg = 30.0;
        s.set_target_angle(40.0);
        s.step();
        assert!((s.gripper.theta_deg - 30.1875).abs() < 1e-12);

        let mut s = SimState::reset(bottle(), 0).unwrap();
        s.set_target_angle(0.0);
        let before = s.gripper.clone();
        s.step();
        assert_eq!(s.gripper, before);
    }

    #[test]
    fn water_fills_at_rate_and_saturates() {
        let mut s = holding(5.0);
        s.inject_disturbance(DisturbanceEvent::new(DisturbanceKind::Water, 10.0, 1.0))
            .unwrap();
        for _ in 0..160 {
            s.step();
        }
        assert!((s.fill_g - 10.0).abs() < 1e-12);
        assert_eq!(s.active_disturbances(), 0);

        s.fill_g = s.object.max_fill_g;
        s.inject_disturbance(DisturbanceEvent::new(DisturbanceKind::Water, 10.0, 1.0))
            .unwrap();
        s.step();
        assert_eq!(s.fill_g, s.object.max_fill_g);
    }

    #[test]
    fn zero_pull_changes_nothing() {
        let mut a = holding(2.0);
        let mut b = a.clone();
        a.inject_disturbance(DisturbanceEvent::new(DisturbanceKind::Pull, 0.0, 1.0))
            .unwrap();
        a.step();
        b.step();
        assert_eq!(a.last_load_n, b.last_load_n);
        assert_eq!(a.slip_mm, b.slip_mm);
    }

    #[test]
    fn capacity_exceeding_load_does_not_slip() {
        let mut s = holding(2.0);
        s.step();
        assert!((s.gripper.normal_force_n - 2.0).abs() < 1e-9);
        assert!((s.last_load_n - 0.981).abs() < 1e-12);
        assert_eq!(s.slip_mm, 0.0);
    }

    #[test]
    fn overload_slip_law() {
        let mut s = holding(2.0);
        s.inject_disturbance(DisturbanceEvent::new(DisturbanceKind::Pull, 2.0, 1.0))
            .unwrap();
        s.step();
        // W = 0.981 + 2 = 2.981, C = 2 * 0.6 * 2 = 2.4
        assert!((s.slip_mm - 0.2905).abs() < 1e-9, "slip {}", s.slip_mm);
        assert!(!s.dropped);
    }

    #[test]
    fn lost_contact_under_load_drops() {
        let mut s = SimState::reset(bottle(), 0).unwrap();
        s.lift();
        s.step();
        assert!(s.dropped);
        assert!(matches!(
            s.inject_disturbance(DisturbanceEvent::new(DisturbanceKind::Pull, 1.0, 1.0)),
            Err(Error::EpisodeOver { .. })
        ));
    }

    #[test]
    fn contact_center_follows_slip() {
        let mut s = holding(2.0);
        assert_eq!(s.contact_state().contact_center, 0.5);
        s.slip_mm = s.gripper.finger_len_mm / 2.0;
        assert!((s.contact_state().contact_center - 0.25).abs() < 1e-15);
        s.slip_mm = s.gripper.finger_len_mm;
        assert_eq!(s.contact_state().contact_center, 0.0);
    }

    #[test]
    fn force_is_zero_exactly_without_contact() {
        let o = bottle();
        assert_eq!(o.normal_force(o.width_mm), 0.0);
        assert_eq!(o.normal_force(o.width_mm + 1.0), 0.0);
        assert!(o.normal_force(o.width_mm - 1.0) > 0.0);
        assert_eq!(o.normal_force(0.0), 20.0);
        let stiff = ObjectSpec {
            stiffness_n_per_mm: 10.0,
            ..o
        };
        assert_eq!(stiff.normal_force(0.0), FORCE_CAP_N);
    }

    #[test]
    fn vibration_is_zero_mean_over_a_period() {
        let mut s = holding(20.0);
        s.inject_disturbance(DisturbanceEvent::new(DisturbanceKind::Vibration, 1.0, 1.0))
            .unwrap();
        let base = s.object.weight_n(0.0);
        let mut acc = 0.0;
        // 8 Hz at 160 Hz: 20 ticks per period
        for _ in 0..20 {
            s.step();
            acc += s.last_load_n - base;
        }
        assert!(acc.abs() < 1e-9);
    }
}
