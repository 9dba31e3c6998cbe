use std::fmt::Write as _;

use super::model::AdapterModel;
use super::window::WindowBuffer;
use crate::data::fmt_sig9;
use crate::error::{Error, Result};
use crate::generator::GeneratorModel;
use crate::sim::{DisturbanceEvent, SimState, THETA_MAX_DEG, THETA_MIN_DEG};
use crate::stability::{GraspFeature, StabilityEstimator};
use crate::tactile::{render_taxels, TaxelFrame};

/// Ticks between adapter decisions (20 Hz at 160 Hz).
pub const DECISION_EVERY: u64 = 8;
/// Ticks held at the commanded grasp before lifting.
pub const SETTLE_TICKS: u64 = 16;

/// Anything that maps a tactile window to an angle correction.
pub trait DeltaPolicy: Sync {
    fn delta_theta(&self, window: &WindowBuffer) -> Result<f64>;
}

/// Never corrects: the no-adapter baseline.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPolicy;

impl DeltaPolicy for ZeroPolicy {
    fn delta_theta(&self, _: &WindowBuffer) -> Result<f64> {
        Ok(0.0)
    }
}

impl DeltaPolicy for AdapterModel {
    fn delta_theta(&self, window: &WindowBuffer) -> Result<f64> {
        self.predict(window)
    }
}

/// `θ' = θ + α`, kept inside the actuator range.
pub fn apply_adaptation(theta_deg: f64, dtheta_deg: f64) -> f64 {
    (theta_deg + dtheta_deg).clamp(THETA_MIN_DEG, THETA_MAX_DEG)
}

/// Close at full speed until the fingers first touch the object, calling
/// `on_tick` after every step. Returns the reading at first contact.
pub fn close_to_contact(
    sim: &mut SimState,
    noise: bool,
    on_tick: &mut dyn FnMut(&SimState) -> Result<()>,
) -> Result<TaxelFrame> {
    sim.set_target_angle(THETA_MAX_DEG);
    loop {
        sim.step();
        on_tick(sim)?;
        if sim.gripper.normal_force_n > 0.0 {
            return Ok(render_taxels(sim, noise));
        }
        if sim.gripper.theta_deg >= THETA_MAX_DEG {
            return Err(Error::Contract(format!(
                "gripper closed fully without touching {}",
                sim.object.name
            )));
        }
    }
}

/// Command `theta_deg`, wait until the actuator arrives, then hold for
/// `settle` more ticks.
pub fn move_and_settle(
    sim: &mut SimState,
    theta_deg: f64,
    settle: u64,
    on_tick: &mut dyn FnMut(&SimState) -> Result<()>,
) -> Result<()> {
    sim.set_target_angle(theta_deg);
    while sim.gripper.theta_deg != sim.target_theta_deg {
        sim.step();
        on_tick(sim)?;
    }
    for _ in 0..settle {
        sim.step();
        on_tick(sim)?;
    }
    Ok(())
}

/// A disturbance injected `at_tick` ticks after the lift.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledDisturbance {
    pub at_tick: u64,
    pub event: DisturbanceEvent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopConfig {
    /// Ticks to run after the lift.
    pub max_ticks: u64,
    pub noise: bool,
    pub decision_every: u64,
    pub settle_ticks: u64,
    /// Skip the generator and grasp at this angle.
    pub initial_theta_deg: Option<f64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_ticks: 1600,
            noise: true,
            decision_every: DECISION_EVERY,
            settle_ticks: SETTLE_TICKS,
            initial_theta_deg: None,
        }
    }
}

/// The three pipeline stages. A missing estimator leaves the adapter
/// ungated, as if every grasp were unstable.
#[derive(Clone, Copy)]
pub struct Controller<'a> {
    pub generator: Option<&'a GeneratorModel>,
    pub estimator: Option<&'a StabilityEstimator>,
    pub policy: &'a dyn DeltaPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    /// Ticks since the lift.
    pub tick: u64,
    pub theta_deg: f64,
    pub target_deg: f64,
    /// Per-finger normal force.
    pub force_n: f64,
    pub fill_g: f64,
    pub slip_mm: f64,
    /// NaN without an estimator.
    pub log_likelihood: f64,
    pub stable: bool,
    pub dropped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub dropped: bool,
    /// Ticks after the lift completed without a drop.
    pub ticks_survived: u64,
    pub initial_theta_deg: f64,
    pub trace: Vec<TraceRow>,
}

impl EpisodeResult {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("tick\ttheta_deg\ttarget_deg\tforce_n\tfill_g\tslip_mm\tlog_likelihood\tstable\tdropped\n");
        for r in &self.trace {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.tick,
                fmt_sig9(r.theta_deg),
                fmt_sig9(r.target_deg),
                fmt_sig9(r.force_n),
                fmt_sig9(r.fill_g),
                fmt_sig9(r.slip_mm),
                if r.log_likelihood.is_nan() { "nan".into() } else { fmt_sig9(r.log_likelihood) },
                u8::from(r.stable),
                u8::from(r.dropped),
            );
        }
        s
    }
}

/// Angle the generator proposes after closing `sim` to first contact.
pub fn generator_grasp(sim: &mut SimState, generator: &GeneratorModel, noise: bool) -> Result<f64> {
    let frame = close_to_contact(sim, noise, &mut |_| Ok(()))?;
    generator.predict(&frame.values, sim.gripper.theta_deg)
}

/// Grasp, lift and hold under `schedule`, adapting while the estimator
/// reports an unstable grasp.
pub fn run_closed_loop(
    mut sim: SimState,
    ctl: &Controller<'_>,
    schedule: &[ScheduledDisturbance],
    cfg: &LoopConfig,
) -> Result<EpisodeResult> {
    let theta0 = match (cfg.initial_theta_deg, ctl.generator) {
        (Some(t), _) => t,
        (None, Some(g)) => generator_grasp(&mut sim, g, cfg.noise)?,
        (None, None) => {
            return Err(Error::Contract("closed loop needs a generator or a fixed initial angle".into()))
        }
    };
    move_and_settle(&mut sim, theta0, cfg.settle_ticks, &mut |_| Ok(()))?;
    sim.lift();

    let mut window = WindowBuffer::new();
    window.push_frame(&render_taxels(&sim, cfg.noise), sim.gripper.theta_deg)?;
    let mut target = sim.target_theta_deg;
    let mut trace = Vec::with_capacity(cfg.max_ticks as usize);
    let mut survived = 0;
    for k in 1..=cfg.max_ticks {
        for d in schedule.iter().filter(|d| d.at_tick + 1 == k) {
            sim.inject_disturbance(d.event.clone()).map_err(|e| e.at_tick(sim.t_tick))?;
        }
        sim.step();
        let frame = render_taxels(&sim, cfg.noise);
        window.push_frame(&frame, sim.gripper.theta_deg).map_err(|e| e.at_tick(sim.t_tick))?;
        let (log_likelihood, stable) = match ctl.estimator {
            Some(est) => {
                let x = GraspFeature::new(frame.values, sim.gripper.theta_deg, sim.end_effector_pose)?;
                let ll = est.log_likelihood(&x).map_err(|e| e.at_tick(sim.t_tick))?;
                (ll, est.is_stable(&x).map_err(|e| e.at_tick(sim.t_tick))?)
            }
            None => (f64::NAN, false),
        };
        if !sim.dropped && !stable && k % cfg.decision_every == 0 {
            let delta = ctl.policy.delta_theta(&window).map_err(|e| e.at_tick(sim.t_tick))?;
            target = apply_adaptation(target, delta);
            sim.set_target_angle(target);
        }
        trace.push(TraceRow {
            tick: k,
            theta_deg: sim.gripper.theta_deg,
            target_deg: target,
            force_n: sim.contact_state().normal_force_n,
            fill_g: sim.fill_g,
            slip_mm: sim.slip_mm,
            log_likelihood,
            stable,
            dropped: sim.dropped,
        });
        if sim.dropped {
            break;
        }
        survived = k;
    }
    Ok(EpisodeResult {
        dropped: sim.dropped,
        ticks_survived: survived,
        initial_theta_deg: theta0,
        trace,
    })
}
