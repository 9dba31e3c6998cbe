//! Scripted demonstrator standing in for the human operator.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::format::{write_dataset, DatasetHeader, DatasetKind, Episode, Frame, Label};
use crate::adapter::{apply_adaptation, move_and_settle, DECISION_EVERY, MAX_DELTA_DEG, SETTLE_TICKS, WINDOW};
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::sim::{
    Catalog, DisturbanceEvent, DisturbanceKind, ObjectSpec, SimState, APERTURE_OPEN_MM, FORCE_CAP_N, MM_PER_DEG,
    THETA_MAX_DEG,
};
use crate::tactile::{render_taxels, TaxelFrame, TAXELS};

/// Capacity margin the initial-grasp demonstrations close to.
pub const GP_MARGIN: f64 = 1.5;
/// Proportional gain of the expert's corrections.
pub const EXPERT_GAIN: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Slow close from contact until the margin reaches [`GP_MARGIN`].
    Gp,
    /// Adequate grasp, lifted and held.
    StabPos,
    /// Insufficient grasp, lifted and recorded until it drops.
    StabNeg,
    /// Marginal grasp under random disturbances with expert corrections.
    Ga,
}

impl Scenario {
    pub fn kind(self) -> DatasetKind {
        match self {
            Scenario::Gp => DatasetKind::Gp,
            Scenario::StabPos | Scenario::StabNeg => DatasetKind::Stab,
            Scenario::Ga => DatasetKind::Ga,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Gp => "gp",
            Scenario::StabPos => "stab_pos",
            Scenario::StabNeg => "stab_neg",
            Scenario::Ga => "ga",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Scenario::Gp, Scenario::StabPos, Scenario::StabNeg, Scenario::Ga]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertConfig {
    pub noise: bool,
    /// Lifted hold of a stable demonstration.
    pub stab_hold_ticks: u64,
    /// Give up on an insufficient grasp that has not dropped by then.
    pub stab_neg_max_ticks: u64,
    /// Length of an adaptation demonstration after the lift.
    pub ga_ticks: u64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            noise: true,
            stab_hold_ticks: 160,
            stab_neg_max_ticks: 4000,
            ga_ticks: 640,
        }
    }
}

/// Angle at which the friction capacity is `margin` times the object's
/// weight with `fill_g` of water.
pub fn margin_angle(object: &ObjectSpec, margin: f64, fill_g: f64) -> Result<f64> {
    let force = margin * object.weight_n(fill_g) / (2.0 * object.mu);
    let aperture = object.width_mm - force / object.stiffness_n_per_mm;
    let theta = THETA_MAX_DEG * (1.0 - aperture / APERTURE_OPEN_MM);
    if force > FORCE_CAP_N || theta > THETA_MAX_DEG {
        return Err(Error::Generation(format!(
            "{} cannot reach a capacity margin of {margin}: needs {force:.2} N per finger",
            object.name
        )));
    }
    Ok(theta)
}

/// The expert's correction: enough extra closing to cover `EXPERT_GAIN`
/// times the mean recent overload, capped at [`MAX_DELTA_DEG`].
pub fn expert_delta_theta(object: &ObjectSpec, overloads: &[f64]) -> f64 {
    if overloads.is_empty() {
        return 0.0;
    }
    let mean = overloads.iter().map(|v| v.max(0.0)).sum::<f64>() / overloads.len() as f64;
    let capacity_per_deg = 2.0 * object.mu * object.stiffness_n_per_mm * MM_PER_DEG;
    (EXPERT_GAIN * mean / capacity_per_deg).min(MAX_DELTA_DEG)
}

/// Renders every tick so the first kept frame still has a true `ΔS`.
struct Recorder {
    noise: bool,
    prev: Option<(TaxelFrame, f64)>,
    frames: Vec<Frame>,
}

impl Recorder {
    fn new(sim: &SimState, noise: bool) -> Self {
        Self {
            noise,
            prev: Some((render_taxels(sim, noise), sim.gripper.theta_deg)),
            frames: Vec::new(),
        }
    }

    /// Observe the current tick; keep it with `label` if given. `dtheta`
    /// overrides the measured angle change.
    fn observe(&mut self, sim: &SimState, keep: Option<Label>, dtheta: Option<f64>) {
        let frame = render_taxels(sim, self.noise);
        let theta = sim.gripper.theta_deg;
        if let Some(label) = keep {
            let (ds, measured) = match &self.prev {
                Some((p, pt)) if p.t_tick + 1 == frame.t_tick => {
                    let mut ds = [0.0; TAXELS];
                    for (d, (c, q)) in ds.iter_mut().zip(frame.values.iter().zip(&p.values)) {
                        *d = c - q;
                    }
                    (ds, theta - pt)
                }
                _ => ([0.0; TAXELS], 0.0),
            };
            self.frames.push(Frame {
                t_tick: frame.t_tick,
                s: frame.values,
                theta_deg: theta,
                pose: sim.end_effector_pose,
                ds,
                dtheta_deg: dtheta.unwrap_or(measured),
                label,
            });
        }
        self.prev = Some((frame, theta));
    }
}

pub fn scripted_expert_episode(object: &ObjectSpec, scenario: Scenario, seed: u64) -> Result<Episode> {
    scripted_expert_episode_with(object, scenario, seed, &ExpertConfig::default())
}

pub fn scripted_expert_episode_with(
    object: &ObjectSpec,
    scenario: Scenario,
    seed: u64,
    cfg: &ExpertConfig,
) -> Result<Episode> {
    let mut sim = SimState::reset(object.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6578_7065_7274);
    let mut rec = Recorder::new(&sim, cfg.noise);
    let w0 = object.weight_n(0.0);
    if object.max_capacity_n() < GP_MARGIN * w0 {
        return Err(Error::Generation(format!(
            "{} is too heavy: capacity {:.2} N < {GP_MARGIN} × weight {w0:.2} N",
            object.name,
            object.max_capacity_n()
        )));
    }
    let in_contact = |s: &SimState| s.gripper.normal_force_n > 0.0;

    match scenario {
        Scenario::Gp => {
            let rate = rng.gen_range(0.02..0.05);
            let approach = (object.contact_angle_deg() - 1.0).max(0.0);
            move_and_settle(&mut sim, approach, 0, &mut |_| Ok(()))?;
            rec = Recorder::new(&sim, cfg.noise);
            while sim.capacity_n() < GP_MARGIN * w0 {
                sim.set_target_angle(sim.gripper.theta_deg + rate);
                sim.step();
                let keep = in_contact(&sim).then_some(Label::Na);
                rec.observe(&sim, keep, None);
            }
            sim.set_target_angle(sim.gripper.theta_deg);
            for _ in 0..SETTLE_TICKS {
                sim.step();
                rec.observe(&sim, Some(Label::Stable), None);
            }
        }
        Scenario::StabPos | Scenario::StabNeg => {
            let margin = if scenario == Scenario::StabPos {
                rng.gen_range(1.3..2.5)
            } else {
                rng.gen_range(0.5..0.9)
            };
            let theta = margin_angle(object, margin, 0.0).or_else(|_| margin_angle(object, 1.3, 0.0))?;
            let vibration = if scenario == Scenario::StabPos && rng.gen_bool(0.5) {
                let spare = 2.0 * object.mu * object.normal_force(crate::sim::aperture_mm(theta)) - w0;
                Some(rng.gen_range(0.0..0.8) * spare.max(0.0))
            } else {
                None
            };
            move_and_settle(&mut sim, theta, SETTLE_TICKS, &mut |s| {
                let keep = in_contact(s).then_some(Label::Na);
                rec.observe(s, keep, None);
                Ok(())
            })?;
            sim.lift();
            if let Some(peak) = vibration.filter(|p| *p > 0.0) {
                sim.inject_disturbance(DisturbanceEvent::new(
                    DisturbanceKind::Vibration,
                    peak,
                    cfg.stab_hold_ticks as f64 / crate::sim::TICK_HZ,
                ))?;
            }
            let limit = if scenario == Scenario::StabPos {
                cfg.stab_hold_ticks
            } else {
                cfg.stab_neg_max_ticks
            };
            for _ in 0..limit {
                sim.step();
                let label = match (scenario, sim.slip_mm > 0.0) {
                    (_, true) => Label::Unstable,
                    (Scenario::StabPos, false) => Label::Stable,
                    _ => Label::Na,
                };
                rec.observe(&sim, Some(label), None);
                if sim.dropped {
                    break;
                }
            }
            if scenario == Scenario::StabNeg && !sim.dropped {
                return Err(Error::Generation(format!(
                    "{} did not drop within {limit} ticks at margin {margin:.2}",
                    object.name
                )));
            }
        }
        Scenario::Ga => {
            let margin = rng.gen_range(1.15..1.6);
            let theta = margin_angle(object, margin, 0.0)?;
            move_and_settle(&mut sim, theta, SETTLE_TICKS, &mut |_| Ok(()))?;
            sim.lift();
            rec = Recorder::new(&sim, cfg.noise);
            let schedule = random_schedule(&mut rng, object, cfg.ga_ticks);
            let mut overloads: VecDeque<f64> = VecDeque::with_capacity(WINDOW);
            let mut target = sim.target_theta_deg;
            for k in 1..=cfg.ga_ticks {
                for (at, ev) in &schedule {
                    if at + 1 == k {
                        sim.inject_disturbance(ev.clone())?;
                    }
                }
                sim.step();
                let over = (sim.last_load_n - sim.capacity_n()).max(0.0);
                if overloads.len() == WINDOW {
                    overloads.pop_front();
                }
                overloads.push_back(over);
                let label = expert_delta_theta(object, overloads.make_contiguous());
                if k % DECISION_EVERY == 0 && label > 0.0 {
                    target = apply_adaptation(target, label);
                    sim.set_target_angle(target);
                }
                let tag = if over > 0.0 || sim.dropped { Label::Unstable } else { Label::Stable };
                rec.observe(&sim, Some(tag), Some(label));
                if sim.dropped {
                    break;
                }
            }
        }
    }
    Ok(Episode {
        header: DatasetHeader::new(scenario.kind(), object.name.clone(), seed),
        frames: rec.frames.into_iter().map(|f| f.rounded()).collect(),
    })
}

/// One to three disturbances starting in the first 60% of a `ticks`-long
/// episode, as `(ticks after lift, event)`, drawn from `seed`.
pub fn disturbance_schedule(object: &ObjectSpec, ticks: u64, seed: u64) -> Vec<(u64, DisturbanceEvent)> {
    random_schedule(&mut ChaCha8Rng::seed_from_u64(seed), object, ticks)
}

fn random_schedule(rng: &mut ChaCha8Rng, object: &ObjectSpec, ticks: u64) -> Vec<(u64, DisturbanceEvent)> {
    let w0 = object.weight_n(0.0);
    let n = rng.gen_range(1..=3);
    (0..n)
        .map(|_| {
            let at = rng.gen_range(0..=ticks * 6 / 10);
            let ev = match rng.gen_range(0..3) {
                0 => DisturbanceEvent::new(
                    DisturbanceKind::Water,
                    rng.gen_range(0.2..0.8) * object.mass_g.min(object.max_fill_g).max(1.0),
                    rng.gen_range(0.5..2.0),
                ),
                1 => DisturbanceEvent::new(
                    DisturbanceKind::Pull,
                    rng.gen_range(0.1..0.6) * w0,
                    rng.gen_range(0.3..1.5),
                ),
                _ => DisturbanceEvent::new(
                    DisturbanceKind::Vibration,
                    rng.gen_range(0.2..1.0) * w0,
                    rng.gen_range(0.5..2.0),
                ),
            };
            (at, ev)
        })
        .collect()
}

/// Episode counts per dataset kind. Stability episodes alternate between
/// adequate and insufficient grasps.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub gp: usize,
    pub stab: usize,
    pub ga: usize,
    pub expert: ExpertConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            gp: 40,
            stab: 24,
            ga: 56,
            expert: ExpertConfig::default(),
        }
    }
}

/// `(object, scenario, episode seed)` for every episode of a corpus, objects
/// assigned round-robin.
pub fn corpus_plan(objects: &[ObjectSpec], seed: u64, cfg: &CorpusConfig) -> Vec<(ObjectSpec, Scenario, u64)> {
    let mut plan = Vec::new();
    let mut idx = 0u64;
    for (count, pick) in [
        (cfg.gp, 0usize),
        (cfg.stab, 1),
        (cfg.ga, 2),
    ] {
        for j in 0..count {
            let scenario = match pick {
                0 => Scenario::Gp,
                1 if j % 2 == 0 => Scenario::StabPos,
                1 => Scenario::StabNeg,
                _ => Scenario::Ga,
            };
            let object = objects[j % objects.len()].clone();
            plan.push((object, scenario, seed.wrapping_mul(10_000).wrapping_add(idx)));
            idx += 1;
        }
    }
    plan
}

pub fn generate_corpus(catalog: &Catalog, seed: u64, cfg: &CorpusConfig, mode: ExecMode) -> Result<Vec<Episode>> {
    if catalog.objects.is_empty() {
        return Err(Error::Data("empty object catalog".into()));
    }
    let plan = corpus_plan(&catalog.objects, seed, cfg);
    par::map(mode, &plan, |(o, sc, s)| scripted_expert_episode_with(o, *sc, *s, &cfg.expert))
        .into_iter()
        .collect()
}

/// Write each episode to `root/<kind>/<object>_<seed>.tsv`.
pub fn write_corpus(root: &Path, episodes: &[Episode]) -> Result<Vec<PathBuf>> {
    episodes
        .iter()
        .map(|ep| {
            let path = root.join(ep.file_name());
            write_dataset(&path, &ep.header, &ep.frames)?;
            Ok(path)
        })
        .collect()
}
