//! Maximum supported weight: how much water a grasp holds through a
//! standard lift, with and without the adapter.

use crate::adapter::{generator_grasp, run_closed_loop, Controller, EpisodeResult, LoopConfig, ScheduledDisturbance};
use crate::error::Result;
use crate::generator::GeneratorModel;
use crate::par::{self, ExecMode};
use crate::sim::{DisturbanceEvent, DisturbanceKind, ObjectSpec, SimState, TICK_HZ};

/// Length of a standard episode after the lift.
pub const BENCH_SECONDS: f64 = 10.0;
/// Water is poured in at a constant rate over this long, starting at the lift.
pub const FILL_SECONDS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSetup {
    pub seed: u64,
    pub noise: bool,
    /// Grasp angle shared by both arms of a comparison.
    pub initial_theta_deg: f64,
}

/// One standard episode with `fill_g` grams poured in.
pub fn bench_episode(object: &ObjectSpec, ctl: &Controller<'_>, setup: &BenchSetup, fill_g: u32) -> Result<EpisodeResult> {
    let sim = SimState::reset(object.clone(), setup.seed)?;
    let schedule: Vec<ScheduledDisturbance> = if fill_g > 0 {
        vec![ScheduledDisturbance {
            at_tick: 0,
            event: DisturbanceEvent::new(DisturbanceKind::Water, f64::from(fill_g) / FILL_SECONDS, FILL_SECONDS),
        }]
    } else {
        Vec::new()
    };
    let cfg = LoopConfig {
        max_ticks: (BENCH_SECONDS * TICK_HZ) as u64,
        noise: setup.noise,
        initial_theta_deg: Some(setup.initial_theta_deg),
        ..Default::default()
    };
    run_closed_loop(sim, ctl, &schedule, &cfg)
}

pub fn survives(object: &ObjectSpec, ctl: &Controller<'_>, setup: &BenchSetup, fill_g: u32) -> Result<bool> {
    Ok(!bench_episode(object, ctl, setup, fill_g)?.dropped)
}

/// Largest whole-gram fill in `[0, max_fill_g]` that survives a standard
/// episode, by bisection. `None` when even the empty object drops.
pub fn bench_max_weight(object: &ObjectSpec, ctl: &Controller<'_>, setup: &BenchSetup) -> Result<Option<u32>> {
    let top = object.max_fill_g.floor() as u32;
    if !survives(object, ctl, setup, 0)? {
        return Ok(None);
    }
    if survives(object, ctl, setup, top)? {
        return Ok(Some(top));
    }
    let (mut lo, mut hi) = (0, top);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if survives(object, ctl, setup, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Exhaustive counterpart of [`bench_max_weight`]: the last fill of the
/// first surviving run.
pub fn linear_scan_max_weight(object: &ObjectSpec, ctl: &Controller<'_>, setup: &BenchSetup) -> Result<Option<u32>> {
    let top = object.max_fill_g.floor() as u32;
    let mut best = None;
    for fill in 0..=top {
        if !survives(object, ctl, setup, fill)? {
            break;
        }
        best = Some(fill);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub object: String,
    pub initial_theta_deg: f64,
    pub without: Option<u32>,
    pub with: Option<u32>,
}

impl BenchRow {
    /// `(with - without) / without`, when both are defined and `without > 0`.
    pub fn relative_improvement(&self) -> Option<f64> {
        match (self.without, self.with) {
            (Some(a), Some(b)) if a > 0 => Some((f64::from(b) - f64::from(a)) / f64::from(a)),
            _ => None,
        }
    }
}

/// Shared starting angle of a comparison: the generator's grasp when one is
/// given, else the angle with a 1.5x capacity margin on the empty object.
pub fn initial_grasp_angle(object: &ObjectSpec, generator: Option<&GeneratorModel>, seed: u64, noise: bool) -> Result<f64> {
    match generator {
        Some(g) => generator_grasp(&mut SimState::reset(object.clone(), seed)?, g, noise),
        None => crate::data::margin_angle(object, crate::data::GP_MARGIN, 0.0),
    }
}

/// Compare `baseline` and `adapted` controllers on each object, starting both
/// from the generator's grasp when one is given (else from `baseline`'s).
pub fn compare(
    objects: &[ObjectSpec],
    baseline: &Controller<'_>,
    adapted: &Controller<'_>,
    seed: u64,
    noise: bool,
    mode: ExecMode,
) -> Result<Vec<BenchRow>> {
    let generator = adapted.generator.or(baseline.generator);
    par::map(mode, objects, |o| {
        let initial_theta_deg = initial_grasp_angle(o, generator, seed, noise)?;
        let setup = BenchSetup {
            seed,
            noise,
            initial_theta_deg,
        };
        Ok(BenchRow {
            object: o.name.clone(),
            initial_theta_deg,
            without: bench_max_weight(o, baseline, &setup)?,
            with: bench_max_weight(o, adapted, &setup)?,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::ZeroPolicy;
    use crate::data::{margin_angle, GP_MARGIN};
    use crate::sim::{Catalog, GRAVITY};

    fn none() -> Controller<'static> {
        Controller {
            generator: None,
            estimator: None,
            policy: &ZeroPolicy,
        }
    }

    #[test]
    fn no_adapter_matches_the_capacity_bound() {
        let cat = Catalog::builtin();
        for name in ["milk_bottle", "pill_box", "ink"] {
            let o = cat.require(name).unwrap();
            let theta = margin_angle(o, GP_MARGIN, 0.0).unwrap();
            let setup = BenchSetup {
                seed: 3,
                noise: true,
                initial_theta_deg: theta,
            };
            let got = bench_max_weight(o, &none(), &setup).unwrap().unwrap();
            let capacity = o.capacity_at(theta);
            let bound = capacity * 1000.0 / GRAVITY - o.mass_g;
            assert!((f64::from(got) - bound).abs() <= 2.0, "{name}: {got} vs {bound:.2}");
        }
    }

    #[test]
    fn bisection_agrees_with_linear_scan() {
        let o = Catalog::builtin().require("pill_box").unwrap().clone();
        let setup = BenchSetup {
            seed: 1,
            noise: true,
            initial_theta_deg: margin_angle(&o, 1.4, 0.0).unwrap(),
        };
        let a = bench_max_weight(&o, &none(), &setup).unwrap().unwrap();
        let b = linear_scan_max_weight(&o, &none(), &setup).unwrap().unwrap();
        assert!(a.abs_diff(b) <= 1, "{a} vs {b}");
    }
}
