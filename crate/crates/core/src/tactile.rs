//! Taxel rendering: two 4×4 fingertip grids, 32 readings per tick.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::SimState;

pub const GRID: usize = 4;
pub const TAXELS_PER_FINGER: usize = GRID * GRID;
pub const TAXELS: usize = 2 * TAXELS_PER_FINGER;
/// Reading units per newton of normal force, per finger.
pub const C_GAIN: f64 = 10.0;
/// Footprint width in taxel pitches.
pub const FOOTPRINT_SIGMA: f64 = 1.0;
/// Half-width of the uniform multiplicative noise.
pub const NOISE_AMPLITUDE: f64 = 0.02;

/// One tick of tactile readings. Finger A is `values[0..16]`, finger B
/// `values[16..32]`, each row-major with columns running along the finger.
#[derive(Clone, Debug, PartialEq)]
pub struct TaxelFrame {
    pub values: [f64; TAXELS],
    pub t_tick: u64,
}

impl TaxelFrame {
    pub fn zeros(t_tick: u64) -> Self {
        Self {
            values: [0.0; TAXELS],
            t_tick,
        }
    }

    pub fn finger(&self, idx: usize) -> &[f64] {
        &self.values[idx * TAXELS_PER_FINGER..(idx + 1) * TAXELS_PER_FINGER]
    }

    pub fn finger_sum(&self, idx: usize) -> f64 {
        self.finger(idx).iter().sum()
    }

    /// Mean of the two per-finger sums.
    pub fn mean_finger_sum(&self) -> f64 {
        0.5 * (self.finger_sum(0) + self.finger_sum(1))
    }

    /// Intensity-weighted mean column of one finger, `None` without contact.
    pub fn center_of_pressure(&self, finger: usize) -> Option<f64> {
        let vals = self.finger(finger);
        let total: f64 = vals.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let moment: f64 = vals
            .iter()
            .enumerate()
            .map(|(i, v)| (i % GRID) as f64 * v)
            .sum();
        Some(moment / total)
    }
}

/// Noise-free footprint weights for one finger, normalized to sum to 1.
pub fn footprint(contact_center: f64) -> [f64; TAXELS_PER_FINGER] {
    let cx = contact_center * (GRID - 1) as f64;
    let cy = (GRID - 1) as f64 / 2.0;
    let two_var = 2.0 * FOOTPRINT_SIGMA * FOOTPRINT_SIGMA;
    let mut w = [0.0; TAXELS_PER_FINGER];
    for (i, slot) in w.iter_mut().enumerate() {
        let (r, c) = ((i / GRID) as f64, (i % GRID) as f64);
        *slot = (-((c - cx).powi(2) + (r - cy).powi(2)) / two_var).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Render the 32 taxel readings for the state's current contact.
///
/// The noise draw is a pure function of `(rng_seed, t_tick)`, so rendering
/// the same state twice gives the same frame.
pub fn render_taxels(state: &SimState, noise: bool) -> TaxelFrame {
    let contact = state.contact_state();
    let mut frame = TaxelFrame::zeros(state.t_tick);
    if !contact.in_contact {
        return frame;
    }
    let w = footprint(contact.contact_center);
    let total = C_GAIN * contact.normal_force_n;
    for finger in 0..2 {
        for (i, wi) in w.iter().enumerate() {
            frame.values[finger * TAXELS_PER_FINGER + i] = total * wi;
        }
    }
    if noise {
        let mut rng = noise_stream(state.rng_seed, state.t_tick);
        for v in frame.values.iter_mut() {
            let eps: f64 = rng.gen_range(-NOISE_AMPLITUDE..NOISE_AMPLITUDE);
            *v *= 1.0 + eps;
        }
    }
    frame
}

fn noise_stream(seed: u64, tick: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 32 draws of 2 words each per tick, with headroom
    rng.set_word_pos(u128::from(tick) * 128);
    rng
}

/// Elementwise `curr - prev` for consecutive ticks.
pub fn delta_frame(curr: &TaxelFrame, prev: &TaxelFrame) -> Result<[f64; TAXELS]> {
    if curr.t_tick != prev.t_tick + 1 {
        return Err(Error::Sequencing {
            expected: prev.t_tick + 1,
            got: curr.t_tick,
        });
    }
    let mut out = [0.0; TAXELS];
    for (o, (c, p)) in out.iter_mut().zip(curr.values.iter().zip(prev.values.iter())) {
        *o = c - p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Catalog, SimState};

    fn grasped(slip_mm: f64) -> SimState {
        let obj = Catalog::builtin().get("milk_bottle").unwrap().clone();
        let mut s = SimState::reset(obj.clone(), 3).unwrap();
        s.set_target_angle(obj.contact_angle_deg() + 5.0);
        for _ in 0..400 {
            s.step();
        }
        s.slip_mm = slip_mm;
        s
    }

    #[test]
    fn no_contact_is_all_zero() {
        let obj = Catalog::builtin().get("ink").unwrap().clone();
        let s = SimState::reset(obj, 0).unwrap();
        let f = render_taxels(&s, true);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_contact_is_column_symmetric() {
        let s = grasped(0.0);
        let f = render_taxels(&s, false);
        for finger in 0..2 {
            let v = f.finger(finger);
            for r in 0..GRID {
                assert!((v[r * GRID + 1] - v[r * GRID + 2]).abs() < 1e-12);
                assert!((v[r * GRID] - v[r * GRID + 3]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn per_finger_sum_matches_gain() {
        let mut s = grasped(0.0);
        s.gripper.normal_force_n = 1.0;
        let f = render_taxels(&s, false);
        assert!((f.finger_sum(0) - 10.0).abs() < 1e-9);
        assert!((f.finger_sum(1) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn noise_is_bounded_and_reproducible() {
        let s = grasped(1.0);
        let clean = render_taxels(&s, false);
        let a = render_taxels(&s, true);
        let b = render_taxels(&s, true);
        assert_eq!(a, b);
        for (n, c) in a.values.iter().zip(clean.values.iter()) {
            assert!(*n >= 0.0);
            assert!((n / c - 1.0).abs() <= NOISE_AMPLITUDE);
        }
        let mut later = s.clone();
        later.t_tick += 1;
        assert_ne!(render_taxels(&later, true).values, a.values);
    }

    #[test]
    fn pressure_center_moves_toward_tip_with_slip() {
        let len = grasped(0.0).gripper.finger_len_mm;
        let mut last = f64::INFINITY;
        for k in 0..=20 {
            let s = grasped(len * k as f64 / 20.0);
            let cop = render_taxels(&s, false).center_of_pressure(0).unwrap();
            assert!(cop < last || k == 0);
            last = cop;
        }
    }

    #[test]
    fn delta_requires_consecutive_ticks() {
        let a = TaxelFrame::zeros(5);
        let mut b = TaxelFrame::zeros(6);
        b.values = [1.0; TAXELS];
        assert_eq!(delta_frame(&b, &a).unwrap(), [1.0; TAXELS]);
        assert_eq!(delta_frame(&a, &TaxelFrame::zeros(4)).unwrap(), [0.0; TAXELS]);
        let c = TaxelFrame::zeros(7);
        assert!(matches!(
            delta_frame(&c, &a),
            Err(Error::Sequencing { expected: 6, got: 7 })
        ));
    }
}
