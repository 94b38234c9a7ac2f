use serde::{Deserialize, Serialize};

use crate::world::Control;

/// Per-axis throttle levels.
pub const LEVELS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
pub const NUM_CLASSES: usize = LEVELS.len() * LEVELS.len();

/// One of the 25 grid controls, `index = 5 * main_level + side_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlClass(u8);

impl ControlClass {
    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then_some(Self(index as u8))
    }

    pub fn index(&self) -> usize {
        self.0 as usize
    }

    pub fn levels(&self) -> (usize, usize) {
        (self.index() / 5, self.index() % 5)
    }
}

/// Nearest level index for one axis; exact half-steps round toward zero.
fn snap_axis(v: f64) -> usize {
    let q = (if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) }) * 2.0;
    let frac = q - q.trunc();
    let r = if frac.abs() == 0.5 { q.trunc() } else { q.round() };
    (r as i64 + 2) as usize
}

pub fn encode_control(u: &Control) -> ControlClass {
    ControlClass((5 * snap_axis(u.main) + snap_axis(u.side)) as u8)
}

pub fn decode_control(c: ControlClass) -> Control {
    let (i, j) = c.levels();
    Control::new(LEVELS[i], LEVELS[j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_is_index_twelve() {
        let c = encode_control(&Control::ZERO);
        assert_eq!(c.index(), 12);
        assert_eq!(decode_control(c), Control::ZERO);
    }

    #[test]
    fn snaps_to_nearest_level() {
        let c = encode_control(&Control::new(0.6, -0.4));
        assert_eq!(decode_control(c), Control::new(0.5, -0.5));
        assert_eq!(c.index(), 5 * 3 + 1);
    }

    #[test]
    fn half_steps_tie_toward_zero() {
        assert_eq!(decode_control(encode_control(&Control::new(0.25, 0.25))), Control::ZERO);
        assert_eq!(decode_control(encode_control(&Control::new(-0.75, 0.75))), Control::new(-0.5, 0.5));
    }

    #[test]
    fn grid_points_round_trip() {
        for &a in &LEVELS {
            for &b in &LEVELS {
                let u = Control::new(a, b);
                assert_eq!(decode_control(encode_control(&u)), u);
            }
        }
    }

    #[test]
    fn out_of_range_saturates() {
        assert_eq!(decode_control(encode_control(&Control::new(3.0, -9.0))), Control::new(1.0, -1.0));
        assert!(ControlClass::new(25).is_none());
    }
}
