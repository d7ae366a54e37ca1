//! Decision logic between the classifiers and the attractor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::planner::{Axis, CommandEvent};

/// Jaw-clench axis switch: fires when at least `threshold` of the last
/// `window` outputs are positive (inclusive), then stays quiet for
/// `refractory` seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JawSwitch {
    pub window: usize,
    pub threshold: f64,
    pub refractory: f64,
    history: VecDeque<bool>,
    last_switch: Option<f64>,
}

impl Default for JawSwitch {
    fn default() -> Self {
        Self::new(50, 0.8, 2.8)
    }
}

impl JawSwitch {
    pub fn new(window: usize, threshold: f64, refractory: f64) -> Self {
        Self {
            window,
            threshold,
            refractory,
            history: VecDeque::with_capacity(window),
            last_switch: None,
        }
    }

    /// Pure window rule: `positives >= threshold * len` on a full window.
    pub fn decide(outputs: &[bool], threshold: f64) -> bool {
        if outputs.is_empty() {
            return false;
        }
        let positives = outputs.iter().filter(|&&o| o).count() as f64;
        positives >= threshold * outputs.len() as f64 - 1e-9
    }

    /// Feeds one classifier output taken at time `t`; returns true on a switch.
    pub fn push(&mut self, t: f64, positive: bool) -> bool {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(positive);
        if let Some(last) = self.last_switch {
            if t - last < self.refractory - 1e-9 {
                return false;
            }
        }
        if self.history.len() < self.window {
            return false;
        }
        let (a, b) = self.history.as_slices();
        let all: Vec<bool> = a.iter().chain(b).copied().collect();
        if Self::decide(&all, self.threshold) {
            self.last_switch = Some(t);
            self.history.clear();
            true
        } else {
            false
        }
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.last_switch = None;
    }
}

/// Motor imagery moves along `+e_a`, rest along `-e_a`; a jaw switch toggles
/// the axis and carries no translation.
pub fn map_to_command(t: f64, mi: bool, jaw_switch: bool, axis: Axis) -> CommandEvent {
    if jaw_switch {
        CommandEvent::switch(t, axis)
    } else {
        CommandEvent {
            t,
            axis,
            sign: if mi { 1 } else { -1 },
            axis_switch: false,
        }
    }
}

/// Converts classifier outputs arriving at the epoch hop into one output per
/// command tick by majority vote over the outputs received since the last
/// tick. Ties and empty intervals repeat the previous output.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RateConverter {
    pending_true: usize,
    pending_false: usize,
    last: bool,
}

impl RateConverter {
    pub fn new(initial: bool) -> Self {
        Self {
            last: initial,
            ..Self::default()
        }
    }

    pub fn push(&mut self, value: bool) {
        if value {
            self.pending_true += 1;
        } else {
            self.pending_false += 1;
        }
    }

    pub fn tick(&mut self) -> bool {
        if self.pending_true > self.pending_false {
            self.last = true;
        } else if self.pending_false > self.pending_true {
            self.last = false;
        }
        self.pending_true = 0;
        self.pending_false = 0;
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(pos: usize) -> Vec<bool> {
        (0..50).map(|i| i < pos).collect()
    }

    #[test]
    fn eighty_percent_inclusive() {
        assert!(JawSwitch::decide(&window(45), 0.8));
        assert!(JawSwitch::decide(&window(40), 0.8));
        assert!(!JawSwitch::decide(&window(39), 0.8));
    }

    #[test]
    fn refractory_blocks_retrigger() {
        let mut j = JawSwitch::default();
        let dt = 1.0 / 18.0;
        let mut switches = Vec::new();
        for k in 0..200 {
            let t = k as f64 * dt;
            if j.push(t, true) {
                switches.push(t);
            }
        }
        assert!(switches.len() >= 2);
        for w in switches.windows(2) {
            assert!(w[1] - w[0] >= 2.8 - 1e-9);
        }
    }

    #[test]
    fn command_mapping() {
        let c = map_to_command(0.0, true, false, Axis::X);
        assert_eq!((c.sign, c.axis, c.axis_switch), (1, Axis::X, false));
        let c = map_to_command(0.0, false, false, Axis::Y);
        assert_eq!((c.sign, c.axis, c.axis_switch), (-1, Axis::Y, false));
        let c = map_to_command(0.0, true, true, Axis::X);
        assert!(c.axis_switch);
    }

    #[test]
    fn majority_vote_and_hold() {
        let mut r = RateConverter::new(false);
        r.push(true);
        r.push(true);
        r.push(false);
        assert!(r.tick());
        assert!(r.tick());
        r.push(false);
        r.push(true);
        assert!(r.tick());
        r.push(false);
        assert!(!r.tick());
    }
}
