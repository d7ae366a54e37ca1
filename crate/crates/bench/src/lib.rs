//! Fixtures shared by the benchmarks.

use hsa_core::model::{ActuationAngles, Configuration, RobotParams};
use hsa_core::signal::{
    train_classifiers, ClassSchedule, ClassifierBundle, EegClass, ReplayRow, SynthConfig, SynthEeg,
    TrainSettings,
};
use nalgebra::Vector3;

/// A bent, stretched pose away from every special case.
pub fn typical_configuration() -> Configuration {
    Configuration::new(-6.5, 0.02, 0.08)
}

/// Torque reachable with both motors inside the box, plus a little shear.
pub fn typical_torque(params: &RobotParams) -> Vector3<f64> {
    let q = typical_configuration();
    hsa_core::model::actuation_force(&q, &ActuationAngles::new(2.1, 0.7), params).unwrap()
        + Vector3::new(0.0, 0.01, 0.0)
}

/// Synthetic training session with `per_class` cues per class.
pub fn training_session(per_class: usize) -> Vec<ReplayRow> {
    let mut g = SynthEeg::new(SynthConfig::default()).unwrap();
    g.render(&ClassSchedule::balanced(
        &[EegClass::Rest, EegClass::Mi, EegClass::Jaw],
        per_class,
        2.0,
        4.0,
        0,
    ))
}

pub fn trained_bundle() -> ClassifierBundle {
    train_classifiers(&training_session(30), &TrainSettings::default()).unwrap()
}
