#![allow(dead_code)]

use proptest::prelude::*;
use vad_core::features::{FeatureVector, Normalizers};

pub const APP: usize = 3;

pub fn arb_feature() -> impl Strategy<Value = FeatureVector> {
    (
        prop::collection::vec(-1.0f32..1.0, APP),
        prop::collection::vec(0.0f32..1.0, 12),
        prop::collection::vec(0.0f32..4.0, 12),
        0.0f32..1.0,
        prop::bool::weighted(0.2),
    )
        .prop_map(|(app, ang, mag, bkg, cls)| FeatureVector::new(app, ang, mag, vec![bkg], cls).unwrap())
}

pub fn arb_normalizers() -> impl Strategy<Value = Normalizers> {
    (0.2f32..3.0, 0.2f32..3.0, 0.2f32..3.0, 0.2f32..3.0).prop_map(|(app, ang, mag, bkg)| Normalizers {
        app,
        ang,
        mag,
        bkg,
    })
}
