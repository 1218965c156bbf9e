#![allow(dead_code)]

use serde::Deserialize;

/// Calibrated constant windows, frozen after the first sweep.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Windows {
    pub beta_over_gamma: (f64, f64),
    pub m12_over_gamma: f64,
    pub m12_im_norm: f64,
    pub mfmf: f64,
    pub stated_constant: f64,
}

pub fn windows() -> Windows {
    let raw = include_str!("../fixtures/windows.json");
    serde_json::from_str(raw).expect("fixtures/windows.json")
}
