//! Canonical benchmark models used by sweeps and the command line.

use mixcal_core::exp_family::Component;
use mixcal_core::mixture::{LabelRule, Mixture, MixtureModel};

use crate::HarnessError;

/// Two equal-weight isotropic Gaussians at `±gamma/2` along the first axis,
/// with a logistic label rule along the same axis. The label rule depends on
/// position, so cluster-assignment mistakes show up as calibration error;
/// a component-symmetric rule would hide them.
pub fn separation_model(gamma: f64, d: usize) -> MixtureModel {
    let mut mu0 = vec![0.0; d];
    let mut mu1 = vec![0.0; d];
    mu0[0] = -gamma / 2.0;
    mu1[0] = gamma / 2.0;
    let mixture = Mixture::new(
        vec![0.5, 0.5],
        vec![
            Component::gaussian_isotropic(mu0, 1.0).expect("valid component"),
            Component::gaussian_isotropic(mu1, 1.0).expect("valid component"),
        ],
    )
    .expect("valid mixture");
    let mut w = vec![0.0; d];
    w[0] = 6.0;
    MixtureModel::new(mixture, LabelRule::Logistic { weights: w, bias: 0.0 })
        .expect("valid label rule")
}

/// Single standard component with a constant label rule; the marginal
/// calibration benchmark.
pub fn constant_label_model(p: f64, d: usize) -> MixtureModel {
    let mixture = Mixture::new(
        vec![1.0],
        vec![Component::gaussian_isotropic(vec![0.0; d], 1.0).expect("valid component")],
    )
    .expect("valid mixture");
    MixtureModel::new(mixture, LabelRule::Constant { p }).expect("valid label rule")
}

pub fn read_model(path: &std::path::Path) -> Result<MixtureModel, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_model(path: &std::path::Path, model: &MixtureModel) -> Result<(), HarnessError> {
    std::fs::write(path, serde_json::to_string_pretty(model)?)?;
    Ok(())
}
