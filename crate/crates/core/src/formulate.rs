//! Lever-rule dilution planning for polymer solutions.
//!
//! Targets are mass fractions, so component masses come from polymer mass
//! balance; volumes for volumetric dispensing are derived from configured
//! densities assuming ideal mixing. A log-linear viscosity model flags
//! blends whose components differ strongly in viscosity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Viscosity ratio above which a plan carries a mixing warning.
pub const DEFAULT_VISCOSITY_WARN_RATIO: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulateError {
    #[error("target {target} wt% is outside the stock range [{lo}, {hi}] wt%")]
    Infeasible { target: f64, lo: f64, hi: f64 },
    #[error("total mass must be positive, got {0} g")]
    BadMass(f64),
    #[error("invalid stock `{label}`: {message}")]
    BadStock { label: String, message: String },
}

/// `log10(viscosity) = alpha + beta * concentration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscosityModel {
    pub alpha: f64,
    /// per wt%
    pub beta: f64,
}

impl Default for ViscosityModel {
    fn default() -> Self {
        Self { alpha: -2.0, beta: 0.2 }
    }
}

impl ViscosityModel {
    pub fn viscosity(&self, concentration: f64) -> f64 {
        10f64.powf(self.alpha + self.beta * concentration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stock {
    pub label: String,
    /// wt% polymer
    pub concentration: f64,
    /// g/mL
    pub density: f64,
    pub viscosity: ViscosityModel,
}

impl Stock {
    pub fn new(label: impl Into<String>, concentration: f64, density: f64) -> Self {
        Self {
            label: label.into(),
            concentration,
            density,
            viscosity: ViscosityModel::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FormulateError> {
        let bad = |message: &str| FormulateError::BadStock {
            label: self.label.clone(),
            message: message.to_string(),
        };
        if !(self.concentration >= 0.0 && self.concentration < 100.0) {
            return Err(bad("concentration must be in [0, 100) wt%"));
        }
        if !(self.density > 0.0) {
            return Err(bad("density must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: String,
    pub concentration: f64,
    pub mass_g: f64,
    pub volume_ml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionPlan {
    pub components: Vec<Component>,
    pub target_concentration: f64,
    pub total_mass: f64,
    /// Highest over lowest viscosity among components actually dispensed.
    pub viscosity_ratio: f64,
    pub warning: Option<String>,
}

impl DilutionPlan {
    /// Polymer mass fraction of the blend, wt%.
    pub fn blended_concentration(&self) -> f64 {
        let mass: f64 = self.components.iter().map(|c| c.mass_g).sum();
        let polymer: f64 = self.components.iter().map(|c| c.mass_g * c.concentration).sum();
        polymer / mass
    }
}

/// Two-stock lever rule.
pub fn plan_dilution(a: &Stock, b: &Stock, target: f64, total_mass: f64) -> Result<DilutionPlan, FormulateError> {
    plan_dilution_with(a, b, target, total_mass, DEFAULT_VISCOSITY_WARN_RATIO)
}

pub fn plan_dilution_with(
    a: &Stock,
    b: &Stock,
    target: f64,
    total_mass: f64,
    warn_ratio: f64,
) -> Result<DilutionPlan, FormulateError> {
    a.validate()?;
    b.validate()?;
    if !(total_mass > 0.0 && total_mass.is_finite()) {
        return Err(FormulateError::BadMass(total_mass));
    }
    let (ca, cb) = (a.concentration, b.concentration);
    let (lo, hi) = (ca.min(cb), ca.max(cb));
    if !(target >= lo && target <= hi) {
        return Err(FormulateError::Infeasible { target, lo, hi });
    }
    let (mass_a, mass_b) = if ca == cb {
        // target == ca here; a alone does it.
        (total_mass, 0.0)
    } else {
        let span = ca - cb;
        (total_mass * (target - cb) / span, total_mass * (ca - target) / span)
    };
    let component = |s: &Stock, m: f64| Component {
        label: s.label.clone(),
        concentration: s.concentration,
        mass_g: m,
        volume_ml: m / s.density,
    };
    let dispensed: Vec<f64> = [(a, mass_a), (b, mass_b)]
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|(s, _)| s.viscosity.viscosity(s.concentration))
        .collect();
    let vmax = dispensed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vmin = dispensed.iter().cloned().fold(f64::INFINITY, f64::min);
    let viscosity_ratio = if dispensed.len() > 1 { vmax / vmin } else { 1.0 };
    let warning = (viscosity_ratio > warn_ratio).then(|| {
        format!(
            "viscosity ratio {viscosity_ratio:.1} exceeds {warn_ratio}: mixing `{}` with `{}` may be incomplete",
            a.label, b.label
        )
    });
    Ok(DilutionPlan {
        components: vec![component(a, mass_a), component(b, mass_b)],
        target_concentration: target,
        total_mass,
        viscosity_ratio,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionSeries {
    pub plans: Vec<DilutionPlan>,
    /// Total mass drawn from each stock across the series, by label.
    pub consumption_g: BTreeMap<String, f64>,
}

/// One plan per target from the same stock and diluent.
pub fn plan_series(
    stock: &Stock,
    diluent: &Stock,
    targets: &[f64],
    per_target_mass: f64,
) -> Result<DilutionSeries, FormulateError> {
    let plans = targets
        .iter()
        .map(|&t| plan_dilution(stock, diluent, t, per_target_mass))
        .collect::<Result<Vec<_>, _>>()?;
    let mut consumption_g = BTreeMap::new();
    for plan in &plans {
        for c in &plan.components {
            *consumption_g.entry(c.label.clone()).or_insert(0.0) += c.mass_g;
        }
    }
    Ok(DilutionSeries { plans, consumption_g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stock(label: &str, c: f64) -> Stock {
        Stock::new(label, c, 1.0)
    }

    #[test]
    fn stock_plus_solvent() {
        let plan = plan_dilution(&stock("PSf17", 17.0), &stock("solvent", 0.0), 12.0, 10.0).unwrap();
        assert!((plan.components[0].mass_g - 7.0588).abs() < 5e-5);
        assert!((plan.components[1].mass_g - 2.9412).abs() < 5e-5);
        assert!(plan.warning.is_some());
    }

    #[test]
    fn two_stocks() {
        let plan = plan_dilution(&stock("PSf17", 17.0), &stock("PSf10", 10.0), 12.0, 10.0).unwrap();
        assert!((plan.components[0].mass_g - 2.857).abs() < 5e-4);
        assert!((plan.components[1].mass_g - 7.143).abs() < 5e-4);
        // Blending two stocks keeps viscosities within the default warning ratio.
        assert!(plan.warning.is_none(), "{}", plan.viscosity_ratio);
    }

    #[test]
    fn target_at_stock_needs_no_diluent() {
        let plan = plan_dilution(&stock("PSf17", 17.0), &stock("solvent", 0.0), 17.0, 10.0).unwrap();
        assert_eq!(plan.components[0].mass_g, 10.0);
        assert_eq!(plan.components[1].mass_g, 0.0);
        assert_eq!(plan.viscosity_ratio, 1.0);
        let same = plan_dilution(&stock("a", 12.0), &stock("b", 12.0), 12.0, 5.0).unwrap();
        assert_eq!(same.components[0].mass_g, 5.0);
    }

    #[test]
    fn infeasible_targets() {
        let a = stock("a", 17.0);
        let b = stock("b", 10.0);
        assert!(matches!(
            plan_dilution(&a, &b, 18.0, 10.0),
            Err(FormulateError::Infeasible { .. })
        ));
        assert!(matches!(
            plan_dilution(&a, &a, 12.0, 10.0),
            Err(FormulateError::Infeasible { .. })
        ));
        assert!(matches!(
            plan_dilution(&a, &b, 12.0, 0.0),
            Err(FormulateError::BadMass(_))
        ));
    }

    #[test]
    fn volumes_use_density() {
        let a = Stock::new("a", 17.0, 1.1);
        let plan = plan_dilution(&a, &stock("s", 0.0), 17.0, 11.0).unwrap();
        assert!((plan.components[0].volume_ml - 10.0).abs() < 1e-12);
    }

    #[test]
    fn series_from_stock() {
        let s = stock("PSf17", 17.0);
        let d = stock("solvent", 0.0);
        let series = plan_series(&s, &d, &[10.0, 12.0, 15.0, 17.0], 10.0).unwrap();
        assert_eq!(series.plans.len(), 4);
        assert_eq!(series.plans[3].components[1].mass_g, 0.0);
        let independent: f64 = [10.0, 12.0, 15.0, 17.0].iter().map(|t| 10.0 * t / 17.0).sum();
        assert!((series.consumption_g["PSf17"] - independent).abs() < 1e-12);
        assert!(plan_series(&s, &d, &[], 10.0).unwrap().plans.is_empty());
        match plan_series(&s, &d, &[12.0, 20.0], 10.0) {
            Err(FormulateError::Infeasible { target, .. }) => assert_eq!(target, 20.0),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn mass_balance(ca in 0.0f64..99.0, cb in 0.0f64..99.0, u in 0.0f64..=1.0, mass in 0.01f64..1000.0) {
            let target = ca.min(cb) + u * (ca - cb).abs();
            let plan = plan_dilution(&stock("a", ca), &stock("b", cb), target, mass).unwrap();
            let total: f64 = plan.components.iter().map(|c| c.mass_g).sum();
            prop_assert!(plan.components.iter().all(|c| c.mass_g >= 0.0));
            prop_assert!((total - mass).abs() <= 1e-9 * mass);
            let polymer: f64 = plan.components.iter().map(|c| c.mass_g * c.concentration).sum();
            prop_assert!((polymer - mass * target).abs() <= 1e-12 * (mass * target).max(mass * 1e-300));
        }

        #[test]
        fn swapping_stocks_swaps_labels(ca in 0.0f64..50.0, cb in 50.0f64..99.0, u in 0.0f64..=1.0) {
            let target = ca + u * (cb - ca);
            let ab = plan_dilution(&stock("a", ca), &stock("b", cb), target, 10.0).unwrap();
            let ba = plan_dilution(&stock("b", cb), &stock("a", ca), target, 10.0).unwrap();
            prop_assert_eq!(&ab.components[0], &ba.components[1]);
            prop_assert_eq!(&ab.components[1], &ba.components[0]);
            prop_assert_eq!(ab.viscosity_ratio, ba.viscosity_ratio);
        }

        #[test]
        fn richer_target_takes_more_rich_stock(t1 in 0.0f64..17.0, dt in 1e-6f64..5.0) {
            let t2 = (t1 + dt).min(17.0);
            prop_assume!(t2 > t1);
            let rich = stock("rich", 17.0);
            let lean = stock("lean", 0.0);
            let m1 = plan_dilution(&rich, &lean, t1, 10.0).unwrap().components[0].mass_g;
            let m2 = plan_dilution(&rich, &lean, t2, 10.0).unwrap().components[0].mass_g;
            prop_assert!(m2 > m1);
        }
    }
}
