//! Weighted Morrey-type norms localized by the critical radius: strong
//! `L^{p,κ}_{ρ,θ}(w)`, weak `WL^{1,κ}_{ρ,θ}(w)` and `(L log L)^{1,κ}_{ρ,θ}(w)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, BallFamily, BallRecord, ScalarField};
use crate::orlicz::{luxemburg_with_total, YoungFunction};
use crate::potentials::CriticalRadiusField;
use crate::weights::{weak_l1_from_parts, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Strong,
    Weak,
    LlogL,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorreyParams {
    pub p: f64,
    pub kappa: f64,
    pub theta: f64,
    pub flavor: Flavor,
}

impl MorreyParams {
    pub fn new(p: f64, kappa: f64, theta: f64, flavor: Flavor) -> Result<Self> {
        let params = MorreyParams {
            p,
            kappa,
            theta,
            flavor,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn strong(p: f64, kappa: f64, theta: f64) -> Result<Self> {
        Self::new(p, kappa, theta, Flavor::Strong)
    }

    pub fn weak(kappa: f64, theta: f64) -> Result<Self> {
        Self::new(1.0, kappa, theta, Flavor::Weak)
    }

    pub fn llogl(kappa: f64, theta: f64) -> Result<Self> {
        Self::new(1.0, kappa, theta, Flavor::LlogL)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "p must be at least 1, got {}",
                self.p
            )));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::InvalidArgument(format!(
                "kappa must lie in [0, 1), got {}",
                self.kappa
            )));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta must be nonnegative, got {}",
                self.theta
            )));
        }
        if self.flavor != Flavor::Strong && self.p != 1.0 {
            return Err(Error::InvalidArgument(
                "weak and L log L flavors require p = 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorreyEntry {
    pub ball: BallRecord,
    /// Local quantity before the θ-factor.
    pub local: f64,
    /// `(1 + r/ρ(x_0))^{-θ}`
    pub factor: f64,
    pub entry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorreyNormResult {
    pub value: f64,
    pub argmax: Option<BallRecord>,
    pub entries: Vec<MorreyEntry>,
}

impl MorreyNormResult {
    /// `center,radius,local,factor,entry` with the center's coordinates joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("center,radius,local,factor,entry\n");
        for e in &self.entries {
            let center: Vec<String> = e.ball.center.iter().map(|c| format!("{c}")).collect();
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e}",
                center.join(";"),
                e.ball.radius,
                e.local,
                e.factor,
                e.entry
            );
        }
        out
    }
}

/// Local quantity of `f` on one ball, without the θ-factor.
pub fn local_quantity(
    f: &[f64],
    w: &[f64],
    cell_volume: f64,
    ball: &Ball,
    params: &MorreyParams,
) -> Result<f64> {
    let wb: f64 = ball.members().iter().map(|&i| w[i]).sum::<f64>() * cell_volume;
    Ok(match params.flavor {
        Flavor::Strong => {
            let s: f64 = ball
                .members()
                .iter()
                .map(|&i| f[i].abs().powf(params.p) * w[i])
                .sum::<f64>()
                * cell_volume;
            (s / wb.powf(params.kappa)).powf(1.0 / params.p)
        }
        Flavor::Weak => {
            let values: Vec<f64> = ball.members().iter().map(|&i| f[i]).collect();
            let masses: Vec<f64> = ball.members().iter().map(|&i| w[i] * cell_volume).collect();
            weak_l1_from_parts(&values, &masses) / wb.powf(params.kappa)
        }
        Flavor::LlogL => {
            let (values, masses): (Vec<f64>, Vec<f64>) = ball
                .members()
                .iter()
                .filter(|&&i| f[i] != 0.0)
                .map(|&i| (f[i], w[i]))
                .unzip();
            let total = wb / cell_volume;
            wb.powf(1.0 - params.kappa)
                * luxemburg_with_total(&values, &masses, total, YoungFunction::LlogL)?
        }
    })
}

/// Per-ball local quantities for every nonempty ball, in family order.
pub fn local_quantities(
    f: &ScalarField,
    w: &Weight,
    params: &MorreyParams,
    family: &BallFamily,
) -> Result<Vec<(usize, f64)>> {
    params.validate()?;
    if f.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    let cv = f.grid().cell_volume();
    family
        .balls()
        .par_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, ball)| local_quantity(f.values(), w.values(), cv, ball, params).map(|q| (i, q)))
        .collect()
}

fn norm_with(
    f: &ScalarField,
    w: &Weight,
    params: &MorreyParams,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<MorreyNormResult> {
    if rho.grid() != f.grid() {
        return Err(Error::GridMismatch);
    }
    for ball in family.iter() {
        if ball.grid() != f.grid() {
            return Err(Error::GridMismatch);
        }
    }
    let locals = local_quantities(f, w, params, family)?;
    let mut value = 0.0;
    let mut argmax = None;
    let mut entries = Vec::with_capacity(locals.len());
    for (i, local) in locals {
        let ball = &family.balls()[i];
        let factor = rho.base(ball).powf(-params.theta);
        let entry = local * factor;
        if argmax.is_none() || entry > value {
            value = entry;
            argmax = Some(ball.record());
        }
        entries.push(MorreyEntry {
            ball: ball.record(),
            local,
            factor,
            entry,
        });
    }
    Ok(MorreyNormResult {
        value,
        argmax,
        entries,
    })
}

fn require(params: &MorreyParams, flavor: Flavor) -> Result<()> {
    if params.flavor != flavor {
        return Err(Error::InvalidArgument(format!(
            "expected {flavor:?} parameters, got {:?}",
            params.flavor
        )));
    }
    Ok(())
}

/// `max_B (1+r/ρ)^{-θ} (w(B)^{-κ} ∫_B |f|^p w)^{1/p}`.
pub fn morrey_norm(
    f: &ScalarField,
    w: &Weight,
    params: &MorreyParams,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<MorreyNormResult> {
    require(params, Flavor::Strong)?;
    norm_with(f, w, params, rho, family)
}

/// `max_B (1+r/ρ)^{-θ} w(B)^{-κ} sup_λ λ w({x ∈ B : |f| > λ})`.
pub fn weak_morrey_norm(
    f: &ScalarField,
    w: &Weight,
    params: &MorreyParams,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<MorreyNormResult> {
    require(params, Flavor::Weak)?;
    norm_with(f, w, params, rho, family)
}

/// `max_B (1+r/ρ)^{-θ} w(B)^{1-κ} ‖f‖_{L log L(w), B}`.
pub fn lloglog_morrey_norm(
    f: &ScalarField,
    w: &Weight,
    params: &MorreyParams,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<MorreyNormResult> {
    require(params, Flavor::LlogL)?;
    norm_with(f, w, params, rho, family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_ball_family, FamilyPolicy, Grid};
    use crate::weights::weighted_lp_norm;
    use proptest::prelude::*;

    fn setup() -> (Grid, CriticalRadiusField, BallFamily) {
        let g = Grid::new(3, 2.0, 9).unwrap();
        let rho = CriticalRadiusField::constant(g, 0.5).unwrap();
        let family = generate_ball_family(
            &g,
            &FamilyPolicy::geometric(2, 0.5, 3)
                .with_boundary(true)
                .with_box_ball(true),
        )
        .unwrap();
        (g, rho, family)
    }

    #[test]
    fn params_validation() {
        assert!(MorreyParams::strong(2.0, 0.3, 1.0).is_ok());
        assert!(MorreyParams::strong(0.5, 0.3, 1.0).is_err());
        assert!(MorreyParams::strong(2.0, 1.0, 1.0).is_err());
        assert!(MorreyParams::new(2.0, 0.3, 1.0, Flavor::Weak).is_err());
        assert!(MorreyParams::strong(2.0, 0.3, -1.0).is_err());
    }

    #[test]
    fn degenerate_parameters_recover_global_norm() {
        let (g, rho, family) = setup();
        let w = Weight::power(g, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[1]).cos());
        let r = morrey_norm(
            &f,
            &w,
            &MorreyParams::strong(2.0, 0.0, 0.0).unwrap(),
            &rho,
            &family,
        )
        .unwrap();
        let global = weighted_lp_norm(&f, &w, 2.0).unwrap();
        assert!((r.value - global).abs() < 1e-12 * global);
        assert_eq!(r.entries.len(), family.len());
    }

    #[test]
    fn zero_function_has_zero_norms() {
        let (g, rho, family) = setup();
        let w = Weight::constant(g, 1.0).unwrap();
        let z = ScalarField::zeros(g);
        assert_eq!(
            morrey_norm(
                &z,
                &w,
                &MorreyParams::strong(2.0, 0.3, 1.0).unwrap(),
                &rho,
                &family
            )
            .unwrap()
            .value,
            0.0
        );
        assert_eq!(
            weak_morrey_norm(
                &z,
                &w,
                &MorreyParams::weak(0.3, 1.0).unwrap(),
                &rho,
                &family
            )
            .unwrap()
            .value,
            0.0
        );
        assert_eq!(
            lloglog_morrey_norm(
                &z,
                &w,
                &MorreyParams::llogl(0.3, 1.0).unwrap(),
                &rho,
                &family
            )
            .unwrap()
            .value,
            0.0
        );
    }

    #[test]
    fn constant_function_entries() {
        let (g, rho, family) = setup();
        let w = Weight::power(g, 1.0).unwrap();
        let c = 2.5;
        let f = ScalarField::constant(g, c);
        let weak = weak_morrey_norm(
            &f,
            &w,
            &MorreyParams::weak(0.3, 1.0).unwrap(),
            &rho,
            &family,
        )
        .unwrap();
        let ll = lloglog_morrey_norm(
            &f,
            &w,
            &MorreyParams::llogl(0.3, 1.0).unwrap(),
            &rho,
            &family,
        )
        .unwrap();
        for ((e, l), ball) in weak.entries.iter().zip(&ll.entries).zip(family.iter()) {
            let wb: f64 =
                ball.members().iter().map(|&i| w.values()[i]).sum::<f64>() * g.cell_volume();
            let expected = c * wb.powf(0.7) * (1.0 + ball.radius() / 0.5).powf(-1.0);
            assert!((e.entry - expected).abs() < 1e-12 * expected);
            assert!((l.entry - expected).abs() < 1e-7 * expected);
        }
    }

    #[test]
    fn flavor_ordering_per_ball() {
        let (g, rho, family) = setup();
        let w = Weight::power(g, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x| 3.0 * (x[0] * x[1]).sin() + x[2]);
        let weak = weak_morrey_norm(
            &f,
            &w,
            &MorreyParams::weak(0.3, 0.5).unwrap(),
            &rho,
            &family,
        )
        .unwrap();
        let strong = morrey_norm(
            &f,
            &w,
            &MorreyParams::strong(1.0, 0.3, 0.5).unwrap(),
            &rho,
            &family,
        )
        .unwrap();
        let ll = lloglog_morrey_norm(
            &f,
            &w,
            &MorreyParams::llogl(0.3, 0.5).unwrap(),
            &rho,
            &family,
        )
        .unwrap();
        for ((a, b), c) in weak.entries.iter().zip(&strong.entries).zip(&ll.entries) {
            assert!(a.entry <= b.entry * (1.0 + 1e-12));
            assert!(b.entry <= c.entry * (1.0 + 1e-8));
        }
    }

    #[test]
    fn csv_has_one_row_per_ball() {
        let (g, rho, family) = setup();
        let w = Weight::constant(g, 1.0).unwrap();
        let f = ScalarField::constant(g, 1.0);
        let r = morrey_norm(
            &f,
            &w,
            &MorreyParams::strong(2.0, 0.3, 1.0).unwrap(),
            &rho,
            &family,
        )
        .unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), family.len() + 1);
        assert!(csv.starts_with("center,radius,local,factor,entry"));
    }

    #[test]
    fn wrong_flavor_is_rejected() {
        let (g, rho, family) = setup();
        let w = Weight::constant(g, 1.0).unwrap();
        let f = ScalarField::constant(g, 1.0);
        assert!(morrey_norm(
            &f,
            &w,
            &MorreyParams::weak(0.3, 1.0).unwrap(),
            &rho,
            &family
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn homogeneity_and_monotonicity(values in prop::collection::vec(-4.0f64..4.0, 729), c in 0.1f64..10.0,
                                        t1 in 0.0f64..2.0, dt in 0.0f64..2.0) {
            let (g, rho, family) = setup();
            let w = Weight::power(g, 0.5).unwrap();
            let f = ScalarField::new(g, values).unwrap();
            let cf = f.scale(c);
            for params in [
                MorreyParams::strong(2.0, 0.3, t1).unwrap(),
                MorreyParams::weak(0.3, t1).unwrap(),
                MorreyParams::llogl(0.3, t1).unwrap(),
            ] {
                let a = norm_with(&f, &w, &params, &rho, &family).unwrap().value;
                let b = norm_with(&cf, &w, &params, &rho, &family).unwrap().value;
                prop_assert!((b - c * a).abs() <= 1e-7 * c * a);
                let higher = MorreyParams { theta: t1 + dt, ..params };
                let e = norm_with(&f, &w, &higher, &rho, &family).unwrap().value;
                prop_assert!(e <= a * (1.0 + 1e-12));
                // dropping balls never increases the norm
                let sub = BallFamily::from_balls(family.balls()[..family.len() / 2].to_vec());
                let s = norm_with(&f, &w, &params, &rho, &sub).unwrap().value;
                prop_assert!(s <= a);
            }
        }
    }
}
