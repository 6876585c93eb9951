//! Vehicle approach scenarios and closed-form vehicle kinematics.
//!
//! The catalog holds fourteen evaluation scenarios (six constant-speed,
//! eight yielding) plus two training-only scenarios with an initial
//! time-to-arrival of 1 s, in which crossing ahead of the vehicle is not
//! feasible. Scenario ids are stable strings used as keys in every
//! exported file.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Vehicle keeps its initial speed and passes the crossing.
    Constant,
    /// Vehicle decelerates at a constant rate and stops `d_stop` short
    /// of the crossing line.
    Yielding,
    /// Constant-speed scenario used only during training.
    InfeasibleTraining,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Constant => "constant",
            ScenarioKind::Yielding => "yielding",
            ScenarioKind::InfeasibleTraining => "infeasible_training",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(ScenarioKind::Constant),
            "yielding" => Some(ScenarioKind::Yielding),
            "infeasible_training" => Some(ScenarioKind::InfeasibleTraining),
            _ => None,
        }
    }
}

/// One vehicle-approach condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub kind: ScenarioKind,
    /// Initial vehicle speed, m/s.
    pub v0: f64,
    /// Initial distance of the vehicle front to the crossing line, m.
    pub d0: f64,
    /// Initial time to arrival, s. Always equals `d0 / v0`.
    pub tau0: f64,
    /// Stopping distance for yielding scenarios, m.
    pub d_stop: Option<f64>,
}

impl ScenarioSpec {
    fn new(kind: ScenarioKind, v0: f64, d0: f64, d_stop: Option<f64>) -> Self {
        let tau0 = d0 / v0;
        let id = match kind {
            ScenarioKind::Constant => format!("const_v{:.2}_tta{:.2}", v0, tau0),
            ScenarioKind::Yielding => {
                format!("yield_v{:.2}_tta{:.2}_stop{:.0}", v0, tau0, d_stop.unwrap())
            }
            ScenarioKind::InfeasibleTraining => format!("train_v{:.2}_tta{:.2}", v0, tau0),
        };
        ScenarioSpec {
            id,
            kind,
            v0,
            d0,
            tau0,
            d_stop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) || !(self.d0 > 0.0) {
            return Err(Error::Invalid(format!(
                "scenario {}: v0 and d0 must be positive",
                self.id
            )));
        }
        if (self.tau0 - self.d0 / self.v0).abs() > 1e-6 * self.tau0 {
            return Err(Error::Invalid(format!(
                "scenario {}: tau0 must equal d0/v0",
                self.id
            )));
        }
        match (self.kind, self.d_stop) {
            (ScenarioKind::Yielding, Some(ds)) if ds > 0.0 && ds < self.d0 => Ok(()),
            (ScenarioKind::Yielding, _) => Err(Error::Invalid(format!(
                "scenario {}: yielding requires 0 < d_stop < d0",
                self.id
            ))),
            (_, Some(_)) => Err(Error::Invalid(format!(
                "scenario {}: d_stop only valid for yielding scenarios",
                self.id
            ))),
            (_, None) => Ok(()),
        }
    }

    /// Constant deceleration used by a yielding vehicle, m/s^2.
    pub fn deceleration(&self) -> Result<f64> {
        let d_stop = self
            .d_stop
            .ok_or_else(|| Error::Invalid(format!("scenario {}: not yielding", self.id)))?;
        let gap = self.d0 - d_stop;
        if gap <= 0.0 {
            return Err(Error::Invalid(format!(
                "scenario {}: d_stop must be smaller than d0",
                self.id
            )));
        }
        Ok(self.v0 * self.v0 / (2.0 * gap))
    }

    pub fn is_evaluation(&self) -> bool {
        self.kind != ScenarioKind::InfeasibleTraining
    }
}

/// The two speed levels used across the whole catalog, m/s.
pub const SPEED_LEVELS: [f64; 2] = [6.94, 13.89];

/// Builds the full scenario catalog: fourteen evaluation scenarios plus
/// two infeasible training-only scenarios (one per speed level, initial
/// TTA exactly 1 s, so `d0 = v0`).
pub fn build_catalog() -> Vec<ScenarioSpec> {
    let constant = [
        (6.94, 15.90),
        (13.89, 31.81),
        (6.94, 31.81),
        (13.89, 63.61),
        (6.94, 47.71),
        (13.89, 95.42),
    ];
    let yielding = [
        (6.94, 15.90, 4.0),
        (13.89, 31.81, 4.0),
        (13.89, 31.81, 8.0),
        (6.94, 31.81, 4.0),
        (13.89, 63.61, 4.0),
        (13.89, 63.61, 8.0),
        (6.94, 47.71, 4.0),
        (13.89, 95.42, 4.0),
    ];

    let mut catalog = Vec::with_capacity(16);
    for (v0, d0) in constant {
        catalog.push(ScenarioSpec::new(ScenarioKind::Constant, v0, d0, None));
    }
    for (v0, d0, d_stop) in yielding {
        catalog.push(ScenarioSpec::new(
            ScenarioKind::Yielding,
            v0,
            d0,
            Some(d_stop),
        ));
    }
    for v0 in SPEED_LEVELS {
        catalog.push(ScenarioSpec::new(
            ScenarioKind::InfeasibleTraining,
            v0,
            v0 * 1.0,
            None,
        ));
    }
    catalog
}

/// Vehicle front position (m, decreasing toward 0 at the crossing line)
/// and speed (m/s) at a given time.
///
/// Constant and training scenarios follow uniform motion. A yielding
/// vehicle decelerates at `v0^2 / (2 (d0 - d_stop))` until it stops with
/// its front exactly `d_stop` from the line.
pub fn vehicle_state(spec: &ScenarioSpec, time: f64) -> Result<(f64, f64)> {
    debug_assert!(time >= 0.0);
    match spec.kind {
        ScenarioKind::Constant | ScenarioKind::InfeasibleTraining => {
            Ok((spec.d0 - spec.v0 * time, spec.v0))
        }
        ScenarioKind::Yielding => {
            let a = spec.deceleration()?;
            let t_stop = spec.v0 / a;
            if time < t_stop {
                Ok((
                    spec.d0 - spec.v0 * time + 0.5 * a * time * time,
                    spec.v0 - a * time,
                ))
            } else {
                Ok((spec.d_stop.unwrap(), 0.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_sixteen_entries() {
        let catalog = build_catalog();
        assert_eq!(catalog.len(), 16);
        assert_eq!(
            catalog.iter().filter(|s| s.is_evaluation()).count(),
            14,
            "fourteen evaluation scenarios"
        );
        for spec in &catalog {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn catalog_contains_expected_rows() {
        let catalog = build_catalog();
        let row1 = catalog
            .iter()
            .find(|s| s.kind == ScenarioKind::Constant && s.v0 == 6.94 && s.d0 == 15.90)
            .unwrap();
        assert!((row1.tau0 - 2.29).abs() < 0.005);

        let yielding = catalog
            .iter()
            .find(|s| {
                s.kind == ScenarioKind::Yielding
                    && s.v0 == 13.89
                    && s.d0 == 63.61
                    && s.d_stop == Some(8.0)
            })
            .unwrap();
        assert!((yielding.tau0 - 4.58).abs() < 0.005);

        let infeasible: Vec<_> = catalog
            .iter()
            .filter(|s| s.kind == ScenarioKind::InfeasibleTraining)
            .collect();
        assert_eq!(infeasible.len(), 2);
        for s in infeasible {
            assert!((s.tau0 - 1.0).abs() < 1e-12);
            assert_eq!(s.d0, s.v0);
        }
    }

    #[test]
    fn tau0_is_d0_over_v0() {
        for spec in build_catalog() {
            let rel = (spec.tau0 - spec.d0 / spec.v0).abs() / spec.tau0;
            assert!(rel <= 1e-6, "{}: rel error {}", spec.id, rel);
        }
    }

    #[test]
    fn ids_are_unique() {
        let catalog = build_catalog();
        let mut ids: Vec<_> = catalog.iter().map(|s| s.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), catalog.len());
    }

    #[test]
    fn constant_kinematics() {
        let spec = ScenarioSpec::new(ScenarioKind::Constant, 6.94, 15.90, None);
        let (x, v) = vehicle_state(&spec, 0.0).unwrap();
        assert_eq!((x, v), (15.90, 6.94));
        // Front bumper reaches the crossing line at tau0.
        let (x, v) = vehicle_state(&spec, spec.tau0).unwrap();
        assert!(x.abs() < 1e-9, "x at tau0 = {x}");
        assert_eq!(v, 6.94);
        // x = 15.90 - 6.94 * 2.2911
        let (x, _) = vehicle_state(&spec, 2.2911).unwrap();
        assert!((x - (15.90 - 6.94 * 2.2911)).abs() < 1e-12);
    }

    #[test]
    fn yielding_stops_at_d_stop() {
        let spec = ScenarioSpec::new(ScenarioKind::Yielding, 6.94, 15.90, Some(4.0));
        let a = spec.deceleration().unwrap();
        assert!((a - 6.94 * 6.94 / (2.0 * 11.90)).abs() < 1e-12);
        let t_stop = spec.v0 / a;
        for t in [t_stop, t_stop + 0.5, t_stop + 100.0] {
            let (x, v) = vehicle_state(&spec, t).unwrap();
            assert_eq!((x, v), (4.0, 0.0));
        }
        // Position approaches d_stop continuously from above.
        let (x, v) = vehicle_state(&spec, t_stop - 1e-6).unwrap();
        assert!(x > 4.0 && x - 4.0 < 1e-9);
        assert!(v > 0.0 && v < 1e-4);
    }

    #[test]
    fn yielding_speed_nonincreasing_position_nonincreasing() {
        for spec in build_catalog().iter().filter(|s| s.kind == ScenarioKind::Yielding) {
            let mut prev = vehicle_state(spec, 0.0).unwrap();
            let mut t = 0.0;
            while t < 20.0 {
                t += 0.05;
                let cur = vehicle_state(spec, t).unwrap();
                assert!(cur.0 <= prev.0 + 1e-12, "{}: x increased", spec.id);
                assert!(cur.1 <= prev.1 + 1e-12, "{}: v increased", spec.id);
                assert!(cur.1 >= 0.0);
                prev = cur;
            }
            assert_eq!(prev.0, spec.d_stop.unwrap());
        }
    }

    #[test]
    fn rejects_bad_yielding_spec() {
        let mut spec = ScenarioSpec::new(ScenarioKind::Yielding, 6.94, 15.90, Some(4.0));
        spec.d_stop = Some(15.90);
        assert!(spec.deceleration().is_err());
        assert!(spec.validate().is_err());
    }
}
