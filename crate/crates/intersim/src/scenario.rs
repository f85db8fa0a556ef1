//! Named demand scenarios: a layout, per-lane arrival shares, the spacing
//! gap, and an optional demand fluctuation. Scenarios scale with a base rate
//! `lambda0` at run time, so one definition covers the whole demand sweep.

use crate::demand::{DemandSpec, Fluctuation};
use crate::geometry::{four_leg_main, four_leg_secondary, tee, Layout};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which intersection layout a scenario runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutId {
    FourLegMain,
    FourLegSecondary,
    Tee,
}

impl LayoutId {
    pub fn build(self) -> Layout {
        match self {
            LayoutId::FourLegMain => four_leg_main(),
            LayoutId::FourLegSecondary => four_leg_secondary(),
            LayoutId::Tee => tee(),
        }
    }
}

/// A named demand pattern on one layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub layout: LayoutId,
    /// lane id -> fraction of lambda0 arriving on that lane; sums to 1
    pub ratios: BTreeMap<u32, f64>,
    /// bumper-to-bumper spacing floor, m
    pub gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluctuation: Option<Fluctuation>,
}

#[derive(Debug, PartialEq)]
pub enum ScenarioError {
    UnknownLane(u32),
    BadRatioSum(f64),
    BadGap(f64),
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioError::UnknownLane(l) => write!(f, "lane {l} is not an entry lane"),
            ScenarioError::BadRatioSum(s) => write!(f, "lane ratios sum to {s}, expected 1"),
            ScenarioError::BadGap(g) => write!(f, "gap {g} must be positive"),
        }
    }
}

impl std::error::Error for ScenarioError {}

impl Scenario {
    /// Checks lanes against the layout and the ratio sum against 1.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.gap > 0.0) {
            return Err(ScenarioError::BadGap(self.gap));
        }
        let layout = self.layout.build();
        let entries = layout.entry_lanes();
        for &lane in self.ratios.keys() {
            if !entries.contains(&lane) {
                return Err(ScenarioError::UnknownLane(lane));
            }
        }
        let sum: f64 = self.ratios.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::BadRatioSum(sum));
        }
        Ok(())
    }

    /// Demand spec for a base rate and horizon, 1.0 s minimum headway.
    pub fn demand(&self, lambda0: f64, duration: f64) -> DemandSpec {
        DemandSpec {
            lambda0,
            ratios: self.ratios.clone(),
            fluctuation: self.fluctuation,
            min_headway: 1.0,
            duration,
        }
    }
}

fn ratios(shares: &[(&[u32], f64)]) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for &(lanes, r) in shares {
        for &lane in lanes {
            out.insert(lane, r);
        }
    }
    out
}

const MAIN_LANES: [u32; 12] = [2, 3, 4, 6, 7, 8, 10, 11, 12, 14, 15, 16];
const SECONDARY_LANES: [u32; 10] = [1, 2, 4, 5, 6, 7, 8, 10, 11, 12];

fn scenario(
    name: &str,
    layout: LayoutId,
    shares: &[(&[u32], f64)],
    gap: f64,
    fluctuation: Option<Fluctuation>,
) -> Scenario {
    let s = Scenario {
        name: name.to_string(),
        layout,
        ratios: ratios(shares),
        gap,
        fluctuation,
    };
    debug_assert_eq!(s.validate(), Ok(()));
    s
}

const SURGE: Fluctuation = Fluctuation {
    period: 120.0,
    low: 0.5,
    high: 1.5,
};

/// Looks up a built-in scenario by name, e.g. "1-A".
pub fn preset(name: &str) -> Option<Scenario> {
    let four = LayoutId::FourLegMain;
    let sec = LayoutId::FourLegSecondary;
    let tee = LayoutId::Tee;
    let s = match name {
        // balanced four-leg
        "1-A" => scenario(name, four, &[(&MAIN_LANES, 1.0 / 12.0)], 1.0, None),
        // skewed four-leg: heavy from E, light everywhere else
        "1-B" => scenario(
            name,
            four,
            &[
                (&[2, 3, 4], 2.0 / 21.0),
                (&[6, 7, 8], 1.0 / 7.0),
                (&[10, 11, 12, 14, 15, 16], 1.0 / 21.0),
            ],
            1.0,
            None,
        ),
        // balanced main/secondary crossing
        "2-A" => scenario(name, sec, &[(&SECONDARY_LANES, 1.0 / 10.0)], 1.0, None),
        // main road carries three quarters of the demand
        "2-B" => scenario(
            name,
            sec,
            &[
                (&[4, 5, 6, 10, 11, 12], 1.0 / 8.0),
                (&[1, 2, 7, 8], 1.0 / 16.0),
            ],
            1.0,
            None,
        ),
        // balanced tee
        "3-A" => scenario(
            name,
            tee,
            &[
                (&[2, 3, 4], 1.0 / 6.0),
                (&[5, 6, 7, 8], 1.0 / 12.0),
                (&[10], 1.0 / 6.0),
            ],
            1.0,
            None,
        ),
        // tee with a dominant westbound flow
        "3-B" => scenario(
            name,
            tee,
            &[
                (&[2, 3, 4], 1.0 / 12.0),
                (&[5, 6, 7, 8], 1.0 / 6.0),
                (&[10], 1.0 / 12.0),
            ],
            1.0,
            None,
        ),
        // balanced four-leg with 120 s demand surges
        "4-A" => scenario(name, four, &[(&MAIN_LANES, 1.0 / 12.0)], 1.0, Some(SURGE)),
        // balanced tee with 120 s demand surges
        "4-B" => scenario(
            name,
            tee,
            &[
                (&[2, 3, 4], 1.0 / 6.0),
                (&[5, 6, 7, 8], 1.0 / 12.0),
                (&[10], 1.0 / 6.0),
            ],
            1.0,
            Some(SURGE),
        ),
        // balanced four-leg at wider spacing gaps
        "5-A" => scenario(name, four, &[(&MAIN_LANES, 1.0 / 12.0)], 4.0, None),
        "5-B" => scenario(name, four, &[(&MAIN_LANES, 1.0 / 12.0)], 8.0, None),
        _ => return None,
    };
    Some(s)
}

/// All built-in scenario names, sweep order.
pub const PRESET_NAMES: [&str; 10] = [
    "1-A", "1-B", "2-A", "2-B", "3-A", "3-B", "4-A", "4-B", "5-A", "5-B",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_internally_consistent() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            assert_eq!(s.name, name);
            assert_eq!(s.validate(), Ok(()), "{name}");
            let sum: f64 = s.ratios.values().sum();
            assert!((sum - 1.0).abs() < 1e-12, "{name}: ratio sum {sum}");
        }
        assert!(preset("9-Z").is_none());
    }

    #[test]
    fn presets_cover_expected_layouts_and_gaps() {
        assert_eq!(preset("1-A").unwrap().layout, LayoutId::FourLegMain);
        assert_eq!(preset("2-B").unwrap().layout, LayoutId::FourLegSecondary);
        assert_eq!(preset("3-A").unwrap().layout, LayoutId::Tee);
        assert_eq!(preset("5-A").unwrap().gap, 4.0);
        assert_eq!(preset("5-B").unwrap().gap, 8.0);
        let f = preset("4-A").unwrap().fluctuation.unwrap();
        assert_eq!(f.factor(0.0), 0.5);
        assert_eq!(f.factor(121.0), 1.5);
        assert_eq!(f.factor(241.0), 0.5);
    }

    #[test]
    fn demand_spec_scales_by_lane_ratio() {
        let s = preset("3-B").unwrap();
        let d = s.demand(2.4, 900.0);
        assert!((d.lane_rate(5, 0.0) - 0.4).abs() < 1e-12);
        assert!((d.lane_rate(2, 0.0) - 0.2).abs() < 1e-12);
        assert_eq!(d.lane_rate(1, 0.0), 0.0);
        assert_eq!(d.duration, 900.0);
        assert_eq!(d.min_headway, 1.0);
    }

    #[test]
    fn json_round_trip_and_unknown_field_rejection() {
        let s = preset("4-B").unwrap();
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, s.name);
        assert_eq!(back.layout, s.layout);
        assert_eq!(back.ratios, s.ratios);
        assert_eq!(back.fluctuation, s.fluctuation);

        let bad = r#"{"name":"x","layout":"tee","ratios":{"10":1.0},"gap":1.0,"cycle":30}"#;
        assert!(serde_json::from_str::<Scenario>(bad).is_err());

        let custom = r#"{"name":"x","layout":"tee","ratios":{"10":1.0},"gap":1.0}"#;
        let c: Scenario = serde_json::from_str(custom).unwrap();
        assert_eq!(c.validate(), Ok(()));
    }

    #[test]
    fn validation_rejects_bad_lanes_and_sums() {
        let mut s = preset("1-A").unwrap();
        s.ratios.insert(5, 0.0);
        assert_eq!(s.validate(), Err(ScenarioError::UnknownLane(5)));

        let mut s = preset("1-A").unwrap();
        s.ratios.insert(2, 0.5);
        assert!(matches!(s.validate(), Err(ScenarioError::BadRatioSum(_))));

        let mut s = preset("1-A").unwrap();
        s.gap = 0.0;
        assert_eq!(s.validate(), Err(ScenarioError::BadGap(0.0)));
    }
}
