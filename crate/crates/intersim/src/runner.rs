//! Batch execution of the (scenario, controller, demand, replication)
//! matrix. Every cell of one replication reuses the same arrival sequence
//! across controllers, cells run in parallel, and rows come back in a fixed
//! canonical order so repeated runs produce identical tables. Also hosts
//! the cycle-length grid search that picks the pretimed controller's cycle
//! per scenario and demand level.

use crate::controllers::cpic::Cpic;
use crate::controllers::fcfs::Fcfs;
use crate::controllers::ppc::Ppc;
use crate::demand::generate_arrivals;
use crate::engine::{run, Controller, RunParams, RunResult};
use crate::geometry::Layout;
use crate::scenario::Scenario;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// The three intersection control strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ControllerId {
    Ppc,
    Fcfs,
    Cpic,
}

impl ControllerId {
    pub const ALL: [ControllerId; 3] = [ControllerId::Ppc, ControllerId::Fcfs, ControllerId::Cpic];

    pub fn name(self) -> &'static str {
        match self {
            ControllerId::Ppc => "ppc",
            ControllerId::Fcfs => "fcfs",
            ControllerId::Cpic => "cpic",
        }
    }
}

/// Run-length profile: short sweeps for desk checks, or the full protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

/// Execution settings for one matrix, normally derived from a profile.
#[derive(Clone, Debug)]
pub struct MatrixConfig {
    pub duration: f64,
    pub warmup: f64,
    pub replications: u64,
    pub lambdas: Vec<f64>,
    pub seed_base: u64,
}

impl MatrixConfig {
    pub fn from_profile(profile: Profile, seed_base: u64) -> MatrixConfig {
        match profile {
            Profile::Desk => MatrixConfig {
                duration: 900.0,
                warmup: 120.0,
                replications: 3,
                lambdas: (1..=8).map(|i| i as f64 * 0.5).collect(),
                seed_base,
            },
            Profile::Paper => MatrixConfig {
                duration: 3900.0,
                warmup: 300.0,
                replications: 10,
                lambdas: (1..=40).map(|i| i as f64 * 0.1).collect(),
                seed_base,
            },
        }
    }
}

/// One (scenario, controller, demand, replication) result.
#[derive(Clone, Debug)]
pub struct Row {
    pub scenario: String,
    pub controller: ControllerId,
    pub lambda0: f64,
    pub replication: u64,
    pub mean_delay: f64,
    pub p25: f64,
    pub p75: f64,
    pub max_delay: f64,
    pub stable: bool,
    /// Simulated seconds actually executed; short of the duration when the
    /// run was cut off as unstable.
    pub runtime: f64,
}

/// A cell whose safety audit failed; any such cell halts the matrix.
#[derive(Debug)]
pub struct MatrixError {
    pub scenario: String,
    pub controller: ControllerId,
    pub lambda0: f64,
    pub replication: u64,
    pub violations: Vec<String>,
}

impl std::fmt::Display for MatrixError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} lambda0={} rep {}: {} safety violations, first: {}",
            self.scenario,
            self.controller.name(),
            self.lambda0,
            self.replication,
            self.violations.len(),
            self.violations.first().map(String::as_str).unwrap_or("")
        )
    }
}

impl std::error::Error for MatrixError {}

/// Linear-interpolation percentile of an ascending sample, `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let k = h.floor() as usize;
    let g = h - k as f64;
    if k + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[k] * (1.0 - g) + sorted[k + 1] * g
    }
}

/// Delay statistics over vehicles that entered after the warmup:
/// (mean, p25, p75, max), zeros when no vehicle qualifies.
pub fn delay_stats(res: &RunResult, warmup: f64) -> (f64, f64, f64, f64) {
    let mut d: Vec<f64> = res
        .completions
        .iter()
        .filter(|c| c.intended_entry >= warmup)
        .map(|c| c.delay)
        .collect();
    if d.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    d.sort_by(f64::total_cmp);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    (mean, percentile(&d, 0.25), percentile(&d, 0.75), d[d.len() - 1])
}

fn lane_rates(scenario: &Scenario, lambda0: f64) -> BTreeMap<u32, f64> {
    scenario
        .ratios
        .iter()
        .map(|(&lane, &r)| (lane, lambda0 * r))
        .collect()
}

fn run_cell(
    layout: &Layout,
    scenario: &Scenario,
    cfg: &MatrixConfig,
    lambda0: f64,
    rep: u64,
    controller: &mut dyn Controller,
) -> RunResult {
    let arrivals = generate_arrivals(&scenario.demand(lambda0, cfg.duration), cfg.seed_base + rep);
    let params = RunParams {
        duration: cfg.duration,
        warmup: cfg.warmup,
        gap: scenario.gap,
        queue_limit: 200,
    };
    run(layout, &arrivals, &params, controller)
}

/// One cycle-length candidate: replication-mean delay and unstable count.
#[derive(Clone, Debug)]
pub struct CycleRow {
    pub cycle: f64,
    pub mean_delay: f64,
    pub unstable: u64,
}

/// Sweeps the layout's cycle range in 2 s steps with the pretimed
/// controller and returns the cycle with the lowest replication-mean delay
/// (fully stable candidates first, ties toward the shorter cycle) along
/// with the full candidate table. Candidates whose cycle cannot fit every
/// phase's minimum green are absent from the table.
pub fn grid_search(scenario: &Scenario, lambda0: f64, cfg: &MatrixConfig) -> (f64, Vec<CycleRow>) {
    let layout = scenario.layout.build();
    let rates = lane_rates(scenario, lambda0);
    let (lo, hi) = layout.cycle_range;
    let candidates: Vec<f64> = (0..)
        .map(|i| lo + 2.0 * i as f64)
        .take_while(|&c| c <= hi + 1e-9)
        .collect();
    let table: Vec<CycleRow> = candidates
        .par_iter()
        .filter_map(|&cycle| {
            Ppc::new(&layout, &rates, scenario.gap, cycle)?;
            let mut sum = 0.0;
            let mut unstable = 0;
            for rep in 0..cfg.replications {
                let mut ctl = Ppc::new(&layout, &rates, scenario.gap, cycle).unwrap();
                let res = run_cell(&layout, scenario, cfg, lambda0, rep, &mut ctl);
                sum += delay_stats(&res, cfg.warmup).0;
                unstable += u64::from(res.unstable.is_some());
            }
            Some(CycleRow {
                cycle,
                mean_delay: sum / cfg.replications as f64,
                unstable,
            })
        })
        .collect();
    let mut best = table[0].cycle;
    let mut best_key = (table[0].unstable > 0, table[0].mean_delay);
    for row in &table[1..] {
        let key = (row.unstable > 0, row.mean_delay);
        if key < best_key {
            best = row.cycle;
            best_key = key;
        }
    }
    (best, table)
}

/// Executes every (scenario, controller, lambda0, replication) cell. The
/// pretimed controller first gets a cycle per (scenario, lambda0) from the
/// grid search. Rows come back in canonical order regardless of thread
/// count; a cell with safety violations fails the whole matrix.
pub fn run_matrix(
    scenarios: &[Scenario],
    controllers: &[ControllerId],
    cfg: &MatrixConfig,
) -> Result<Vec<Row>, MatrixError> {
    let mut ctls: Vec<ControllerId> = controllers.to_vec();
    ctls.sort();
    ctls.dedup();
    let layouts: Vec<Layout> = scenarios.iter().map(|s| s.layout.build()).collect();

    let cycles: BTreeMap<(usize, usize), f64> = if ctls.contains(&ControllerId::Ppc) {
        let wanted: Vec<(usize, usize)> = (0..scenarios.len())
            .flat_map(|si| (0..cfg.lambdas.len()).map(move |li| (si, li)))
            .collect();
        wanted
            .par_iter()
            .map(|&(si, li)| {
                let (cycle, _) = grid_search(&scenarios[si], cfg.lambdas[li], cfg);
                ((si, li), cycle)
            })
            .collect()
    } else {
        BTreeMap::new()
    };

    let cells: Vec<(usize, ControllerId, usize, u64)> = (0..scenarios.len())
        .flat_map(|si| {
            let ctls = &ctls;
            let n_l = cfg.lambdas.len();
            ctls.iter().flat_map(move |&c| {
                (0..n_l).flat_map(move |li| (0..cfg.replications).map(move |rep| (si, c, li, rep)))
            })
        })
        .collect();

    let results: Vec<Result<Row, MatrixError>> = cells
        .par_iter()
        .map(|&(si, ctl, li, rep)| {
            let scenario = &scenarios[si];
            let layout = &layouts[si];
            let lambda0 = cfg.lambdas[li];
            let mut controller: Box<dyn Controller> = match ctl {
                ControllerId::Ppc => {
                    let cycle = cycles[&(si, li)];
                    Box::new(
                        Ppc::new(layout, &lane_rates(scenario, lambda0), scenario.gap, cycle)
                            .expect("grid search returned a feasible cycle"),
                    )
                }
                ControllerId::Fcfs => Box::new(Fcfs::new(layout, scenario.gap)),
                ControllerId::Cpic => Box::new(Cpic::new(layout)),
            };
            let res = run_cell(layout, scenario, cfg, lambda0, rep, controller.as_mut());
            if !res.violations.is_empty() {
                return Err(MatrixError {
                    scenario: scenario.name.clone(),
                    controller: ctl,
                    lambda0,
                    replication: rep,
                    violations: res.violations,
                });
            }
            let (mean, p25, p75, max) = delay_stats(&res, cfg.warmup);
            Ok(Row {
                scenario: scenario.name.clone(),
                controller: ctl,
                lambda0,
                replication: rep,
                mean_delay: mean,
                p25,
                p75,
                max_delay: max,
                stable: res.unstable.is_none(),
                runtime: res.unstable.unwrap_or(cfg.duration),
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    Ok(rows)
}

/// Renders rows as comma-delimited text with a one-line header.
pub fn to_csv(rows: &[Row]) -> String {
    let mut out =
        String::from("scenario,controller,lambda0,replication,mean_delay,p25,p75,max_delay,stable,runtime\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.3},{},{:.3},{:.3},{:.3},{:.3},{},{:.3}",
            r.scenario,
            r.controller.name(),
            r.lambda0,
            r.replication,
            r.mean_delay,
            r.p25,
            r.p75,
            r.max_delay,
            r.stable,
            r.runtime
        )
        .unwrap();
    }
    out
}

/// Renders a grid-search table as comma-delimited text.
pub fn grid_csv(table: &[CycleRow]) -> String {
    let mut out = String::from("cycle,mean_delay,unstable\n");
    for r in table {
        writeln!(out, "{:.0},{:.3},{}", r.cycle, r.mean_delay, r.unstable).unwrap();
    }
    out
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Per-(scenario, controller, lambda0) aggregate: the mean over
/// replications of each replication statistic, plus the unstable count.
pub fn summary_json(rows: &[Row]) -> String {
    let mut groups: BTreeMap<(String, ControllerId, u64), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scenario.clone(), r.controller, (r.lambda0 * 1000.0).round() as u64))
            .or_default()
            .push(r);
    }
    let list: Vec<serde_json::Value> = groups
        .into_iter()
        .map(|((scenario, ctl, _), rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&Row) -> f64| round3(rs.iter().map(|r| f(r)).sum::<f64>() / n);
            serde_json::json!({
                "scenario": scenario,
                "controller": ctl.name(),
                "lambda0": round3(rs[0].lambda0),
                "mean_delay": mean(|r| r.mean_delay),
                "p25": mean(|r| r.p25),
                "p75": mean(|r| r.p75),
                "max_delay": round3(rs.iter().map(|r| r.max_delay).fold(0.0, f64::max)),
                "replications": rs.len(),
                "unstable": rs.iter().filter(|r| !r.stable).count(),
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::Value::Array(list)).unwrap()
}
