//! Scenario configuration, single-run execution and protocol-comparison
//! sweeps.
//!
//! Config files are flat `key=value` text, one pair per line, `#`
//! comments allowed. Unknown keys and out-of-range values are rejected
//! with an error naming the key and line. Absent keys fall back to the
//! reference scenario: 50 nodes in a 1500 m by 300 m arena for 100 s,
//! 250 m radio range at 2 Mb/s, random waypoint movement.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::protocol::ProtocolMode;
use crate::traffic::MetricsLedger;
use crate::world::World;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown config key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("config key '{key}': {reason}")]
    BadValue { key: String, reason: String },
}

/// Everything one run needs. Field units are embedded in the key names
/// exposed to config files.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub nodes: u32,
    pub duration_s: f64,
    pub seed: u64,
    pub protocol: ProtocolMode,

    // mobility
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause_time_s: f64,
    /// Explicit `x,y` placements (semicolon separated). When non-empty
    /// there must be exactly one per node; nodes then hold their spot
    /// until a first waypoint event at t=0 applies the normal
    /// pause-then-move cycle.
    pub positions: Vec<(f64, f64)>,

    // radio
    pub tx_power_w: f64,
    pub antenna_gain: f64,
    pub wavelength_m: f64,
    pub system_loss: f64,
    pub range_m: f64,
    pub warn_fraction: f64,
    pub bitrate_bps: f64,
    pub jitter_max_s: f64,

    // routing
    pub route_lifetime_s: f64,
    pub blacklist_ttl_s: f64,
    pub discovery_timeout_s: f64,
    pub discovery_attempts: u32,
    pub buffer_cap: u32,

    // traffic
    pub cbr_flows: u32,
    pub cbr_packet_size_b: u32,
    pub cbr_rate_pps: f64,
    pub cbr_start_s: f64,
    /// Defaults to the run duration when unset.
    pub cbr_stop_s: Option<f64>,
    /// Explicit `src:dest` flow endpoints (semicolon separated);
    /// overrides `cbr_flows` when non-empty.
    pub cbr_pairs: Vec<(u32, u32)>,
}

impl Default for ScenarioConfig {
    fn default() -> ScenarioConfig {
        ScenarioConfig {
            nodes: 50,
            duration_s: 100.0,
            seed: 1,
            protocol: ProtocolMode::Aomdv,
            area_width_m: 1500.0,
            area_height_m: 300.0,
            speed_min_mps: 1.0,
            speed_max_mps: 20.0,
            pause_time_s: 0.0,
            positions: Vec::new(),
            tx_power_w: 0.28183815,
            antenna_gain: 1.0,
            wavelength_m: 0.328,
            system_loss: 1.0,
            range_m: 250.0,
            warn_fraction: 0.9,
            bitrate_bps: 2.0e6,
            jitter_max_s: 1.0e-3,
            route_lifetime_s: 10.0,
            blacklist_ttl_s: 2.0,
            discovery_timeout_s: 1.0,
            discovery_attempts: 3,
            buffer_cap: 64,
            cbr_flows: 10,
            cbr_packet_size_b: 512,
            cbr_rate_pps: 4.0,
            cbr_start_s: 0.0,
            cbr_stop_s: None,
            cbr_pairs: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    /// Parses a config file on top of the defaults and validates it.
    pub fn from_file(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_contents(&text)
    }

    /// Parses config text on top of the defaults and validates it.
    pub fn from_str_contents(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let mut config = ScenarioConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: stripped.to_string(),
            })?;
            config.apply(key.trim(), value.trim(), line)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies repeatable `key=value` overrides (the CLI's `--set`),
    /// then re-validates.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for (idx, item) in overrides.iter().enumerate() {
            let (key, value) = item.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                text: item.clone(),
            })?;
            self.apply(key.trim(), value.trim(), idx + 1)?;
        }
        self.validate()
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("cannot parse '{value}': {e}"),
            })
        }

        match key {
            "nodes" => self.nodes = parse(key, value)?,
            "duration_s" => self.duration_s = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "protocol" => {
                self.protocol = value.parse().map_err(|e| ConfigError::BadValue {
                    key: key.to_string(),
                    reason: e,
                })?
            }
            "area_width_m" => self.area_width_m = parse(key, value)?,
            "area_height_m" => self.area_height_m = parse(key, value)?,
            "speed_min_mps" => self.speed_min_mps = parse(key, value)?,
            "speed_max_mps" => self.speed_max_mps = parse(key, value)?,
            "pause_time_s" => self.pause_time_s = parse(key, value)?,
            "positions" => self.positions = parse_positions(value)?,
            "tx_power_w" => self.tx_power_w = parse(key, value)?,
            "antenna_gain" => self.antenna_gain = parse(key, value)?,
            "wavelength_m" => self.wavelength_m = parse(key, value)?,
            "system_loss" => self.system_loss = parse(key, value)?,
            "range_m" => self.range_m = parse(key, value)?,
            "warn_fraction" => self.warn_fraction = parse(key, value)?,
            "bitrate_bps" => self.bitrate_bps = parse(key, value)?,
            "jitter_max_s" => self.jitter_max_s = parse(key, value)?,
            "route_lifetime_s" => self.route_lifetime_s = parse(key, value)?,
            "blacklist_ttl_s" => self.blacklist_ttl_s = parse(key, value)?,
            "discovery_timeout_s" => self.discovery_timeout_s = parse(key, value)?,
            "discovery_attempts" => self.discovery_attempts = parse(key, value)?,
            "buffer_cap" => self.buffer_cap = parse(key, value)?,
            "cbr_flows" => self.cbr_flows = parse(key, value)?,
            "cbr_packet_size_b" => self.cbr_packet_size_b = parse(key, value)?,
            "cbr_rate_pps" => self.cbr_rate_pps = parse(key, value)?,
            "cbr_start_s" => self.cbr_start_s = parse(key, value)?,
            "cbr_stop_s" => self.cbr_stop_s = Some(parse(key, value)?),
            "cbr_pairs" => self.cbr_pairs = parse_pairs(value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Range-checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(cond: bool, key: &str, reason: &str) -> Result<(), ConfigError> {
            if cond {
                Ok(())
            } else {
                Err(ConfigError::BadValue {
                    key: key.to_string(),
                    reason: reason.to_string(),
                })
            }
        }

        check(self.duration_s > 0.0, "duration_s", "must be positive")?;
        check(self.area_width_m > 0.0, "area_width_m", "must be positive")?;
        check(
            self.area_height_m > 0.0,
            "area_height_m",
            "must be positive",
        )?;
        check(
            self.speed_min_mps > 0.0,
            "speed_min_mps",
            "must be positive",
        )?;
        check(
            self.speed_max_mps >= self.speed_min_mps,
            "speed_max_mps",
            "must be at least speed_min_mps",
        )?;
        check(self.pause_time_s >= 0.0, "pause_time_s", "must not be negative")?;
        check(self.tx_power_w > 0.0, "tx_power_w", "must be positive")?;
        check(self.antenna_gain > 0.0, "antenna_gain", "must be positive")?;
        check(self.wavelength_m > 0.0, "wavelength_m", "must be positive")?;
        check(self.system_loss >= 1.0, "system_loss", "must be at least 1")?;
        check(self.range_m > 1.0, "range_m", "must exceed 1 m")?;
        check(
            self.warn_fraction > 0.0 && self.warn_fraction <= 1.0,
            "warn_fraction",
            "must lie in (0, 1]",
        )?;
        check(self.bitrate_bps > 0.0, "bitrate_bps", "must be positive")?;
        check(self.jitter_max_s >= 0.0, "jitter_max_s", "must not be negative")?;
        check(
            self.route_lifetime_s > 0.0,
            "route_lifetime_s",
            "must be positive",
        )?;
        check(
            self.blacklist_ttl_s > 0.0,
            "blacklist_ttl_s",
            "must be positive",
        )?;
        check(
            self.discovery_timeout_s > 0.0,
            "discovery_timeout_s",
            "must be positive",
        )?;
        check(
            self.discovery_attempts >= 1,
            "discovery_attempts",
            "must be at least 1",
        )?;
        check(self.buffer_cap >= 1, "buffer_cap", "must be at least 1")?;
        check(
            self.cbr_packet_size_b >= 1,
            "cbr_packet_size_b",
            "must be at least 1 byte",
        )?;
        check(self.cbr_rate_pps > 0.0, "cbr_rate_pps", "must be positive")?;
        check(self.cbr_start_s >= 0.0, "cbr_start_s", "must not be negative")?;
        if let Some(stop) = self.cbr_stop_s {
            check(stop > self.cbr_start_s, "cbr_stop_s", "must exceed cbr_start_s")?;
        }
        if !self.positions.is_empty() {
            check(
                self.positions.len() == self.nodes as usize,
                "positions",
                "must list exactly one x,y pair per node",
            )?;
            for &(x, y) in &self.positions {
                check(
                    x >= 0.0 && x <= self.area_width_m && y >= 0.0 && y <= self.area_height_m,
                    "positions",
                    "every position must lie inside the arena",
                )?;
            }
        }
        for &(src, dest) in &self.cbr_pairs {
            check(
                src < self.nodes && dest < self.nodes,
                "cbr_pairs",
                "flow endpoints must name existing nodes",
            )?;
            check(src != dest, "cbr_pairs", "flow source and destination must differ")?;
        }
        Ok(())
    }
}

fn parse_positions(value: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(';')
        .map(|item| {
            let bad = || ConfigError::BadValue {
                key: "positions".to_string(),
                reason: format!("expected x,y but got '{item}'"),
            };
            let (x, y) = item.split_once(',').ok_or_else(bad)?;
            Ok((
                x.trim().parse().map_err(|_| bad())?,
                y.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn parse_pairs(value: &str) -> Result<Vec<(u32, u32)>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(';')
        .map(|item| {
            let bad = || ConfigError::BadValue {
                key: "cbr_pairs".to_string(),
                reason: format!("expected src:dest but got '{item}'"),
            };
            let (s, d) = item.split_once(':').ok_or_else(bad)?;
            Ok((
                s.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// Header of every CSV emitted by this crate, single runs and sweeps
/// alike.
pub const CSV_HEADER: &str =
    "protocol,seed,pause_time_s,nodes,pdr,avg_delay_s,overhead,throughput_bps,discoveries,wrng_sent";

/// Outcome of one deterministic run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub ledger: MetricsLedger,
    pub csv_row: String,
}

fn csv_row(config: &ScenarioConfig, ledger: &MetricsLedger) -> String {
    format!(
        "{},{},{},{},{:.6},{:.6},{:.6},{:.3},{},{}",
        config.protocol,
        config.seed,
        config.pause_time_s,
        config.nodes,
        ledger.pdr(),
        ledger.avg_delay_s(),
        ledger.overhead(),
        ledger.throughput_bps(config.duration_s),
        ledger.discoveries_initiated,
        ledger.wrng_sent,
    )
}

/// Runs one scenario to completion.
pub fn run_once(config: &ScenarioConfig) -> RunResult {
    let mut world = World::new(config);
    world.run_to_end();
    let ledger = world.into_ledger();
    let csv_row = csv_row(config, &ledger);
    RunResult { ledger, csv_row }
}

/// Like [`run_once`] but also returns the protocol event trace.
pub fn run_once_with_trace(config: &ScenarioConfig) -> (RunResult, String) {
    let mut world = World::new(config);
    world.enable_trace();
    world.run_to_end();
    let trace = world.take_trace().unwrap_or_default();
    let ledger = world.into_ledger();
    let csv_row = csv_row(config, &ledger);
    (RunResult { ledger, csv_row }, trace)
}

/// One row of a comparison sweep.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub protocol: ProtocolMode,
    pub seed: u64,
    pub pause_time_s: f64,
    pub result: RunResult,
}

/// Seed-averaged metrics for one (pause time, protocol) sweep point.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub pause_time_s: f64,
    pub protocol: ProtocolMode,
    pub pdr: f64,
    pub avg_delay_s: f64,
    pub overhead: f64,
    pub throughput_bps: f64,
    pub discoveries: f64,
    pub wrng_sent: f64,
}

/// Output of [`run_compare`]: per-run rows in deterministic
/// `(pause_time, seed, protocol)` order plus per-point means.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub summary: Vec<SummaryRow>,
}

impl CompareReport {
    /// Long-form CSV: header plus one row per run.
    pub fn long_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.result.csv_row);
            out.push('\n');
        }
        out
    }

    /// Aligned text table of per-pause-time means, seeds collapsed.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>8}  {:<8} {:>8} {:>12} {:>10} {:>14} {:>12} {:>8}\n",
            "pause_s", "protocol", "pdr", "delay_s", "overhead", "thrpt_bps", "discoveries", "wrng"
        ));
        for row in &self.summary {
            out.push_str(&format!(
                "{:>8}  {:<8} {:>8.4} {:>12.6} {:>10.4} {:>14.1} {:>12.2} {:>8.1}\n",
                row.pause_time_s,
                row.protocol.to_string(),
                row.pdr,
                row.avg_delay_s,
                row.overhead,
                row.throughput_bps,
                row.discoveries,
                row.wrng_sent,
            ));
        }
        out
    }
}

/// Runs both protocols for every `(pause_time, seed)` pair. Sweep points
/// execute in parallel and share nothing; results are merged in input
/// order regardless of completion order.
pub fn run_compare(
    base: &ScenarioConfig,
    pause_times: &[f64],
    seeds: &[u64],
) -> CompareReport {
    assert!(
        !pause_times.is_empty() && !seeds.is_empty(),
        "run_compare needs at least one pause time and one seed"
    );
    let mut jobs = Vec::new();
    for &pause in pause_times {
        for &seed in seeds {
            for protocol in [ProtocolMode::Aomdv, ProtocolMode::Eaomdv] {
                let mut config = base.clone();
                config.pause_time_s = pause;
                config.seed = seed;
                config.protocol = protocol;
                jobs.push(config);
            }
        }
    }
    let results: Vec<RunResult> = jobs.par_iter().map(run_once).collect();
    let rows: Vec<CompareRow> = jobs
        .iter()
        .zip(results)
        .map(|(config, result)| CompareRow {
            protocol: config.protocol,
            seed: config.seed,
            pause_time_s: config.pause_time_s,
            result,
        })
        .collect();

    let mut summary = Vec::new();
    for &pause in pause_times {
        for protocol in [ProtocolMode::Aomdv, ProtocolMode::Eaomdv] {
            let group: Vec<&CompareRow> = rows
                .iter()
                .filter(|r| r.pause_time_s == pause && r.protocol == protocol)
                .collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&CompareRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            summary.push(SummaryRow {
                pause_time_s: pause,
                protocol,
                pdr: mean(&|r| r.result.ledger.pdr()),
                avg_delay_s: mean(&|r| r.result.ledger.avg_delay_s()),
                overhead: mean(&|r| r.result.ledger.overhead()),
                throughput_bps: mean(&|r| r.result.ledger.throughput_bps(base.duration_s)),
                discoveries: mean(&|r| r.result.ledger.discoveries_initiated as f64),
                wrng_sent: mean(&|r| r.result.ledger.wrng_sent as f64),
            });
        }
    }
    CompareReport { rows, summary }
}
