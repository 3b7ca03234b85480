//! Scenario configuration: a line-oriented `key = value` format grouped in
//! `[section]` blocks.
//!
//! ```text
//! [scenario]
//! preset = table2
//! n_steps = 1000
//!
//! [integrator]
//! scheme = molly_r
//! h = 0.05
//! ```
//!
//! The preset fills every key; the remaining lines override it. `#` starts a
//! comment. Unknown sections or keys, duplicates and unparsable values are
//! errors that name the line and key.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rpmd_core::{Scheme, TruncationMode};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Table2,
    Table3,
    Table4,
    Fig1,
    Fig3,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 6] =
        [Preset::Table2, Preset::Table3, Preset::Table4, Preset::Fig1, Preset::Fig3, Preset::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table2 => "table2",
            Preset::Table3 => "table3",
            Preset::Table4 => "table4",
            Preset::Fig1 => "fig1",
            Preset::Fig3 => "fig3",
            Preset::Custom => "custom",
        }
    }

    /// Full configuration of the preset.
    pub fn defaults(self) -> ScenarioConfig {
        let base = ScenarioConfig {
            preset: self,
            n_steps: 10_000,
            record_every: 1,
            seed: 1,
            output: None,
            molecules: 8,
            beads: 16,
            cell_edge: water_cell_edge(8),
            beta: 1.0,
            temperature: 1.0,
            truncation: TruncationMode::None,
            r_cut: 8.0,
            delta_r: 4.5,
            split: false,
            nonsmooth_split_radius: None,
            scheme: Scheme::ImpulseR,
            h: 0.02,
            delta_h: 0.02,
            mollify: false,
            tol_g: 1e-10,
            tol_f: 1e-10,
            max_iter: 100,
        };
        let table4 = ScenarioConfig {
            molecules: 27,
            beads: 4,
            cell_edge: water_cell_edge(27),
            truncation: TruncationMode::Cutoff,
            split: true,
            scheme: Scheme::Mts,
            h: 0.1,
            delta_h: 0.05,
            n_steps: 2500,
            ..base.clone()
        };
        match self {
            Preset::Table2 | Preset::Custom => base,
            Preset::Table3 => ScenarioConfig {
                beads: 8,
                truncation: TruncationMode::NearestImage,
                scheme: Scheme::RattleI,
                h: 0.02,
                delta_h: 0.002,
                n_steps: 12_500,
                ..base
            },
            Preset::Table4 => table4,
            Preset::Fig1 => ScenarioConfig { h: 0.125, delta_h: 0.125, n_steps: 2000, ..base },
            Preset::Fig3 => {
                ScenarioConfig { nonsmooth_split_radius: Some(5.75), n_steps: 2000, preset: Preset::Fig3, ..table4 }
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}` (expected table2, table3, table4, fig1, fig3 or custom)"))
    }
}

/// Edge of a cubic cell holding `n` water molecules at 0.998 g/cm^3, in
/// angstrom.
pub fn water_cell_edge(n: usize) -> f64 {
    const MOLAR_MASS: f64 = 18.0153;
    const AVOGADRO_PER_A3: f64 = 0.602_214_076; // g/cm^3 -> amu/A^3
    let volume = n as f64 * MOLAR_MASS / (0.998 * AVOGADRO_PER_A3);
    volume.cbrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub preset: Preset,
    pub n_steps: usize,
    pub record_every: usize,
    pub seed: u64,
    pub output: Option<String>,
    pub molecules: usize,
    pub beads: usize,
    pub cell_edge: f64,
    pub beta: f64,
    pub temperature: f64,
    pub truncation: TruncationMode,
    pub r_cut: f64,
    pub delta_r: f64,
    pub split: bool,
    pub nonsmooth_split_radius: Option<f64>,
    pub scheme: Scheme,
    pub h: f64,
    pub delta_h: f64,
    pub mollify: bool,
    pub tol_g: f64,
    pub tol_f: f64,
    pub max_iter: usize,
}

/// `(section, key)` pairs in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "preset"),
    ("scenario", "n_steps"),
    ("scenario", "record_every"),
    ("scenario", "seed"),
    ("scenario", "output"),
    ("system", "molecules"),
    ("system", "beads"),
    ("system", "cell_edge"),
    ("system", "beta"),
    ("system", "temperature"),
    ("forcefield", "truncation"),
    ("forcefield", "r_cut"),
    ("forcefield", "delta_r"),
    ("forcefield", "split"),
    ("forcefield", "nonsmooth_split_radius"),
    ("integrator", "scheme"),
    ("integrator", "h"),
    ("integrator", "delta_h"),
    ("integrator", "mollify"),
    ("constraints", "tol_g"),
    ("constraints", "tol_f"),
    ("constraints", "max_iter"),
];

pub fn truncation_name(mode: TruncationMode) -> &'static str {
    match mode {
        TruncationMode::None => "none",
        TruncationMode::NearestImage => "nearest_image",
        TruncationMode::Cutoff => "cutoff",
    }
}

fn parse_truncation(s: &str) -> Result<TruncationMode, String> {
    match s {
        "none" => Ok(TruncationMode::None),
        "nearest_image" => Ok(TruncationMode::NearestImage),
        "cutoff" => Ok(TruncationMode::Cutoff),
        _ => Err(format!("unknown truncation `{s}` (expected none, nearest_image or cutoff)")),
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|_| format!("cannot parse `{s}`"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found `{s}`")),
    }
}

fn parse_optional_f64(s: &str) -> Result<Option<f64>, String> {
    if s == "none" {
        Ok(None)
    } else {
        parse_num(s).map(Some)
    }
}

impl ScenarioConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "preset" => {}
            "n_steps" => self.n_steps = parse_num(value)?,
            "record_every" => self.record_every = parse_num(value)?,
            "seed" => self.seed = parse_num(value)?,
            "output" => self.output = if value == "none" { None } else { Some(value.to_string()) },
            "molecules" => self.molecules = parse_num(value)?,
            "beads" => self.beads = parse_num(value)?,
            "cell_edge" => self.cell_edge = parse_num(value)?,
            "beta" => self.beta = parse_num(value)?,
            "temperature" => self.temperature = parse_num(value)?,
            "truncation" => self.truncation = parse_truncation(value)?,
            "r_cut" => self.r_cut = parse_num(value)?,
            "delta_r" => self.delta_r = parse_num(value)?,
            "split" => self.split = parse_bool(value)?,
            "nonsmooth_split_radius" => self.nonsmooth_split_radius = parse_optional_f64(value)?,
            "scheme" => self.scheme = value.parse().map_err(|_| format!("unknown scheme `{value}`"))?,
            "h" => self.h = parse_num(value)?,
            "delta_h" => self.delta_h = parse_num(value)?,
            "mollify" => self.mollify = parse_bool(value)?,
            "tol_g" => self.tol_g = parse_num(value)?,
            "tol_f" => self.tol_f = parse_num(value)?,
            "max_iter" => self.max_iter = parse_num(value)?,
            _ => return Err("unknown key".to_string()),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "preset" => self.preset.to_string(),
            "n_steps" => self.n_steps.to_string(),
            "record_every" => self.record_every.to_string(),
            "seed" => self.seed.to_string(),
            "output" => self.output.clone().unwrap_or_else(|| "none".to_string()),
            "molecules" => self.molecules.to_string(),
            "beads" => self.beads.to_string(),
            "cell_edge" => self.cell_edge.to_string(),
            "beta" => self.beta.to_string(),
            "temperature" => self.temperature.to_string(),
            "truncation" => truncation_name(self.truncation).to_string(),
            "r_cut" => self.r_cut.to_string(),
            "delta_r" => self.delta_r.to_string(),
            "split" => self.split.to_string(),
            "nonsmooth_split_radius" => {
                self.nonsmooth_split_radius.map_or_else(|| "none".to_string(), |r| r.to_string())
            }
            "scheme" => self.scheme.to_string(),
            "h" => self.h.to_string(),
            "delta_h" => self.delta_h.to_string(),
            "mollify" => self.mollify.to_string(),
            "tol_g" => self.tol_g.to_string(),
            "tol_f" => self.tol_f.to_string(),
            "max_iter" => self.max_iter.to_string(),
            _ => unreachable!("key list and serializer disagree"),
        }
    }

    /// Parses a configuration. Syntax errors name the line; value errors
    /// name the line and key.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut section: Option<String> = None;
        let mut entries: Vec<(usize, &str, String)> = Vec::new();
        let mut preset = Preset::Custom;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Syntax { line: line_no, message: "unterminated section header".into() })?
                    .trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(CliError::Syntax { line: line_no, message: format!("unknown section `{name}`") });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Syntax { line: line_no, message: "expected `key = value`".into() })?;
            let (key, value) = (key.trim(), value.trim().to_string());
            let sec = section
                .as_deref()
                .ok_or_else(|| CliError::Syntax { line: line_no, message: "key outside of a section".into() })?;
            let Some(&(_, known)) = KEYS.iter().find(|(s, k)| *s == sec && *k == key) else {
                return Err(CliError::Key {
                    line: line_no,
                    key: key.to_string(),
                    message: format!("unknown key in [{sec}]"),
                });
            };
            if entries.iter().any(|(_, k, _)| *k == known) {
                return Err(CliError::Key { line: line_no, key: key.to_string(), message: "duplicate key".into() });
            }
            if known == "preset" {
                preset =
                    value.parse().map_err(|message| CliError::Key { line: line_no, key: key.to_string(), message })?;
            }
            entries.push((line_no, known, value));
        }
        let mut config = preset.defaults();
        for (line, key, value) in entries {
            config.apply(key, &value).map_err(|message| CliError::Key { line, key: key.to_string(), message })?;
        }
        Ok(config)
    }

    /// Writes every key explicitly, so parsing the output reproduces `self`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for &(section, key) in KEYS {
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    /// Semantic checks beyond parsing.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail =
            |key: &str, message: &str| Err(CliError::Invalid { key: key.to_string(), message: message.to_string() });
        if self.molecules == 0 {
            return fail("molecules", "must be at least 1");
        }
        if self.beads == 0 {
            return fail("beads", "must be at least 1");
        }
        if self.record_every == 0 {
            return fail("record_every", "must be at least 1");
        }
        if !(self.cell_edge > 0.0 && self.cell_edge.is_finite()) {
            return fail("cell_edge", "must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta", "must be positive");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return fail("temperature", "must be non-negative");
        }
        if !(self.tol_g > 0.0 && self.tol_f > 0.0) {
            return fail("tol_g", "tolerances must be positive");
        }
        if self.max_iter == 0 {
            return fail("max_iter", "must be at least 1");
        }
        if self.mollify && self.scheme != Scheme::Mts {
            return fail("mollify", "only applies to the mts scheme");
        }
        Ok(())
    }
}
