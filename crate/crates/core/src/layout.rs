//! Scalp channel layout and the 16x16 grid cells used for correlation
//! plane projection. The reference 66-site layout (30 EEG + 36 fNIRS)
//! ships as a versioned data file.

use crate::error::{Result, ScdmError};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

pub const GRID: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "fNIRS")]
    Fnirs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSite {
    pub name: String,
    /// Unit-disc scalp coordinates.
    pub x: f64,
    pub y: f64,
    pub grid_row: usize,
    pub grid_col: usize,
    pub modality: Modality,
}

/// Sites of one modality, in channel order.
#[derive(Debug, Clone)]
pub struct ChannelLayout {
    pub modality: Modality,
    pub sites: Vec<ChannelSite>,
}

impl ChannelLayout {
    pub fn new(modality: Modality, sites: Vec<ChannelSite>) -> Result<Self> {
        let mut cells = HashSet::new();
        for s in &sites {
            if s.modality != modality {
                return Err(ScdmError::invalid(format!(
                    "site {} has wrong modality",
                    s.name
                )));
            }
            if s.grid_row >= GRID || s.grid_col >= GRID {
                return Err(ScdmError::invalid(format!(
                    "site {} grid cell ({}, {}) outside [0, {GRID})^2",
                    s.name, s.grid_row, s.grid_col
                )));
            }
            if s.x * s.x + s.y * s.y >= 1.0 {
                return Err(ScdmError::invalid(format!(
                    "site {} is outside the unit disc",
                    s.name
                )));
            }
            if !cells.insert((s.grid_row, s.grid_col)) {
                return Err(ScdmError::invalid(format!(
                    "duplicate grid cell ({}, {}) within one modality",
                    s.grid_row, s.grid_col
                )));
            }
        }
        Ok(ChannelLayout { modality, sites })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.sites.iter().map(|s| s.name.clone()).collect()
    }

    /// Euclidean-nearest site index in `self` for the given coordinates,
    /// ties broken by lowest channel index.
    pub fn nearest_site(&self, x: f64, y: f64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.sites.iter().enumerate() {
            let d = (s.x - x).powi(2) + (s.y - y).powi(2);
            if d < best_d - 1e-12 {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Chebyshev distance between two sites on the 16x16 grid.
pub fn grid_chebyshev(a: &ChannelSite, b: &ChannelSite) -> usize {
    let dr = (a.grid_row as isize - b.grid_row as isize).unsigned_abs();
    let dc = (a.grid_col as isize - b.grid_col as isize).unsigned_abs();
    dr.max(dc)
}

#[derive(Debug, Clone)]
pub struct Layouts {
    pub eeg: ChannelLayout,
    pub fnirs: ChannelLayout,
}

#[derive(Deserialize)]
struct LayoutFile {
    #[allow(dead_code)]
    version: u32,
    grid: usize,
    sites: Vec<ChannelSite>,
}

fn parse_layout(text: &str) -> Result<Layouts> {
    let file: LayoutFile = serde_json::from_str(text)?;
    if file.grid != GRID {
        return Err(ScdmError::invalid(format!(
            "layout grid {} != {GRID}",
            file.grid
        )));
    }
    let (eeg, fnirs): (Vec<_>, Vec<_>) = file
        .sites
        .into_iter()
        .partition(|s| s.modality == Modality::Eeg);
    Ok(Layouts {
        eeg: ChannelLayout::new(Modality::Eeg, eeg)?,
        fnirs: ChannelLayout::new(Modality::Fnirs, fnirs)?,
    })
}

/// The built-in reference layout: 30 EEG + 36 fNIRS sites.
pub fn reference_layouts() -> Layouts {
    parse_layout(include_str!("../data/layout66.json")).expect("embedded layout is valid")
}

pub fn load_layouts(path: impl AsRef<Path>) -> Result<Layouts> {
    parse_layout(&std::fs::read_to_string(path)?)
}
