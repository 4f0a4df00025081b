//! Population datasets: per-tool series of (sliding distance, roughness)
//! pairs with a visibility flag on every label.
//!
//! The CSV form is `tool_id,sliding_distance_km,roughness_um,revealed`, one
//! row per observation, `revealed` in `{0,1}`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["tool_id", "sliding_distance_km", "roughness_um", "revealed"];

/// Tool identifier as it appears in the dataset (1-based in generated data).
pub type ToolId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Sliding distance in km.
    pub x: f64,
    /// Surface roughness in μm.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSeries {
    pub tool_id: ToolId,
    pub observations: Vec<Observation>,
    pub revealed: Vec<bool>,
}

impl ToolSeries {
    pub fn new(tool_id: ToolId, observations: Vec<Observation>, revealed: Vec<bool>) -> Result<Self> {
        let series = ToolSeries {
            tool_id,
            observations,
            revealed,
        };
        series.validate()?;
        Ok(series)
    }

    /// Fully revealed series.
    pub fn revealed_all(tool_id: ToolId, observations: Vec<Observation>) -> Result<Self> {
        let revealed = vec![true; observations.len()];
        Self::new(tool_id, observations, revealed)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed.iter().filter(|&&r| r).count()
    }

    pub fn revealed_observations(&self) -> impl Iterator<Item = &Observation> + '_ {
        self.observations
            .iter()
            .zip(&self.revealed)
            .filter_map(|(o, &r)| r.then_some(o))
    }

    fn validate(&self) -> Result<()> {
        if self.revealed.len() != self.observations.len() {
            return Err(Error::InvalidDataset(format!(
                "tool {}: revealed mask has {} entries for {} observations",
                self.tool_id,
                self.revealed.len(),
                self.observations.len()
            )));
        }
        for (i, o) in self.observations.iter().enumerate() {
            if !(o.x.is_finite() && o.x >= 0.0) {
                return Err(Error::InvalidDataset(format!(
                    "tool {}: sliding distance {} at index {i} must be finite and >= 0",
                    self.tool_id, o.x
                )));
            }
            if !o.y.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "tool {}: roughness at index {i} is not finite",
                    self.tool_id
                )));
            }
        }
        if self.observations.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(Error::InvalidDataset(format!(
                "tool {}: sliding distances must be strictly increasing",
                self.tool_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationDataset {
    pub tools: Vec<ToolSeries>,
    /// Nominal sliding distance between measurement opportunities (km).
    pub step_km: f64,
}

impl PopulationDataset {
    pub fn new(tools: Vec<ToolSeries>, step_km: f64) -> Result<Self> {
        if tools.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(step_km.is_finite() && step_km > 0.0) {
            return Err(Error::InvalidDataset(format!("step_km must be > 0, got {step_km}")));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tools {
            t.validate()?;
            if !seen.insert(t.tool_id) {
                return Err(Error::InvalidDataset(format!("duplicate tool id {}", t.tool_id)));
            }
        }
        Ok(PopulationDataset { tools, step_km })
    }

    pub fn n_tools(&self) -> usize {
        self.tools.len()
    }

    pub fn total_observations(&self) -> usize {
        self.tools.iter().map(ToolSeries::len).sum()
    }

    pub fn revealed_count(&self) -> usize {
        self.tools.iter().map(ToolSeries::revealed_count).sum()
    }

    pub fn tool(&self, id: ToolId) -> Option<&ToolSeries> {
        self.tools.iter().find(|t| t.tool_id == id)
    }

    pub fn tool_mut(&mut self, id: ToolId) -> Option<&mut ToolSeries> {
        self.tools.iter_mut().find(|t| t.tool_id == id)
    }

    pub fn tool_ids(&self) -> Vec<ToolId> {
        self.tools.iter().map(|t| t.tool_id).collect()
    }

    /// Copy with every label revealed.
    pub fn fully_revealed(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.tools {
            t.revealed.iter_mut().for_each(|r| *r = true);
        }
        out
    }

    /// Copy restricted to the given tools, in the given order.
    pub fn subset(&self, ids: &[ToolId]) -> Result<Self> {
        let tools = ids
            .iter()
            .map(|&id| self.tool(id).cloned().ok_or(Error::UnknownTool(id)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tools, self.step_km)
    }

    /// Hash over tool ids, sliding distances and labels (revealed or not).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.step_km.to_le_bytes());
        for t in &self.tools {
            h.update(t.tool_id.to_le_bytes());
            for o in &t.observations {
                h.update(o.x.to_le_bytes());
                h.update(o.y.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Hash of what a model fitted to this dataset can see: revealed labels only.
    pub fn revealed_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in &self.tools {
            h.update(t.tool_id.to_le_bytes());
            h.update((t.revealed_count() as u64).to_le_bytes());
            for o in t.revealed_observations() {
                h.update(o.x.to_le_bytes());
                h.update(o.y.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for t in &self.tools {
            for (o, &r) in t.observations.iter().zip(&t.revealed) {
                w.write_record([
                    t.tool_id.to_string(),
                    o.x.to_string(),
                    o.y.to_string(),
                    u8::from(r).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parse the dataset CSV. When `step_km` is `None` it is inferred as the
    /// median spacing between consecutive sliding distances.
    pub fn read_csv<R: Read>(reader: R, step_km: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{}`", CSV_HEADER.join(",")),
            });
        }
        let mut groups: BTreeMap<ToolId, (usize, Vec<Observation>, Vec<bool>)> = BTreeMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Parse {
                    line,
                    message: e.to_string(),
                }
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::Parse { line, message };
            if record.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", record.len())));
            }
            let tool_id: ToolId = record[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid tool_id `{}`", &record[0])))?;
            let x: f64 = record[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid sliding_distance_km `{}`", &record[1])))?;
            let y: f64 = record[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid roughness_um `{}`", &record[2])))?;
            let revealed = match record[3].trim() {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("revealed must be 0 or 1, got `{other}`"))),
            };
            if !x.is_finite() || x < 0.0 || !y.is_finite() {
                return Err(bad("values must be finite with sliding distance >= 0".into()));
            }
            let order = groups.len();
            let entry = groups.entry(tool_id).or_insert_with(|| (order, Vec::new(), Vec::new()));
            if entry.1.last().is_some_and(|prev| prev.x >= x) {
                return Err(bad(format!("tool {tool_id}: sliding distance must increase")));
            }
            entry.1.push(Observation { x, y });
            entry.2.push(revealed);
        }
        let mut ordered: Vec<_> = groups.into_iter().collect();
        ordered.sort_by_key(|(_, (order, _, _))| *order);
        let tools = ordered
            .into_iter()
            .map(|(id, (_, obs, rev))| ToolSeries::new(id, obs, rev))
            .collect::<Result<Vec<_>>>()?;
        let step = match step_km {
            Some(s) => s,
            None => infer_step(&tools)
                .ok_or_else(|| Error::InvalidDataset("cannot infer step_km from data".into()))?,
        };
        Self::new(tools, step)
    }

    pub fn read_csv_path(path: impl AsRef<Path>, step_km: Option<f64>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), step_km)
    }
}

fn infer_step(tools: &[ToolSeries]) -> Option<f64> {
    let mut gaps: Vec<f64> = tools
        .iter()
        .flat_map(|t| t.observations.windows(2).map(|w| w[1].x - w[0].x))
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    Some(gaps[gaps.len() / 2])
}
