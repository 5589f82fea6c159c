//! Taxi-trip ingestion: CSV parsing with row diagnostics, AM/PM filtering,
//! aggregation into weighted origin-destination graphs, node-subset
//! selection, and a deterministic Fruchterman-Reingold layout.

use crate::error::{Error, Result};
use crate::graph::{MobilityGraph, Modality, Period};
use chrono::NaiveDateTime;
use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One parsed taxi trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripRecord {
    pub pickup_time: NaiveDateTime,
    pub dropoff_time: NaiveDateTime,
    pub pickup_zone: u32,
    pub dropoff_zone: u32,
}

impl TripRecord {
    /// Trip period, decided by the pickup hour: [0,12) is AM, [12,24) is PM.
    pub fn period(&self) -> Period {
        use chrono::Timelike;
        if self.pickup_time.time().hour() < 12 {
            Period::Am
        } else {
            Period::Pm
        }
    }
}

/// Trip duration in minutes, real-valued.
pub fn trip_duration_minutes(t: &TripRecord) -> f64 {
    (t.dropoff_time - t.pickup_time).num_seconds() as f64 / 60.0
}

/// CSV column names; defaults match the public NYC yellow-taxi schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnNames {
    pub pickup_datetime: String,
    pub dropoff_datetime: String,
    pub pickup_location: String,
    pub dropoff_location: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        ColumnNames {
            pickup_datetime: "tpep_pickup_datetime".into(),
            dropoff_datetime: "tpep_dropoff_datetime".into(),
            pickup_location: "PULocationID".into(),
            dropoff_location: "DOLocationID".into(),
        }
    }
}

/// Ingestion parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub n_nodes: usize,
    pub seed: u64,
    pub modality: Modality,
    pub min_duration_minutes: f64,
    pub max_duration_minutes: f64,
    #[serde(default)]
    pub columns: ColumnNames,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            n_nodes: 16,
            seed: 0,
            modality: Modality::AvgTravelTime,
            min_duration_minutes: 1.0,
            max_duration_minutes: 180.0,
            columns: ColumnNames::default(),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_nodes must be >= 2, got {}",
                self.n_nodes
            )));
        }
        if self.min_duration_minutes >= self.max_duration_minutes {
            return Err(Error::InvalidConfig(format!(
                "min duration {} must be below max duration {}",
                self.min_duration_minutes, self.max_duration_minutes
            )));
        }
        Ok(())
    }
}

/// A skipped input row and why.
#[derive(Debug, Clone, Serialize)]
pub struct RowDiagnostic {
    /// 1-based data row number (excluding the header).
    pub row: usize,
    pub reason: String,
}

/// Parse a trip CSV. Malformed rows are diagnosed and skipped; a missing
/// required header column is fatal.
pub fn parse_trips<R: Read>(
    reader: R,
    columns: &ColumnNames,
) -> Result<(Vec<TripRecord>, Vec<RowDiagnostic>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let pu_t = find(&columns.pickup_datetime)?;
    let do_t = find(&columns.dropoff_datetime)?;
    let pu_z = find(&columns.pickup_location)?;
    let do_z = find(&columns.dropoff_location)?;

    let mut trips = Vec::new();
    let mut diags = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                diags.push(RowDiagnostic {
                    row,
                    reason: format!("malformed CSV record: {e}"),
                });
                continue;
            }
        };
        match parse_row(&record, pu_t, do_t, pu_z, do_z) {
            Ok(t) => trips.push(t),
            Err(reason) => diags.push(RowDiagnostic { row, reason }),
        }
    }
    Ok((trips, diags))
}

fn parse_row(
    record: &csv::StringRecord,
    pu_t: usize,
    do_t: usize,
    pu_z: usize,
    do_z: usize,
) -> std::result::Result<TripRecord, String> {
    let field = |i: usize, what: &str| -> std::result::Result<&str, String> {
        match record.get(i) {
            Some(s) if !s.trim().is_empty() => Ok(s.trim()),
            _ => Err(format!("missing {what}")),
        }
    };
    let pickup_time = NaiveDateTime::parse_from_str(field(pu_t, "pickup datetime")?, TIMESTAMP_FORMAT)
        .map_err(|e| format!("unparseable pickup datetime: {e}"))?;
    let dropoff_time =
        NaiveDateTime::parse_from_str(field(do_t, "dropoff datetime")?, TIMESTAMP_FORMAT)
            .map_err(|e| format!("unparseable dropoff datetime: {e}"))?;
    let pickup_zone: u32 = field(pu_z, "pickup location ID")?
        .parse()
        .map_err(|e| format!("bad pickup location ID: {e}"))?;
    let dropoff_zone: u32 = field(do_z, "dropoff location ID")?
        .parse()
        .map_err(|e| format!("bad dropoff location ID: {e}"))?;
    if pickup_zone == 0 || dropoff_zone == 0 {
        return Err("location IDs must be positive".into());
    }
    if dropoff_time < pickup_time {
        return Err("negative duration (dropoff before pickup)".into());
    }
    Ok(TripRecord {
        pickup_time,
        dropoff_time,
        pickup_zone,
        dropoff_zone,
    })
}

/// Zones that appear (as pickup or dropoff) in at least one AM trip and at
/// least one PM trip, in ascending ID order.
pub fn qualifying_zones(trips: &[TripRecord]) -> Vec<u32> {
    let mut am = BTreeSet::new();
    let mut pm = BTreeSet::new();
    for t in trips {
        let set = match t.period() {
            Period::Am => &mut am,
            _ => &mut pm,
        };
        set.insert(t.pickup_zone);
        set.insert(t.dropoff_zone);
    }
    am.intersection(&pm).copied().collect()
}

/// Uniformly select `n` distinct zones common to AM and PM trips,
/// deterministic given `seed`.
pub fn select_common_nodes(trips: &[TripRecord], n: usize, seed: u64) -> Result<Vec<u32>> {
    let pool = qualifying_zones(trips);
    if pool.len() < n {
        return Err(Error::NotEnoughZones {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = sample(&mut rng, pool.len(), n);
    Ok(idx.iter().map(|i| pool[i]).collect())
}

/// Keep trips starting in `period` with duration inside `[min, max]` minutes.
pub fn filter_trips(
    trips: &[TripRecord],
    period: Period,
    min_duration: f64,
    max_duration: f64,
) -> Vec<TripRecord> {
    trips
        .iter()
        .filter(|t| {
            let d = trip_duration_minutes(t);
            (period == Period::Unspecified || t.period() == period)
                && d >= min_duration
                && d <= max_duration
        })
        .copied()
        .collect()
}

/// Aggregate filtered trips over the given zone subset into one graph.
/// Nodes are the zones in ascending ID order; both trip directions pool into
/// one undirected edge; self-loop trips are dropped. Node attributes start
/// at zero (layout is assigned separately).
pub fn build_mobility_graph(
    trips: &[TripRecord],
    zones: &[u32],
    modality: Modality,
    period: Period,
) -> Result<MobilityGraph> {
    let mut sorted: Vec<u32> = zones.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateZone(w[0]));
        }
    }
    let index: BTreeMap<u32, usize> = sorted.iter().enumerate().map(|(i, &z)| (z, i)).collect();
    let n = sorted.len();
    let mut sum = Array2::<f64>::zeros((n, n));
    let mut count = Array2::<f64>::zeros((n, n));
    for t in trips {
        if t.pickup_zone == t.dropoff_zone {
            continue;
        }
        let (Some(&i), Some(&j)) = (index.get(&t.pickup_zone), index.get(&t.dropoff_zone)) else {
            continue;
        };
        let d = trip_duration_minutes(t);
        sum[[i, j]] += d;
        sum[[j, i]] += d;
        count[[i, j]] += 1.0;
        count[[j, i]] += 1.0;
    }
    let adjacency = match modality {
        Modality::TripCount => count,
        Modality::AvgTravelTime => {
            Array2::from_shape_fn((n, n), |(i, j)| {
                if count[[i, j]] > 0.0 {
                    sum[[i, j]] / count[[i, j]]
                } else {
                    0.0
                }
            })
        }
    };
    Ok(MobilityGraph {
        node_ids: sorted,
        node_attrs: Array2::zeros((n, 2)),
        adjacency,
        modality,
        period,
        null_mask: vec![false; n],
    })
}

/// Classic spring layout: optimal distance k = sqrt(area/n) on a unit
/// square, attraction d^2/k scaled by edge weight, repulsion k^2/d between
/// all pairs, displacement capped by a linearly cooling temperature.
/// Deterministic given (graph, seed, iterations); final positions rescaled
/// to [-1, 1]^2.
pub fn layout_fruchterman_reingold(
    g: &MobilityGraph,
    seed: u64,
    iterations: usize,
) -> MobilityGraph {
    let n = g.n();
    let mut out = g.clone();
    if n == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
        .collect();
    if n > 1 {
        let k = (1.0 / n as f64).sqrt();
        let w_max = g
            .adjacency
            .iter()
            .fold(0.0f64, |m, &w| m.max(w))
            .max(f64::MIN_POSITIVE);
        let t0 = 0.1;
        for iter in 0..iterations {
            let temp = t0 * (1.0 - iter as f64 / iterations as f64);
            let mut disp = vec![[0.0f64; 2]; n];
            // repulsion between all pairs
            for i in 0..n {
                for j in (i + 1)..n {
                    let dx = pos[i][0] - pos[j][0];
                    let dy = pos[i][1] - pos[j][1];
                    let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                    let f = k * k / dist;
                    let (ux, uy) = (dx / dist, dy / dist);
                    disp[i][0] += ux * f;
                    disp[i][1] += uy * f;
                    disp[j][0] -= ux * f;
                    disp[j][1] -= uy * f;
                }
            }
            // attraction along edges, weight as strength
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = g.adjacency[[i, j]];
                    if w == 0.0 {
                        continue;
                    }
                    let dx = pos[i][0] - pos[j][0];
                    let dy = pos[i][1] - pos[j][1];
                    let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                    let f = dist * dist / k * (w / w_max);
                    let (ux, uy) = (dx / dist, dy / dist);
                    disp[i][0] -= ux * f;
                    disp[i][1] -= uy * f;
                    disp[j][0] += ux * f;
                    disp[j][1] += uy * f;
                }
            }
            for i in 0..n {
                let len = (disp[i][0] * disp[i][0] + disp[i][1] * disp[i][1])
                    .sqrt()
                    .max(1e-12);
                let cap = len.min(temp);
                pos[i][0] += disp[i][0] / len * cap;
                pos[i][1] += disp[i][1] / len * cap;
            }
        }
    }
    // rescale each axis to [-1, 1]
    for axis in 0..2 {
        let lo = pos.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let hi = pos.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
        let half = (hi - lo) / 2.0;
        let mid = (hi + lo) / 2.0;
        for p in pos.iter_mut() {
            p[axis] = if half > 0.0 { (p[axis] - mid) / half } else { 0.0 };
        }
    }
    let mut attrs = Array2::zeros((n, 2));
    for (i, p) in pos.iter().enumerate() {
        attrs[[i, 0]] = p[0];
        attrs[[i, 1]] = p[1];
    }
    out.node_attrs = attrs;
    out
}
