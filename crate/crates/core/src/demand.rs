//! Trip ingestion, synthetic workloads, demand forecasting and travel-time
//! estimation.
//!
//! Time is measured in whole minutes since an epoch that falls on a Monday at
//! 00:00, so `day_of_week = (t / 1440) % 7` with Monday = 0.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMap, Zone};

pub const MINUTES_PER_DAY: u64 = 1440;
pub const DAYS_PER_WEEK: u64 = 7;

pub const TRIP_CSV_HEADER: &str = "time_min,origin_row,origin_col,dest_row,dest_col";
const TRIP_CSV_GEO_HEADER: &str = "time_min,origin_lat,origin_lon,dest_lat,dest_lon";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub request_time: u64,
    pub origin: Zone,
    pub destination: Zone,
    /// Origin and destination coincide.
    #[serde(default)]
    pub degenerate: bool,
}

impl TripRecord {
    pub fn new(request_time: u64, origin: Zone, destination: Zone) -> Self {
        Self { request_time, origin, destination, degenerate: origin == destination }
    }
}

/// Affine lat/lon box mapped onto the grid, row 0 at the northern edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.min_lat, self.max_lat, self.min_lon, self.max_lon].iter().all(|v| v.is_finite())
            && self.max_lat > self.min_lat
            && self.max_lon > self.min_lon;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("degenerate bounding box {self:?}")))
        }
    }

    /// Zone containing the point, or `None` outside the box.
    pub fn locate(&self, grid: &GridMap, lat: f64, lon: f64) -> Option<Zone> {
        if !(self.min_lat..=self.max_lat).contains(&lat) || !(self.min_lon..=self.max_lon).contains(&lon) {
            return None;
        }
        let fr = (self.max_lat - lat) / (self.max_lat - self.min_lat);
        let fc = (lon - self.min_lon) / (self.max_lon - self.min_lon);
        let row = ((fr * grid.rows() as f64) as usize).min(grid.rows() - 1);
        let col = ((fc * grid.cols() as f64) as usize).min(grid.cols() - 1);
        Some(Zone::new(row, col))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub records: Vec<TripRecord>,
    pub malformed: usize,
    /// Geo records that fell outside the bounding box.
    pub outside_bbox: usize,
}

enum CsvLayout {
    Cells,
    Geo,
}

/// Reads trip rows, skipping (and counting) malformed lines. Records come back
/// sorted by request time; the sort is stable so ties keep file order.
pub fn ingest_trips<R: BufRead>(source: R, grid: &GridMap, bbox: Option<&BoundingBox>) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut layout = CsvLayout::Cells;
    let mut data_lines = 0usize;

    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            let header: String = line.chars().filter(|c| !c.is_whitespace()).collect();
            layout = if header == TRIP_CSV_HEADER {
                CsvLayout::Cells
            } else if header == TRIP_CSV_GEO_HEADER {
                if bbox.is_none() {
                    return Err(Error::config("lat/lon trip file requires a bounding box"));
                }
                CsvLayout::Geo
            } else {
                return Err(Error::Format(format!("unrecognized trip header `{line}`")));
            };
            continue;
        }
        data_lines += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            report.malformed += 1;
            continue;
        }
        let Ok(time) = fields[0].parse::<u64>() else {
            report.malformed += 1;
            continue;
        };
        let endpoints = match layout {
            CsvLayout::Cells => parse_cells(&fields[1..], grid),
            CsvLayout::Geo => match parse_geo(&fields[1..]) {
                None => None,
                Some([olat, olon, dlat, dlon]) => {
                    let bbox = bbox.expect("checked at header");
                    match (bbox.locate(grid, olat, olon), bbox.locate(grid, dlat, dlon)) {
                        (Some(o), Some(d)) => Some((o, d)),
                        _ => {
                            report.outside_bbox += 1;
                            continue;
                        }
                    }
                }
            },
        };
        match endpoints {
            Some((o, d)) => report.records.push(TripRecord::new(time, o, d)),
            None => report.malformed += 1,
        }
    }

    if data_lines > 0 && report.malformed * 2 > data_lines {
        return Err(Error::Format(format!("{} of {} trip lines are malformed", report.malformed, data_lines)));
    }
    if report.malformed > 0 {
        log::warn!("skipped {} malformed trip lines", report.malformed);
    }
    report.records.sort_by_key(|r| r.request_time);
    Ok(report)
}

pub fn ingest_trips_path(path: &Path, grid: &GridMap, bbox: Option<&BoundingBox>) -> Result<IngestReport> {
    let file = File::open(path)?;
    ingest_trips(BufReader::new(file), grid, bbox)
}

fn parse_cells(fields: &[&str], grid: &GridMap) -> Option<(Zone, Zone)> {
    let v: Vec<usize> = fields.iter().map(|f| f.parse().ok()).collect::<Option<_>>()?;
    let (o, d) = (Zone::new(v[0], v[1]), Zone::new(v[2], v[3]));
    (grid.contains(o) && grid.contains(d)).then_some((o, d))
}

fn parse_geo(fields: &[&str]) -> Option<[f64; 4]> {
    let v: Vec<f64> = fields.iter().map(|f| f.parse().ok()).collect::<Option<_>>()?;
    v.iter().all(|x| x.is_finite()).then(|| [v[0], v[1], v[2], v[3]])
}

/// Serializes records in the cell-indexed trip CSV layout.
pub fn write_trips_csv(records: &[TripRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 24 + 48);
    out.push_str(TRIP_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.request_time, r.origin.row, r.origin.col, r.destination.row, r.destination.col
        ));
    }
    out
}

/// How synthetic trips pick their destination.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum DestinationChoice {
    /// Uniform over every zone other than the origin.
    #[default]
    UniformOther,
    /// Proportional to per-zone weights, origin excluded.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub step_minutes: u64,
    pub start_minute: u64,
    pub destinations: DestinationChoice,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { step_minutes: 1, start_minute: 0, destinations: DestinationChoice::UniformOther }
    }
}

/// Poisson arrivals per zone per step with one-minute steps starting at minute 0.
pub fn synth_workload(grid: &GridMap, rate_per_zone: &[f64], duration_steps: usize, seed: u64) -> Result<Vec<TripRecord>> {
    synth_workload_with(grid, rate_per_zone, duration_steps, seed, &SynthOptions::default())
}

pub fn synth_workload_with(
    grid: &GridMap,
    rate_per_zone: &[f64],
    duration_steps: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Vec<TripRecord>> {
    let m = grid.zone_count();
    if rate_per_zone.len() != m {
        return Err(Error::config(format!("expected {m} zone intensities, got {}", rate_per_zone.len())));
    }
    if let Some(bad) = rate_per_zone.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::config(format!("zone intensity must be a non-negative number, got {bad}")));
    }
    if opts.step_minutes == 0 {
        return Err(Error::config("step length must be positive"));
    }
    let weights = match &opts.destinations {
        DestinationChoice::UniformOther => None,
        DestinationChoice::Weighted(w) => {
            if w.len() != m || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::config("destination weights must be one non-negative value per zone"));
            }
            Some(w.as_slice())
        }
    };

    let samplers: Vec<Option<Poisson<f64>>> = rate_per_zone
        .iter()
        .map(|&r| (r > 0.0).then(|| Poisson::new(r).expect("positive finite rate")))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for step in 0..duration_steps {
        let time = opts.start_minute + step as u64 * opts.step_minutes;
        for (id, sampler) in samplers.iter().enumerate() {
            let Some(sampler) = sampler else { continue };
            let n = sampler.sample(&mut rng) as u64;
            let origin = grid.zone(id);
            for _ in 0..n {
                let dest = pick_destination(grid, id, weights, &mut rng);
                out.push(TripRecord::new(time, origin, grid.zone(dest)));
            }
        }
    }
    Ok(out)
}

fn pick_destination(grid: &GridMap, origin: usize, weights: Option<&[f64]>, rng: &mut impl Rng) -> usize {
    let m = grid.zone_count();
    if m == 1 {
        return origin;
    }
    match weights {
        None => {
            let d = rng.random_range(0..m - 1);
            if d >= origin { d + 1 } else { d }
        }
        Some(w) => {
            let total: f64 = w.iter().enumerate().filter(|(i, _)| *i != origin).map(|(_, x)| x).sum();
            if total <= 0.0 {
                return pick_destination(grid, origin, None, rng);
            }
            let mut u = rng.random::<f64>() * total;
            let mut last = origin;
            for (i, x) in w.iter().enumerate() {
                if i == origin || *x == 0.0 {
                    continue;
                }
                last = i;
                if u < *x {
                    return i;
                }
                u -= x;
            }
            last
        }
    }
}

/// Per-zone intensities summing to `total_per_step`, peaked toward the grid
/// centre by `hotspot` (0 gives a flat city).
pub fn hotspot_rates(grid: &GridMap, total_per_step: f64, hotspot: f64) -> Vec<f64> {
    let cr = (grid.rows() as f64 - 1.0) / 2.0;
    let cc = (grid.cols() as f64 - 1.0) / 2.0;
    let reach = (cr + cc).max(1.0);
    let weights: Vec<f64> = grid
        .zones()
        .map(|z| {
            let d = (z.row as f64 - cr).abs() + (z.col as f64 - cc).abs();
            1.0 + hotspot * (1.0 - d / reach).max(0.0)
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter().map(|w| total_per_step * w / sum).collect()
}

/// Historical-mean demand table indexed by (day of week, time-of-day bin, zone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPredictor {
    zones: usize,
    bin_minutes: u64,
    bins_per_day: usize,
    means: Vec<f64>,
}

impl DemandPredictor {
    pub fn zeros(zones: usize, bin_minutes: u64) -> Result<Self> {
        Self::constant(zones, bin_minutes, 0.0)
    }

    /// Every (day, bin, zone) cell holds `mean`.
    pub fn constant(zones: usize, bin_minutes: u64, mean: f64) -> Result<Self> {
        if bin_minutes == 0 {
            return Err(Error::config("demand bin must be at least one minute"));
        }
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::config(format!("demand mean must be non-negative, got {mean}")));
        }
        let bins_per_day = MINUTES_PER_DAY.div_ceil(bin_minutes) as usize;
        Ok(Self { zones, bin_minutes, bins_per_day, means: vec![mean; DAYS_PER_WEEK as usize * bins_per_day * zones] })
    }

    pub fn bin_minutes(&self) -> u64 {
        self.bin_minutes
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    fn slot(&self, minute: u64) -> usize {
        let dow = ((minute / MINUTES_PER_DAY) % DAYS_PER_WEEK) as usize;
        let bin = ((minute % MINUTES_PER_DAY) / self.bin_minutes) as usize;
        dow * self.bins_per_day + bin
    }

    /// Mean request count for `zone` in the bin containing `minute`.
    pub fn mean(&self, minute: u64, zone: usize) -> f64 {
        self.means[self.slot(minute) * self.zones + zone]
    }
}

/// Fits per-zone per-(day of week, time bin) mean counts. Each cell's mean is
/// its total count divided by how many times that weekday occurs in the
/// history's day span.
pub fn fit_demand(history: &[TripRecord], grid: &GridMap, bin_minutes: u64) -> Result<DemandPredictor> {
    let mut pred = DemandPredictor::zeros(grid.zone_count(), bin_minutes)?;
    let (Some(first), Some(last)) = (
        history.iter().map(|r| r.request_time).min(),
        history.iter().map(|r| r.request_time).max(),
    ) else {
        log::warn!("empty demand history; predictor returns zeros");
        return Ok(pred);
    };
    let mut occurrences = [0u64; DAYS_PER_WEEK as usize];
    for day in first / MINUTES_PER_DAY..=last / MINUTES_PER_DAY {
        occurrences[(day % DAYS_PER_WEEK) as usize] += 1;
    }
    for r in history {
        grid.check(r.origin)?;
        let idx = pred.slot(r.request_time) * pred.zones + grid.id(r.origin);
        pred.means[idx] += 1.0;
    }
    let per_day = pred.bins_per_day * pred.zones;
    for (dow, count) in occurrences.iter().enumerate() {
        let cells = &mut pred.means[dow * per_day..(dow + 1) * per_day];
        if *count == 0 {
            continue;
        }
        for c in cells {
            *c /= *count as f64;
        }
    }
    Ok(pred)
}

/// Expected request counts per step (rows) and zone (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandForecast {
    horizon: usize,
    zones: usize,
    values: Vec<f64>,
}

impl DemandForecast {
    pub fn zeros(horizon: usize, zones: usize) -> Self {
        Self { horizon, zones, values: vec![0.0; horizon * zones] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    pub fn get(&self, step: usize, zone: usize) -> f64 {
        self.values[step * self.zones + zone]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.values[step * self.zones..(step + 1) * self.zones]
    }

    /// Per-zone sum over the first `steps` rows (clamped to the horizon).
    pub fn leading_sum(&self, steps: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.zones];
        for k in 0..steps.min(self.horizon) {
            for (o, v) in out.iter_mut().zip(self.row(k)) {
                *o += v;
            }
        }
        out
    }

    /// JSON matrix, one inner array per step.
    pub fn to_json(&self) -> String {
        let rows: Vec<&[f64]> = (0..self.horizon).map(|k| self.row(k)).collect();
        serde_json::to_string(&rows).expect("finite matrix serializes")
    }
}

/// Forecast for steps `now, now + step, ...` filled from the fitted bin means,
/// scaled from per-bin to per-step counts.
pub fn predict_demand(pred: &DemandPredictor, now: u64, horizon: usize, step_minutes: u64) -> Result<DemandForecast> {
    if horizon == 0 {
        return Err(Error::contract("forecast horizon must be at least one step"));
    }
    if step_minutes == 0 {
        return Err(Error::contract("step length must be positive"));
    }
    let scale = step_minutes as f64 / pred.bin_minutes as f64;
    let mut f = DemandForecast::zeros(horizon, pred.zones);
    for k in 0..horizon {
        let minute = now + k as u64 * step_minutes;
        let base = pred.slot(minute) * pred.zones;
        for z in 0..pred.zones {
            f.values[k * pred.zones + z] = pred.means[base + z] * scale;
        }
    }
    Ok(f)
}

/// One observed trip duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelSample {
    pub origin: Zone,
    pub destination: Zone,
    pub depart_minute: u64,
    pub observed_minutes: f64,
}

pub const TRAVEL_CSV_HEADER: &str = "depart_min,origin_row,origin_col,dest_row,dest_col,minutes";

#[derive(Deserialize)]
struct TravelRow {
    depart_min: u64,
    origin_row: usize,
    origin_col: usize,
    dest_row: usize,
    dest_col: usize,
    minutes: f64,
}

/// Reads observed durations from a headed CSV; rows off the grid or with a
/// non-positive duration are rejected.
pub fn read_travel_samples<R: std::io::Read>(source: R, grid: &GridMap) -> Result<Vec<TravelSample>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<TravelRow>().enumerate() {
        let row = row.map_err(|e| Error::Format(format!("travel sample {}: {e}", i + 1)))?;
        let (origin, destination) = (Zone::new(row.origin_row, row.origin_col), Zone::new(row.dest_row, row.dest_col));
        grid.check(origin)?;
        grid.check(destination)?;
        if !(row.minutes.is_finite() && row.minutes > 0.0) {
            return Err(Error::input(format!("travel sample {}: duration must be positive", i + 1)));
        }
        out.push(TravelSample { origin, destination, depart_minute: row.depart_min, observed_minutes: row.minutes });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEntry {
    pub origin: Zone,
    pub destination: Zone,
    pub bin: u32,
    pub minutes: f64,
    pub samples: u32,
}

/// Travel-time estimator: an (origin, destination, time-of-day bin) table of
/// observed means with a distance/speed fallback.
///
/// The fallback is symmetric; table entries need not be.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaModel {
    speed_m_per_min: f64,
    cell_edge_m: f64,
    bin_minutes: u64,
    table: BTreeMap<(Zone, Zone, u32), (f64, u32)>,
}

impl EtaModel {
    pub fn distance_only(grid: &GridMap, speed_m_per_min: f64) -> Result<Self> {
        Self::with_bins(grid, speed_m_per_min, 60)
    }

    fn with_bins(grid: &GridMap, speed_m_per_min: f64, bin_minutes: u64) -> Result<Self> {
        if !(speed_m_per_min.is_finite() && speed_m_per_min > 0.0) {
            return Err(Error::config(format!("speed must be positive, got {speed_m_per_min}")));
        }
        if bin_minutes == 0 {
            return Err(Error::config("ETA bin must be at least one minute"));
        }
        Ok(Self { speed_m_per_min, cell_edge_m: grid.cell_edge_m(), bin_minutes, table: BTreeMap::new() })
    }

    pub fn speed_m_per_min(&self) -> f64 {
        self.speed_m_per_min
    }

    fn bin(&self, minute: u64) -> u32 {
        ((minute % MINUTES_PER_DAY) / self.bin_minutes) as u32
    }

    /// Estimated minutes from `from` to `to` departing at `depart`.
    pub fn eta_minutes(&self, from: Zone, to: Zone, depart: u64) -> f64 {
        if from == to {
            return 0.0;
        }
        if let Some((m, _)) = self.table.get(&(from, to, self.bin(depart))) {
            return *m;
        }
        self.fallback_minutes(from, to)
    }

    pub fn fallback_minutes(&self, from: Zone, to: Zone) -> f64 {
        from.cells_to(to) as f64 * self.cell_edge_m / self.speed_m_per_min
    }

    pub fn insert(&mut self, from: Zone, to: Zone, bin: u32, minutes: f64) -> Result<()> {
        if !(minutes.is_finite() && minutes > 0.0) {
            return Err(Error::input(format!("table entry must be positive, got {minutes}")));
        }
        self.table.insert((from, to, bin), (minutes, 1));
        Ok(())
    }

    pub fn entries(&self) -> Vec<EtaEntry> {
        self.table
            .iter()
            .map(|(&(origin, destination, bin), &(minutes, samples))| EtaEntry { origin, destination, bin, minutes, samples })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "speed_m_per_min": self.speed_m_per_min,
            "bin_minutes": self.bin_minutes,
            "entries": self.entries(),
        })
        .to_string()
    }
}

/// Fits the ETA table and the fallback speed (total distance over total
/// minutes). Empty input gives a pure-distance model at `default_speed`.
pub fn fit_eta(samples: &[TravelSample], grid: &GridMap, bin_minutes: u64, default_speed: f64) -> Result<EtaModel> {
    let mut model = EtaModel::with_bins(grid, default_speed, bin_minutes)?;
    let mut sums: BTreeMap<(Zone, Zone, u32), (f64, u32)> = BTreeMap::new();
    let (mut dist, mut minutes) = (0.0, 0.0);
    for s in samples {
        grid.check(s.origin)?;
        grid.check(s.destination)?;
        if !(s.observed_minutes.is_finite() && s.observed_minutes > 0.0) {
            return Err(Error::input(format!("observed minutes must be positive, got {}", s.observed_minutes)));
        }
        let e = sums.entry((s.origin, s.destination, model.bin(s.depart_minute))).or_default();
        e.0 += s.observed_minutes;
        e.1 += 1;
        let d = grid.distance_m(s.origin, s.destination);
        if d > 0.0 {
            dist += d;
            minutes += s.observed_minutes;
        }
    }
    if dist > 0.0 && minutes > 0.0 {
        model.speed_m_per_min = dist / minutes;
    }
    model.table = sums.into_iter().map(|(k, (sum, n))| (k, (sum / n as f64, n))).collect();
    Ok(model)
}
