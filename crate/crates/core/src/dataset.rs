//! Season records, per-team aggregation, benchmark labels and the numeric
//! feature matrix handed to the forest and distance stages.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-season performance variables, in input-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    YellowCards,
    RedCards,
    Possession,
    PassSuccess,
    AerialsWon,
    ShotsConceded,
    Tackles,
    Interceptions,
    Fouls,
    Offsides,
    Shots,
    ShotsOnTarget,
    Dribbles,
    Fouled,
    GoalsFor,
    GoalsAgainst,
    GoalDifference,
    Points,
}

pub const N_VARIABLES: usize = 18;

/// Identifier columns that precede the numeric variables.
pub const KEY_COLUMNS: [&str; 4] = ["team_id", "team_name", "tournament", "season"];

impl Variable {
    pub const ALL: [Variable; N_VARIABLES] = [
        Variable::YellowCards,
        Variable::RedCards,
        Variable::Possession,
        Variable::PassSuccess,
        Variable::AerialsWon,
        Variable::ShotsConceded,
        Variable::Tackles,
        Variable::Interceptions,
        Variable::Fouls,
        Variable::Offsides,
        Variable::Shots,
        Variable::ShotsOnTarget,
        Variable::Dribbles,
        Variable::Fouled,
        Variable::GoalsFor,
        Variable::GoalsAgainst,
        Variable::GoalDifference,
        Variable::Points,
    ];

    /// Exact CSV header name.
    pub fn column(self) -> &'static str {
        match self {
            Variable::YellowCards => "Yellow_cards",
            Variable::RedCards => "Red_cards",
            Variable::Possession => "Possession",
            Variable::PassSuccess => "Pass_Success",
            Variable::AerialsWon => "Aerials_Won",
            Variable::ShotsConceded => "Shots_Conceded",
            Variable::Tackles => "Tackles",
            Variable::Interceptions => "Interceptions",
            Variable::Fouls => "Fouls",
            Variable::Offsides => "Offsides",
            Variable::Shots => "Shots",
            Variable::ShotsOnTarget => "Shots_OT",
            Variable::Dribbles => "Dribbles",
            Variable::Fouled => "Fouled",
            Variable::GoalsFor => "GF",
            Variable::GoalsAgainst => "GA",
            Variable::GoalDifference => "GD",
            Variable::Points => "Points",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_column(name: &str) -> Option<Variable> {
        Variable::ALL.into_iter().find(|v| v.column() == name)
    }

    fn is_percentage(self) -> bool {
        matches!(self, Variable::Possession | Variable::PassSuccess)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// One team's record for one season.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamSeason {
    pub team_id: u32,
    pub team_name: String,
    pub tournament: String,
    pub season: String,
    pub values: [f64; N_VARIABLES],
}

impl TeamSeason {
    pub fn get(&self, var: Variable) -> f64 {
        self.values[var.index()]
    }

    /// Check the record-level invariants. `row` is only used for diagnostics.
    pub fn validate(&self, row: usize) -> Result<()> {
        let invalid = |reason: String| Error::InvalidRecord { row, reason };
        for var in Variable::ALL {
            let v = self.get(var);
            if !v.is_finite() {
                return Err(invalid(format!("{var} is not finite")));
            }
            if var != Variable::GoalDifference && v < 0.0 {
                return Err(invalid(format!("{var} = {v} is negative")));
            }
            if var.is_percentage() && v > 100.0 {
                return Err(invalid(format!("{var} = {v} exceeds 100")));
            }
        }
        let (gf, ga, gd) = (
            self.get(Variable::GoalsFor),
            self.get(Variable::GoalsAgainst),
            self.get(Variable::GoalDifference),
        );
        // Decimal inputs such as 46.3 - 54.3 do not subtract exactly in binary.
        if (gd - (gf - ga)).abs() > 1e-9 * gd.abs().max(1.0) {
            return Err(invalid(format!("GD = {gd} but GF - GA = {}", gf - ga)));
        }
        Ok(())
    }
}

fn header_line() -> Vec<&'static str> {
    KEY_COLUMNS
        .iter()
        .copied()
        .chain(Variable::ALL.iter().map(|v| v.column()))
        .collect()
}

/// Parse season records from a comma-separated, header-first CSV stream.
pub fn parse_team_seasons<R: Read>(source: R) -> Result<Vec<TeamSeason>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let locate = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = locate("team_id")?;
    let name_col = locate("team_name")?;
    let tour_col = locate("tournament")?;
    let season_col = locate("season")?;
    let mut var_idx = [0usize; N_VARIABLES];
    for var in Variable::ALL {
        var_idx[var.index()] = locate(var.column())?;
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, result) in reader.records().enumerate() {
        let record = result?;
        // Data rows are numbered from 1 after the header.
        let row = i + 1;
        let field = |col: usize| record.get(col).unwrap_or("").trim();
        let team_id = field(id_col)
            .parse::<u32>()
            .map_err(|_| Error::Parse {
                row,
                column: "team_id".into(),
                value: field(id_col).into(),
            })?;
        let mut values = [0.0; N_VARIABLES];
        for var in Variable::ALL {
            let raw = field(var_idx[var.index()]);
            values[var.index()] = raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: var.column().into(),
                value: raw.into(),
            })?;
        }
        let season = TeamSeason {
            team_id,
            team_name: field(name_col).to_string(),
            tournament: field(tour_col).to_string(),
            season: field(season_col).to_string(),
            values,
        };
        season.validate(row)?;
        if !seen.insert((team_id, season.season.clone())) {
            return Err(Error::DuplicateKey {
                team_id,
                season: season.season,
            });
        }
        records.push(season);
    }
    Ok(records)
}

/// Write season records with the canonical header. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_team_seasons<W: Write>(records: &[TeamSeason], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(header_line())?;
    for r in records {
        let mut row = vec![
            r.team_id.to_string(),
            r.team_name.clone(),
            r.tournament.clone(),
            r.season.clone(),
        ];
        row.extend(r.values.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BenchmarkLabel {
    Bottom,
    Middle,
    Top,
}

impl BenchmarkLabel {
    pub const ALL: [BenchmarkLabel; 3] =
        [BenchmarkLabel::Bottom, BenchmarkLabel::Middle, BenchmarkLabel::Top];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkLabel::Bottom => "Bottom",
            BenchmarkLabel::Middle => "Middle",
            BenchmarkLabel::Top => "Top",
        }
    }
}

impl fmt::Display for BenchmarkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cross-season mean record for a single team.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamAggregate {
    pub team_id: u32,
    pub team_name: String,
    pub tournament: String,
    pub n_seasons: usize,
    pub values: [f64; N_VARIABLES],
    pub benchmark: Option<BenchmarkLabel>,
}

impl TeamAggregate {
    pub fn get(&self, var: Variable) -> f64 {
        self.values[var.index()]
    }

    /// View the aggregate as a single pseudo-season.
    pub fn as_season(&self) -> TeamSeason {
        TeamSeason {
            team_id: self.team_id,
            team_name: self.team_name.clone(),
            tournament: self.tournament.clone(),
            season: "aggregate".into(),
            values: self.values,
        }
    }
}

/// Collapse seasons into one unweighted-mean record per team, sorted by id.
pub fn aggregate(seasons: &[TeamSeason]) -> Result<Vec<TeamAggregate>> {
    if seasons.is_empty() {
        return Err(Error::EmptyInput("no season records to aggregate"));
    }
    let mut groups: BTreeMap<u32, Vec<&TeamSeason>> = BTreeMap::new();
    for s in seasons {
        groups.entry(s.team_id).or_default().push(s);
    }
    Ok(groups
        .into_values()
        .map(|members| {
            let n = members.len();
            let mut values = [0.0; N_VARIABLES];
            for (k, slot) in values.iter_mut().enumerate() {
                *slot = members.iter().map(|s| s.values[k]).sum::<f64>() / n as f64;
            }
            let first = members[0];
            TeamAggregate {
                team_id: first.team_id,
                team_name: first.team_name.clone(),
                tournament: first.tournament.clone(),
                n_seasons: n,
                values,
                benchmark: None,
            }
        })
        .collect())
}

/// Sample quantile by linear interpolation between order statistics at
/// position `1 + (n - 1) q` (1-based).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Points thresholds `(low, high)` for the benchmark cut.
pub fn benchmark_thresholds(aggregates: &[TeamAggregate], low_q: f64, high_q: f64) -> Result<(f64, f64)> {
    if aggregates.is_empty() {
        return Err(Error::EmptyInput("no aggregates to classify"));
    }
    if !(0.0 < low_q && low_q < high_q && high_q < 1.0) {
        return Err(Error::Parameter(format!(
            "benchmark quantiles must satisfy 0 < low < high < 1, got {low_q} and {high_q}"
        )));
    }
    let points: Vec<f64> = aggregates.iter().map(|a| a.get(Variable::Points)).collect();
    Ok((quantile(&points, low_q)?, quantile(&points, high_q)?))
}

/// Label each aggregate Top / Middle / Bottom from points quantiles. Teams
/// exactly on a threshold are Middle.
pub fn benchmark_classify(
    aggregates: &[TeamAggregate],
    low_q: f64,
    high_q: f64,
) -> Result<Vec<TeamAggregate>> {
    let (low, high) = benchmark_thresholds(aggregates, low_q, high_q)?;
    Ok(aggregates
        .iter()
        .map(|a| {
            let p = a.get(Variable::Points);
            let label = if p > high {
                BenchmarkLabel::Top
            } else if p < low {
                BenchmarkLabel::Bottom
            } else {
                BenchmarkLabel::Middle
            };
            TeamAggregate {
                benchmark: Some(label),
                ..a.clone()
            }
        })
        .collect())
}

/// Dense entity-by-variable matrix with stable row order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub row_ids: Vec<u32>,
    pub columns: Vec<String>,
    pub values: Array2<f64>,
    pub standardized: bool,
}

impl FeatureMatrix {
    pub fn new(row_ids: Vec<u32>, columns: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != row_ids.len() || values.ncols() != columns.len() {
            return Err(Error::Schema(format!(
                "matrix is {}x{} but {} row ids and {} column names were given",
                values.nrows(),
                values.ncols(),
                row_ids.len(),
                columns.len()
            )));
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "non-finite value at row {r}, column `{}`",
                columns[c]
            )));
        }
        Ok(FeatureMatrix {
            row_ids,
            columns,
            values,
            standardized: false,
        })
    }

    /// Build from aggregates (already sorted by team id) for the given variables.
    pub fn from_aggregates(aggregates: &[TeamAggregate], vars: &[Variable]) -> Result<Self> {
        let values = Array2::from_shape_fn((aggregates.len(), vars.len()), |(i, j)| {
            aggregates[i].get(vars[j])
        });
        FeatureMatrix::new(
            aggregates.iter().map(|a| a.team_id).collect(),
            vars.iter().map(|v| v.column().to_string()).collect(),
            values,
        )
    }

    /// Unlabelled matrix with synthetic ids `0..n` and columns `x1..xp`.
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        let ids = (0..values.nrows() as u32).collect();
        let cols = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        FeatureMatrix::new(ids, cols, values)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<ArrayView1<'_, f64>> {
        self.column_index(name).map(|j| self.values.column(j))
    }

    /// Keep only the named columns, in the order given.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::MissingColumn(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            row_ids: self.row_ids.clone(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select(Axis(1), &idx),
            standardized: self.standardized,
        })
    }

    /// Z-score every column (sample sd). Constant columns are dropped and
    /// their names returned alongside the result.
    pub fn standardize(&self) -> Result<(FeatureMatrix, Vec<String>)> {
        let n = self.n_rows();
        if n < 2 {
            return Err(Error::Parameter(
                "standardization needs at least two rows".into(),
            ));
        }
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        let mut stats = Vec::new();
        for (j, col) in self.values.columns().into_iter().enumerate() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if sd <= 1e-12 * mean.abs().max(1.0) {
                log::warn!("dropping constant column `{}` before standardization", self.columns[j]);
                dropped.push(self.columns[j].clone());
            } else {
                keep.push(j);
                stats.push((mean, sd));
            }
        }
        let mut values = self.values.select(Axis(1), &keep);
        for (mut col, &(mean, sd)) in values.columns_mut().into_iter().zip(&stats) {
            col.mapv_inplace(|v| (v - mean) / sd);
        }
        Ok((
            FeatureMatrix {
                row_ids: self.row_ids.clone(),
                columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
                values,
                standardized: true,
            },
            dropped,
        ))
    }
}
