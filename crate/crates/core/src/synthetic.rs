//! Seeded synthetic data with known ground truth: Gaussian blobs and planted
//! leagues of team-season records.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use crate::dataset::{TeamSeason, Variable, N_VARIABLES};
use crate::rng;

/// Isotropic Gaussian blobs: `per_blob` points around each center with
/// standard deviation `spread`. Truth labels run from 1 in center order.
pub fn gaussian_blobs(centers: &Array2<f64>, per_blob: usize, spread: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let (k, p) = centers.dim();
    let mut r = rng::stream(seed, &[]);
    let noise = Normal::new(0.0, spread).expect("spread is finite and non-negative");
    let x = Array2::from_shape_fn((k * per_blob, p), |(i, j)| centers[[i / per_blob, j]] + noise.sample(&mut r));
    let truth = (0..k * per_blob).map(|i| i / per_blob + 1).collect();
    (x, truth)
}

/// `k` centers in `p >= 2` dimensions on a circle of the given radius in the
/// first two coordinates, so every pair is at least `2 r sin(pi / k)` apart.
pub fn ring_centers(k: usize, p: usize, radius: f64) -> Array2<f64> {
    Array2::from_shape_fn((k, p), |(c, j)| {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
        match j {
            0 => radius * angle.cos(),
            1 => radius * angle.sin(),
            _ => 0.0,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeagueSpec {
    pub groups: usize,
    pub teams_per_group: usize,
    pub seasons: usize,
    /// Distance between adjacent group strengths, in within-group sd units.
    pub separation: f64,
    pub seed: u64,
}

impl Default for LeagueSpec {
    fn default() -> Self {
        LeagueSpec {
            groups: 2,
            teams_per_group: 4,
            seasons: 3,
            separation: 6.0,
            seed: 0,
        }
    }
}

const TOURNAMENTS: [&str; 5] = ["Premier League", "La Liga", "Serie A", "Bundesliga", "Ligue 1"];

/// Team-season records whose strength is planted per group. Shots,
/// Shots_OT, Possession, Pass_Success and Shots_Conceded (inversely) follow
/// strength, as do goals and points; the other rates are pure noise.
///
/// Returns the records and, per team id in ascending order, its group
/// (1 = strongest).
pub fn planted_league(spec: &LeagueSpec) -> (Vec<TeamSeason>, Vec<usize>) {
    let mut r = rng::stream(spec.seed, &[]);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::new();
    let mut truth = Vec::new();
    let centre = (spec.groups as f64 - 1.0) / 2.0;
    for g in 0..spec.groups {
        // Strongest group first; strengths in sd units of team-level noise.
        let group_strength = (centre - g as f64) * spec.separation;
        for t in 0..spec.teams_per_group {
            let team_id = (g * spec.teams_per_group + t + 1) as u32;
            truth.push(g + 1);
            let strength = (group_strength + unit.sample(&mut r)) / 10.0;
            let tournament = TOURNAMENTS[team_id as usize % TOURNAMENTS.len()];
            for s in 0..spec.seasons {
                let mut z = || unit.sample(&mut r);
                let mut v = [0.0; N_VARIABLES];
                let mut set = |var: Variable, value: f64| v[var.index()] = value;
                set(Variable::Possession, (50.0 + 12.0 * strength + z()).clamp(25.0, 75.0));
                set(Variable::PassSuccess, (78.0 + 8.0 * strength + z()).clamp(55.0, 95.0));
                set(Variable::Shots, (12.5 + 4.0 * strength + 0.4 * z()).max(0.0));
                set(Variable::ShotsOnTarget, (4.3 + 1.8 * strength + 0.15 * z()).max(0.0));
                set(Variable::ShotsConceded, (12.5 - 4.0 * strength + 0.4 * z()).max(0.0));
                set(Variable::YellowCards, (70.0 + 8.0 * z()).max(0.0).round());
                set(Variable::RedCards, (3.0 + 1.5 * z()).max(0.0).round());
                set(Variable::AerialsWon, (16.0 + 2.0 * z()).max(0.0));
                set(Variable::Tackles, (17.0 + 1.5 * z()).max(0.0));
                set(Variable::Interceptions, (12.0 + 1.5 * z()).max(0.0));
                set(Variable::Fouls, (12.0 + 1.2 * z()).max(0.0));
                set(Variable::Offsides, (2.0 + 0.3 * z()).max(0.0));
                set(Variable::Dribbles, (9.0 + 1.5 * z()).max(0.0));
                set(Variable::Fouled, (11.5 + 1.2 * z()).max(0.0));
                let gf = (50.0 + 30.0 * strength + 4.0 * z()).max(5.0).round();
                let ga = (50.0 - 25.0 * strength + 4.0 * z()).max(5.0).round();
                set(Variable::GoalsFor, gf);
                set(Variable::GoalsAgainst, ga);
                set(Variable::GoalDifference, gf - ga);
                set(Variable::Points, (50.0 + 0.7 * (gf - ga) + 2.0 * z()).max(0.0).round());
                records.push(TeamSeason {
                    team_id,
                    team_name: format!("Team {team_id:03}"),
                    tournament: tournament.to_string(),
                    season: format!("{}/{:02}", 2014 + s, (15 + s) % 100),
                    values: v,
                });
            }
        }
    }
    (records, truth)
}
