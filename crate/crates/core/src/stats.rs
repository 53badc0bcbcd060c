//! Univariate descriptives, one-way ANOVA and Bonferroni-adjusted pooled
//! pairwise t-tests.

use serde::Serialize;

use crate::dataset::{BenchmarkLabel, TeamAggregate, Variable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Describe {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single observation.
    pub sd: Option<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn describe(values: &[f64]) -> Result<Describe> {
    if values.is_empty() {
        return Err(Error::EmptyInput("describe needs at least one value"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n >= 2).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(Describe {
        n,
        mean,
        sd,
        median,
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Labelled groups of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    pub groups: Vec<(String, Vec<f64>)>,
}

impl GroupedSample {
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = (S, Vec<f64>)>) -> Self {
        GroupedSample {
            groups: groups.into_iter().map(|(l, v)| (l.into(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseTest {
    pub first: usize,
    pub second: usize,
    pub t_stat: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    /// Pairs in lexicographic order `(0,1), (0,2), ..., (k-2,k-1)`.
    pub pairwise: Vec<PairwiseTest>,
}

impl AnovaResult {
    /// Bonferroni-adjusted p-value matrix; the diagonal is 1.
    pub fn adjusted_matrix(&self, k: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![1.0; k]; k];
        for p in &self.pairwise {
            m[p.first][p.second] = p.p_adjusted;
            m[p.second][p.first] = p.p_adjusted;
        }
        m
    }

    /// 1-based indices of pairwise contrasts significant at `alpha`.
    pub fn significant_pairs(&self, alpha: f64) -> Vec<usize> {
        self.pairwise
            .iter()
            .enumerate()
            .filter(|(_, p)| p.p_adjusted < alpha)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

pub fn one_way_anova(sample: &GroupedSample) -> Result<AnovaResult> {
    let k = sample.groups.len();
    if k < 2 {
        return Err(Error::Parameter(format!("ANOVA needs at least 2 groups, got {k}")));
    }
    if let Some((label, _)) = sample.groups.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::Parameter(format!("group `{label}` is empty")));
    }
    let n_total: usize = sample.groups.iter().map(|(_, v)| v.len()).sum();
    if n_total <= k {
        return Err(Error::Parameter(format!(
            "ANOVA needs more observations ({n_total}) than groups ({k})"
        )));
    }
    let grand_mean = sample.groups.iter().flat_map(|(_, v)| v).sum::<f64>() / n_total as f64;
    let means: Vec<f64> = sample
        .groups
        .iter()
        .map(|(_, v)| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    let ss_between: f64 = sample
        .groups
        .iter()
        .zip(&means)
        .map(|((_, v), m)| v.len() as f64 * (m - grand_mean).powi(2))
        .sum();
    let ss_within: f64 = sample
        .groups
        .iter()
        .zip(&means)
        .map(|((_, v), m)| v.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();

    let df_between = k - 1;
    let df_within = n_total - k;
    let ms_within = ss_within / df_within as f64;
    let scale = grand_mean.abs().max(1.0).powi(2) * 1e-24 * n_total as f64;
    if ss_within <= scale && ss_between <= scale {
        return Err(Error::DegenerateSample(
            "no variance within or between groups".into(),
        ));
    }
    let (f_stat, p_value) = if ss_between <= scale {
        (0.0, 1.0)
    } else if ss_within <= scale {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_between / df_between as f64) / ms_within;
        (f, f_survival(f, df_between as f64, df_within as f64))
    };

    let comparisons = k * (k - 1) / 2;
    let mut pairwise = Vec::with_capacity(comparisons);
    for i in 0..k {
        for j in i + 1..k {
            let (ni, nj) = (sample.groups[i].1.len() as f64, sample.groups[j].1.len() as f64);
            let diff = means[i] - means[j];
            let se = (ms_within * (1.0 / ni + 1.0 / nj)).sqrt();
            let (t_stat, p_raw) = if se > 0.0 {
                let t = diff / se;
                (t, t_two_sided(t, df_within as f64))
            } else if diff == 0.0 {
                (0.0, 1.0)
            } else {
                (diff.signum() * f64::INFINITY, 0.0)
            };
            pairwise.push(PairwiseTest {
                first: i,
                second: j,
                t_stat,
                p_raw,
                p_adjusted: (p_raw * comparisons as f64).min(1.0),
            });
        }
    }
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value,
        pairwise,
    })
}

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_regularized(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Two-sided Student t p-value `P(|T| > |t|)`.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_regularized(df / 2.0, 0.5, df / (df + t * t))
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9), valid for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn beta_regularized(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_fraction(a, b, x) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_fraction(b, a, 1.0 - x) / b).clamp(0.0, 1.0)
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// One variable of the benchmark-group descriptive table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveRow {
    pub variable: String,
    /// Non-empty benchmark groups in `BenchmarkLabel::ALL` order.
    pub labels: Vec<String>,
    pub groups: Vec<Describe>,
    pub total: Describe,
    /// `None` when the groups admit no test (fewer than two groups, or no
    /// variance at all).
    pub anova: Option<AnovaResult>,
}

/// Per-variable descriptives split by benchmark label, with ANOVA and
/// pairwise contrasts. Every aggregate must already carry a label.
pub fn descriptive_table(
    aggregates: &[TeamAggregate],
    vars: &[Variable],
) -> Result<Vec<DescriptiveRow>> {
    let labels = aggregates
        .iter()
        .map(|a| {
            a.benchmark
                .ok_or_else(|| Error::Parameter(format!("team {} has no benchmark label", a.team_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    vars.iter()
        .map(|&var| {
            let groups: Vec<(String, Vec<f64>)> = BenchmarkLabel::ALL
                .iter()
                .map(|&label| {
                    let vals = aggregates
                        .iter()
                        .zip(&labels)
                        .filter(|(_, l)| **l == label)
                        .map(|(a, _)| a.get(var))
                        .collect();
                    (label.as_str().to_string(), vals)
                })
                .filter(|(_, v): &(String, Vec<f64>)| !v.is_empty())
                .collect();
            let all: Vec<f64> = aggregates.iter().map(|a| a.get(var)).collect();
            Ok(DescriptiveRow {
                variable: var.column().to_string(),
                labels: groups.iter().map(|(l, _)| l.clone()).collect(),
                groups: groups
                    .iter()
                    .map(|(_, v)| describe(v))
                    .collect::<Result<_>>()?,
                total: describe(&all)?,
                anova: match one_way_anova(&GroupedSample { groups }) {
                    Ok(a) => Some(a),
                    Err(e @ (Error::DegenerateSample(_) | Error::Parameter(_))) => {
                        log::warn!("no ANOVA for {}: {e}", var.column());
                        None
                    }
                    Err(e) => return Err(e),
                },
            })
        })
        .collect()
}
