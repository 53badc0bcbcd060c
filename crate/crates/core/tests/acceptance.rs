//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false` so the lines appear in plain `cargo test`
//! output. Criterion 6 needs the study dataset, supplied through the
//! `STUDY_DATASET` environment variable; without it the criterion reports SKIP.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use spectral_select::clustering::{
    dunn, fiedler_bisect, recursive_bisection, silhouette, validate_k, BisectionStrategy, SomConfig,
};
use spectral_select::dataset::FeatureMatrix;
use spectral_select::forest::{fit_forest, kfold_cv, select_variables, vim_corrected, ForestParams};
use spectral_select::pipeline::{run_pipeline, PipelineConfig, Stage};
use spectral_select::rng::stream;
use spectral_select::spectral::{eigendecompose, SpectralGraph};
use spectral_select::synthetic::{gaussian_blobs, planted_league, ring_centers, LeagueSpec};
use spectral_select::Error;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn standardized(x: Array2<f64>) -> FeatureMatrix {
    FeatureMatrix::from_array(x).unwrap().standardize().unwrap().0
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

fn laplacian_invariants() -> Outcome {
    let start = Instant::now();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 1.0f64);
    let mut failures = Vec::new();
    for seed in 0..200u64 {
        let mut r = stream(seed, &[0xA11]);
        let n = r.random_range(5..=50);
        let p = r.random_range(2..=8);
        let x = Array2::from_shape_fn((n, p), |_| normal.sample(&mut r));
        let g = SpectralGraph::from_features(&standardized(x), 1.0).unwrap();
        let lap = &g.laplacians;
        let row_sum = lap.laplacian.rows().into_iter().map(|row| row.sum().abs()).fold(0.0, f64::max);
        let map = eigendecompose(&lap.normalized).unwrap();
        let range_ok = map.eigenvalues.iter().all(|&l| (-1e-8..=2.0 + 1e-8).contains(&l));
        let lambda1 = map.eigenvalues[0];
        let mut u: Array1<f64> = lap.degrees.mapv(f64::sqrt);
        u /= u.dot(&u).sqrt();
        let cos = map.eigenvectors.column(0).dot(&u).abs();
        let rebuilt = map
            .eigenvectors
            .dot(&Array2::from_diag(&map.eigenvalues))
            .dot(&map.eigenvectors.t());
        let recon = max_abs(&(&rebuilt - &lap.normalized));
        worst = (worst.0.max(row_sum), worst.1.max(lambda1.abs()), worst.2.max(recon), worst.3.min(cos));
        if !(row_sum <= 1e-10 && range_ok && lambda1 <= 1e-8 && cos >= 1.0 - 1e-8 && recon <= 1e-9) {
            failures.push(seed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "200 graphs, max |L·1| {:.1e}, max |λ₁| {:.1e}, max recon {:.1e}, min |cos| 1-{:.1e}, {secs:.2} s",
        worst.0,
        worst.1,
        worst.2,
        1.0 - worst.3
    );
    if failures.is_empty() && secs < 10.0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; failing seeds {failures:?}"))
    }
}

/// Four centers at uniform positions, pairwise at least `min_sep` apart.
fn scattered_centers(seed: u64, min_sep: f64) -> Array2<f64> {
    let mut r = stream(seed, &[0xB16]);
    loop {
        let c: Array2<f64> = Array2::from_shape_fn((4, 2), |_| r.random_range(0.0..3.0 * min_sep));
        let far = (0..4).all(|a| (a + 1..4).all(|b| (&c.row(a) - &c.row(b)).mapv(|v| v * v).sum().sqrt() >= min_sep));
        if far {
            return c;
        }
    }
}

fn raw_graph(x: Array2<f64>) -> SpectralGraph {
    SpectralGraph::from_features(&FeatureMatrix::from_array(x).unwrap(), 1.0).unwrap()
}

// Raw units at unit spread, the scale of the fiedler_bisect example, with σ = 1.
fn bisection_recovery() -> Outcome {
    let spread = 1.0;
    let sep = 10.0 * spread;
    let (mut two_ok, mut ring_ok, mut scattered_ok) = (0, 0, 0);
    for seed in 0..100u64 {
        let mut r = stream(seed, &[0xB15]);
        let angle = r.random_range(0.0..std::f64::consts::TAU);
        let centers = Array2::from_shape_vec((2, 2), vec![0.0, 0.0, sep * angle.cos(), sep * angle.sin()]).unwrap();
        let (x, truth) = gaussian_blobs(&centers, 20, spread, seed);
        let all: Vec<usize> = (0..40).collect();
        if let Ok((a, _)) = fiedler_bisect(&raw_graph(x), &all) {
            let mut labels = vec![2; 40];
            a.iter().for_each(|&i| labels[i] = 1);
            two_ok += same_partition(&labels, &truth) as usize;
        }

        // Square layout (closest pairs exactly `sep` apart) and scattered layout.
        let layouts = [ring_centers(4, 2, sep / std::f64::consts::SQRT_2), scattered_centers(seed, sep)];
        for (layout, hits) in layouts.iter().zip([&mut ring_ok, &mut scattered_ok]) {
            let (x, truth) = gaussian_blobs(layout, 10, spread, seed + 1000);
            if let Ok(asg) = recursive_bisection(&raw_graph(x), 4, BisectionStrategy::Recursive) {
                *hits += same_partition(&asg.labels, &truth) as usize;
            }
        }
    }
    let detail = format!(
        "two blobs {two_ok}/100 (need 100); four blobs square {ring_ok}/100, scattered {scattered_ok}/100 (need 99 each)"
    );
    if two_ok == 100 && ring_ok >= 99 && scattered_ok >= 99 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

/// Direct evaluation of Rousseeuw's and Dunn's definitions from coordinates.
fn brute_indices(x: &Array2<f64>, labels: &[usize]) -> (Vec<f64>, Option<f64>) {
    let n = labels.len();
    let d = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for c in 0..x.ncols() {
            s += (x[[i, c]] - x[[j, c]]).powi(2);
        }
        s.sqrt()
    };
    let ids: BTreeSet<usize> = labels.iter().copied().collect();
    let mut widths = Vec::new();
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            widths.push(0.0);
            continue;
        }
        let a = own.iter().map(|&j| d(i, j)).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for &c in ids.iter().filter(|&&c| c != labels[i]) {
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            b = b.min(other.iter().map(|&j| d(i, j)).sum::<f64>() / other.len() as f64);
        }
        widths.push(if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 });
    }
    let mut diam = 0.0f64;
    let mut sep = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if labels[i] == labels[j] {
                diam = diam.max(d(i, j));
            } else {
                sep = sep.min(d(i, j));
            }
        }
    }
    (widths, (diam > 0.0).then(|| sep / diam))
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for seed in 0..100u64 {
        let mut r = stream(seed, &[0xC0]);
        let n = r.random_range(3..=12);
        let k = r.random_range(2..=4usize.min(n));
        let p = r.random_range(1..=4);
        let x = Array2::from_shape_fn((n, p), |_| r.random_range(-3.0..3.0));
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i + 1 } else { r.random_range(1..=k) }).collect();
        labels.rotate_left(r.random_range(0..n));
        let e = spectral_select::spectral::pairwise_distances(&x).unwrap();
        let (widths, brute_dunn) = brute_indices(&x, &labels);
        let s = silhouette(&labels, &e).unwrap();
        let mut err = widths.iter().zip(&s.widths).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        err = err.max((widths.iter().sum::<f64>() / n as f64 - s.average).abs());
        match (brute_dunn, dunn(&labels, &e)) {
            (Some(b), Ok(v)) => err = err.max((b - v).abs()),
            (None, Err(Error::DegenerateClustering(_))) => {}
            _ => bad.push(seed),
        }
        worst = worst.max(err);
        if err > 1e-12 {
            bad.push(seed);
        }
    }
    let detail = format!("100 instances, max abs difference {worst:.1e}");
    if bad.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; mismatching seeds {bad:?}"))
    }
}

fn linear_signal(seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut r = stream(seed, &[0xF0]);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x = Array2::from_shape_fn((300, 10), |_| normal.sample(&mut r));
    let y = (0..300).map(|i| 3.0 * x[[i, 0]] - 2.0 * x[[i, 1]] + noise.sample(&mut r)).collect();
    (FeatureMatrix::from_array(x).unwrap(), y)
}

// The r² and agreement bounds are checked per seed on the forest refit on the
// selected variables (the model the pipeline reports), at the same 95/100 rate
// as the ranking clause. Worst cases and the all-predictor forest are printed.
fn forest_sanity() -> Outcome {
    let start = Instant::now();
    let mut top_two = 0;
    let mut refined_ok = 0;
    let mut min_oob = f64::INFINITY;
    let mut max_gap = 0.0f64;
    for seed in 0..100u64 {
        let (x, y) = linear_signal(seed);
        let params = ForestParams::default().with_seed(seed);
        let rep = vim_corrected(&x, &y, 10, &params).unwrap();
        let top: BTreeSet<usize> = rep.ranking()[..2].iter().copied().collect();
        top_two += (top == BTreeSet::from([0, 1])) as usize;

        let chosen = select_variables(&rep).unwrap().variables;
        let xs = x.select_columns(&chosen).unwrap();
        let oob = fit_forest(&xs, &y, &params).unwrap().oob_r2.unwrap();
        let cv = kfold_cv(&xs, &y, 10, &params).unwrap().r2.unwrap();
        refined_ok += (oob >= 0.9 && (oob - cv).abs() <= 0.05) as usize;
        min_oob = min_oob.min(oob);
        max_gap = max_gap.max((oob - cv).abs());
    }
    let secs = start.elapsed().as_secs_f64();

    let (mut full_min, mut full_gap) = (f64::INFINITY, 0.0f64);
    for seed in 0..10u64 {
        let (x, y) = linear_signal(seed);
        let params = ForestParams::default().with_seed(seed);
        let oob = fit_forest(&x, &y, &params).unwrap().oob_r2.unwrap();
        let cv = kfold_cv(&x, &y, 10, &params).unwrap().r2.unwrap();
        full_min = full_min.min(oob);
        full_gap = full_gap.max((oob - cv).abs());
    }
    let detail = format!(
        "top-two VIM {top_two}/100 (need 95); refined OOB r² ≥ 0.9 and |OOB-CV| ≤ 0.05 in {refined_ok}/100 (need 95), \
         worst OOB r² {min_oob:.4}, worst |OOB-CV| {max_gap:.4}, {secs:.0} s; [info] all-predictor forest over 10 seeds \
         min OOB r² {full_min:.4}, max |OOB-CV| {full_gap:.4}"
    );
    if top_two >= 95 && refined_ok >= 95 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn k_selection() -> Outcome {
    let mut ok = 0;
    let radius = 10.0 / std::f64::consts::SQRT_2;
    for seed in 0..100u64 {
        let (x, _) = gaussian_blobs(&ring_centers(4, 2, radius), 10, 1.0, seed + 5000);
        let f = standardized(x);
        let e = spectral_select::spectral::distance_matrix(&f).unwrap();
        let cfg = SomConfig { seed, ..Default::default() };
        let v = validate_k(&f, &e, &[2, 3, 4, 5, 6], &cfg).unwrap();
        ok += (v.chosen_k == 4 && v.silhouette_best == 4 && v.dunn_best == Some(4)) as usize;
    }
    let detail = format!("k = 4 with both indices maximal at 4 in {ok}/100 (need 95)");
    if ok >= 95 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn study_reproduction() -> Outcome {
    let Some(path) = std::env::var_os("STUDY_DATASET") else {
        return Outcome::Skip("set STUDY_DATASET to the season-level study CSV to run".into());
    };
    let config = PipelineConfig { input: PathBuf::from(path), seed: 2021, ..Default::default() };
    let out = match run_pipeline(&config, Stage::Run, None) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(format!("pipeline failed: {e}")),
    };
    let r = out.report.expect("full run has a report");
    let mut checks = Vec::new();
    let r2 = r.forest.refined.oob_r2.unwrap_or(f64::NAN);
    checks.push(((r2 - 0.79).abs() <= 0.03, format!("refined r² {r2:.4}")));
    let selected: BTreeSet<&str> = r.forest.selection.variables.iter().map(String::as_str).collect();
    let expected = BTreeSet::from(["Shots_OT", "Possession", "Shots", "Shots_Conceded", "Pass_Success"]);
    checks.push((selected == expected, format!("selected {selected:?}")));
    checks.push((r.validation.chosen_k == 4, format!("chosen k {}", r.validation.chosen_k)));
    let target = [4usize, 15, 37, 94];
    let swaps = if r.clusters.sizes.len() == 4 {
        r.clusters.sizes.iter().zip(target).map(|(a, b)| a.abs_diff(b)).sum::<usize>() / 2
    } else {
        usize::MAX
    };
    checks.push((swaps <= 2, format!("sizes {:?}", r.clusters.sizes)));
    let sc1: BTreeSet<&str> = r
        .clusters
        .members
        .iter()
        .filter(|m| m.cluster == 1)
        .map(|m| m.team_name.as_str())
        .collect();
    let want = BTreeSet::from(["Barcelona", "Bayern Munich", "Manchester City", "Paris Saint Germain"]);
    checks.push((sc1 == want, format!("SC1 {sc1:?}")));
    let avg = r.clusters.avg_silhouette;
    checks.push(((avg - 0.61).abs() <= 0.05, format!("avg silhouette {avg:.3}")));
    let bench = r.benchmark_comparison.benchmark_avg_silhouette.unwrap_or(f64::NAN);
    checks.push(((bench - 0.04).abs() <= 0.03, format!("benchmark silhouette {bench:.3}")));
    let detail = checks.iter().map(|(ok, d)| format!("{}{d}", if *ok { "" } else { "✗ " })).collect::<Vec<_>>().join("; ");
    if checks.iter().all(|c| c.0) {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

const ARTIFACTS: [&str; 7] = [
    "report.json",
    "embedding.csv",
    "clusters.csv",
    "validation.csv",
    "vim.csv",
    "descriptives.csv",
    "graph.dot",
];

fn cli_run(input: &Path, out: &Path, threads: Option<usize>) -> bool {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spectral-select"));
    if let Some(t) = threads {
        cmd.args(["--threads", &t.to_string()]);
    }
    cmd.arg("run")
        .arg("--input")
        .arg(input)
        .arg("--out")
        .arg(out)
        .args(["--seed", "17", "--no-cache", "--n-trees", "200"]);
    cmd.output().map(|o| o.status.success()).unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("league.csv");
    let spec = LeagueSpec { groups: 3, teams_per_group: 6, seasons: 3, seed: 9, ..Default::default() };
    let (records, _) = planted_league(&spec);
    spectral_select::dataset::write_team_seasons(&records, std::fs::File::create(&input).unwrap()).unwrap();
    let runs = [(dir.path().join("a"), None), (dir.path().join("b"), None), (dir.path().join("c"), Some(2))];
    for (out, threads) in &runs {
        if !cli_run(&input, out, *threads) {
            return Outcome::Fail(format!("run into {} failed", out.display()));
        }
    }
    let mut differing = Vec::new();
    for name in ARTIFACTS {
        let first = std::fs::read(runs[0].0.join(name)).unwrap_or_default();
        if first.is_empty() || runs[1..].iter().any(|(o, _)| std::fs::read(o.join(name)).unwrap_or_default() != first) {
            differing.push(name);
        }
    }
    let detail = "3 CLI runs (default pool twice, 2 threads once), 7 artifacts compared".to_string();
    if differing.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; differing {differing:?}"))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 Laplacian invariants", laplacian_invariants),
        ("2 bisection recovery", bisection_recovery),
        ("3 index oracle equivalence", oracle_equivalence),
        ("4 forest sanity", forest_sanity),
        ("5 k selection", k_selection),
        ("6 study reproduction (conditional)", study_reproduction),
        ("7 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match check() {
            Outcome::Pass(d) => println!("PASS  criterion {name}: {d}"),
            Outcome::Skip(d) => println!("SKIP  criterion {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
