//! Table reproduction: every row of a table is fitted on `reps` datasets
//! (simulation tables) or `reps` chain seeds (case studies), then averaged.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sparsemix::cluster::Distance;
use sparsemix::eval::{evaluate, ReferenceParams};
use sparsemix::model::{Dataset, E0Policy, MeanPrior, PriorSpec};
use sparsemix::postid::{estimate_k0, identify, quantile_sorted};
use sparsemix::randkit::derive_seed;
use sparsemix::sampler::{run_chain, ChainConfig};

use crate::commands::reference_for;
use crate::config::DataSource;
use crate::{log, BenchArgs, CliError};

#[derive(Clone, Copy, Debug)]
struct Row {
    ng: bool,
    k: usize,
    e0: E0Policy,
}

const fn sta(k: usize) -> Row {
    Row { ng: false, k, e0: E0Policy::GammaHyper { a: 10.0 } }
}

const fn ng_gamma(k: usize) -> Row {
    Row { ng: true, k, e0: E0Policy::GammaHyper { a: 10.0 } }
}

const fn ng_fixed(k: usize, value: f64) -> Row {
    Row { ng: true, k, e0: E0Policy::Fixed { value } }
}

enum Source {
    Simulated(&'static str),
    Builtin(&'static str),
}

impl Source {
    fn text(&self, seed: u64, rep: usize) -> String {
        match self {
            Source::Simulated(design) => format!("sim:{design}:{}", derive_seed(seed, rep as u64)),
            Source::Builtin(name) => format!("builtin:{name}"),
        }
    }
}

struct Table {
    source: Source,
    rows: Vec<Row>,
    euclidean: bool,
}

fn table(n: u8) -> Result<Table, CliError> {
    Ok(match n {
        1 => Table {
            source: Source::Simulated("equal"),
            rows: vec![
                sta(4),
                sta(15),
                sta(30),
                ng_gamma(4),
                ng_gamma(15),
                ng_gamma(30),
                ng_fixed(4, 0.01),
                ng_fixed(15, 0.01),
                ng_fixed(30, 0.01),
                ng_fixed(30, 0.001),
                ng_fixed(30, 0.00001),
            ],
            euclidean: false,
        },
        2 => Table {
            source: Source::Simulated("unequal"),
            rows: vec![
                sta(4),
                sta(15),
                sta(30),
                ng_fixed(4, 0.01),
                ng_fixed(15, 0.01),
                ng_fixed(30, 0.01),
                ng_fixed(30, 0.001),
                ng_fixed(30, 0.00001),
            ],
            euclidean: false,
        },
        3 => Table {
            source: Source::Builtin("crabs"),
            rows: vec![sta(4), sta(15), sta(30), ng_fixed(4, 0.01), ng_fixed(15, 0.01), ng_fixed(30, 0.01)],
            euclidean: true,
        },
        4 => Table {
            source: Source::Builtin("iris"),
            rows: vec![sta(3), sta(15), sta(30), ng_fixed(3, 0.01), ng_fixed(15, 0.01), ng_fixed(30, 0.01)],
            euclidean: false,
        },
        other => return Err(CliError::Usage(format!("no table {other}; expected 1, 2, 3 or 4"))),
    })
}

#[derive(Clone, Debug, Default)]
struct Scores {
    m0_rho: f64,
    mcr: Option<f64>,
    mse: Option<f64>,
}

#[derive(Clone, Debug, Default)]
struct Cell {
    e0_median: Option<f64>,
    k0_hat: usize,
    m0: usize,
    mahalanobis: Option<Scores>,
    euclidean: Option<Scores>,
    failures: Vec<String>,
}

fn scores(
    archive: &sparsemix::sampler::ChainArchive,
    distance: Distance,
    seed: u64,
    truth: &[i64],
    reference: &ReferenceParams,
) -> Result<Scores, CliError> {
    let id = identify(archive, distance, seed)?;
    let report = evaluate(&id.draws, Some(truth), Some(reference))?;
    Ok(Scores { m0_rho: report.m0_rho, mcr: report.mcr, mse: report.mse_mu })
}

fn run_cell(data: &Dataset, reference: &ReferenceParams, row: Row, config: &ChainConfig, euclidean: bool) -> Cell {
    let prior = if row.ng { MeanPrior::normal_gamma() } else { MeanPrior::Standard };
    let spec = PriorSpec::new(row.k, prior, row.e0);
    let mut cell = Cell::default();
    let archive = match run_chain(data, &spec, config) {
        Ok(a) => a,
        Err(e) => {
            cell.failures.push(format!("fit:{}", e.kind()));
            return cell;
        }
    };
    if let E0Policy::GammaHyper { .. } = row.e0 {
        let mut e0 = archive.e0.clone();
        e0.sort_by(f64::total_cmp);
        cell.e0_median = Some(quantile_sorted(&e0, 0.5));
    }
    match estimate_k0(&archive) {
        Ok(k) => (cell.k0_hat, cell.m0) = (k.k0_hat, k.m0),
        Err(e) => {
            cell.failures.push(format!("k0:{}", e.kind()));
            return cell;
        }
    }
    let truth = data.labels().expect("bench datasets are labelled");
    match scores(&archive, Distance::Mahalanobis, config.seed, truth, reference) {
        Ok(s) => cell.mahalanobis = Some(s),
        Err(e) => cell.failures.push(format!("mahalanobis:{}", e.kind())),
    }
    if euclidean {
        match scores(&archive, Distance::Euclidean, config.seed, truth, reference) {
            Ok(s) => cell.euclidean = Some(s),
            Err(e) => cell.failures.push(format!("euclidean:{}", e.kind())),
        }
    }
    cell
}

/// Mean and Monte Carlo standard error; `NA` when nothing was observed.
fn mean_se(values: &[f64]) -> (String, String) {
    let n = values.len();
    if n == 0 {
        return ("NA".into(), "NA".into());
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        format!("{:.4}", (var / n as f64).sqrt())
    } else {
        "NA".into()
    };
    (format!("{mean:.4}"), se)
}

fn aggregate(row: Row, cells: &[Cell], euclidean: bool) -> String {
    let ok: Vec<&Cell> = cells.iter().filter(|c| c.k0_hat > 0).collect();
    // modal K̂₀ across replications, ties to the smaller value
    let mut hist = std::collections::BTreeMap::new();
    for c in &ok {
        *hist.entry(c.k0_hat).or_insert(0usize) += 1;
    }
    let mode = hist.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&k, &n)| (k, n));
    let at_mode: Vec<&&Cell> = ok.iter().filter(|c| Some(c.k0_hat) == mode.map(|m| m.0)).collect();
    let collect = |f: &dyn Fn(&Cell) -> Option<f64>| at_mode.iter().filter_map(|c| f(c)).collect::<Vec<f64>>();

    let mut s = String::new();
    let _ = write!(s, "{},{}", if row.ng { "Ng" } else { "Sta" }, row.k);
    let e0_hat: Vec<f64> = ok.iter().filter_map(|c| c.e0_median).collect();
    match row.e0 {
        E0Policy::GammaHyper { .. } => {
            let _ = write!(s, ",{},NA", mean_se(&e0_hat).0);
        }
        E0Policy::Fixed { value } => {
            let _ = write!(s, ",NA,{value}");
        }
    }
    match mode {
        Some((k, n)) => {
            let _ = write!(s, ",{k},{n}");
        }
        None => s.push_str(",NA,0"),
    }
    let _ = write!(s, ",{}", cells.len());
    let m0: Vec<f64> = at_mode.iter().map(|c| c.m0 as f64).collect();
    let mut cols = vec![mean_se(&m0)];
    cols.push(mean_se(&collect(&|c| c.mahalanobis.as_ref().map(|s| s.m0_rho))));
    cols.push(mean_se(&collect(&|c| c.mahalanobis.as_ref().and_then(|s| s.mcr))));
    cols.push(mean_se(&collect(&|c| c.mahalanobis.as_ref().and_then(|s| s.mse))));
    if euclidean {
        cols.push(mean_se(&collect(&|c| c.euclidean.as_ref().map(|s| s.m0_rho))));
        cols.push(mean_se(&collect(&|c| c.euclidean.as_ref().and_then(|s| s.mcr))));
        cols.push(mean_se(&collect(&|c| c.euclidean.as_ref().and_then(|s| s.mse))));
    }
    for (m, se) in cols {
        let _ = write!(s, ",{m},{se}");
    }
    let failures: Vec<String> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.failures.iter().map(move |f| format!("rep{}:{f}", i + 1)))
        .collect();
    let _ = writeln!(s, ",{}", if failures.is_empty() { "NA".to_string() } else { failures.join(";") });
    s
}

fn header(euclidean: bool) -> String {
    let mut cols = vec!["prior", "k", "e0_hat", "e0_fixed", "k0_hat", "k0_hat_reps", "reps"];
    let metrics: &[&str] = if euclidean {
        &["m0", "m0_rho", "mcr", "mse_mu", "m0_rho_euclid", "mcr_euclid", "mse_mu_euclid"]
    } else {
        &["m0", "m0_rho", "mcr", "mse_mu"]
    };
    let mut named = Vec::new();
    for m in metrics {
        named.push(m.to_string());
        named.push(format!("{m}_se"));
    }
    cols.extend(named.iter().map(String::as_str));
    cols.push("failures");
    cols.join(",") + "\n"
}

pub fn run(args: BenchArgs, root: &Path) -> Result<(), CliError> {
    let grid = table(args.table)?;
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let out = args.out.unwrap_or_else(|| root.join(format!("bench-table{}", args.table)));
    fs::create_dir_all(&out)?;

    // datasets and references, one per replication
    let mut inputs: Vec<(Dataset, ReferenceParams)> = Vec::with_capacity(args.reps);
    for rep in 1..=args.reps {
        let source = DataSource::parse(&grid.source.text(args.seed, rep), true, None)?;
        let simulated = matches!(source, DataSource::Simulated { .. });
        if !simulated && rep > 1 {
            inputs.push(inputs[0].clone());
            continue;
        }
        let data = source.load()?;
        let truth = data.labels().expect("bench datasets are labelled").to_vec();
        let config = ChainConfig {
            burn_in: args.burnin,
            iterations: args.iters,
            seed: derive_seed(args.seed, 0),
            ..ChainConfig::default()
        };
        let reference = reference_for(&source, &data, &truth, &config)?;
        inputs.push((data, reference));
    }

    let cells: Vec<(usize, usize)> = (0..grid.rows.len()).flat_map(|r| (0..args.reps).map(move |p| (r, p))).collect();
    let results = Mutex::new(vec![vec![Cell::default(); args.reps]; grid.rows.len()]);
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len());
    log(&format!("bench: table {} with {} cells on {workers} threads", args.table, cells.len()));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(r, p)) = cells.get(i) else { break };
                let (data, reference) = &inputs[p];
                let config = ChainConfig {
                    burn_in: args.burnin,
                    iterations: args.iters,
                    store_allocations: true,
                    store_sigma: false,
                    seed: derive_seed(derive_seed(args.seed, p as u64 + 1), 100 + r as u64),
                };
                let cell = run_cell(data, reference, grid.rows[r], &config, grid.euclidean);
                log(&format!("bench: row {} rep {} done (K0 = {})", r + 1, p + 1, cell.k0_hat));
                results.lock().expect("no worker panicked")[r][p] = cell;
            });
        }
    });

    let results = results.into_inner().expect("no worker panicked");
    let mut csv = header(grid.euclidean);
    for (row, cells) in grid.rows.iter().zip(&results) {
        csv.push_str(&aggregate(*row, cells, grid.euclidean));
    }
    let path = out.join(format!("table{}.csv", args.table));
    fs::write(&path, &csv)?;
    print!("{csv}");
    log(&format!("bench: wrote {}", path.display()));
    Ok(())
}
