use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sparsemix::eval::{bayes_reference, evaluate as evaluate_draws, ReferenceParams};
use sparsemix::model::{Dataset, E0Policy, MeanPrior, PriorSpec};
use sparsemix::postid::{
    estimate_k0, identified_summaries, identify as identify_archive, quantile_sorted, IdentifiedDraws,
};
use sparsemix::randkit::derive_seed;
use sparsemix::sampler::{run_chain, ChainArchive, ChainConfig};
use sparsemix::simdata;

use crate::config::{
    ChainSection, DataSection, DataSource, FileConfig, OutputSection, PriorKind, PriorSection, RunConfig,
};
use crate::{log, CliError, DistanceArg, EvaluateArgs, FitArgs, IdentifyArgs, SimulateArgs};

/// Replaces characters that are awkward in directory names.
fn slug(text: &str) -> String {
    text.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' }).collect()
}

pub fn simulate(args: SimulateArgs, root: &Path) -> Result<(), CliError> {
    let design = simdata::design_by_name(&args.design).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = args.out.unwrap_or_else(|| root.join(format!("simulate-{}", slug(&args.design))));
    fs::create_dir_all(&out)?;
    let mut manifest = String::from("rep,seed,source,file\n");
    for rep in 1..=args.reps {
        let seed = derive_seed(args.seed, rep as u64);
        let data = simdata::generate(&design, seed)?;
        let file = format!("{}-{rep:03}.csv", slug(&args.design));
        simdata::write_csv(&data, &out.join(&file))?;
        let _ = writeln!(manifest, "{rep},{seed},sim:{}:{seed},{file}", args.design);
    }
    fs::write(out.join("manifest.csv"), &manifest)?;
    print!("{manifest}");
    log(&format!("simulate: wrote {} datasets to {}", args.reps, out.display()));
    Ok(())
}

fn flags_config(args: &FitArgs) -> FileConfig {
    FileConfig {
        data: DataSection {
            source: args.data.clone(),
            header: args.no_header.then_some(false),
            label_column: args.label_column.clone(),
        },
        prior: PriorSection {
            k: args.k,
            mean: args.prior,
            e0: args.e0.map(|e| e.to_string()),
            mh_step: args.mh_step,
            nu1: args.nu1,
            nu2: args.nu2,
        },
        chain: ChainSection {
            iters: args.iters,
            burnin: args.burnin,
            seed: args.seed,
            store_sigma: args.store_sigma.then_some(true),
            store_allocations: args.no_allocations.then_some(false),
        },
        output: OutputSection { dir: args.out.clone() },
    }
}

fn fit_summary(archive: &ChainArchive, run: &RunConfig) -> Result<String, CliError> {
    let kpost = estimate_k0(archive)?;
    let prior = match run.spec.mean_prior {
        MeanPrior::Standard => PriorKind::Standard,
        MeanPrior::NormalGamma { .. } => PriorKind::Ng,
    };
    let mut s = String::new();
    let _ = writeln!(s, "dataset={}", archive.dataset);
    let _ = writeln!(s, "source={}", run.source);
    let _ = writeln!(s, "n={}", archive.n);
    let _ = writeln!(s, "dim={}", archive.dim);
    let _ = writeln!(s, "k={}", archive.k);
    let _ = writeln!(s, "prior={}", if prior == PriorKind::Ng { "ng" } else { "standard" });
    let _ = writeln!(s, "e0_policy={}", crate::config::E0Arg(run.spec.e0_policy));
    let _ = writeln!(s, "burn_in={}", run.chain.burn_in);
    let _ = writeln!(s, "iterations={}", archive.len());
    let _ = writeln!(s, "seed={}", run.chain.seed);
    let _ = writeln!(s, "k0_hat={}", kpost.k0_hat);
    let _ = writeln!(s, "m0={}", kpost.m0);
    match archive.e0_acceptance {
        Some(a) => {
            let _ = writeln!(s, "e0_acceptance={a:?}");
        }
        None => s.push_str("e0_acceptance=NA\n"),
    }
    if let E0Policy::GammaHyper { .. } = run.spec.e0_policy {
        let mut e0 = archive.e0.clone();
        e0.sort_by(f64::total_cmp);
        let _ = writeln!(s, "e0_median={:?}", quantile_sorted(&e0, 0.5));
    }
    for (h, &c) in kpost.counts.iter().enumerate().filter(|(_, &c)| c > 0) {
        let _ = writeln!(s, "k0_histogram.{h}={c}");
    }
    Ok(s)
}

fn counts_trace(archive: &ChainArchive) -> String {
    let mut s = String::from("iteration");
    for k in 1..=archive.k {
        let _ = write!(s, ",n{k}");
    }
    s.push_str(",k0\n");
    for m in 0..archive.len() {
        let _ = write!(s, "{}", archive.config.burn_in + m);
        for c in archive.counts_row(m) {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",{}", archive.k0[m]);
    }
    s
}

pub fn fit(args: FitArgs, root: &Path) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => FileConfig::read(path)?,
        None => FileConfig::default(),
    };
    let run = RunConfig::resolve(file.overlay(flags_config(&args)), |src| root.join(format!("fit-{}", slug(src))))?;
    let data = run.source.load()?;
    fs::create_dir_all(&run.out)?;
    let started = Instant::now();
    let archive = run_chain(&data, &run.spec, &run.chain)?;
    log(&format!(
        "fit: {} sweeps on {} in {:.1}s",
        run.chain.burn_in + run.chain.iterations,
        data.name(),
        started.elapsed().as_secs_f64()
    ));
    archive.write(&run.out.join("archive"))?;
    let summary = fit_summary(&archive, &run)?;
    fs::write(run.out.join("summary.txt"), &summary)?;
    fs::write(run.out.join("counts_trace.csv"), counts_trace(&archive))?;
    let toml = toml::to_string(&run.resolved).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(run.out.join("config.toml"), toml)?;
    print!("{summary}");
    log(&format!("fit: wrote {}", run.out.display()));
    Ok(())
}

fn existing_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} directory {} does not exist", path.display())))
    }
}

/// Accepts either the archive directory itself or a `fit` output directory.
fn archive_dir(path: &Path) -> PathBuf {
    let nested = path.join("archive");
    if nested.join("meta.json").is_file() {
        nested
    } else {
        path.to_path_buf()
    }
}

pub fn identify(args: IdentifyArgs, root: &Path) -> Result<(), CliError> {
    existing_dir(&args.archive, "archive")?;
    let archive = ChainArchive::read(&archive_dir(&args.archive))?;
    let name = match args.distance {
        DistanceArg::Mahalanobis => "mahalanobis",
        DistanceArg::Euclidean => "euclidean",
    };
    let out = args.out.unwrap_or_else(|| root.join(format!("identify-{}-{name}", slug(&archive.dataset))));
    let started = Instant::now();
    let id = identify_archive(&archive, args.distance.into(), args.seed)?;
    log(&format!("identify: {name} clustering in {:.1}s", started.elapsed().as_secs_f64()));
    id.draws.write(&out)?;
    fs::write(out.join("point_process.csv"), id.points.to_csv())?;
    if id.draws.is_empty() {
        log("identify: no iteration could be relabelled; summaries.csv not written");
    } else {
        fs::write(out.join("summaries.csv"), identified_summaries(&id.draws)?.to_csv())?;
    }
    let report = evaluate_draws(&id.draws, None, None)?;
    report.write(&out)?;
    print!("{}", report.to_kv());
    log(&format!("identify: wrote {}", out.display()));
    Ok(())
}

/// Reference parameters for MSE_μ: the generating parameters for simulated
/// data, otherwise posterior means with allocations fixed at the truth.
pub fn reference_for(
    source: &DataSource,
    data: &Dataset,
    truth: &[i64],
    config: &ChainConfig,
) -> Result<ReferenceParams, CliError> {
    if let DataSource::Simulated { design, .. } = source {
        return Ok(ReferenceParams::from_design(&simdata::design_by_name(design)?));
    }
    let groups = data.n_groups().unwrap_or(1);
    Ok(bayes_reference(data, truth, &PriorSpec::standard(groups), config)?)
}

pub fn evaluate(args: EvaluateArgs, root: &Path) -> Result<(), CliError> {
    existing_dir(&args.identified, "identified draws")?;
    let draws = IdentifiedDraws::read(&args.identified)?;
    let out = args.out.unwrap_or_else(|| root.join(format!("evaluate-{}", slug(&draws.dataset))));
    let report = match &args.truth {
        None => evaluate_draws(&draws, None, None)?,
        Some(text) => {
            let source = DataSource::parse(text, !args.no_header, args.label_column.clone())?;
            source.validate()?;
            let data = source.load()?;
            let truth =
                data.labels().ok_or_else(|| CliError::Config(format!("truth source {source} carries no labels")))?;
            if data.n() != draws.n {
                return Err(sparsemix::Error::DimensionMismatch { expected: draws.n, got: data.n() }.into());
            }
            let config = ChainConfig { seed: args.seed, ..ChainConfig::default() };
            let reference = reference_for(&source, &data, truth, &config)?;
            evaluate_draws(&draws, Some(truth), Some(&reference))?
        }
    };
    report.write(&out)?;
    print!("{}", report.to_kv());
    log(&format!("evaluate: wrote {}", out.display()));
    Ok(())
}
