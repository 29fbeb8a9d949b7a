use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ldp_calibrate::calibrate::{
    fit as fit_prior, noise_model_for, significance_threshold, CalibrationConfig, Calibrator,
    ModelDocument, NoiseModel, PriorModel,
};
use ldp_calibrate::data::{flatten_single_item, read_transactions, synthesize, SyntheticSpec};
use ldp_calibrate::eval::{
    estimation_error, heavy_hitter_report, run_experiment, squared_error, write_records_csv,
    Scenario, ThresholdGrid, TrialSet, UserSource,
};
use ldp_calibrate::protocols::report_io::{encode_report, ReportHeader, ReportReader};
use ldp_calibrate::protocols::{
    aggregate as aggregate_reports, itemset_aggregate, pad_and_sample, percentile_l, perturb,
    simulate_estimates, simulate_itemset_estimates, Domain, PerturbedReport, ProtocolSpec,
};
use ldp_calibrate::rng::{derive_seed, StreamFactory};
use ldp_calibrate::{FrequencyTable, TableLabel};
use serde_json::json;

use crate::args::{
    AggregateArgs, CalibrateArgs, EvaluateArgs, FitArgs, OutArgs, SimulateArgs, SourceArgs,
    SweepArgs,
};
use crate::tables::{read_table, write_table, Meta, TableFile};
use crate::Failure;

/// Keys describing where a table came from, carried along the pipeline.
const LINEAGE: &[&str] = &[
    "source", "seed", "trial", "protocol", "epsilon", "d", "l", "dummies",
];

struct Source {
    truth: FrequencyTable,
    ids: Vec<u64>,
    users: UserSource,
}

impl Source {
    fn domain(&self) -> Result<Domain, Failure> {
        Ok(match &self.users {
            UserSource::Single(_) => Domain::new(self.truth.d())?,
            UserSource::ItemSets { l, .. } => Domain::with_dummies(self.truth.d(), *l)?,
        })
    }

    fn l(&self) -> usize {
        match &self.users {
            UserSource::Single(_) => 1,
            UserSource::ItemSets { l, .. } => *l,
        }
    }
}

fn check_source(args: &SourceArgs) -> Result<(), Failure> {
    if !(args.percentile > 0.0 && args.percentile <= 1.0) {
        return Err(Failure::config(format!(
            "--percentile must lie in (0, 1], got {}",
            args.percentile
        )));
    }
    if let Some(s) = &args.synthetic {
        if s.d == 0 || s.n == Some(0) || s.k_max == Some(0) {
            return Err(Failure::config(
                "--synthetic: d, n and kmax must be at least 1",
            ));
        }
        if !(s.alpha.is_finite() && s.alpha >= 0.0) {
            return Err(Failure::config(format!(
                "--synthetic: alpha must be finite and non-negative, got {}",
                s.alpha
            )));
        }
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<(), Failure> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Failure::config(format!(
            "invalid parameter: epsilon must be positive and finite, got {eps}"
        )))
    }
}

/// Population for `seed`; records the source in `meta`.
fn load_source(args: &SourceArgs, seed: u64, meta: &mut Meta) -> Result<Source, Failure> {
    if let Some(s) = &args.synthetic {
        let k_max = s.k_max.or(s.n).unwrap_or(10_000);
        let prior = PriorModel::power_law(s.alpha, k_max)?;
        let pop = synthesize(&SyntheticSpec::new(s.d, s.n, prior, derive_seed(seed, 0))?)?;
        meta.set("source", format!("synthetic:{}", s.text.replace(' ', "")));
        return Ok(Source {
            ids: (1..=s.d as u64).collect(),
            truth: pop.truth,
            users: UserSource::Single(pop.users),
        });
    }
    let path = args.dataset.as_ref().expect("clap requires a source");
    let ds = read_transactions(path)?;
    let name = path
        .file_name()
        .map_or_else(String::new, |f| f.to_string_lossy().into_owned());
    let ids = ds.original_ids().to_vec();
    if args.itemset {
        let l = percentile_l(&ds.set_sizes(), args.percentile)?;
        let users = ds.users().to_vec();
        let mut counts = vec![0u64; ds.d()];
        for u in &users {
            for &i in u.items() {
                counts[i - 1] += 1;
            }
        }
        let truth = FrequencyTable::from_counts(&counts, users.len() as u64)?;
        meta.set("source", format!("dataset:{name}:itemset"));
        meta.set("percentile", args.percentile);
        Ok(Source {
            truth,
            ids,
            users: UserSource::ItemSets { users, l },
        })
    } else {
        let view = flatten_single_item(&ds)?;
        meta.set("source", format!("dataset:{name}"));
        Ok(Source {
            truth: view.truth,
            ids,
            users: UserSource::Single(view.users),
        })
    }
}

fn out_dir(out: &OutArgs) -> Result<&Path, Failure> {
    fs::create_dir_all(&out.out).map_err(|e| Failure::io(&out.out, e))?;
    Ok(&out.out)
}

fn numbered(dir: &Path, stem: &str, ext: &str, index: usize, total: usize) -> PathBuf {
    if total == 1 {
        dir.join(format!("{stem}.{ext}"))
    } else {
        dir.join(format!("{stem}-{index:03}.{ext}"))
    }
}

/// One collection under `seed`, optionally keeping the reports.
fn collect(
    source: &Source,
    spec: &ProtocolSpec,
    domain: &Domain,
    seed: u64,
    keep: bool,
) -> Result<(FrequencyTable, Option<Vec<PerturbedReport>>), Failure> {
    let d = source.truth.d();
    match (&source.users, keep) {
        (UserSource::Single(users), false) => {
            Ok((simulate_estimates(spec, domain, users, seed)?, None))
        }
        (UserSource::ItemSets { users, .. }, false) => {
            Ok((simulate_itemset_estimates(spec, domain, users, seed)?, None))
        }
        (UserSource::Single(users), true) => {
            let streams = StreamFactory::new(seed);
            let reports = users
                .iter()
                .enumerate()
                .map(|(u, &item)| perturb(spec, domain, item, &mut streams.stream(u as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((aggregate_reports(spec, &reports, d)?, Some(reports)))
        }
        (UserSource::ItemSets { users, l }, true) => {
            let streams = StreamFactory::new(seed);
            let reports = users
                .iter()
                .enumerate()
                .map(|(u, user)| {
                    let mut rng = streams.stream(u as u64);
                    let item = pad_and_sample(user, *l, domain, &mut rng)?;
                    perturb(spec, domain, item, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((itemset_aggregate(spec, &reports, d, *l)?, Some(reports)))
        }
    }
}

fn write_reports_file(
    path: &Path,
    header: &ReportHeader,
    meta: &Meta,
    reports: &[PerturbedReport],
) -> Result<(), Failure> {
    let io = |e| Failure::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", header.to_line()).map_err(io)?;
    meta.write_header(&mut out).map_err(io)?;
    let len = header.d + header.dummy_count;
    for r in reports {
        writeln!(out, "{}", encode_report(r, len)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    check_epsilon(args.epsilon)?;
    check_source(&args.source)?;
    if args.trials == 0 {
        return Err(Failure::config("--trials must be at least 1"));
    }
    let mut base = Meta::new("simulate");
    let source = load_source(&args.source, args.seed, &mut base)?;
    let domain = source.domain()?;
    let spec = ProtocolSpec::new(args.protocol, args.epsilon, domain.len())?;
    let dir = out_dir(&args.out)?;
    let d = source.truth.d();

    let mut truth_meta = base.clone();
    truth_meta
        .set("label", TableLabel::True)
        .set("n", source.truth.n())
        .set("d", d)
        .set("seed", args.seed);
    write_table(
        &dir.join("truth.csv"),
        &truth_meta,
        &source.truth,
        &source.ids,
    )?;

    for t in 0..args.trials {
        let (est, reports) = collect(
            &source,
            &spec,
            &domain,
            derive_seed(args.seed, 1 + t as u64),
            args.reports,
        )?;
        let mut meta = base.clone();
        meta.set("label", TableLabel::Estimated)
            .set("protocol", args.protocol)
            .set("epsilon", args.epsilon)
            .set("n", est.n())
            .set("d", d)
            .set("l", source.l())
            .set("dummies", domain.dummy_count())
            .set("seed", args.seed)
            .set("trial", t + 1);
        let path = numbered(dir, "estimates", "csv", t + 1, args.trials);
        write_table(&path, &meta, &est, &source.ids)?;
        if let Some(reports) = reports {
            let header = ReportHeader {
                kind: args.protocol,
                epsilon: args.epsilon,
                d,
                dummy_count: domain.dummy_count(),
                l: source.l(),
            };
            let mut rmeta = base.clone();
            rmeta.set("seed", args.seed).set("trial", t + 1);
            write_reports_file(
                &numbered(dir, "reports", "txt", t + 1, args.trials),
                &header,
                &rmeta,
                &reports,
            )?;
        }
        println!(
            "trial {}: n = {}, sum of estimates = {:.1}, wrote {}",
            t + 1,
            est.n(),
            est.sum(),
            path.display()
        );
    }
    Ok(())
}

pub fn aggregate(args: &AggregateArgs) -> Result<(), Failure> {
    let path = &args.reports;
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    let reader = ReportReader::new(BufReader::new(file))?;
    let header = reader.header().clone();
    let reports = reader.collect::<Result<Vec<_>, _>>()?;
    if reports.is_empty() {
        return Err(Failure::input(format!(
            "{} holds no reports",
            path.display()
        )));
    }
    let spec = header.spec()?;
    let est = if header.dummy_count == 0 && header.l == 1 {
        aggregate_reports(&spec, &reports, header.d)?
    } else {
        itemset_aggregate(&spec, &reports, header.d, header.l)?
    };

    // provenance comments written by `simulate`
    let mut inherited = Meta::default();
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    for line in BufReader::new(file).lines().skip(1) {
        let line = line.map_err(|e| Failure::io(path, e))?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.trim().split_once('=') {
            inherited.set(k.trim(), v.trim());
        }
    }
    let mut meta = Meta::new("aggregate");
    meta.inherit(&inherited, &["source", "seed", "trial"])
        .set("label", TableLabel::Estimated)
        .set("protocol", header.kind)
        .set("epsilon", header.epsilon)
        .set("n", est.n())
        .set("d", header.d)
        .set("l", header.l)
        .set("dummies", header.dummy_count);
    let out = out_dir(&args.out)?.join("estimates.csv");
    let ids: Vec<u64> = (1..=header.d as u64).collect();
    write_table(&out, &meta, &est, &ids)?;
    println!(
        "aggregated {} reports into {}",
        reports.len(),
        out.display()
    );
    Ok(())
}

/// Noise model implied by a table's protocol metadata.
fn table_noise(file: &TableFile, path: &Path) -> Result<(NoiseModel, f64, usize), Failure> {
    let kind = file.meta.require("protocol", path)?;
    let eps: f64 = file.meta.require("epsilon", path)?;
    let l = file.meta.parsed("l")?.unwrap_or(1);
    let dummies: usize = file.meta.parsed("dummies")?.unwrap_or(0);
    let spec = ProtocolSpec::new(kind, eps, file.table.d() + dummies)?;
    Ok((noise_model_for(&spec, file.table.n(), l)?, eps, l))
}

pub fn fit(args: &FitArgs) -> Result<(), Failure> {
    let config = CalibrationConfig {
        power_law_k_max: args.kmax,
        ..CalibrationConfig::default()
    };
    config.validate()?;
    let file = read_table(&args.estimates)?;
    let (noise, epsilon, l) = match args.noise_variance {
        Some(v) => (
            NoiseModel::new(v)?,
            file.meta.parsed::<f64>("epsilon")?,
            file.meta.parsed("l")?.unwrap_or(1),
        ),
        None => {
            let (noise, eps, l) = table_noise(&file, &args.estimates)?;
            (noise, Some(eps), l)
        }
    };
    let result = fit_prior(&file.table, &noise, args.family, args.method, &config)?;
    let mut meta = Meta::new("fit");
    meta.inherit(&file.meta, LINEAGE)
        .set("family", args.family)
        .set("method", args.method);
    if let Some(k) = args.kmax {
        meta.set("kmax", k);
    }
    if let Some(v) = args.noise_variance {
        meta.set("noise_variance", v);
    }
    let mut doc = ModelDocument::new(&result.prior, &noise, file.table.n(), epsilon, l)
        .with_diagnostics(result.diagnostics.clone())
        .with_provenance(meta.into_map());
    if let Some(p) = file.meta.get("protocol") {
        doc = doc.with_protocol(p);
    }
    let out = out_dir(&args.out)?.join("model.json");
    let mut w = BufWriter::new(File::create(&out).map_err(|e| Failure::io(&out, e))?);
    doc.write(&mut w)?;
    w.flush().map_err(|e| Failure::io(&out, e))?;
    for warning in &result.diagnostics.warnings {
        eprintln!("warning: {warning}");
    }
    let params: Vec<String> = doc
        .parameters
        .iter()
        .map(|(k, v)| format!("{k} = {v:.6}"))
        .collect();
    println!(
        "{} prior: {}; wrote {}",
        doc.family,
        params.join(", "),
        out.display()
    );
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs) -> Result<(), Failure> {
    if !(args.beta > 0.0 && args.beta < 1.0) {
        return Err(Failure::config(format!(
            "--beta must lie in (0, 1), got {}",
            args.beta
        )));
    }
    let file = read_table(&args.estimates)?;
    let model_file = File::open(&args.model).map_err(|e| Failure::io(&args.model, e))?;
    let doc = ModelDocument::read(BufReader::new(model_file))?;
    let prior = doc.prior()?;
    let noise = doc.noise()?;
    let mut table = Calibrator::new(&prior, noise).calibrate_table(&file.table)?;
    let mut meta = Meta::new("calibrate");
    meta.inherit(&file.meta, LINEAGE)
        .set("label", TableLabel::Calibrated)
        .set("n", table.n())
        .set("family", &doc.family);
    if args.post_zero {
        let t = significance_threshold(table.d(), args.beta, noise.variance())?;
        let values = table
            .values()
            .iter()
            .map(|&v| if v < t { 0.0 } else { v })
            .collect();
        table = table.with_values(values, TableLabel::Calibrated)?;
        meta.set("post_zero", t).set("beta", args.beta);
    }
    let out = out_dir(&args.out)?.join("calibrated.csv");
    write_table(&out, &meta, &table, &file.ids)?;
    println!("calibrated {} items; wrote {}", table.d(), out.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    if !(args.beta > 0.0 && args.beta < 1.0) {
        return Err(Failure::config(format!(
            "--beta must lie in (0, 1), got {}",
            args.beta
        )));
    }
    if let Some(t) = args.thresholds.iter().flatten().find(|t| !t.is_finite()) {
        return Err(Failure::config(format!("--thresholds: {t} is not finite")));
    }
    let truth = read_table(&args.truth)?;
    let files = args
        .tables
        .iter()
        .map(|p| read_table(p))
        .collect::<Result<Vec<_>, _>>()?;
    for (f, path) in files.iter().zip(&args.tables) {
        if f.ids != truth.ids {
            return Err(Failure::input(format!(
                "{} does not list the same items as the truth",
                path.display()
            )));
        }
    }
    let significance = match files[0].meta.get("protocol") {
        Some(_) => {
            let (noise, _, _) = table_noise(&files[0], &args.tables[0])?;
            Some(significance_threshold(
                truth.table.d(),
                args.beta,
                noise.variance(),
            )?)
        }
        None => None,
    };
    let mut thresholds = args.thresholds.clone().unwrap_or_default();
    thresholds.extend(significance);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let tables: Vec<FrequencyTable> = files.iter().map(|f| f.table.clone()).collect();
    let set = TrialSet::new(truth.table.clone(), tables)?;
    let error = estimation_error(&set);

    let dir = out_dir(&args.out)?;
    let mut meta = Meta::new("evaluate");
    meta.inherit(&files[0].meta, LINEAGE)
        .set("tables", files.len())
        .set("beta", args.beta);
    let csv_path = dir.join("metrics.csv");
    let io = |e| Failure::io(&csv_path, e);
    let mut out = BufWriter::new(File::create(&csv_path).map_err(io)?);
    meta.write_header(&mut out).map_err(io)?;
    writeln!(out, "table,metric,threshold,value").map_err(io)?;
    let mut per_threshold = Vec::new();
    for &t in &thresholds {
        let mut sums = [(0.0, 0usize); 3];
        for (i, table) in set.trials().iter().enumerate() {
            let r = heavy_hitter_report(set.truth(), table, t);
            for (j, (name, v)) in [
                ("precision", r.precision),
                ("recall", r.recall),
                ("f_score", r.f_score),
            ]
            .into_iter()
            .enumerate()
            {
                writeln!(out, "{},{name},{t},{}", i + 1, fmt_opt(v)).map_err(io)?;
                if let Some(v) = v {
                    sums[j].0 += v;
                    sums[j].1 += 1;
                }
            }
        }
        let mean = |(s, c): (f64, usize)| (c > 0).then(|| s / c as f64);
        let skipped = |c: usize| set.trials().len() - c;
        per_threshold.push(json!({
            "threshold": t,
            "precision": mean(sums[0]), "precision_skipped": skipped(sums[0].1),
            "recall": mean(sums[1]), "recall_skipped": skipped(sums[1].1),
            "f_score": mean(sums[2]), "f_score_skipped": skipped(sums[2].1),
        }));
    }
    for (i, table) in set.trials().iter().enumerate() {
        writeln!(
            out,
            "{},squared_error,NA,{}",
            i + 1,
            squared_error(set.truth(), table)?
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)?;

    let summary = json!({
        "provenance": meta.to_json(),
        "estimation_error": error,
        "significance_threshold": significance,
        "heavy_hitters": per_threshold,
    });
    let json_path = dir.join("metrics.json");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&summary).expect("plain JSON values") + "\n",
    )
    .map_err(|e| Failure::io(&json_path, e))?;
    println!(
        "estimation error {error:.4} over {} table(s); wrote {}",
        files.len(),
        csv_path.display()
    );
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    check_source(&args.source)?;
    if args.epsilons.is_empty() {
        return Err(Failure::config("--epsilons: at least one value required"));
    }
    for &e in &args.epsilons {
        check_epsilon(e)?;
    }
    if args.trials == 0 {
        return Err(Failure::config("--trials must be at least 1"));
    }
    let calibration = CalibrationConfig {
        power_law_k_max: args.kmax,
        ..CalibrationConfig::default()
    };
    calibration.validate()?;
    let mut meta = Meta::new("sweep");
    let source = load_source(&args.source, args.seed, &mut meta)?;
    let mut scenario = Scenario::new(
        source.truth,
        source.users,
        args.protocol,
        args.epsilons.clone(),
    );
    scenario.variants = args.variants.clone();
    scenario.family = args.family;
    scenario.method = args.method;
    scenario.beta = args.beta;
    scenario.calibration = calibration;
    if let Some(t) = &args.thresholds {
        scenario.thresholds = ThresholdGrid::Fixed(t.clone());
    }
    scenario.validate()?;
    let result = run_experiment(&scenario, args.trials, derive_seed(args.seed, 1))?;

    let eps_list: Vec<String> = args.epsilons.iter().map(f64::to_string).collect();
    let variants: Vec<String> = args.variants.iter().map(ToString::to_string).collect();
    meta.set("protocol", args.protocol)
        .set("epsilons", eps_list.join(" "))
        .set("variants", variants.join(" "))
        .set("family", args.family)
        .set("method", args.method)
        .set("beta", args.beta)
        .set("trials", args.trials)
        .set("seed", args.seed);
    if let Some(k) = args.kmax {
        meta.set("kmax", k);
    }

    let dir = out_dir(&args.out)?;
    let csv_path = dir.join("results.csv");
    let io = |e| Failure::io(&csv_path, e);
    let mut out = BufWriter::new(File::create(&csv_path).map_err(io)?);
    meta.write_header(&mut out).map_err(io)?;
    write_records_csv(&mut out, &result.records)?;
    out.flush().map_err(io)?;

    let summary = json!({ "provenance": meta.to_json(), "result": result });
    let json_path = dir.join("summary.json");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&summary).expect("serializable result") + "\n",
    )
    .map_err(|e| Failure::io(&json_path, e))?;

    println!("{:>8}  {:<16} {:>14}", "epsilon", "variant", "error");
    for row in result.summary.iter().filter(|r| r.threshold.is_none()) {
        println!(
            "{:>8}  {:<16} {:>14.3}",
            row.epsilon,
            row.variant.to_string(),
            row.mean.unwrap_or(f64::NAN)
        );
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}
