use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cardiowatch::bnc::{BncModel, Structure, TrainConfig};
use cardiowatch::delineate::{delineate_record, write_fiducials_csv, DelineationConfig};
use cardiowatch::eval::{
    build_corpus, directory_rows, run_experiment, synthetic_corpus, write_metrics_csv, write_roc_csv, Corpus, Database,
    ExperimentConfig,
};
use cardiowatch::features::{read_features_csv, record_features, write_features_csv, BeatFeatures};
use cardiowatch::pipeline::{
    run_beats, self_warm, write_alarms_jsonl, write_verdicts_csv, PipelineConfig, UpdatePolicy,
};
use cardiowatch::preprocess::{preprocess, write_signal_csv, PreprocessConfig};
use cardiowatch::synth::{generate, Morphology, SyntheticSpec};
use cardiowatch::tukey::{TukeyConfig, TukeyState};
use cardiowatch::wavelet::{dwt_with_mode, write_coefficients_csv, BoundaryMode, WaveletBasis};
use cardiowatch::wfdb::{read_record, write_annotation_csv, write_record, AnomalyClass, EcgRecord};

use crate::{Cli, Command, DelineationOpts, Policy, PreprocessOpts, RecordOpts, TrainOpts, TukeyOpts, UsageError};

type CmdResult = Result<()>;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Delineate(a) => delineate(a),
        Command::Features(a) => features(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Classify(a) => classify(a),
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a, cli.seed),
        Command::TukeyDebug(a) => tukey_debug(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn pre_config(o: &PreprocessOpts) -> Result<PreprocessConfig> {
    Ok(PreprocessConfig {
        cutoff_hz: o.cutoff_hz,
        n_taps: o.taps,
        basis: o.wavelet.parse().map_err(|e| usage(format!("--wavelet: {e}")))?,
        denoise_levels: o.denoise_levels,
    })
}

fn del_config(o: &DelineationOpts) -> Result<DelineationConfig> {
    let cfg = DelineationConfig {
        uwt_levels: o.uwt_levels,
        peak_amplitude_threshold: o.peak_threshold,
        refractory_ms: o.refractory_ms,
        wave_presence_ratio: o.wave_presence,
        ..Default::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn train_config(o: &TrainOpts) -> Result<TrainConfig> {
    if o.bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    if !(o.alpha > 0.0) {
        return Err(usage("--alpha must be positive"));
    }
    let structure: Structure = o.structure.parse().map_err(|e| usage(format!("--structure: {e}")))?;
    Ok(TrainConfig {
        n_bins: o.bins,
        alpha: o.alpha,
        structure,
    })
}

fn tukey_config(o: &TukeyOpts) -> Result<TukeyConfig> {
    let cfg = TukeyConfig {
        window: o.tukey_window,
        k: o.k,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Record paths may be given with or without the `.hea` extension.
fn stem(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "hea") {
        path.with_extension("")
    } else {
        path.to_path_buf()
    }
}

fn load_record(o: &RecordOpts) -> Result<EcgRecord> {
    let s = stem(&o.record);
    read_record(&s, &o.annotator).with_context(|| format!("reading record {}", s.display()))
}

fn load_features(path: &Path) -> Result<Vec<BeatFeatures>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_features_csv(f).with_context(|| format!("reading features {}", path.display()))
}

fn load_model(path: &Path) -> Result<BncModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    BncModel::from_json(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn same_lead(a: &str, b: &str) -> bool {
    cardiowatch::eval::canonical_lead(a) == cardiowatch::eval::canonical_lead(b)
}

fn synth(a: &crate::SynthArgs, seed: u64) -> CmdResult {
    let morphology: Morphology = a.morphology.parse().map_err(|e| usage(format!("--morphology: {e}")))?;
    if a.beats == 0 || !(a.bpm > 0.0) || !(a.fs > 0.0) || !(a.noise_sigma >= 0.0) || !(a.jitter >= 0.0) {
        return Err(usage(
            "--beats, --bpm and --fs must be positive; --noise-sigma and --jitter non-negative",
        ));
    }
    let spec = SyntheticSpec {
        beats: a.beats,
        bpm: a.bpm,
        morphology,
        noise_sigma: a.noise_sigma,
        drift_amplitude: a.drift,
        drift_hz: a.drift_hz,
        sampling_rate: a.fs,
        seed,
        jitter: a.jitter,
        lead: a.lead.clone(),
        name: a.name.clone(),
    };
    let s = generate(&spec);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_record(&s.record, &a.out_dir).context("writing record")?;
    let truth: Vec<_> = s.beats.iter().map(|b| b.fiducials).collect();
    write_fiducials_csv(&truth, create(&a.out_dir.join(format!("{}_fiducials.csv", a.name)))?)
        .context("writing ground-truth fiducials")?;
    write_annotation_csv(
        &s.record,
        create(&a.out_dir.join(format!("{}_annotations.csv", a.name)))?,
    )
    .context("writing annotations")?;
    log::info!("{} beats written to {}", s.beats.len(), a.out_dir.display());
    Ok(())
}

fn preprocess_cmd(a: &crate::PreprocessArgs) -> CmdResult {
    let pre = pre_config(&a.pre)?;
    let rec = load_record(&a.input)?;
    let x = rec
        .lead(&a.input.lead)
        .ok_or_else(|| anyhow::anyhow!("lead {} not in record {}", a.input.lead, rec.name()))?;
    let p = preprocess(x, rec.sampling_rate(), &pre).context("preprocessing")?;
    if let Some(path) = &a.coefficients {
        let basis = WaveletBasis::new(pre.basis)?;
        let d = dwt_with_mode(&p.filtered, &basis, pre.denoise_levels, BoundaryMode::Symmetric)
            .context("wavelet decomposition")?;
        let mut w = create(path)?;
        write_coefficients_csv(&mut w, &d.details, &d.approx)?;
        w.flush()?;
    }
    let mut out = output(a.out.as_deref())?;
    write_signal_csv(&mut out, &p.clean.samples)?;
    out.flush()?;
    Ok(())
}

fn delineate(a: &crate::DelineateArgs) -> CmdResult {
    let pre = pre_config(&a.pre)?;
    let del = del_config(&a.del)?;
    let rec = load_record(&a.input)?;
    let d = delineate_record(&rec, &a.input.lead, &pre, &del).context("delineating")?;
    if d.delineation.dropped > 0 {
        log::warn!("{} beats could not be delineated in order", d.delineation.dropped);
    }
    let mut out = output(a.out.as_deref())?;
    write_fiducials_csv(&d.delineation.beats, &mut out)?;
    out.flush()?;
    Ok(())
}

fn features(a: &crate::FeaturesArgs) -> CmdResult {
    if a.record.is_empty() && a.dir.is_empty() {
        return Err(usage("give at least one --record or --dir"));
    }
    let pre = pre_config(&a.pre)?;
    let del = del_config(&a.del)?;
    let leads: Vec<String> = if a.lead.is_empty() {
        cardiowatch::eval::SHARED_LEADS.iter().map(|s| s.to_string()).collect()
    } else {
        a.lead.clone()
    };
    let mut stems: Vec<PathBuf> = a.record.iter().map(|p| stem(p)).collect();
    for dir in &a.dir {
        let mut found: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "hea"))
            .map(|p| p.with_extension(""))
            .collect();
        found.sort();
        stems.extend(found);
    }
    let mut rows = Vec::new();
    for s in &stems {
        let rec = read_record(s, &a.annotator).with_context(|| format!("reading record {}", s.display()))?;
        let names: Vec<String> = rec.lead_names().iter().map(|n| n.to_string()).collect();
        for lead in &leads {
            match names.iter().find(|n| same_lead(n, lead)) {
                Some(n) => rows
                    .extend(record_features(&rec, n, &pre, &del).with_context(|| format!("{} lead {n}", rec.name()))?),
                None => log::info!("{}: no lead {lead}", rec.name()),
            }
        }
    }
    let mut out = output(a.out.as_deref())?;
    write_features_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn train(a: &crate::TrainArgs, seed: u64) -> CmdResult {
    let cfg = train_config(&a.train)?;
    let mut rows: Vec<BeatFeatures> = load_features(&a.features)?
        .into_iter()
        .filter(|b| b.true_class.is_some())
        .filter(|b| a.lead.as_deref().is_none_or(|l| same_lead(&b.lead, l)))
        .collect();
    if rows.is_empty() {
        anyhow::bail!("{}: no labelled beats to train on", a.features.display());
    }
    if a.balance {
        let (kept, entries) = cardiowatch::eval::balance(rows, seed);
        for e in entries {
            log::info!("{}: kept {}, dropped {}", e.class.name(), e.kept, e.dropped);
        }
        rows = kept;
    }
    let model = BncModel::fit(&rows, &cfg).context("training")?;
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "{}", model.to_json())?;
    out.flush()?;
    Ok(())
}

fn classify(a: &crate::ClassifyArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let beats = load_features(&a.features)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record([
        "record",
        "lead",
        "beat",
        "posteriorN",
        "posteriorV",
        "posteriorA",
        "posteriorMI",
        "predicted",
        "class",
    ])?;
    for b in &beats {
        let p = model.posterior(b);
        let mut row = vec![b.record.clone(), b.lead.clone(), b.beat.to_string()];
        row.extend(p.probabilities.iter().map(|v| v.to_string()));
        row.push(p.predicted.name().to_string());
        row.push(b.true_class.map_or_else(|| "NA".to_string(), |c| c.name().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn run(a: &crate::RunArgs) -> CmdResult {
    if a.win == 0 {
        return Err(usage("--win must be at least 1"));
    }
    if a.r == 0 {
        return Err(usage("--r must be at least 1"));
    }
    let pre = pre_config(&a.pre)?;
    let del = del_config(&a.del)?;
    let tcfg = tukey_config(&a.tukey)?;
    let model = load_model(&a.model)?;
    let rec = load_record(&a.input)?;
    let beats = record_features(&rec, &a.input.lead, &pre, &del).context("extracting features")?;
    let tukey = match &a.reference {
        Some(p) => {
            let reference = load_features(p)?;
            TukeyState::warm(tcfg, &reference)?
        }
        None => {
            let t = self_warm(&beats, &model, tcfg).context("warming the boxplot window")?;
            if !t.is_warm() {
                anyhow::bail!("too few beats predicted Normal to fill the boxplot window; pass --reference");
            }
            t
        }
    };
    let cfg = PipelineConfig {
        win: a.win,
        r: a.r,
        update_policy: match a.policy {
            Policy::Frozen => UpdatePolicy::Frozen,
            Policy::Windowed => UpdatePolicy::Windowed,
        },
        tukey: tcfg,
    };
    let out = run_beats(&beats, &model, tukey, &cfg).context("running the pipeline")?;
    match &a.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut v = create(&dir.join("verdicts.csv"))?;
            write_verdicts_csv(&out.verdicts, &mut v)?;
            v.flush()?;
            let mut al = create(&dir.join("alarms.jsonl"))?;
            write_alarms_jsonl(&out.alarms, &mut al)?;
            al.flush()?;
            let mut s = create(&dir.join("summary.json"))?;
            serde_json::to_writer_pretty(&mut s, &out.summary).context("writing summary")?;
            writeln!(s)?;
            s.flush()?;
            if cfg.update_policy == UpdatePolicy::Windowed {
                fs::write(dir.join("model.json"), out.model.to_json()).context("writing updated model")?;
            }
        }
        None => {
            let mut stdout = io::stdout().lock();
            write_alarms_jsonl(&out.alarms, &mut stdout)?;
            eprintln!("{}", serde_json::to_string(&out.summary).context("summary")?);
        }
    }
    Ok(())
}

fn evaluate(a: &crate::EvaluateArgs, seed: u64) -> CmdResult {
    if !(a.split > 0.0 && a.split < 1.0) {
        return Err(usage("--split must lie strictly between 0 and 1"));
    }
    let database: Database = a
        .database
        .parse()
        .map_err(|e: String| usage(format!("--database: {e}")))?;
    let cfg = ExperimentConfig {
        train: train_config(&a.train)?,
        tukey: tukey_config(&a.tukey)?,
        split: a.split,
        seed,
    };
    let balance_seed = a.balance.then_some(seed);
    let corpora: Vec<Corpus> = match (a.synthetic, a.corpus.is_empty()) {
        (Some(_), false) => return Err(usage("--synthetic and --corpus are exclusive")),
        (None, true) => return Err(usage("give --corpus or --synthetic")),
        (Some(n), true) => {
            let pre = pre_config(&a.pre)?;
            let del = del_config(&a.del)?;
            let c = synthetic_corpus(n, a.noise_sigma, seed, &pre, &del).context("building synthetic corpus")?;
            build_corpus(c.rows, database, &[c.lead], balance_seed).context("grouping corpus")?
        }
        (None, false) => {
            let mut rows = Vec::new();
            for p in &a.corpus {
                if p.is_dir() {
                    let pre = pre_config(&a.pre)?;
                    let del = del_config(&a.del)?;
                    rows.extend(directory_rows(p, "atr", &a.lead, &pre, &del).context("reading records")?);
                } else {
                    rows.extend(load_features(p)?);
                }
            }
            build_corpus(rows, database, &a.lead, balance_seed).context("grouping corpus")?
        }
    };
    let mut metrics = Vec::new();
    for corpus in &corpora {
        let r = run_experiment(corpus, &cfg).with_context(|| format!("lead {}", corpus.lead))?;
        log::info!(
            "lead {}: {} train, {} test, false alarms {} -> {}",
            r.lead,
            r.train_size,
            r.test_size,
            r.false_alarms_bnc,
            r.false_alarms_tukey
        );
        if let Some(dir) = &a.roc_dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for c in r.classes.iter().filter(|c| c.class.is_abnormal()) {
                let mut w = create(&dir.join(format!("roc_{}_{}.csv", r.lead, c.class.name())))?;
                write_roc_csv(&c.roc, &mut w)?;
                w.flush()?;
            }
        }
        metrics.extend(r.rows());
    }
    let mut out = output(a.out.as_deref())?;
    write_metrics_csv(&metrics, &mut out)?;
    out.flush()?;
    Ok(())
}

fn tukey_debug(a: &crate::TukeyDebugArgs) -> CmdResult {
    let cfg = tukey_config(&a.tukey)?;
    let keep = |b: &BeatFeatures| a.lead.as_deref().is_none_or(|l| same_lead(&b.lead, l));
    let mut reference: Vec<BeatFeatures> = load_features(&a.features)?.into_iter().filter(keep).collect();
    if a.all_beats {
        for b in &mut reference {
            b.true_class = Some(AnomalyClass::Normal);
        }
    }
    let state = TukeyState::warm(cfg, &reference)?;
    let stats = state.stats();
    let mut out = output(a.out.as_deref())?;
    stats.write_csv(&mut out)?;
    out.flush()?;
    drop(out);
    if let Some(path) = &a.check {
        let beats: Vec<BeatFeatures> = load_features(path)?.into_iter().filter(keep).collect();
        let mut w = csv::Writer::from_writer(output(a.check_out.as_deref())?);
        w.write_record(["record", "lead", "beat", "flags", "deviating"])?;
        for b in &beats {
            let report = stats.check_beat(b)?;
            let names: Vec<&str> = report.deviating().iter().map(|f| f.name()).collect();
            w.write_record([
                b.record.as_str(),
                b.lead.as_str(),
                &b.beat.to_string(),
                &report.render(),
                &names.join(";"),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}
