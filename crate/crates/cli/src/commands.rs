use std::fs;
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde_json::{json, Value};
use slideprov_core::integrity::{
    compare_runs, local_times_from_mtimes, read_manifest, record_commitment, tamper_experiment,
    time_gaps, verify_corpus, IntegrityError, Run, Verdict,
};
use slideprov_core::ledger::{
    dev_account, events_jsonl, BatchItem, BatchOptions, ChainConfig, LedgerError, LedgerState, Wei,
    CANONICAL_GAS,
};
use slideprov_core::metrics::{
    classify_stability, corpus_disagreement, coverage_loss, densest_model, lecture_aggregate,
    model_footprint, pairwise_jaccard, EmptyConvention, MetricsError, SetKind,
};
use slideprov_core::projection::{parse_profiles, presets, project, ProjectionParams};
use slideprov_core::record::{
    load_corpus, normalize_record_with_key, parse_lecture_dir, parse_slide_file, record_to_value,
    slide_uri, Corpus, RecordError, SlideKey,
};
use slideprov_core::synth::{self, SynthConfig};

use crate::output::{json_bytes, write_atomic, Cell, Table};
use crate::{ChainOpts, Cli, CliError, Command, EmptyJaccard, GlobalOpts};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Register {
            skip_existing,
            registrant,
        } => register(g, *skip_existing, *registrant),
        Command::Verify => verify(g),
        Command::Analyze {
            baseline_model,
            empty_jaccard,
        } => analyze(g, baseline_model.as_deref(), *empty_jaccard),
        Command::Tamper { count, write } => tamper(g, *count, *write),
        Command::CompareRuns { run_a, run_b } => compare(g, run_a, run_b),
        Command::TimeGaps { manifest } => gaps(g, manifest.as_deref()),
        Command::Project {
            slides,
            profiles,
            mean_gas,
            throughput,
        } => projection(g, slides, profiles.as_deref(), *mean_gas, *throughput),
        Command::Hash { files } => hash(files),
        Command::Synth {
            lectures,
            slides,
            models,
            messy,
            manifest_lead,
        } => synthesize(g, *lectures, *slides, models, *messy, *manifest_lead),
    }
}

fn chain_config(c: &ChainOpts) -> Result<ChainConfig, CliError> {
    let mut cfg = ChainConfig::default();
    let usage = |e: LedgerError| CliError::Usage(e.to_string());
    if let Some(v) = c.eth_usd {
        cfg.fees.eth_usd = v;
    }
    if let Some(v) = c.base_fee_gwei {
        cfg.fees.initial_base_fee = Wei::from_gwei_decimal(v).map_err(usage)?;
    }
    if let Some(v) = c.tip_gwei {
        cfg.fees.priority_tip = Wei::from_gwei_decimal(v).map_err(usage)?;
    }
    if let Some(v) = c.block_interval {
        cfg.fees.block_interval = v;
    }
    if let Some(v) = c.genesis_timestamp {
        cfg.fees.genesis_timestamp = v;
    }
    if let Some(v) = c.gas_exec_base {
        cfg.gas.exec_base = v;
    }
    cfg.fees.validate().map_err(usage)?;
    Ok(cfg)
}

fn ledger_path(g: &GlobalOpts) -> PathBuf {
    g.ledger.clone().unwrap_or_else(|| g.out.join("ledger.json"))
}

fn corpus_root(g: &GlobalOpts) -> Result<&Path, CliError> {
    g.corpus
        .as_deref()
        .ok_or_else(|| CliError::Usage("--corpus is required (or set SLIDEPROV_CORPUS)".into()))
}

fn load(root: &Path) -> Result<Corpus, CliError> {
    let corpus = load_corpus(root).map_err(|e| match e {
        RecordError::Io { path, source } => CliError::io(&path, source),
        other => CliError::Io(other.to_string()),
    })?;
    for f in &corpus.failures {
        eprintln!("warning: skipped {}: {}", f.path.display(), f.error);
    }
    for (key, w) in &corpus.warnings {
        eprintln!("warning: slide {key}: {w}");
    }
    Ok(corpus)
}

fn read_ledger(path: &Path) -> Result<LedgerState, CliError> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Io(format!("ledger not found at {}; run `slideprov register` first", path.display()))
        } else {
            CliError::io(path, e)
        }
    })?;
    LedgerState::import(&bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(out: &Path, name: &str, v: &Value) -> Result<(), CliError> {
    write_atomic(&out.join(name), &json_bytes(v))
}

fn key_cells(k: SlideKey) -> [Cell; 2] {
    [k.lecture_id.into(), k.slide_id.into()]
}

fn register(g: &GlobalOpts, skip_existing: bool, registrant: usize) -> Result<(), CliError> {
    let cfg = chain_config(&g.chain)?;
    let registrant = dev_account(registrant)
        .ok_or_else(|| CliError::Usage(format!("no development account with index {registrant}")))?;
    let corpus = load(corpus_root(g)?)?;
    let path = ledger_path(g);
    let mut state = if path.exists() {
        read_ledger(&path)?
    } else {
        LedgerState::genesis(&cfg.fees)
    };

    let mut skipped = 0usize;
    let items: Vec<BatchItem> = corpus
        .records
        .iter()
        .filter(|(key, _)| {
            let skip = skip_existing && state.is_registered(**key);
            skipped += usize::from(skip);
            !skip
        })
        .map(|(key, rec)| BatchItem::new(*key, record_commitment(rec), slide_uri(*key)))
        .collect();
    let outcome = state.batch_register(
        &cfg,
        &items,
        BatchOptions {
            registrant,
            halt_on_error: false,
        },
    );

    write_atomic(&path, &state.export())?;
    let mut t = Table::new(
        "receipts",
        &[
            "lecture_id",
            "slide_id",
            "block",
            "timestamp",
            "gas_used",
            "effective_gas_price_gwei",
            "cost_eth",
            "cost_usd",
        ],
    );
    for r in &outcome.receipts {
        let [l, s] = key_cells(r.key);
        t.push(vec![
            l,
            s,
            r.block_number.into(),
            r.timestamp.into(),
            r.gas_used.into(),
            r.effective_gas_price.to_gwei().into(),
            r.tx_cost_eth.into(),
            r.tx_cost_usd.into(),
        ]);
    }
    t.write(&g.out, g.format)?;
    write_atomic(&g.out.join("events.jsonl"), &events_jsonl(&state))?;

    let s = &outcome.summary;
    write_json(
        &g.out,
        "registration_summary.json",
        &json!({
            "registered": s.registered,
            "failed": s.failed,
            "skipped": skipped,
            "total_gas": s.total_gas.to_string(),
            "mean_gas": s.mean_gas.normalize().to_string(),
            "min_gas": s.min_gas,
            "max_gas": s.max_gas,
            "total_cost_eth": s.total_cost_eth.normalize().to_string(),
            "total_cost_usd": s.total_cost_usd.normalize().to_string(),
            "min_cost_usd": s.min_cost_usd.normalize().to_string(),
            "max_cost_usd": s.max_cost_usd.normalize().to_string(),
            "first_timestamp": s.first_timestamp,
            "last_timestamp": s.last_timestamp,
            "elapsed_seconds": s.elapsed_seconds,
            "throughput": s.throughput,
            "ledger_slides": state.len(),
        }),
    )?;

    for (key, e) in &outcome.failures {
        eprintln!("error: {key}: {e}");
    }
    println!(
        "registered {} slide(s), {} failed, {} skipped; ledger now holds {}",
        s.registered,
        s.failed,
        skipped,
        state.len()
    );
    if !outcome.failures.is_empty() {
        return Err(CliError::Failure(format!(
            "{} registration(s) rejected",
            outcome.failures.len()
        )));
    }
    Ok(())
}

fn verify(g: &GlobalOpts) -> Result<(), CliError> {
    let corpus = load(corpus_root(g)?)?;
    let state = read_ledger(&ledger_path(g))?;
    let results = verify_corpus(&corpus.records, &state);
    let mut t = Table::new("verification", &["lecture_id", "slide_id", "verdict", "recomputed", "on_chain"]);
    let mut counts = [0usize; 3];
    for r in &results {
        let [l, s] = key_cells(r.key);
        t.push(vec![
            l,
            s,
            r.verdict.as_str().into(),
            r.recomputed.to_hex().into(),
            r.on_chain.clone().unwrap_or_default().into(),
        ]);
        counts[r.verdict as usize] += 1;
        if r.verdict != Verdict::Match {
            eprintln!("{}: {}", r.key, r.verdict);
        }
    }
    t.write(&g.out, g.format)?;
    let [matched, mismatched, unregistered] = counts;
    write_json(
        &g.out,
        "verification_summary.json",
        &json!({
            "slides": results.len(),
            "match": matched,
            "mismatch": mismatched,
            "unregistered": unregistered,
        }),
    )?;
    println!("{matched} match, {mismatched} mismatch, {unregistered} unregistered");
    if mismatched + unregistered > 0 {
        return Err(CliError::Failure(format!(
            "{} slide(s) failed verification",
            mismatched + unregistered
        )));
    }
    Ok(())
}

fn analyze(g: &GlobalOpts, baseline: Option<&str>, empty: EmptyJaccard) -> Result<(), CliError> {
    let corpus = load(corpus_root(g)?)?;
    let records = &corpus.records;
    let empty = match empty {
        EmptyJaccard::One => EmptyConvention::One,
        EmptyJaccard::Zero => EmptyConvention::Zero,
    };
    let mut notes: Vec<String> = Vec::new();
    let ext = match g.format {
        crate::output::Format::Csv => "csv",
        crate::output::Format::Json => "json",
    };

    let mut t = Table::new("disagreement", &["lecture_id", "slide_id", "d_concept", "d_triple"]);
    for d in corpus_disagreement(records) {
        let [l, s] = key_cells(d.key);
        t.push(vec![l, s, d.concept_union_size.into(), d.triple_union_size.into()]);
    }
    t.write(&g.out, g.format)?;

    let mut jaccard_means = serde_json::Map::new();
    for (kind, name) in [(SetKind::Concepts, "jaccard_concepts"), (SetKind::Triples, "jaccard_triples")] {
        match pairwise_jaccard(records, kind, empty) {
            Ok(m) => {
                let mut headers = vec!["model".to_string()];
                headers.extend(m.models.iter().cloned());
                let mut t = Table::with_headers(name, headers);
                for (i, row) in m.values.iter().enumerate() {
                    let mut cells = vec![Cell::from(m.models[i].as_str())];
                    cells.extend(row.iter().map(|v| Cell::from(*v)));
                    t.push(cells);
                }
                t.write(&g.out, g.format)?;
                let pairs: Vec<Value> = (0..m.models.len())
                    .flat_map(|a| (a + 1..m.models.len()).map(move |b| (a, b)))
                    .map(|(a, b)| json!({"a": m.models[a], "b": m.models[b], "mean": m.values[a][b]}))
                    .collect();
                jaccard_means.insert(kind.as_str().into(), Value::Array(pairs));
            }
            Err(e @ MetricsError::InsufficientModels(_)) => {
                remove_stale(&g.out.join(format!("{name}.{ext}")))?;
                notes.push(format!("{name} skipped: {e}"));
            }
            Err(e) => return Err(CliError::Failure(e.to_string())),
        }
    }

    let mut t = Table::new("lecture_aggregates", &["lecture_id", "slides", "mean_d_concept", "mean_d_triple"]);
    for a in lecture_aggregate(records) {
        t.push(vec![a.lecture_id.into(), a.slides.into(), a.mean_concept.into(), a.mean_triple.into()]);
    }
    t.write(&g.out, g.format)?;

    let stability = match classify_stability(records) {
        Ok(r) => {
            let mut t = Table::new("stability", &["lecture_id", "slide_id", "d_concept", "label"]);
            for l in &r.labels {
                let [a, b] = key_cells(l.key);
                t.push(vec![a, b, l.d_concept.into(), l.label.as_str().into()]);
            }
            t.write(&g.out, g.format)?;
            use slideprov_core::metrics::Stability::*;
            json!({
                "q1": r.q1,
                "q3": r.q3,
                "stable": r.count(Stable),
                "moderate": r.count(Moderate),
                "unstable": r.count(Unstable),
            })
        }
        Err(e) => {
            remove_stale(&g.out.join(format!("stability.{ext}")))?;
            notes.push(format!("stability skipped: {e}"));
            Value::Null
        }
    };

    let footprint = model_footprint(records);
    for f in &footprint {
        if !f.missing_slides.is_empty() {
            eprintln!(
                "warning: model {:?} has no output on {} slide(s); counted as empty",
                f.model,
                f.missing_slides.len()
            );
        }
    }
    let baseline = match baseline {
        Some(b) => b.to_string(),
        None => densest_model(records).ok_or_else(|| CliError::Failure("corpus has no models".into()))?,
    };
    let cov = coverage_loss(records, &baseline).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut t = Table::new(
        "coverage_loss",
        &["lecture_id", "slide_id", "baseline_model", "concept_loss", "triple_loss"],
    );
    for l in &cov.losses {
        let [a, b] = key_cells(l.key);
        t.push(vec![a, b, l.baseline_model.as_str().into(), l.concept_loss.into(), l.triple_loss.into()]);
    }
    t.write(&g.out, g.format)?;

    for n in &notes {
        eprintln!("note: {n}");
    }
    write_json(
        &g.out,
        "analysis_summary.json",
        &json!({
            "slides": records.len(),
            "models": footprint.iter().map(|f| json!({
                "model": f.model,
                "mean_concepts": f.mean_concepts,
                "mean_triples": f.mean_triples,
                "missing_slides": f.missing_slides.len(),
            })).collect::<Vec<_>>(),
            "jaccard_means": jaccard_means,
            "stability": stability,
            "coverage": {
                "baseline_model": cov.baseline_model,
                "concept_mean": cov.concept_mean,
                "concept_median": cov.concept_median,
                "triple_mean": cov.triple_mean,
                "triple_median": cov.triple_median,
            },
            "notes": notes,
        }),
    )?;
    println!(
        "analyzed {} slide(s) across {} model(s); coverage baseline {}",
        records.len(),
        footprint.len(),
        cov.baseline_model
    );
    Ok(())
}

fn remove_stale(path: &Path) -> Result<(), CliError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(path, e)),
        _ => Ok(()),
    }
}

fn tamper(g: &GlobalOpts, count: usize, write: bool) -> Result<(), CliError> {
    let corpus = load(corpus_root(g)?)?;
    let state = read_ledger(&ledger_path(g))?;
    let report = tamper_experiment(&corpus.records, &state, count, g.seed).map_err(|e| match e {
        IntegrityError::TooManyTargets { .. } => CliError::Usage(e.to_string()),
        other => CliError::Failure(other.to_string()),
    })?;
    let mut t = Table::new(
        "tamper",
        &["lecture_id", "slide_id", "kind", "target", "original_hash", "tampered_hash", "verdict"],
    );
    for tr in &report.trials {
        let [l, s] = key_cells(tr.key);
        t.push(vec![
            l,
            s,
            tr.op.kind.as_str().into(),
            tr.op.target().into(),
            tr.original.to_hex().into(),
            tr.tampered.to_hex().into(),
            tr.verdict.as_str().into(),
        ]);
    }
    t.write(&g.out, g.format)?;
    write_json(
        &g.out,
        "tamper_summary.json",
        &json!({
            "seed": report.seed,
            "tampered": report.trials.len(),
            "detected": report.detected(),
            "detection_rate": report.detection_rate(),
        }),
    )?;
    if write {
        for tr in &report.trials {
            let path = &corpus.files[&tr.key];
            let mut text = serde_json::to_vec_pretty(&record_to_value(&tr.record)).expect("serializable");
            text.push(b'\n');
            write_atomic(path, &text)?;
            eprintln!("overwrote {}", path.display());
        }
    }
    println!("detected {}/{} tampered slide(s)", report.detected(), report.trials.len());
    if report.detected() < report.trials.len() {
        return Err(CliError::Failure("some tampered slides still verify".into()));
    }
    Ok(())
}

fn compare(g: &GlobalOpts, a: &Path, b: &Path) -> Result<(), CliError> {
    let (ca, cb) = (load(a)?, load(b)?);
    let cmp = compare_runs(&ca.records, &cb.records).map_err(|e| CliError::Failure(e.to_string()))?;
    let mut t = Table::new(
        "compare_runs",
        &["lecture_id", "slide_id", "model", "status", "concept_jaccard", "triple_jaccard"],
    );
    for p in &cmp.pairs {
        let [l, s] = key_cells(p.key);
        t.push(vec![
            l,
            s,
            p.model.as_str().into(),
            "compared".into(),
            p.concept_jaccard.into(),
            p.triple_jaccard.into(),
        ]);
    }
    for x in &cmp.asymmetric {
        let [l, s] = key_cells(x.key);
        let status = match x.present_in {
            Run::A => "only_in_a",
            Run::B => "only_in_b",
        };
        eprintln!("warning: {}: model {:?} present {status}", x.key, x.model);
        t.push(vec![l, s, x.model.as_str().into(), status.into(), "".into(), "".into()]);
    }
    t.write(&g.out, g.format)?;
    let concept_ones = cmp.pairs.iter().filter(|p| p.concept_jaccard == 1.0).count();
    let triple_ones = cmp.pairs.iter().filter(|p| p.triple_jaccard == 1.0).count();
    write_json(
        &g.out,
        "compare_summary.json",
        &json!({
            "common_slides": cmp.common_slides,
            "pairs": cmp.pairs.len(),
            "identical_pairs": cmp.identical_pairs(),
            "concept_jaccard_one": concept_ones,
            "triple_jaccard_one": triple_ones,
            "asymmetric_pairs": cmp.asymmetric.len(),
            "byte_identical_slides": cmp.common_slides - cmp.byte_differences.len(),
            "byte_differences": cmp.byte_differences.len(),
            "only_in_a": cmp.only_in_a.len(),
            "only_in_b": cmp.only_in_b.len(),
        }),
    )?;
    println!(
        "{}/{} (slide, model) pairs identical; {} of {} slides byte-identical",
        cmp.identical_pairs(),
        cmp.pairs.len(),
        cmp.common_slides - cmp.byte_differences.len(),
        cmp.common_slides
    );
    Ok(())
}

fn gaps(g: &GlobalOpts, manifest: Option<&Path>) -> Result<(), CliError> {
    let state = read_ledger(&ledger_path(g))?;
    let local = match manifest {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| CliError::io(p, e))?;
            read_manifest(f, p).map_err(|e| CliError::Io(e.to_string()))?
        }
        None => {
            let corpus = load(corpus_root(g)?)?;
            local_times_from_mtimes(&corpus.files).map_err(|e| CliError::Io(e.to_string()))?
        }
    };
    let report = time_gaps(&local, &state).map_err(|e| CliError::Failure(e.to_string()))?;
    let mut t = Table::new(
        "time_gaps",
        &["lecture_id", "slide_id", "local_timestamp", "chain_timestamp", "delta_seconds", "anomaly"],
    );
    for gap in &report.gaps {
        let [l, s] = key_cells(gap.key);
        t.push(vec![l, s, gap.local.into(), gap.chain.into(), gap.delta_seconds.into(), gap.is_anomaly().into()]);
        if gap.is_anomaly() {
            eprintln!("warning: {} registered {}s before its local timestamp", gap.key, -gap.delta_seconds);
        }
    }
    t.write(&g.out, g.format)?;
    let summary = report.summary.map_or(Value::Null, |s| {
        json!({
            "count": s.count,
            "mean": s.mean,
            "min": s.min,
            "max": s.max,
            "stddev": s.stddev,
            "anomalies": s.anomalies,
        })
    });
    write_json(&g.out, "time_gaps_summary.json", &summary)?;
    match report.summary {
        Some(s) => println!("{} gap(s): mean {:.1}s, min {}s, max {}s, stddev {:.1}s", s.count, s.mean, s.min, s.max, s.stddev),
        None => println!("no slides"),
    }
    Ok(())
}

fn projection(
    g: &GlobalOpts,
    slides: &[u64],
    profiles: Option<&Path>,
    mean_gas: Option<u64>,
    throughput: Option<Decimal>,
) -> Result<(), CliError> {
    let profiles = match profiles {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            parse_profiles(&text).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => presets(),
    };
    let params = ProjectionParams {
        mean_gas: mean_gas.unwrap_or(CANONICAL_GAS),
        eth_usd: g.chain.eth_usd.unwrap_or(ProjectionParams::default().eth_usd),
        throughput: throughput.unwrap_or(Decimal::ONE),
    };
    let mut t = Table::new("projection", &["n", "network", "total_gas", "eth", "usd", "seconds"]);
    for &n in slides {
        for p in project(n, &profiles, &params).map_err(|e| CliError::Usage(e.to_string()))? {
            println!(
                "{:>10} {:<16} gas {:>16}  {} ETH  ${}  {} s",
                p.n_slides, p.network, p.total_gas, p.total_cost_eth, p.total_cost_usd, p.expected_seconds
            );
            t.push(vec![
                p.n_slides.into(),
                p.network.into(),
                p.total_gas.into(),
                p.total_cost_eth.into(),
                p.total_cost_usd.into(),
                p.expected_seconds.into(),
            ]);
        }
    }
    t.write(&g.out, g.format)?;
    Ok(())
}

fn key_from_path(path: &Path) -> Option<SlideKey> {
    let slide = parse_slide_file(path.file_name()?.to_str()?)?;
    let lecture = parse_lecture_dir(path.parent()?.file_name()?.to_str()?)?;
    Some(SlideKey::new(lecture, slide))
}

fn hash(files: &[PathBuf]) -> Result<(), CliError> {
    for path in files {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let doc: Value = serde_json::from_slice(&bytes).map_err(|e| CliError::io(path, e))?;
        let n = normalize_record_with_key(&doc, key_from_path(path)).map_err(|e| CliError::io(path, e))?;
        for w in &n.warnings {
            eprintln!("warning: {}: {w}", path.display());
        }
        println!("{}  {}", record_commitment(&n.record), path.display());
    }
    Ok(())
}

fn synthesize(
    g: &GlobalOpts,
    lectures: u64,
    slides: u64,
    models: &[String],
    messy: bool,
    manifest_lead: Option<i64>,
) -> Result<(), CliError> {
    let root = corpus_root(g)?;
    if lectures == 0 || slides == 0 || models.is_empty() {
        return Err(CliError::Usage("need at least one lecture, slide and model".into()));
    }
    let cfg = SynthConfig {
        lectures,
        slides_per_lecture: slides,
        models: models.to_vec(),
        seed: g.seed,
        messy,
    };
    let docs = synth::generate(&cfg);
    synth::write_corpus(root, &docs).map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(lead) = manifest_lead {
        // Expected timestamps on a fresh ledger registering in key order.
        let fees = chain_config(&g.chain)?.fees;
        let mut t = Table::new("manifest", &["lecture_id", "slide_id", "local_timestamp"]);
        for (i, (key, _)) in docs.iter().enumerate() {
            let chain = fees.genesis_timestamp as i64 + (i as i64 + 1) * fees.block_interval as i64;
            let [l, s] = key_cells(*key);
            t.push(vec![l, s, (chain - lead).into()]);
        }
        t.write(root, crate::output::Format::Csv)?;
    }
    println!("wrote {} slide(s) under {}", docs.len(), root.join("by_slide").display());
    Ok(())
}
