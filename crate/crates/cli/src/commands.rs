use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeDelta, Utc};
use radsearch_core::analysis::AnalyzerConfig;
use radsearch_core::eval::{
    bench_corpus, bench_workload, generate_corpus, latency_benchmark, run_scenario, write_curve_csv, write_curve_dat,
    write_latency_csv, write_latency_dat, CorpusSpec, SnapshotEngine,
};
use radsearch_core::index::{Index, Snapshot};
use radsearch_core::ingest::{ingest_batch, run_schedule, DirectorySource, IngestStats, Scheduler};
use radsearch_core::ranking::{search as run_search, SearchConfig, SearchError};
use radsearch_core::schema::{names, ReportDocument, Schema};
use radsearch_service::api::filters_from;
use radsearch_service::audit::AuditLog;
use radsearch_service::auth::{HashCost, SystemClock, Tier, UserStore};
use radsearch_service::deid::MasterKey;
use radsearch_service::response::SearchResponse;
use radsearch_service::AppState;

use crate::checks::{latency_checks, trend_checks, Check};
use crate::config::Loaded;
use crate::{BenchArgs, CliError, EvalArgs, IndexArgs, SearchArgs, ServeArgs, UserCommand};

fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

fn internal(msg: impl std::fmt::Display) -> CliError {
    CliError::Internal(msg.to_string())
}

pub fn init_logging(verbose: u8, configured: Option<&str>) {
    let default = match verbose {
        0 => configured.unwrap_or("warn"),
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("RADSEARCH_LOG").unwrap_or_else(|_| default.into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn analyzer(loaded: &Loaded) -> Result<AnalyzerConfig, CliError> {
    loaded.config.engine.analyzer(&loaded.base_dir).map_err(|e| user(e.to_string()))
}

fn open_index(loaded: &Loaded) -> Result<Index, CliError> {
    let dir = loaded.index_dir();
    Index::open_or_create(&dir, Schema::radiology(), analyzer(loaded)?)
        .map_err(|e| internal(format!("cannot open index at {}: {e}", dir.display())))
}

fn existing_index(loaded: &Loaded) -> Result<Index, CliError> {
    let dir = loaded.index_dir();
    if !dir.is_dir() {
        return Err(user(format!("no index at {}; build one with `radsearch index`", dir.display())));
    }
    open_index(loaded)
}

/// In-memory index over `docs` with the configured analyzer.
pub fn memory_snapshot(analyzer: AnalyzerConfig, docs: Vec<ReportDocument>) -> Result<Snapshot, CliError> {
    let index = Index::in_memory(Schema::radiology(), analyzer);
    let mut w = index.writer();
    for d in docs {
        w.upsert(d).map_err(|e| internal(format!("synthetic document rejected: {e}")))?;
    }
    w.commit().map_err(internal)
}

fn stats_line(s: &IngestStats) -> String {
    let mut line = format!("read {} upserted {} rejected {}", s.read, s.upserted, s.rejected);
    if s.superseded > 0 {
        line.push_str(&format!(" superseded {}", s.superseded));
    }
    for (reason, n) in &s.reject_reasons {
        line.push_str(&format!(" [{reason}: {n}]"));
    }
    line
}

pub fn index(loaded: &Loaded, args: &IndexArgs) -> Result<(), CliError> {
    let files = if args.input.is_dir() {
        DirectorySource::files(&args.input).map_err(|e| user(e.to_string()))?
    } else if args.input.is_file() {
        vec![args.input.clone()]
    } else {
        return Err(user(format!("{} is not a file or directory", args.input.display())));
    };
    let batches = files.iter().map(|f| DirectorySource::read_file(f).map_err(|e| user(e.to_string()))).collect::<Result<Vec<_>, _>>()?;
    let index = open_index(loaded)?;
    let mut total = IngestStats::default();
    for batch in &batches {
        let stats = ingest_batch(&index, batch, &loaded.config.engine.ingest).map_err(internal)?;
        if batches.len() > 1 {
            println!("{}: {}", batch.batch_id, stats_line(&stats));
        }
        total.absorb(&stats);
    }
    println!("{}", stats_line(&total));
    println!("{} documents in {}", index.snapshot().doc_count(), loaded.index_dir().display());
    if total.rejected > 0 && !args.allow_rejects {
        return Err(user(format!("{} records rejected (pass --allow-rejects to accept)", total.rejected)));
    }
    Ok(())
}

/// The query with a caret under the character at byte `position`.
pub fn caret(query: &str, position: usize) -> String {
    let mut at = position.min(query.len());
    while !query.is_char_boundary(at) {
        at -= 1;
    }
    format!("  {query}\n  {}^", " ".repeat(query[..at].chars().count()))
}

fn search_error(query: &str, e: &SearchError) -> CliError {
    let mut msg = e.to_string();
    if let SearchError::Query(q) = e {
        if let Some(p) = q.position() {
            msg = format!("{msg}\n{}", caret(query, p));
        }
    }
    if e.is_user_error() {
        user(msg)
    } else {
        internal(msg)
    }
}

pub fn search(loaded: &Loaded, args: &SearchArgs) -> Result<(), CliError> {
    let modality = (!args.modality.is_empty()).then(|| args.modality.join(","));
    let filters = filters_from(modality.as_deref(), args.from.as_deref(), args.to.as_deref(), args.collapse.as_deref())
        .map_err(|e| user(e.body.reason))?;
    let index = existing_index(loaded)?;
    let snap = index.snapshot();
    let cfg = loaded.config.engine.search_config();
    let page = args.page as usize;
    let started = Instant::now();
    let result = run_search(&args.query, filters, page, &snap, Utc::now(), &cfg).map_err(|e| search_error(&args.query, &e))?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
    let template = loaded.config.service.viewer_url_template.as_deref();
    let response = SearchResponse::from_page(&args.query, result, &snap, template, args.explain, elapsed_ms);
    let mut out = std::io::stdout().lock();
    if args.json {
        serde_json::to_writer(&mut out, &response).map_err(internal)?;
        writeln!(out).map_err(internal)?;
    } else {
        print_page(&mut out, &response).map_err(internal)?;
    }
    Ok(())
}

fn field<'a>(doc: &'a serde_json::Value, name: &str) -> &'a str {
    doc.get(name).and_then(|v| v.as_str()).unwrap_or("")
}

fn print_page(out: &mut impl Write, r: &SearchResponse) -> std::io::Result<()> {
    writeln!(out, "{} hits, page {} of {} ({:.1} ms)", r.total_hits, r.page_number, r.total_pages.max(1), r.elapsed_ms)?;
    for w in &r.warnings {
        writeln!(out, "warning: {w}")?;
    }
    for h in &r.hits {
        let d = &h.document;
        let date = field(d, names::STUDY_DATETIME).get(..10).unwrap_or("");
        writeln!(out, "{:>3}. {}  {:.4}  {}  {}  {}", h.rank, h.doc_id, h.score, date, field(d, names::MODALITY), field(d, names::STUDY_DESCRIPTION))?;
        let impression = field(d, names::IMPRESSION);
        if !impression.is_empty() {
            writeln!(out, "     {impression}")?;
        }
        writeln!(out, "     matched: {}", h.matched_terms.join(", "))?;
        if let Some(b) = &h.breakdown {
            writeln!(
                out,
                "     base {:.4}  bigram {:.4}  trigram {:.4}  passage {:.4}  recency x{:.4}",
                b.base_relevance, b.bigram, b.trigram, b.passage, b.recency_multiplier
            )?;
        }
        if let Some(link) = &h.image_link {
            writeln!(out, "     images: {link}")?;
        }
    }
    Ok(())
}

pub fn serve(loaded: &Loaded, args: &ServeArgs) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let index = Arc::new(open_index(loaded)?);
    let users = UserStore::open(loaded.users_path()).map_err(|e| user(e.to_string()))?;
    let audit = AuditLog::open(loaded.audit_path()).map_err(|e| internal(format!("audit log {}: {e}", loaded.audit_path().display())))?;
    let key = MasterKey::from_env().map_err(user)?;
    if key.is_none() {
        tracing::warn!("{} is not set; export is disabled", radsearch_service::deid::DEID_KEY_ENV);
    }
    if users.is_empty() {
        tracing::warn!("no accounts in {}; add one with `radsearch user add`", loaded.users_path().display());
    }

    let scheduler = match (args.no_schedule, loaded.source_dir()) {
        (false, Some(dir)) => {
            let s = Scheduler::new(
                index.clone(),
                Box::new(DirectorySource::new(dir)),
                cfg.engine.ingest.clone(),
                cfg.engine.schedule.clone(),
                Utc::now(),
            );
            Some(run_schedule(Arc::new(s), Duration::from_secs(1)))
        }
        (false, None) => {
            tracing::info!("no source_dir configured; refresh scheduler not started");
            None
        }
        (true, _) => None,
    };

    let state = Arc::new(AppState::new(
        index,
        cfg.engine.search_config(),
        cfg.service.clone(),
        Arc::new(users),
        audit,
        Arc::new(SystemClock),
        key,
    ));
    let bind = args.bind.unwrap_or(cfg.service.bind);
    let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
    let result = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| internal(format!("cannot bind {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(internal)?;
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();
        radsearch_service::serve(listener, state, shutdown_signal()).await.map_err(internal)
    });
    if let Some(handle) = scheduler {
        handle.stop();
    }
    println!("stopped");
    result
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub fn accounts_with_input(loaded: &Loaded, cmd: UserCommand, stdin: &mut impl BufRead) -> Result<(), CliError> {
    let store = UserStore::open(loaded.users_path()).map_err(|e| user(e.to_string()))?;
    match cmd {
        UserCommand::Add { user_id, tier, protocol } => {
            if !matches!(tier, Tier::Searcher | Tier::Researcher) {
                return Err(user(format!("accounts are searcher or researcher, not {tier}")));
            }
            let mut password = String::new();
            stdin.read_line(&mut password).map_err(internal)?;
            let password = password.trim_end_matches(['\r', '\n']);
            let account = store
                .add(&user_id, password, tier, protocol, HashCost::default(), Utc::now())
                .map_err(|e| user(e.to_string()))?;
            println!("added {} ({})", account.user_id, account.tier);
        }
        UserCommand::List => {
            for a in store.list() {
                println!("{}\t{}\t{}", a.user_id, a.tier, a.protocol_tag.as_deref().unwrap_or("-"));
            }
        }
    }
    Ok(())
}

pub fn accounts(loaded: &Loaded, cmd: UserCommand) -> Result<(), CliError> {
    accounts_with_input(loaded, cmd, &mut std::io::stdin().lock())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| user(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, f: impl FnOnce(&mut fs::File) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut file = fs::File::create(path).map_err(|e| user(format!("cannot write {}: {e}", path.display())))?;
    f(&mut file).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn print_checks(checks: &[Check], strict: bool) -> Result<(), CliError> {
    for c in checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if strict && failed > 0 {
        return Err(user(format!("{failed} checks failed")));
    }
    Ok(())
}

pub fn read_corpus_spec(path: &Path) -> Result<CorpusSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| user(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

pub fn print_spec() -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(&CorpusSpec::default()).map_err(internal)?);
    Ok(())
}

pub fn eval_run(loaded: &Loaded, args: &EvalArgs) -> Result<(), CliError> {
    let spec = match &args.scenarios {
        Some(p) => read_corpus_spec(p)?,
        None => CorpusSpec::default(),
    };
    let corpus = generate_corpus(&spec, args.seed);
    println!("{} documents, {} scenarios, {} positives (seed {})", corpus.docs.len(), corpus.scenarios.len(), spec.total_positives(), args.seed);
    let snap = memory_snapshot(analyzer(loaded)?, corpus.docs)?;
    let cfg = loaded.config.engine.search_config();
    // a fixed clock keeps recency, and so the output, reproducible
    let now = spec.start + TimeDelta::days(spec.span_days.into());
    let engine = SnapshotEngine::new(&snap, now, &cfg);
    create_dir(&args.out)?;
    let mut reports = Vec::new();
    println!("{:<32} {:>5} {:>11} {:>11} {:>9}  query", "scenario", "ops", "sensitivity", "specificity", "retrieved");
    for scenario in &corpus.scenarios {
        let report = run_scenario(scenario, &engine).map_err(|e| user(format!("scenario {}: {e}", scenario.name)))?;
        for p in &report.points {
            let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
            println!("{:<32} {:>5} {:>11} {:>11} {:>9}  {}", report.name, p.operator_count, show(p.sensitivity), show(p.specificity), p.retrieved_count, p.query);
        }
        write_file(&args.out.join(format!("{}.csv", report.name)), |f| write_curve_csv(&report, f))?;
        write_file(&args.out.join(format!("{}.dat", report.name)), |f| write_curve_dat(&report, f))?;
        reports.push(report);
    }
    println!("curves written to {}", args.out.display());
    print_checks(&trend_checks(&reports), args.strict)
}

pub fn bench(loaded: &Loaded, args: &BenchArgs) -> Result<(), CliError> {
    if args.docs == 0 || args.queries < 3 {
        return Err(user("bench needs at least one document and three queries"));
    }
    let now = Utc::now();
    let started = Instant::now();
    let snap = memory_snapshot(analyzer(loaded)?, bench_corpus(args.docs, args.seed, now))?;
    println!("indexed {} documents in {:.1} s", snap.doc_count(), started.elapsed().as_secs_f64());
    let cfg: SearchConfig<f64> = loaded.config.engine.search_config();
    let engine = SnapshotEngine::new(&snap, now, &cfg);
    let workload = bench_workload(args.queries, args.seed.wrapping_add(1));
    let report = latency_benchmark(&engine, &workload, 20.min(args.queries)).map_err(|e| internal(e.to_string()))?;
    let fit = &report.fit;
    println!(
        "n {}  slope {:.4e} ms/hit  intercept {:.3} ms  r^2 {:.3}  p {:.2e}",
        fit.n, fit.slope, fit.intercept, fit.r_squared, fit.p_value
    );
    create_dir(&args.out)?;
    write_file(&args.out.join("latency.csv"), |f| write_latency_csv(&report, f))?;
    write_file(&args.out.join("latency.dat"), |f| write_latency_dat(&report, f))?;
    println!("samples written to {}", args.out.display());
    print_checks(&latency_checks(&report), args.strict)
}
