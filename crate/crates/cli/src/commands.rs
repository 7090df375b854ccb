//! Subcommand bodies. Each reads its inputs, calls into `kgcl` and writes
//! human- or machine-readable output to the given writer.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use kgcl::acquisition::{AcqError, QuestionState, TemplateRegistry, Verdict};
use kgcl::engine::{Engine, EngineError};
use kgcl::eval::{evaluate_split, Metric};
use kgcl::kb::{export_triples, load_kb, parse_triple_lines, save_kb, KnowledgeBase, Source, Triple, Vocabulary, KB_MAGIC};
use kgcl::longrun::{
    benchmark_sessions, benchmark_world_spec, chronological, generate_world, load_sessions, make_sessions, run_longrun,
    write_sessions, Condition, RELATIONS,
};
use kgcl::model::{load_checkpoint, save_checkpoint};
use kgcl::train::{run_curriculum, SessionDataset, TrainConfig};

use crate::cli::{Cli, Command, EvalArgs, ExportArgs, GenerateArgs, SimulateArgs, TeachArgs, TrainArgs};
use crate::config::Config;
use crate::{io_error, service, CliError};

pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let config = Config::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => generate(&a, &config, out),
        Command::Train(a) => train(&a, &config, out),
        Command::Eval(a) => eval(&a, out),
        Command::Simulate(a) => simulate(&a, &config, out),
        Command::Teach(a) => teach(&a, &config, input, out),
        Command::Export(a) => export(&a, out),
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io { path: "<stdout>".into(), source: e }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_error(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_error(path))
}

/// Reads a KB snapshot, or a triple TSV when the file lacks the snapshot
/// magic.
pub fn read_kb(path: &Path) -> Result<KnowledgeBase, CliError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    if bytes.starts_with(KB_MAGIC) {
        return Ok(load_kb(path)?);
    }
    let mut kb = KnowledgeBase::new();
    kb.import_triples(path, 0)?;
    Ok(kb)
}

/// KB holding every session triple, with entity and relation ids equal to
/// those of `vocab`.
pub fn kb_from_sessions(vocab: &Vocabulary, sessions: &[SessionDataset]) -> Result<KnowledgeBase, CliError> {
    let mut kb = KnowledgeBase::new();
    for i in 0..vocab.num_entities() {
        kb.register_entity(vocab.entity_name(kgcl::kb::EntityId(i as u32)).expect("dense ids"))?;
    }
    for r in vocab.relation_ids() {
        kb.register_relation(vocab.relation_name(r).expect("listed"))?;
    }
    for s in sessions {
        for t in s.all() {
            kb.add_triple(*t, Source::Imported, s.index as u32)?;
        }
    }
    Ok(kb)
}

fn generate(args: &GenerateArgs, config: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let (world, vocab, sessions) = if args.benchmark {
        let world = generate_world(&benchmark_world_spec())?;
        let (vocab, sessions) = benchmark_sessions()?;
        (world, vocab, sessions)
    } else {
        let mut spec = config.world.clone();
        spec.seed = args.seed.unwrap_or(spec.seed);
        spec.room_count = args.rooms.unwrap_or(spec.room_count);
        spec.object_count = args.objects.unwrap_or(spec.object_count);
        spec.novel_object_count = args.novel_objects.unwrap_or(spec.novel_object_count);
        let world = generate_world(&spec)?;
        let sessions = make_sessions(&world, args.sessions, args.novel_fraction, spec.seed)?;
        let (vocab, sessions) = chronological(world.kb.vocab(), &sessions)?;
        (world, vocab, sessions)
    };
    let manifest = write_sessions(&args.out, &vocab, &sessions, Some(&world.named_triples()))?;
    writeln!(out, "wrote {} triples in {} sessions to {}", world.kb.len(), sessions.len(), manifest.display()).map_err(stdout_err)
}

fn training_curves(outcome: &kgcl::train::CurriculumOutcome) -> String {
    let mut csv = String::from("session,epoch,loss,dev_mrr\n");
    for r in &outcome.reports {
        for e in &r.epochs {
            let _ = writeln!(csv, "{},{},{:.6},{:.6}", r.session, e.epoch, e.loss, e.dev_mrr);
        }
    }
    csv
}

fn train(args: &TrainArgs, config: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let (vocab, sessions) = load_sessions(&args.sessions)?;
    let mut cfg = config.train.clone();
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let outcome = run_curriculum(&sessions, &vocab, args.mode, &cfg)?;
    let report = outcome.matrix.to_report_csv();
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_file(&dir.join("eval_matrix.csv"), &report)?;
        write_file(&dir.join("hits_at_10.csv"), outcome.matrix.to_table_csv(Metric::HitsAt10))?;
        write_file(&dir.join("mrr.csv"), outcome.matrix.to_table_csv(Metric::Mrr))?;
        write_file(&dir.join("training.csv"), training_curves(&outcome))?;
        save_checkpoint(&outcome.model, dir.join("model.kge"))?;
        save_kb(&kb_from_sessions(&vocab, &sessions)?, dir.join("kb.kgkb"))?;
    }
    out.write_all(report.as_bytes()).map_err(stdout_err)
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kb = read_kb(&args.kb)?;
    let model = load_checkpoint(&args.checkpoint, TrainConfig::default().learning_rate)?;
    let origin = args.split.display().to_string();
    let text = fs::read_to_string(&args.split).map_err(io_error(&args.split))?;
    let mut split = Vec::new();
    for (i, n) in parse_triple_lines(&text, &origin)?.iter().enumerate() {
        let t = kb.lookup(&n.head, &n.relation, &n.tail).ok_or_else(|| {
            CliError::Usage(format!("{origin}: triple {} ({n}) uses a name the KB does not know", i + 1))
        })?;
        split.push(t);
    }
    if model.num_entities() < kb.vocab().num_entities() || model.num_relations() < kb.vocab().num_relations() {
        return Err(CliError::Usage(format!(
            "checkpoint covers {} entities and {} relations but the KB has {} and {}",
            model.num_entities(),
            model.num_relations(),
            kb.vocab().num_entities(),
            kb.vocab().num_relations()
        )));
    }
    let known: HashSet<Triple> = kb.triples().chain(split.iter().copied()).collect();
    let m = evaluate_split(&model.params, &split, &known, args.protocol)?;
    writeln!(out, "split,protocol,queries,mrr,hits_at_10").map_err(stdout_err)?;
    writeln!(out, "{origin},{},{},{:.6},{:.6}", args.protocol.as_str(), m.queries, m.mrr, m.hits_at_10).map_err(stdout_err)
}

fn simulate(args: &SimulateArgs, config: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let world = generate_world(&config.world)?;
    let mut lc = config.longrun.clone();
    lc.seed = args.seed.unwrap_or(lc.seed);
    if let Some(n) = args.quota {
        lc.engine.condition = Condition::Quota { n };
    }
    let outcome = run_longrun(&world, &lc, args.cycles)?;
    let timeline = outcome.timeline_csv();
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_file(&dir.join("timeline.csv"), &timeline)?;
        write_file(&dir.join("acquired.tsv"), export_triples(&outcome.acquired))?;
        save_kb(&outcome.kb, dir.join("kb.kgkb"))?;
        save_checkpoint(&outcome.model, dir.join("model.kge"))?;
    }
    out.write_all(timeline.as_bytes()).map_err(stdout_err)
}

/// Engine for `teach`, from the optional KB, checkpoint and templates.
pub fn build_engine(args: &TeachArgs, config: &Config) -> Result<Engine, CliError> {
    let kb = match &args.kb {
        Some(p) => read_kb(p)?,
        None => {
            let mut kb = KnowledgeBase::new();
            for r in RELATIONS {
                kb.register_relation(r)?;
            }
            kb
        }
    };
    if kb.vocab().num_relations() == 0 {
        return Err(CliError::Usage("the KB has no relations to ask about".into()));
    }
    let registry = match &args.templates {
        Some(p) => TemplateRegistry::load(p)?,
        None => TemplateRegistry::default(),
    };
    Ok(match &args.checkpoint {
        Some(p) => Engine::with_model(kb, load_checkpoint(p, config.engine.train.learning_rate)?, registry, config.engine.clone())?,
        None => Engine::new(kb, registry, config.engine.clone())?,
    })
}

fn read_line(input: &mut dyn BufRead) -> Result<Option<String>, CliError> {
    let mut line = String::new();
    let n = input.read_line(&mut line).map_err(|e| CliError::Io { path: "<stdin>".into(), source: e })?;
    Ok((n > 0).then(|| line.trim().to_owned()))
}

/// Whether a failed verdict should be reported and retried instead of
/// aborting the session.
fn recoverable(e: &EngineError) -> bool {
    matches!(e, EngineError::Kb(_) | EngineError::Acquisition(AcqError::InvalidVerdict(_)))
}

/// Terminal dialogue: asks each open question, reads `yes`, `no [tail]`
/// or `skip`, and asks for a new detection when nothing is open. Stops at
/// end of input, an empty detection or `quit`. Returns the number of
/// triples committed.
pub fn teach_terminal(engine: &mut Engine, detections: &[String], input: &mut dyn BufRead, out: &mut dyn Write) -> Result<usize, CliError> {
    let mut pending: VecDeque<String> = detections.iter().cloned().collect();
    let mut committed = 0;
    loop {
        let sessions_before = engine.sessions().len();
        let Some(q) = engine.next_question().cloned() else {
            let label = match pending.pop_front() {
                Some(l) => l,
                None => {
                    write!(out, "detected object> ").and_then(|_| out.flush()).map_err(stdout_err)?;
                    match read_line(input)? {
                        Some(l) if !l.is_empty() && l != "quit" => l,
                        _ => break,
                    }
                }
            };
            match engine.detect(&label) {
                Ok(o) if !o.accepted => writeln!(out, "not exploring; ignored {label}").map_err(stdout_err)?,
                Ok(o) if o.questions.is_empty() => writeln!(out, "nothing to ask about {label}").map_err(stdout_err)?,
                Ok(_) => {}
                Err(e) if recoverable(&e) => writeln!(out, "error: {e}").map_err(stdout_err)?,
                Err(e) => return Err(e.into()),
            }
            continue;
        };
        writeln!(out, "[q{}] {} [yes/no/skip]", q.id, q.text).map_err(stdout_err)?;
        let Some(line) = read_line(input)? else { break };
        let (word, rest) = line.split_once(char::is_whitespace).map_or((line.as_str(), ""), |(w, r)| (w, r.trim()));
        let result = match word.to_ascii_lowercase().as_str() {
            "yes" | "y" => engine.answer(&Verdict::yes(q.id)).map(Some),
            "no" | "n" => {
                let correction = if rest.is_empty() {
                    if q.state == QuestionState::Pending {
                        engine.reject(q.id)?;
                    }
                    writeln!(out, "{}", q.correction_prompt).map_err(stdout_err)?;
                    match read_line(input)? {
                        Some(c) => c,
                        None => break,
                    }
                } else {
                    rest.to_owned()
                };
                engine.answer(&Verdict::no(q.id, correction)).map(Some)
            }
            "skip" => engine.discard(q.id).map(|_| None),
            "quit" => break,
            _ => {
                writeln!(out, "please answer yes, no or skip").map_err(stdout_err)?;
                continue;
            }
        };
        match result {
            Ok(Some(ack)) => {
                committed += usize::from(ack.new);
                writeln!(out, "ack: {}", ack.message).map_err(stdout_err)?;
            }
            Ok(None) => {}
            Err(e) if recoverable(&e) => writeln!(out, "error: {e}").map_err(stdout_err)?,
            Err(e) => return Err(e.into()),
        }
        for s in &engine.sessions()[sessions_before..] {
            writeln!(out, "trained session {} on {} triples (best epoch {})", s.session, s.trained_triples, s.best_epoch)
                .map_err(stdout_err)?;
        }
    }
    Ok(committed)
}

fn teach(args: &TeachArgs, config: &Config, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let mut engine = build_engine(args, config)?;
    if args.serve {
        let host = args.host.clone().unwrap_or_else(|| config.server.host.clone());
        let port = args.port.unwrap_or(config.server.port);
        let tick = Duration::from_millis(config.server.tick_interval_ms);
        let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io { path: "<runtime>".into(), source: e })?;
        let addr = format!("{host}:{port}");
        engine = runtime
            .block_on(service::serve_until(
                engine,
                &addr,
                tick,
                |bound| {
                    let _ = writeln!(out, "listening on http://{bound}").and_then(|_| out.flush());
                },
                async {
                    let _ = tokio::signal::ctrl_c().await;
                },
            ))
            .map_err(|e| CliError::Io { path: addr.clone().into(), source: e })?;
    } else {
        let committed = teach_terminal(&mut engine, &args.detections, input, out)?;
        writeln!(out, "committed {committed} new triples; the KB holds {}", engine.kb().len()).map_err(stdout_err)?;
    }
    if let Some(p) = &args.save_kb {
        save_kb(engine.kb(), p)?;
    }
    if let Some(p) = &args.save_checkpoint {
        save_checkpoint(engine.model(), p)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn export(args: &ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kb = read_kb(&args.kb)?;
    create_dir(&args.out)?;
    let named: Vec<_> = kb.triples().map(|t| kb.names(&t).expect("journaled")).collect();
    write_file(&args.out.join("triples.tsv"), export_triples(&named))?;

    let mut provenance = String::from("head,relation,tail,source,session,timestamp\n");
    for ((_, p), n) in kb.journal().iter().zip(&named) {
        let _ = writeln!(
            provenance,
            "{},{},{},{},{},{}",
            csv_field(&n.head),
            csv_field(&n.relation),
            csv_field(&n.tail),
            p.source.as_str(),
            p.session,
            p.timestamp
        );
    }
    write_file(&args.out.join("provenance.csv"), provenance)?;

    let s = kb.stats();
    let mut stats = format!("metric,value\nentities,{}\nrelations,{}\ntriples,{}\n", s.entities, s.relations, s.triples);
    for source in [Source::Imported, Source::PredictedConfirmed, Source::HumanCorrected] {
        let n = kb.journal().iter().filter(|(_, p)| p.source == source).count();
        let _ = writeln!(stats, "source:{},{n}", source.as_str());
    }
    for r in kb.vocab().relation_ids() {
        let n = kb.triples().filter(|t| t.relation == r).count();
        let _ = writeln!(stats, "relation:{},{n}", csv_field(kb.vocab().relation_name(r).expect("listed")));
    }
    write_file(&args.out.join("stats.csv"), stats)?;
    writeln!(out, "exported {} triples to {}", named.len(), args.out.display()).map_err(stdout_err)
}
