use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use mvgvae::control::{controlled_generate, nearest_neighbors, GenerationRequest, Variable};
use mvgvae::corpus::{
    detokenize, gen_probe_set, gen_sts_pairs, gen_synthetic_bitext, gen_synthetic_triples, load_bitext,
    load_parse_bank, load_triples, save_bitext, save_parse_bank, save_triples, tokenize, BankParser, BitextSource,
    EvalTriple, ParseBank, StsPair, SyntheticWorld, TaskKind,
};
use mvgvae::metrics::{bleu, retrieval_probe, rouge_l, rouge_n, sts_probe, syntax_probe, ProbeReport};
use mvgvae::network::{Checkpoint, ModelParams};
use mvgvae::objective::{train, TrainData, TrainPaths, TrainState};
use mvgvae::rng::derive_seed;
use mvgvae::subword::{bpe_train, BpeModel};
use mvgvae::trees::{st_score, ParseTree};
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::files::{read_jsonl, read_sentences, save_probe_set, write_jsonl, Hypothesis, TripleGold};
use crate::report::Report;
use crate::{Command, EvalArgs};

pub fn dispatch(cmd: Command, mut cfg: RunConfig) -> Result<()> {
    match cmd {
        Command::GenSynth { out, n_pairs } => {
            if let Some(n) = n_pairs {
                cfg.world.n_pairs = n;
            }
            cfg.validate()?;
            gen_synth(&cfg, &out)
        }
        Command::Bpe {
            corpus,
            src_lang,
            tgt_lang,
            merges,
            out,
        } => {
            if let Some(m) = merges {
                cfg.bpe.merges = m;
            }
            cfg.validate()?;
            bpe(&cfg, &corpus, &src_lang, &tgt_lang, &out)
        }
        Command::Train {
            corpus,
            bpe,
            dev,
            out,
            banks,
            resume,
            epochs,
            max_steps,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if max_steps.is_some() {
                cfg.train.max_steps = max_steps;
            }
            let corpus = required(corpus.or(cfg.paths.corpus.clone()), "corpus")?;
            let bpe = required(bpe.or(cfg.paths.bpe.clone()), "bpe")?;
            let dev = dev.or(cfg.paths.dev.clone());
            cfg.validate()?;
            train_cmd(&cfg, &corpus, &bpe, dev.as_deref(), &banks, &out, resume)
        }
        Command::Generate {
            checkpoint,
            triples,
            beam,
            max_len,
            out,
        } => {
            if let Some(b) = beam {
                cfg.generate.beam = b;
            }
            if let Some(m) = max_len {
                cfg.generate.max_len = m;
            }
            cfg.validate()?;
            let ck = required(checkpoint.or(cfg.paths.checkpoint.clone()), "checkpoint")?;
            generate(&cfg, &ck, &triples, &out)
        }
        Command::EvalPara(args) => eval_gen(&cfg, TaskKind::Paraphrase, &args),
        Command::EvalMt(args) => eval_gen(&cfg, TaskKind::Translation, &args),
        Command::EvalSts {
            checkpoint,
            pairs,
            lang,
            out,
        } => {
            let ck = required(checkpoint.or(cfg.paths.checkpoint.clone()), "checkpoint")?;
            eval_sts(&cfg, &ck, &pairs, &lang, &out)
        }
        Command::EvalSyn {
            checkpoint,
            bank,
            lang,
            probe,
            out,
        } => {
            let ck = required(checkpoint.or(cfg.paths.checkpoint.clone()), "checkpoint")?;
            eval_syn(&cfg, &ck, &bank, &lang, probe.as_deref(), &out)
        }
        Command::Nn {
            checkpoint,
            queries,
            pool,
            lang,
            variable,
            k,
            out,
        } => {
            if let Some(k) = k {
                cfg.eval.k = k;
            }
            let ck = required(checkpoint.or(cfg.paths.checkpoint.clone()), "checkpoint")?;
            let var: Variable = variable.parse()?;
            nn(&cfg, &ck, &queries, &pool, &lang, var, &out)
        }
    }
}

fn required(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| mvgvae::Error::Config(format!("no {what} path: pass --{what} or set paths.{what}")).into())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Synthetic world: bitext, parse banks, gold labels, test and dev triples
/// for every task direction, retrieval probe sets and similarity pairs.
fn gen_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let world = SyntheticWorld::new(cfg.world_config())?;
    let bitext = gen_synthetic_bitext(&world)?;
    let langs = world.languages();
    let mut report = Report::new("gen-synth", cfg);

    save_bitext(&bitext.corpus, &out.join("bitext.tsv"))?;
    for bank in &bitext.banks {
        save_parse_bank(bank, &out.join(format!("bank.{}.txt", bank.lang)))?;
    }
    write_jsonl(
        &out.join("gold.jsonl"),
        bitext.gold.iter().map(|[a, b]| json!({ "src": a, "tgt": b })),
    )?;
    report.metric("pairs", bitext.corpus.len() as f64);

    let mut dev = Vec::new();
    for (k, (s, t)) in directions(&langs).into_iter().enumerate() {
        let seed = derive_seed(cfg.seed, "test-triples", k as u64);
        let test = gen_synthetic_triples(&world, &bitext, cfg.synth.n_triples, s, t, seed)?;
        let triples: Vec<EvalTriple> = test.iter().map(|g| g.triple.clone()).collect();
        save_triples(&triples, &out.join(format!("test.{s}-{t}.jsonl")))?;
        write_jsonl(&out.join(format!("test.{s}-{t}.gold.jsonl")), test.iter().map(TripleGold::from))?;
        report.metric(format!("triples.{s}-{t}"), triples.len() as f64);

        let seed = derive_seed(cfg.seed, "dev-triples", k as u64);
        dev.extend(
            gen_synthetic_triples(&world, &bitext, cfg.synth.n_dev, s, t, seed)?
                .into_iter()
                .map(|g| g.triple),
        );
    }
    save_triples(&dev, &out.join("dev.jsonl"))?;
    report.metric("dev_triples", dev.len() as f64);

    for (k, lang) in langs.iter().enumerate() {
        if cfg.synth.probe_frames > 0 {
            let set = gen_probe_set(&world, lang, cfg.synth.probe_frames, derive_seed(cfg.seed, "probe", k as u64))?;
            save_probe_set(&set, &out.join(format!("probe.{lang}.jsonl")))?;
        }
        if cfg.synth.n_sts > 0 {
            let pairs = gen_sts_pairs(&world, lang, cfg.synth.n_sts, derive_seed(cfg.seed, "sts", k as u64))?;
            write_jsonl(&out.join(format!("sts.{lang}.jsonl")), &pairs)?;
        }
    }
    report.details = json!({ "languages": langs, "world": cfg.world_config() });
    report.write(&out.join("report.json"))
}

fn directions(langs: &[String]) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    for s in langs {
        for t in langs {
            out.push((s.as_str(), t.as_str()));
        }
    }
    out
}

fn bpe(cfg: &RunConfig, corpus: &Path, src: &str, tgt: &str, out: &Path) -> Result<()> {
    let loaded = load_bitext(&BitextSource::Tsv(corpus.to_path_buf()), src, tgt)?;
    let langs = loaded.corpus.languages();
    let model = bpe_train(loaded.corpus.sentences().map(|(_, s)| s), &langs, cfg.bpe.merges)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    model.save(out)?;
    let mut report = Report::new("bpe", cfg);
    report.input("corpus", corpus)?;
    report.metric("merges", model.merges().len() as f64);
    report.metric("vocab_size", model.vocab_size() as f64);
    report.metric("rejected_lines", loaded.rejected as f64);
    report.write(&out.with_extension("report.json"))
}

fn load_corpus_for(bpe: &BpeModel, corpus: &Path) -> Result<mvgvae::corpus::LoadedBitext> {
    let langs = bpe.languages();
    let (src, tgt) = match langs {
        [a] => (a.as_str(), a.as_str()),
        [a, b] => (a.as_str(), b.as_str()),
        _ => bail!(mvgvae::Error::Config(format!(
            "subword model has {} languages; training needs one or two",
            langs.len()
        ))),
    };
    Ok(load_bitext(&BitextSource::Tsv(corpus.to_path_buf()), src, tgt)?)
}

fn load_banks(banks: &[(String, PathBuf)]) -> Result<Vec<ParseBank>> {
    Ok(banks
        .iter()
        .map(|(l, p)| load_parse_bank(p, l))
        .collect::<mvgvae::Result<_>>()?)
}

fn train_cmd(
    cfg: &RunConfig,
    corpus: &Path,
    bpe_path: &Path,
    dev: Option<&Path>,
    banks: &[(String, PathBuf)],
    out: &Path,
    resume: bool,
) -> Result<()> {
    let bpe = BpeModel::load(bpe_path)?;
    let loaded = load_corpus_for(&bpe, corpus)?;
    let parsed = load_banks(banks)?;
    let tagger = (!parsed.is_empty()).then(|| BankParser::new(&parsed));
    let data = TrainData::with_tagger(&bpe, &loaded.corpus, cfg.model.max_len, tagger.as_ref())?;
    let dev_triples = match dev {
        Some(p) => load_triples(p)?,
        None => Vec::new(),
    };
    let tcfg = cfg.train_config();
    let paths = TrainPaths { dir: out.to_path_buf() };
    let state = if resume {
        let ck = Checkpoint::load(&paths.last())?;
        let saved = &ck.meta["train"];
        let mut want = serde_json::to_value(&tcfg)?;
        // The budget may grow on resume; everything else must match.
        for k in ["epochs", "max_steps"] {
            want[k] = saved[k].clone();
        }
        if *saved != want {
            bail!(mvgvae::Error::Config(format!(
                "training configuration differs from the one in {}",
                paths.last().display()
            )));
        }
        if ck.meta["bpe"].as_str() != Some(bpe.to_text().as_str()) {
            bail!(mvgvae::Error::Config("subword model differs from the checkpoint's".into()));
        }
        info!("resuming from {}", paths.last().display());
        TrainState::from_checkpoint(&ck, tcfg.optimizer.clone())?
    } else {
        let model = ModelParams::new(cfg.model_config_for(&bpe), cfg.seed)?;
        TrainState::new(model, tcfg.optimizer.clone())
    };
    let outcome = train(&tcfg, &bpe, &data, &dev_triples, state, Some(&paths))?;
    let st = &outcome.state;

    let mut report = Report::new("train", cfg);
    report.input("corpus", corpus)?;
    report.input("bpe", bpe_path)?;
    if let Some(p) = dev {
        report.input("dev", p)?;
    }
    for (l, p) in banks {
        report.input(&format!("bank.{l}"), p)?;
    }
    report.metric("steps", st.step as f64);
    report.metric("pairs", data.len() as f64);
    report.metric("best_step", st.best_step as f64);
    report.metric("stopped_early", f64::from(u8::from(st.stopped_early)));
    if let Some(b) = st.best_bleu {
        report.metric("best_dev_bleu", b);
    }
    if let Some(last) = st.log.last() {
        report.metric("final.elbo", last.elbo);
        report.metric("final.prl", last.prl);
        report.metric("final.wpl", last.wpl);
        report.metric("final.kl_z", last.kl_z);
    }
    report.details = json!({ "model": cfg.model_config_for(&bpe), "train": tcfg });
    report.write(&out.join("report.json"))
}

fn load_model(ck_path: &Path) -> Result<(ModelParams, BpeModel)> {
    let ck = Checkpoint::load(ck_path)?;
    let text = ck.meta["bpe"]
        .as_str()
        .ok_or_else(|| mvgvae::Error::Checkpoint(format!("{}: no subword model in metadata", ck_path.display())))?;
    Ok((ck.to_model()?, BpeModel::from_text(text)?))
}

fn generate(cfg: &RunConfig, ck: &Path, triples_path: &Path, out: &Path) -> Result<()> {
    let (model, bpe) = load_model(ck)?;
    let triples = load_triples(triples_path)?;
    let results: Vec<Hypothesis> = triples
        .par_iter()
        .map(|t| {
            let req = GenerationRequest::from_triple(t, cfg.generate.beam, cfg.generate.max_len);
            let g = controlled_generate(&model, &bpe, &req)?;
            Ok(Hypothesis {
                hypothesis: detokenize(&g.words),
                score: g.score,
                truncated: g.truncated,
            })
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_jsonl(out, &results)?;
    let mut report = Report::new("generate", cfg);
    report.input("checkpoint", ck)?;
    report.input("triples", triples_path)?;
    report.metric("n", results.len() as f64);
    report.metric(
        "truncated",
        results.iter().filter(|h| h.truncated).count() as f64,
    );
    report.write(&out.with_extension("report.json"))
}

fn eval_gen(cfg: &RunConfig, kind: TaskKind, args: &EvalArgs) -> Result<()> {
    let triples = load_triples(&args.triples)?;
    let hyps: Vec<Hypothesis> = read_jsonl(&args.hyps)?;
    if hyps.len() != triples.len() {
        bail!(mvgvae::Error::Invalid(format!(
            "{} hypotheses for {} triples",
            hyps.len(),
            triples.len()
        )));
    }
    if let Some((i, t)) = triples.iter().enumerate().find(|(_, t)| t.task_kind() != kind) {
        bail!(mvgvae::Error::Invalid(format!(
            "triple {} is {:?}, this command scores {:?}",
            i + 1,
            t.task_kind(),
            kind
        )));
    }
    if args.banks.is_empty() {
        bail!(mvgvae::Error::Config("at least one --bank LANG=PATH is needed for the parser".into()));
    }
    let banks = load_banks(&args.banks)?;
    let parser = BankParser::new(&banks);
    let vocab: BTreeMap<&str, BTreeSet<&str>> = banks
        .iter()
        .map(|b| {
            let words = b.entries.iter().flat_map(|e| e.tokens.iter().map(String::as_str)).collect();
            (b.lang.as_str(), words)
        })
        .collect();

    let h: Vec<Vec<String>> = hyps.iter().map(|x| tokenize(&x.hypothesis)).collect();
    let r: Vec<Vec<String>> = triples.iter().map(|t| t.reference.clone()).collect();
    let mode = cfg.eval.text_mode;
    let parse = |s: &[Vec<String>]| -> Vec<ParseTree> { s.iter().map(|x| parser.parse(x)).collect() };
    let (ph, pr) = (parse(&h), parse(&r));
    let px = parse(&triples.iter().map(|t| t.syn.clone()).collect::<Vec<_>>());

    let mut report = Report::new(
        match kind {
            TaskKind::Paraphrase => "eval-para",
            TaskKind::Translation => "eval-mt",
        },
        cfg,
    );
    report.input("hyps", &args.hyps)?;
    report.input("triples", &args.triples)?;
    for (l, p) in &args.banks {
        report.input(&format!("bank.{l}"), p)?;
    }
    report.metric("n", h.len() as f64);
    report.metric("bleu", bleu(&h, &r, mode)?);
    report.metric("rouge1", rouge_n(&h, &r, 1, mode)?);
    report.metric("rouge2", rouge_n(&h, &r, 2, mode)?);
    report.metric("rougeL", rouge_l(&h, &r, mode)?);
    report.metric("st_r", st_score(&ph, &pr)?);
    report.metric("st_s", st_score(&ph, &px)?);
    report.metric("empty_hypotheses", h.iter().filter(|x| x.is_empty()).count() as f64);
    report.metric("truncated", hyps.iter().filter(|x| x.truncated).count() as f64);

    let (mut in_lex, mut total) = (0usize, 0usize);
    for (toks, t) in h.iter().zip(&triples) {
        let lex = vocab.get(t.tgt_lang.as_str()).ok_or_else(|| {
            mvgvae::Error::Config(format!("no --bank for target language {}", t.tgt_lang))
        })?;
        total += toks.len();
        in_lex += toks.iter().filter(|w| lex.contains(w.as_str())).count();
    }
    report.metric(
        "target_lexicon_rate",
        if total == 0 { 0.0 } else { in_lex as f64 / total as f64 },
    );
    report.write(&args.out)
}

fn probe_metrics(report: &mut Report, p: &ProbeReport) {
    let name = &p.probe;
    report.metric(format!("{name}.sem"), p.sem);
    report.metric(format!("{name}.syn"), p.syn);
    report.metric(format!("{name}.delta"), p.delta);
    report.metric(format!("{name}.n"), p.n as f64);
    for (k, v) in [("oracle", p.oracle), ("random", p.random), ("bag_of_vectors", p.bag_of_vectors)] {
        if let Some(v) = v {
            report.metric(format!("{name}.{k}"), v);
        }
    }
    if p.oracle.is_some() && p.random.is_some() {
        report.metric(format!("{name}.ordering_holds"), f64::from(u8::from(p.ordering_holds())));
    }
}

fn eval_sts(cfg: &RunConfig, ck: &Path, pairs_path: &Path, lang: &str, out: &Path) -> Result<()> {
    let (model, bpe) = load_model(ck)?;
    let pairs: Vec<StsPair> = read_jsonl(pairs_path)?;
    let enc = pairs
        .iter()
        .map(|p| Ok((bpe.encode(&p.a, lang)?, bpe.encode(&p.b, lang)?)))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let r = sts_probe(&model, &enc, &gold)?;
    let mut report = Report::new("eval-sts", cfg);
    report.input("checkpoint", ck)?;
    report.input("pairs", pairs_path)?;
    probe_metrics(&mut report, &r);
    report.details = json!({ "lang": lang, "sts": r });
    report.write(out)
}

fn eval_syn(cfg: &RunConfig, ck: &Path, bank_path: &Path, lang: &str, probe: Option<&Path>, out: &Path) -> Result<()> {
    let (model, bpe) = load_model(ck)?;
    let bank = load_parse_bank(bank_path, lang)?;
    let seed = derive_seed(cfg.seed, "eval-syn", 0);
    let syn = syntax_probe(
        &model,
        &bpe,
        lang,
        &bank.entries,
        cfg.eval.syn_max_len,
        cfg.eval.per_length,
        seed,
    )?;
    let mut report = Report::new("eval-syn", cfg);
    report.input("checkpoint", ck)?;
    report.input("bank", bank_path)?;
    probe_metrics(&mut report, &syn.pos_accuracy);
    probe_metrics(&mut report, &syn.labeled_f1);
    let mut details = json!({ "lang": lang, "syntax": syn });
    if let Some(p) = probe {
        let set = crate::files::load_probe_set(p)?;
        if set.lang != lang {
            bail!(mvgvae::Error::Invalid(format!("probe set is in {}, --lang is {lang}", set.lang)));
        }
        report.input("probe", p)?;
        let r = retrieval_probe(&model, &bpe, &set, seed)?;
        for x in [&r.frame, &r.template, &r.pos] {
            probe_metrics(&mut report, x);
        }
        details["retrieval"] = serde_json::to_value(&r)?;
    }
    report.details = details;
    report.write(out)
}

fn nn(cfg: &RunConfig, ck: &Path, queries: &Path, pool: &Path, lang: &str, var: Variable, out: &Path) -> Result<()> {
    let (model, bpe) = load_model(ck)?;
    let q = read_sentences(queries)?;
    let p = read_sentences(pool)?;
    let pool_enc = p.iter().map(|s| bpe.encode(s, lang)).collect::<mvgvae::Result<Vec<_>>>()?;
    let mut results = Vec::with_capacity(q.len());
    for s in &q {
        let hits = nearest_neighbors(&model, &bpe.encode(s, lang)?, &pool_enc, var, cfg.eval.k)?;
        let neighbors: Vec<_> = hits
            .iter()
            .map(|n| json!({ "index": n.index, "score": n.score, "sentence": detokenize(&p[n.index]) }))
            .collect();
        results.push(json!({ "query": detokenize(s), "neighbors": neighbors }));
    }
    let mut report = Report::new("nn", cfg);
    report.input("checkpoint", ck)?;
    report.input("queries", queries)?;
    report.input("pool", pool)?;
    report.metric("queries", q.len() as f64);
    report.details = json!({ "lang": lang, "variable": var, "k": cfg.eval.k, "results": results });
    report.write(out)
}
