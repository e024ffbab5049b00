use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context as _};
use momentreg::embedstore::{normalize, similarity_matrix};
use momentreg::events::{detect_events, tsm, Detection};
use momentreg::feasibility::{
    classify_triplet, expectation_scaling_check, load_triplets, run_refine_study, synth_triplet_geometry,
    toy_attention_refine, AttentionRefiner, AttentionWeights, ExternalRefiner, IdentityRefiner, RefineReport,
    Refiner, Triplet,
};
use momentreg::losses::{l_evt, l_pos, run_gradcheck_suite, total_loss, EvtMode, PositionEmbeddings};
use momentreg::matching::moment_set_loss;
use momentreg::metrics::{evaluate_moments, highlight_metrics, GroundTruth, HighlightAnnotation, MomentPrediction};
use momentreg::synthlab::{run_experiment, ExperimentConfig, ExperimentReport};
use momentreg::{
    seed, DetectorConfig, EmbeddingTable, EventSet, FrameFeatures, LossReport, MatchWeights, RegulationWeights,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::*;
use crate::manifest::{self, Context};
use crate::svg::{grey, Svg};
use crate::{io, CheckFailed};

pub fn name(c: &Command) -> String {
    let (group, sub) = match c {
        Command::Emb(e) => (
            "emb",
            match e {
                EmbCommand::Convert(_) => "convert",
                EmbCommand::Normalize(_) => "normalize",
                EmbCommand::Sim(_) => "sim",
                EmbCommand::Reverse(_) => "reverse",
                EmbCommand::ToyRefine(_) => "toy-refine",
                EmbCommand::GenWeights(_) => "gen-weights",
            },
        ),
        Command::Triplets(t) => (
            "triplets",
            match t {
                TripletsCommand::Study(_) => "study",
                TripletsCommand::Classify(_) => "classify",
                TripletsCommand::SynthGeometry(_) => "synth-geometry",
                TripletsCommand::Scaling(_) => "scaling",
            },
        ),
        Command::Events(EventsCommand::Detect(_)) => ("events", "detect"),
        Command::Loss(LossCommand::Eval(_)) => ("loss", "eval"),
        Command::Loss(LossCommand::Gradcheck(_)) => ("loss", "gradcheck"),
        Command::Eval(EvalCommand::Mr(_)) => ("eval", "mr"),
        Command::Eval(EvalCommand::Hd(_)) => ("eval", "hd"),
        Command::Synth(SynthCommand::Run(_)) => ("synth", "run"),
        Command::Replay(_) => ("replay", ""),
    };
    format!("{group} {sub}").trim().to_string()
}

/// Every output path a command may write, for relocation on replay.
pub fn outputs_mut(c: &mut Command) -> Vec<&mut PathBuf> {
    let mut v: Vec<&mut PathBuf> = Vec::new();
    match c {
        Command::Emb(e) => match e {
            EmbCommand::Convert(a) | EmbCommand::Normalize(a) | EmbCommand::Sim(a) | EmbCommand::Reverse(a) => {
                v.push(&mut a.output)
            }
            EmbCommand::ToyRefine(a) => v.push(&mut a.output),
            EmbCommand::GenWeights(a) => v.push(&mut a.out),
        },
        Command::Triplets(t) => match t {
            TripletsCommand::Study(a) => {
                v.push(&mut a.out);
                v.extend(a.json.as_mut());
                v.extend(a.svg.as_mut());
            }
            TripletsCommand::Classify(a) => v.push(&mut a.out),
            TripletsCommand::SynthGeometry(a) => v.push(&mut a.out),
            TripletsCommand::Scaling(a) => v.push(&mut a.out),
        },
        Command::Events(EventsCommand::Detect(a)) => {
            v.push(&mut a.out);
            v.extend(a.svg.as_mut());
        }
        Command::Loss(LossCommand::Eval(a)) => v.extend(a.out.as_mut()),
        Command::Loss(LossCommand::Gradcheck(a)) => v.extend(a.out.as_mut()),
        Command::Eval(EvalCommand::Mr(a)) => {
            v.extend(a.out.as_mut());
            v.extend(a.csv.as_mut());
        }
        Command::Eval(EvalCommand::Hd(a)) => {
            v.extend(a.out.as_mut());
            v.extend(a.csv.as_mut());
        }
        Command::Synth(SynthCommand::Run(a)) => {
            v.push(&mut a.out);
            v.extend(a.curves.as_mut());
            v.extend(a.svg.as_mut());
        }
        Command::Replay(_) => {}
    }
    v
}

/// What a command read and wrote, and the configuration it resolved.
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: Value,
}

pub fn execute(mut command: Command, ctx: &Context) -> anyhow::Result<()> {
    resolve_defaults(&mut command);
    let out = match &command {
        Command::Emb(e) => emb(e, ctx)?,
        Command::Triplets(t) => triplets(t, ctx)?,
        Command::Events(EventsCommand::Detect(a)) => events_detect(a)?,
        Command::Loss(LossCommand::Eval(a)) => loss_eval(a)?,
        Command::Loss(LossCommand::Gradcheck(a)) => return gradcheck(a, ctx, &command),
        Command::Eval(EvalCommand::Mr(a)) => eval_mr(a)?,
        Command::Eval(EvalCommand::Hd(a)) => eval_hd(a)?,
        Command::Synth(SynthCommand::Run(a)) => synth_run(a, ctx)?,
        Command::Replay(_) => bail!("replay cannot be nested"),
    };
    manifest::write(ctx, &command, out.config, &out.inputs, &out.outputs)
}

/// Materialize output paths that default from other paths.
fn resolve_defaults(c: &mut Command) {
    if let Command::Synth(SynthCommand::Run(a)) = c {
        let with_ext = |ext: &str| a.out.with_extension(ext);
        if a.curves.is_none() {
            a.curves = Some(with_ext("curves.csv"));
        }
        if a.svg.is_none() {
            a.svg = Some(with_ext("svg"));
        }
    }
}

fn emb(c: &EmbCommand, ctx: &Context) -> anyhow::Result<Outcome> {
    let simple = |a: &InOut, f: &dyn Fn(&EmbeddingTable) -> anyhow::Result<EmbeddingTable>| -> anyhow::Result<Outcome> {
        let t = io::read_table(&a.input)?;
        io::write_table(&f(&t)?, &a.output)?;
        Ok(Outcome { inputs: vec![a.input.clone()], outputs: vec![a.output.clone()], config: json!({}) })
    };
    match c {
        EmbCommand::Convert(a) => simple(a, &|t| Ok(t.clone())),
        EmbCommand::Normalize(a) => simple(a, &|t| Ok(normalize(t)?)),
        EmbCommand::Reverse(a) => simple(a, &|t| {
            let n = t.len();
            let rows: Vec<Vec<f64>> = (0..n).rev().map(|i| t.row(i).to_vec()).collect();
            Ok(EmbeddingTable::from_rows(t.labels().iter().rev().cloned(), &rows)?)
        }),
        EmbCommand::Sim(a) => {
            let t = normalize(&io::read_table(&a.input)?)?;
            let s = similarity_matrix(&t)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(std::iter::once("label").chain(t.labels().iter().map(String::as_str)))?;
            for (i, label) in t.labels().iter().enumerate() {
                let row: Vec<String> = s.row(i).iter().map(|v| format!("{v}")).collect();
                w.write_record(std::iter::once(label.as_str()).chain(row.iter().map(String::as_str)))?;
            }
            io::write_text(&a.output, &String::from_utf8(w.into_inner()?)?)?;
            Ok(Outcome { inputs: vec![a.input.clone()], outputs: vec![a.output.clone()], config: json!({}) })
        }
        EmbCommand::ToyRefine(a) => {
            let t = io::read_table(&a.input)?;
            let (weights, inputs) = match &a.weights {
                Some(p) => (AttentionWeights::load(p)?, vec![a.input.clone(), p.clone()]),
                None => (random_weights(t.dim(), &a.shape, ctx.seed), vec![a.input.clone()]),
            };
            io::write_table(&toy_attention_refine(&t, &weights)?, &a.output)?;
            Ok(Outcome { inputs, outputs: vec![a.output.clone()], config: json!({ "layers": weights.layers.len() }) })
        }
        EmbCommand::GenWeights(a) => {
            if a.dim == 0 {
                bail!("--dim must be positive");
            }
            io::write_json(&a.out, &random_weights(a.dim, &a.shape, ctx.seed))?;
            Ok(Outcome { inputs: vec![], outputs: vec![a.out.clone()], config: json!({}) })
        }
    }
}

fn random_weights(dim: usize, shape: &AttentionShape, global_seed: u64) -> AttentionWeights {
    AttentionWeights::random(dim, shape.dk, shape.depth, shape.scale, seed::derive(global_seed, b"attention-weights"))
}

fn triplets(c: &TripletsCommand, ctx: &Context) -> anyhow::Result<Outcome> {
    match c {
        TripletsCommand::Study(a) => study(a, ctx),
        TripletsCommand::Classify(a) => {
            let table = normalize(&io::read_table(&a.emb)?)?;
            let ts = load_triplets(&a.triplets)?;
            #[derive(Serialize)]
            struct Row<'a> {
                #[serde(flatten)]
                triplet: &'a Triplet,
                #[serde(flatten)]
                verdict: momentreg::feasibility::TripletVerdict,
            }
            let rows = ts
                .iter()
                .map(|t| Ok(Row { triplet: t, verdict: classify_triplet(&table, t)? }))
                .collect::<anyhow::Result<Vec<_>>>()?;
            io::write_text(&a.out, &io::to_jsonl(&rows)?)?;
            Ok(Outcome { inputs: vec![a.emb.clone(), a.triplets.clone()], outputs: vec![a.out.clone()], config: json!({}) })
        }
        TripletsCommand::SynthGeometry(a) => {
            let ts = load_triplets(&a.triplets)?;
            let (table, _) = synth_triplet_geometry(&ts, a.dim, a.fraction, ctx.seed)?;
            io::write_table(&table, &a.out)?;
            Ok(Outcome { inputs: vec![a.triplets.clone()], outputs: vec![a.out.clone()], config: json!({}) })
        }
        TripletsCommand::Scaling(a) => {
            #[derive(Serialize)]
            struct Row {
                #[serde(flatten)]
                result: momentreg::feasibility::ScalingResult,
                relative_error: f64,
            }
            let rows = a
                .alphas
                .iter()
                .map(|&alpha| {
                    let r = expectation_scaling_check(a.dim, alpha, a.n_pairs, ctx.seed)?;
                    Ok(Row { relative_error: (r.empirical_ratio - r.predicted).abs() / r.predicted, result: r })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            io::write_json(&a.out, &rows)?;
            Ok(Outcome { inputs: vec![], outputs: vec![a.out.clone()], config: json!({}) })
        }
    }
}

fn study(a: &StudyArgs, ctx: &Context) -> anyhow::Result<Outcome> {
    let table = io::read_table(&a.emb)?;
    let ts = load_triplets(&a.triplets)?;
    let mut inputs = vec![a.emb.clone(), a.triplets.clone()];
    let refiner: Box<dyn Refiner> = match a.refiner {
        RefinerKind::Identity => Box::new(IdentityRefiner),
        RefinerKind::Toy => {
            let weights = match &a.weights {
                Some(p) => {
                    inputs.push(p.clone());
                    AttentionWeights::load(p)?
                }
                None => random_weights(table.dim(), &a.shape, ctx.seed),
            };
            Box::new(AttentionRefiner { weights })
        }
        RefinerKind::External => {
            let cmd = a.refiner_cmd.as_deref().context("--refiner-cmd is required for an external refiner")?;
            if !(a.timeout_secs > 0.0 && a.timeout_secs.is_finite()) {
                bail!("--timeout-secs must be positive");
            }
            Box::new(ExternalRefiner::from_command_line(cmd)?.with_timeout(Duration::from_secs_f64(a.timeout_secs)))
        }
    };
    let grid = run_refine_study(&table, &ts, refiner.as_ref(), &a.alphas, &a.ps, ctx.seed)?;
    io::write_csv(&a.out, &grid)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.json {
        io::write_json(p, &json!({ "refiner": refiner.name(), "cells": grid }))?;
        outputs.push(p.clone());
    }
    if let Some(p) = &a.svg {
        io::write_text(p, &study_svg(&grid, &refiner.name()))?;
        outputs.push(p.clone());
    }
    Ok(Outcome { inputs, outputs, config: json!({ "refiner": refiner.name() }) })
}

fn study_svg(grid: &[RefineReport], title: &str) -> String {
    let (left, top, bar, gap, plot_h) = (50.0, 30.0, 14.0, 16.0, 200.0);
    let width = left + grid.len() as f64 * (2.0 * bar + gap) + 20.0;
    let mut s = Svg::new(width.max(260.0), top + plot_h + 70.0);
    s.text(left, 18.0, 12.0, "start", &format!("refiner: {title}"));
    let base = top + plot_h;
    s.line(left, top, left, base, "black", 1.0);
    s.line(left, base, width - 10.0, base, "black", 1.0);
    for tick in [0.0, 0.5, 1.0] {
        let y = base - tick * plot_h;
        s.text(left - 6.0, y + 4.0, 10.0, "end", &format!("{tick}"));
    }
    for (i, c) in grid.iter().enumerate() {
        let x = left + 8.0 + i as f64 * (2.0 * bar + gap);
        let hi = c.improved_proportion * plot_h;
        let hd = c.deteriorated_proportion * plot_h;
        s.rect(x, base - hi, bar, hi, "#2b8cbe");
        s.rect(x + bar, base - hd, bar, hd, "#e34a33");
        s.text(x + bar, base + 14.0, 9.0, "middle", &format!("α={}", c.alpha));
        s.text(x + bar, base + 26.0, 9.0, "middle", &format!("p={}", c.p));
    }
    s.rect(left, base + 40.0, 10.0, 10.0, "#2b8cbe");
    s.text(left + 14.0, base + 49.0, 10.0, "start", "improved");
    s.rect(left + 90.0, base + 40.0, 10.0, 10.0, "#e34a33");
    s.text(left + 104.0, base + 49.0, 10.0, "start", "deteriorated");
    s.finish()
}

fn detector(a: &DetectorArgs) -> DetectorConfig {
    DetectorConfig {
        kernel_half: a.kernel_half,
        min_event_len: a.min_event_len,
        score_threshold: a.threshold,
        max_depth: a.max_depth,
    }
}

fn video_id(path: &Path) -> anyhow::Result<String> {
    Ok(path.file_stem().context("feature path has no file name")?.to_string_lossy().into_owned())
}

fn events_detect(a: &DetectArgs) -> anyhow::Result<Outcome> {
    let cfg = detector(&a.detector);
    let videos: Vec<FrameFeatures> = a
        .features
        .iter()
        .map(|p| Ok(FrameFeatures::new(video_id(p)?, io::read_table(p)?.matrix().clone(), a.frame_period)?))
        .collect::<anyhow::Result<_>>()?;
    let found: Vec<Detection> = videos
        .par_iter()
        .map(|f| detect_events(f, &cfg))
        .collect::<momentreg::Result<_>>()?;
    io::write_text(&a.out, &io::to_jsonl(&found)?)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.svg {
        io::write_text(p, &tsm_svg(&videos[0], &found[0])?)?;
        outputs.push(p.clone());
    }
    Ok(Outcome { inputs: a.features.clone(), outputs, config: serde_json::to_value(cfg)? })
}

fn tsm_svg(f: &FrameFeatures, d: &Detection) -> anyhow::Result<String> {
    let m = tsm(f)?;
    let t = m.rows();
    let cell = (480.0 / t as f64).clamp(1.0, 12.0);
    let side = cell * t as f64;
    let (lo, hi) = m.as_slice().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut s = Svg::new(side + 40.0, side + 50.0);
    s.text(20.0, 16.0, 12.0, "start", &format!("{}: {} events", d.video_id, d.events.len()));
    let (ox, oy) = (20.0, 30.0);
    for i in 0..t {
        for j in 0..t {
            s.rect(ox + j as f64 * cell, oy + i as f64 * cell, cell, cell, &grey(m.get(i, j), lo, hi));
        }
    }
    for &b in &d.boundary_frames {
        let x = ox + b as f64 * cell;
        s.line(x, oy, x, oy + side, "red", 1.5);
        s.line(ox, oy + b as f64 * cell, ox + side, oy + b as f64 * cell, "red", 1.5);
    }
    Ok(s.finish())
}

#[derive(Deserialize)]
struct EventsRecord {
    video_id: String,
    events: EventSet,
}

fn loss_eval(a: &LossEvalArgs) -> anyhow::Result<Outcome> {
    let w = RegulationWeights {
        lambda_l1: a.weights.lambda_l1,
        lambda_iou: a.weights.lambda_iou,
        lambda_e: a.weights.lambda_e,
        lambda_p: a.weights.lambda_p,
    };
    w.validate()?;
    let mw = MatchWeights { lambda_l1: w.lambda_l1, lambda_iou: w.lambda_iou };
    let mode = match a.mode {
        Mode::BestIou => EvtMode::BestIou,
        Mode::AllEvents => EvtMode::AllEvents,
    };
    let preds: Vec<MomentPrediction> = io::read_jsonl(&a.preds)?;
    let events: Vec<EventsRecord> = io::read_jsonl(&a.events)?;
    let gts: Vec<GroundTruth> = match &a.gts {
        Some(p) => io::read_jsonl(p)?,
        None => Vec::new(),
    };
    let positions = match &a.positions {
        Some(p) => Some(PositionEmbeddings::new(io::read_table(p)?.matrix().clone(), a.frame_period)?),
        None => None,
    };
    #[derive(Serialize)]
    struct Row {
        video_id: String,
        report: LossReport,
    }
    let mut rows = Vec::with_capacity(preds.len());
    for p in &preds {
        p.validate()?;
        let ev = &events
            .iter()
            .rev()
            .find(|e| e.video_id == p.video_id)
            .with_context(|| format!("no events for video {:?}", p.video_id))?
            .events;
        let mnt = match gts.iter().rev().find(|g| g.video_id == p.video_id) {
            Some(g) => moment_set_loss(&p.spans, &g.spans, &mw)?.report,
            None if a.gts.is_some() => bail!("no ground truth for video {:?}", p.video_id),
            None => LossReport::scalar(0.0),
        };
        let evt = l_evt(&p.spans, ev, &w, mode)?;
        let pos = match &positions {
            Some(pe) => l_pos(pe, ev)?,
            None => LossReport::scalar(0.0),
        };
        rows.push(Row { video_id: p.video_id.clone(), report: total_loss(&mnt, &evt, &pos, &w)? });
    }
    let text = io::to_jsonl(&rows)?;
    let mut inputs = vec![a.preds.clone(), a.events.clone()];
    inputs.extend(a.gts.clone());
    inputs.extend(a.positions.clone());
    let outputs = match &a.out {
        Some(p) => {
            io::write_text(p, &text)?;
            vec![p.clone()]
        }
        None => {
            io::print(&text)?;
            vec![]
        }
    };
    Ok(Outcome { inputs, outputs, config: json!({ "weights": w, "mode": mode }) })
}

fn gradcheck(a: &GradcheckArgs, ctx: &Context, command: &Command) -> anyhow::Result<()> {
    if a.trials == 0 {
        bail!("--trials must be positive");
    }
    let rows = run_gradcheck_suite(ctx.seed, a.trials);
    let mut table = format!("{:<18} {:>7} {:>8} {:>8} {:>12}  status\n", "loss", "trials", "checked", "skipped", "max_rel_err");
    for r in &rows {
        table += &format!(
            "{:<18} {:>7} {:>8} {:>8} {:>12.3e}  {}\n",
            r.loss,
            r.trials,
            r.checked,
            r.skipped,
            r.max_rel_err,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    io::print(&table)?;
    if let Some(p) = &a.out {
        io::write_json(p, &rows)?;
        manifest::write(ctx, command, json!({ "tolerance": momentreg::losses::SUITE_TOLERANCE }), &[], &[p.clone()])?;
    }
    if let Some(r) = rows.iter().find(|r| !r.passed) {
        return Err(CheckFailed(format!("gradient check failed for {} (max relative error {:e})", r.loss, r.max_rel_err)).into());
    }
    Ok(())
}

fn emit_report<T: Serialize>(value: &T, out: &Option<PathBuf>) -> anyhow::Result<Vec<PathBuf>> {
    match out {
        Some(p) => {
            io::write_json(p, value)?;
            Ok(vec![p.clone()])
        }
        None => {
            io::print(&(serde_json::to_string_pretty(value)? + "\n"))?;
            Ok(vec![])
        }
    }
}

fn csv_row(path: &Path, header: &[String], values: &[f64]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    w.write_record(values.iter().map(|v| format!("{v}")))?;
    io::write_text(path, &String::from_utf8(w.into_inner()?)?)
}

fn eval_mr(a: &EvalMrArgs) -> anyhow::Result<Outcome> {
    let preds: Vec<MomentPrediction> = io::read_jsonl(&a.preds)?;
    let gts: Vec<GroundTruth> = io::read_jsonl(&a.gts)?;
    let report = evaluate_moments(&preds, &gts)?;
    let mut outputs = emit_report(&report, &a.out)?;
    if let Some(p) = &a.csv {
        let mut header = Vec::new();
        let mut values = Vec::new();
        for (k, v) in &report.r1_at {
            header.push(format!("r1@{k}"));
            values.push(*v);
        }
        for (k, v) in &report.map_at {
            header.push(format!("map@{k}"));
            values.push(*v);
        }
        header.push("map_avg".into());
        values.push(report.map_avg);
        csv_row(p, &header, &values)?;
        outputs.push(p.clone());
    }
    Ok(Outcome { inputs: vec![a.preds.clone(), a.gts.clone()], outputs, config: json!({}) })
}

fn eval_hd(a: &EvalHdArgs) -> anyhow::Result<Outcome> {
    let ann: Vec<HighlightAnnotation> = io::read_jsonl(&a.ann)?;
    let report = highlight_metrics(&ann)?;
    let mut outputs = emit_report(&report, &a.out)?;
    if let Some(p) = &a.csv {
        let header: Vec<String> = ["hd_map", "hit_at_1", "evaluated", "excluded_no_positive"].map(String::from).to_vec();
        csv_row(p, &header, &[report.hd_map, report.hit_at_1, report.evaluated as f64, report.excluded_no_positive as f64])?;
        outputs.push(p.clone());
    }
    Ok(Outcome { inputs: vec![a.ann.clone()], outputs, config: json!({}) })
}

fn experiment_config(a: &SynthRunArgs, ctx: &Context) -> anyhow::Result<ExperimentConfig> {
    if let Some(v) = &ctx.embedded_config {
        return Ok(serde_json::from_value(v.clone())?);
    }
    let mut v: Value = match &a.config {
        Some(p) => io::read_json(p)?,
        None => json!({}),
    };
    let obj = v.as_object_mut().context("experiment config must be a JSON object")?;
    if !obj.contains_key("seeds") {
        obj.insert("seeds".into(), json!((0..10u64).map(|i| ctx.seed.wrapping_add(i)).collect::<Vec<_>>()));
    }
    Ok(serde_json::from_value(v)?)
}

fn synth_run(a: &SynthRunArgs, ctx: &Context) -> anyhow::Result<Outcome> {
    let cfg = experiment_config(a, ctx)?;
    let report = run_experiment(&cfg)?;
    io::write_json(&a.out, &report)?;
    let curves = a.curves.clone().expect("resolved");
    let svg = a.svg.clone().expect("resolved");
    #[derive(Serialize)]
    struct CurveRow<'a> {
        config: &'a str,
        seed: u64,
        epoch: usize,
        total: f64,
        mnt: f64,
        evt: f64,
        pos: f64,
    }
    let rows: Vec<CurveRow> = report
        .runs
        .iter()
        .flat_map(|r| {
            r.curve.iter().enumerate().map(move |(epoch, c)| CurveRow {
                config: &r.config,
                seed: r.seed,
                epoch,
                total: c.total,
                mnt: c.mnt,
                evt: c.evt,
                pos: c.pos,
            })
        })
        .collect();
    io::write_csv(&curves, &rows)?;
    io::write_text(&svg, &synth_svg(&report))?;
    let mut inputs = Vec::new();
    if ctx.embedded_config.is_none() {
        inputs.extend(a.config.clone());
    }
    Ok(Outcome { inputs, outputs: vec![a.out.clone(), curves, svg], config: serde_json::to_value(&cfg)? })
}

/// Timeline of the first held-out video of the first seed: true events,
/// pseudo-event boundaries, the ground-truth moment and each setting's
/// top-1 prediction.
fn synth_svg(report: &ExperimentReport) -> String {
    let first_seed = report.runs.first().map(|r| r.seed);
    let runs: Vec<_> = report.runs.iter().filter(|r| Some(r.seed) == first_seed && r.preview.is_some()).collect();
    let (left, width, row_h) = (130.0, 600.0, 22.0);
    let mut s = Svg::new(left + width + 20.0, 40.0 + row_h * (runs.len() as f64 + 2.0) + 30.0);
    let Some(p) = runs.first().and_then(|r| r.preview.as_ref()) else {
        s.text(10.0, 20.0, 12.0, "start", "no runs");
        return s.finish();
    };
    let horizon = p.events.horizon();
    let x = |t: f64| left + width * t / horizon;
    s.text(10.0, 18.0, 12.0, "start", &format!("{} (seed {})", p.video_id, first_seed.unwrap_or(0)));
    let mut y = 30.0;
    s.text(left - 8.0, y + 15.0, 11.0, "end", "events");
    for (i, (a, b)) in p.events.intervals().enumerate() {
        s.rect(x(a), y, x(b) - x(a), row_h - 4.0, if i % 2 == 0 { "#d9d9d9" } else { "#bdbdbd" });
    }
    y += row_h;
    s.text(left - 8.0, y + 15.0, 11.0, "end", "ground truth");
    let (g0, g1) = p.ground_truth.to_interval();
    s.rect(x(g0), y, x(g1) - x(g0), row_h - 4.0, "#31a354");
    for r in &runs {
        y += row_h;
        let pr = r.preview.as_ref().expect("filtered");
        let (a, b) = pr.prediction.to_interval();
        s.text(left - 8.0, y + 15.0, 11.0, "end", &r.config);
        s.rect(x(a.max(0.0)), y, (x(b.min(horizon)) - x(a.max(0.0))).max(0.0), row_h - 4.0, "#3182bd");
    }
    let bottom = y + row_h;
    for &b in p.pseudo_events.boundaries() {
        s.line(x(b), 30.0, x(b), bottom, "#de2d26", 1.5);
    }
    s.line(left, bottom + 4.0, left + width, bottom + 4.0, "black", 1.0);
    s.text(left, bottom + 18.0, 10.0, "middle", "0");
    s.text(left + width, bottom + 18.0, 10.0, "middle", &format!("{horizon}"));
    s.text(left + width / 2.0, bottom + 18.0, 10.0, "middle", "red: pseudo-event boundaries");
    s.finish()
}
