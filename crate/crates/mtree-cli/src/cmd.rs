use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use mtree_core::{
    aggregate, branch_number, build_mtree, canonicalize as canon, eval_mtree, generate_synthetic,
    load_dataset, load_predictions, mtree_equal, mtree_iou, mtree_paths, parse,
    render_exclusions, score_sample, to_refmtree, Dialect, IngestOptions, MTree, SampleScore,
    SynthConfig,
};
use nagd::{checkpoint, eval_heldout, parse_branch_dist, run_toy, RunOptions, SplitReport,
    ToyConfig, ToyReport};
use num::BigRational;
use num::ToPrimitive;
use rayon::prelude::*;

use crate::error::CliError;
use crate::util::{emit, parse_rational, parse_rational_list, percent, read_file, write_file};
use crate::{
    CanonicalizeArgs, CompareArgs, EvalToyArgs, EvaluateArgs, GenerateArgs, StatsArgs,
    TrainToyArgs,
};

fn parse_numbers(numbers: &Option<String>) -> Result<Option<Vec<BigRational>>, CliError> {
    numbers.as_ref().map(|s| parse_rational_list(s)).transpose()
}

fn build_tree(text: &str, numbers: Option<&[BigRational]>) -> Result<MTree, CliError> {
    let expr = parse(text, numbers).map_err(CliError::input)?;
    let sum = canon(&expr).map_err(CliError::input)?;
    Ok(build_mtree(&sum))
}

pub fn canonicalize(a: &CanonicalizeArgs) -> Result<(), CliError> {
    let numbers = parse_numbers(&a.numbers)?;
    let tree = build_tree(&a.expression, numbers.as_deref())?;
    let value = eval_mtree(&tree).map_err(CliError::input)?;
    if a.refmtree {
        println!("{}", to_refmtree(&tree).render());
    } else {
        println!("{}", tree.render());
    }
    println!("value {value}");
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let numbers = parse_numbers(&a.numbers)?;
    let left = build_tree(&a.left, numbers.as_deref())?;
    let right = build_tree(&a.right, numbers.as_deref())?;
    let iou = mtree_iou(&mtree_paths(&left), &mtree_paths(&right));
    println!("left  {}", left.render());
    println!("right {}", right.render());
    println!("mtree_equal {}", mtree_equal(&left, &right));
    println!(
        "mtree_iou {} ({})",
        iou,
        percent(iou.to_f64().unwrap_or(f64::NAN))
    );
    Ok(())
}

fn ingest_options(
    max_branch: usize,
    tol: &str,
    constants: &str,
) -> Result<IngestOptions, CliError> {
    Ok(IngestOptions {
        max_branch,
        tol: parse_rational(tol)?,
        constants: parse_rational_list(constants)?,
    })
}

fn parse_dialect(s: &str) -> Result<Dialect, CliError> {
    Dialect::from_str(s).map_err(CliError::Input)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let dialect = parse_dialect(&a.dialect)?;
    let opts = ingest_options(a.max_branch, &a.tol, &a.constants)?;
    let (records, exclusions) =
        load_dataset(&a.gold, dialect, &opts).map_err(CliError::input)?;
    let predictions: HashMap<String, String> =
        load_predictions(&a.pred).map_err(CliError::input)?.into_iter().collect();

    let missing: Vec<&str> = records
        .iter()
        .filter(|r| !predictions.contains_key(&r.id))
        .map(|r| r.id.as_str())
        .collect();
    let unmatched = predictions.len() + missing.len() - records.len();

    if records.is_empty() {
        return Err(CliError::Runtime("no valid gold samples to score".to_string()));
    }
    // a missing prediction is scored as an empty string: a parse failure
    let scores: Vec<SampleScore> = records
        .par_iter()
        .map(|r| {
            let pred = predictions.get(&r.id).map(String::as_str).unwrap_or("");
            score_sample(pred, &r.equation, Some(&r.quantities), &r.answer, &opts.tol)
                .map_err(CliError::runtime)
        })
        .collect::<Result<_, _>>()?;
    let report = aggregate(&scores).map_err(CliError::runtime)?;

    print!("{}", report.render_table());
    println!("missing predictions   {}", missing.len());
    println!("unmatched predictions {unmatched}");
    println!("excluded gold         {}", exclusions.len());
    for id in &missing {
        eprintln!("missing prediction for id '{id}'");
    }

    if let Some(out) = &a.out {
        let mut kv = report.render_kv();
        kv.push_str(&format!("missing_predictions={}\n", missing.len()));
        kv.push_str(&format!("unmatched_predictions={unmatched}\n"));
        kv.push_str(&format!("excluded_gold={}\n", exclusions.len()));
        write_file(out, &kv)?;
    }
    if let Some(path) = &a.exclusions_out {
        write_file(path, &render_exclusions(&exclusions))?;
    }

    if !exclusions.is_empty() {
        if a.exclusions_out.is_none() {
            eprint!("{}", render_exclusions(&exclusions));
        }
        return Err(CliError::Runtime(format!(
            "{} gold samples excluded at ingestion",
            exclusions.len()
        )));
    }
    Ok(())
}

fn synth_config(
    depth: usize,
    branch_dist: &str,
    leaf_min: i64,
    leaf_max: i64,
) -> Result<SynthConfig, CliError> {
    Ok(SynthConfig {
        branch_dist: parse_branch_dist(branch_dist).map_err(CliError::input)?,
        depth,
        leaf_min,
        leaf_max,
    })
}

fn branch_histogram(trees: impl Iterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for b in trees {
        *hist.entry(b).or_insert(0usize) += 1;
    }
    hist
}

fn print_histogram(hist: &BTreeMap<usize, usize>, samples: usize, cap: usize) {
    println!("samples      {samples}");
    for (branch, count) in hist {
        println!("branch {branch:>2}    {count}");
    }
    let below: usize = hist.iter().filter(|(&b, _)| b < cap).map(|(_, c)| c).sum();
    println!(
        "branch < {cap}   {}",
        percent(below as f64 / samples as f64)
    );
}

pub fn stats(a: &StatsArgs) -> Result<(), CliError> {
    match (&a.gold, a.count) {
        (Some(gold), None) => {
            let dialect = parse_dialect(&a.dialect)?;
            let opts = ingest_options(a.max_branch, &a.tol, &a.constants)?;
            let (records, exclusions) =
                load_dataset(gold, dialect, &opts).map_err(CliError::input)?;
            if records.is_empty() {
                return Err(CliError::Runtime("no valid gold samples".to_string()));
            }
            let branches: Vec<usize> = records
                .iter()
                .map(|r| {
                    build_tree(&r.equation_mapped, Some(&r.quantities)).map(|t| branch_number(&t))
                })
                .collect::<Result<_, _>>()?;
            let hist = branch_histogram(branches.into_iter());
            print_histogram(&hist, records.len(), a.max_branch);
            println!("excluded     {}", exclusions.len());
            Ok(())
        }
        (None, Some(count)) => {
            if count == 0 {
                return Err(CliError::Input("--count must be positive".to_string()));
            }
            let cfg = synth_config(a.depth, &a.branch_dist, a.leaf_min, a.leaf_max)?;
            let corpus = generate_synthetic(count, a.seed, &cfg);
            let hist = branch_histogram(corpus.iter().map(|s| branch_number(&s.tree)));
            print_histogram(&hist, corpus.len(), a.max_branch);
            Ok(())
        }
        _ => Err(CliError::Input(
            "exactly one of --gold or --count is required".to_string(),
        )),
    }
}

pub fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Input("--count must be positive".to_string()));
    }
    let cfg = synth_config(a.depth, &a.branch_dist, a.leaf_min, a.leaf_max)?;
    let corpus = generate_synthetic(a.count, a.seed, &cfg);
    let mut out = String::new();
    for s in &corpus {
        let quantities: Vec<String> = s.quantities.iter().map(|q| q.to_string()).collect();
        let value = eval_mtree(&s.tree).map_err(CliError::runtime)?;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.id,
            s.tokens.join(" "),
            quantities.join(","),
            s.tree.render(),
            value
        ));
    }
    emit(a.out.as_ref(), &out)
}

fn split_kv(prefix: &str, split: &SplitReport) -> String {
    format!(
        "{prefix}_samples={}\n{prefix}_val_acc={:.6}\n{prefix}_mtree_acc={:.6}\n\
         {prefix}_decode_failures={}\n",
        split.samples,
        split.val_acc(),
        split.mtree_acc(),
        split.decode_failures
    )
}

fn split_row(split: &SplitReport) -> String {
    format!(
        "val {} mtree {} failures {}",
        percent(split.val_acc()),
        percent(split.mtree_acc()),
        split.decode_failures
    )
}

fn toy_label(cross_goal: bool) -> &'static str {
    if cross_goal {
        "cross-goal"
    } else {
        "vanilla"
    }
}

fn toy_report_text(r: &ToyReport) -> String {
    format!(
        "[{}] steps {} final loss {:.6} | train: {} | eval: {}",
        toy_label(r.cross_goal),
        r.steps_run,
        r.final_loss,
        split_row(&r.train),
        split_row(&r.eval)
    )
}

fn toy_report_kv(r: &ToyReport) -> String {
    format!(
        "cross_goal={}\nsteps={}\nfinal_loss={:.6}\n{}{}",
        if r.cross_goal { "on" } else { "off" },
        r.steps_run,
        r.final_loss,
        split_kv("train", &r.train),
        split_kv("eval", &r.eval)
    )
}

pub fn train_toy(a: &TrainToyArgs) -> Result<(), CliError> {
    let mut cfg = ToyConfig::parse(&read_file(&a.config)?).map_err(CliError::input)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let opts = RunOptions {
        cross_goal: a.no_cross_goal.then_some(false),
        ..RunOptions::default()
    };
    let log_every = a.log_every;
    let mut progress = |step: usize, loss: f64| {
        if log_every > 0 && step % log_every == 0 {
            println!("step={step} loss={loss:.6}");
        }
    };
    let (trainer, report) = run_toy(&cfg, &opts, Some(&mut progress))?;
    if let Some(path) = &a.out {
        checkpoint::save(&trainer.model, path).map_err(CliError::runtime)?;
    }
    println!("{}", toy_report_text(&report));
    if let Some(path) = &a.report {
        write_file(path, &toy_report_kv(&report))?;
    }
    Ok(())
}

pub fn eval_toy(a: &EvalToyArgs) -> Result<(), CliError> {
    let model = checkpoint::load(&a.checkpoint).map_err(CliError::input)?;
    let cfg = ToyConfig::parse(&read_file(&a.config)?).map_err(CliError::input)?;
    let split = eval_heldout(&model, &cfg);
    let label = toy_label(model.hyper.cross_goal);
    println!("[{label}] eval: {}", split_row(&split));
    if let Some(path) = &a.report {
        let kv = format!(
            "cross_goal={}\n{}",
            if model.hyper.cross_goal { "on" } else { "off" },
            split_kv("eval", &split)
        );
        write_file(path, &kv)?;
    }
    Ok(())
}
