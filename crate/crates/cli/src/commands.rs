//! The three subcommands. Each reads its inputs from the output directory,
//! writes tab-separated tables there and finishes with a run manifest.

use std::path::{Path, PathBuf};

use hessian_toolbox::fock::{make_dataset, Dataset, LabeledSample};
use hessian_toolbox::hessian::{read_hessian, write_hessian};
use hessian_toolbox::io::{read_checkpoint, read_dataset, write_checkpoint, write_dataset};
use hessian_toolbox::model::ModelState;
use hessian_toolbox::toolbox::{write_table, InfluenceRecord, Table};

use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, CliResult};
use crate::manifest::{files_hash, sha256_hex, RunManifest};
use crate::pipeline::{self, Prepared, Score};

/// Load a config and apply the command-line overrides.
pub fn load_config(path: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = out {
        cfg.output.dir = out.to_path_buf();
    }
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn save(manifest: &mut RunManifest, dir: &Path, name: &str, table: &Table) -> CliResult<()> {
    let path = dir.join(name);
    write_table(&path, table)?;
    manifest.artifact(dir, &path);
    Ok(())
}

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} not found; run the earlier stage first", path.display())))
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

pub fn gen_data(cfg: &ExperimentConfig) -> CliResult<RunManifest> {
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let mut manifest = RunManifest::new("gen-data", cfg)?;
    let ds = manifest.time("exact_diagonalization", || Ok(make_dataset(&cfg.data)?))?;

    let path = cfg.dataset_path();
    write_dataset(&path, &ds)?;
    manifest.artifact(dir, &path);

    let mut t = Table::new(["v1_over_j", "order_parameter"]);
    t.meta("l", ds.l).meta("input_length", ds.train.first().map_or(0, |s| s.x.len()));
    for (v, o) in &ds.order_parameter {
        t.push(vec![f(*v), f(*o)])?;
    }
    save(&mut manifest, dir, "order_parameter.tsv", &t)?;
    manifest.write(dir)?;
    Ok(manifest)
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<RunManifest> {
    let dir = &cfg.output.dir;
    require(&cfg.dataset_path(), "dataset")?;
    let ds = read_dataset(&cfg.dataset_path())?;
    check_dataset(cfg, &ds)?;
    let mut manifest = RunManifest::new("train", cfg)?;
    let outcome = manifest.time("train", || pipeline::train_model(cfg, &ds))?;

    let path = cfg.checkpoint_path();
    write_checkpoint(&path, &outcome.model)?;
    manifest.artifact(dir, &path);

    let mut h = Table::new(["epoch", "risk"]);
    h.meta("epochs_run", outcome.epochs_run)
        .meta("grad_norm", outcome.grad_norm)
        .meta("converged", outcome.converged)
        .meta("param_count", outcome.model.param_count());
    for (e, r) in outcome.history.iter().enumerate() {
        h.push(vec![e.to_string(), f(*r)])?;
    }
    save(&mut manifest, dir, "history.tsv", &h)?;

    let mut a = Table::new(["split", "region", "correct", "total", "accuracy"]);
    for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
        for (region, correct, total) in pipeline::accuracy_by_region(&outcome.model, samples)? {
            let acc = if total == 0 { f64::NAN } else { correct as f64 / total as f64 };
            a.push(vec![split.into(), region.name().into(), correct.to_string(), total.to_string(), f(acc)])?;
        }
    }
    save(&mut manifest, dir, "accuracy.tsv", &a)?;
    manifest.write(dir)?;
    Ok(manifest)
}

fn check_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<()> {
    if ds.l != cfg.data.l {
        return Err(CliError::Config(format!("dataset has L = {}, config has l = {}", ds.l, cfg.data.l)));
    }
    Ok(())
}

/// `methods` overrides the configured list when nonempty.
pub fn analyze(cfg: &ExperimentConfig, methods: &[Method]) -> CliResult<RunManifest> {
    let dir = &cfg.output.dir;
    let methods = if methods.is_empty() { cfg.analysis.methods.clone() } else { methods.to_vec() };
    let mut manifest = RunManifest::new("analyze", cfg)?;
    ensure_dir(dir)?;

    let needs_model = methods.iter().any(|m| *m != Method::Oracle);
    let prepared = if needs_model { Some(prepare(cfg, &mut manifest)?) } else { None };

    for method in methods {
        let stage = method.name();
        match (method, prepared.as_ref()) {
            (Method::Oracle, _) => {
                let t = manifest.time(stage, || oracle_tables(cfg))?;
                for (name, table) in t {
                    save(&mut manifest, dir, name, &table)?;
                }
            }
            (_, Some(p)) => {
                let t = manifest.time(stage, || method_tables(cfg, p, method))?;
                for (name, mut table) in t {
                    let mut meta = p.summary();
                    meta.append(&mut table.metadata);
                    table.metadata = meta;
                    save(&mut manifest, dir, name, &table)?;
                }
            }
            (_, None) => unreachable!("model prepared for every non-oracle method"),
        }
    }
    manifest.write(dir)?;
    Ok(manifest)
}

fn hessian_cache_path(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let inputs = files_hash(&[&cfg.checkpoint_path(), &cfg.dataset_path()])?;
    let key = format!("{inputs}:{}:{}", cfg.train.weight_decay, cfg.analysis.hessian_cap);
    Ok(cfg.output.dir.join("cache").join(format!("hessian-{}.bin", &sha256_hex(key.as_bytes())[..16])))
}

/// Load dataset and checkpoint, and the Hessian from the cache or by
/// assembly (then cached).
pub fn prepare(cfg: &ExperimentConfig, manifest: &mut RunManifest) -> CliResult<Prepared> {
    require(&cfg.dataset_path(), "dataset")?;
    require(&cfg.checkpoint_path(), "checkpoint")?;
    let ds = read_dataset(&cfg.dataset_path())?;
    check_dataset(cfg, &ds)?;
    let model: ModelState = read_checkpoint(&cfg.checkpoint_path())?;
    let cache = hessian_cache_path(cfg)?;
    let wd = cfg.train.weight_decay;
    if cache.is_file() {
        let (h, _) = read_hessian(&cache)?;
        return manifest.time("hessian_cached", || Prepared::with_hessian(ds, model, wd, h));
    }
    let p = manifest.time("hessian", || Prepared::assemble(ds, model, wd, cfg.analysis.hessian_cap))?;
    let parent = cache.parent().expect("cache path has a parent");
    ensure_dir(parent)?;
    write_hessian(&cache, &p.hessian.h, p.hessian.lambda)?;
    Ok(p)
}

fn sample_cols(prefix: &str) -> Vec<String> {
    ["index", "v1_over_j", "label", "sign", "is_ood"].iter().map(|c| format!("{prefix}{c}")).collect()
}

fn sample_row(i: usize, s: &LabeledSample) -> Vec<String> {
    vec![i.to_string(), f(s.v1_over_j), format!("{:?}", s.label), s.global_sign.to_string(), s.is_ood.to_string()]
}

fn records_table(p: &Prepared, a: &pipeline::InfluenceAnalysis) -> CliResult<Table> {
    let mut cols = sample_cols("test_");
    cols.extend(sample_cols("train_"));
    cols.extend(["influence", "relatif", "similarity"].map(String::from));
    let mut t = Table::new(cols);
    for (&ti, recs) in a.test_indices.iter().zip(&a.records) {
        for r in recs {
            let mut row = sample_row(ti, &p.dataset.test[ti]);
            row.extend(sample_row(r.train_index, &p.dataset.train[r.train_index]));
            row.extend([f(r.influence), r.relatif.map_or("nan".into(), f), f(r.similarity)]);
            t.push(row)?;
        }
    }
    Ok(t)
}

fn top_table(p: &Prepared, a: &pipeline::InfluenceAnalysis, score: Score, k: usize) -> CliResult<Table> {
    let mut cols = sample_cols("test_");
    cols.extend(["direction", "rank"].map(String::from));
    cols.extend(sample_cols("train_"));
    cols.push("score".into());
    let mut t = Table::new(cols);
    for (&ti, recs) in a.test_indices.iter().zip(&a.records) {
        for (direction, helpful) in [("helpful", true), ("harmful", false)] {
            for (rank, r) in pipeline::top_k(recs, score, k, helpful).into_iter().enumerate() {
                let rec: &InfluenceRecord = &recs[r];
                let mut row = sample_row(ti, &p.dataset.test[ti]);
                row.extend([direction.to_string(), (rank + 1).to_string()]);
                row.extend(sample_row(r, &p.dataset.train[r]));
                row.push(f(score.of(rec)));
                t.push(row)?;
            }
        }
    }
    t.meta("top_k", k);
    Ok(t)
}

fn method_tables(cfg: &ExperimentConfig, p: &Prepared, method: Method) -> CliResult<Vec<(&'static str, Table)>> {
    let a = &cfg.analysis;
    match method {
        Method::Influence | Method::Relatif => {
            let tests = pipeline::select_tests(p, a.test_v1.as_deref())?;
            let inf = pipeline::influence_analysis(p, &tests, a.influence_loss)?;
            let (score, names) = if method == Method::Influence {
                (Score::Influence, ("influence.tsv", "influence_top.tsv"))
            } else {
                (Score::Relatif, ("relatif.tsv", "relatif_top.tsv"))
            };
            Ok(vec![(names.0, records_table(p, &inf)?), (names.1, top_table(p, &inf, score, a.top_k)?)])
        }
        Method::Rue => {
            let r = pipeline::rue_analysis(p, a.b, a.bootstrap_seed, a.deployment_loss, a.rue_threshold, a.rue_reference_median)?;
            let mut cols = sample_cols("");
            cols.extend(["rue_variance", "above_threshold"].map(String::from));
            let mut t = Table::new(cols);
            t.meta("b", a.b)
                .meta("bootstrap_seed", a.bootstrap_seed)
                .meta("median_nonzero", r.median_nonzero.map_or("none".into(), f))
                .meta("threshold", r.threshold)
                .meta("span", r.span.map_or("none".into(), |(lo, hi)| format!("{lo} {hi}")));
            for (i, (s, v)) in p.dataset.test.iter().zip(&r.variances).enumerate() {
                let mut row = sample_row(i, s);
                row.extend([f(*v), (*v > r.threshold).to_string()]);
                t.push(row)?;
            }
            Ok(vec![("rue.tsv", t)])
        }
        Method::Lees => {
            let l = pipeline::lees_analysis(p, a.deployment_loss, a.m, a.m_tol, a.m_max)?;
            let ood: Vec<bool> = p.dataset.test.iter().map(|s| s.is_ood).collect();
            let lees_peaks = pipeline::exceeds_neighbours(&l.scores, &ood);
            let loss_peaks = pipeline::exceeds_neighbours(&l.minimal_losses, &ood);
            let mut cols = sample_cols("");
            cols.extend(["lees", "minimal_loss", "lees_above_neighbours", "loss_above_neighbours"].map(String::from));
            let mut t = Table::new(cols);
            t.meta("m", l.m)
                .meta("m_auto", l.auto_m)
                .meta("ood_points", lees_peaks.len())
                .meta("ood_lees_above_neighbours", lees_peaks.iter().filter(|x| x.1).count())
                .meta("ood_loss_above_neighbours", loss_peaks.iter().filter(|x| x.1).count());
            let peak = |peaks: &[(usize, bool)], i: usize| {
                peaks.iter().find(|x| x.0 == i).map_or("", |x| if x.1 { "true" } else { "false" }).to_string()
            };
            for (i, s) in p.dataset.test.iter().enumerate() {
                let mut row = sample_row(i, s);
                row.extend([f(l.scores[i]), f(l.minimal_losses[i]), peak(&lees_peaks, i), peak(&loss_peaks, i)]);
                t.push(row)?;
            }
            let mut scan = Table::new(["m", "test_index", "lees"]);
            scan.meta("m_max", l.table.len() - 1);
            for (m, row) in l.table.iter().enumerate() {
                for (i, e) in row.iter().enumerate() {
                    scan.push(vec![m.to_string(), i.to_string(), f(*e)])?;
                }
            }
            Ok(vec![("lees.tsv", t), ("lees_m_scan.tsv", scan)])
        }
        Method::Anomaly => {
            let sign = cfg.anomaly_test_sign();
            let r = pipeline::anomaly_analysis(
                p,
                sign,
                a.influence_loss,
                a.anomaly_window,
                a.anomaly_k,
                a.permutations,
                a.permutation_seed,
            )?;
            let mut cols = sample_cols("");
            cols.extend(["influence", "mad_deviation"].map(String::from));
            let mut t = Table::new(cols);
            let ts = &p.dataset.test[r.test_index];
            t.meta("test_index", r.test_index)
                .meta("test_v1_over_j", ts.v1_over_j)
                .meta("test_sign", sign)
                .meta("window", a.anomaly_window)
                .meta("k", a.anomaly_k)
                .meta("mad_flagged", r.mad.flagged)
                .meta("mad_negatives", r.mad.negatives)
                .meta("mad_passed", r.mad.passed())
                .meta("permutation_statistic", r.permutation.observed)
                .meta("permutation_p", r.permutation.p_value)
                .meta("permutations", r.permutation.permutations)
                .meta("permutation_seed", a.permutation_seed);
            for (i, s) in p.dataset.train.iter().enumerate() {
                let dev = r.mad.deviations.iter().find(|d| d.0 == i).map_or(String::new(), |d| f(d.1));
                let mut row = sample_row(i, s);
                row.extend([f(r.influence[i]), dev]);
                t.push(row)?;
            }
            Ok(vec![("anomaly.tsv", t)])
        }
        Method::Oracle => unreachable!("oracle handled separately"),
    }
}

fn oracle_tables(cfg: &ExperimentConfig) -> CliResult<Vec<(&'static str, Table)>> {
    let o = &cfg.analysis.oracle;
    let r = pipeline::oracle_analysis(o)?;
    let mut loo = Table::new(["train_index", "test_index", "influence", "retrained_delta"]);
    loo.meta("features", o.features)
        .meta("n_train", o.n_train)
        .meta("n_test", o.n_test)
        .meta("g_tol", o.g_tol)
        .meta("pearson", r.pearson)
        .meta("sign_agreement", r.sign_agreement)
        .meta("pearson_renormalized", r.pearson_renormalized)
        .meta("sign_agreement_renormalized", r.sign_agreement_renormalized);
    for (k, (i, d)) in r.loo_pairs.iter().enumerate() {
        loo.push(vec![(k / o.n_test).to_string(), (k % o.n_test).to_string(), f(*i), f(*d)])?;
    }
    let mut rue = Table::new(["test_index", "rue_variance", "bootstrap_variance", "bootstrap_std_error"]);
    rue.meta("b", o.b).meta("bootstrap_seed", o.bootstrap_seed).meta("spearman", r.spearman);
    for (i, v) in r.rue.iter().enumerate() {
        rue.push(vec![i.to_string(), f(*v), f(r.bootstrap.variance[i]), f(r.bootstrap.std_error[i])])?;
    }
    Ok(vec![("oracle_loo.tsv", loo), ("oracle_rue.tsv", rue)])
}
