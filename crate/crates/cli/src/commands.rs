//! One function per subcommand. Each reads its inputs, writes artifacts
//! into the output directory together with a resolved-config snapshot and
//! a run record, and returns a short human-readable summary.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use confrefine::data::{
    read_dataset, read_ensemble_manifest, synth_dataset, write_dataset, write_ensemble,
    write_ensemble_with_ids, EnsembleEntry, MoleculeRecord,
};
use confrefine::diagnostics::{
    degree_sweep, degree_sweep_csv, early_steps, pair_perturbation_stats, rmsd_trace, traces_csv,
    velocity_histogram, Histogram, SpeedMode,
};
use confrefine::interpolant::{wh_rmsd_quantile, ScheduleKind};
use confrefine::metrics::{
    basin_preservation, evaluate_ensembles, improvement_downgrade, median, nearest_references,
    precision_rmsds, EnsembleReport, IrDrTable,
};
use confrefine::model::{Checkpoint, MolecularGraph, VelocityModel};
use confrefine::pipeline::{
    format_trajectory_dump, generate_ensembles, generate_from_noise, refine_ensemble, train_generator,
    train_refiner, SampleConfig, StepBudget, Trajectory,
};
use confrefine::{seeding, Error as CoreError, PointSet};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{derived_seed, RunConfig, SeedUse};
use crate::error::CliError;
use crate::{Command, ModelKind};

type Res<T> = Result<T, CliError>;

/// Step budget stored next to every sampled ensemble so evaluation can
/// label rows like `20+20`.
pub const BUDGET_FILE: &str = "budget.json";

pub fn dispatch(cmd: &Command, cfg: &RunConfig, out: &Path) -> Res<String> {
    let started = Instant::now();
    let (summary, files) = match cmd {
        Command::Synth { .. } => synth(cfg, out)?,
        Command::Train { kind, data, .. } => train(cfg, out, *kind, data)?,
        Command::Generate { checkpoint, data, .. } => generate(cfg, out, checkpoint, data)?,
        Command::Refine { checkpoint, upstream, .. } => refine(cfg, out, checkpoint, upstream)?,
        Command::Eval {
            generated,
            baseline,
            label,
            ..
        } => eval(cfg, out, generated, baseline.as_deref(), label.as_deref())?,
        Command::Diagnose {
            data,
            checkpoint,
            generator,
            upstream,
            ..
        } => diagnose(
            cfg,
            out,
            data,
            checkpoint.as_deref(),
            generator.as_deref(),
            upstream.as_deref(),
        )?,
        Command::Bound { .. } => return bound(cfg),
    };
    let name = cmd.name();
    write(&out.join(format!("{name}.config.toml")), &cfg.to_toml()?)?;
    let mut record = json!({ "command": name, "seed": cfg.seed, "outputs": files });
    if !cfg.deterministic {
        let unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        record["unix_time"] = json!(unix);
        record["elapsed_seconds"] = json!(started.elapsed().as_secs_f64());
    }
    write(&out.join(format!("{name}.run.json")), &pretty(&record))?;
    Ok(summary)
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

fn invalid(msg: String) -> CliError {
    CliError::Core(CoreError::Validation(msg))
}

fn synth(cfg: &RunConfig, out: &Path) -> Res<(String, Vec<String>)> {
    let train = synth_dataset(&cfg.synth.train)?;
    let eval = synth_dataset(&cfg.synth.eval)?;
    let tm = write_dataset(&out.join("train"), &train)?;
    let em = write_dataset(&out.join("eval"), &eval)?;
    let summary = format!(
        "train: {} molecules -> {}\neval: {} molecules -> {}\n",
        train.len(),
        tm.display(),
        eval.len(),
        em.display()
    );
    Ok((summary, vec![rel(out, &tm), rel(out, &em)]))
}

fn load_model(path: &Path, want: ScheduleKind) -> Res<(Checkpoint, VelocityModel)> {
    let ck = Checkpoint::load(path)?;
    if ck.schedule.kind != want {
        return Err(invalid(format!(
            "{}: checkpoint was trained as {:?}, expected {want:?}",
            path.display(),
            ck.schedule.kind
        )));
    }
    let model = ck.model()?;
    Ok((ck, model))
}

fn train(cfg: &RunConfig, out: &Path, kind: ModelKind, data: &Path) -> Res<(String, Vec<String>)> {
    let records = read_dataset(data)?;
    if records.is_empty() {
        return Err(invalid(format!("{}: no molecules", data.display())));
    }
    let (tcfg, init, name) = match kind {
        ModelKind::Generator => (&cfg.generator, SeedUse::GeneratorInit, "generator"),
        ModelKind::Refiner => (&cfg.refiner, SeedUse::RefinerInit, "refiner"),
    };
    let mut rng = seeding::stream(derived_seed(cfg.seed, init), 0);
    let mut model = VelocityModel::new(cfg.model.clone(), &mut rng)?;
    let history = match kind {
        ModelKind::Generator => train_generator(&mut model, &records, tcfg)?,
        ModelKind::Refiner => train_refiner(&mut model, &records, tcfg)?,
    };
    let ck_path = out.join(format!("{name}.ckpt.json"));
    let loss_path = out.join(format!("{name}.loss.csv"));
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    Checkpoint::new(&model, tcfg.schedule, tcfg.sigma).save(&ck_path)?;
    write(&loss_path, &history.to_csv())?;
    let summary = format!(
        "{name}: {} parameters, loss {:.4} -> {:.4}, checkpoint {}\n",
        model.n_params(),
        history.first().unwrap_or(f64::NAN),
        history.last().unwrap_or(f64::NAN),
        ck_path.display()
    );
    Ok((summary, vec![rel(out, &ck_path), rel(out, &loss_path)]))
}

fn states(outputs: Vec<Vec<confrefine::pipeline::SampleOutput>>) -> Vec<Vec<PointSet>> {
    outputs
        .into_iter()
        .map(|v| v.into_iter().map(|o| o.state).collect())
        .collect()
}

fn read_budget(manifest: &Path) -> Option<StepBudget> {
    let path = manifest.parent()?.join(BUDGET_FILE);
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

fn generate(cfg: &RunConfig, out: &Path, checkpoint: &Path, data: &Path) -> Res<(String, Vec<String>)> {
    let (ck, model) = load_model(checkpoint, ScheduleKind::GeneratorGaussian)?;
    let records = read_dataset(data)?;
    let graphs: Vec<&MolecularGraph> = records.iter().map(|r| &r.graph).collect();
    let counts: Vec<usize> = records
        .iter()
        .map(|r| cfg.sample.samples_per_reference * r.references.len())
        .collect();
    let sigma = cfg.sample.generator_sigma.unwrap_or(ck.sigma);
    let steps = cfg.sample.generator_steps;
    let seed = derived_seed(cfg.seed, SeedUse::Sampling);
    let ens = states(generate_ensembles(
        &model,
        &graphs,
        &counts,
        sigma,
        &SampleConfig::uniform(steps),
        seed,
    )?);
    let manifest = write_ensemble(out, &records, Some(&ens), "gen")?;
    let budget = StepBudget {
        generator_steps: steps,
        refiner_steps: 0,
    };
    write(&out.join(BUDGET_FILE), &pretty(&budget))?;
    let n: usize = counts.iter().sum();
    let summary = format!("generated {n} conformers in {steps} steps -> {}\n", manifest.display());
    Ok((summary, vec![rel(out, &manifest), BUDGET_FILE.into()]))
}

fn refine(cfg: &RunConfig, out: &Path, checkpoint: &Path, upstream: &Path) -> Res<(String, Vec<String>)> {
    let (_, model) = load_model(checkpoint, ScheduleKind::RefinerLinear)?;
    let entries = read_ensemble_manifest(upstream)?;
    let graphs: Vec<&MolecularGraph> = entries.iter().map(|e| &e.record.graph).collect();
    let inputs: Vec<Vec<PointSet>> = entries.iter().map(|e| e.generated.clone()).collect();
    let steps = cfg.sample.refiner_steps;
    let scfg = SampleConfig {
        capture_trajectory: cfg.sample.trajectories,
        ..SampleConfig::uniform(steps)
    };
    let outputs = refine_ensemble(&model, &graphs, &inputs, &scfg)?;
    let mut files = Vec::new();
    if cfg.sample.trajectories {
        let mut rows = Vec::new();
        for (e, outs) in entries.iter().zip(&outputs) {
            for (o, &gid) in outs.iter().zip(&e.generated_ids) {
                if let Some(t) = &o.trajectory {
                    rows.push((e.record.id.as_str(), gid as usize, t, Some(e.record.references.as_slice())));
                }
            }
        }
        let path = out.join("trajectories.csv");
        write(&path, &format_trajectory_dump(&rows)?)?;
        files.push(rel(out, &path));
    }
    let refined = states(outputs);
    let records: Vec<MoleculeRecord> = entries.iter().map(|e| e.record.clone()).collect();
    let ids: Vec<Vec<u64>> = entries.iter().map(|e| e.generated_ids.clone()).collect();
    let manifest = write_ensemble_with_ids(out, &records, Some(&refined), Some(&ids), "refined")?;
    let budget = StepBudget {
        generator_steps: read_budget(upstream).map_or(0, |b| b.total()),
        refiner_steps: steps,
    };
    write(&out.join(BUDGET_FILE), &pretty(&budget))?;
    files.insert(0, rel(out, &manifest));
    files.push(BUDGET_FILE.into());
    let n: usize = refined.iter().map(Vec::len).sum();
    let summary = format!("refined {n} conformers in {steps} steps -> {}\n", manifest.display());
    Ok((summary, files))
}

/// Paired comparison of an ensemble against the baseline it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub baseline_label: String,
    pub n_pairs: usize,
    pub median_precision_before: f64,
    pub median_precision_after: f64,
    /// `100 · (1 − after / before)` on the medians.
    pub median_reduction_percent: f64,
    /// Percent of conformers whose nearest-reference basin is unchanged.
    pub basin_preservation_percent: f64,
    pub irdr: IrDrTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub delta: f64,
    pub n_molecules: usize,
    pub n_conformers: usize,
    /// Median over all conformers of the RMSD to the nearest reference.
    pub median_precision_rmsd: f64,
    pub report: EnsembleReport,
    pub paired: Option<PairedSummary>,
}

fn nonempty(entries: &[EnsembleEntry], path: &Path) -> Res<()> {
    if entries.is_empty() {
        return Err(invalid(format!("{}: no molecules", path.display())));
    }
    match entries.iter().find(|e| e.generated.is_empty()) {
        Some(e) => Err(invalid(format!(
            "{}: molecule {} lists no generated conformers",
            path.display(),
            e.record.id
        ))),
        None => Ok(()),
    }
}

fn label_of(manifest: &Path, given: Option<&str>) -> String {
    given
        .map(str::to_string)
        .or_else(|| read_budget(manifest).map(|b| b.label()))
        .unwrap_or_else(|| "ensemble".into())
}

fn paired_summary(
    cfg: &RunConfig,
    entries: &[EnsembleEntry],
    precision: &[Vec<f64>],
    baseline: &Path,
) -> Res<PairedSummary> {
    let base = read_ensemble_manifest(baseline)?;
    nonempty(&base, baseline)?;
    let by_id: HashMap<&str, &EnsembleEntry> = base.iter().map(|e| (e.record.id.as_str(), e)).collect();
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let (mut basin_before, mut basin_after) = (Vec::new(), Vec::new());
    for (e, prec) in entries.iter().zip(precision) {
        let b = by_id
            .get(e.record.id.as_str())
            .ok_or_else(|| invalid(format!("molecule {} missing from the baseline", e.record.id)))?;
        let refs = &e.record.references;
        let base_prec = precision_rmsds(&b.generated, refs)?;
        let base_near = nearest_references(&b.generated, refs)?;
        let near = nearest_references(&e.generated, refs)?;
        let slot: HashMap<u64, usize> = b.generated_ids.iter().enumerate().map(|(k, &g)| (g, k)).collect();
        for (k, gid) in e.generated_ids.iter().enumerate() {
            let j = *slot.get(gid).ok_or_else(|| {
                invalid(format!("molecule {}: conformer {gid} has no baseline partner", e.record.id))
            })?;
            before.push(base_prec[j]);
            after.push(prec[k]);
            basin_before.push(e.record.basin_of(base_near[j]));
            basin_after.push(e.record.basin_of(near[k]));
        }
    }
    let (mb, ma) = (median(&before), median(&after));
    Ok(PairedSummary {
        baseline_label: label_of(baseline, None),
        n_pairs: before.len(),
        median_precision_before: mb,
        median_precision_after: ma,
        median_reduction_percent: 100.0 * (1.0 - ma / mb),
        basin_preservation_percent: basin_preservation(&basin_before, &basin_after)?,
        irdr: improvement_downgrade(&before, &after, &cfg.eval.taus)?,
    })
}

fn eval(
    cfg: &RunConfig,
    out: &Path,
    generated: &Path,
    baseline: Option<&Path>,
    label: Option<&str>,
) -> Res<(String, Vec<String>)> {
    let entries = read_ensemble_manifest(generated)?;
    nonempty(&entries, generated)?;
    let label = label_of(generated, label);
    let ids: Vec<&str> = entries.iter().map(|e| e.record.id.as_str()).collect();
    let refs: Vec<&[PointSet]> = entries.iter().map(|e| e.record.references.as_slice()).collect();
    let gens: Vec<&[PointSet]> = entries.iter().map(|e| e.generated.as_slice()).collect();
    let report = evaluate_ensembles(&label, &ids, &refs, &gens, cfg.eval.delta)?;
    let precision: Vec<Vec<f64>> = entries
        .iter()
        .map(|e| precision_rmsds(&e.generated, &e.record.references))
        .collect::<Result<_, _>>()?;
    let flat: Vec<f64> = precision.concat();
    let paired = baseline
        .map(|b| paired_summary(cfg, &entries, &precision, b))
        .transpose()?;
    let mut files = vec![
        "report.csv".to_string(),
        "report.json".into(),
        "per_molecule.csv".into(),
        "summary.json".into(),
    ];
    write(&out.join("report.csv"), &report.to_csv())?;
    write(&out.join("report.json"), &format!("{}\n", report.to_json()))?;
    write(&out.join("per_molecule.csv"), &report.per_molecule_csv())?;
    if let Some(p) = &paired {
        write(&out.join("irdr.csv"), &p.irdr.to_csv())?;
        write(&out.join("irdr.json"), &format!("{}\n", p.irdr.to_json()))?;
        files.extend(["irdr.csv".to_string(), "irdr.json".into()]);
    }
    let summary = EvalSummary {
        label: label.clone(),
        delta: cfg.eval.delta,
        n_molecules: entries.len(),
        n_conformers: flat.len(),
        median_precision_rmsd: median(&flat),
        report,
        paired,
    };
    write(&out.join("summary.json"), &pretty(&summary))?;
    let mut text = format!("{}\n{}\n", EnsembleReport::CSV_HEADER, summary.report.csv_row());
    text.push_str(&format!("median precision RMSD {:.4}\n", summary.median_precision_rmsd));
    if let Some(p) = &summary.paired {
        text.push_str(&format!(
            "vs {}: median {:.4} -> {:.4} ({:.1}% lower), basins kept {:.1}%\n",
            p.baseline_label,
            p.median_precision_before,
            p.median_precision_after,
            p.median_reduction_percent,
            p.basin_preservation_percent
        ));
        text.push_str(&p.irdr.to_csv());
    }
    Ok((text, files))
}

/// Headline numbers of a `diagnose` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseSummary {
    /// `(radius, t, mean degree)` rows.
    pub mean_degree: Vec<(f64, f64, f64)>,
    pub sigma: f64,
    pub pair_pooled_std: f64,
    pub refiner_median_speed: Option<f64>,
    pub refiner_randomized_median_speed: Option<f64>,
    pub generator_median_speed: Option<f64>,
    pub generator_early_median_speed: Option<f64>,
    /// Median over trajectories of the nearest-reference RMSD at the first
    /// and last state.
    pub trace_median_start: Option<f64>,
    pub trace_median_end: Option<f64>,
}

fn hist_rows(out: &mut String, key: &str, h: &Histogram) {
    for (k, c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{key},{:.8},{:.8},{c}\n", h.edges[k], h.edges[k + 1]));
    }
}

fn as_refs<'a>(v: &'a [(&'a MolecularGraph, Trajectory)]) -> Vec<(&'a MolecularGraph, &'a Trajectory)> {
    v.iter().map(|(g, t)| (*g, t)).collect()
}

fn diagnose(
    cfg: &RunConfig,
    out: &Path,
    data: &Path,
    checkpoint: Option<&Path>,
    generator: Option<&Path>,
    upstream: Option<&Path>,
) -> Res<(String, Vec<String>)> {
    let d = &cfg.diagnose;
    let records = read_dataset(data)?;
    if records.is_empty() {
        return Err(invalid(format!("{}: no molecules", data.display())));
    }
    let seed = derived_seed(cfg.seed, SeedUse::Diagnostics);
    let mut files = Vec::new();
    let masks: Vec<Vec<bool>> = records.iter().map(MoleculeRecord::heavy_atom_mask).collect();
    let items: Vec<(&PointSet, Option<&[bool]>)> = records
        .iter()
        .zip(&masks)
        .map(|(r, m)| (&r.references[0], d.heavy_atoms_only.then_some(m.as_slice())))
        .collect();
    let mut mean_degree = Vec::new();
    let mut hist_csv = String::from("radius,t,lower,upper,count\n");
    for (ri, &radius) in d.radii.iter().enumerate() {
        let mut rng = seeding::substream(seed, 0, ri as u64);
        let sweep = degree_sweep(&items, d.sigma, &d.times, radius, d.n_samples, &mut rng)?;
        let name = format!("degree_sweep_r{radius}.csv");
        write(&out.join(&name), &degree_sweep_csv(&sweep))?;
        files.push(name);
        for (t, h) in &sweep {
            mean_degree.push((radius, *t, h.summary.mean));
            hist_rows(&mut hist_csv, &format!("{radius},{t}"), h);
        }
    }
    write(&out.join("degree_hist.csv"), &hist_csv)?;
    files.push("degree_hist.csv".into());

    let mut rng = seeding::substream(seed, 1, 0);
    let pairs = pair_perturbation_stats(&records[0].references[0], d.sigma, d.pair_samples, &mut rng)?;
    let mut pair_csv = String::from("i,j,std\n");
    for ((i, j), s) in pairs.pairs.iter().zip(&pairs.std) {
        pair_csv.push_str(&format!("{i},{j},{s:.8}\n"));
    }
    write(&out.join("pair_perturbation.csv"), &pair_csv)?;
    files.push("pair_perturbation.csv".into());

    let mut summary = DiagnoseSummary {
        mean_degree,
        sigma: d.sigma,
        pair_pooled_std: pairs.pooled_std,
        refiner_median_speed: None,
        refiner_randomized_median_speed: None,
        generator_median_speed: None,
        generator_early_median_speed: None,
        trace_median_start: None,
        trace_median_end: None,
    };
    let per = d.conformers_per_molecule;

    if let Some(ck) = checkpoint {
        let up = upstream.ok_or_else(|| invalid("a refiner checkpoint needs --upstream".into()))?;
        let (_, model) = load_model(ck, ScheduleKind::RefinerLinear)?;
        let entries = read_ensemble_manifest(up)?;
        nonempty(&entries, up)?;
        let graphs: Vec<&MolecularGraph> = entries.iter().map(|e| &e.record.graph).collect();
        let inputs: Vec<Vec<PointSet>> = entries
            .iter()
            .map(|e| e.generated.iter().take(per).cloned().collect())
            .collect();
        let scfg = SampleConfig::uniform(cfg.sample.refiner_steps).with_trajectory();
        let outputs = refine_ensemble(&model, &graphs, &inputs, &scfg)?;
        let mut trajs: Vec<(&MolecularGraph, &Trajectory)> = Vec::new();
        let mut traces = Vec::new();
        for ((e, outs), g) in entries.iter().zip(&outputs).zip(&graphs) {
            for o in outs {
                let t = o.trajectory.as_ref().expect("trajectory requested");
                traces.push(rmsd_trace(t, &e.record.references)?);
                trajs.push((*g, t));
            }
        }
        let correct = velocity_histogram(&model, &trajs, SpeedMode::CorrectT, d.bins, seed)?;
        let random = velocity_histogram(&model, &trajs, SpeedMode::RandomizedT, d.bins, seed)?;
        write(&out.join("speed_refiner.csv"), &correct.to_csv())?;
        write(&out.join("speed_refiner_randomized_t.csv"), &random.to_csv())?;
        write(&out.join("traces.csv"), &traces_csv(&traces))?;
        files.extend(["speed_refiner.csv".into(), "speed_refiner_randomized_t.csv".into(), "traces.csv".into()]);
        summary.refiner_median_speed = Some(correct.summary.median);
        summary.refiner_randomized_median_speed = Some(random.summary.median);
        let first: Vec<f64> = traces.iter().map(|t| t[0].1).collect();
        let last: Vec<f64> = traces.iter().map(|t| t[t.len() - 1].1).collect();
        summary.trace_median_start = Some(median(&first));
        summary.trace_median_end = Some(median(&last));
    }

    if let Some(gk) = generator {
        let (ck, model) = load_model(gk, ScheduleKind::GeneratorGaussian)?;
        let sigma = cfg.sample.generator_sigma.unwrap_or(ck.sigma);
        let scfg = SampleConfig::uniform(cfg.sample.generator_steps).with_trajectory();
        let mut full = Vec::new();
        for (m, r) in records.iter().enumerate() {
            for k in 0..per {
                let mut rng = seeding::substream(seed, 2 + m as u64, k as u64);
                let o = generate_from_noise(&model, &r.graph, sigma, &scfg, &mut rng)?;
                full.push((&r.graph, o.trajectory.expect("trajectory requested")));
            }
        }
        let early: Vec<(&MolecularGraph, Trajectory)> =
            full.iter().map(|(g, t)| (*g, early_steps(t, d.early_time))).collect();
        let all_h = velocity_histogram(&model, &as_refs(&full), SpeedMode::CorrectT, d.bins, seed)?;
        let early_h = velocity_histogram(&model, &as_refs(&early), SpeedMode::CorrectT, d.bins, seed)?;
        write(&out.join("speed_generator.csv"), &all_h.to_csv())?;
        write(&out.join("speed_generator_early.csv"), &early_h.to_csv())?;
        files.extend(["speed_generator.csv".into(), "speed_generator_early.csv".into()]);
        summary.generator_median_speed = Some(all_h.summary.median);
        summary.generator_early_median_speed = Some(early_h.summary.median);
    }

    write(&out.join("diagnose.json"), &pretty(&summary))?;
    files.push("diagnose.json".into());
    let mut text = String::new();
    for (r, t, m) in &summary.mean_degree {
        text.push_str(&format!("R={r} t={t}: mean degree {m:.3}\n"));
    }
    text.push_str(&format!(
        "pair perturbation std {:.4} (sigma {})\n",
        summary.pair_pooled_std, summary.sigma
    ));
    for (name, v) in [
        ("refiner median speed", summary.refiner_median_speed),
        ("refiner randomized-t median speed", summary.refiner_randomized_median_speed),
        ("generator early median speed", summary.generator_early_median_speed),
    ] {
        if let Some(v) = v {
            text.push_str(&format!("{name} {v:.4}\n"));
        }
    }
    Ok((text, files))
}

fn bound(cfg: &RunConfig) -> Res<String> {
    let b = &cfg.bound;
    let q = wh_rmsd_quantile(b.n_atoms, b.sigma_star, b.qk)?;
    Ok(format!("{q:.2}\n"))
}

/// Path of the manifest a command wrote into `out`.
pub fn manifest_in(out: &Path) -> PathBuf {
    out.join("manifest.txt")
}
