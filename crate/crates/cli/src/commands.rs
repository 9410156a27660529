use std::fs::File;
use std::path::Path;
use std::time::Instant;

use polylogit::data::{load_counts, load_events};
use polylogit::explore::{chi_square, correspondence, mean_profiles};
use polylogit::inference::{self, interval_table, write_summary_csv};
use polylogit::sampler::{run, RNG_DESCRIPTION};
use polylogit::simulate::generate;
use polylogit::{
    DicReport, ModelSpec, ObservationTable, ParamSummary, ParameterLayout, PosteriorDraws,
    SamplerConfig, Schema, SimulationSpec, VERSION,
};
use serde_json::{json, Value};

use crate::output::{csv_bytes, num, Outputs};
use crate::{
    svg, CompareArgs, DataArgs, ExploreArgs, Failure, FitArgs, Format, SamplerArgs, SimulateArgs,
    SummarizeArgs,
};

/// R-hat above this draws a warning.
const RHAT_WARN: f64 = 1.1;
/// At most this many per-parameter R-hat warnings are printed per model.
const MAX_RHAT_LINES: usize = 20;

fn open(path: &Path, what: &str) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Data(format!("cannot open {what} {}: {e}", path.display())))
}

fn load_schema(path: Option<&Path>) -> Result<Schema, Failure> {
    match path {
        None => Ok(Schema::default()),
        Some(p) => Schema::from_json(open(p, "schema")?)
            .map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
    }
}

fn load_table(data: &Path, schema: Option<&Path>, format: Format) -> Result<ObservationTable, Failure> {
    let schema = load_schema(schema)?;
    let file = open(data, "data file")?;
    let table = match format {
        Format::Events => load_events(file, &schema),
        Format::Counts => load_counts(file, &schema),
    };
    table.map_err(|e| Failure::Data(format!("{}: {e}", data.display())))
}

fn resolve_model(name: &str) -> Result<ModelSpec, Failure> {
    if let Some(spec) = ModelSpec::preset(name) {
        return Ok(spec);
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(Failure::Usage(format!(
            "unknown model `{name}`: expected `model1`, `model2` or a model JSON file"
        )));
    }
    ModelSpec::from_json(open(path, "model file")?)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn sampler_config(args: &SamplerArgs) -> Result<SamplerConfig, Failure> {
    let mut c = SamplerConfig::default();
    if let Some(v) = args.chains {
        c.n_chains = v;
    }
    if let Some(v) = args.iter {
        c.n_iter = v;
    }
    if let Some(v) = args.burnin {
        c.n_burnin = v;
    }
    if let Some(v) = args.thin {
        c.thin = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.jobs = match args.jobs {
        0 => std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(c.n_chains.max(1)),
        n => n,
    };
    c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(c)
}

struct Fitted {
    layout: ParameterLayout,
    draws: PosteriorDraws,
    summaries: Vec<ParamSummary>,
    dic: DicReport,
}

fn fit_one(table: &ObservationTable, spec: &ModelSpec, config: &SamplerConfig) -> Result<Fitted, Failure> {
    let layout = ParameterLayout::build(spec, table)?;
    let draws = run(&layout, table, &spec.priors, config)?;
    let summaries = inference::summarize(&draws)?;
    let dic = inference::dic(&layout, table, &draws)?;
    Ok(Fitted {
        layout,
        draws,
        summaries,
        dic,
    })
}

/// Sampler warnings, R-hat above the threshold and negative pD, to stderr.
fn warn(model: &str, fitted: &Fitted) {
    for w in &fitted.draws.warnings {
        eprintln!("warning [{model}]: {w}");
    }
    warn_rhat(model, &fitted.summaries);
    if fitted.dic.pd_negative() {
        eprintln!(
            "warning [{model}]: pD = {:.3} is negative; DIC is unreliable for this posterior",
            fitted.dic.pd
        );
    }
}

fn warn_rhat(model: &str, summaries: &[ParamSummary]) {
    let mut high: Vec<&ParamSummary> = summaries.iter().filter(|s| s.rhat > RHAT_WARN).collect();
    high.sort_by(|a, b| b.rhat.total_cmp(&a.rhat));
    for s in high.iter().take(MAX_RHAT_LINES) {
        eprintln!("warning [{model}]: R-hat of {} is {:.3} (> {RHAT_WARN})", s.name, s.rhat);
    }
    if high.len() > MAX_RHAT_LINES {
        eprintln!(
            "warning [{model}]: {} more parameters have R-hat > {RHAT_WARN}",
            high.len() - MAX_RHAT_LINES
        );
    }
}

fn data_metadata(data: &DataArgs, table: &ObservationTable) -> Value {
    json!({
        "path": data.data.display().to_string(),
        "format": data.format.name(),
        "fingerprint": format!("{:016x}", table.fingerprint()),
        "subjects": table.subjects().len(),
        "weeks": table.weeks(),
        "rows": table.rows().len(),
        "total_count": table.grand_total(),
        "schema": Schema::pinned(table),
    })
}

fn sampler_metadata(config: &SamplerConfig) -> Value {
    json!({
        "config": config,
        "seed": config.seed,
        "rng": RNG_DESCRIPTION,
        "retained_draws_per_chain": config.retained_per_chain(),
        "artifact_decisions": [
            "proposal scales adapt by Robbins-Monro toward the target acceptance during burn-in and are frozen afterwards",
            "fixed-effect groups learn a proposal covariance from burn-in draws",
            "ridge moves along likelihood-invariant directions and single-coefficient updates supplement the group updates",
            "chains start from the configured initialization policy",
        ],
    })
}

fn diagnostics(summaries: &[ParamSummary]) -> Value {
    summaries
        .iter()
        .map(|s| json!({"parameter": s.name, "rhat": s.rhat, "ess": s.ess}))
        .collect()
}

const DIC_NOTE: &str = "conditional on the random intercepts; the deviance omits the multinomial coefficient, which cancels in comparisons";

fn dic_json(model: &str, dic: &DicReport) -> Value {
    json!({
        "model": model,
        "dbar": dic.dbar,
        "dhat": dic.dhat,
        "pd": dic.pd,
        "dic": dic.dic,
        "pd_negative": dic.pd_negative(),
    })
}

fn summary_bytes(summaries: &[ParamSummary]) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_summary_csv(summaries, &mut buf)?;
    Ok(buf)
}

/// Credible intervals of every block.
fn interval_bytes(summaries: &[ParamSummary], layout: &ParameterLayout) -> Result<Vec<u8>, Failure> {
    let mut tables = Vec::new();
    for block in layout.blocks() {
        tables.push((block.name.clone(), interval_table(summaries, layout, &block.name, None, None)?));
    }
    csv_bytes(
        &["block", "week", "category", "level", "mean", "ci_low", "ci_high", "significant"],
        |w| {
            for (block, table) in &tables {
                for r in &table.rows {
                    w.write_record([
                        block.as_str(),
                        &r.week,
                        &r.category,
                        &r.level,
                        &num(r.mean),
                        &num(r.ci_low),
                        &num(r.ci_high),
                        if r.significant { "true" } else { "false" },
                    ])?;
                }
            }
            Ok(())
        },
    )
}

fn timing(start: Instant, sampling: f64) -> Value {
    json!({
        "sampling_seconds": sampling,
        "total_seconds": start.elapsed().as_secs_f64(),
    })
}

fn finish(outputs: Outputs, dir: &Path) -> Result<(), Failure> {
    let paths = outputs.commit(dir)?;
    println!("wrote {} files to {}", paths.len(), dir.display());
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let config = sampler_config(&args.sampler)?;
    let spec = resolve_model(&args.model)?;
    let table = load_table(&args.data.data, args.data.schema.as_deref(), args.data.format)?;
    let t0 = Instant::now();
    let fitted = fit_one(&table, &spec, &config)?;
    let sampling = t0.elapsed().as_secs_f64();
    warn(&spec.name, &fitted);

    let mut out = Outputs::default();
    let mut draws = Vec::new();
    fitted.draws.write_csv(&mut draws)?;
    out.add("draws.csv", draws);
    out.add("summary.csv", summary_bytes(&fitted.summaries)?);
    out.add("intervals.csv", interval_bytes(&fitted.summaries, &fitted.layout)?);
    out.add_json("dic.json", &dic_json(&spec.name, &fitted.dic))?;
    out.add_json(
        "metadata.json",
        &json!({
            "version": VERSION,
            "command": "fit",
            "data": data_metadata(&args.data, &table),
            "model": spec,
            "sampler": sampler_metadata(&config),
            "chains": fitted.draws.chains,
            "diagnostics": diagnostics(&fitted.summaries),
            "warnings": fitted.draws.warnings,
            "dic": DIC_NOTE,
        }),
    )?;
    out.add_json("timing.json", &timing(start, sampling))?;
    println!(
        "{}: DIC {:.2} (Dbar {:.2}, pD {:.2})",
        spec.name, fitted.dic.dic, fitted.dic.dbar, fitted.dic.pd
    );
    finish(out, &args.out.out)
}

pub fn compare(args: CompareArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let config = sampler_config(&args.sampler)?;
    if args.models.len() < 2 {
        return Err(Failure::Usage("compare needs at least two models".into()));
    }
    let mut specs: Vec<ModelSpec> = Vec::with_capacity(args.models.len());
    for (arg, name) in args.models.iter().enumerate().map(|(i, m)| (i, m.trim())) {
        if args.models[..arg].iter().any(|m| m.trim() == name) {
            return Err(Failure::Usage(format!("model `{name}` is listed more than once")));
        }
        let spec = resolve_model(name)?;
        if specs.iter().any(|s| s.name == spec.name) {
            return Err(Failure::Usage(format!("duplicate model name `{}`", spec.name)));
        }
        specs.push(spec);
    }
    let table = load_table(&args.data.data, args.data.schema.as_deref(), args.data.format)?;

    let t0 = Instant::now();
    let mut fits = Vec::with_capacity(specs.len());
    for spec in &specs {
        let fitted = fit_one(&table, spec, &config)?;
        warn(&spec.name, &fitted);
        fits.push(fitted);
    }
    let sampling = t0.elapsed().as_secs_f64();
    let reports: Vec<(String, DicReport)> = specs
        .iter()
        .zip(&fits)
        .map(|(s, f)| (s.name.clone(), f.dic.clone()))
        .collect();
    let ranked = inference::compare(&reports)?;
    let spec_of = |name: &str| specs.iter().find(|s| s.name == name).expect("ranked model was fitted");
    let best = ranked[0].1.dic;

    let mut out = Outputs::default();
    out.add(
        "comparison.csv",
        csv_bytes(&["model", "description", "dic"], |w| {
            for (name, r) in &ranked {
                w.write_record([name.as_str(), &spec_of(name).description, &num(r.dic)])?;
            }
            Ok(())
        })?,
    );
    let text = comparison_text(&ranked, |n| spec_of(n).description.clone());
    out.add("comparison.txt", text.clone().into_bytes());
    let rows: Vec<Value> = ranked
        .iter()
        .enumerate()
        .map(|(i, (name, r))| {
            let mut v = dic_json(name, r);
            v["rank"] = json!(i + 1);
            v["description"] = json!(spec_of(name).description);
            v["delta_dic"] = json!(r.dic - best);
            v
        })
        .collect();
    out.add_json("comparison.json", &json!({"winner": ranked[0].0, "models": rows, "dic": DIC_NOTE}))?;
    for (spec, fitted) in specs.iter().zip(&fits) {
        out.add(&format!("summary_{}.csv", spec.name), summary_bytes(&fitted.summaries)?);
        out.add(
            &format!("intervals_{}.csv", spec.name),
            interval_bytes(&fitted.summaries, &fitted.layout)?,
        );
    }
    let models: Vec<Value> = specs
        .iter()
        .zip(&fits)
        .map(|(s, f)| {
            json!({
                "model": s,
                "chains": f.draws.chains,
                "diagnostics": diagnostics(&f.summaries),
                "warnings": f.draws.warnings,
            })
        })
        .collect();
    out.add_json(
        "metadata.json",
        &json!({
            "version": VERSION,
            "command": "compare",
            "data": data_metadata(&args.data, &table),
            "sampler": sampler_metadata(&config),
            "models": models,
        }),
    )?;
    out.add_json("timing.json", &timing(start, sampling))?;
    print!("{text}");
    finish(out, &args.out.out)
}

fn comparison_text(ranked: &[(String, DicReport)], description: impl Fn(&str) -> String) -> String {
    let rows: Vec<[String; 3]> = ranked
        .iter()
        .map(|(n, r)| [n.clone(), description(n), format!("{:.1}", r.dic)])
        .collect();
    let width = |k: usize, head: &str| {
        rows.iter()
            .map(|r| r[k].chars().count())
            .chain([head.len()])
            .max()
            .unwrap_or(0)
    };
    let (w0, w1, w2) = (width(0, "Model"), width(1, "Linear predictor"), width(2, "DIC"));
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let mut text = format!(
        "{}  {}  {}\n",
        pad("Model", w0),
        pad("Linear predictor", w1),
        " ".repeat(w2 - 3) + "DIC"
    );
    for r in &rows {
        text += &format!(
            "{}  {}  {}{}\n",
            pad(&r[0], w0),
            pad(&r[1], w1),
            " ".repeat(w2 - r[2].len()),
            r[2]
        );
    }
    let gap = ranked[1].1.dic - ranked[0].1.dic;
    text += &format!("winner: {} (lowest DIC, {:.1} below {})", ranked[0].0, gap, ranked[1].0);
    if gap < 2.0 {
        text += "; difference under 2, models are comparable";
    }
    text.push('\n');
    text
}

pub fn explore(args: ExploreArgs) -> Result<(), Failure> {
    let table = load_table(&args.data.data, args.data.schema.as_deref(), args.data.format)?;
    let group_by: Vec<String> = match &args.group_by {
        Some(g) => g.iter().map(|s| s.trim().to_string()).collect(),
        None => table.factors().iter().map(|f| f.name.clone()).collect(),
    };
    let contingency = table.contingency(&group_by)?;
    let chi = chi_square(&contingency)?;
    let ca = correspondence(&contingency)?;
    let profiles = mean_profiles(&table, &group_by)?;

    let mut out = Outputs::default();
    let counts: Vec<Vec<f64>> = (0..contingency.row_labels.len())
        .map(|i| (0..contingency.col_labels.len()).map(|j| contingency.counts[(i, j)]).collect())
        .collect();
    out.add_json(
        "chi_square.json",
        &json!({
            "group_by": group_by,
            "rows": contingency.row_labels,
            "columns": contingency.col_labels,
            "counts": counts,
            "grand_total": contingency.grand_total(),
            "statistic": chi.statistic,
            "df": chi.df,
            "p_value": chi.p_value,
        }),
    )?;
    let dims = ca.dims();
    let mut header: Vec<String> = vec!["entity".into(), "type".into()];
    header.extend((1..=dims).map(|d| format!("dim{d}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    out.add(
        "ca_coordinates.csv",
        csv_bytes(&header_ref, |w| {
            for (i, label) in ca.row_labels.iter().enumerate() {
                let mut rec = vec![label.clone(), "row".into()];
                rec.extend((0..dims).map(|d| num(ca.row_coord(i, d))));
                w.write_record(&rec)?;
            }
            for (j, label) in ca.col_labels.iter().enumerate() {
                let mut rec = vec![label.clone(), "column".into()];
                rec.extend((0..dims).map(|d| num(ca.col_coord(j, d))));
                w.write_record(&rec)?;
            }
            Ok(())
        })?,
    );
    out.add(
        "ca_inertia.csv",
        csv_bytes(&["dim", "singular_value", "inertia", "share", "cumulative_share"], |w| {
            let mut cumulative = 0.0;
            for d in 0..dims {
                cumulative += ca.inertia_share[d];
                w.write_record([
                    (d + 1).to_string(),
                    num(ca.singular_values[d]),
                    num(ca.principal_inertias[d]),
                    num(ca.inertia_share[d]),
                    num(cumulative),
                ])?;
            }
            Ok(())
        })?,
    );
    out.add(
        "profiles.csv",
        csv_bytes(
            &["week", "group", "category", "count", "total", "proportion", "zero_total"],
            |w| {
                for r in &profiles {
                    w.write_record([
                        r.week.clone(),
                        r.group.clone(),
                        r.category.clone(),
                        r.count.to_string(),
                        r.total.to_string(),
                        r.proportion.map_or(String::new(), num),
                        (r.total == 0).to_string(),
                    ])?;
                }
                Ok(())
            },
        )?,
    );
    if args.svg {
        out.add("ca_biplot.svg", svg::biplot(&ca).into_bytes());
        out.add("profiles.svg", svg::profiles(&profiles).into_bytes());
    }
    out.add_json(
        "metadata.json",
        &json!({
            "version": VERSION,
            "command": "explore",
            "data": data_metadata(&args.data, &table),
            "group_by": group_by,
            "ca_scaling": "symmetric: rows and columns both in principal coordinates",
            "ca_sign_convention": "each singular vector pair is oriented so its largest-magnitude entry is positive",
            "total_inertia": ca.total_inertia,
        }),
    )?;
    println!(
        "chi-square {:.4} on {} df, p = {:.4e}; total inertia {:.6}",
        chi.statistic, chi.df, chi.p_value, ca.total_inertia
    );
    let shown: Vec<String> = ca
        .inertia_share
        .iter()
        .take(2)
        .map(|s| format!("{:.1}%", 100.0 * s))
        .collect();
    println!("inertia shares of the first dimensions: {}", shown.join(", "));
    finish(out, &args.out.out)
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut spec = SimulationSpec::from_json(open(&args.spec, "simulation spec")?)
        .map_err(|e| Failure::Data(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let sim = generate(&spec)?;

    let mut out = Outputs::default();
    let mut data = Vec::new();
    let name = match args.format {
        Format::Counts => {
            sim.table.write_counts(&mut data)?;
            "counts.csv"
        }
        Format::Events => {
            sim.table.write_events(&mut data)?;
            "events.csv"
        }
    };
    out.add(name, data);
    out.add_json("schema.json", &Schema::pinned(&sim.table))?;
    out.add_json(
        "truth.json",
        &json!({
            "model": spec.model.name,
            "fixed_effects": spec.fixed_effects,
            "raneff_variance": spec.raneff_variance(),
            "parameters": sim.truth_map(),
        }),
    )?;
    out.add_json(
        "metadata.json",
        &json!({
            "version": VERSION,
            "command": "simulate",
            "spec": spec,
            "seed": spec.seed,
            "rng": "ChaCha8Rng (rand_chacha 0.9); seed_from_u64(seed); subject intercepts first, then counts by subject and week",
            "fingerprint": format!("{:016x}", sim.table.fingerprint()),
        }),
    )?;
    println!(
        "{} subjects x {} weeks, {} trials per cell",
        spec.design.subjects, spec.design.weeks, spec.design.trials
    );
    finish(out, &args.out.out)
}

pub fn summarize(args: SummarizeArgs) -> Result<(), Failure> {
    let draws = PosteriorDraws::read_csv(open(&args.draws, "draws file")?)
        .map_err(|e| Failure::Data(format!("{}: {e}", args.draws.display())))?;
    let summaries = inference::summarize(&draws)?;
    warn_rhat("draws", &summaries);

    let mut out = Outputs::default();
    out.add("summary.csv", summary_bytes(&summaries)?);
    if let (Some(data), Some(model)) = (&args.data, &args.model) {
        let spec = resolve_model(model)?;
        let table = load_table(data, args.schema.as_deref(), args.format)?;
        let layout = ParameterLayout::build(&spec, &table)?;
        if layout.names() != draws.names() {
            return Err(Failure::Data(format!(
                "draws do not match the parameters of model `{}` on this data",
                spec.name
            )));
        }
        let dic = inference::dic(&layout, &table, &draws)?;
        out.add("intervals.csv", interval_bytes(&summaries, &layout)?);
        out.add_json("dic.json", &dic_json(&spec.name, &dic))?;
    }
    println!(
        "{:<40} {:>10} {:>9} {:>10} {:>10} {:>7} {:>8}",
        "parameter", "mean", "sd", "2.5%", "97.5%", "rhat", "ess"
    );
    for s in &summaries {
        println!(
            "{:<40} {:>10.4} {:>9.4} {:>10.4} {:>10.4} {:>7.3} {:>8.1}{}",
            s.name,
            s.mean,
            s.sd,
            s.ci_low,
            s.ci_high,
            s.rhat,
            s.ess,
            if s.significant { " *" } else { "" }
        );
    }
    finish(out, &args.out.out)
}
