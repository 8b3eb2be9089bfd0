use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use scramble_forge::betashift::{digits_string, reconstruct, BetaParams};
use scramble_forge::birkhoff::{lphi_interval, LocalObservable, ObservableFile};
use scramble_forge::chaos::{
    build_scramble_family, dc1_report, distal_pair_from_periodic, log_grid, transitive_seed, verify_family, DC1Params,
    Decomposition, FamilyConfig,
};
use scramble_forge::measures::{parse_ratio, periodic_measure, ratio, CylinderMeasure, MeasureChain, MeasureFile};
use scramble_forge::recurrence::{
    case_signature, classify_recurrence, expected_case, statistical_omega, target_catalog, RecurrenceParams,
};
use scramble_forge::shiftspace::{max_word_len, LazyPoint, PointSpec, ShiftModel, SymbolWord};
use scramble_forge::Error;

use crate::report::{cache_dir, cache_load, cache_store, envelope, read_input, Outputs, RunConfig};
use crate::{BetaBase, BetaExpandArgs, BetaSurgeryArgs, BetaWordArgs, BuildArgs, CatalogArgs, ClassifyArgs, CliError,
    Dc1Args, Dc1Tolerances, LphiArgs};

type Inputs = BTreeMap<String, String>;

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")).into())
}

fn load_model(path: &Path, inputs: &mut Inputs) -> Result<ShiftModel, CliError> {
    let text = read_input(path, "model", inputs)?;
    Ok(ShiftModel::from_json(&text)?)
}

fn load_point(path: &Path, label: &str, inputs: &mut Inputs) -> Result<LazyPoint, CliError> {
    let spec: PointSpec = parse_json(&read_input(path, label, inputs)?, label)?;
    Ok(spec.build()?)
}

fn dc1_params(t: &Dc1Tolerances) -> DC1Params {
    DC1Params { t_grid: t.t_grid.clone(), t0: Some(t.t0), tol_high: t.tol_high, tol_low: t.tol_low }
}

fn dc1_tolerances(t: &Dc1Tolerances) -> Value {
    json!({ "tol_high": t.tol_high, "tol_low": t.tol_low, "t0": t.t0, "t_grid": t.t_grid })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

pub fn build_scramble(a: &BuildArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let model = load_model(&a.model, &mut inputs)?;
    let hash = RunConfig { command: "build-scramble", args: a, inputs }.hash();
    let names = ["manifest.json", "verify.json", "dc1.json"];
    let cache = cache_dir(&hash);
    if let Some(out) = cache.as_deref().and_then(|dir| cache_load(dir, &names)) {
        eprintln!("cache hit {hash}");
        out.emit(a.common.out.as_deref())?;
        let verify: Value = parse_json(&out.files[1].1, "cached verify.json")?;
        return match verify["result"]["passed"].as_bool() {
            Some(true) => Ok(()),
            _ => Err(CliError::Failed("verification failed (cached)".into())),
        };
    }

    let q = model.q();
    let depth = a.common.metric_depth as usize;
    let m = max_word_len(q, depth);
    let mu_word = SymbolWord::parse_checked(&a.mu, q)?;
    let nu_word = SymbolWord::parse_checked(&a.nu, q)?;
    let mu = periodic_measure(&model, &mu_word, m)?;
    let nu = periodic_measure(&model, &nu_word, m)?;
    let chain = MeasureChain::path(vec![mu.clone(), nu])?;
    let pair = distal_pair_from_periodic(&model, &mu_word, a.pair_shift, depth)?;
    let dec = Decomposition { mu: mu.clone(), mu1: mu.clone(), mu2: mu, theta: ratio(1, 1), pairs: Some((pair.clone(), pair)) };
    let seed = transitive_seed(&model, a.seed_depth)?;
    let base = SymbolWord::parse_checked(&a.base, q)?;
    let mut config = FamilyConfig {
        eps: a.eps,
        k_max: a.depth as usize,
        metric_depth: depth,
        partial_ok: a.partial,
        ..FamilyConfig::default()
    };
    if let Some(cap) = a.horizon_cap {
        config.horizon_cap = cap;
    }
    let params = dc1_params(&a.tol);
    let candidates = match a.delta1.as_str() {
        "auto" => ["1/2", "1/4", "1/8", "1/16"].iter().map(|s| parse_ratio(s)).collect::<Result<Vec<_>, _>>()?,
        s => vec![parse_ratio(s)?],
    };
    let mut attempt = None;
    for (n, delta1) in candidates.iter().enumerate() {
        config.delta1 = delta1.clone();
        let last = n + 1 == candidates.len();
        let built = match build_scramble_family(&model, &chain, &dec, &seed, &base, &config) {
            Ok(fam) => fam,
            Err(e) if !last => {
                eprintln!("delta1 = {delta1}: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let report = verify_family(&built, &params)?;
        if report.passed || last {
            attempt = Some((built, report));
            break;
        }
        eprintln!("delta1 = {delta1}: verification failed");
    }
    let (fam, report) = attempt.expect("at least one candidate");

    let mut tolerances = dc1_tolerances(&a.tol);
    tolerances["eps"] = json!(a.eps);
    tolerances["delta1"] = json!(config.delta1.to_string());
    let xi = |i: usize| fam.points[i].0.iter().map(|c| c.to_string()).collect::<String>();
    let pairs: Vec<Value> = report
        .dc1
        .iter()
        .map(|(i, j, r)| json!({ "i": i, "j": j, "xi_i": xi(*i), "xi_j": xi(*j), "report": to_value(r) }))
        .collect();
    let verify = json!({
        "passed": report.passed,
        "horizon": fam.horizon(),
        "capped": fam.capped,
        "clauses": to_value(&report.clauses),
        "witnesses": to_value(&report.witnesses),
    });
    let mut out = Outputs::new();
    out.add(names[0], &envelope("build-scramble", &hash, depth, tolerances.clone(), fam.manifest()));
    out.add(names[1], &envelope("build-scramble", &hash, depth, tolerances.clone(), verify));
    out.add(names[2], &envelope("build-scramble", &hash, depth, tolerances, Value::Array(pairs)));
    if let Some(dir) = &cache {
        cache_store(dir, &out)?;
    }
    out.emit(a.common.out.as_deref())?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.clauses.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Failed(format!("verification failed: {}", failed.join(", "))))
    }
}

pub fn dc1(a: &Dc1Args) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let x = load_point(&a.x, "x", &mut inputs)?;
    let y = load_point(&a.y, "y", &mut inputs)?;
    let hash = RunConfig { command: "dc1", args: a, inputs }.hash();
    let depth = a.common.metric_depth as usize;
    let report = dc1_report(&x, &y, &log_grid(a.horizon), &dc1_params(&a.tol), depth)?;
    let mut out = Outputs::new();
    out.add("dc1.json", &envelope("dc1", &hash, depth, dc1_tolerances(&a.tol), to_value(&report)));
    out.emit(a.common.out.as_deref())
}

fn classify_one(model: &ShiftModel, x: &LazyPoint, a: &ClassifyArgs, params: &RecurrenceParams) -> Result<Value, CliError> {
    let depth = a.common.metric_depth as usize;
    let eps = a.eps.unwrap_or((a.horizon as f64).recip());
    let rec = classify_recurrence(model, x, eps, a.horizon, depth, params)?;
    let est = statistical_omega(x, a.omega_depth, a.horizon, a.tau, a.min_window)?;
    let words = |s: &std::collections::BTreeSet<SymbolWord>| s.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let signature = match case_signature(&est) {
        Ok(sig) => json!({ "label": sig.label.name(), "relations": sig.relations, "banach_lower_empty": sig.banach_lower_empty }),
        Err(e @ Error::IndeterminateSignature(_)) => json!({ "indeterminate": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    Ok(json!({
        "recurrence": to_value(&rec),
        "omega": {
            "depth": est.depth,
            "banach_lower": words(&est.banach_lower),
            "lower": words(&est.lower),
            "upper": words(&est.upper),
            "banach_upper": words(&est.banach_upper),
            "omega": words(&est.omega),
            "nested": est.is_nested(),
        },
        "signature": signature,
    }))
}

pub fn classify(a: &ClassifyArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let model = load_model(&a.model, &mut inputs)?;
    let points = a
        .point
        .iter()
        .enumerate()
        .map(|(i, p)| load_point(p, &format!("point{i}"), &mut inputs))
        .collect::<Result<Vec<_>, _>>()?;
    let hash = RunConfig { command: "classify", args: a, inputs }.hash();
    let params = RecurrenceParams { tau: a.tau, min_window: a.min_window, transitivity_len: a.transitivity_len };

    let jobs = (a.common.jobs as usize).min(points.len()).max(1);
    let mut results: Vec<Option<Result<Value, CliError>>> = (0..points.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let (model, points, params) = (&model, &points, &params);
                s.spawn(move || {
                    (w..points.len()).step_by(jobs).map(|i| (i, classify_one(model, &points[i], a, params))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let values = results.into_iter().map(|r| r.expect("every index assigned")).collect::<Result<Vec<_>, _>>()?;
    let depth = a.common.metric_depth as usize;
    let tolerances = json!({ "tau": a.tau, "min_window": a.min_window, "horizon": a.horizon });
    let mut out = Outputs::new();
    out.add("classify.json", &envelope("classify", &hash, depth, tolerances, Value::Array(values)));
    out.emit(a.common.out.as_deref())
}

pub fn lphi(a: &LphiArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let model = load_model(&a.model, &mut inputs)?;
    let file: ObservableFile = parse_json(&read_input(&a.observable, "observable", &mut inputs)?, "observable")?;
    let phi = LocalObservable::from_file(&model, &file)?;
    let hash = RunConfig { command: "lphi", args: a, inputs }.hash();
    let interval = lphi_interval(&model, &phi)?;
    let mut out = Outputs::new();
    let depth = a.common.metric_depth as usize;
    out.add("lphi.json", &envelope("lphi", &hash, depth, json!({}), to_value(&interval)));
    out.emit(a.common.out.as_deref())
}

fn beta_params(b: &BetaBase) -> Result<BetaParams, CliError> {
    Ok(BetaParams::new(b.beta, b.precision)?)
}

fn digits_of(word: &str) -> Result<Vec<u8>, CliError> {
    Ok(SymbolWord::parse(word)?.into_symbols())
}

fn beta_emit(command: &str, hash: &str, b: &BetaBase, params: &BetaParams, result: Value) -> Result<(), CliError> {
    let tolerances = json!({
        "precision": b.precision,
        "expansion_of_one": digits_string(params.expansion_of_one()),
        "finite_expansion": params.finite_expansion(),
    });
    let mut out = Outputs::new();
    out.add("beta.json", &envelope(command, hash, b.common.metric_depth as usize, tolerances, result));
    out.emit(b.common.out.as_deref())
}

pub fn beta_expand(a: &BetaExpandArgs) -> Result<(), CliError> {
    let params = beta_params(&a.base)?;
    let hash = RunConfig { command: "beta expand", args: a, inputs: Inputs::new() }.hash();
    let (digits, exhausted_at) = match params.greedy(a.x, a.digits) {
        Ok(d) => (d, None),
        Err(Error::PrecisionExhausted { digit, digits }) => (digits, Some(digit)),
        Err(e) => return Err(e.into()),
    };
    let result = json!({
        "digits": digits_string(&digits),
        "exhausted_at": exhausted_at,
        "reconstructed": reconstruct(&digits, a.base.beta),
        "admissible": params.parry_admissible(&digits)?,
    });
    beta_emit("beta expand", &hash, &a.base, &params, result)
}

pub fn beta_check(a: &BetaWordArgs) -> Result<(), CliError> {
    let params = beta_params(&a.base)?;
    let hash = RunConfig { command: "beta check", args: a, inputs: Inputs::new() }.hash();
    let verdict = params.parry_check(&digits_of(&a.word)?)?;
    beta_emit("beta check", &hash, &a.base, &params, json!({ "word": a.word, "verdict": to_value(&verdict) }))
}

pub fn beta_surgery(a: &BetaSurgeryArgs) -> Result<(), CliError> {
    let params = beta_params(&a.base)?;
    let hash = RunConfig { command: "beta surgery", args: a, inputs: Inputs::new() }.hash();
    let tail = params.word(digits_of(&a.tail)?)?;
    let out = params.decrement_append(&digits_of(&a.word)?, a.at, &tail)?;
    beta_emit("beta surgery", &hash, &a.base, &params, json!({ "digits": digits_string(out.digits()) }))
}

pub fn catalog(a: &CatalogArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let model = load_model(&a.model, &mut inputs)?;
    let mut load_measure = |path: &Path, label: &str| -> Result<CylinderMeasure, CliError> {
        let file: MeasureFile = parse_json(&read_input(path, label, &mut inputs)?, label)?;
        Ok(CylinderMeasure::from_file(&file)?)
    };
    let mus = a
        .measure
        .iter()
        .enumerate()
        .map(|(i, p)| load_measure(p, &format!("measure{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let full = load_measure(&a.full, "full")?;
    let hash = RunConfig { command: "catalog", args: a, inputs }.hash();
    let cat = target_catalog(&mus, &full, a.i_max)?;
    let l = a.omega_depth.min(mus[0].depth());
    let entries = cat
        .entries
        .iter()
        .map(|e| {
            Ok(json!({
                "name": e.name,
                "segments": e.segments,
                "expected_case": expected_case(&model, &e.chain, l)?.name(),
            }))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let result = json!({
        "entries": entries,
        "nu": cat.nu.iter().map(|n| to_value(&n.to_file())).collect::<Vec<_>>(),
        "nu_partner": cat.nu_partner,
        "truncation_diameter": cat.truncation_diameter,
    });
    let mut out = Outputs::new();
    out.add("catalog.json", &envelope("catalog", &hash, a.common.metric_depth as usize, json!({ "omega_depth": l }), result));
    out.emit(a.common.out.as_deref())
}
