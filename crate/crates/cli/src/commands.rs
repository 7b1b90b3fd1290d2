use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use svemu::evaluation::{
    evaluate, generate_synthetic, EvalError, EvalPoint, EvaluationConfig, ProtocolKind,
    SyntheticProtocolSpec, Weighting,
};
use svemu::{
    align, align_weighted, derive_weights, select_response, InteractionLibrary, Matcher,
    MatcherConfig, ModelError, ScalerSpec, ScoringParams, Strategy, WeightsFile, WeightsVector,
};
use svemu_wire::{Emulator, FramingMode, FramingSpec, Recorder};

use crate::args::*;
use crate::CliError;

fn config(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn io_context(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| runtime(format!("{}: {e}", path.display()))
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Record(a) => record(a),
        Command::Weights(a) => weights(a),
        Command::Serve(a) => serve(a),
        Command::Match(a) => match_one(a),
        Command::Align(a) => align_cmd(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    }
}

fn load_library(path: &Path) -> Result<InteractionLibrary, CliError> {
    let file = File::open(path).map_err(io_context(path))?;
    InteractionLibrary::load(BufReader::new(file)).map_err(|e| match e {
        ModelError::Io(e) => runtime(format!("{}: {e}", path.display())),
        other => config(format!("{}: {other}", path.display())),
    })
}

fn load_weights(path: &Path) -> Result<WeightsVector<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_context(path))?;
    let file: WeightsFile = serde_json::from_str(&text)
        .map_err(|e| config(format!("{}: invalid weights file: {e}", path.display())))?;
    file.into_weights()
        .map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Writes to `out`, or standard output when absent.
fn emit(out: Option<&PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(io_context(p)),
        None => std::io::stdout().write_all(bytes).map_err(runtime),
    }
}

fn scoring(a: &ScoringArgs) -> Result<ScoringParams<f64>, CliError> {
    ScoringParams::new(a.identical, a.differing, a.gap).map_err(config)
}

fn scaler(a: &ScalerArgs) -> Result<ScalerSpec<f64>, CliError> {
    let reject = |name: &str, given: bool| {
        if given {
            Err(config(
                format!("--{name} does not apply to the {:?} scaler", a.scaler).to_lowercase(),
            ))
        } else {
            Ok(())
        }
    };
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| config(format!("--{name} is required by this scaler")))
    };
    let spec = match a.scaler {
        ScalerArg::Hyperbolic => {
            reject("scaler-k", a.scaler_k.is_some())?;
            reject("tau", a.tau.is_some())?;
            ScalerSpec::Hyperbolic {
                a: a.a.unwrap_or(1.0),
                c: a.c.unwrap_or(10.0),
            }
        }
        ScalerArg::Exponential => {
            reject("a", a.a.is_some())?;
            reject("c", a.c.is_some())?;
            reject("tau", a.tau.is_some())?;
            ScalerSpec::Exponential {
                k: need("scaler-k", a.scaler_k)?,
            }
        }
        ScalerArg::Sigmoid => {
            reject("a", a.a.is_some())?;
            reject("c", a.c.is_some())?;
            ScalerSpec::Sigmoid {
                k: need("scaler-k", a.scaler_k)?,
                tau: need("tau", a.tau)?,
            }
        }
        ScalerArg::Threshold => {
            reject("a", a.a.is_some())?;
            reject("c", a.c.is_some())?;
            reject("scaler-k", a.scaler_k.is_some())?;
            ScalerSpec::Threshold {
                tau: need("tau", a.tau)?,
            }
        }
    };
    spec.validate().map_err(config)?;
    Ok(spec)
}

fn framing(a: &FramingArgs) -> Result<FramingSpec, CliError> {
    let mode = match (a.framing, &a.delimiter) {
        (FramingArg::Delim, Some(hex_text)) => FramingMode::Delimited(
            hex::decode(hex_text).map_err(|e| config(format!("--delimiter: {e}")))?,
        ),
        (FramingArg::Delim, None) => return Err(config("--framing delim requires --delimiter")),
        (_, Some(_)) => return Err(config("--delimiter only applies to --framing delim")),
        (FramingArg::Conn, None) => FramingMode::ConnectionPerMessage,
        (FramingArg::Len, None) => FramingMode::LengthPrefixed,
    };
    FramingSpec::new(mode)
        .and_then(|f| f.with_max_message_bytes(a.max_message_bytes))
        .and_then(|f| f.with_response_timeout(Duration::from_millis(a.timeout_ms)))
        .map_err(config)
}

fn matcher_config(
    a: &MatcherArgs,
    lib: &InteractionLibrary,
) -> Result<MatcherConfig<f64>, CliError> {
    let params = scoring(&a.scoring)?;
    let cfg = match (a.strategy, &a.weights) {
        (Strategy::NwWeighted, Some(p)) => MatcherConfig::weighted(params, load_weights(p)?),
        (Strategy::NwWeighted, None) => {
            return Err(config("--strategy nw-weighted requires --weights"))
        }
        (_, Some(_)) => return Err(config("--weights only applies to --strategy nw-weighted")),
        (Strategy::NwPlain, None) => MatcherConfig::plain(params),
        (Strategy::HashLookup, None) => MatcherConfig::hash_lookup(),
    };
    cfg.check(lib).map_err(config)?;
    Ok(cfg)
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)
}

async fn ctrl_c() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        log::error!("cannot listen for interrupt: {e}");
        std::future::pending::<()>().await;
    }
}

fn record(a: RecordArgs) -> Result<(), CliError> {
    let spec = framing(&a.framing)?;
    let sink = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&a.out)
        .map_err(io_context(&a.out))?;
    tokio_runtime()?.block_on(async {
        let rec = Recorder::bind(a.listen.as_str(), a.upstream, spec, sink)
            .await
            .map_err(runtime)?;
        eprintln!("recording on {}", rec.local_addr().map_err(runtime)?);
        let n = rec.run_until(ctrl_c()).await.map_err(runtime)?;
        eprintln!("recorded {n} interactions to {}", a.out.display());
        Ok(())
    })
}

fn weights(a: WeightsArgs) -> Result<(), CliError> {
    let lib = load_library(&a.library)?;
    let w = derive_weights(&lib, a.method, scaler(&a.scaler)?).map_err(config)?;
    let file = WeightsFile::from_weights(&w).expect("derived weights carry provenance");
    let mut json = serde_json::to_vec_pretty(&file).map_err(runtime)?;
    json.push(b'\n');
    emit(a.out.as_ref(), &json)
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let lib = load_library(&a.library)?;
    let cfg = matcher_config(&a.matcher, &lib)?;
    let spec = framing(&a.framing)?;
    let matcher = Matcher::new(lib, cfg).map_err(config)?;
    tokio_runtime()?.block_on(async {
        let emu = Emulator::bind(a.listen.as_str(), matcher, spec)
            .await
            .map_err(runtime)?;
        eprintln!("serving on {}", emu.local_addr().map_err(runtime)?);
        emu.run_until(ctrl_c()).await.map_err(runtime)
    })
}

fn match_one(a: MatchArgs) -> Result<(), CliError> {
    let lib = load_library(&a.library)?;
    let cfg = matcher_config(&a.matcher, &lib)?;
    let request = match (&a.request, &a.request_b64, &a.request_file) {
        (Some(text), _, _) => text.as_bytes().to_vec(),
        (_, Some(b64), _) => B64
            .decode(b64)
            .map_err(|e| config(format!("--request-b64: {e}")))?,
        (_, _, Some(p)) => std::fs::read(p).map_err(io_context(p))?,
        _ => unreachable!("clap enforces one request source"),
    };
    let sel = select_response(&lib, &request, &cfg).map_err(config)?;
    let mut out = String::new();
    match sel.report.selected_index {
        Some(i) => out.push_str(&format!("index: {i}\n")),
        None => out.push_str("index: none\n"),
    }
    if let Some(d) = sel.report.distance {
        out.push_str(&format!("distance: {d}\n"));
    }
    out.push_str(&format!("no_response: {}\n", sel.no_response));
    out.push_str(&format!("response: {}\n", B64.encode(&sel.response)));
    emit(None, out.as_bytes())?;

    if let Some(path) = &a.candidates {
        let file = File::create(path).map_err(io_context(path))?;
        let mut w = csv::Writer::from_writer(file);
        let rows = w
            .write_record(["index", "distance"])
            .and_then(|_| {
                sel.report
                    .per_candidate
                    .iter()
                    .try_for_each(|(i, d)| w.write_record([i.to_string(), d.to_string()]))
            })
            .and_then(|_| w.flush().map_err(csv::Error::from));
        rows.map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn align_cmd(a: AlignArgs) -> Result<(), CliError> {
    let decode = |s: &str, flag: &str| -> Result<Vec<u8>, CliError> {
        if a.hex {
            hex::decode(s).map_err(|e| config(format!("--{flag}: {e}")))
        } else {
            Ok(s.as_bytes().to_vec())
        }
    };
    let (m1, m2) = (decode(&a.a, "a")?, decode(&a.b, "b")?);
    let params = scoring(&a.scoring)?;
    let result = match &a.weights {
        Some(p) => align_weighted(&m1, &m2, &params, &load_weights(p)?),
        None => align(&m1, &m2, &params),
    };
    let (top, bottom) = result.render();
    emit(
        None,
        format!("{top}\n{bottom}\nscore: {}\n", result.score).as_bytes(),
    )
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let lib = generate_synthetic(&SyntheticProtocolSpec {
        kind: a.kind.into(),
        n_interactions: a.n,
        n_operation_types: a.ops,
        seed: a.seed,
    })
    .map_err(config)?;
    emit(a.out.as_ref(), &lib.to_bytes().map_err(runtime)?)
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Io(e) => runtime(e),
        EvalError::Csv(e) => runtime(e),
        other => config(other),
    }
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), CliError> {
    let (lib, kind) = match a.dataset.strip_prefix("gen:") {
        Some(name) => {
            let kind: ProtocolKind = name.parse().map_err(eval_error)?;
            if let Some(p) = a.protocol {
                if ProtocolKind::from(p) != kind {
                    return Err(config(
                        "--protocol conflicts with the generated dataset kind",
                    ));
                }
            }
            let (n, ops) = match kind {
                ProtocolKind::DirectoryText => (1000, 6),
                ProtocolKind::FixedWidthBinary => (800, 5),
            };
            let spec = SyntheticProtocolSpec {
                kind,
                n_interactions: a.n.unwrap_or(n),
                n_operation_types: a.ops.unwrap_or(ops),
                seed: a.gen_seed.unwrap_or(1),
            };
            (generate_synthetic(&spec).map_err(eval_error)?, kind)
        }
        None => {
            if a.n.is_some() || a.ops.is_some() || a.gen_seed.is_some() {
                return Err(config(
                    "--n, --ops and --gen-seed only apply to generated datasets",
                ));
            }
            let kind = a
                .protocol
                .ok_or_else(|| config("a library dataset needs --protocol"))?;
            (load_library(Path::new(&a.dataset))?, kind.into())
        }
    };

    let params = scoring(&a.scoring)?;
    let weighting = Weighting {
        method: a.method,
        scaler: scaler(&a.scaler)?,
    };
    let mut points: Vec<EvalPoint> = a
        .strategies
        .iter()
        .map(|s| EvalPoint {
            strategy: *s,
            scoring: params,
            weighting: (*s == Strategy::NwWeighted).then_some(weighting),
        })
        .collect();
    for &c in &a.c_sweep {
        let scaler = ScalerSpec::Hyperbolic {
            a: a.scaler.a.unwrap_or(1.0),
            c,
        };
        scaler.validate().map_err(config)?;
        points.push(EvalPoint {
            strategy: Strategy::NwWeighted,
            scoring: params,
            weighting: Some(Weighting {
                method: a.method,
                scaler,
            }),
        });
    }

    let seeds = if a.seeds.is_empty() {
        (1..=a.repeats as u64).collect()
    } else if a.seeds.len() == a.repeats {
        a.seeds.clone()
    } else {
        return Err(config(format!(
            "--seeds lists {} seeds but --repeats is {}",
            a.seeds.len(),
            a.repeats
        )));
    };
    let cfg = EvaluationConfig {
        k: a.k,
        seeds,
        points,
    };
    let report = evaluate(&lib, &cfg, kind).map_err(eval_error)?;

    for p in &report.points {
        eprintln!("{:<48} {:.4} ± {:.4}", p.label, p.mean, p.std_dev);
    }
    let is_csv = a
        .report
        .as_ref()
        .and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf).map_err(eval_error)?;
        emit(a.report.as_ref(), &buf)
    } else {
        let mut json = serde_json::to_vec_pretty(&report).map_err(runtime)?;
        json.push(b'\n');
        emit(a.report.as_ref(), &json)
    }
}
