//! `localrules-stub`: a black box served over the wire protocol, on
//! standard streams or over HTTP, with optional contract faults.

use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use localrules::blackbox::stub::{StubFault, StubServer};
use localrules::blackbox::{Constant, FnPredictor, Predictor};
use localrules::data::{FeatureKind, FeatureSchema, Instance};
use localrules::harness::{prepare, HarnessError, RunConfig, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(name = "localrules-stub", version, about = "Serve a black box over the localrules wire protocol")]
struct Cli {
    #[arg(long)]
    schema: PathBuf,
    /// Dataset CSV; required by the `ensemble` model.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `constant:<label>`, `parity` or `ensemble`.
    #[arg(long, default_value = "ensemble")]
    model: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// none, wrong-length, wrong-id, bad-version, garbage or silent.
    #[arg(long, default_value = "none")]
    fault: StubFault,
    /// Serve HTTP on this address instead of standard streams; the bound
    /// address is printed on the first line of standard output.
    #[arg(long)]
    http: Option<String>,
}

fn parity(schema: &FeatureSchema) -> impl Fn(&Instance) -> usize + Send + Sync {
    let mids: Vec<Option<f64>> = schema
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Continuous { min, max } => Some((min + max) / 2.0),
            FeatureKind::Categorical { .. } => None,
        })
        .collect();
    move |x: &Instance| {
        let high = mids
            .iter()
            .enumerate()
            .filter(|(i, m)| match m {
                Some(mid) => x.get(*i).as_number() > *mid,
                None => x.get(*i).as_category() % 2 == 1,
            })
            .count();
        high % 2
    }
}

fn build(cli: &Cli) -> Result<StubServer, HarnessError> {
    let usage = |m: &str| HarnessError::Usage(m.to_string());
    if cli.model == "ensemble" {
        let data = cli.data.as_ref().ok_or_else(|| usage("the ensemble model needs --data"))?;
        let config = RunConfig {
            seed: cli.seed,
            trees: cli.trees,
            train_fraction: cli.train_fraction,
            ..RunConfig::new(data, &cli.schema)
        };
        let ws = prepare(&config)?;
        return Ok(StubServer::new(ws.schema, ws.black_box, cli.fault));
    }
    let mut schema = FeatureSchema::load(&cli.schema)?;
    if let Some(data) = &cli.data {
        schema = localrules::data::load_dataset(data, &cli.schema)?.schema;
    }
    let model: Box<dyn Predictor> = if cli.model == "parity" {
        Box::new(FnPredictor(parity(&schema)))
    } else if let Some(label) = cli.model.strip_prefix("constant:") {
        let l = schema
            .target
            .label_index(label)
            .ok_or_else(|| usage(&format!("`{label}` is not a target label")))?;
        Box::new(Constant(l))
    } else {
        return Err(usage(&format!("unknown model `{}`", cli.model)));
    };
    Ok(StubServer::new(schema, model, cli.fault))
}

fn serve_http(server: &StubServer, addr: &str, fault: StubFault) -> Result<(), HarnessError> {
    let http = tiny_http::Server::http(addr).map_err(|e| HarnessError::Usage(format!("cannot bind {addr}: {e}")))?;
    match http.server_addr().to_ip() {
        Some(a) => println!("listening http://{a}"),
        None => println!("listening {addr}"),
    }
    for mut request in http.incoming_requests() {
        let mut body = String::new();
        if request.as_reader().read_to_string(&mut body).is_err() {
            let _ = request.respond(tiny_http::Response::empty(400));
            continue;
        }
        match server.respond(&body) {
            Some(reply) => {
                let header = tiny_http::Header::from_bytes("content-type", "application/json").expect("static header");
                let _ = request.respond(tiny_http::Response::from_string(reply).with_header(header));
            }
            None => {
                // hold the connection open without answering
                debug_assert_eq!(fault, StubFault::Silent);
                std::thread::sleep(Duration::from_secs(3600));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = build(&cli).and_then(|server| match &cli.http {
        Some(addr) => serve_http(&server, addr, cli.fault),
        None => server
            .serve_lines(BufReader::new(io::stdin().lock()), io::stdout().lock())
            .map_err(|e| HarnessError::Internal(e.to_string())),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
