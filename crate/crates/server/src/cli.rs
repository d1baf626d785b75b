//! The `homeviz` command line: `serve`, `ingest`, and `query`.

use std::io::{self, BufWriter};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use homeviz_core::identity::IdentityError;
use homeviz_core::{
    AppProtocol, DeviceKey, GeoDb, IdentityResolver, IngestError, LanConfig, MacAddr, OuiRegistry, StoreConfig,
    StoreError, Timestamp, TrafficQuery, TrafficStore, Transport,
};

use crate::http::{serve, AppState};
use crate::session::{run_session, SessionConfig, SessionOutcome, WriterSink};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("invalid query: {0}")]
    Query(String),
}

#[derive(Debug, Parser)]
#[command(name = "homeviz", version, about = "Home-network traffic store and replay server")]
pub struct Cli {
    #[command(flatten)]
    pub store: StoreArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Directory holding the segment logs.
    #[arg(long, global = true, default_value = "homeviz-data")]
    pub data_dir: PathBuf,
    /// Home network prefix; repeatable. Defaults to private and link-local space.
    #[arg(long = "lan-cidr", global = true)]
    pub lan_cidrs: Vec<String>,
    /// Router MAC, marked as the gateway from the first packet.
    #[arg(long, global = true)]
    pub gateway_mac: Option<MacAddr>,
    /// OUI vendor table (`AABBCC<TAB>vendor` lines) replacing the bundled one.
    #[arg(long, global = true)]
    pub oui_db: Option<PathBuf>,
    /// Geo prefix table replacing the bundled one.
    #[arg(long, global = true)]
    pub geo_db: Option<PathBuf>,
    /// Cap on stored segment bytes.
    #[arg(long, global = true)]
    pub max_bytes: Option<u64>,
}

impl StoreArgs {
    pub fn resolver(&self) -> Result<IdentityResolver, IdentityError> {
        let lan = if self.lan_cidrs.is_empty() {
            let base = LanConfig::default();
            LanConfig::new(base.prefixes().to_vec(), self.gateway_mac)?
        } else {
            LanConfig::from_cidrs(&self.lan_cidrs, self.gateway_mac)?
        };
        let oui = match &self.oui_db {
            Some(p) => Arc::new(OuiRegistry::load(p)?),
            None => OuiRegistry::bundled(),
        };
        let geo = match &self.geo_db {
            Some(p) => Arc::new(GeoDb::load(p)?),
            None => GeoDb::bundled(),
        };
        Ok(IdentityResolver::new(lan, oui, geo))
    }

    pub fn open(&self) -> Result<TrafficStore, CliError> {
        let config = StoreConfig {
            max_bytes: self.max_bytes,
            ..StoreConfig::default()
        };
        Ok(TrafficStore::open(&self.data_dir, self.resolver()?, config)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve /stream, /ingest, /devices and /analytics.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
    },
    /// Ingest a classic pcap file and print the JSON report.
    Ingest { file: PathBuf },
    /// Run one query and print its frames as NDJSON.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Inclusive start: decimal epoch seconds or RFC 3339.
    #[arg(long, value_parser = parse_time)]
    pub from: Option<Timestamp>,
    /// Exclusive end: decimal epoch seconds or RFC 3339.
    #[arg(long, value_parser = parse_time)]
    pub to: Option<Timestamp>,
    /// Device key such as `mac:aa:bb:cc:dd:ee:ff` or `ip:8.8.8.8`.
    #[arg(long)]
    pub device: Option<DeviceKey>,
    /// Application or transport protocol; repeatable. `OTHER` means the
    /// application protocol.
    #[arg(long = "proto", value_parser = parse_proto)]
    pub protos: Vec<Proto>,
    /// Replay speed; 0 prints without pacing.
    #[arg(long, default_value_t = 0.0)]
    pub scale: f64,
    #[arg(long)]
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proto {
    App(AppProtocol),
    Transport(Transport),
}

pub fn parse_proto(s: &str) -> Result<Proto, String> {
    let upper = s.to_ascii_uppercase();
    if let Some(a) = AppProtocol::ALL.into_iter().find(|a| a.name() == upper) {
        return Ok(Proto::App(a));
    }
    if let Some(t) = Transport::ALL.into_iter().find(|t| t.name() == upper) {
        return Ok(Proto::Transport(t));
    }
    Err(format!("unknown protocol {s:?}"))
}

/// Accepts `1700000000.25` style epoch seconds or an RFC 3339 date-time.
pub fn parse_time(s: &str) -> Result<Timestamp, String> {
    if let Ok(t) = s.parse::<Timestamp>() {
        return Ok(t);
    }
    let dt = chrono::DateTime::parse_from_rfc3339(s).map_err(|e| format!("invalid time {s:?}: {e}"))?;
    let secs = u64::try_from(dt.timestamp()).map_err(|_| format!("time {s:?} precedes the Unix epoch"))?;
    Ok(Timestamp::from_parts(secs, dt.timestamp_subsec_nanos()))
}

impl QueryArgs {
    pub fn to_query(&self) -> TrafficQuery {
        let mut q = TrafficQuery {
            from: self.from,
            to: self.to,
            device: self.device,
            limit: self.limit,
            time_scale: self.scale,
            ..TrafficQuery::default()
        };
        for p in &self.protos {
            match *p {
                Proto::App(a) => {
                    q.apps.get_or_insert_with(Default::default).insert(a);
                }
                Proto::Transport(t) => {
                    q.transports.get_or_insert_with(Default::default).insert(t);
                }
            }
        }
        q
    }
}

pub async fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { listen } => {
            let store = Arc::new(cli.store.open()?);
            let listener = tokio::net::TcpListener::bind(listen).await?;
            tracing::info!(addr = %listener.local_addr()?, dir = %store.dir().display(), "listening");
            serve(listener, AppState::new(store), async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
            Ok(())
        }
        Command::Ingest { file } => {
            let store = cli.store.open()?;
            let report = tokio::task::spawn_blocking(move || -> Result<_, CliError> {
                let f = io::BufReader::new(std::fs::File::open(&file)?);
                Ok(homeviz_core::ingest_capture(&store, f)?)
            })
            .await
            .map_err(io::Error::other)??;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Query(args) => {
            let store = cli.store.open()?;
            let query = args.to_query();
            query.validate().map_err(|e| CliError::Query(e.0))?;
            let outcome = tokio::task::spawn_blocking(move || {
                let mut sink = WriterSink(BufWriter::new(io::stdout().lock()));
                run_session(store.snapshot(), Ok(query), &mut sink, &SessionConfig::default(), None)
            })
            .await
            .map_err(io::Error::other)?;
            match outcome {
                SessionOutcome::Completed { .. } | SessionOutcome::Rejected => Ok(()),
                SessionOutcome::Cancelled => Err(io::Error::from(io::ErrorKind::BrokenPipe).into()),
            }
        }
    }
}
