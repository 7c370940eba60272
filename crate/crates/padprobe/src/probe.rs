//! Sends padded queries to live DoT and DoH resolvers.

use std::fmt;
use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use dnsfp::Protocol;
use rustls::client::danger::{HandshakeSignatureValid, ServerCertVerified, ServerCertVerifier};
use rustls::pki_types::{CertificateDer, ServerName, UnixTime};
use rustls::{ClientConnection, DigitallySignedStruct, SignatureScheme, StreamOwned};
use serde::{Deserialize, Serialize};

use crate::classify::{classify_padding, Verdict};
use crate::wire::{build_query, parse_message, DnsQuerySpec, QType};

pub const DEFAULT_DOT_PORT: u16 = 853;
pub const DEFAULT_DOH_PORT: u16 = 443;
pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;

const DNS_MESSAGE_MEDIA_TYPE: &str = "application/dns-message";

/// HTTP method a DoH target is queried with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
        })
    }
}

impl FromStr for HttpMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Ok(HttpMethod::Get),
            "POST" => Ok(HttpMethod::Post),
            other => Err(format!("unknown HTTP method {other:?}")),
        }
    }
}

/// One resolver endpoint to audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeTarget {
    pub resolver_id: String,
    pub protocol: Protocol,
    pub host: String,
    pub port: u16,
    /// Endpoint URL, DoH only.
    pub doh_url: Option<String>,
    /// Ignored for DoT targets.
    pub method: HttpMethod,
    /// Name presented for TLS verification when it differs from `host`.
    pub tls_server_name: Option<String>,
    pub timeout_ms: u64,
    /// Skip certificate verification; only sensible against test servers.
    pub insecure: bool,
}

impl ProbeTarget {
    pub fn dot(resolver_id: &str, host: &str) -> Self {
        ProbeTarget {
            resolver_id: resolver_id.to_string(),
            protocol: Protocol::Dot,
            host: host.to_string(),
            port: DEFAULT_DOT_PORT,
            doh_url: None,
            method: HttpMethod::Post,
            tls_server_name: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            insecure: false,
        }
    }

    pub fn doh(resolver_id: &str, host: &str, url: &str) -> Self {
        ProbeTarget {
            resolver_id: resolver_id.to_string(),
            protocol: Protocol::Doh,
            host: host.to_string(),
            port: DEFAULT_DOH_PORT,
            doh_url: Some(url.to_string()),
            method: HttpMethod::Post,
            tls_server_name: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            insecure: false,
        }
    }
}

/// A parsed response to a single probe query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    /// Total DNS message length in bytes, the quantity padding acts on.
    pub response_len: usize,
    pub rcode: u16,
    pub padding_present: bool,
    pub padding_len: Option<u16>,
}

/// What happened to one query against one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub qname: String,
    pub qtype: QType,
    pub query_len: usize,
    pub response: Option<ResponseRecord>,
    pub error: Option<String>,
}

impl QueryOutcome {
    fn pending(spec: &DnsQuerySpec) -> Self {
        QueryOutcome {
            qname: spec.qname.clone(),
            qtype: spec.qtype,
            query_len: 0,
            response: None,
            error: None,
        }
    }
}

/// Everything learned about one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub target: ProbeTarget,
    pub outcomes: Vec<QueryOutcome>,
    pub verdict: Verdict,
    /// First transport-level error, kept when nothing at all got through.
    pub diagnostic: Option<String>,
}

impl ProbeResult {
    fn new(target: &ProbeTarget, outcomes: Vec<QueryOutcome>) -> Self {
        let verdict = classify_padding(&outcomes);
        let diagnostic = if verdict == Verdict::Invalid {
            outcomes.iter().find_map(|o| o.error.clone())
        } else {
            None
        };
        ProbeResult {
            target: target.clone(),
            outcomes,
            verdict,
            diagnostic,
        }
    }
}

/// Queries of varying name length and type, so padded and unpadded response
/// sizes get a chance to differ across the batch.
pub fn default_probe_specs() -> Vec<DnsQuerySpec> {
    vec![
        DnsQuerySpec::new("example.com", QType::A),
        DnsQuerySpec::new("www.wikipedia.org", QType::Aaaa),
        DnsQuerySpec::new("padding-audit-with-a-deliberately-long-name.example.net", QType::Txt),
        DnsQuerySpec::new("cloudflare.com", QType::Ns),
    ]
}

// Accepts whatever certificate the server presents. Signatures are still
// checked so garbage on the wire fails loudly rather than quietly.
#[derive(Debug)]
struct AcceptAnyCert(rustls::crypto::WebPkiSupportedAlgorithms);

impl AcceptAnyCert {
    fn new() -> Self {
        AcceptAnyCert(rustls::crypto::ring::default_provider().signature_verification_algorithms)
    }
}

impl ServerCertVerifier for AcceptAnyCert {
    fn verify_server_cert(
        &self,
        _end_entity: &CertificateDer<'_>,
        _intermediates: &[CertificateDer<'_>],
        _server_name: &ServerName<'_>,
        _ocsp_response: &[u8],
        _now: UnixTime,
    ) -> Result<ServerCertVerified, rustls::Error> {
        Ok(ServerCertVerified::assertion())
    }

    fn verify_tls12_signature(
        &self,
        message: &[u8],
        cert: &CertificateDer<'_>,
        dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        rustls::crypto::verify_tls12_signature(message, cert, dss, &self.0)
    }

    fn verify_tls13_signature(
        &self,
        message: &[u8],
        cert: &CertificateDer<'_>,
        dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        rustls::crypto::verify_tls13_signature(message, cert, dss, &self.0)
    }

    fn supported_verify_schemes(&self) -> Vec<SignatureScheme> {
        self.0.supported_schemes()
    }
}

fn tls_client_config(insecure: bool) -> Arc<rustls::ClientConfig> {
    let config = if insecure {
        rustls::ClientConfig::builder()
            .dangerous()
            .with_custom_certificate_verifier(Arc::new(AcceptAnyCert::new()))
            .with_no_client_auth()
    } else {
        let mut roots = rustls::RootCertStore::empty();
        roots.extend(webpki_roots::TLS_SERVER_ROOTS.iter().cloned());
        rustls::ClientConfig::builder()
            .with_root_certificates(roots)
            .with_no_client_auth()
    };
    Arc::new(config)
}

type DotStream = StreamOwned<ClientConnection, TcpStream>;

fn dot_connect(target: &ProbeTarget, config: Arc<rustls::ClientConfig>) -> Result<DotStream, String> {
    let timeout = Duration::from_millis(target.timeout_ms);
    let addr = (target.host.as_str(), target.port)
        .to_socket_addrs()
        .map_err(|e| format!("resolve {}: {e}", target.host))?
        .next()
        .ok_or_else(|| format!("no address for {}", target.host))?;
    let tcp = TcpStream::connect_timeout(&addr, timeout).map_err(|e| format!("connect {addr}: {e}"))?;
    tcp.set_read_timeout(Some(timeout))
        .and_then(|()| tcp.set_write_timeout(Some(timeout)))
        .map_err(|e| format!("socket timeouts: {e}"))?;
    let sni = target.tls_server_name.clone().unwrap_or_else(|| target.host.clone());
    let name = ServerName::try_from(sni.clone()).map_err(|e| format!("bad server name {sni:?}: {e}"))?;
    let conn = ClientConnection::new(config, name).map_err(|e| format!("tls client: {e}"))?;
    Ok(StreamOwned::new(conn, tcp))
}

// One query over an established DoT stream, two-byte length framing each way.
fn dot_exchange(stream: &mut DotStream, query: &[u8], txn_id: u16) -> Result<ResponseRecord, String> {
    let frame = u16::try_from(query.len()).map_err(|_| "query exceeds frame size".to_string())?;
    stream
        .write_all(&frame.to_be_bytes())
        .and_then(|()| stream.write_all(query))
        .and_then(|()| stream.flush())
        .map_err(|e| format!("send: {e}"))?;
    let mut len_buf = [0u8; 2];
    stream.read_exact(&mut len_buf).map_err(|e| format!("recv length: {e}"))?;
    let mut body = vec![0u8; u16::from_be_bytes(len_buf) as usize];
    stream.read_exact(&mut body).map_err(|e| format!("recv body: {e}"))?;
    response_record(&body, txn_id)
}

fn response_record(bytes: &[u8], txn_id: u16) -> Result<ResponseRecord, String> {
    let parsed = parse_message(bytes).map_err(|e| format!("parse response: {e}"))?;
    if !parsed.is_response {
        return Err("message is not a response".into());
    }
    if parsed.txn_id != txn_id {
        return Err(format!(
            "transaction id mismatch: sent {txn_id}, got {}",
            parsed.txn_id
        ));
    }
    Ok(ResponseRecord {
        response_len: parsed.total_len,
        rcode: parsed.rcode,
        padding_present: parsed.padding.is_some(),
        padding_len: parsed.padding,
    })
}

/// Audit one DoT resolver. Transport failures mark individual queries and
/// never panic; the next query gets a fresh connection.
pub fn probe_dot(target: &ProbeTarget, specs: &[DnsQuerySpec]) -> ProbeResult {
    let config = tls_client_config(target.insecure);
    let mut stream: Option<DotStream> = None;
    let mut outcomes = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let mut outcome = QueryOutcome::pending(spec);
        let txn_id = i as u16;
        let query = match build_query(spec, txn_id) {
            Ok(q) => q,
            Err(e) => {
                outcome.error = Some(e.to_string());
                outcomes.push(outcome);
                continue;
            }
        };
        outcome.query_len = query.len();

        if stream.is_none() {
            match dot_connect(target, config.clone()) {
                Ok(s) => stream = Some(s),
                Err(e) => {
                    outcome.error = Some(e);
                    outcomes.push(outcome);
                    continue;
                }
            }
        }
        match dot_exchange(stream.as_mut().expect("connected above"), &query, txn_id) {
            Ok(record) => outcome.response = Some(record),
            Err(e) => {
                outcome.error = Some(e);
                stream = None;
            }
        }
        outcomes.push(outcome);
    }
    ProbeResult::new(target, outcomes)
}

fn doh_agent(target: &ProbeTarget) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(target.timeout_ms)))
        .tls_config(
            ureq::tls::TlsConfig::builder()
                .disable_verification(target.insecure)
                .build(),
        )
        .build()
        .new_agent()
}

fn doh_exchange(
    agent: &ureq::Agent,
    url: &str,
    method: HttpMethod,
    query: &[u8],
) -> Result<ResponseRecord, String> {
    let mut response = match method {
        HttpMethod::Post => agent
            .post(url)
            .header("content-type", DNS_MESSAGE_MEDIA_TYPE)
            .header("accept", DNS_MESSAGE_MEDIA_TYPE)
            .send(query),
        HttpMethod::Get => {
            let encoded = URL_SAFE_NO_PAD.encode(query);
            let sep = if url.contains('?') { '&' } else { '?' };
            agent
                .get(format!("{url}{sep}dns={encoded}"))
                .header("accept", DNS_MESSAGE_MEDIA_TYPE)
                .call()
        }
    }
    .map_err(|e| format!("http: {e}"))?;
    let body = response
        .body_mut()
        .read_to_vec()
        .map_err(|e| format!("read body: {e}"))?;
    // RFC 8484 wants transaction id zero on the wire, which is what we sent.
    response_record(&body, 0)
}

/// Audit one DoH resolver.
pub fn probe_doh(target: &ProbeTarget, specs: &[DnsQuerySpec]) -> ProbeResult {
    let Some(url) = target.doh_url.clone() else {
        let outcomes = specs
            .iter()
            .map(|s| {
                let mut o = QueryOutcome::pending(s);
                o.error = Some("target has no doh_url".into());
                o
            })
            .collect();
        return ProbeResult::new(target, outcomes);
    };
    let agent = doh_agent(target);
    let mut outcomes = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut outcome = QueryOutcome::pending(spec);
        match build_query(spec, 0) {
            Ok(query) => {
                outcome.query_len = query.len();
                match doh_exchange(&agent, &url, target.method, &query) {
                    Ok(record) => outcome.response = Some(record),
                    Err(e) => outcome.error = Some(e),
                }
            }
            Err(e) => outcome.error = Some(e.to_string()),
        }
        outcomes.push(outcome);
    }
    ProbeResult::new(target, outcomes)
}

/// Audit one target over whichever protocol it speaks.
pub fn probe_target(target: &ProbeTarget, specs: &[DnsQuerySpec]) -> ProbeResult {
    match target.protocol {
        Protocol::Dot => probe_dot(target, specs),
        Protocol::Doh => probe_doh(target, specs),
    }
}

/// Audit many targets, at most `max_concurrent` in flight, results in input
/// order.
pub fn probe_all(
    targets: &[ProbeTarget],
    specs: &[DnsQuerySpec],
    max_concurrent: usize,
) -> Vec<ProbeResult> {
    if targets.is_empty() {
        return Vec::new();
    }
    let workers = max_concurrent.clamp(1, targets.len());
    let next = AtomicUsize::new(0);
    let mut indexed: Vec<(usize, ProbeResult)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= targets.len() {
                            break;
                        }
                        local.push((i, probe_target(&targets[i], specs)));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("probe worker panicked"))
            .collect()
    });
    indexed.sort_unstable_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, r)| r).collect()
}
