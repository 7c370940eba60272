//! Drives the ingest subcommand on a synthesized capture end to end.

use std::path::Path;
use std::process::Command;

const CLIENT_IP: [u8; 4] = [10, 0, 0, 2];
const RESOLVER_IP: [u8; 4] = [8, 8, 8, 8];

fn tls_record(content_type: u8, len: usize) -> Vec<u8> {
    let mut out = vec![content_type, 3, 3];
    out.extend_from_slice(&(len as u16).to_be_bytes());
    out.extend(std::iter::repeat_n(0xab, len));
    out
}

fn frame(to_resolver: bool, seq: u32, syn: bool, payload: &[u8]) -> Vec<u8> {
    let (src_ip, src_port, dst_ip, dst_port) = if to_resolver {
        (CLIENT_IP, 40123u16, RESOLVER_IP, 853u16)
    } else {
        (RESOLVER_IP, 853, CLIENT_IP, 40123)
    };
    let total_len = 40 + payload.len();
    let mut out = vec![0u8; 14];
    out[6..12].copy_from_slice(&[2, 0, 0, 0, 0, 1]);
    out[12..14].copy_from_slice(&0x0800u16.to_be_bytes());
    let mut ip = vec![0u8; total_len];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&(total_len as u16).to_be_bytes());
    ip[8] = 64;
    ip[9] = 6;
    ip[12..16].copy_from_slice(&src_ip);
    ip[16..20].copy_from_slice(&dst_ip);
    let tcp = &mut ip[20..];
    tcp[0..2].copy_from_slice(&src_port.to_be_bytes());
    tcp[2..4].copy_from_slice(&dst_port.to_be_bytes());
    tcp[4..8].copy_from_slice(&seq.to_be_bytes());
    tcp[12] = 5 << 4;
    tcp[13] = if syn { 0x02 } else { 0x10 };
    tcp[20..].copy_from_slice(payload);
    out.extend(ip);
    out
}

/// One DoT session (SYNs, handshake, two app-data records) as a classic pcap.
fn capture() -> Vec<u8> {
    let mut seq_c = 1000u32;
    let mut seq_r = 9000u32;
    let mut packets: Vec<(u64, Vec<u8>)> = vec![
        (0, frame(true, seq_c, true, &[])),
        (100, frame(false, seq_r, true, &[])),
    ];
    seq_c += 1;
    seq_r += 1;
    let mut send = |ts_us: u64, to_resolver: bool, bytes: Vec<u8>| {
        if to_resolver {
            packets.push((ts_us, frame(true, seq_c, false, &bytes)));
            seq_c += bytes.len() as u32;
        } else {
            packets.push((ts_us, frame(false, seq_r, false, &bytes)));
            seq_r += bytes.len() as u32;
        }
    };
    send(200, true, tls_record(22, 300));
    send(90_000, false, tls_record(22, 2800));
    send(150_000, true, tls_record(22, 64));
    send(1_000_000, true, tls_record(23, 154));
    send(1_236_500, false, tls_record(23, 204));

    let mut out = Vec::new();
    out.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    out.extend_from_slice(&262_144u32.to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes()); // Ethernet
    for (ts_us, data) in &packets {
        out.extend_from_slice(&((ts_us / 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&((ts_us % 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
    }
    out
}

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dnsfp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn ingest_produces_a_labeled_trace() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("launch.pcap"), capture()).unwrap();
    let out = run(
        tmp.path(),
        &[
            "ingest", "--pcap", "launch.pcap", "--resolver-ip", "8.8.8.8", "--port", "853",
            "--protocol", "dot", "--app", "demo", "--out", "trace.jsonl",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let jsonl = std::fs::read_to_string(tmp.path().join("trace.jsonl")).unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 1);
    let trace: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(trace["app"], "demo");
    assert_eq!(trace["protocol"], "dot");
    assert_eq!(trace["resolver"], "8.8.8.8");
    assert_eq!(trace["trace_id"], "launch");
    // Handshake records are dropped; times rebase to the first kept record.
    let events = trace["events"].as_array().unwrap();
    assert_eq!(events.len(), 2);
    assert_eq!(events[0]["t_ms"], 0);
    assert_eq!(events[0]["dir"], "c2r");
    assert_eq!(events[0]["size"], 154);
    assert_eq!(events[1]["t_ms"], 236);
    assert_eq!(events[1]["dir"], "r2c");
    assert_eq!(events[1]["size"], 204);
}

#[test]
fn ingest_with_no_matching_traffic_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("launch.pcap"), capture()).unwrap();
    let out = run(
        tmp.path(),
        &[
            "ingest", "--pcap", "launch.pcap", "--resolver-ip", "9.9.9.9", "--port", "853",
            "--protocol", "dot", "--app", "demo", "--out", "trace.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
