//! IP/TCP parsing and per-direction byte-stream reassembly.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

/// One TCP segment with enough metadata to reassemble and timestamp it.
#[derive(Debug, Clone)]
pub(crate) struct TcpSegment {
    pub ts_us: u64,
    pub pkt_index: usize,
    pub src: (IpAddr, u16),
    pub dst: (IpAddr, u16),
    pub seq: u32,
    pub syn: bool,
    pub payload: Vec<u8>,
}

/// Parses an IPv4 or IPv6 packet carrying TCP. Fragments, extension
/// headers, and other transports yield None (they cannot carry the streams
/// we reassemble, and unmatched traffic is simply ignored).
pub(crate) fn parse_ip_packet(ts_us: u64, pkt_index: usize, ip: &[u8]) -> Option<TcpSegment> {
    if ip.is_empty() {
        return None;
    }
    let version = ip[0] >> 4;
    let (src, dst, tcp) = match version {
        4 => {
            if ip.len() < 20 {
                return None;
            }
            let ihl = usize::from(ip[0] & 0x0f) * 4;
            let total_len = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
            let flags_frag = u16::from_be_bytes([ip[6], ip[7]]);
            let more_fragments = flags_frag & 0x2000 != 0;
            let frag_offset = flags_frag & 0x1fff;
            if ihl < 20 || total_len < ihl || total_len > ip.len() {
                return None;
            }
            if more_fragments || frag_offset != 0 || ip[9] != 6 {
                return None;
            }
            let src = IpAddr::V4(Ipv4Addr::from(<[u8; 4]>::try_from(&ip[12..16]).unwrap()));
            let dst = IpAddr::V4(Ipv4Addr::from(<[u8; 4]>::try_from(&ip[16..20]).unwrap()));
            // total_len trims Ethernet's minimum-frame padding.
            (src, dst, &ip[ihl..total_len])
        }
        6 => {
            if ip.len() < 40 {
                return None;
            }
            let payload_len = usize::from(u16::from_be_bytes([ip[4], ip[5]]));
            if ip[6] != 6 || 40 + payload_len > ip.len() {
                return None;
            }
            let src = IpAddr::V6(Ipv6Addr::from(<[u8; 16]>::try_from(&ip[8..24]).unwrap()));
            let dst = IpAddr::V6(Ipv6Addr::from(<[u8; 16]>::try_from(&ip[24..40]).unwrap()));
            (src, dst, &ip[40..40 + payload_len])
        }
        _ => return None,
    };
    if tcp.len() < 20 {
        return None;
    }
    let src_port = u16::from_be_bytes([tcp[0], tcp[1]]);
    let dst_port = u16::from_be_bytes([tcp[2], tcp[3]]);
    let seq = u32::from_be_bytes([tcp[4], tcp[5], tcp[6], tcp[7]]);
    let data_off = usize::from(tcp[12] >> 4) * 4;
    if data_off < 20 || data_off > tcp.len() {
        return None;
    }
    let syn = tcp[13] & 0x02 != 0;
    Some(TcpSegment {
        ts_us,
        pkt_index,
        src: (src, src_port),
        dst: (dst, dst_port),
        seq,
        syn,
        payload: tcp[data_off..].to_vec(),
    })
}

/// One direction of a TCP flow, reassembled strictly in order. Each
/// contributed byte range remembers the packet that carried it so TLS
/// records can be timestamped by their first header byte.
#[derive(Debug, Default)]
pub(crate) struct DirectedStream {
    pub bytes: Vec<u8>,
    /// (start offset in `bytes`, ts_us, pkt_index) per contributing segment.
    chunks: Vec<(usize, u64, usize)>,
    next_seq: Option<u32>,
}

impl DirectedStream {
    /// Appends a segment. Pure retransmissions are dropped, partial
    /// overlaps keep only the new tail; a sequence gap is an error because
    /// reassembly is in-order only.
    pub(crate) fn push(&mut self, seg: &TcpSegment) -> Result<(), String> {
        if seg.syn {
            self.next_seq = Some(seg.seq.wrapping_add(1));
            return Ok(());
        }
        let expected = *self.next_seq.get_or_insert(seg.seq);
        if seg.payload.is_empty() {
            return Ok(());
        }
        // Wraparound-safe comparison: differences in the lower half-range
        // are "ahead", the upper half-range means old data.
        let diff = seg.seq.wrapping_sub(expected);
        if diff == 0 {
            self.append(&seg.payload, seg);
        } else if diff > u32::MAX / 2 {
            let overlap = expected.wrapping_sub(seg.seq) as usize;
            if overlap < seg.payload.len() {
                self.append(&seg.payload[overlap..], seg);
            } // else: duplicate of already-delivered data
        } else {
            return Err(format!(
                "transport stream gap: expected seq {expected}, got {}",
                seg.seq
            ));
        }
        Ok(())
    }

    fn append(&mut self, data: &[u8], seg: &TcpSegment) {
        self.chunks.push((self.bytes.len(), seg.ts_us, seg.pkt_index));
        self.bytes.extend_from_slice(data);
        self.next_seq = Some(seg.seq.wrapping_add(seg.payload.len() as u32));
    }

    /// Timestamp and packet index of the segment that delivered the byte at
    /// `offset`.
    pub(crate) fn ts_at(&self, offset: usize) -> (u64, usize) {
        debug_assert!(offset < self.bytes.len());
        let i = self
            .chunks
            .partition_point(|&(start, _, _)| start <= offset)
            .saturating_sub(1);
        let (_, ts, pkt) = self.chunks[i];
        (ts, pkt)
    }
}
