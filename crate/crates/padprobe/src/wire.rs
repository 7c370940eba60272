//! DNS wire-format encoding and parsing for padding probes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// EDNS0 option code assigned to the Padding option.
pub const PADDING_OPTION_CODE: u16 = 12;
/// Resource-record type number of the OPT pseudo-record.
pub const OPT_RR_TYPE: u16 = 41;
/// Recommended padding block for queries, in bytes.
pub const QUERY_PAD_BLOCK: u16 = 128;
/// Recommended padding block for responses, in bytes.
pub const RESPONSE_PAD_BLOCK: u16 = 468;

// Fixed part of an OPT pseudo-record: root name, TYPE, CLASS, TTL, RDLENGTH.
const OPT_FIXED_LEN: usize = 11;
// An EDNS0 option before its data: OPTION-CODE and OPTION-LENGTH.
const OPTION_HEADER_LEN: usize = 4;
const HEADER_LEN: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("domain name does not fit in wire format: {0:?}")]
    NameTooLong(String),
    #[error("cannot pad a {len}-byte message to a multiple of {block}")]
    UnencodableBlock { len: usize, block: u16 },
    #[error("malformed message: {0}")]
    Malformed(String),
}

fn truncated(what: &str) -> WireError {
    WireError::Malformed(format!("truncated {what}"))
}

/// Query types the prober knows how to name on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QType {
    A,
    Ns,
    Cname,
    Soa,
    Ptr,
    Mx,
    Txt,
    Aaaa,
    Srv,
    Https,
}

impl QType {
    /// The RR TYPE number used on the wire.
    pub fn code(self) -> u16 {
        match self {
            QType::A => 1,
            QType::Ns => 2,
            QType::Cname => 5,
            QType::Soa => 6,
            QType::Ptr => 12,
            QType::Mx => 15,
            QType::Txt => 16,
            QType::Aaaa => 28,
            QType::Srv => 33,
            QType::Https => 65,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QType::A => "A",
            QType::Ns => "NS",
            QType::Cname => "CNAME",
            QType::Soa => "SOA",
            QType::Ptr => "PTR",
            QType::Mx => "MX",
            QType::Txt => "TXT",
            QType::Aaaa => "AAAA",
            QType::Srv => "SRV",
            QType::Https => "HTTPS",
        }
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(QType::A),
            "NS" => Ok(QType::Ns),
            "CNAME" => Ok(QType::Cname),
            "SOA" => Ok(QType::Soa),
            "PTR" => Ok(QType::Ptr),
            "MX" => Ok(QType::Mx),
            "TXT" => Ok(QType::Txt),
            "AAAA" => Ok(QType::Aaaa),
            "SRV" => Ok(QType::Srv),
            "HTTPS" => Ok(QType::Https),
            other => Err(format!("unknown query type {other:?}")),
        }
    }
}

/// One query the prober will send, padded to `pad_block`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsQuerySpec {
    pub qname: String,
    pub qtype: QType,
    /// Pad the whole query to the smallest multiple of this many bytes.
    pub pad_block: u16,
    /// Advertised EDNS0 UDP payload size.
    pub edns_udp_size: u16,
    /// Set the DO bit to request DNSSEC records.
    pub want_dnssec: bool,
}

impl DnsQuerySpec {
    pub fn new(qname: &str, qtype: QType) -> Self {
        DnsQuerySpec {
            qname: qname.to_string(),
            qtype,
            pad_block: QUERY_PAD_BLOCK,
            edns_udp_size: 4096,
            want_dnssec: false,
        }
    }
}

fn encode_qname(name: &str) -> Result<Vec<u8>, WireError> {
    let trimmed = name.strip_suffix('.').unwrap_or(name);
    let mut wire = Vec::with_capacity(trimmed.len() + 2);
    if !trimmed.is_empty() {
        for label in trimmed.split('.') {
            if label.is_empty() {
                return Err(WireError::Malformed(format!("empty label in {name:?}")));
            }
            if label.len() > 63 {
                return Err(WireError::NameTooLong(name.to_string()));
            }
            wire.push(label.len() as u8);
            wire.extend_from_slice(label.as_bytes());
        }
    }
    wire.push(0);
    if wire.len() > 255 {
        return Err(WireError::NameTooLong(name.to_string()));
    }
    Ok(wire)
}

/// Encode a recursive query carrying an EDNS0 padding option.
///
/// The padding data is sized so the whole message lands exactly on the
/// smallest multiple of `spec.pad_block` that can hold it; padding bytes are
/// zero. Even a zero-length option occupies four bytes, so a message that
/// would fit a block without the option can still spill into the next one.
pub fn build_query(spec: &DnsQuerySpec, txn_id: u16) -> Result<Vec<u8>, WireError> {
    if spec.pad_block == 0 {
        return Err(WireError::UnencodableBlock { len: 0, block: 0 });
    }
    let qname = encode_qname(&spec.qname)?;

    let mut msg = Vec::with_capacity(spec.pad_block as usize);
    msg.extend_from_slice(&txn_id.to_be_bytes());
    msg.extend_from_slice(&0x0100u16.to_be_bytes()); // flags: RD only
    msg.extend_from_slice(&1u16.to_be_bytes()); // QDCOUNT
    msg.extend_from_slice(&0u16.to_be_bytes()); // ANCOUNT
    msg.extend_from_slice(&0u16.to_be_bytes()); // NSCOUNT
    msg.extend_from_slice(&1u16.to_be_bytes()); // ARCOUNT
    msg.extend_from_slice(&qname);
    msg.extend_from_slice(&spec.qtype.code().to_be_bytes());
    msg.extend_from_slice(&1u16.to_be_bytes()); // class IN

    let base_len = msg.len() + OPT_FIXED_LEN + OPTION_HEADER_LEN;
    let block = spec.pad_block as usize;
    let target = base_len.div_ceil(block) * block;
    let data_len = target - base_len;
    if OPTION_HEADER_LEN + data_len > u16::MAX as usize {
        return Err(WireError::UnencodableBlock {
            len: base_len,
            block: spec.pad_block,
        });
    }

    msg.push(0); // OPT owner: root
    msg.extend_from_slice(&OPT_RR_TYPE.to_be_bytes());
    msg.extend_from_slice(&spec.edns_udp_size.to_be_bytes());
    let ttl: u32 = if spec.want_dnssec { 0x0000_8000 } else { 0 };
    msg.extend_from_slice(&ttl.to_be_bytes());
    msg.extend_from_slice(&((OPTION_HEADER_LEN + data_len) as u16).to_be_bytes());
    msg.extend_from_slice(&PADDING_OPTION_CODE.to_be_bytes());
    msg.extend_from_slice(&(data_len as u16).to_be_bytes());
    msg.resize(msg.len() + data_len, 0);

    debug_assert_eq!(msg.len(), target);
    Ok(msg)
}

/// The parts of a DNS message the prober cares about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedMessage {
    pub txn_id: u16,
    pub is_response: bool,
    /// Extended RCODE, including the high bits from the OPT TTL.
    pub rcode: u16,
    /// Name from the first question, or empty if there is none.
    pub qname: String,
    pub qtype: u16,
    pub answer_count: u16,
    /// Whether any OPT pseudo-record is present.
    pub opt_present: bool,
    /// OPTION-LENGTH of the first padding option, if one is present.
    pub padding: Option<u16>,
    pub total_len: usize,
}

fn be16(bytes: &[u8], pos: usize, what: &str) -> Result<u16, WireError> {
    let b = bytes.get(pos..pos + 2).ok_or_else(|| truncated(what))?;
    Ok(u16::from_be_bytes([b[0], b[1]]))
}

fn be32(bytes: &[u8], pos: usize, what: &str) -> Result<u32, WireError> {
    let b = bytes.get(pos..pos + 4).ok_or_else(|| truncated(what))?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

// Reads a possibly compressed name starting at `start` and returns it in
// presentation form along with the position just past the name.
fn read_name(bytes: &[u8], start: usize) -> Result<(String, usize), WireError> {
    let mut labels: Vec<String> = Vec::new();
    let mut pos = start;
    let mut after: Option<usize> = None;
    let mut jumps = 0u32;
    let mut wire_len = 1usize;
    loop {
        let len = *bytes.get(pos).ok_or_else(|| truncated("name"))? as usize;
        match len & 0xc0 {
            0xc0 => {
                let lo = *bytes.get(pos + 1).ok_or_else(|| truncated("compression pointer"))?;
                if after.is_none() {
                    after = Some(pos + 2);
                }
                let dest = ((len & 0x3f) << 8) | lo as usize;
                if dest >= pos {
                    return Err(WireError::Malformed("forward compression pointer".into()));
                }
                pos = dest;
                jumps += 1;
                if jumps > 32 {
                    return Err(WireError::Malformed("compression pointer loop".into()));
                }
            }
            0x00 if len == 0 => {
                return Ok((labels.join("."), after.unwrap_or(pos + 1)));
            }
            0x00 => {
                let label = bytes
                    .get(pos + 1..pos + 1 + len)
                    .ok_or_else(|| truncated("label"))?;
                labels.push(String::from_utf8_lossy(label).into_owned());
                wire_len += 1 + len;
                if wire_len > 255 {
                    return Err(WireError::Malformed("name exceeds 255 bytes".into()));
                }
                pos += 1 + len;
            }
            _ => return Err(WireError::Malformed(format!("unsupported label type {len:#04x}"))),
        }
    }
}

/// Parse a query or response, extracting the fields relevant to padding.
pub fn parse_message(bytes: &[u8]) -> Result<ParsedMessage, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(truncated("header"));
    }
    let txn_id = u16::from_be_bytes([bytes[0], bytes[1]]);
    let flags = u16::from_be_bytes([bytes[2], bytes[3]]);
    let qdcount = u16::from_be_bytes([bytes[4], bytes[5]]);
    let ancount = u16::from_be_bytes([bytes[6], bytes[7]]);
    let nscount = u16::from_be_bytes([bytes[8], bytes[9]]);
    let arcount = u16::from_be_bytes([bytes[10], bytes[11]]);

    let mut pos = HEADER_LEN;
    let mut qname = String::new();
    let mut qtype = 0u16;
    for i in 0..qdcount {
        let (name, after) = read_name(bytes, pos)?;
        let t = be16(bytes, after, "question type")?;
        be16(bytes, after + 2, "question class")?;
        pos = after + 4;
        if i == 0 {
            qname = name;
            qtype = t;
        }
    }

    let mut opt_present = false;
    let mut padding: Option<u16> = None;
    let mut ext_rcode_high = 0u8;
    let records = ancount as u32 + nscount as u32 + arcount as u32;
    for _ in 0..records {
        let (_, after) = read_name(bytes, pos)?;
        let rtype = be16(bytes, after, "record type")?;
        be16(bytes, after + 2, "record class")?;
        let ttl = be32(bytes, after + 4, "record ttl")?;
        let rdlen = be16(bytes, after + 8, "record data length")? as usize;
        let rdata_start = after + 10;
        let rdata = bytes
            .get(rdata_start..rdata_start + rdlen)
            .ok_or_else(|| truncated("record data"))?;
        pos = rdata_start + rdlen;

        if rtype == OPT_RR_TYPE {
            opt_present = true;
            ext_rcode_high = (ttl >> 24) as u8;
            let mut opos = 0usize;
            while opos < rdata.len() {
                let code = be16(rdata, opos, "option code")?;
                let olen = be16(rdata, opos + 2, "option length")? as usize;
                if rdata.len() < opos + OPTION_HEADER_LEN + olen {
                    return Err(truncated("option data"));
                }
                if code == PADDING_OPTION_CODE && padding.is_none() {
                    padding = Some(olen as u16);
                }
                opos += OPTION_HEADER_LEN + olen;
            }
        }
    }
    if pos != bytes.len() {
        return Err(WireError::Malformed(format!(
            "{} trailing bytes after last record",
            bytes.len() - pos
        )));
    }

    Ok(ParsedMessage {
        txn_id,
        is_response: flags & 0x8000 != 0,
        rcode: ((ext_rcode_high as u16) << 4) | (flags & 0x000f),
        qname,
        qtype,
        answer_count: ancount,
        opt_present,
        padding,
        total_len: bytes.len(),
    })
}

/// How a built response should be padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponsePadding {
    /// OPT record with no options at all.
    None,
    /// Grow the message to the next multiple of `block` using the given
    /// option code; pass [`PADDING_OPTION_CODE`] for standards-style padding.
    ToBlock { block: u16, option_code: u16 },
    /// Attach an option with exactly `data_len` zero bytes.
    Fixed { option_code: u16, data_len: u16 },
}

/// Build a minimal response to `query`: the question echoed back, no answer
/// records, and an OPT pseudo-record padded as requested. Mock resolvers in
/// the test suite are driven by this.
pub fn build_response(query: &[u8], rcode: u8, padding: ResponsePadding) -> Result<Vec<u8>, WireError> {
    let parsed = parse_message(query)?;
    let qname = encode_qname(&parsed.qname)?;

    let mut msg = Vec::new();
    msg.extend_from_slice(&parsed.txn_id.to_be_bytes());
    let flags = 0x8180u16 | (rcode as u16 & 0x000f); // QR, RD, RA
    msg.extend_from_slice(&flags.to_be_bytes());
    msg.extend_from_slice(&1u16.to_be_bytes()); // QDCOUNT
    msg.extend_from_slice(&0u16.to_be_bytes()); // ANCOUNT
    msg.extend_from_slice(&0u16.to_be_bytes()); // NSCOUNT
    msg.extend_from_slice(&1u16.to_be_bytes()); // ARCOUNT
    msg.extend_from_slice(&qname);
    msg.extend_from_slice(&parsed.qtype.to_be_bytes());
    msg.extend_from_slice(&1u16.to_be_bytes());

    let (option, data_len) = match padding {
        ResponsePadding::None => (None, 0),
        ResponsePadding::Fixed { option_code, data_len } => (Some(option_code), data_len as usize),
        ResponsePadding::ToBlock { block, option_code } => {
            if block == 0 {
                return Err(WireError::UnencodableBlock { len: 0, block: 0 });
            }
            let base = msg.len() + OPT_FIXED_LEN + OPTION_HEADER_LEN;
            let target = base.div_ceil(block as usize) * block as usize;
            (Some(option_code), target - base)
        }
    };
    if OPTION_HEADER_LEN + data_len > u16::MAX as usize {
        return Err(WireError::UnencodableBlock {
            len: msg.len(),
            block: 0,
        });
    }

    msg.push(0);
    msg.extend_from_slice(&OPT_RR_TYPE.to_be_bytes());
    msg.extend_from_slice(&4096u16.to_be_bytes());
    msg.extend_from_slice(&0u32.to_be_bytes());
    match option {
        Some(code) => {
            msg.extend_from_slice(&((OPTION_HEADER_LEN + data_len) as u16).to_be_bytes());
            msg.extend_from_slice(&code.to_be_bytes());
            msg.extend_from_slice(&(data_len as u16).to_be_bytes());
            msg.resize(msg.len() + data_len, 0);
        }
        None => msg.extend_from_slice(&0u16.to_be_bytes()),
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recommended_block_pads_short_query_to_one_block() {
        let spec = DnsQuerySpec::new("example.com", QType::A);
        let msg = build_query(&spec, 0x1234).unwrap();
        assert_eq!(msg.len(), 128);
        assert_eq!(&msg[..2], &[0x12, 0x34]);
        assert_eq!(&msg[2..4], &[0x01, 0x00]);
        // question: 7"example" 3"com" 0, type A, class IN
        let mut q = vec![7u8];
        q.extend_from_slice(b"example");
        q.push(3);
        q.extend_from_slice(b"com");
        q.extend_from_slice(&[0, 0, 1, 0, 1]);
        assert_eq!(&msg[12..12 + q.len()], &q[..]);
    }

    #[test]
    fn option_length_covers_exactly_the_remaining_block() {
        // 40 bytes of header+question+bare OPT leave 88 for the option:
        // 4 bytes of option header and 84 bytes of zeroed data.
        let spec = DnsQuerySpec::new("example.com", QType::A);
        let msg = build_query(&spec, 0).unwrap();
        assert_eq!(msg.len() - 11 - 88, 29); // OPT record starts after the question
        assert_eq!(msg[29], 0); // root owner
        assert_eq!(&msg[30..32], &OPT_RR_TYPE.to_be_bytes());
        assert_eq!(&msg[38..40], &88u16.to_be_bytes()); // RDLENGTH
        assert_eq!(&msg[40..42], &PADDING_OPTION_CODE.to_be_bytes());
        assert_eq!(&msg[42..44], &84u16.to_be_bytes());
        assert!(msg[44..].iter().all(|&b| b == 0));
        assert_eq!(msg[44..].len(), 84);
    }

    #[test]
    fn block_of_one_adds_no_padding_data() {
        let mut spec = DnsQuerySpec::new("example.com", QType::A);
        spec.pad_block = 1;
        let msg = build_query(&spec, 0).unwrap();
        assert_eq!(msg.len(), 44);
        assert_eq!(&msg[40..44], &[0, 12, 0, 0]);
    }

    #[test]
    fn building_is_deterministic() {
        let spec = DnsQuerySpec::new("www.example.org", QType::Txt);
        assert_eq!(build_query(&spec, 7).unwrap(), build_query(&spec, 7).unwrap());
    }

    #[test]
    fn trailing_dot_is_equivalent() {
        let with = build_query(&DnsQuerySpec::new("example.com.", QType::A), 1).unwrap();
        let without = build_query(&DnsQuerySpec::new("example.com", QType::A), 1).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn oversized_names_are_rejected() {
        let label = "x".repeat(64);
        assert_eq!(
            build_query(&DnsQuerySpec::new(&label, QType::A), 0),
            Err(WireError::NameTooLong(label.clone()))
        );
        let long = ["abcdefgh"; 32].join("."); // 288 bytes on the wire
        assert!(matches!(
            build_query(&DnsQuerySpec::new(&long, QType::A), 0),
            Err(WireError::NameTooLong(_))
        ));
        assert!(matches!(
            build_query(&DnsQuerySpec::new("a..b", QType::A), 0),
            Err(WireError::Malformed(_))
        ));
    }

    #[test]
    fn zero_block_is_unencodable() {
        let mut spec = DnsQuerySpec::new("example.com", QType::A);
        spec.pad_block = 0;
        assert!(matches!(
            build_query(&spec, 0),
            Err(WireError::UnencodableBlock { .. })
        ));
    }

    #[test]
    fn queries_round_trip_through_the_parser() {
        let mut spec = DnsQuerySpec::new("probe.example.net", QType::Aaaa);
        spec.want_dnssec = true;
        let msg = build_query(&spec, 0xbeef).unwrap();
        let parsed = parse_message(&msg).unwrap();
        assert_eq!(parsed.txn_id, 0xbeef);
        assert!(!parsed.is_response);
        assert_eq!(parsed.qname, "probe.example.net");
        assert_eq!(parsed.qtype, QType::Aaaa.code());
        assert!(parsed.opt_present);
        assert_eq!(parsed.padding, Some(78)); // longer qname eats into the block
        assert_eq!(parsed.total_len, 128);
        assert_eq!(parsed.rcode, 0);
    }

    #[test]
    fn responses_echo_question_and_carry_requested_padding() {
        let query = build_query(&DnsQuerySpec::new("example.com", QType::A), 42).unwrap();
        let resp = build_response(
            &query,
            0,
            ResponsePadding::ToBlock {
                block: RESPONSE_PAD_BLOCK,
                option_code: PADDING_OPTION_CODE,
            },
        )
        .unwrap();
        assert_eq!(resp.len(), 468);
        let parsed = parse_message(&resp).unwrap();
        assert!(parsed.is_response);
        assert_eq!(parsed.txn_id, 42);
        assert_eq!(parsed.qname, "example.com");
        assert!(parsed.padding.is_some());

        let bare = build_response(&query, 3, ResponsePadding::None).unwrap();
        let parsed = parse_message(&bare).unwrap();
        assert_eq!(parsed.rcode, 3);
        assert!(parsed.opt_present);
        assert_eq!(parsed.padding, None);

        let alien = build_response(
            &query,
            0,
            ResponsePadding::ToBlock {
                block: RESPONSE_PAD_BLOCK,
                option_code: 65001,
            },
        )
        .unwrap();
        assert_eq!(alien.len(), 468);
        assert_eq!(parse_message(&alien).unwrap().padding, None);
    }

    #[test]
    fn compressed_names_parse() {
        // Hand-built response whose answer name points back at the question.
        let mut msg = Vec::new();
        msg.extend_from_slice(&[0, 9, 0x81, 0x80, 0, 1, 0, 1, 0, 0, 0, 0]);
        msg.push(7);
        msg.extend_from_slice(b"example");
        msg.push(3);
        msg.extend_from_slice(b"com");
        msg.extend_from_slice(&[0, 0, 1, 0, 1]);
        msg.extend_from_slice(&[0xc0, 12]); // pointer to offset 12
        msg.extend_from_slice(&[0, 1, 0, 1]); // A, IN
        msg.extend_from_slice(&[0, 0, 0, 60]); // TTL
        msg.extend_from_slice(&[0, 4, 192, 0, 2, 1]); // RDLENGTH + address
        let parsed = parse_message(&msg).unwrap();
        assert_eq!(parsed.qname, "example.com");
        assert_eq!(parsed.answer_count, 1);
        assert!(!parsed.opt_present);
    }

    #[test]
    fn pointer_loops_and_truncation_are_rejected() {
        let good = build_query(&DnsQuerySpec::new("example.com", QType::A), 0).unwrap();
        for cut in [0, 5, 11, 20, good.len() - 1] {
            assert!(parse_message(&good[..cut]).is_err(), "accepted {cut}-byte prefix");
        }

        // A name that points at itself must not spin forever.
        let mut msg = vec![0, 1, 0x81, 0x80, 0, 1, 0, 0, 0, 0, 0, 0];
        msg.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1]);
        assert!(matches!(parse_message(&msg), Err(WireError::Malformed(_))));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(parse_message(&trailing), Err(WireError::Malformed(_))));
    }

    #[test]
    fn extended_rcode_combines_opt_ttl_and_header() {
        let query = build_query(&DnsQuerySpec::new("example.com", QType::A), 5).unwrap();
        let mut resp = build_response(&query, 1, ResponsePadding::None).unwrap();
        // Raise the extended-RCODE byte in the OPT TTL, which sits just
        // before the two RDLENGTH bytes that close a bare OPT record.
        let opt_ttl = resp.len() - 6;
        resp[opt_ttl] = 1;
        let with_header_bits = parse_message(&resp).unwrap();
        assert_eq!(with_header_bits.rcode, (1 << 4) | 1);
    }
}
