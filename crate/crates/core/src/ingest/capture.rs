//! Readers for the two standard packet-capture container formats.

/// One captured frame with its link type and a microsecond timestamp.
#[derive(Debug, Clone)]
pub(crate) struct RawPacket {
    pub ts_us: u64,
    pub linktype: u32,
    pub data: Vec<u8>,
}

pub(crate) const LINKTYPE_ETHERNET: u32 = 1;
pub(crate) const LINKTYPE_RAW_IP: u32 = 101;

const PCAP_MAGIC_US: u32 = 0xa1b2_c3d4;
const PCAP_MAGIC_NS: u32 = 0xa1b2_3c4d;
const PCAPNG_SHB: u32 = 0x0a0d_0d0a;
const PCAPNG_BYTE_ORDER: u32 = 0x1a2b_3c4d;
const PCAPNG_IDB: u32 = 0x0000_0001;
const PCAPNG_EPB: u32 = 0x0000_0006;

/// Parses a capture file in either container format, dispatching on the
/// leading magic number.
pub(crate) fn read_capture(bytes: &[u8]) -> Result<Vec<RawPacket>, String> {
    if bytes.len() < 4 {
        return Err("file too short for a capture header".into());
    }
    let magic_le = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    let magic_be = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if magic_le == PCAPNG_SHB {
        read_pcapng(bytes)
    } else if magic_le == PCAP_MAGIC_US || magic_le == PCAP_MAGIC_NS {
        read_pcap(bytes, false)
    } else if magic_be == PCAP_MAGIC_US || magic_be == PCAP_MAGIC_NS {
        read_pcap(bytes, true)
    } else {
        Err(format!("unrecognized capture magic {magic_le:#010x}"))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.remaining() < n {
            return Err(format!(
                "truncated capture: wanted {n} bytes, {} left",
                self.remaining()
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, String> {
        let b = self.take(2)?.try_into().unwrap();
        Ok(if self.big_endian {
            u16::from_be_bytes(b)
        } else {
            u16::from_le_bytes(b)
        })
    }

    fn u32(&mut self) -> Result<u32, String> {
        let b = self.take(4)?.try_into().unwrap();
        Ok(if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        })
    }
}

fn read_pcap(bytes: &[u8], big_endian: bool) -> Result<Vec<RawPacket>, String> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        big_endian,
    };
    let magic = cur.u32()?;
    let nanos = magic == PCAP_MAGIC_NS;
    cur.take(2 + 2 + 4 + 4 + 4)?; // version, thiszone, sigfigs, snaplen
    let linktype = cur.u32()?;
    let mut packets = Vec::new();
    while cur.remaining() > 0 {
        let ts_sec = cur.u32()? as u64;
        let ts_frac = cur.u32()? as u64;
        let incl_len = cur.u32()? as usize;
        let _orig_len = cur.u32()?;
        let data = cur.take(incl_len)?.to_vec();
        let ts_us = ts_sec * 1_000_000 + if nanos { ts_frac / 1000 } else { ts_frac };
        packets.push(RawPacket {
            ts_us,
            linktype,
            data,
        });
    }
    Ok(packets)
}

/// Per-interface metadata from an interface description block.
struct Interface {
    linktype: u32,
    /// Timestamp ticks per second (default 10^6).
    ticks_per_sec: u64,
}

fn read_pcapng(bytes: &[u8]) -> Result<Vec<RawPacket>, String> {
    let mut pos = 0usize;
    let mut big_endian = false;
    let mut interfaces: Vec<Interface> = Vec::new();
    let mut packets = Vec::new();
    while pos + 12 <= bytes.len() {
        // Block type is endianness-independent for the section header (the
        // magic is a palindrome-ish sentinel); everything else uses the
        // current section's byte order.
        let raw_type = &bytes[pos..pos + 4];
        let is_shb = u32::from_le_bytes(raw_type.try_into().unwrap()) == PCAPNG_SHB;
        if is_shb {
            // Peek the byte-order magic to fix endianness for this section.
            if pos + 12 > bytes.len() {
                return Err("truncated section header".into());
            }
            let bom = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().unwrap());
            big_endian = match bom {
                PCAPNG_BYTE_ORDER => false,
                _ if bom.swap_bytes() == PCAPNG_BYTE_ORDER => true,
                _ => return Err(format!("bad byte-order magic {bom:#010x}")),
            };
            interfaces.clear();
        }
        let mut cur = Cursor {
            bytes,
            pos,
            big_endian,
        };
        let block_type = cur.u32()?;
        let total_len = cur.u32()? as usize;
        if total_len < 12 || !total_len.is_multiple_of(4) || pos + total_len > bytes.len() {
            return Err(format!("bad block length {total_len}"));
        }
        let body = &bytes[pos + 8..pos + total_len - 4];
        match block_type {
            PCAPNG_IDB => {
                let mut b = Cursor {
                    bytes: body,
                    pos: 0,
                    big_endian,
                };
                let linktype = b.u16()? as u32;
                b.take(2)?; // reserved
                b.take(4)?; // snaplen
                let mut ticks_per_sec = 1_000_000u64;
                // Options: (code, len, value padded to 4) until end marker.
                while b.remaining() >= 4 {
                    let code = b.u16()?;
                    let len = b.u16()? as usize;
                    if code == 0 {
                        break;
                    }
                    let value = b.take(len.div_ceil(4) * 4)?;
                    if code == 9 && len == 1 {
                        let v = value[0];
                        ticks_per_sec = if v & 0x80 != 0 {
                            2u64.pow(u32::from(v & 0x7f))
                        } else {
                            10u64.pow(u32::from(v))
                        };
                    }
                }
                interfaces.push(Interface {
                    linktype,
                    ticks_per_sec,
                });
            }
            PCAPNG_EPB => {
                let mut b = Cursor {
                    bytes: body,
                    pos: 0,
                    big_endian,
                };
                let iface = b.u32()? as usize;
                let ts_high = u64::from(b.u32()?);
                let ts_low = u64::from(b.u32()?);
                let cap_len = b.u32()? as usize;
                let _orig_len = b.u32()?;
                let data = b.take(cap_len)?.to_vec();
                let iface = interfaces
                    .get(iface)
                    .ok_or_else(|| format!("packet references unknown interface {iface}"))?;
                let ticks = (ts_high << 32) | ts_low;
                let ts_us = (u128::from(ticks) * 1_000_000 / u128::from(iface.ticks_per_sec))
                    as u64;
                packets.push(RawPacket {
                    ts_us,
                    linktype: iface.linktype,
                    data,
                });
            }
            _ => {} // section headers handled above; other block types skipped
        }
        pos += total_len;
    }
    if pos != bytes.len() {
        return Err("trailing bytes after last block".into());
    }
    Ok(packets)
}

/// Strips the link-layer framing, returning the IP packet bytes.
pub(crate) fn ip_payload(pkt: &RawPacket) -> Option<&[u8]> {
    match pkt.linktype {
        LINKTYPE_ETHERNET => {
            let d = &pkt.data;
            if d.len() < 14 {
                return None;
            }
            let ethertype = u16::from_be_bytes([d[12], d[13]]);
            match ethertype {
                0x0800 | 0x86dd => Some(&d[14..]),
                0x8100 if d.len() >= 18 => {
                    let inner = u16::from_be_bytes([d[16], d[17]]);
                    matches!(inner, 0x0800 | 0x86dd).then(|| &d[18..])
                }
                _ => None,
            }
        }
        LINKTYPE_RAW_IP => Some(&pkt.data),
        _ => None,
    }
}
