//! TLS record-layer scanning over a reassembled byte stream.

/// TLS record header: content type, legacy version, 16-bit length.
pub(crate) const TLS_HEADER_LEN: usize = 5;
pub(crate) const CONTENT_TYPE_APPLICATION_DATA: u8 = 23;
/// Sanity bound on a declared record length.
pub(crate) const MAX_RECORD_LEN: usize = 64 * 1024;

/// One TLS record located in a reassembled stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TlsRecord {
    pub content_type: u8,
    pub len: u16,
    /// Offset of the record's first header byte in the stream.
    pub header_offset: usize,
}

/// Walks a byte stream as a sequence of TLS records. Any header that does
/// not look like TLS (content type outside 20..=23, major version != 3) or
/// a stream that ends mid-record means the scan lost framing.
pub(crate) fn scan_records(bytes: &[u8]) -> Result<Vec<TlsRecord>, String> {
    let mut records = Vec::new();
    let mut off = 0usize;
    while off < bytes.len() {
        if bytes.len() - off < TLS_HEADER_LEN {
            return Err(format!("stream ends inside a record header at offset {off}"));
        }
        let content_type = bytes[off];
        let major = bytes[off + 1];
        let len = u16::from_be_bytes([bytes[off + 3], bytes[off + 4]]);
        if !(20..=23).contains(&content_type) || major != 3 {
            return Err(format!(
                "desynchronized at offset {off}: type {content_type}, version byte {major}"
            ));
        }
        if usize::from(len) > MAX_RECORD_LEN {
            return Err(format!("record length {len} exceeds the 64 KiB bound"));
        }
        let end = off + TLS_HEADER_LEN + usize::from(len);
        if end > bytes.len() {
            return Err(format!(
                "stream ends inside a record body: header at {off} declares {len} bytes"
            ));
        }
        records.push(TlsRecord {
            content_type,
            len,
            header_offset: off,
        });
        off = end;
    }
    Ok(records)
}

#[cfg(test)]
pub(crate) fn record_bytes(content_type: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = vec![content_type, 3, 3];
    out.extend_from_slice(&(payload.len() as u16).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_record_stream() {
        let mut stream = record_bytes(22, &[0u8; 100]); // handshake
        stream.extend(record_bytes(20, &[1])); // change-cipher-spec
        stream.extend(record_bytes(23, &[7u8; 154]));
        stream.extend(record_bytes(23, &[8u8; 204]));
        let records = scan_records(&stream).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(records[0].content_type, 22);
        // Offsets: handshake occupies 0..105, change-cipher-spec 105..111.
        assert_eq!(records[2], TlsRecord {
            content_type: 23,
            len: 154,
            header_offset: 111,
        });
        assert_eq!(records[3].len, 204);
    }

    #[test]
    fn empty_stream_has_no_records() {
        assert_eq!(scan_records(&[]).unwrap(), vec![]);
    }

    #[test]
    fn garbage_desynchronizes() {
        assert!(scan_records(b"HTTP/1.1 200 OK\r\n").is_err());
        let mut bad_version = record_bytes(23, &[1, 2]);
        bad_version[1] = 2;
        assert!(scan_records(&bad_version).is_err());
    }

    #[test]
    fn truncated_record_is_an_error() {
        let mut stream = record_bytes(23, &[5u8; 40]);
        stream.truncate(stream.len() - 1);
        assert!(scan_records(&stream).is_err());
        assert!(scan_records(&stream[..3]).is_err());
    }

    #[test]
    fn zero_length_record_is_scannable() {
        let records = scan_records(&record_bytes(23, &[])).unwrap();
        assert_eq!(records[0].len, 0);
    }
}
