//! RFC 4944 fragment header wire format.
//!
//! ```text
//!  FRAG1:  0                   1                   2                   3
//!         |1 1 0 0 0| datagram_size (11) |       datagram_tag (16)       |
//!
//!  FRAGN: |1 1 1 0 0| datagram_size (11) |       datagram_tag (16)       |
//!         | offset (8) |
//! ```
//!
//! Offsets count 8-byte units of the *uncompressed* datagram.

use thiserror::Error;

pub const FRAG1_DISPATCH: u8 = 0b11000;
pub const FRAGN_DISPATCH: u8 = 0b11100;
pub const FRAG1_HEADER_LEN: usize = 4;
pub const FRAGN_HEADER_LEN: usize = 5;
/// Largest value representable in the 11-bit size field.
pub const MAX_DATAGRAM_SIZE: u16 = 0x07ff;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("datagram size {0} does not fit in 11 bits")]
    SizeOutOfRange(u16),
    #[error("offset {offset_units} (x8) is not below datagram size {datagram_size}")]
    OffsetOutOfRange { datagram_size: u16, offset_units: u8 },
    #[error("truncated fragment header: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frag1Header {
    pub datagram_size: u16,
    pub datagram_tag: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FragNHeader {
    pub datagram_size: u16,
    pub datagram_tag: u16,
    pub offset_units: u8,
}

impl FragNHeader {
    pub fn offset_bytes(&self) -> usize {
        self.offset_units as usize * 8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FragHeader {
    First(Frag1Header),
    Subsequent(FragNHeader),
}

impl FragHeader {
    pub fn datagram_size(&self) -> u16 {
        match self {
            FragHeader::First(h) => h.datagram_size,
            FragHeader::Subsequent(h) => h.datagram_size,
        }
    }

    pub fn datagram_tag(&self) -> u16 {
        match self {
            FragHeader::First(h) => h.datagram_tag,
            FragHeader::Subsequent(h) => h.datagram_tag,
        }
    }

    /// Replaces the tag, keeping size and offset. Used when forwarding.
    pub fn with_tag(self, tag: u16) -> Self {
        match self {
            FragHeader::First(h) => FragHeader::First(Frag1Header { datagram_tag: tag, ..h }),
            FragHeader::Subsequent(h) => FragHeader::Subsequent(FragNHeader { datagram_tag: tag, ..h }),
        }
    }

    /// Byte offset into the uncompressed datagram.
    pub fn offset_bytes(&self) -> usize {
        match self {
            FragHeader::First(_) => 0,
            FragHeader::Subsequent(h) => h.offset_bytes(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            FragHeader::First(_) => FRAG1_HEADER_LEN,
            FragHeader::Subsequent(_) => FRAGN_HEADER_LEN,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        match self {
            FragHeader::First(h) => encode_frag1(h).map(|b| b.to_vec()),
            FragHeader::Subsequent(h) => encode_fragn(h).map(|b| b.to_vec()),
        }
    }
}

fn size_and_tag(dispatch: u8, size: u16, tag: u16) -> Result<[u8; 4], CodecError> {
    if size > MAX_DATAGRAM_SIZE {
        return Err(CodecError::SizeOutOfRange(size));
    }
    let [tag_hi, tag_lo] = tag.to_be_bytes();
    Ok([(dispatch << 3) | (size >> 8) as u8, size as u8, tag_hi, tag_lo])
}

pub fn encode_frag1(h: &Frag1Header) -> Result<[u8; FRAG1_HEADER_LEN], CodecError> {
    size_and_tag(FRAG1_DISPATCH, h.datagram_size, h.datagram_tag)
}

pub fn encode_fragn(h: &FragNHeader) -> Result<[u8; FRAGN_HEADER_LEN], CodecError> {
    check_offset(h)?;
    let [a, b, c, d] = size_and_tag(FRAGN_DISPATCH, h.datagram_size, h.datagram_tag)?;
    Ok([a, b, c, d, h.offset_units])
}

fn check_offset(h: &FragNHeader) -> Result<(), CodecError> {
    if h.offset_bytes() >= h.datagram_size as usize {
        return Err(CodecError::OffsetOutOfRange {
            datagram_size: h.datagram_size,
            offset_units: h.offset_units,
        });
    }
    Ok(())
}

/// Parses the fragment header at the start of a frame payload.
///
/// Returns `Ok(None)` when the dispatch byte is not a fragment header (the
/// frame carries an unfragmented datagram).
pub fn decode(bytes: &[u8]) -> Result<Option<FragHeader>, CodecError> {
    let Some(&first) = bytes.first() else {
        return Err(CodecError::Truncated { needed: 1, got: 0 });
    };
    let dispatch = first >> 3;
    let needed = match dispatch {
        FRAG1_DISPATCH => FRAG1_HEADER_LEN,
        FRAGN_DISPATCH => FRAGN_HEADER_LEN,
        _ => return Ok(None),
    };
    if bytes.len() < needed {
        return Err(CodecError::Truncated { needed, got: bytes.len() });
    }
    let datagram_size = u16::from_be_bytes([first & 0b111, bytes[1]]);
    let datagram_tag = u16::from_be_bytes([bytes[2], bytes[3]]);
    if dispatch == FRAG1_DISPATCH {
        return Ok(Some(FragHeader::First(Frag1Header { datagram_size, datagram_tag })));
    }
    let h = FragNHeader { datagram_size, datagram_tag, offset_units: bytes[4] };
    check_offset(&h)?;
    Ok(Some(FragHeader::Subsequent(h)))
}
