use std::borrow::Cow;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::header::{
    FragHeader, FragNHeader, Frag1Header, FRAG1_HEADER_LEN, FRAGN_HEADER_LEN, MAX_DATAGRAM_SIZE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FragmentError {
    #[error("datagram of {0} bytes cannot be expressed with 11-bit size / 8-bit offsets")]
    TooLarge(usize),
    #[error("compression header of {comp} bytes leaves no room in a {sdu}-byte SDU")]
    HeaderTooLarge { comp: usize, sdu: usize },
    #[error("SDU of {0} bytes cannot carry a FRAGN header plus 8 payload bytes")]
    SduTooSmall(usize),
    #[error("datagram does not start with the bytes the compression header stands for")]
    HeaderMismatch,
    #[error("expected a first fragment carrying a compression header")]
    NotFirstFragment,
}

/// Size-only stand-in for an IPHC header.
///
/// `fields` holds the uncompressed bytes (IPv6 + UDP header) that this header
/// replaces on the wire; `size_bytes` is what it costs in a frame. The two are
/// independent so a forwarder can model a header that compresses better or
/// worse than upstream without touching datagram content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionHeader {
    pub size_bytes: usize,
    pub fields: Vec<u8>,
}

impl CompressionHeader {
    pub fn new(size_bytes: usize, fields: Vec<u8>) -> Self {
        Self { size_bytes, fields }
    }

    pub fn resized(&self, size_bytes: usize) -> Self {
        Self { size_bytes, fields: self.fields.clone() }
    }

    /// Number of uncompressed datagram bytes this header covers.
    pub fn covers(&self) -> usize {
        self.fields.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentPolicy {
    /// First fragment carries only FRAG1 + compression header.
    MinimalFirst,
    /// First fragment is filled up to the SDU.
    FillFirst,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub header: FragHeader,
    /// Present on first fragments only.
    pub comp: Option<CompressionHeader>,
    pub payload: Vec<u8>,
}

impl Fragment {
    pub fn is_first(&self) -> bool {
        matches!(self.header, FragHeader::First(_))
    }

    /// Range of the uncompressed datagram this fragment fills in.
    pub fn covered(&self) -> Range<usize> {
        let start = self.header.offset_bytes();
        let covers = self.comp.as_ref().map_or(0, CompressionHeader::covers);
        start..start + covers + self.payload.len()
    }

    /// Bytes this fragment occupies in the link SDU.
    pub fn wire_len(&self) -> usize {
        self.header.encoded_len() + self.comp.as_ref().map_or(0, |c| c.size_bytes) + self.payload.len()
    }

    /// Uncompressed bytes to place at `covered().start`.
    pub fn uncompressed(&self) -> Cow<'_, [u8]> {
        match &self.comp {
            Some(c) if !c.fields.is_empty() => {
                let mut v = Vec::with_capacity(c.fields.len() + self.payload.len());
                v.extend_from_slice(&c.fields);
                v.extend_from_slice(&self.payload);
                Cow::Owned(v)
            }
            _ => Cow::Borrowed(&self.payload),
        }
    }
}

/// What goes into link frames for one datagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packetized {
    /// Fits the SDU after compression; no fragment header.
    Whole { comp: CompressionHeader, payload: Vec<u8> },
    Fragments(Vec<Fragment>),
}

impl Packetized {
    pub fn frame_count(&self) -> usize {
        match self {
            Packetized::Whole { .. } => 1,
            Packetized::Fragments(f) => f.len(),
        }
    }
}

fn align_down8(n: usize) -> usize {
    n & !7
}

fn align_up8(n: usize) -> usize {
    (n + 7) & !7
}

fn fragn_capacity(sdu: usize) -> Result<usize, FragmentError> {
    let cap = align_down8(sdu.saturating_sub(FRAGN_HEADER_LEN));
    if cap < 8 {
        return Err(FragmentError::SduTooSmall(sdu));
    }
    Ok(cap)
}

fn push_fragns(
    out: &mut Vec<Fragment>,
    datagram_size: u16,
    tag: u16,
    mut offset: usize,
    rest: &[u8],
    cap: usize,
) -> Result<(), FragmentError> {
    for chunk in rest.chunks(cap) {
        let offset_units =
            u8::try_from(offset / 8).map_err(|_| FragmentError::TooLarge(datagram_size as usize))?;
        out.push(Fragment {
            header: FragHeader::Subsequent(FragNHeader { datagram_size, datagram_tag: tag, offset_units }),
            comp: None,
            payload: chunk.to_vec(),
        });
        offset += chunk.len();
    }
    Ok(())
}

/// Splits an uncompressed datagram into link frames.
///
/// The leading `comp.covers()` bytes of `datagram` travel as the compression
/// header; offsets always refer to the uncompressed datagram.
pub fn fragment_datagram(
    datagram: &[u8],
    comp: &CompressionHeader,
    tag: u16,
    sdu: usize,
    policy: FragmentPolicy,
) -> Result<Packetized, FragmentError> {
    if !datagram.starts_with(&comp.fields) {
        return Err(FragmentError::HeaderMismatch);
    }
    let size = datagram.len();
    let hdr = comp.covers();
    if comp.size_bytes + (size - hdr) <= sdu {
        return Ok(Packetized::Whole { comp: comp.clone(), payload: datagram[hdr..].to_vec() });
    }
    if size > MAX_DATAGRAM_SIZE as usize {
        return Err(FragmentError::TooLarge(size));
    }
    let datagram_size = size as u16;
    let cap_n = fragn_capacity(sdu)?;
    let too_big = FragmentError::HeaderTooLarge { comp: comp.size_bytes, sdu };
    let cap_1 = sdu.checked_sub(FRAG1_HEADER_LEN + comp.size_bytes).ok_or(too_big.clone())?;

    let first_end = match policy {
        FragmentPolicy::MinimalFirst => align_up8(hdr).min(size),
        FragmentPolicy::FillFirst => align_down8(hdr + cap_1),
    };
    if first_end < hdr || first_end - hdr > cap_1 {
        return Err(too_big);
    }

    let mut out = vec![Fragment {
        header: FragHeader::First(Frag1Header { datagram_size, datagram_tag: tag }),
        comp: Some(comp.clone()),
        payload: datagram[hdr..first_end].to_vec(),
    }];
    push_fragns(&mut out, datagram_size, tag, first_end, &datagram[first_end..], cap_n)?;
    Ok(Packetized::Fragments(out))
}

/// Re-fits a received first fragment after the compression header changed
/// size on this hop.
///
/// If the new header no longer fits, the first fragment shrinks to
/// FRAG1 + header and the displaced payload moves into FRAGN(s) placed at the
/// original offsets, so fragments that follow stay valid unchanged.
pub fn refragment_first(
    first: &Fragment,
    new_comp: &CompressionHeader,
    sdu: usize,
) -> Result<Vec<Fragment>, FragmentError> {
    let (FragHeader::First(h), Some(old)) = (first.header, first.comp.as_ref()) else {
        return Err(FragmentError::NotFirstFragment);
    };
    if old.fields != new_comp.fields {
        return Err(FragmentError::HeaderMismatch);
    }
    if FRAG1_HEADER_LEN + new_comp.size_bytes + first.payload.len() <= sdu {
        return Ok(vec![Fragment { header: first.header, comp: Some(new_comp.clone()), payload: first.payload.clone() }]);
    }
    let hdr = new_comp.covers();
    let keep = align_up8(hdr) - hdr;
    let keep = keep.min(first.payload.len());
    if FRAG1_HEADER_LEN + new_comp.size_bytes + keep > sdu {
        return Err(FragmentError::HeaderTooLarge { comp: new_comp.size_bytes, sdu });
    }
    let cap_n = fragn_capacity(sdu)?;
    let mut out = vec![Fragment {
        header: first.header,
        comp: Some(new_comp.clone()),
        payload: first.payload[..keep].to_vec(),
    }];
    push_fragns(&mut out, h.datagram_size, h.datagram_tag, hdr + keep, &first.payload[keep..], cap_n)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HDR: usize = 48;

    fn datagram(payload: usize) -> Vec<u8> {
        (0..HDR + payload).map(|i| (i * 7 + 3) as u8).collect()
    }

    fn comp(size: usize, d: &[u8]) -> CompressionHeader {
        CompressionHeader::new(size, d[..HDR].to_vec())
    }

    fn reassemble(frags: &[Fragment]) -> Vec<u8> {
        let size = frags[0].header.datagram_size() as usize;
        let mut out = vec![None; size];
        for f in frags {
            let r = f.covered();
            for (i, b) in f.uncompressed().iter().enumerate() {
                assert!(out[r.start + i].is_none(), "overlap at {}", r.start + i);
                out[r.start + i] = Some(*b);
            }
        }
        out.into_iter().map(|b| b.expect("gap")).collect()
    }

    #[test]
    fn small_datagram_is_not_fragmented() {
        let d = datagram(16);
        let p = fragment_datagram(&d, &comp(24, &d), 1, 102, FragmentPolicy::MinimalFirst).unwrap();
        assert!(matches!(p, Packetized::Whole { ref payload, .. } if payload.len() == 16));
    }

    #[test]
    fn minimal_first_carries_headers_only() {
        let d = datagram(80);
        let Packetized::Fragments(f) =
            fragment_datagram(&d, &comp(24, &d), 1, 102, FragmentPolicy::MinimalFirst).unwrap()
        else {
            panic!("expected fragments")
        };
        assert_eq!(f.len(), 2);
        assert!(f[0].payload.is_empty());
        assert_eq!(f[0].wire_len(), 4 + 24);
        assert_eq!(f[1].header.offset_bytes(), 48);
        assert_eq!(reassemble(&f), d);
    }

    #[test]
    fn fragment_counts_for_table_payloads() {
        for (payload, count) in [(80, 2), (656, 8), (1232, 14)] {
            let d = datagram(payload);
            for policy in [FragmentPolicy::MinimalFirst, FragmentPolicy::FillFirst] {
                let p = fragment_datagram(&d, &comp(24, &d), 1, 102, policy).unwrap();
                assert_eq!(p.frame_count(), count, "payload {payload} {policy:?}");
            }
        }
    }

    #[test]
    fn too_large_for_offsets() {
        let d = vec![0u8; 2100];
        let c = CompressionHeader::new(24, d[..HDR].to_vec());
        assert_eq!(
            fragment_datagram(&d, &c, 0, 102, FragmentPolicy::FillFirst),
            Err(FragmentError::TooLarge(2100))
        );
    }

    #[test]
    fn tiny_sdu_rejected() {
        let d = datagram(200);
        assert_eq!(
            fragment_datagram(&d, &comp(24, &d), 0, 12, FragmentPolicy::FillFirst),
            Err(FragmentError::SduTooSmall(12))
        );
    }

    #[test]
    fn refragment_passthrough_when_header_shrinks() {
        let d = datagram(300);
        let Packetized::Fragments(f) =
            fragment_datagram(&d, &comp(24, &d), 5, 102, FragmentPolicy::FillFirst).unwrap()
        else {
            unreachable!()
        };
        let out = refragment_first(&f[0], &comp(10, &d), 102).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].payload, f[0].payload);
        assert_eq!(out[0].comp.as_ref().unwrap().size_bytes, 10);
    }

    // Byte-count oracle: for every header size the split must conserve the
    // payload and keep each frame within the SDU.
    #[test]
    fn refragment_grown_header_all_sizes() {
        let d = datagram(300);
        let sdu = 102;
        let Packetized::Fragments(f) =
            fragment_datagram(&d, &comp(0, &d), 5, sdu, FragmentPolicy::FillFirst).unwrap()
        else {
            unreachable!()
        };
        let room = sdu - 4 - f[0].payload.len();
        for size in 0..=40 {
            let out = refragment_first(&f[0], &comp(size, &d), sdu).unwrap();
            let joined: Vec<u8> = out.iter().flat_map(|x| x.payload.iter().copied()).collect();
            assert_eq!(joined, f[0].payload);
            assert_eq!(out.len(), if size <= room { 1 } else { 2 }, "size {size}");
            assert!(out.iter().all(|x| x.wire_len() <= sdu));
            let mut all = out.clone();
            all.extend_from_slice(&f[1..]);
            assert_eq!(reassemble(&all), d);
        }
    }

    #[test]
    fn minimal_first_never_needs_refragmentation() {
        let d = datagram(500);
        let sdu = 102;
        let Packetized::Fragments(f) =
            fragment_datagram(&d, &comp(24, &d), 5, sdu, FragmentPolicy::MinimalFirst).unwrap()
        else {
            unreachable!()
        };
        let free = sdu - f[0].wire_len();
        for grow in 0..=free {
            let out = refragment_first(&f[0], &comp(24 + grow, &d), sdu).unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].payload, f[0].payload);
        }
    }

    #[test]
    fn refragment_rejects_subsequent() {
        let d = datagram(300);
        let Packetized::Fragments(f) =
            fragment_datagram(&d, &comp(24, &d), 5, 102, FragmentPolicy::FillFirst).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(refragment_first(&f[1], &comp(24, &d), 102), Err(FragmentError::NotFirstFragment));
    }
}
