use crate::error::{OdmError, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 96;
pub const VOCAB_SIZE: usize = 97;
/// Default instance capacity per image.
pub const MAX_INSTANCES: usize = 32;
/// Default token capacity per instance.
pub const MAX_LEN: usize = 25;

const FIRST: u32 = 0x20;
const LAST: u32 = 0x7e;

/// Printable ASCII in code order, framed by PAD and UNK.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Charset;

impl Charset {
    pub fn size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn encode_char(&self, ch: char) -> u32 {
        let c = ch as u32;
        if (FIRST..=LAST).contains(&c) {
            c - FIRST + 1
        } else {
            UNK
        }
    }

    /// Character for a real token id; `None` for PAD, UNK and out-of-range ids.
    pub fn decode_id(&self, id: u32) -> Option<char> {
        if (1..UNK).contains(&id) {
            char::from_u32(id - 1 + FIRST)
        } else {
            None
        }
    }

    pub fn encode(&self, s: &str) -> Vec<u32> {
        s.chars().map(|c| self.encode_char(c)).collect()
    }

    /// Decodes until the first PAD; UNK becomes U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&id| id != PAD)
            .map(|&id| self.decode_id(id).unwrap_or('\u{fffd}'))
            .collect()
    }

    /// Every character with a real token id.
    pub fn printable(&self) -> impl Iterator<Item = char> {
        (FIRST..=LAST).filter_map(char::from_u32)
    }
}

/// Token ids `[batch, instances, len]` and the instance-present mask
/// `[batch, instances]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub batch: usize,
    pub instances: usize,
    pub len: usize,
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl TokenBatch {
    pub fn empty(batch: usize, instances: usize, len: usize) -> Self {
        TokenBatch {
            batch,
            instances,
            len,
            ids: vec![PAD; batch * instances * len],
            mask: vec![false; batch * instances],
        }
    }

    pub fn row(&self, b: usize, m: usize) -> &[u32] {
        let start = (b * self.instances + m) * self.len;
        &self.ids[start..start + self.len]
    }

    pub fn present(&self, b: usize, m: usize) -> bool {
        self.mask[b * self.instances + m]
    }

    /// Number of non-PAD tokens in a row.
    pub fn row_len(&self, b: usize, m: usize) -> usize {
        self.row(b, m).iter().take_while(|&&id| id != PAD).count()
    }

    pub fn present_count(&self, b: usize) -> usize {
        self.mask[b * self.instances..(b + 1) * self.instances].iter().filter(|&&p| p).count()
    }

    /// Concatenates single-image batches along the batch axis.
    pub fn stack(parts: &[TokenBatch]) -> Result<TokenBatch> {
        let first = parts
            .first()
            .ok_or_else(|| OdmError::Validation("cannot stack an empty list of token batches".into()))?;
        let mut out = TokenBatch::empty(0, first.instances, first.len);
        for p in parts {
            if (p.instances, p.len) != (first.instances, first.len) {
                return Err(OdmError::shape(
                    "token stack",
                    &[first.instances, first.len],
                    &[p.instances, p.len],
                ));
            }
            out.batch += p.batch;
            out.ids.extend_from_slice(&p.ids);
            out.mask.extend_from_slice(&p.mask);
        }
        Ok(out)
    }
}

/// Tokenizes one image's transcriptions with the default capacities.
pub fn tokenize(texts: &[&str], charset: &Charset) -> TokenBatch {
    tokenize_with(texts, charset, MAX_INSTANCES, MAX_LEN)
}

/// Tokenizes one image's transcriptions into a `[1, instances, len]` batch.
/// Extra instances are dropped with a warning; long strings are truncated.
pub fn tokenize_with(texts: &[&str], charset: &Charset, instances: usize, len: usize) -> TokenBatch {
    if texts.len() > instances {
        log::warn!("{} text instances exceed capacity {instances}; truncating", texts.len());
    }
    let mut out = TokenBatch::empty(1, instances, len);
    for (m, text) in texts.iter().take(instances).enumerate() {
        out.mask[m] = true;
        for (i, ch) in text.chars().take(len).enumerate() {
            out.ids[m * len + i] = charset.encode_char(ch);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        let cs = Charset;
        let t = tokenize(&["", "Ab"], &cs);
        assert!(t.present(0, 0) && t.row(0, 0).iter().all(|&i| i == PAD));
        assert_eq!(&t.row(0, 1)[..3], &[34, 67, 0]);
        let long = "abcdefghijklmnopqrstuvwxyz0123";
        let t = tokenize(&[long], &cs);
        assert_eq!(t.row(0, 0), cs.encode(&long[..25]).as_slice());
        assert_eq!(t.present_count(0), 1);
    }

    #[test]
    fn charset_round_trip_and_unk() {
        let cs = Charset;
        let all: String = cs.printable().collect();
        assert_eq!(all.len(), 95);
        assert_eq!(cs.decode(&cs.encode(&all)), all);
        assert_eq!(cs.encode_char('é'), UNK);
        assert_eq!(cs.encode_char(' '), 1);
        assert_eq!(cs.encode_char('~'), 95);
    }

    #[test]
    fn excess_instances_are_truncated() {
        let texts: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let t = tokenize(&refs, &Charset);
        assert_eq!(t.present_count(0), MAX_INSTANCES);
        assert_eq!(Charset.decode(t.row(0, 31)), "w31");
    }
}
