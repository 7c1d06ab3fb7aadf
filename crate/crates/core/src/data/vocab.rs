//! Character-level vocabulary: four specials followed by printable ASCII.

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

const FIRST_CHAR: u8 = b' ';
const LAST_CHAR: u8 = b'~';
const N_SPECIAL: usize = 4;

/// Text emitted by [`Vocab::detokenize`] for the unknown token.
pub const UNK_PLACEHOLDER: char = '\u{FFFD}';

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Vocab;

impl Vocab {
    pub fn new() -> Self {
        Vocab
    }

    pub fn len(&self) -> usize {
        N_SPECIAL + (LAST_CHAR - FIRST_CHAR + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id < N_SPECIAL
    }

    /// Ids of every ordinary (non-special) symbol.
    pub fn symbol_ids(&self) -> impl Iterator<Item = TokenId> {
        N_SPECIAL..self.len()
    }

    pub fn char_id(&self, c: char) -> TokenId {
        match u8::try_from(c) {
            Ok(b) if (FIRST_CHAR..=LAST_CHAR).contains(&b) => N_SPECIAL + (b - FIRST_CHAR) as usize,
            _ => UNK,
        }
    }

    /// Maps unsupported characters to [`UNK`].
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.chars().map(|c| self.char_id(c)).collect()
    }

    /// Inverse of [`tokenize`](Self::tokenize) for supported text. PAD, BOS
    /// and EOS render as nothing; UNK renders as [`UNK_PLACEHOLDER`].
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter_map(|&id| match id {
                PAD | BOS | EOS => None,
                UNK => Some(UNK_PLACEHOLDER),
                id if id < self.len() => Some((FIRST_CHAR + (id - N_SPECIAL) as u8) as char),
                _ => Some(UNK_PLACEHOLDER),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_round_trip() {
        let v = Vocab::new();
        assert!(v.tokenize("").is_empty());
        assert_eq!(v.detokenize(&[]), "");
    }

    #[test]
    fn ascii_round_trip() {
        let v = Vocab::new();
        let s = "polarity: the film was GREAT! ~{}";
        assert_eq!(v.detokenize(&v.tokenize(s)), s);
    }

    #[test]
    fn unsupported_symbol_is_unknown() {
        let v = Vocab::new();
        assert_eq!(v.tokenize("é"), vec![UNK]);
        assert_eq!(v.detokenize(&[UNK]), UNK_PLACEHOLDER.to_string());
    }

    #[test]
    fn specials_render_empty() {
        let v = Vocab::new();
        let mut ids = vec![BOS];
        ids.extend(v.tokenize("yes"));
        ids.push(EOS);
        assert_eq!(v.detokenize(&ids), "yes");
    }

    #[test]
    fn size() {
        assert_eq!(Vocab::new().len(), 99);
    }
}
