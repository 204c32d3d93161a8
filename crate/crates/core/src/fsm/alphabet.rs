use super::FsmError;

/// The finite set of characters an automaton is defined over.
///
/// Only ASCII characters are supported; negated character classes and `.`
/// are interpreted relative to this set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet {
    mask: u128,
}

impl Alphabet {
    /// Printable ASCII, `' '..='~'`.
    pub fn printable_ascii() -> Self {
        Self::from_range(' ', '~')
    }

    pub fn from_range(lo: char, hi: char) -> Self {
        let mut mask = 0u128;
        for c in lo..=hi {
            if (c as u32) < 128 {
                mask |= 1 << (c as u32);
            }
        }
        Self { mask }
    }

    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Result<Self, FsmError> {
        let mut mask = 0u128;
        for c in chars {
            if (c as u32) >= 128 {
                return Err(FsmError::InvalidDfa(format!(
                    "non-ASCII alphabet character {c:?}"
                )));
            }
            mask |= 1 << (c as u32);
        }
        Ok(Self { mask })
    }

    pub fn mask(&self) -> u128 {
        self.mask
    }

    pub fn contains(&self, c: char) -> bool {
        (c as u32) < 128 && self.mask & (1 << (c as u32)) != 0
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Characters in ascending code-point order.
    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        (0u8..128)
            .filter(|b| self.mask & (1 << b) != 0)
            .map(char::from)
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::printable_ascii()
    }
}
