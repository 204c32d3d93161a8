use super::{FsmError, TokenId};

/// Token strings indexed by dense id, with exactly one empty end-of-sequence
/// token.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    eos_id: TokenId,
    trie: Trie,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct TrieNode {
    /// Sorted by character.
    pub children: Vec<(char, u32)>,
    pub tokens: Vec<TokenId>,
}

#[derive(Clone, Debug)]
pub(crate) struct Trie {
    pub nodes: Vec<TrieNode>,
}

impl Trie {
    fn build(tokens: &[String], eos_id: TokenId) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for (id, tok) in tokens.iter().enumerate() {
            if id == eos_id.index() {
                continue;
            }
            let mut node = 0usize;
            for c in tok.chars() {
                node = match nodes[node].children.binary_search_by_key(&c, |e| e.0) {
                    Ok(i) => nodes[node].children[i].1 as usize,
                    Err(i) => {
                        nodes.push(TrieNode::default());
                        let child = nodes.len() as u32 - 1;
                        nodes[node].children.insert(i, (c, child));
                        child as usize
                    }
                };
            }
            nodes[node].tokens.push(TokenId(id as u32));
        }
        Trie { nodes }
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos_id: TokenId) -> Result<Self, FsmError> {
        if eos_id.index() >= tokens.len() {
            return Err(FsmError::InvalidVocabulary(format!(
                "eos id {eos_id} out of range"
            )));
        }
        if u32::try_from(tokens.len()).is_err() {
            return Err(FsmError::InvalidVocabulary("too many tokens".into()));
        }
        let empties = tokens.iter().filter(|t| t.is_empty()).count();
        if !tokens[eos_id.index()].is_empty() || empties != 1 {
            return Err(FsmError::InvalidVocabulary(
                "exactly one token, the eos token, must be the empty string".into(),
            ));
        }
        let trie = Trie::build(&tokens, eos_id);
        Ok(Vocabulary {
            tokens,
            eos_id,
            trie,
        })
    }

    /// Appends an empty end-of-sequence token after `tokens`.
    pub fn with_eos<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
    ) -> Result<Self, FsmError> {
        let mut tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let eos = TokenId(tokens.len() as u32);
        tokens.push(String::new());
        Self::new(tokens, eos)
    }

    /// Vocabulary for JSON output: every printable ASCII character plus
    /// common multi-character pieces for the tabletop domain.
    pub fn json_default() -> Self {
        let mut tokens: Vec<String> = (' '..='~').map(String::from).collect();
        for piece in DEFAULT_PIECES {
            if !tokens.iter().any(|t| t == piece) {
                tokens.push((*piece).to_string());
            }
        }
        Self::with_eos(tokens).expect("default vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// First id whose string equals `text`.
    pub fn id_of(&self, text: &str) -> Option<TokenId> {
        if text.is_empty() {
            return Some(self.eos_id);
        }
        let mut node = 0usize;
        for c in text.chars() {
            let n = &self.trie.nodes[node];
            let i = n.children.binary_search_by_key(&c, |e| e.0).ok()?;
            node = n.children[i].1 as usize;
        }
        self.trie.nodes[node].tokens.first().copied()
    }

    /// Greedy longest-match tokenization. `None` if some position has no
    /// matching token.
    pub fn encode(&self, text: &str) -> Option<Vec<TokenId>> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let mut node = 0usize;
            let mut best: Option<(usize, TokenId)> = None;
            for (offset, c) in chars[pos..].iter().enumerate() {
                let n = &self.trie.nodes[node];
                let Ok(i) = n.children.binary_search_by_key(c, |e| e.0) else {
                    break;
                };
                node = n.children[i].1 as usize;
                if let Some(&id) = self.trie.nodes[node].tokens.first() {
                    best = Some((offset + 1, id));
                }
            }
            let (len, id) = best?;
            out.push(id);
            pos += len;
        }
        Some(out)
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().filter_map(|&id| self.token(id)).collect()
    }

    pub(crate) fn trie(&self) -> &Trie {
        &self.trie
    }
}

const DEFAULT_PIECES: &[&str] = &[
    "[\"",
    "\"]",
    "\", \"",
    "\",\"",
    "[]",
    ", ",
    "\": ",
    "\":",
    "\", ",
    "{\"",
    "\"}",
    "true",
    "false",
    "true,",
    "false,",
    "{\"ambiguity\": ",
    "\"explanation\": ",
    "\"clarifying_question\": ",
    "ambiguity",
    "explanation",
    "clarifying_question",
    "block",
    "bowl",
    "blocks",
    "bowls",
    " block",
    " bowl",
    "red",
    "green",
    "blue",
    "yellow",
    "orange",
    "purple",
    " red",
    " green",
    " blue",
    " yellow",
    " orange",
    " purple",
    "leftmost",
    "rightmost",
    "frontmost",
    "backmost",
    " leftmost",
    " rightmost",
    " frontmost",
    " backmost",
    "the",
    " the",
    "Which",
    " one",
    " do",
    " you",
    " mean",
    "?",
    " is",
    " are",
    " there",
    " only",
    " two",
    " several",
    " matching",
    " object",
    " objects",
    " scene",
    " task",
    " refers",
    " to",
    " a",
    " single",
    " unique",
    "\\\"",
    "\\n",
];
