use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Token alphabet with reserved unknown and padding entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocab {
    pub const UNK: usize = 0;
    pub const PAD: usize = 1;
    pub const UNK_TOKEN: &'static str = "<unk>";
    pub const PAD_TOKEN: &'static str = "<pad>";

    pub fn new() -> Self {
        Vocab::from(vec![Self::UNK_TOKEN.to_string(), Self::PAD_TOKEN.to_string()])
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.ids.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        id
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    /// Id of `token`, or [`Vocab::UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::new()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let mut v = Vocab {
            ids: HashMap::with_capacity(tokens.len()),
            tokens: Vec::with_capacity(tokens.len()),
        };
        for t in tokens {
            v.insert(&t);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}
