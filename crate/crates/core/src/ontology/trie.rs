use std::collections::HashMap;

/// Trie over token sequences. Each terminal node stores the index of the
/// term that ends there.
#[derive(Clone, Debug, Default)]
pub struct TokenTrie {
    nodes: Vec<TrieNode>,
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    term: Option<usize>,
}

impl TokenTrie {
    pub fn new() -> Self {
        TokenTrie {
            nodes: vec![TrieNode::default()],
        }
    }

    /// Inserts a term; returns false if it was already present.
    pub fn insert(&mut self, tokens: &[String], term: usize) -> bool {
        let mut node = 0;
        for tok in tokens {
            node = match self.nodes[node].children.get(tok) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[node].children.insert(tok.clone(), next);
                    next
                }
            };
        }
        if self.nodes[node].term.is_some() {
            return false;
        }
        self.nodes[node].term = Some(term);
        true
    }

    pub fn contains(&self, tokens: &[String]) -> bool {
        self.walk(tokens).and_then(|n| self.nodes[n].term).is_some()
    }

    fn walk(&self, tokens: &[String]) -> Option<usize> {
        let mut node = 0;
        for tok in tokens {
            node = *self.nodes.get(node)?.children.get(tok)?;
        }
        Some(node)
    }

    /// Longest term that is a prefix of `tokens`: `(length, term index)`.
    pub fn longest_prefix(&self, tokens: &[String]) -> Option<(usize, usize)> {
        let mut node = 0;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate() {
            match self.nodes.get(node).and_then(|n| n.children.get(tok)) {
                Some(&next) => node = next,
                None => break,
            }
            if let Some(term) = self.nodes[node].term {
                best = Some((i + 1, term));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn longest_prefix_prefers_longer() {
        let mut trie = TokenTrie::new();
        trie.insert(&t("pleural"), 0);
        trie.insert(&t("pleural effusion"), 1);
        assert_eq!(trie.longest_prefix(&t("pleural effusion small")), Some((2, 1)));
        assert_eq!(trie.longest_prefix(&t("pleural thickening")), Some((1, 0)));
        assert_eq!(trie.longest_prefix(&t("effusion")), None);
        assert!(!trie.insert(&t("pleural"), 5));
        assert!(trie.contains(&t("pleural effusion")));
        assert!(!trie.contains(&t("pleural effusion small")));
    }

    #[test]
    fn inner_node_without_term_does_not_match() {
        let mut trie = TokenTrie::new();
        trie.insert(&t("a b c"), 0);
        assert_eq!(trie.longest_prefix(&t("a b")), None);
        assert_eq!(trie.longest_prefix(&t("a b c d")), Some((3, 0)));
    }
}
