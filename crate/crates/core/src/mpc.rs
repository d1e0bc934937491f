//! MostPopularCompletion over a character trie with per-node counts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"NQACTRIE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TrieError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a trie file (bad magic)")]
    BadMagic,
    #[error("unsupported trie format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt trie file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    /// Sorted by character.
    children: Vec<(char, u32)>,
    completion_count: u64,
    subtree_total: u64,
    /// Largest completion count anywhere in the subtree; bounds best-first search.
    best: u64,
}

/// Immutable character trie. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountedTrie {
    nodes: Vec<Node>,
}

impl Default for CountedTrie {
    fn default() -> Self {
        Self { nodes: vec![Node::default()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStats {
    pub completion_count: u64,
    pub subtree_total: u64,
}

impl CountedTrie {
    pub fn build<'a, I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (&'a String, &'a u64)>,
    {
        let mut trie = Self::default();
        for (query, &count) in counts {
            let mut node = 0usize;
            for c in query.chars() {
                node = trie.child_or_insert(node, c);
            }
            trie.nodes[node].completion_count += count;
        }
        let mut trie = trie.preorder();
        trie.finalize();
        trie
    }

    /// Renumber nodes in preorder, the layout the file format produces.
    fn preorder(self) -> Self {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        // (old id, new parent id)
        let mut stack = vec![(0usize, None::<(usize, char)>)];
        while let Some((old, parent)) = stack.pop() {
            let id = nodes.len();
            nodes.push(Node { completion_count: self.nodes[old].completion_count, ..Node::default() });
            if let Some((p, c)) = parent {
                let siblings: &mut Vec<(char, u32)> = &mut nodes[p].children;
                siblings.push((c, id as u32));
            }
            for &(c, child) in self.nodes[old].children.iter().rev() {
                stack.push((child as usize, Some((id, c))));
            }
        }
        Self { nodes }
    }

    fn child_or_insert(&mut self, node: usize, c: char) -> usize {
        match self.nodes[node].children.binary_search_by_key(&c, |&(k, _)| k) {
            Ok(i) => self.nodes[node].children[i].1 as usize,
            Err(i) => {
                let id = self.nodes.len();
                self.nodes.push(Node::default());
                self.nodes[node].children.insert(i, (c, id as u32));
                id
            }
        }
    }

    /// Recompute subtree totals and bounds. Children always have larger ids
    /// than their parent, so a reverse sweep is a post-order.
    fn finalize(&mut self) {
        for id in (0..self.nodes.len()).rev() {
            let (mut total, mut best) = (self.nodes[id].completion_count, self.nodes[id].completion_count);
            for &(_, child) in &self.nodes[id].children {
                let ch = &self.nodes[child as usize];
                total += ch.subtree_total;
                best = best.max(ch.best);
            }
            self.nodes[id].subtree_total = total;
            self.nodes[id].best = best;
        }
    }

    fn walk(&self, prefix: &str) -> Option<usize> {
        let mut node = 0usize;
        for c in prefix.chars() {
            let children = &self.nodes[node].children;
            let i = children.binary_search_by_key(&c, |&(k, _)| k).ok()?;
            node = children[i].1 as usize;
        }
        Some(node)
    }

    pub fn node_stats(&self, prefix: &str) -> Option<NodeStats> {
        self.walk(prefix).map(|n| NodeStats { completion_count: self.nodes[n].completion_count, subtree_total: self.nodes[n].subtree_total })
    }

    pub fn total(&self) -> u64 {
        self.nodes[0].subtree_total
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// True iff some stored query starts with `prefix`. O(|prefix|).
    pub fn is_seen(&self, prefix: &str) -> bool {
        self.walk(prefix).is_some_and(|n| self.nodes[n].subtree_total > 0)
    }

    /// Top `k` completions of `prefix` by count, ties by ascending text.
    pub fn complete(&self, prefix: &str, k: usize) -> Vec<(String, u64)> {
        let Some(start) = self.walk(prefix) else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(k);
        let mut heap = BinaryHeap::new();
        heap.push(Entry { score: self.nodes[start].best, text: prefix.to_string(), node: Some(start) });
        while let Some(entry) = heap.pop() {
            if out.len() >= k {
                break;
            }
            match entry.node {
                None => out.push((entry.text, entry.score)),
                Some(id) => {
                    let node = &self.nodes[id];
                    if node.completion_count > 0 {
                        heap.push(Entry { score: node.completion_count, text: entry.text.clone(), node: None });
                    }
                    for &(c, child) in &node.children {
                        let ch = &self.nodes[child as usize];
                        if ch.subtree_total == 0 {
                            continue;
                        }
                        let mut text = entry.text.clone();
                        text.push(c);
                        heap.push(Entry { score: ch.best, text, node: Some(child as usize) });
                    }
                }
            }
        }
        out
    }

    /// All stored queries with their counts, in lexicographic order.
    pub fn entries(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, String::new())];
        while let Some((id, text)) = stack.pop() {
            let node = &self.nodes[id];
            if node.completion_count > 0 {
                out.push((text.clone(), node.completion_count));
            }
            for &(c, child) in node.children.iter().rev() {
                let mut t = text.clone();
                t.push(c);
                stack.push((child as usize, t));
            }
        }
        out
    }

    pub fn to_counts(&self) -> BTreeMap<String, u64> {
        self.entries().into_iter().collect()
    }

    /// Binary layout: magic, u32 version, u64 node count, then nodes in
    /// preorder as (u64 completion_count, u32 child count, then per child a
    /// u32 code point followed by the child's own record). Little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TrieError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.nodes.len() as u64).to_le_bytes())?;
        // explicit stack: (node, Some(char) if it is a child record)
        let mut stack: Vec<(usize, Option<char>)> = vec![(0, None)];
        while let Some((id, label)) = stack.pop() {
            if let Some(c) = label {
                w.write_all(&(c as u32).to_le_bytes())?;
            }
            let node = &self.nodes[id];
            w.write_all(&node.completion_count.to_le_bytes())?;
            w.write_all(&(node.children.len() as u32).to_le_bytes())?;
            for &(c, child) in node.children.iter().rev() {
                stack.push((child as usize, Some(c)));
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TrieError> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(TrieError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(TrieError::UnsupportedVersion(version));
        }
        let declared = read_u64(&mut r)?;
        let mut trie = CountedTrie { nodes: Vec::new() };
        let completion_count = read_u64(&mut r)?;
        let n_children = read_u32(&mut r)?;
        trie.nodes.push(Node { completion_count, ..Node::default() });
        // open nodes with the number of child records still to read
        let mut open: Vec<(usize, u32)> = vec![(0, n_children)];
        while let Some(top) = open.last_mut() {
            if top.1 == 0 {
                open.pop();
                continue;
            }
            top.1 -= 1;
            let parent = top.0;
            let code = read_u32(&mut r)?;
            let c = char::from_u32(code).ok_or_else(|| TrieError::Corrupt(format!("invalid code point {code}")))?;
            let completion_count = read_u64(&mut r)?;
            let n_children = read_u32(&mut r)?;
            let id = trie.nodes.len();
            if id as u64 >= declared {
                return Err(TrieError::Corrupt("more nodes than declared".into()));
            }
            let children = &mut trie.nodes[parent].children;
            if children.last().is_some_and(|&(prev, _)| prev >= c) {
                return Err(TrieError::Corrupt("children out of order".into()));
            }
            children.push((c, id as u32));
            trie.nodes.push(Node { completion_count, ..Node::default() });
            open.push((id, n_children));
        }
        if trie.nodes.len() as u64 != declared {
            return Err(TrieError::Corrupt(format!("declared {declared} nodes, read {}", trie.nodes.len())));
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(TrieError::Corrupt("trailing bytes".into()));
        }
        trie.finalize();
        Ok(trie)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TrieError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TrieError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), TrieError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TrieError::Corrupt("truncated file".into()),
        _ => TrieError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TrieError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, TrieError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Heap entry: either an unexplored subtree (score = best count below) or a
/// finished completion (score = its count).
#[derive(Debug, PartialEq, Eq)]
struct Entry {
    score: u64,
    text: String,
    node: Option<usize>,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: higher score first, then smaller text, then completions
        // before subtrees with the same text
        self.score.cmp(&other.score).then_with(|| other.text.cmp(&self.text)).then_with(|| other.node.is_some().cmp(&self.node.is_some()))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
