//! Headline relevance through an entity graph.
//!
//! A headline counts as relevant to the traded organization when one of its
//! tokens (or a contiguous run of tokens, for multi-word names) names an
//! entity within `max_distance` hops of the organization node.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DISTANCE: usize = 5;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Organization,
    Person,
    Product,
    Other,
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "organization" => Ok(EntityKind::Organization),
            "person" => Ok(EntityKind::Person),
            "product" => Ok(EntityKind::Product),
            "other" => Ok(EntityKind::Other),
            other => Err(format!("unknown entity kind `{other}`")),
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::Organization => "Organization",
            EntityKind::Person => "Person",
            EntityKind::Product => "Product",
            EntityKind::Other => "Other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub name: String,
}

/// Undirected, unweighted entity graph.
#[derive(Debug, Clone, Default)]
pub struct EntityGraph {
    nodes: Vec<Entity>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl EntityGraph {
    /// Builds a graph, rejecting duplicate ids, dangling endpoints and
    /// self-loops. Repeated edges collapse into one.
    pub fn new(nodes: Vec<Entity>, edges: &[(String, String)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate node id `{}`", node.id)));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::new();
        for (a, b) in edges {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::Integrity(format!("edge endpoint `{a}` is not a declared node")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::Integrity(format!("edge endpoint `{b}` is not a declared node")))?;
            if ia == ib {
                return Err(Error::Integrity(format!("self-loop on `{a}`")));
            }
            if seen.insert((ia.min(ib), ia.max(ib))) {
                adjacency[ia].push(ib);
                adjacency[ib].push(ia);
            }
        }
        Ok(Self {
            nodes,
            index,
            adjacency,
            edge_count: seen.len(),
        })
    }

    pub fn nodes(&self) -> &[Entity] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn node(&self, id: &str) -> Option<&Entity> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    fn require(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("unknown node id `{id}`")))
    }

    /// Hop counts from `source` to every node, `None` where unreachable.
    pub fn distances_from(&self, source: &str) -> Result<Vec<Option<usize>>> {
        let start = self.require(source)?;
        let mut dist = vec![None; self.nodes.len()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let next = dist[u].map(|d| d + 1);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = next;
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Shortest-path length in edges; `Ok(None)` when no path exists.
    pub fn graph_distance(&self, a: &str, b: &str) -> Result<Option<usize>> {
        let target = self.require(b)?;
        Ok(self.distances_from(a)?[target])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("N\t{}\t{}\t{}\n", n.id, n.kind, n.name));
        }
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &j in nbrs.iter().filter(|&&j| j > i) {
                out.push_str(&format!("E\t{}\t{}\n", self.nodes[i].id, self.nodes[j].id));
            }
        }
        out
    }
}

pub fn load_entity_graph(path: impl AsRef<Path>) -> Result<EntityGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_entity_graph(file, &path.display().to_string())
}

/// Parses `N<TAB>id<TAB>kind<TAB>name` and `E<TAB>id1<TAB>id2` lines;
/// `#` starts a comment line and blank lines are ignored.
pub fn read_entity_graph<R: Read>(reader: R, source_name: &str) -> Result<EntityGraph> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "N" if fields.len() == 4 => {
                let kind = fields[2]
                    .parse()
                    .map_err(|msg: String| Error::parse(source_name, lineno, msg))?;
                let id = fields[1].trim();
                let name = fields[3].trim();
                if id.is_empty() || name.is_empty() {
                    return Err(Error::parse(source_name, lineno, "node id and name must be non-empty"));
                }
                nodes.push(Entity {
                    id: id.to_string(),
                    kind,
                    name: name.to_string(),
                });
            }
            "E" if fields.len() == 3 => {
                edges.push((fields[1].trim().to_string(), fields[2].trim().to_string()));
            }
            _ => {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    "expected `N\\tid\\tkind\\tname` or `E\\tid1\\tid2`",
                ))
            }
        }
    }
    EntityGraph::new(nodes, &edges)
}

pub fn default_stopwords() -> HashSet<String> {
    parse_word_list(DEFAULT_STOPWORDS)
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Maximal alphanumeric runs, lowercased, with stopwords dropped.
pub fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !stopwords.contains(t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Headline {
    pub date: NaiveDate,
    pub text: String,
}

impl Headline {
    pub fn new(date: NaiveDate, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Argument(format!("headline on {date} has empty text")));
        }
        Ok(Self { date, text })
    }
}

pub fn load_headlines(path: impl AsRef<Path>) -> Result<Vec<Headline>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_headlines(file, &path.display().to_string())
}

/// Reads a `date,text` CSV with RFC 4180 quoting.
pub fn read_headlines<R: Read>(reader: R, source_name: &str) -> Result<Vec<Headline>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if i == 0 {
            let fields: Vec<&str> = rec.iter().map(|f| f.trim().trim_start_matches('\u{feff}')).collect();
            if fields != ["date", "text"] {
                return Err(Error::parse(source_name, line, "expected header `date,text`"));
            }
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::parse(source_name, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|e| Error::parse(source_name, line, format!("bad date `{}`: {e}", &rec[0])))?;
        let headline = Headline::new(date, &rec[1]).map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        out.push(headline);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RelevanceConfig {
    pub org_node_id: String,
    pub max_distance: usize,
    pub stopwords: HashSet<String>,
}

impl RelevanceConfig {
    pub fn new(org_node_id: impl Into<String>) -> Self {
        Self {
            org_node_id: org_node_id.into(),
            max_distance: DEFAULT_MAX_DISTANCE,
            stopwords: default_stopwords(),
        }
    }
}

/// Relevance test with the organization's distance map precomputed; each
/// query is linear in the headline's token count.
#[derive(Debug, Clone)]
pub struct RelevanceFilter {
    /// Tokenized entity name -> smallest hop distance among entities with that name.
    names: HashMap<Vec<String>, usize>,
    longest_name: usize,
    max_distance: usize,
    stopwords: HashSet<String>,
}

impl RelevanceFilter {
    pub fn new(graph: &EntityGraph, cfg: &RelevanceConfig) -> Result<Self> {
        let org = graph
            .node(&cfg.org_node_id)
            .ok_or_else(|| Error::Config(format!("organization node `{}` is not in the graph", cfg.org_node_id)))?;
        if org.kind != EntityKind::Organization {
            return Err(Error::Config(format!(
                "node `{}` has kind {}, expected Organization",
                org.id, org.kind
            )));
        }
        let dist = graph.distances_from(&cfg.org_node_id)?;
        let mut names: HashMap<Vec<String>, usize> = HashMap::new();
        for (node, d) in graph.nodes().iter().zip(dist) {
            let Some(d) = d else { continue };
            let key = tokenize(&node.name, &cfg.stopwords);
            if key.is_empty() {
                continue;
            }
            names.entry(key).and_modify(|best| *best = (*best).min(d)).or_insert(d);
        }
        let longest_name = names.keys().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            names,
            longest_name,
            max_distance: cfg.max_distance,
            stopwords: cfg.stopwords.clone(),
        })
    }

    /// Smallest hop distance of any entity named in `text`, if any is named.
    pub fn closest_mention(&self, text: &str) -> Option<usize> {
        let tokens = tokenize(text, &self.stopwords);
        let mut best: Option<usize> = None;
        for start in 0..tokens.len() {
            let max_len = self.longest_name.min(tokens.len() - start);
            for len in 1..=max_len {
                if let Some(&d) = self.names.get(&tokens[start..start + len]) {
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        best
    }

    pub fn is_relevant(&self, headline: &Headline) -> bool {
        self.closest_mention(&headline.text)
            .is_some_and(|d| d <= self.max_distance)
    }
}

pub fn is_relevant(graph: &EntityGraph, headline: &Headline, cfg: &RelevanceConfig) -> Result<bool> {
    Ok(RelevanceFilter::new(graph, cfg)?.is_relevant(headline))
}
