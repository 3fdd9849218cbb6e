//! Worker profiles from StackExchange data dumps.
//!
//! A post's popularity ratio is `up / (up + down)`; a user's skill on a tag is
//! the mean ratio of their posts carrying that tag. Answers carry no tags in
//! the dumps and inherit their question's.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::{write_workers, WorkerProfile};

pub const VOTE_UP: u32 = 2;
pub const VOTE_DOWN: u32 = 3;

/// The ten common skills used for the STACK workload.
pub const DEFAULT_TAGS: [&str; 10] = [".net", "html", "javascript", "css", "php", "c", "c#", "c++", "ruby", "lisp"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("XML error in {path}: {source}")]
    Xml { path: String, source: quick_xml::Error },
    #[error("empty profile table")]
    Empty,
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: u64,
    pub owner_user_id: u64,
    pub tags: BTreeSet<String>,
    pub upvotes: u64,
    pub downvotes: u64,
}

/// `user → tag → skill in [0, 1]`.
pub type SkillProfileTable = BTreeMap<u64, BTreeMap<String, f64>>;

/// Parses either `<a><b>` or `|a|b|` tag lists.
pub fn parse_tag_list(s: &str) -> BTreeSet<String> {
    let s = s.trim();
    if s.starts_with('|') {
        s.split('|').filter(|t| !t.is_empty()).map(str::to_owned).collect()
    } else {
        s.split(['<', '>']).filter(|t| !t.is_empty()).map(str::to_owned).collect()
    }
}

fn attributes(e: &BytesStart<'_>) -> std::result::Result<HashMap<String, String>, String> {
    e.attributes()
        .map(|a| {
            let a = a.map_err(|err| err.to_string())?;
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a.unescape_value().map_err(|err| err.to_string())?.into_owned();
            Ok((key, value))
        })
        .collect()
}

/// Calls `on_row` with the attributes of every `<row …/>` element.
fn for_each_row<R: BufRead>(
    reader: R,
    path: &str,
    mut on_row: impl FnMut(&HashMap<String, String>),
) -> Result<()> {
    let mut reader = Reader::from_reader(reader);
    let mut buf = Vec::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Empty(e)) | Ok(Event::Start(e)) if e.name().as_ref() == b"row" => match attributes(&e) {
                Ok(attrs) => on_row(&attrs),
                Err(err) => warn!("{path}: skipping malformed row at byte {}: {err}", reader.buffer_position()),
            },
            Ok(Event::Eof) => return Ok(()),
            Ok(_) => {}
            Err(source) => return Err(IngestError::Xml { path: path.to_owned(), source }),
        }
        buf.clear();
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

fn field<T: std::str::FromStr>(attrs: &HashMap<String, String>, key: &str) -> Option<T> {
    attrs.get(key).and_then(|v| v.parse().ok())
}

struct RawPost {
    id: u64,
    owner: Option<u64>,
    parent: Option<u64>,
    tags: BTreeSet<String>,
}

/// Joins posts with their vote tallies. Answers take their parent question's
/// tags; posts without an owner are dropped.
pub fn parse_posts_and_votes<P: BufRead, V: BufRead>(posts: P, votes: V) -> Result<Vec<PostRecord>> {
    let mut raw = Vec::new();
    for_each_row(posts, "posts", |attrs| {
        let Some(id) = field::<u64>(attrs, "Id") else {
            warn!("posts: skipping row without a numeric Id");
            return;
        };
        raw.push(RawPost {
            id,
            owner: field(attrs, "OwnerUserId"),
            parent: field(attrs, "ParentId"),
            tags: attrs.get("Tags").map(|t| parse_tag_list(t)).unwrap_or_default(),
        });
    })?;
    let mut tallies: HashMap<u64, (u64, u64)> = HashMap::new();
    for_each_row(votes, "votes", |attrs| {
        let (Some(post), Some(kind)) = (field::<u64>(attrs, "PostId"), field::<u32>(attrs, "VoteTypeId")) else {
            warn!("votes: skipping row without PostId/VoteTypeId");
            return;
        };
        let entry = tallies.entry(post).or_default();
        match kind {
            VOTE_UP => entry.0 += 1,
            VOTE_DOWN => entry.1 += 1,
            _ => {}
        }
    })?;
    let question_tags: HashMap<u64, BTreeSet<String>> =
        raw.iter().filter(|p| !p.tags.is_empty()).map(|p| (p.id, p.tags.clone())).collect();
    Ok(raw
        .into_iter()
        .filter_map(|p| {
            let owner = p.owner?;
            let tags = if p.tags.is_empty() {
                p.parent.and_then(|q| question_tags.get(&q).cloned()).unwrap_or_default()
            } else {
                p.tags
            };
            let (upvotes, downvotes) = tallies.get(&p.id).copied().unwrap_or((0, 0));
            Some(PostRecord { post_id: p.id, owner_user_id: owner, tags, upvotes, downvotes })
        })
        .collect())
}

/// Tag names listed in a Tags dump, in file order.
pub fn parse_tags<R: BufRead>(tags: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for_each_row(tags, "tags", |attrs| match attrs.get("TagName") {
        Some(name) => out.push(name.clone()),
        None => warn!("tags: skipping row without TagName"),
    })?;
    Ok(out)
}

/// Reads the three dump files. Returns the posts and the tag names of the
/// Tags dump.
pub fn parse_dumps(posts_path: &Path, votes_path: &Path, tags_path: &Path) -> Result<(Vec<PostRecord>, Vec<String>)> {
    let posts = parse_posts_and_votes(open(posts_path)?, open(votes_path)?)?;
    let tags = parse_tags(open(tags_path)?)?;
    Ok((posts, tags))
}

/// `up / (up + down)`, undefined without votes.
pub fn popularity_ratio(up: u64, down: u64) -> Option<f64> {
    (up + down > 0).then(|| up as f64 / (up + down) as f64)
}

/// Mean popularity ratio per user and tag, restricted to `whitelist` when
/// given. Users without any positive skill are dropped.
pub fn build_profiles(posts: &[PostRecord], whitelist: Option<&BTreeSet<String>>) -> SkillProfileTable {
    let mut sums: BTreeMap<u64, BTreeMap<String, (f64, u64)>> = BTreeMap::new();
    for p in posts {
        let Some(r) = popularity_ratio(p.upvotes, p.downvotes) else {
            continue;
        };
        for tag in p.tags.iter().filter(|t| whitelist.is_none_or(|w| w.contains(*t))) {
            let e = sums.entry(p.owner_user_id).or_default().entry(tag.clone()).or_default();
            e.0 += r;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(user, tags)| (user, tags.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect::<BTreeMap<_, _>>()))
        .filter(|(_, skills)| skills.values().any(|&v| v > 0.0))
        .collect()
}

/// Dimension order and worker-index ↔ user mapping of a projected table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagManifest {
    pub tags: Vec<String>,
    pub user_ids: Vec<u64>,
}

/// Projects the table onto `tags` (absent tags are 0), users in id order.
pub fn project(table: &SkillProfileTable, tags: &[String]) -> (Vec<WorkerProfile>, TagManifest) {
    let workers = table
        .values()
        .map(|skills| WorkerProfile::new(tags.iter().map(|t| skills.get(t).copied().unwrap_or(0.0)).collect()))
        .collect();
    (workers, TagManifest { tags: tags.to_vec(), user_ids: table.keys().copied().collect() })
}

/// Profile file (workload column format) and pretty JSON manifest.
pub fn render_profiles(table: &SkillProfileTable, tags: &[String]) -> (String, String) {
    let (workers, manifest) = project(table, tags);
    (write_workers(&workers), serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n")
}

/// STACK workload: `count` profiles drawn uniformly with replacement.
pub fn sample_stack_workers<R: Rng + ?Sized>(profiles: &[WorkerProfile], count: usize, rng: &mut R) -> Result<Vec<WorkerProfile>> {
    if profiles.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok((0..count).map(|_| profiles[rng.random_range(0..profiles.len())].clone()).collect())
}

/// Per tag: number of users with a positive skill and their mean skill.
pub fn tag_frequency_csv(table: &SkillProfileTable, tags: &[String]) -> String {
    let mut out = String::from("tag,users,mean_skill\n");
    for tag in tags {
        let values: Vec<f64> = table.values().filter_map(|s| s.get(tag).copied()).filter(|&v| v > 0.0).collect();
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
        out.push_str(&format!("{tag},{},{mean}\n", values.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const POSTS: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<posts>
  <row Id="1" PostTypeId="1" OwnerUserId="10" Tags="&lt;python&gt;&lt;c&gt;" />
  <row Id="2" PostTypeId="2" ParentId="1" OwnerUserId="11" />
  <row Id="3" PostTypeId="1" OwnerUserId="12" Tags="|ruby|" />
  <row PostTypeId="1" OwnerUserId="13" />
  <row Id="4" PostTypeId="1" Tags="&lt;c&gt;" />
</posts>"#;

    const VOTES: &str = r#"<votes>
  <row Id="1" PostId="1" VoteTypeId="2" />
  <row Id="2" PostId="1" VoteTypeId="2" />
  <row Id="3" PostId="1" VoteTypeId="2" />
  <row Id="4" PostId="1" VoteTypeId="3" />
  <row Id="5" PostId="2" VoteTypeId="1" />
  <row Id="6" PostId="3" VoteTypeId="3" />
</votes>"#;

    #[test]
    fn join_and_inherit() {
        let posts = parse_posts_and_votes(POSTS.as_bytes(), VOTES.as_bytes()).unwrap();
        assert_eq!(posts.len(), 3);
        assert_eq!((posts[0].upvotes, posts[0].downvotes), (3, 1));
        assert_eq!(posts[1].tags, parse_tag_list("<c><python>"));
        assert_eq!((posts[1].upvotes, posts[1].downvotes), (0, 0));
        assert_eq!(posts[2].tags, ["ruby".to_owned()].into_iter().collect());
    }

    #[test]
    fn empty_votes() {
        let posts = parse_posts_and_votes(POSTS.as_bytes(), "<votes></votes>".as_bytes()).unwrap();
        assert!(posts.iter().all(|p| p.upvotes == 0 && p.downvotes == 0));
    }

    #[test]
    fn ratio() {
        assert_eq!(popularity_ratio(3, 1), Some(0.75));
        assert_eq!(popularity_ratio(0, 5), Some(0.0));
        assert_eq!(popularity_ratio(0, 0), None);
    }

    fn post(id: u64, user: u64, tags: &[&str], up: u64, down: u64) -> PostRecord {
        PostRecord { post_id: id, owner_user_id: user, tags: tags.iter().map(|t| t.to_string()).collect(), upvotes: up, downvotes: down }
    }

    #[test]
    fn mean_and_removal() {
        let posts = [post(1, 1, &["c"], 1, 0), post(2, 1, &["c"], 1, 1), post(3, 2, &["c"], 0, 0), post(4, 3, &["c"], 0, 4)];
        let table = build_profiles(&posts, None);
        assert_eq!(table.len(), 1);
        assert_eq!(table[&1]["c"], 0.75);
    }

    #[test]
    fn whitelist_restricts() {
        let posts = [post(1, 1, &["c", "go"], 1, 0)];
        let wl: BTreeSet<String> = ["c".to_owned()].into_iter().collect();
        let table = build_profiles(&posts, Some(&wl));
        assert_eq!(table[&1].keys().collect::<Vec<_>>(), vec!["c"]);
    }
}
