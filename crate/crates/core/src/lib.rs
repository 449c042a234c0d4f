//! Binary tries over a bounded universe {0..2^b - 1}.
//!
//! [`RelaxedTrie`] is wait-free but its predecessor may answer
//! [`Relaxed::Bottom`] under contention. [`LockFreeTrie`] layers update and
//! predecessor announcements on the same trie to get a linearizable
//! predecessor.

pub mod error;
pub mod node;
pub mod prims;
pub mod recovery;
pub mod relaxed;
pub mod set;
pub mod steps;
pub mod trace;
pub mod trie;

pub use error::{Error, Result, MAX_BITS};
pub use node::Kind;
pub use relaxed::RelaxedTrie;
pub use set::{Announcements, LockFreeTrie};
pub use trace::{OpKind, Site, TraceEvent, TraceHook};
pub use trie::{Relaxed, TrieNode};
