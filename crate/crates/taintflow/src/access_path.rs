//! Interned, k-limited access paths: the dataflow fact domain.
//!
//! An access path `x.f.g` is a base variable followed by a bounded sequence
//! of field names. Paths are hash-consed so that equality between facts is a
//! constant-time handle comparison, and every path longer than `k` is
//! represented by the [`TooLong`] sentinel, which callers treat as "drop the
//! fact".

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use smallvec::SmallVec;

/// Interned identifier (variable, field, label, class or method name).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NameId(pub u32);

/// Name of the pseudo-variable that stands for a method's return value.
pub const RET_NAME: &str = "<ret>";

/// String interner for identifiers. `<ret>` is always `NameId(0)`.
#[derive(Debug, Default)]
pub struct NameTable {
    names: Vec<String>,
    index: HashMap<String, NameId>,
}

impl NameTable {
    pub fn new() -> Self {
        let mut t = NameTable::default();
        t.intern(RET_NAME);
        t
    }

    pub fn intern(&mut self, s: &str) -> NameId {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = NameId(self.names.len() as u32);
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }

    pub fn get(&self, s: &str) -> Option<NameId> {
        self.index.get(s).copied()
    }

    pub fn resolve(&self, id: NameId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn ret(&self) -> NameId {
        NameId(0)
    }
}

/// Field sequence; inline storage covers the default k=5 plus slack.
pub type FieldSeq = SmallVec<[NameId; 6]>;

/// Handle to an interned access path. Equal content implies equal handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ApId(u32);

/// A dataflow fact: either the null fact `0` or an access path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fact {
    Zero,
    Ap(ApId),
}

impl Fact {
    pub fn is_zero(&self) -> bool {
        matches!(self, Fact::Zero)
    }
}

/// Sentinel returned when a construction would exceed the k bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TooLong;

/// Access-path length bound. Defaults to k=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KConfig {
    k: usize,
}

impl KConfig {
    /// Builds a bound; `k` must be at least 1.
    pub fn new(k: usize) -> Option<KConfig> {
        if k >= 1 {
            Some(KConfig { k })
        } else {
            None
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Default for KConfig {
    fn default() -> Self {
        KConfig { k: 5 }
    }
}

#[derive(Debug, Default)]
struct PathTable {
    data: Vec<(NameId, Box<[NameId]>)>,
    index: HashMap<(NameId, Box<[NameId]>), ApId>,
}

/// Flyweight store for access paths. One interner serves a whole analysis
/// run; handles are freely shareable across threads while the table itself
/// synchronizes concurrent lookups and inserts internally.
#[derive(Debug, Default)]
pub struct Interner {
    paths: Mutex<PathTable>,
}

impl Interner {
    pub fn new() -> Self {
        Interner::default()
    }

    /// Interns `base.fields`, enforcing the k bound.
    pub fn make(&self, base: NameId, fields: &[NameId], cfg: KConfig) -> Result<ApId, TooLong> {
        if fields.len() > cfg.k {
            return Err(TooLong);
        }
        Ok(self.intern_unchecked(base, fields))
    }

    /// Interns a bare variable path.
    pub fn var(&self, base: NameId) -> ApId {
        self.intern_unchecked(base, &[])
    }

    fn intern_unchecked(&self, base: NameId, fields: &[NameId]) -> ApId {
        let mut tab = self.paths.lock().unwrap();
        if let Some(&id) = tab.index.get(&(base, Box::from(fields))) {
            return id;
        }
        let id = ApId(tab.data.len() as u32);
        tab.data.push((base, Box::from(fields)));
        tab.index.insert((base, Box::from(fields)), id);
        id
    }

    pub fn base(&self, ap: ApId) -> NameId {
        self.paths.lock().unwrap().data[ap.0 as usize].0
    }

    pub fn fields(&self, ap: ApId) -> FieldSeq {
        let tab = self.paths.lock().unwrap();
        SmallVec::from_slice(&tab.data[ap.0 as usize].1)
    }

    pub fn parts(&self, ap: ApId) -> (NameId, FieldSeq) {
        let tab = self.paths.lock().unwrap();
        let (b, ref fs) = tab.data[ap.0 as usize];
        (b, SmallVec::from_slice(fs))
    }

    /// Prepends `prefix` under a new base, mirroring the load case's
    /// `m + n > k` check: `prepend(x.f1..fn, z, g1..gm)` is `z.g1..gm.f1..fn`
    /// unless the combined length exceeds k.
    pub fn prepend(
        &self,
        ap: ApId,
        new_base: NameId,
        prefix: &[NameId],
        cfg: KConfig,
    ) -> Result<ApId, TooLong> {
        let (_, fields) = self.parts(ap);
        if prefix.len() + fields.len() > cfg.k {
            return Err(TooLong);
        }
        let mut combined: FieldSeq = SmallVec::from_slice(prefix);
        combined.extend_from_slice(&fields);
        Ok(self.intern_unchecked(new_base, &combined))
    }

    /// Removes `prefix` from the front of the field sequence, returning the
    /// remainder. `None` when the prefix does not match or is longer than
    /// the path.
    pub fn strip_prefix(&self, ap: ApId, prefix: &[NameId]) -> Option<FieldSeq> {
        let (_, fields) = self.parts(ap);
        if prefix.len() > fields.len() || &fields[..prefix.len()] != prefix {
            return None;
        }
        Some(SmallVec::from_slice(&fields[prefix.len()..]))
    }

    /// Canonical textual rendering `base.f1.f2...`.
    pub fn render(&self, ap: ApId, names: &NameTable) -> String {
        let (base, fields) = self.parts(ap);
        let mut s = names.resolve(base).to_string();
        for f in &fields {
            s.push('.');
            s.push_str(names.resolve(*f));
        }
        s
    }

    pub fn render_fact(&self, fact: Fact, names: &NameTable) -> String {
        match fact {
            Fact::Zero => "0".to_string(),
            Fact::Ap(ap) => self.render(ap, names),
        }
    }
}

impl fmt::Display for TooLong {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "access path exceeds k")
    }
}
