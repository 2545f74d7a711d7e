use std::collections::BTreeMap;

/// Union-find over arbitrary ordered keys. The root of every set is its
/// smallest key, so component representatives are canonical.
#[derive(Debug, Default, Clone)]
pub(crate) struct UnionFind<K: Ord + Clone> {
    parent: BTreeMap<K, K>,
}

impl<K: Ord + Clone> UnionFind<K> {
    pub(crate) fn new() -> Self {
        UnionFind {
            parent: BTreeMap::new(),
        }
    }

    pub(crate) fn insert(&mut self, key: K) {
        self.parent.entry(key.clone()).or_insert(key);
    }

    pub(crate) fn find(&mut self, key: &K) -> K {
        self.insert(key.clone());
        let mut root = key.clone();
        loop {
            let next = self.parent[&root].clone();
            if next == root {
                break;
            }
            root = next;
        }
        // path compression
        let mut cur = key.clone();
        while cur != root {
            let next = self.parent[&cur].clone();
            self.parent.insert(cur, root.clone());
            cur = next;
        }
        root
    }

    /// Returns the surviving root (the smaller of the two roots).
    pub(crate) fn union(&mut self, a: &K, b: &K) -> K {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return ra;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent.insert(drop, keep.clone());
        keep
    }

    /// Components as sorted member lists, ordered by their smallest member.
    pub(crate) fn components(&mut self) -> Vec<Vec<K>> {
        let keys: Vec<K> = self.parent.keys().cloned().collect();
        let mut groups: BTreeMap<K, Vec<K>> = BTreeMap::new();
        for k in keys {
            let root = self.find(&k);
            groups.entry(root).or_default().push(k);
        }
        groups.into_values().collect()
    }
}
