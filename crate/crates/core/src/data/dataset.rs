use std::collections::HashMap;
use std::sync::Arc;

use crate::numkernel::Matrix;

use super::{DataError, Result};

/// Dense index ↔ external id mapping for one entity kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    external: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new(external: Vec<String>) -> Self {
        let index = external.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        IdMap { external, index }
    }

    /// Identity mapping `0..n` rendered as decimal strings.
    pub fn sequential(n: usize) -> Self {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn external(&self, dense: usize) -> &str {
        &self.external[dense]
    }

    pub fn dense(&self, external: &str) -> Option<usize> {
        self.index.get(external).copied()
    }
}

/// Users, items, the interactions between them and the trust graph.
///
/// Trust lists, features and id maps are reference counted so that the
/// splits of one dataset share them without copying.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    num_users: usize,
    num_items: usize,
    interactions: Vec<Vec<usize>>,
    num_interactions: usize,
    trust: Arc<Vec<Vec<usize>>>,
    user_features: Option<Arc<Matrix>>,
    item_features: Option<Arc<Matrix>>,
    user_ids: Arc<IdMap>,
    item_ids: Arc<IdMap>,
}

impl Dataset {
    /// Builds a dataset from dense parts, checking every invariant.
    ///
    /// Interaction and trust lists are sorted here; duplicates and self-loops
    /// are rejected. Feature matrices hold one row per entity.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        interactions: Vec<Vec<usize>>,
        trust: Vec<Vec<usize>>,
        user_features: Option<Matrix>,
        item_features: Option<Matrix>,
    ) -> Result<Self> {
        let ds = Dataset {
            num_users,
            num_items,
            num_interactions: 0,
            interactions,
            trust: Arc::new(trust),
            user_features: user_features.map(Arc::new),
            item_features: item_features.map(Arc::new),
            user_ids: Arc::new(IdMap::sequential(num_users)),
            item_ids: Arc::new(IdMap::sequential(num_items)),
        };
        ds.validated()
    }

    pub(crate) fn with_ids(mut self, user_ids: IdMap, item_ids: IdMap) -> Result<Self> {
        if user_ids.len() != self.num_users || item_ids.len() != self.num_items {
            return Err(DataError::Invalid("id map sizes disagree with entity counts".into()));
        }
        self.user_ids = Arc::new(user_ids);
        self.item_ids = Arc::new(item_ids);
        Ok(self)
    }

    /// Same users, items, graph and features with a different interaction set.
    pub(crate) fn with_interactions(&self, mut interactions: Vec<Vec<usize>>) -> Self {
        interactions.iter_mut().for_each(|l| l.sort_unstable());
        let num_interactions = interactions.iter().map(Vec::len).sum();
        Dataset {
            interactions,
            num_interactions,
            ..self.clone()
        }
    }

    fn validated(mut self) -> Result<Self> {
        if self.interactions.len() != self.num_users {
            return Err(DataError::Invalid(format!(
                "{} interaction lists for {} users",
                self.interactions.len(),
                self.num_users
            )));
        }
        if self.trust.len() != self.num_users {
            return Err(DataError::Invalid(format!(
                "{} trust lists for {} users",
                self.trust.len(),
                self.num_users
            )));
        }
        for (u, items) in self.interactions.iter_mut().enumerate() {
            items.sort_unstable();
            if let Some(&bad) = items.iter().find(|&&i| i >= self.num_items) {
                return Err(DataError::Invalid(format!("user {u} rated item {bad} >= {}", self.num_items)));
            }
            if items.windows(2).any(|w| w[0] == w[1]) {
                return Err(DataError::Invalid(format!("user {u} has a duplicate interaction")));
            }
        }
        let trust = Arc::make_mut(&mut self.trust);
        for (u, list) in trust.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(&bad) = list.iter().find(|&&v| v >= self.num_users) {
                return Err(DataError::Invalid(format!("user {u} trusts unknown user {bad}")));
            }
            if list.binary_search(&u).is_ok() {
                return Err(DataError::Invalid(format!("user {u} trusts itself")));
            }
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(DataError::Invalid(format!("user {u} has a duplicate trust edge")));
            }
        }
        if let Some(x) = &self.user_features {
            if x.rows() != self.num_users {
                return Err(DataError::Invalid(format!(
                    "user features cover {} users, expected {}",
                    x.rows(),
                    self.num_users
                )));
            }
        }
        if let Some(y) = &self.item_features {
            if y.rows() != self.num_items {
                return Err(DataError::Invalid(format!(
                    "item features cover {} items, expected {}",
                    y.rows(),
                    self.num_items
                )));
            }
        }
        self.num_interactions = self.interactions.iter().map(Vec::len).sum();
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_interactions(&self) -> usize {
        self.num_interactions
    }

    /// Sorted positive items of `user`.
    pub fn items_of(&self, user: usize) -> &[usize] {
        &self.interactions[user]
    }

    pub fn interactions(&self) -> &[Vec<usize>] {
        &self.interactions
    }

    pub fn has_interaction(&self, user: usize, item: usize) -> bool {
        self.interactions[user].binary_search(&item).is_ok()
    }

    /// Sorted ids of the users `user` trusts.
    pub fn trusted_by(&self, user: usize) -> &[usize] {
        &self.trust[user]
    }

    pub fn trust_lists(&self) -> &[Vec<usize>] {
        &self.trust
    }

    pub fn num_trust_edges(&self) -> usize {
        self.trust.iter().map(Vec::len).sum()
    }

    pub fn user_features(&self) -> Option<&Matrix> {
        self.user_features.as_deref()
    }

    pub fn item_features(&self) -> Option<&Matrix> {
        self.item_features.as_deref()
    }

    pub fn user_feature_dim(&self) -> usize {
        self.user_features.as_ref().map_or(0, |m| m.cols())
    }

    pub fn item_feature_dim(&self) -> usize {
        self.item_features.as_ref().map_or(0, |m| m.cols())
    }

    pub fn user_ids(&self) -> &IdMap {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &IdMap {
        &self.item_ids
    }

    /// Iterates `(user, item)` pairs in user-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.interactions
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    /// True when both datasets describe the same users, items, graph and features.
    pub fn same_universe(&self, other: &Dataset) -> bool {
        self.num_users == other.num_users
            && self.num_items == other.num_items
            && (Arc::ptr_eq(&self.trust, &other.trust) || self.trust == other.trust)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_sorts() {
        let ds = Dataset::from_parts(2, 3, vec![vec![2, 1], vec![0]], vec![vec![1], vec![]], None, None).unwrap();
        assert_eq!(ds.items_of(0), &[1, 2]);
        assert_eq!(ds.num_interactions(), 3);
        assert_eq!(ds.num_trust_edges(), 1);
        assert!(ds.has_interaction(1, 0));
        assert_eq!(ds.pairs().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 0)]);
    }

    #[test]
    fn rejects_invariant_violations() {
        let bad_item = Dataset::from_parts(1, 2, vec![vec![2]], vec![vec![]], None, None);
        assert!(bad_item.is_err());
        let dup = Dataset::from_parts(1, 2, vec![vec![1, 1]], vec![vec![]], None, None);
        assert!(dup.is_err());
        let self_loop = Dataset::from_parts(2, 1, vec![vec![], vec![]], vec![vec![0], vec![]], None, None);
        assert!(self_loop.is_err());
        let feats = Dataset::from_parts(2, 1, vec![vec![], vec![]], vec![vec![], vec![]], Some(Matrix::zeros(3, 2)), None);
        assert!(feats.is_err());
    }
}
