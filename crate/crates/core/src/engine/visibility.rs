use std::collections::BTreeSet;
use std::fmt;

use crate::crdt::Flag;
use crate::schema::{Catalog, ConcurrencyPolicy};

use super::{Row, RowKey, Store};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VisibilityCause {
    AllClear,
    /// Update-wins row whose only flag is `D`.
    OnlyD,
    /// Delete-wins row carrying a `D` flag.
    AnyD,
    /// No flag was ever written.
    NeverInserted,
    ParentDeleted,
    /// The referenced parent generation was deleted and the key re-inserted.
    ParentVersionStale,
}

impl fmt::Display for VisibilityCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisibilityCause::AllClear => "AllClear",
            VisibilityCause::OnlyD => "OnlyD",
            VisibilityCause::AnyD => "AnyD",
            VisibilityCause::NeverInserted => "NeverInserted",
            VisibilityCause::ParentDeleted => "ParentDeleted",
            VisibilityCause::ParentVersionStale => "ParentVersionStale",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VisibilityVerdict {
    pub visible: bool,
    pub cause: VisibilityCause,
}

impl VisibilityVerdict {
    const VISIBLE: VisibilityVerdict = VisibilityVerdict {
        visible: true,
        cause: VisibilityCause::AllClear,
    };

    fn hidden(cause: VisibilityCause) -> Self {
        Self {
            visible: false,
            cause,
        }
    }
}

/// Verdict from a row's own flags. `T` outranks `D` under every policy;
/// rows of tables without a policy follow the update-wins rule.
pub fn flags_verdict(flags: &BTreeSet<Flag>, policy: ConcurrencyPolicy) -> VisibilityVerdict {
    if flags.is_empty() {
        return VisibilityVerdict::hidden(VisibilityCause::NeverInserted);
    }
    if flags.contains(&Flag::T) {
        return VisibilityVerdict::VISIBLE;
    }
    match policy {
        ConcurrencyPolicy::DeleteWins if flags.contains(&Flag::D) => {
            VisibilityVerdict::hidden(VisibilityCause::AnyD)
        }
        ConcurrencyPolicy::UpdateWins | ConcurrencyPolicy::NoConcurrency
            if flags.len() == 1 && flags.contains(&Flag::D) =>
        {
            VisibilityVerdict::hidden(VisibilityCause::OnlyD)
        }
        _ => VisibilityVerdict::VISIBLE,
    }
}

/// Full verdict: own flags, then every referenced parent. Delete-wins
/// references additionally require the parent to still be at the recorded
/// generation.
pub fn is_visible(row: &Row, catalog: &Catalog, store: &Store) -> VisibilityVerdict {
    let mut path = BTreeSet::new();
    verdict(row, catalog, store, &mut path)
}

fn verdict<'a>(
    row: &'a Row,
    catalog: &Catalog,
    store: &'a Store,
    path: &mut BTreeSet<&'a RowKey>,
) -> VisibilityVerdict {
    let Some(schema) = catalog.table(&row.key.table) else {
        return VisibilityVerdict::hidden(VisibilityCause::NeverInserted);
    };
    let own = flags_verdict(&row.flags(), schema.row_policy);
    if !own.visible {
        return own;
    }
    if !path.insert(&row.key) {
        // Reference cycle: judge the rest of the cycle on flags alone.
        return own;
    }
    let mut out = own;
    for (col, fk) in schema.foreign_keys() {
        let Some(parent_ref) = row.fk_ref(&col.name) else {
            continue;
        };
        let parent_ok = match store.row(&parent_ref.key) {
            Some(parent) => verdict(parent, catalog, store, path).visible,
            None => false,
        };
        if !parent_ok {
            out = VisibilityVerdict::hidden(VisibilityCause::ParentDeleted);
            break;
        }
        if fk.policy == ConcurrencyPolicy::DeleteWins {
            let current = store.row(&parent_ref.key).map_or(0, |p| p.pvr);
            if current != parent_ref.pvr {
                out = VisibilityVerdict::hidden(VisibilityCause::ParentVersionStale);
                break;
            }
        }
    }
    path.remove(&row.key);
    out
}
