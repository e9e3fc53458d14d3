pub mod compare;
pub mod estimate;
pub mod evaluate;
pub mod generate;
pub mod train;

use std::path::Path;

use relage_core::data::Subject;
use relage_core::Result;

/// Load a manifest and split it into (held-out fold, remaining folds).
pub fn split_holdout(manifest: &Path, fold: usize) -> Result<(Vec<Subject>, Vec<Subject>)> {
    let subjects = relage_core::data::load_dataset(manifest)?;
    let (test, train): (Vec<_>, Vec<_>) = subjects.into_iter().partition(|s| s.fold == fold);
    if test.is_empty() {
        return Err(relage_core::Error::InvalidArgument(format!(
            "manifest has no subjects in fold {fold}"
        )));
    }
    Ok((test, train))
}
