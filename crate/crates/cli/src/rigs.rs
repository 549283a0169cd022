use std::path::{Path, PathBuf};

use skelrig::curation::{LABELS_SUFFIX, MESH_SUFFIX, SKELETON_SUFFIX};
use skelrig::groups::{ingest_labels, Annotation, Taxonomy};
use skelrig::{Skeleton, TriMesh};

use crate::error::{CliError, Result};

pub fn skeleton_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{SKELETON_SUFFIX}"))
}

pub fn labels_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{LABELS_SUFFIX}"))
}

pub fn mesh_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{MESH_SUFFIX}"))
}

/// Applies a labels file when given. Humanoid and tetrapod skeletons must be
/// labeled one way or another; "other" skeletons ignore labels.
pub fn attach_labels(
    skeleton: Skeleton,
    labels: Option<&Path>,
    taxonomy: Option<&Taxonomy>,
    id: &str,
) -> Result<Skeleton> {
    let Some(builtin) = Taxonomy::for_category(skeleton.category()) else {
        return Ok(skeleton);
    };
    match labels {
        Some(path) => {
            let ann = Annotation::load(path)?;
            Ok(ingest_labels(&skeleton, &ann, taxonomy.unwrap_or(&builtin))?)
        }
        None if skeleton.is_labeled() => Ok(skeleton),
        None => Err(CliError::MissingLabel {
            id: id.to_string(),
            category: skeleton.category(),
        }),
    }
}

/// Loads `<id>.skel.json`, its labels file when the category needs one, and `<id>.obj`.
pub fn load_rig(dir: &Path, id: &str) -> Result<(Skeleton, TriMesh)> {
    let skeleton = Skeleton::load(&skeleton_path(dir, id))?;
    let lp = labels_path(dir, id);
    let skeleton = attach_labels(skeleton, lp.exists().then_some(lp.as_path()), None, id)?;
    let mp = mesh_path(dir, id);
    if !mp.exists() {
        return Err(CliError::MissingPath(mp));
    }
    Ok((skeleton, TriMesh::load(&mp)?))
}

/// File stem of a path, without a `.skel.json` or single extension.
pub fn id_of(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    match name.strip_suffix(SKELETON_SUFFIX) {
        Some(id) => id.to_string(),
        None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use skelrig::synth::{synth_rig, write_rig};
    use skelrig::Category;

    #[test]
    fn humanoid_needs_labels() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        write_rig(dir.path(), "h", &synth_rig(&mut rng, Category::Humanoid, 25)).unwrap();
        write_rig(dir.path(), "o", &synth_rig(&mut rng, Category::Other, 8)).unwrap();
        let (s, _) = load_rig(dir.path(), "h").unwrap();
        assert!(s.is_labeled());
        assert!(load_rig(dir.path(), "o").is_ok());
        std::fs::remove_file(labels_path(dir.path(), "h")).unwrap();
        assert!(matches!(
            load_rig(dir.path(), "h"),
            Err(CliError::MissingLabel { category: Category::Humanoid, .. })
        ));
    }

    #[test]
    fn ids_from_paths() {
        assert_eq!(id_of(Path::new("a/rig_7.skel.json")), "rig_7");
        assert_eq!(id_of(Path::new("x.tok")), "x");
    }
}
