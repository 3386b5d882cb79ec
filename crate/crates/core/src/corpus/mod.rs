//! Corpus of C programs grouped into software components, plus the registry
//! of known Controller-Handler instances.
//!
//! A corpus directory holds `.c`/`.h` files and a `manifest.json` at its root:
//!
//! ```json
//! {
//!   "components": [
//!     {"id": "hatch_ctrl", "name": "Roof hatch controller", "role": "controller",
//!      "files": ["hatch/hatch_ctrl.c"]}
//!   ],
//!   "instances": [
//!     {"id": "roof_hatch", "controller": "hatch_ctrl", "handler": "hatch_hdl"}
//!   ]
//! }
//! ```
//!
//! Program ids are the corpus-relative file paths with `/` separators.

pub mod fixture;
mod queries;
mod triplets;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Component as PathComponent, Path};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use queries::{
    benchmark_instances_for, benchmark_pairs_for, sample_negative_queries, unroll_instances,
    unrolled_members, LeaveOut, Polarity, QueryPair,
};
pub use triplets::{build_role_triplets, build_swc_triplets, Triplet, TripletKind};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Controller,
    Handler,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProgram {
    pub id: String,
    pub path: String,
    pub text: String,
    pub swc_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftwareComponent {
    pub id: String,
    pub name: String,
    pub program_ids: Vec<String>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternInstance {
    pub instance_id: String,
    pub controller_swc: String,
    pub handler_swc: String,
}

/// On-disk manifest schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub components: Vec<ManifestComponent>,
    #[serde(default)]
    pub instances: Vec<ManifestInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestComponent {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub role: Role,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub id: String,
    pub controller: String,
    pub handler: String,
}

/// Immutable, validated corpus. Programs are ordered by path.
#[derive(Debug, Clone)]
pub struct Corpus {
    programs: Vec<SourceProgram>,
    components: Vec<SoftwareComponent>,
    instances: Vec<PatternInstance>,
    program_index: HashMap<String, usize>,
    component_index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates and assembles a corpus from already-loaded parts.
    pub fn from_parts(
        mut programs: Vec<SourceProgram>,
        mut components: Vec<SoftwareComponent>,
        instances: Vec<PatternInstance>,
    ) -> Result<Self> {
        programs.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.id.cmp(&b.id)));
        let mut program_index = HashMap::with_capacity(programs.len());
        for (i, p) in programs.iter().enumerate() {
            if p.text.is_empty() {
                return Err(Error::EmptyProgram(p.id.clone()));
            }
            if program_index.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateProgram(p.id.clone()));
            }
        }

        let mut component_index = HashMap::with_capacity(components.len());
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for (i, c) in components.iter_mut().enumerate() {
            if component_index.insert(c.id.clone(), i).is_some() {
                return Err(Error::DuplicateComponent(c.id.clone()));
            }
            if c.program_ids.is_empty() {
                return Err(Error::EmptyComponent(c.id.clone()));
            }
            c.program_ids.sort();
        }
        for c in &components {
            for pid in &c.program_ids {
                let Some(&idx) = program_index.get(pid) else {
                    return Err(Error::UnknownProgram {
                        component: c.id.clone(),
                        program: pid.clone(),
                    });
                };
                if owner.insert(pid, &c.id).is_some() {
                    return Err(Error::DuplicateProgram(pid.clone()));
                }
                if programs[idx].swc_id != c.id {
                    return Err(Error::UnknownProgram {
                        component: c.id.clone(),
                        program: pid.clone(),
                    });
                }
            }
        }
        if let Some(orphan) = programs.iter().find(|p| !owner.contains_key(p.id.as_str())) {
            return Err(Error::UnknownProgram {
                component: orphan.swc_id.clone(),
                program: orphan.id.clone(),
            });
        }

        let mut seen = BTreeSet::new();
        for inst in &instances {
            if !seen.insert(inst.instance_id.as_str()) {
                return Err(Error::InvalidInstance {
                    instance: inst.instance_id.clone(),
                    message: "duplicate instance id".into(),
                });
            }
            if inst.controller_swc == inst.handler_swc {
                return Err(Error::InvalidInstance {
                    instance: inst.instance_id.clone(),
                    message: "controller and handler are the same component".into(),
                });
            }
            for (swc, want) in [
                (&inst.controller_swc, Role::Controller),
                (&inst.handler_swc, Role::Handler),
            ] {
                match component_index.get(swc) {
                    None => {
                        return Err(Error::InvalidInstance {
                            instance: inst.instance_id.clone(),
                            message: format!("unknown component {swc}"),
                        })
                    }
                    Some(&ci) if components[ci].role != want => {
                        return Err(Error::InvalidInstance {
                            instance: inst.instance_id.clone(),
                            message: format!(
                                "component {swc} has role {:?}, expected {want:?}",
                                components[ci].role
                            ),
                        })
                    }
                    Some(_) => {}
                }
            }
        }

        Ok(Corpus {
            programs,
            components,
            instances,
            program_index,
            component_index,
        })
    }

    pub fn programs(&self) -> &[SourceProgram] {
        &self.programs
    }

    pub fn components(&self) -> &[SoftwareComponent] {
        &self.components
    }

    /// The pattern registry.
    pub fn instances(&self) -> &[PatternInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn program(&self, id: &str) -> Option<&SourceProgram> {
        self.program_index.get(id).map(|&i| &self.programs[i])
    }

    pub fn component(&self, id: &str) -> Option<&SoftwareComponent> {
        self.component_index.get(id).map(|&i| &self.components[i])
    }

    pub fn instance(&self, id: &str) -> Option<&PatternInstance> {
        self.instances.iter().find(|i| i.instance_id == id)
    }

    pub fn component_of(&self, program_id: &str) -> Option<&SoftwareComponent> {
        self.program(program_id).and_then(|p| self.component(&p.swc_id))
    }

    pub fn role_of(&self, program_id: &str) -> Option<Role> {
        self.component_of(program_id).map(|c| c.role)
    }

    /// Program ids whose component has the given role, ordered by id.
    pub fn programs_with_role(&self, role: Role) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .components
            .iter()
            .filter(|c| c.role == role)
            .flat_map(|c| c.program_ids.iter().map(String::as_str))
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn summary(&self) -> CorpusSummary {
        let mut roles = BTreeMap::new();
        for c in &self.components {
            *roles.entry(c.role).or_insert(0usize) += c.program_ids.len();
        }
        CorpusSummary {
            programs: self.programs.len(),
            components: self.components.len(),
            instances: self.instances.len(),
            unrolled_pairs: self
                .instances
                .iter()
                .map(|i| {
                    let c = self.component(&i.controller_swc).map_or(0, |c| c.program_ids.len());
                    let h = self.component(&i.handler_swc).map_or(0, |c| c.program_ids.len());
                    c * h
                })
                .sum(),
            programs_by_role: roles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub programs: usize,
    pub components: usize,
    pub instances: usize,
    pub unrolled_pairs: usize,
    pub programs_by_role: BTreeMap<Role, usize>,
}

fn normalize_relative(path: &str) -> Option<String> {
    let p = Path::new(path);
    let mut parts = Vec::new();
    for comp in p.components() {
        match comp {
            PathComponent::Normal(s) => parts.push(s.to_str()?.to_owned()),
            PathComponent::CurDir => {}
            _ => return None,
        }
    }
    if parts.is_empty() {
        None
    } else {
        Some(parts.join("/"))
    }
}

/// Loads `root_dir/manifest.json` and every file it names.
pub fn load_corpus(root_dir: &Path) -> Result<Corpus> {
    let manifest_path = root_dir.join(MANIFEST_FILE);
    let manifest: Manifest = crate::io::read_json(&manifest_path)?;
    load_corpus_with_manifest(root_dir, &manifest)
}

pub fn load_corpus_with_manifest(root_dir: &Path, manifest: &Manifest) -> Result<Corpus> {
    if !root_dir.is_dir() {
        return Err(Error::MissingFile(root_dir.display().to_string()));
    }
    let mut programs = Vec::new();
    let mut components = Vec::with_capacity(manifest.components.len());
    let mut seen = BTreeSet::new();
    for mc in &manifest.components {
        let mut ids = Vec::with_capacity(mc.files.len());
        for file in &mc.files {
            let rel = normalize_relative(file).ok_or_else(|| Error::UnknownProgram {
                component: mc.id.clone(),
                program: file.clone(),
            })?;
            if !seen.insert(rel.clone()) {
                return Err(Error::DuplicateProgram(rel));
            }
            let full = root_dir.join(&rel);
            let bytes = match std::fs::read(&full) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(Error::MissingFile(rel))
                }
                Err(e) => return Err(Error::io(full, e)),
            };
            programs.push(SourceProgram {
                id: rel.clone(),
                path: rel.clone(),
                text: String::from_utf8_lossy(&bytes).into_owned(),
                swc_id: mc.id.clone(),
            });
            ids.push(rel);
        }
        components.push(SoftwareComponent {
            id: mc.id.clone(),
            name: if mc.name.is_empty() { mc.id.clone() } else { mc.name.clone() },
            program_ids: ids,
            role: mc.role,
        });
    }
    let instances = manifest
        .instances
        .iter()
        .map(|mi| PatternInstance {
            instance_id: mi.id.clone(),
            controller_swc: mi.controller.clone(),
            handler_swc: mi.handler.clone(),
        })
        .collect();
    Corpus::from_parts(programs, components, instances)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub(crate) fn corpus(spec: &[(&str, Role, &[&str])], instances: &[(&str, &str, &str)]) -> Corpus {
        let mut programs = Vec::new();
        let mut comps = Vec::new();
        for (id, role, files) in spec {
            for f in *files {
                programs.push(SourceProgram {
                    id: f.to_string(),
                    path: f.to_string(),
                    text: format!("int {};", f.replace('.', "_")),
                    swc_id: id.to_string(),
                });
            }
            comps.push(SoftwareComponent {
                id: id.to_string(),
                name: id.to_string(),
                program_ids: files.iter().map(|s| s.to_string()).collect(),
                role: *role,
            });
        }
        let inst = instances
            .iter()
            .map(|(i, c, h)| PatternInstance {
                instance_id: i.to_string(),
                controller_swc: c.to_string(),
                handler_swc: h.to_string(),
            })
            .collect();
        Corpus::from_parts(programs, comps, inst).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, rel: &str, text: &str) {
        let p = dir.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }

    fn small_manifest() -> Manifest {
        serde_json::from_str(
            r#"{
              "components": [
                {"id": "ctrl", "name": "Hatch controller", "role": "controller", "files": ["a.c", "b.c"]},
                {"id": "hdl", "role": "handler", "files": ["sub/c.c"]}
              ],
              "instances": [{"id": "hatch", "controller": "ctrl", "handler": "hdl"}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn loads_three_files_two_components_one_instance() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.c", "int a = 1;");
        write(dir.path(), "b.c", "int b = 2;");
        write(dir.path(), "sub/c.c", "void f(void) {}");
        crate::io::write_json(&dir.path().join(MANIFEST_FILE), &small_manifest()).unwrap();

        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.instances().len(), 1);
        assert_eq!(corpus.programs()[2].id, "sub/c.c");
        assert_eq!(corpus.role_of("a.c"), Some(Role::Controller));
        assert_eq!(corpus.component("hdl").unwrap().name, "hdl");
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.c", "int a;");
        write(dir.path(), "b.c", "int b;");
        let err = load_corpus_with_manifest(dir.path(), &small_manifest()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(ref f) if f == "sub/c.c"), "{err}");
        assert!(err.to_string().contains("missing file"));
    }

    #[test]
    fn duplicate_program_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.c", "int a;");
        let m: Manifest = serde_json::from_str(
            r#"{"components": [
                {"id": "x", "role": "other", "files": ["a.c"]},
                {"id": "y", "role": "other", "files": ["./a.c"]}
            ]}"#,
        )
        .unwrap();
        let err = load_corpus_with_manifest(dir.path(), &m).unwrap_err();
        assert!(matches!(err, Error::DuplicateProgram(_)));
    }

    #[test]
    fn instance_role_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.c", "int a;");
        write(dir.path(), "b.c", "int b;");
        let m: Manifest = serde_json::from_str(
            r#"{"components": [
                {"id": "x", "role": "controller", "files": ["a.c"]},
                {"id": "y", "role": "other", "files": ["b.c"]}
            ], "instances": [{"id": "i", "controller": "x", "handler": "y"}]}"#,
        )
        .unwrap();
        let err = load_corpus_with_manifest(dir.path(), &m).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance { .. }));

        let m2: Manifest = serde_json::from_str(
            r#"{"components": [
                {"id": "x", "role": "controller", "files": ["a.c"]}
            ], "instances": [{"id": "i", "controller": "x", "handler": "nope"}]}"#,
        )
        .unwrap();
        write(dir.path(), "a.c", "int a;");
        assert!(matches!(
            load_corpus_with_manifest(dir.path(), &m2).unwrap_err(),
            Error::InvalidInstance { .. }
        ));
    }

    #[test]
    fn path_escaping_root_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m: Manifest = serde_json::from_str(
            r#"{"components": [{"id": "x", "role": "other", "files": ["../etc/passwd"]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_corpus_with_manifest(dir.path(), &m).unwrap_err(),
            Error::UnknownProgram { .. }
        ));
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.c"), b"int \xff x;").unwrap();
        let m: Manifest = serde_json::from_str(
            r#"{"components": [{"id": "x", "role": "other", "files": ["a.c"]}]}"#,
        )
        .unwrap();
        let corpus = load_corpus_with_manifest(dir.path(), &m).unwrap();
        assert!(corpus.programs()[0].text.contains('\u{FFFD}'));
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.c", "");
        let m: Manifest = serde_json::from_str(
            r#"{"components": [{"id": "x", "role": "other", "files": ["a.c"]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_corpus_with_manifest(dir.path(), &m).unwrap_err(),
            Error::EmptyProgram(_)
        ));
    }
}
