//! Places a generated dataset on the cluster's engines.

use serde::Serialize;

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::gen::{generate, Dataset, GenSpec};
use crate::lang::Island;

pub const PATIENTS: &str = "patients";
pub const ADMISSIONS: &str = "admissions";
pub const VITALS: &str = "vitals";
pub const NOTES: &str = "notes";

/// Engine name per object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub patients: String,
    pub admissions: String,
    pub vitals: String,
    pub notes: String,
}

impl Placement {
    /// Everything on the lowest-eid engine of its island.
    pub fn single(cluster: &Cluster) -> Result<Placement> {
        let first = |island| cluster.first_engine(island).map(|h| h.name.clone());
        let rel = first(Island::Relational)?;
        Ok(Placement {
            patients: rel.clone(),
            admissions: rel,
            vitals: first(Island::Array)?,
            notes: first(Island::Text)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadedObject {
    pub name: String,
    pub engine: String,
    pub island: Island,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub objects: Vec<LoadedObject>,
}

pub fn load(cluster: &Cluster, spec: &GenSpec, placement: &Placement, replace: bool) -> Result<LoadSummary> {
    load_dataset(cluster, generate(spec), placement, replace)
}

/// Without `replace`, any existing object fails the load before anything
/// is written.
pub fn load_dataset(cluster: &Cluster, data: Dataset, placement: &Placement, replace: bool) -> Result<LoadSummary> {
    let names = [PATIENTS, ADMISSIONS, VITALS, NOTES];
    for name in names {
        match cluster.catalog().resolve(name) {
            Ok(_) if replace => cluster.drop_object(name)?,
            Ok(_) => return Err(Error::DuplicateObject(name.to_string())),
            Err(Error::NoSuchObject(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let Dataset {
        patients,
        admissions,
        vitals,
        notes,
    } = data;
    let counts = [patients.1.len(), admissions.1.len(), vitals.cells.len(), notes.len()];
    cluster.create_table(&placement.patients, PATIENTS, patients.0, patients.1)?;
    cluster.create_table(&placement.admissions, ADMISSIONS, admissions.0, admissions.1)?;
    cluster.create_array(&placement.vitals, VITALS, vitals.dims, vitals.attrs, vitals.cells)?;
    cluster.create_kv(&placement.notes, NOTES, notes)?;

    let engines = [&placement.patients, &placement.admissions, &placement.vitals, &placement.notes];
    let islands = [Island::Relational, Island::Relational, Island::Array, Island::Text];
    let objects = names
        .iter()
        .zip(engines)
        .zip(islands)
        .zip(counts)
        .map(|(((name, engine), island), count)| {
            log::info!("- loaded object={name} engine={engine} count={count}");
            LoadedObject {
                name: name.to_string(),
                engine: engine.clone(),
                island,
                count,
            }
        })
        .collect();
    Ok(LoadSummary { objects })
}
