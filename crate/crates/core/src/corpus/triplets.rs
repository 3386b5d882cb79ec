use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletKind {
    Swc,
    ControllerRole,
    HandlerRole,
}

/// Anchor/positive/negative program ids for triplet training.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
    pub kind: TripletKind,
}

fn pick_two<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> (&'a str, &'a str) {
    let i = rng.gen_range(0..pool.len());
    let mut j = rng.gen_range(0..pool.len() - 1);
    if j >= i {
        j += 1;
    }
    (pool[i], pool[j])
}

/// Triplets where anchor and positive share a component and the negative
/// comes from a different one.
pub fn build_swc_triplets(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<Triplet>> {
    let anchors: Vec<(&str, &super::SoftwareComponent)> = corpus
        .components()
        .iter()
        .filter(|c| c.program_ids.len() >= 2)
        .flat_map(|c| c.program_ids.iter().map(move |p| (p.as_str(), c)))
        .collect();
    if anchors.is_empty() {
        return Err(Error::Insufficient(
            "no component has at least two programs".into(),
        ));
    }
    if corpus.components().len() < 2 {
        return Err(Error::Insufficient("only one component in corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (anchor, comp) = anchors[rng.gen_range(0..anchors.len())];
        let positive = loop {
            let p = comp.program_ids.choose(&mut rng).expect("non-empty");
            if p != anchor {
                break p;
            }
        };
        let outside: Vec<&str> = corpus
            .programs()
            .iter()
            .filter(|p| p.swc_id != comp.id)
            .map(|p| p.id.as_str())
            .collect();
        let negative = outside[rng.gen_range(0..outside.len())];
        out.push(Triplet {
            anchor: anchor.to_owned(),
            positive: positive.clone(),
            negative: negative.to_owned(),
            kind: TripletKind::Swc,
        });
    }
    Ok(out)
}

struct RolePool<'a> {
    members: Vec<&'a str>,
    others: Vec<&'a str>,
    kind: TripletKind,
}

impl<'a> RolePool<'a> {
    fn new(corpus: &'a Corpus, role: Role, kind: TripletKind) -> Self {
        let members = corpus.programs_with_role(role);
        let others = corpus
            .programs()
            .iter()
            .map(|p| p.id.as_str())
            .filter(|id| corpus.role_of(id) != Some(role))
            .collect();
        RolePool {
            members,
            others,
            kind,
        }
    }

    fn usable(&self) -> bool {
        self.members.len() >= 2 && !self.others.is_empty()
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Triplet {
        let (anchor, positive) = pick_two(rng, &self.members);
        let negative = self.others[rng.gen_range(0..self.others.len())];
        Triplet {
            anchor: anchor.to_owned(),
            positive: positive.to_owned(),
            negative: negative.to_owned(),
            kind: self.kind,
        }
    }
}

/// Controller-role and handler-role triplets, alternating when both role
/// pools are large enough (two members and one outsider each).
pub fn build_role_triplets(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<Triplet>> {
    let pools: Vec<RolePool> = [
        RolePool::new(corpus, Role::Controller, TripletKind::ControllerRole),
        RolePool::new(corpus, Role::Handler, TripletKind::HandlerRole),
    ]
    .into_iter()
    .filter(RolePool::usable)
    .collect();
    if pools.is_empty() {
        return Err(Error::Insufficient(
            "need two programs of a role and one program outside it".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|i| pools[i % pools.len()].draw(&mut rng)).collect())
}
