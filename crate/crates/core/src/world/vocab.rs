use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{mix, normal, seeded};

/// Width of the shared concept space.
pub const LATENT_DIM: usize = 32;
/// Width of rendered visual features.
pub const FEATURE_DIM: usize = 64;
pub const HEADINGS: usize = 12;

pub const PAD: usize = 0;
pub const CLS: usize = 1;
pub const MASK: usize = 2;

const SPECIALS: [&str; 3] = ["[PAD]", "[CLS]", "[MASK]"];
pub const TEMPLATE_WORDS: [&str; 6] = ["go", "stop", "at", "the", "find", "in"];

const DIRECTION_WORDS: [&str; HEADINGS] = [
    "east", "east-northeast", "north-northeast", "north", "north-northwest", "west-northwest", "west",
    "west-southwest", "south-southwest", "south", "south-southeast", "east-southeast",
];
const ROOM_WORDS: [&str; 10] = [
    "kitchen", "bedroom", "bathroom", "hallway", "office", "lounge", "garage", "dining", "laundry", "study",
];
const OBJECT_WORDS: [&str; 24] = [
    "sofa", "table", "chair", "lamp", "bed", "sink", "oven", "desk", "plant", "mirror", "clock", "shelf",
    "piano", "vase", "rug", "television", "fridge", "bench", "painting", "stool", "dresser", "curtain",
    "bathtub", "cabinet",
];

/// Latent component scale; latents have norm ≈ `LATENT_SCALE·√LATENT_DIM`.
const LATENT_SCALE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConceptKind {
    Room,
    Object,
    Direction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VocabSizes {
    pub rooms: usize,
    pub objects: usize,
}

impl Default for VocabSizes {
    fn default() -> Self {
        VocabSizes { rooms: 8, objects: 16 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Concept {
    pub kind: ConceptKind,
    pub name: String,
    pub latent: Vec<f64>,
}

/// Closed vocabulary over a shared latent space: the same concept latent
/// generates both rendered views and the word embedding of its name.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptVocabulary {
    pub sizes: VocabSizes,
    pub seed: u64,
    concepts: Vec<Concept>,
    tokens: Vec<String>,
    token_concept: Vec<Option<usize>>,
    word_embeddings: Vec<Vec<f64>>,
    /// `FEATURE_DIM × LATENT_DIM`, orthonormal columns.
    lift: Vec<f64>,
}

fn name_for(list: &[&str], prefix: &str, i: usize) -> String {
    list.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("{prefix}{i}"))
}

impl ConceptVocabulary {
    pub fn generate(sizes: VocabSizes, seed: u64, word_noise: f64) -> Result<Self> {
        if sizes.rooms == 0 || sizes.objects == 0 {
            return Err(Error::Argument("vocabulary needs at least one room and one object".into()));
        }
        let mut rng = seeded(mix(seed, 0x766f_6361_62));
        let latent = |rng: &mut crate::rng::SeededRng| -> Vec<f64> { (0..LATENT_DIM).map(|_| LATENT_SCALE * normal(rng)).collect() };

        let mut concepts = Vec::new();
        for i in 0..sizes.rooms {
            concepts.push(Concept {
                kind: ConceptKind::Room,
                name: name_for(&ROOM_WORDS, "room", i),
                latent: latent(&mut rng),
            });
        }
        for i in 0..sizes.objects {
            concepts.push(Concept {
                kind: ConceptKind::Object,
                name: name_for(&OBJECT_WORDS, "object", i),
                latent: latent(&mut rng),
            });
        }
        for name in DIRECTION_WORDS {
            concepts.push(Concept {
                kind: ConceptKind::Direction,
                name: name.to_string(),
                latent: latent(&mut rng),
            });
        }

        let mut tokens: Vec<String> = SPECIALS.iter().chain(TEMPLATE_WORDS.iter()).map(|s| s.to_string()).collect();
        let mut token_concept = alloc::vec![None; tokens.len()];
        let mut word_embeddings: Vec<Vec<f64>> = (0..tokens.len()).map(|_| latent(&mut rng)).collect();
        word_embeddings[PAD] = alloc::vec![0.0; LATENT_DIM];
        for (c, concept) in concepts.iter().enumerate() {
            tokens.push(concept.name.clone());
            token_concept.push(Some(c));
            word_embeddings.push(concept.latent.iter().map(|v| v + word_noise * normal(&mut rng)).collect());
        }

        let lift = orthonormal_columns(&mut rng, FEATURE_DIM, LATENT_DIM);
        let vocab = ConceptVocabulary {
            sizes,
            seed,
            concepts,
            tokens,
            token_concept,
            word_embeddings,
            lift,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    /// Rebuilds a vocabulary from stored parts, checking its invariants.
    pub fn from_parts(
        sizes: VocabSizes,
        seed: u64,
        concepts: Vec<Concept>,
        tokens: Vec<String>,
        word_embeddings: Vec<Vec<f64>>,
        lift: Vec<f64>,
    ) -> Result<Self> {
        let mut token_concept = alloc::vec![None; tokens.len()];
        for (t, name) in tokens.iter().enumerate() {
            token_concept[t] = concepts.iter().position(|c| &c.name == name);
        }
        let vocab = ConceptVocabulary {
            sizes,
            seed,
            concepts,
            tokens,
            token_concept,
            word_embeddings,
            lift,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    fn validate(&self) -> Result<()> {
        let expected = self.sizes.rooms + self.sizes.objects + HEADINGS;
        if self.concepts.len() != expected {
            return Err(Error::Vocabulary(format!(
                "expected {expected} concepts, found {}",
                self.concepts.len()
            )));
        }
        if self.tokens.get(PAD).map(String::as_str) != Some(SPECIALS[0])
            || self.tokens.get(CLS).map(String::as_str) != Some(SPECIALS[1])
            || self.tokens.get(MASK).map(String::as_str) != Some(SPECIALS[2])
        {
            return Err(Error::Vocabulary("special tokens must occupy indices 0..3".into()));
        }
        if self.word_embeddings.len() != self.tokens.len()
            || self.word_embeddings.iter().any(|w| w.len() != LATENT_DIM)
            || self.concepts.iter().any(|c| c.latent.len() != LATENT_DIM)
            || self.lift.len() != FEATURE_DIM * LATENT_DIM
        {
            return Err(Error::Vocabulary("embedding widths do not match the latent space".into()));
        }
        for i in 0..self.concepts.len() {
            for j in 0..i {
                if self.concepts[i].latent == self.concepts[j].latent {
                    return Err(Error::Vocabulary(format!(
                        "concepts {} and {} share a latent",
                        self.concepts[j].name, self.concepts[i].name
                    )));
                }
            }
        }
        for (t, name) in self.tokens.iter().enumerate() {
            if self.tokens[..t].contains(name) {
                return Err(Error::Vocabulary(format!("duplicate token {name}")));
            }
        }
        Ok(())
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lift(&self) -> &[f64] {
        &self.lift
    }

    pub fn word_embeddings(&self) -> &[Vec<f64>] {
        &self.word_embeddings
    }

    pub fn word_embedding(&self, token: usize) -> &[f64] {
        &self.word_embeddings[token]
    }

    pub fn token(&self, name: &str) -> Result<usize> {
        self.tokens
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::Vocabulary(format!("unknown token {name:?}")))
    }

    pub fn token_name(&self, token: usize) -> Result<&str> {
        self.tokens
            .get(token)
            .map(String::as_str)
            .ok_or_else(|| Error::Vocabulary(format!("token index {token} out of range")))
    }

    pub fn token_concept(&self, token: usize) -> Option<usize> {
        self.token_concept.get(token).copied().flatten()
    }

    pub fn room_concept(&self, room: usize) -> usize {
        debug_assert!(room < self.sizes.rooms);
        room
    }

    pub fn object_concept(&self, object: usize) -> usize {
        debug_assert!(object < self.sizes.objects);
        self.sizes.rooms + object
    }

    pub fn direction_concept(&self, heading: usize) -> usize {
        debug_assert!(heading < HEADINGS);
        self.sizes.rooms + self.sizes.objects + heading
    }

    pub fn token_for_concept(&self, concept: usize) -> usize {
        SPECIALS.len() + TEMPLATE_WORDS.len() + concept
    }

    /// Lifted visual feature (`FEATURE_DIM`) of a concept latent.
    pub fn visual(&self, concept: usize) -> Vec<f64> {
        self.lift_latent(&self.concepts[concept].latent)
    }

    pub fn lift_latent(&self, latent: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; FEATURE_DIM];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.lift[r * LATENT_DIM..(r + 1) * LATENT_DIM];
            *o = row.iter().zip(latent).map(|(a, b)| a * b).sum();
        }
        out
    }
}

fn orthonormal_columns(rng: &mut crate::rng::SeededRng, rows: usize, cols: usize) -> Vec<f64> {
    // Gram-Schmidt on Gaussian columns, stored row-major.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| normal(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    let mut out = alloc::vec![0.0; rows * cols];
    for (c, b) in basis.iter().enumerate() {
        for r in 0..rows {
            out[r * cols + c] = b[r];
        }
    }
    out
}
