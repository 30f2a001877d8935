//! Guided reasoning: a client model brainstorms, expert analysts reconstruct
//! the argumentation as a fuzzy argument map, and the client assesses it
//! bottom-up before drafting an answer.

pub mod analysts;
pub mod argmap;
pub mod branching;
pub mod gateway;
pub mod prompts;
pub mod evaluation;
pub mod export;
pub mod protocol;
pub mod guide;
