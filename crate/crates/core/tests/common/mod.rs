pub mod ambiguity;
