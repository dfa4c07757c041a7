pub mod linalg;
pub mod poly;
pub mod numberfield;
pub mod ideals;
pub mod sampling;
pub mod tree;
pub mod geometry;
pub mod flowspace;
pub mod finitequotient;
pub mod par;
