pub mod dense_oracle;
pub mod gen;
