pub mod autograd;
pub mod corpus;
pub mod lbfgs;
pub mod embeddings;
pub mod linalg;
pub mod model_file;
pub mod pipeline;
pub mod recognizer;
pub mod semantic;
pub mod shallow;
