use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mesh file: {0}")]
    MalformedFile(String),
    #[error("tetrahedron {tet} has zero volume")]
    DegenerateTet { tet: usize },
    #[error("face ({0}, {1}, {2}) is shared by more than two tetrahedra")]
    NonManifoldBoundary(usize, usize, usize),
    #[error("boundary surface is not a closed genus-0 surface (Euler characteristic {euler})")]
    DisconnectedBoundary { euler: i64 },
    #[error("image of tetrahedron {tet} is degenerate")]
    DegenerateImageTet { tet: usize },
    #[error("image volume is zero")]
    ZeroImageVolume,
    #[error("point cloud is rank deficient (smallest singular value {sigma:e})")]
    RankDeficientCloud { sigma: f64 },
    #[error("boundary initialization produced {flipped} flipped spherical triangles")]
    InitFailure { flipped: usize },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("{block} preconditioner block is not positive definite")]
    NotPositiveDefinite { block: &'static str },
    #[error("line search failed at iteration {iter}")]
    LineSearchFailure { iter: usize },
    #[error("rotation fit is rank deficient")]
    RankDeficient,
    #[error("could not locate point ({:.6}, {:.6}, {:.6}) for source vertex {vertex}", point[0], point[1], point[2])]
    LocationFailure { vertex: usize, point: [f64; 3] },
    #[error("vertex count mismatch: mesh has {mesh}, map has {map}")]
    VertexCountMismatch { mesh: usize, map: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
