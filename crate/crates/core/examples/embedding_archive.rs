//! Write an embedding archive, read it back and inspect it.
//!
//!     cargo run --example embedding_archive

use robosumm::archive::{read_archive, write_archive, Archive, ArchiveRole};
use robosumm::model::{EmbeddingMatrix, EmbeddingSpace, FrameRate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let rows: Vec<Vec<f32>> = (0..90).map(|i| (0..512).map(|j| ((i * j) % 7) as f32 / 7.0).collect()).collect();
    let m = EmbeddingMatrix::from_rows(&rows, 512, EmbeddingSpace::new("frame-encoder", "2"))?;
    let a = Archive::frames(ArchiveRole::GenericFeatures, FrameRate::whole(15), m);
    let path = write_archive(&dir.path().join(ArchiveRole::GenericFeatures.file_name()), &a)?;
    let bytes = std::fs::metadata(&path)?.len();
    let back = read_archive(&path)?;
    println!("{} — {bytes} bytes", path.display());
    println!("role {}, {} rows x {} dims in space {}", back.role, back.matrix.rows(), back.matrix.dim(), back.matrix.space().as_str());
    println!("round trip identical: {}", back == a);
    Ok(())
}
