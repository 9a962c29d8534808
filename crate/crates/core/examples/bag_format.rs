//! Encodes a bag to `.bagemb` bytes, reads the header alone, and shows how
//! malformed files are reported.

use milcap::bagio::{decode, decode_header, encode, BagRecord};
use milcap::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let embeddings = Matrix::from_rows(&[vec![0.25, -1.0, 3.5], vec![0.0, 2.0, -0.125]])?;
    let bag = BagRecord::new("patient-17", embeddings, Some(true), Some("benign mucosa".into()))?;
    let bytes = encode(&bag)?;
    println!("{} bytes", bytes.len());

    let header = decode_header(&bytes)?;
    println!("header: n_p {} d_v {} label {:?} caption {:?}", header.n_p, header.d_v, header.label, header.caption);
    assert_eq!(decode(&bytes)?, bag);

    // values are stored as f32, so anything not representable is rounded once
    let lossy = BagRecord::new("p", Matrix::from_rows(&[vec![0.1]])?, None, None)?;
    let back = decode(&encode(&lossy)?)?;
    println!("0.1 comes back as {}", back.embeddings.get(0, 0));

    let mut broken = bytes.clone();
    broken.truncate(bytes.len() - 3);
    match decode(&broken) {
        Err(e) => println!("truncated file: [{}] {e}", e.code()),
        Ok(_) => unreachable!(),
    }
    broken = bytes.clone();
    broken[16] = 7;
    if let Err(e) = decode(&broken) {
        println!("bad label byte: [{}] {e}", e.code());
    }
    Ok(())
}
