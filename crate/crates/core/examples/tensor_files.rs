//! Tensor and filter files, and DMA between regions of main memory.

use qfabric::memory::{
    load_filter_file, load_tensor_file, save_filter_file, save_tensor_file, AddressSpace, FilterSet, MemoryImage,
    Tensor,
};
use qfabric::qformat::QFormat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = QFormat::Q16_15;
    let dir = std::env::temp_dir().join("qfabric-tensor-files");
    std::fs::create_dir_all(&dir)?;

    let t = Tensor::from_f64(
        3,
        2,
        2,
        q,
        &[0.5, -1.0, 2.25, 0.0, 1.0, -0.125, 3.0, 2.0, 1.0, 0.0, -1.0, -2.0],
    )?;
    let path = dir.join("t.qtns");
    save_tensor_file(&path, &t)?;
    assert_eq!(load_tensor_file(&path)?, t);
    println!(
        "{}: {} bytes, plane 1 = {:?}",
        path.display(),
        std::fs::metadata(&path)?.len(),
        t.plane(1)
    );

    let f = FilterSet::from_f64(1, 2, 1, q, &[1.0, -1.0], &[0.5])?;
    let fpath = dir.join("f.qwgt");
    save_filter_file(&fpath, &f)?;
    assert_eq!(load_filter_file(&fpath)?, f);

    let mut mem = MemoryImage::new(256);
    let src = AddressSpace::words(0, t.len())?;
    let dst = AddressSpace::words(128, t.len())?;
    mem.write_tensor(src, &t)?;
    mem.dma_copy(src, dst)?;
    println!("after DMA to {dst}: {:?}", mem.read_tensor(dst, 3, 2, 2, q)?.to_f64());
    Ok(())
}
