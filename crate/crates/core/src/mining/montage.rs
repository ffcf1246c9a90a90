use super::mine::ClusterRecord;
use super::square::fit_square;
use crate::corpus::Corpus;
use crate::embed::PatchRef;
use crate::error::{Error, Result};

/// Square crop `side` px around `center`, shifted to lie inside the image.
fn region(corpus: &Corpus, image_id: &str, center: [f64; 2], side: f64) -> Result<PatchRef> {
    let j = corpus.index_of(image_id).ok_or_else(|| Error::UnknownImage(image_id.to_owned()))?;
    let img = &corpus.images[j];
    let side = (side.round() as usize).clamp(1, img.width().min(img.height()));
    let place = |c: f64, extent: usize| ((c - side as f64 / 2.0).round().max(0.0) as usize).min(extent - side);
    Ok(PatchRef::new(image_id, place(center[1], img.height()), place(center[0], img.width()), side))
}

/// One row per record: the seed constellation's bounding square, then the
/// fitted square of each verified match, up to `cols` tiles.
pub fn cluster_montage_rows(records: &[ClusterRecord], corpus: &Corpus, rows: usize, cols: usize) -> Result<Vec<Vec<PatchRef>>> {
    records
        .iter()
        .take(rows)
        .map(|rec| {
            let size = rec.roles.iter().map(|r| r.size as f64).sum::<f64>() / 4.0;
            let (tl, br) = (&rec.roles[0], &rec.roles[3]);
            let seed_center = [(tl.x + br.x + br.size) as f64 / 2.0, (tl.y + br.y + br.size) as f64 / 2.0];
            let seed_side = ((br.x + br.size - tl.x).max(br.y + br.size - tl.y)) as f64;
            let mut row = vec![region(corpus, &rec.seed_image, seed_center, seed_side)?];
            for m in rec.matches.iter().filter(|m| m.verified).take(cols.saturating_sub(1)) {
                let fit = fit_square(&m.centers, size)?;
                row.push(region(corpus, &m.image_id, fit.center, fit.side + size)?);
            }
            Ok(row)
        })
        .collect()
}
