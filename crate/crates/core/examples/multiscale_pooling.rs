//! Pools descriptors harvested at several image scales into one set.
//!
//!     cargo run --example multiscale_pooling

use fvagg::{default_schedule, encode_fv, pool_scales, DescriptorSet, GaussianMixture};

fn main() -> fvagg::Result<()> {
    let schedule = default_schedule();
    println!("schedule {schedule}");
    for (s, f) in schedule.exponents().iter().zip(schedule.factors()) {
        // feature-map cells shrink with the image, roughly like the square of the factor
        let cells = (64.0 * f * f).round().max(1.0);
        println!("  s={s:>5}: factor {f:.4}, ~{cells} descriptors");
    }

    let source = GaussianMixture::new(vec![1.0], vec![0.0, 0.0, 0.0], vec![1.0; 3])?;
    let per_scale = schedule
        .factors()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let n = (64.0 * f * f).round().max(1.0) as usize;
            let mut set = source.sample(n, i as u64)?;
            set.set_image_id("img-001");
            Ok(set)
        })
        .collect::<fvagg::Result<Vec<DescriptorSet>>>()?;

    let pooled = pool_scales(&per_scale, "img-001")?;
    println!("pooled {} descriptors of dimension {}", pooled.len(), pooled.dim());

    // the encoding is a property of the pooled set, not of the scale order
    let mut reversed = per_scale.clone();
    reversed.reverse();
    let a = encode_fv(&source, &pooled)?;
    let b = encode_fv(&source, &pool_scales(&reversed, "img-001")?)?;
    println!("scale order changes the encoding: {}", a != b);
    Ok(())
}
