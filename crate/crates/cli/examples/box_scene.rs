//! Writes a synthetic scene the CLI can consume: a textured box on a ground
//! plane seen from a ring of cameras, with a removal region masked out.
//!
//! ```text
//! cargo run --example box_scene -- OUT_DIR [VIEWS] [SIZE]
//! mvinpaint run --scene OUT_DIR/manifest.json --out result
//! ```

use std::path::PathBuf;

use mvinpaint::io::write_scene;
use mvinpaint::scene::View;
use mvinpaint_testkit::scenes::box_over_plane;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(
        args.next()
            .ok_or("usage: box_scene OUT_DIR [VIEWS] [SIZE]")?,
    );
    let views: usize = args.next().map_or(Ok(8), |a| a.parse())?;
    let size: usize = args.next().map_or(Ok(64), |a| a.parse())?;

    let scene = box_over_plane(views, size, size);
    let list = (0..views)
        .map(|i| {
            let (image, depth) = scene.image_and_depth(i);
            let mask = scene.mask(i);
            // blank the region to inpaint so nothing underneath survives
            let image = image.zip_map(&mask, |c, m| if *m { [0.0; 3] } else { *c });
            let mut v = View::new(image, mask)?;
            v.camera = Some(scene.cameras[i].clone());
            v.depth = Some(depth);
            Ok(v)
        })
        .collect::<mvinpaint::Result<Vec<_>>>()?;
    write_scene(&out, &list)?;
    println!("wrote {views} views of {size}x{size} to {}", out.display());
    Ok(())
}
