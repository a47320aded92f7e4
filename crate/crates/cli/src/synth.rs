use prop3d::dataio::DataError;
use prop3d::synth::{write_sequence, CameraSpec, SceneSpec};

use crate::args::{Preset, SynthArgs};
use crate::error::CliError;

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut spec = match &args.scene {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
                path: path.clone(),
                source,
            })?;
            toml::from_str::<SceneSpec>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => match args.preset {
            Preset::Tabletop => SceneSpec::tabletop(args.seed, args.objects, args.frames),
            Preset::Pan => SceneSpec::pan(args.seed, args.objects, args.frames),
        },
    };
    if args.vga {
        spec.camera = CameraSpec::vga();
    }
    if let Some(n) = args.proposals {
        spec.proposals.total = Some(n);
    }
    if spec.frame_count() == 0 {
        return Err(CliError::Usage("scene has no frames".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(|source| DataError::Io {
        path: args.out.clone(),
        source,
    })?;
    write_sequence(&spec, &args.out)?;
    println!(
        "{} frames of {} objects written to {}",
        spec.frame_count(),
        spec.objects.len(),
        args.out.join("manifest.toml").display()
    );
    Ok(())
}
