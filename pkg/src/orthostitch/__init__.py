"""orthostitch: parallax-free orthographic stitching of cone-beam images.

The pipeline backprojects each 2D transmission image along its
projection-matrix rays into a shared volume, sums the contributions,
and recovers a single parallel-beam view by extracting the central
plane of the volume's 3D Fourier transform. On top of that sit the
simulation pieces (procedural phantoms, cone-beam and parallel
projectors, randomized acquisition protocols) and the numerical loss
suite used to score restored images and landmark heatmaps.
"""

__version__ = "0.1.0"

from .geometry import (
    Intrinsics,
    Pose,
    ProjectionMatrix,
    RaySegment,
    backproject_pixel,
    canonical_pose,
    compose_projection,
    default_intrinsics,
    orthographic_project,
    project,
    pseudo_inverse,
)
from .phantom import (
    GroundTruth,
    PhantomSpec,
    VoxelVolume,
    generate_phantom,
    load_volume,
    save_volume,
)
from .projector import (
    Image2D,
    NoiseSpec,
    cone_beam_drr,
    load_image,
    orthographic_drr,
    save_image,
)
from .compounding import (
    CompoundingGrid,
    GridSpec,
    backproject_image,
    compound,
    make_grid,
    normalized,
)
from .spectral import (
    SlicePlane,
    Spectrum2D,
    Spectrum3D,
    StitchOptions,
    StitchResult,
    extract_central_slice,
    fft3,
    fourier_slice_projection,
    ifft2,
    stitch,
)
from .metrics import (
    ConfidenceBatch,
    SsimParams,
    bce_heatmap_loss,
    cosine_frequency_loss,
    gan_losses,
    psnr,
    rr_loss,
    ssim_loss,
)
from .landmarks import (
    Heatmap,
    LandmarkSet,
    extract_peak,
    landmark_error,
    measure_length,
    refine_landmarks,
    render_heatmap,
)
from .protocol import (
    AcquisitionProtocol,
    generate_dataset,
    protocol_for_phantom,
    sample_instance,
)
