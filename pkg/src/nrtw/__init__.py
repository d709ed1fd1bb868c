"""nrtw: an interactive denoising workbench for CT-like images.

Trains a small convolutional denoiser on synthetic phantoms and fine-tunes
it at test time toward two bound images, populating a browsable
noise-resolution tradeoff curve.
"""

__version__ = "0.1.0"

from .autodiff import ParamSet, Tensor, backward  # noqa: F401
from .sweeps import (  # noqa: F401
    Bounds,
    Candidate,
    SweepConfig,
    NRTCurve,
    build_nrt_curve,
    linear_twicing_oracle,
    make_bounds,
    relative_change,
    select_candidate,
    sweep,
)
from .metrics import ROI, MetricsRecord, cnr, resolution_proxy, rmse, roi_std  # noqa: F401
from .networks import NetworkConfig, build_network  # noqa: F401
from .simulate import (  # noqa: F401
    Ellipse,
    NoiseSpec,
    PairedSample,
    PhantomSpec,
    add_noise,
    generate_phantom,
    rescale_noise,
    window_to_bytes,
)
from .training import Checkpoint, TrainConfig, infer, recursive_infer, train  # noqa: F401
