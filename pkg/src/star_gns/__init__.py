"""Moyal-type star products, a free-field Wightman family, and the
finite-dimensional construction of the field-operator space on top of them."""

__version__ = "0.1.0"

from .nccore import (  # noqa: E402
    DampingProfile,
    GaussianPacket,
    GridFunction,
    GridSpec,
    StarVariant,
    TestFunction,
    ThetaMatrix,
    make_theta,
    packet_fourier,
    packet_inverse_fourier,
    profile_eval,
)
from .star import (  # noqa: E402
    PolyFunction,
    SeriesOrder,
    StarChain,
    star_chain_fourier,
    star_closed,
    star_fft,
    star_gaussian_closed,
    star_series,
    tilde_star_2pt,
)
from .wightman import ModeField, hermiticity_check, two_point, wick_npoint_smeared  # noqa: E402
from .gns import (  # noqa: E402
    GramMatrix,
    KreinDecomposition,
    SequenceVector,
    apply_field_operator,
    apply_word,
    commutative_limit_sweep,
    cyclicity_profile,
    gram,
    isotropic_quotient,
    krein_decompose,
    vacuum,
)

__all__ = [
    "apply_field_operator",
    "apply_word",
    "commutative_limit_sweep",
    "cyclicity_profile",
    "DampingProfile",
    "GaussianPacket",
    "gram",
    "GramMatrix",
    "GridFunction",
    "GridSpec",
    "hermiticity_check",
    "isotropic_quotient",
    "krein_decompose",
    "KreinDecomposition",
    "make_theta",
    "ModeField",
    "packet_fourier",
    "packet_inverse_fourier",
    "PolyFunction",
    "profile_eval",
    "SequenceVector",
    "SeriesOrder",
    "star_chain_fourier",
    "star_closed",
    "star_fft",
    "star_gaussian_closed",
    "star_series",
    "StarChain",
    "StarVariant",
    "TestFunction",
    "ThetaMatrix",
    "tilde_star_2pt",
    "two_point",
    "vacuum",
    "wick_npoint_smeared",
]
