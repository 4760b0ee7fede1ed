from .convcode import (DEFAULT_CODE, ConvCode, conv_encode, free_distance, gf2_poly_gcd,
                       viterbi_decode)
from .fuzzy import (CODE_OFFSET, DIRECT_ENCODE, HelperData, enrolled_value, fe_generate,
                    fe_reproduce)
from .interleave import (DEFAULT_INTERLEAVER, InterleaverSpec, deinterleave, interleave,
                         interleave_permutation)

__all__ = [
    "CODE_OFFSET", "DIRECT_ENCODE", "DEFAULT_CODE", "DEFAULT_INTERLEAVER", "ConvCode",
    "HelperData", "InterleaverSpec", "conv_encode", "deinterleave", "enrolled_value",
    "fe_generate", "fe_reproduce", "free_distance", "gf2_poly_gcd", "interleave",
    "interleave_permutation", "viterbi_decode",
]
