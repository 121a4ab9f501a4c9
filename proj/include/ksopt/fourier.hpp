#pragma once

#include "ksopt/types.hpp"

namespace ksopt {

// Centered, unitary 2D DFT pair. Both directions scale by 1/sqrt(M*N), so
// energy is preserved and ifft2_centered(fft2_centered(x)) == x.
KSpace2D fft2_centered(const ComplexImage2D& img);
KSpace2D fft2_centered(const Image2D& img);
ComplexImage2D ifft2_centered(const KSpace2D& k);

Image2D magnitude(const ComplexImage2D& c);

ComplexImage2D to_complex(const Image2D& img);

}  // namespace ksopt
