#pragma once

#include <complex>
#include <span>
#include <vector>

#include "sepbn/augment.hpp"

namespace sepbn {

// Direct separable 2-D DFT of one H x W plane (row-major), double precision.
// Works for any size; images here are small.
std::vector<std::complex<double>> dft2(std::span<const double> plane, int height, int width);
std::vector<std::complex<double>> idft2(std::span<const std::complex<double>> spectrum, int height,
                                        int width);

// Signed frequency of DFT index k in a length-n transform: k for k < n/2
// (rounded up for odd n), k - n otherwise. For even n the range is
// [-n/2, n/2 - 1].
int signed_frequency(int k, int n);
// Grid index in [0, n) of centered frequency f; inverse of the centered layout
// a = f + n/2.
int centered_index(int f, int n);
// Point reflection of centered frequency f modulo n, kept in the centered range.
int mirror_frequency(int f, int n);

// Whether centered frequency f lies in the width-B band: [-B/2, B/2 - 1] for
// even B, [-(B-1)/2, (B-1)/2] for odd B.
bool in_band(int f, int bandwidth);

// Keeps only the frequencies inside the centered B x B square of every
// channel and returns the real part of the inverse DFT.
Image low_pass(const Image& img, int bandwidth);
// Sum over channels of |X_k|^2 for the retained coefficients.
double retained_energy(const Image& img, int bandwidth);

// Real grating whose DFT is non-zero only at (fy, fx) and (-fy, -fx),
// cos(2 pi (fy*y/H + fx*x/W)), scaled to the given l2 norm. H x W row-major.
std::vector<double> fourier_grating(int height, int width, int fy, int fx, double norm);

}  // namespace sepbn
