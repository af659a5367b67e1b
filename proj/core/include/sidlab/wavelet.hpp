#pragma once

#include <array>
#include <string>
#include <vector>

#include "sidlab/tensor.hpp"

namespace sidlab {

// Orthonormal two-channel filter pair. The highpass is derived from the
// lowpass by the quadrature-mirror relation hi[k] = (-1)^k * lo[L-1-k].
struct WaveletFilter {
  std::string name;
  std::vector<double> lowpass;
  std::vector<double> highpass;

  static WaveletFilter haar();
  static WaveletFilter sym17();
  // Validates sum lo^2 == 1 (1e-12) and builds the mirror highpass.
  static WaveletFilter from_lowpass(std::string name, std::vector<double> lo);
  // Coefficient file: one-line header "<name> <length>", then one lowpass
  // coefficient per line.
  static WaveletFilter load(const std::string& path);
  void save(const std::string& path) const;
};

// Single-level 2-D sub-bands, each (d/2, d/2) for a (d, d) input. The first
// letter is the filter applied along rows, the second along columns.
struct SubBands {
  Tensor ll, lh, hl, hh;
};

// Trainable sub-band mixing weights.
struct WawtWeights {
  double w1 = 0.25;  // ll
  double w2 = 0.25;  // lh
  double w3 = 0.25;  // hl
  double w4 = 0.25;  // hh
};

// Separable analysis with stride 2 and periodic boundary extension.
// Requires even d; d may be smaller than the filter support (taps wrap).
SubBands dwt2(const Tensor& image, const WaveletFilter& filter);

// Adjoint synthesis; perfect reconstruction for orthonormal filters.
Tensor idwt2(const SubBands& bands, const WaveletFilter& filter);

// w1*ll + w2*lh + w3*hl + w4*hh, a (d/2, d/2) image.
Tensor wawt(const Tensor& image, const WawtWeights& w,
            const WaveletFilter& filter);

// The four 2-D analysis kernels (outer products of the filter taps), in
// band order ll, lh, hl, hh.
std::array<Tensor, 4> band_kernels(const WaveletFilter& filter);

// Dense (d^2/4, d^2) matrices B_b with vec(band_b(x)) = B_b * vec(x),
// row-major vec convention; weights-independent.
std::array<Tensor, 4> band_matrices(int d, const WaveletFilter& filter);

// Dense H of shape (d^2/4, d^2) with H * vec(x) = vec(wawt(x)).
Tensor wawt_matrix(int d, const WawtWeights& w, const WaveletFilter& filter);

// Graph builder: image node (d,d) -> wawt node (d/2,d/2), with the four
// weights as scalar graph nodes (trainable when their leaves require grad).
int wawt_node(Tape& tape, int image, const std::array<int, 4>& weight_nodes,
              const WaveletFilter& filter);

}  // namespace sidlab
