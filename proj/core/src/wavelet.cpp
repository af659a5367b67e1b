#include "sidlab/wavelet.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sidlab {

namespace {

// Least-asymmetric orthonormal 34-tap filter with 17 vanishing moments,
// computed by spectral factorization of the half-band polynomial; the
// factor selection minimizes the deviation of the unwrapped phase from
// linear. Energy center sits left of the midpoint.
constexpr double kSym17[34] = {
    9.0402776759801438e-05,  0.00053484219299273789,  0.00054658046405656831,
    -0.0021311108680305236,  -0.0013418912952857952,  0.019728078999560375,
    0.039958704949732832,    -0.0044673178501060395,  -0.03687421378219588,
    0.1943494466626331,      0.62284258698625339,     0.67768878123417864,
    0.17031961187919648,     -0.23428808221458558,    -0.10602828522440519,
    0.099124629023882083,    0.022145652155318045,    -0.068356500797551595,
    -0.0043829722544344628,  0.03562269831776279,     -0.001874197005156858,
    -0.01433243599722824,    0.002890076481576612,    0.0045521493390853433,
    -0.001646360365343944,   -0.0010693603543416499,  0.00057352361257601329,
    0.00016156272335691871,  -0.00012864905772797517, -9.6668610054398494e-06,
    1.7277081054385809e-05,  -1.1125832610985693e-06, -1.0662154264302139e-06,
    1.8021920565780021e-07,
};

void check_even_side(const Tensor& image, const char* who) {
  if (image.ndim() != 2 || image.rows() != image.cols())
    throw std::invalid_argument(std::string(who) + ": image must be square");
  if (image.rows() % 2 != 0)
    throw std::invalid_argument(std::string(who) + ": image side must be even");
}

}  // namespace

WaveletFilter WaveletFilter::from_lowpass(std::string name,
                                          std::vector<double> lo) {
  if (lo.size() < 2 || lo.size() % 2 != 0)
    throw std::invalid_argument("WaveletFilter: lowpass length must be even");
  double s2 = 0.0;
  for (double c : lo) s2 += c * c;
  if (std::fabs(s2 - 1.0) > 1e-12)
    throw std::invalid_argument("WaveletFilter '" + name +
                                "': sum of squared taps is " +
                                std::to_string(s2) + ", expected 1");
  WaveletFilter f;
  f.name = std::move(name);
  const size_t L = lo.size();
  f.highpass.resize(L);
  for (size_t k = 0; k < L; ++k)
    f.highpass[k] = (k % 2 == 0 ? 1.0 : -1.0) * lo[L - 1 - k];
  f.lowpass = std::move(lo);
  return f;
}

WaveletFilter WaveletFilter::haar() {
  const double r = 1.0 / std::sqrt(2.0);
  return from_lowpass("haar", {r, r});
}

WaveletFilter WaveletFilter::sym17() {
  return from_lowpass("sym17", std::vector<double>(kSym17, kSym17 + 34));
}

WaveletFilter WaveletFilter::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("WaveletFilter::load: cannot open " + path);
  std::string name;
  size_t n = 0;
  if (!(in >> name >> n))
    throw std::runtime_error("WaveletFilter::load: bad header in " + path);
  std::vector<double> lo(n);
  for (size_t i = 0; i < n; ++i)
    if (!(in >> lo[i]))
      throw std::runtime_error("WaveletFilter::load: expected " +
                               std::to_string(n) + " coefficients in " + path);
  return from_lowpass(name, std::move(lo));
}

void WaveletFilter::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("WaveletFilter::save: cannot open " + path);
  out << name << " " << lowpass.size() << "\n";
  char buf[64];
  for (double c : lowpass) {
    std::snprintf(buf, sizeof(buf), "%.17g", c);
    out << buf << "\n";
  }
}

std::array<Tensor, 4> band_kernels(const WaveletFilter& f) {
  const int L = static_cast<int>(f.lowpass.size());
  auto outer = [&](const std::vector<double>& row_f,
                   const std::vector<double>& col_f) {
    Tensor k({L, L});
    for (int u = 0; u < L; ++u)
      for (int v = 0; v < L; ++v) k.at(u, v) = row_f[u] * col_f[v];
    return k;
  };
  return {outer(f.lowpass, f.lowpass), outer(f.lowpass, f.highpass),
          outer(f.highpass, f.lowpass), outer(f.highpass, f.highpass)};
}

SubBands dwt2(const Tensor& image, const WaveletFilter& filter) {
  check_even_side(image, "dwt2");
  const auto k = band_kernels(filter);
  SubBands b;
  b.ll = conv2d_periodic_stride2(image, k[0]);
  b.lh = conv2d_periodic_stride2(image, k[1]);
  b.hl = conv2d_periodic_stride2(image, k[2]);
  b.hh = conv2d_periodic_stride2(image, k[3]);
  return b;
}

Tensor idwt2(const SubBands& bands, const WaveletFilter& filter) {
  const Tensor* bs[4] = {&bands.ll, &bands.lh, &bands.hl, &bands.hh};
  for (int i = 1; i < 4; ++i)
    if (!bs[i]->same_shape(*bs[0]))
      throw std::invalid_argument("idwt2: sub-band shape mismatch");
  if (bs[0]->ndim() != 2 || bs[0]->rows() != bs[0]->cols())
    throw std::invalid_argument("idwt2: sub-bands must be square");
  const int d = 2 * bs[0]->rows();
  const auto k = band_kernels(filter);
  Tensor image({d, d});
  for (int i = 0; i < 4; ++i)
    conv2d_periodic_stride2_adjoint(*bs[i], k[static_cast<size_t>(i)], image);
  return image;
}

Tensor wawt(const Tensor& image, const WawtWeights& w,
            const WaveletFilter& filter) {
  const SubBands b = dwt2(image, filter);
  Tensor out = b.ll;
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = w.w1 * b.ll[i] + w.w2 * b.lh[i] + w.w3 * b.hl[i] + w.w4 * b.hh[i];
  return out;
}

std::array<Tensor, 4> band_matrices(int d, const WaveletFilter& filter) {
  if (d <= 0 || d % 2 != 0)
    throw std::invalid_argument("band_matrices: d must be positive and even");
  const auto kernels = band_kernels(filter);
  const int h = d / 2;
  const int m = h * h, p = d * d;
  const int L = static_cast<int>(filter.lowpass.size());
  std::array<Tensor, 4> mats{Tensor({m, p}), Tensor({m, p}), Tensor({m, p}),
                             Tensor({m, p})};
  for (int b = 0; b < 4; ++b) {
    const Tensor& k = kernels[static_cast<size_t>(b)];
    Tensor& M = mats[static_cast<size_t>(b)];
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < h; ++j) {
        const int row = i * h + j;
        for (int u = 0; u < L; ++u) {
          const int r = (2 * i + u) % d;
          for (int v = 0; v < L; ++v) {
            const int c = (2 * j + v) % d;
            M.at(row, r * d + c) += k.at(u, v);
          }
        }
      }
  }
  return mats;
}

Tensor wawt_matrix(int d, const WawtWeights& w, const WaveletFilter& filter) {
  const auto mats = band_matrices(d, filter);
  const double ws[4] = {w.w1, w.w2, w.w3, w.w4};
  Tensor H = Tensor::zeros(mats[0].shape());
  for (int b = 0; b < 4; ++b)
    for (std::int64_t i = 0; i < H.size(); ++i)
      H[i] += ws[b] * mats[static_cast<size_t>(b)][i];
  return H;
}

int wawt_node(Tape& tape, int image, const std::array<int, 4>& weight_nodes,
              const WaveletFilter& filter) {
  check_even_side(tape.value(image), "wawt_node");
  const auto kernels = band_kernels(filter);
  int acc = -1;
  for (int b = 0; b < 4; ++b) {
    const int band = tape.conv2d_fixed(image, kernels[static_cast<size_t>(b)]);
    const int term = tape.scalar_mul(weight_nodes[static_cast<size_t>(b)], band);
    acc = b == 0 ? term : tape.add(acc, term);
  }
  return acc;
}

}  // namespace sidlab
