#include "emte/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "emte/error.hpp"

namespace emte::preprocess {

namespace {

const double kSqrt2_3 = std::sqrt(2.0 / 3.0);
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);
const double kInvSqrt3 = 1.0 / std::sqrt(3.0);
const double kInvSqrt6 = 1.0 / std::sqrt(6.0);

}  // namespace

std::array<double, 8> db4_highpass() {
  std::array<double, 8> h{};
  for (std::size_t n = 0; n < 8; ++n) {
    h[n] = (n % 2 == 0 ? 1.0 : -1.0) * kDb4Lowpass[7 - n];
  }
  return h;
}

std::vector<double> modal_transform(std::span<const double> phases) {
  if (phases.size() % 3 != 0) throw std::invalid_argument("modal transform expects 3 rows");
  const std::size_t s = phases.size() / 3;
  const double* a = phases.data();
  const double* b = a + s;
  const double* c = b + s;
  std::vector<double> out(3 * s);
  for (std::size_t n = 0; n < s; ++n) {
    out[kMode1 * s + n] = kSqrt2_3 * (a[n] - 0.5 * b[n] - 0.5 * c[n]);
    out[kMode2 * s + n] = kInvSqrt2 * (b[n] - c[n]);
    out[kMode0 * s + n] = kInvSqrt3 * (a[n] + b[n] + c[n]);
  }
  return out;
}

std::vector<double> inverse_modal_transform(std::span<const double> modes) {
  if (modes.size() % 3 != 0) throw std::invalid_argument("modal transform expects 3 rows");
  const std::size_t s = modes.size() / 3;
  const double* alpha = modes.data() + kMode1 * s;
  const double* beta = modes.data() + kMode2 * s;
  const double* zero = modes.data() + kMode0 * s;
  std::vector<double> out(3 * s);
  for (std::size_t n = 0; n < s; ++n) {
    out[n] = kSqrt2_3 * alpha[n] + kInvSqrt3 * zero[n];
    out[s + n] = -kInvSqrt6 * alpha[n] + kInvSqrt2 * beta[n] + kInvSqrt3 * zero[n];
    out[2 * s + n] = -kInvSqrt6 * alpha[n] - kInvSqrt2 * beta[n] + kInvSqrt3 * zero[n];
  }
  return out;
}

ModalWindow modal_window(const gridgen::EventRecord& record) {
  ModalWindow w;
  w.sensors = record.sensors;
  w.samples = record.samples;
  w.modes.reserve(record.sensors * 3 * record.samples);
  for (std::size_t s = 0; s < record.sensors; ++s) {
    const auto modes = modal_transform(record.sensor_phases(s));
    w.modes.insert(w.modes.end(), modes.begin(), modes.end());
  }
  return w;
}

DwtLevel dwt_db4_level1(std::span<const double> signal) {
  if (signal.size() < kDb4Lowpass.size()) {
    throw std::invalid_argument("db4 DWT needs at least 8 samples, got " +
                                std::to_string(signal.size()));
  }
  const std::size_t n = signal.size() + signal.size() % 2;
  const std::size_t half = n / 2;
  auto x = [&](std::size_t i) { return i < signal.size() ? signal[i] : signal.back(); };
  const auto hi = db4_highpass();
  DwtLevel out{std::vector<double>(half), std::vector<double>(half)};
  for (std::size_t k = 0; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (std::size_t t = 0; t < 8; ++t) {
      const double v = x((2 * k + t) % n);
      a += kDb4Lowpass[t] * v;
      d += hi[t] * v;
    }
    out.approx[k] = a;
    out.detail[k] = d;
  }
  return out;
}

WtcMatrix abs_wtc(const ModalWindow& modal, std::size_t mode_index) {
  if (mode_index > 2) throw std::invalid_argument("mode index must be 0, 1 or 2");
  WtcMatrix m;
  m.rows = modal.sensors;
  for (std::size_t s = 0; s < modal.sensors; ++s) {
    auto detail = dwt_db4_level1(modal.row(s, mode_index)).detail;
    m.cols = detail.size();
    double lo = 0.0, hi = 0.0;
    for (std::size_t k = 0; k < detail.size(); ++k) {
      const double v = std::abs(detail[k]);
      if (k == 0 || v < lo) lo = v;
      if (k == 0 || v > hi) hi = v;
      m.values.push_back(v);
    }
    m.row_min.push_back(lo);
    m.row_max.push_back(hi);
  }
  return m;
}

std::vector<double> encode_grayscale(std::span<const double> matrix, std::size_t rows,
                                     std::size_t cols) {
  if (matrix.size() != rows * cols) throw std::invalid_argument("encode_grayscale: size mismatch");
  std::vector<double> out(matrix.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = matrix.subspan(r * cols, cols);
    const auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0.0)) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      // Clamp guards the endpoints against rounding in (x - lo) / range.
      out[r * cols + c] = std::clamp((row[c] - lo) / range, 0.0, 1.0);
    }
  }
  return out;
}

std::string_view case_key(InputCase c) {
  switch (c) {
    case InputCase::Case1_2D: return "2d";
    case InputCase::Case2_2DW: return "2dw";
    case InputCase::Case3_3D: return "3d";
    case InputCase::Case4_3DW: return "3dw";
  }
  return "?";
}

std::string_view case_label(InputCase c) {
  switch (c) {
    case InputCase::Case1_2D: return "2D";
    case InputCase::Case2_2DW: return "2D+W";
    case InputCase::Case3_3D: return "3D";
    case InputCase::Case4_3DW: return "3D+W";
  }
  return "?";
}

std::optional<InputCase> case_from_key(std::string_view key) {
  for (InputCase c : kAllCases) {
    if (case_key(c) == key) return c;
  }
  return std::nullopt;
}

FeatureImage build_input(const gridgen::EventRecord& record, InputCase input_case) {
  const ModalWindow modal = modal_window(record);
  const bool wavelet = input_case == InputCase::Case2_2DW || input_case == InputCase::Case4_3DW;
  const bool three_d = input_case == InputCase::Case3_3D || input_case == InputCase::Case4_3DW;
  const std::vector<std::size_t> modes =
      three_d ? std::vector<std::size_t>{kMode1, kMode2, kMode0} : std::vector<std::size_t>{kMode1};

  FeatureImage img;
  img.input_case = input_case;
  img.channels = modes.size();
  img.height = record.sensors;
  for (std::size_t mode : modes) {
    std::vector<double> plane;
    std::size_t width = 0;
    if (wavelet) {
      WtcMatrix wtc = abs_wtc(modal, mode);
      width = wtc.cols;
      plane = std::move(wtc.values);
    } else {
      width = modal.samples;
      for (std::size_t s = 0; s < modal.sensors; ++s) {
        const auto row = modal.row(s, mode);
        plane.insert(plane.end(), row.begin(), row.end());
      }
    }
    img.width = width;
    const auto encoded = encode_grayscale(plane, img.height, width);
    img.pixels.insert(img.pixels.end(), encoded.begin(), encoded.end());
  }
  return img;
}

WaveletEnergy wavelet_energy(const WtcMatrix& wtc) {
  WaveletEnergy e;
  for (std::size_t r = 0; r < wtc.rows; ++r) {
    double sum = 0.0;
    for (double v : wtc.row(r)) sum += v * v;
    e.per_location.push_back(sum);
    e.total += sum;
  }
  return e;
}

double record_wavelet_energy(const gridgen::EventRecord& record) {
  return wavelet_energy(abs_wtc(modal_window(record), kMode1)).total;
}

void export_image(const FeatureImage& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("image export supports 1 or 3 channels");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << (image.channels == 1 ? "P5" : "P6") << "\n"
      << image.width << " " << image.height << "\n255\n";
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < image.channels; ++c) {
      const double v = std::clamp(image.pixels[c * plane + i], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  if (!out) throw DataError("failed writing image " + path.string());
}

}  // namespace emte::preprocess
