#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "emte/gridgen.hpp"

namespace emte::preprocess {

/// db4 scaling filter (8 taps, 4 vanishing moments), orthonormal.
inline constexpr std::array<double, 8> kDb4Lowpass = {
    0.23037781330889651,  0.71484657055291567,  0.63088076792985892,
    -0.027983769416859854, -0.18703481171909309, 0.030841381835560764,
    0.032883011666885197, -0.010597401785069032};

/// Quadrature mirror: highpass[n] = (-1)^n lowpass[7 - n].
std::array<double, 8> db4_highpass();

// Modal windows per sensor: mode order is (mode1, mode2, mode0).
inline constexpr std::size_t kMode1 = 0;
inline constexpr std::size_t kMode2 = 1;
inline constexpr std::size_t kMode0 = 2;

/// Orthonormal Clarke transform of a [3 x S] block (phases a, b, c, each of
/// length S) into [3 x S] modal voltages ordered (alpha, beta, zero).
std::vector<double> modal_transform(std::span<const double> phases);
std::vector<double> inverse_modal_transform(std::span<const double> modes);

struct ModalWindow {
  std::size_t sensors = 0;
  std::size_t samples = 0;
  std::vector<double> modes;  // [sensors x 3 x samples]

  std::span<const double> row(std::size_t sensor, std::size_t mode) const {
    return std::span<const double>(modes).subspan((sensor * 3 + mode) * samples, samples);
  }
};

ModalWindow modal_window(const gridgen::EventRecord& record);

struct DwtLevel {
  std::vector<double> approx;
  std::vector<double> detail;
};

/// Level-1 db4 analysis with periodic extension:
///   approx[k] = sum_n lowpass[n]  x[(2k + n) mod N]
///   detail[k] = sum_n highpass[n] x[(2k + n) mod N]
/// An odd-length signal is first extended by repeating its last sample, so
/// both outputs have ceil(S/2) entries. Requires S >= 8.
DwtLevel dwt_db4_level1(std::span<const double> signal);

struct WtcMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // [rows x cols], all >= 0
  std::vector<double> row_min;
  std::vector<double> row_max;

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols, cols);
  }
};

/// |level-1 db4 detail| of one mode at every sensor.
WtcMatrix abs_wtc(const ModalWindow& modal, std::size_t mode_index);

/// Per-row min-max scaling to [0, 1]; constant rows become zeros.
std::vector<double> encode_grayscale(std::span<const double> matrix, std::size_t rows,
                                     std::size_t cols);

enum class InputCase { Case1_2D = 1, Case2_2DW = 2, Case3_3D = 3, Case4_3DW = 4 };

inline constexpr std::array<InputCase, 4> kAllCases = {InputCase::Case1_2D, InputCase::Case2_2DW,
                                                    InputCase::Case3_3D, InputCase::Case4_3DW};

/// "2d", "2dw", "3d", "3dw"
std::string_view case_key(InputCase c);
/// "2D", "2D+W", "3D", "3D+W"
std::string_view case_label(InputCase c);
std::optional<InputCase> case_from_key(std::string_view key);

struct FeatureImage {
  InputCase input_case = InputCase::Case2_2DW;
  std::size_t channels = 0;
  std::size_t height = 0;  // sensors
  std::size_t width = 0;   // time
  std::vector<double> pixels;  // [channels x height x width] in [0, 1]

  std::array<std::size_t, 3> shape() const { return {channels, height, width}; }
};

/// Case 1: mode-1 voltages. Case 2: mode-1 |WTC|. Case 3: modes (1, 2, 0) as
/// three channels. Case 4: |WTC| of modes (1, 2, 0). Every (channel, row) is
/// min-max normalized independently.
FeatureImage build_input(const gridgen::EventRecord& record, InputCase input_case);

struct WaveletEnergy {
  std::vector<double> per_location;
  double total = 0.0;
};

/// Sum of squared |WTC| values per row and overall.
WaveletEnergy wavelet_energy(const WtcMatrix& wtc);

/// Total mode-1 |WTC| energy of a record over all sensors.
double record_wavelet_energy(const gridgen::EventRecord& record);

/// Writes a binary PGM (one channel) or PPM (three channels), 8-bit,
/// value = round(pixel * 255). Rows are sensors, columns are time.
void export_image(const FeatureImage& image, const std::filesystem::path& path);

}  // namespace emte::preprocess
