#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "emte/gridgen.hpp"
#include "emte/kvconfig.hpp"

namespace emte::gridgen {

// Record file: "EMTE", u8 version, u8 class code, u16 L, u32 S, f64 sample
// rate, u64 seed, then L*3*S float32 (sensor, phase, time), little-endian.
inline constexpr std::uint8_t kRecordFormatVersion = 1;
inline constexpr std::size_t kRecordHeaderBytes = 4 + 1 + 1 + 2 + 4 + 8 + 8;

std::vector<std::uint8_t> encode_record(const EventRecord& record);
void write_record(const std::filesystem::path& path, const EventRecord& record);

struct RecordFile {
  std::uint8_t version = 0;
  EventClass label = EventClass::LineEnergization;
  std::size_t sensors = 0;
  std::size_t samples = 0;
  double sample_rate_hz = 0.0;
  std::uint64_t seed = 0;
  std::vector<float> voltages;
};

RecordFile decode_record(std::span<const std::uint8_t> bytes);
/// Throws DataError on I/O failure or a malformed file.
RecordFile read_record(const std::filesystem::path& path);

struct GeneratorConfig {
  std::array<std::size_t, kClassCount> counts{};
  SensorLayout layout;
  ParamGrids grids = ParamGrids::defaults();
  SynthesisOptions synthesis;
  double split_fraction = 0.8;
  std::filesystem::path output_dir;
};

/// Reads a generator configuration. Recognized keys:
///   count.<class_key>           events per class (required, > 0)
///   layout.sensors              comma-separated sensor ids
///   layout.positions            normalized positions, one per sensor
///   layout.delays               optional per-sensor delays in seconds
///   layout.attenuations         optional per-sensor factors in (0, 1]
///   layout.sample_rate_hz       default 20000
///   layout.default_sensors      N: use the first N built-in recorders
///   noise.sigma                 default 0.002
///   split_fraction              default 0.8
///   output_dir                  default "data"
///   grid.<name>                 overrides a ParamGrids list; angles in degrees,
///                               capacitances in microfarads
///   propagation.travel_time_s, propagation.decay_length
GeneratorConfig generator_config_from(const KeyValueConfig& kv);
GeneratorConfig load_generator_config(const std::filesystem::path& path);

struct ManifestEntry {
  std::string file;
  EventClass label = EventClass::LineEnergization;
  std::uint64_t seed = 0;
  std::string checksum;  // CRC-32 of the record file, hex
  EventParams params;
};

struct DatasetManifest {
  int version = 1;
  std::array<std::size_t, kClassCount> counts{};
  SensorLayout layout;
  double split_fraction = 0.8;
  std::uint64_t master_seed = 0;
  double noise_sigma = 0.002;
  std::vector<ManifestEntry> records;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

inline constexpr const char* kManifestFile = "manifest.json";

/// Generates every record in memory. Record i (class-major order) uses seed
/// master_seed + i for both its parameters and its waveform.
std::vector<EventRecord> generate_records(const GeneratorConfig& config,
                                          std::uint64_t master_seed);

/// Writes one record file per event plus manifest.json under
/// config.output_dir, and returns the manifest.
DatasetManifest build_dataset(const GeneratorConfig& config, std::uint64_t master_seed);

struct Dataset {
  DatasetManifest manifest;
  std::shared_ptr<const SensorLayout> layout;
  std::vector<EventRecord> records;
};

/// Loads a manifest and its records, verifying checksums and class counts.
/// Accepts either the manifest path or its directory.
Dataset load_dataset(const std::filesystem::path& manifest_or_dir);

}  // namespace emte::gridgen
