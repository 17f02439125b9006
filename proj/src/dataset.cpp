#include "emte/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "emte/checkpoint.hpp"
#include "emte/error.hpp"

namespace emte::gridgen {

namespace {

constexpr std::uint64_t kParamStream = 0x50415241;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    bits |= static_cast<U>(static_cast<U>(bytes[offset + b]) << (8 * b));
  }
  return std::bit_cast<T>(bits);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string record_filename(std::size_t index, EventClass c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "records/r%06zu_c%d.emte", index, class_code(c));
  return buf;
}

}  // namespace

std::vector<std::uint8_t> encode_record(const EventRecord& record) {
  if (record.sensors > 0xFFFF || record.samples > 0xFFFFFFFFULL) {
    throw std::invalid_argument("record dimensions exceed the file format limits");
  }
  if (record.voltages.size() != record.sensors * 3 * record.samples) {
    throw std::invalid_argument("record voltage array has the wrong size");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kRecordHeaderBytes + 4 * record.voltages.size());
  for (char c : {'E', 'M', 'T', 'E'}) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(kRecordFormatVersion);
  out.push_back(static_cast<std::uint8_t>(class_code(record.label)));
  put_le(out, static_cast<std::uint16_t>(record.sensors));
  put_le(out, static_cast<std::uint32_t>(record.samples));
  put_le(out, record.layout ? record.layout->sample_rate_hz : 0.0);
  put_le(out, record.seed);
  for (float v : record.voltages) put_le(out, v);
  return out;
}

void write_record(const std::filesystem::path& path, const EventRecord& record) {
  const auto bytes = encode_record(record);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing record " + path.string());
}

RecordFile decode_record(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kRecordHeaderBytes || std::memcmp(bytes.data(), "EMTE", 4) != 0) {
    throw DataError("not an EMTE record (bad magic or truncated header)");
  }
  RecordFile r;
  r.version = bytes[4];
  if (r.version != kRecordFormatVersion) {
    throw DataError("unsupported record format version " + std::to_string(r.version));
  }
  const auto label = class_from_code(bytes[5]);
  if (!label) throw DataError("record has unknown class code " + std::to_string(bytes[5]));
  r.label = *label;
  r.sensors = get_le<std::uint16_t>(bytes, 6);
  r.samples = get_le<std::uint32_t>(bytes, 8);
  r.sample_rate_hz = get_le<double>(bytes, 12);
  r.seed = get_le<std::uint64_t>(bytes, 20);
  const std::size_t count = r.sensors * 3 * r.samples;
  if (bytes.size() != kRecordHeaderBytes + 4 * count) {
    throw DataError("record payload size does not match its header");
  }
  r.voltages.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    r.voltages[i] = get_le<float>(bytes, kRecordHeaderBytes + 4 * i);
  }
  return r;
}

RecordFile read_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open record " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_record(bytes);
}

GeneratorConfig generator_config_from(const KeyValueConfig& kv) {
  static constexpr std::string_view allowed[] = {
      "count.",          "layout.sensors", "layout.positions", "layout.delays",
      "layout.attenuations", "layout.sample_rate_hz", "layout.default_sensors",
      "noise.sigma",     "split_fraction", "output_dir",       "grid.",
      "propagation.travel_time_s", "propagation.decay_length"};
  kv.check_known(allowed);

  GeneratorConfig cfg;
  for (EventClass c : kAllClasses) {
    const std::string key = "count." + std::string(class_key(c));
    const long long n = kv.get_int(key, 0);
    if (n <= 0) throw UsageError(kv.source() + ": " + key + " must be a positive count");
    cfg.counts[class_index(c)] = static_cast<std::size_t>(n);
  }
  for (const auto& key : kv.keys_with_prefix("count.")) {
    if (!class_from_key(key.substr(6))) throw UsageError(kv.source() + ": unknown class in " + key);
  }

  const double fs = kv.get_double("layout.sample_rate_hz", 20000.0);
  try {
    if (kv.has("layout.sensors")) {
      auto ids = kv.get_strings("layout.sensors", {});
      auto positions = kv.get_doubles("layout.positions", {});
      cfg.layout = make_layout(ids, positions, fs);
      if (kv.has("layout.delays")) cfg.layout.delays = kv.get_doubles("layout.delays", {});
      if (kv.has("layout.attenuations")) {
        cfg.layout.attenuations = kv.get_doubles("layout.attenuations", {});
      }
    } else {
      cfg.layout = default_layout(static_cast<std::size_t>(kv.get_int("layout.default_sensors", 5)));
      cfg.layout.sample_rate_hz = fs;
      cfg.layout.window_samples = window_samples_for(fs);
    }
    cfg.layout.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(kv.source() + ": invalid layout: " + e.what());
  }

  constexpr double deg = std::numbers::pi / 180.0;
  auto scaled = [&kv](const std::string& key, std::vector<double> fallback, double scale) {
    if (!kv.has(key)) return fallback;
    auto values = kv.get_doubles(key, {});
    if (values.empty()) throw UsageError(kv.source() + ": " + key + " must not be empty");
    for (double& v : values) v *= scale;
    return values;
  };
  ParamGrids& g = cfg.grids;
  g.switching_instants = scaled("grid.switching_instants_deg", g.switching_instants, deg);
  g.sync_delays = scaled("grid.sync_delays_s", g.sync_delays, 1.0);
  g.cap_sizes = scaled("grid.cap_sizes_uf", g.cap_sizes, 1e-6);
  g.fault_resistances = scaled("grid.fault_resistances_ohm", g.fault_resistances, 1.0);
  g.inception_angles = scaled("grid.inception_angles_deg", g.inception_angles, deg);
  g.surge_currents = scaled("grid.surge_currents_a", g.surge_currents, 1.0);
  g.hif_resistances = scaled("grid.hif_resistances_ohm", g.hif_resistances, 1.0);
  g.source_locations = scaled("grid.source_locations", g.source_locations, 1.0);
  for (const auto& key : kv.keys_with_prefix("grid.")) {
    static constexpr std::string_view grid_keys[] = {
        "grid.switching_instants_deg", "grid.sync_delays_s",      "grid.cap_sizes_uf",
        "grid.fault_resistances_ohm",  "grid.inception_angles_deg", "grid.surge_currents_a",
        "grid.hif_resistances_ohm",    "grid.source_locations"};
    if (std::find(std::begin(grid_keys), std::end(grid_keys), key) == std::end(grid_keys)) {
      throw UsageError(kv.source() + ": unknown grid key '" + key + "'");
    }
  }

  cfg.synthesis.noise_sigma = kv.get_double("noise.sigma", 0.002);
  cfg.synthesis.propagation.travel_time_s =
      kv.get_double("propagation.travel_time_s", cfg.synthesis.propagation.travel_time_s);
  cfg.synthesis.propagation.decay_length =
      kv.get_double("propagation.decay_length", cfg.synthesis.propagation.decay_length);
  cfg.split_fraction = kv.get_double("split_fraction", 0.8);
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0)) {
    throw UsageError(kv.source() + ": split_fraction must lie in (0,1)");
  }
  if (!(cfg.synthesis.noise_sigma >= 0.0)) throw UsageError(kv.source() + ": noise.sigma must be >= 0");
  cfg.output_dir = kv.get_string("output_dir", "data");
  return cfg;
}

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
  return generator_config_from(KeyValueConfig::load(path));
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json counts;
  for (EventClass c : kAllClasses) counts[std::string(class_key(c))] = m.counts[class_index(c)];
  nlohmann::json records = nlohmann::json::array();
  for (const auto& e : m.records) {
    records.push_back({{"file", e.file},
                       {"class", class_code(e.label)},
                       {"seed", e.seed},
                       {"crc32", e.checksum},
                       {"params", to_json(e.params)}});
  }
  return {{"version", m.version},
          {"classes", counts},
          {"layout", to_json(m.layout)},
          {"split_fraction", m.split_fraction},
          {"master_seed", m.master_seed},
          {"noise_sigma", m.noise_sigma},
          {"records", records}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != 1) throw DataError("unsupported manifest version " + std::to_string(m.version));
  for (EventClass c : kAllClasses) {
    m.counts[class_index(c)] = j.at("classes").at(std::string(class_key(c))).get<std::size_t>();
  }
  m.layout = layout_from_json(j.at("layout"));
  m.split_fraction = j.at("split_fraction").get<double>();
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.noise_sigma = j.at("noise_sigma").get<double>();
  for (const auto& r : j.at("records")) {
    ManifestEntry e;
    e.file = r.at("file").get<std::string>();
    const auto c = class_from_code(r.at("class").get<int>());
    if (!c) throw DataError("manifest entry has unknown class");
    e.label = *c;
    e.seed = r.at("seed").get<std::uint64_t>();
    e.checksum = r.at("crc32").get<std::string>();
    e.params = params_from_json(r.at("params"));
    m.records.push_back(std::move(e));
  }
  return m;
}

std::vector<EventRecord> generate_records(const GeneratorConfig& config,
                                          std::uint64_t master_seed) {
  for (std::size_t n : config.counts) {
    if (n == 0) throw std::invalid_argument("every class needs a positive event count");
  }
  auto layout = std::make_shared<const SensorLayout>(config.layout);
  std::vector<EventRecord> records;
  std::uint64_t index = 0;
  for (EventClass c : kAllClasses) {
    for (std::size_t k = 0; k < config.counts[class_index(c)]; ++k, ++index) {
      const std::uint64_t seed = master_seed + index;
      Rng param_rng(mix_seed(seed, kParamStream));
      const EventParams params = sample_params(c, config.grids, param_rng);
      records.push_back(synthesize_event(params, layout, seed, config.synthesis));
    }
  }
  return records;
}

DatasetManifest build_dataset(const GeneratorConfig& config, std::uint64_t master_seed) {
  const auto records = generate_records(config, master_seed);
  DatasetManifest m;
  m.counts = config.counts;
  m.layout = config.layout;
  m.split_fraction = config.split_fraction;
  m.master_seed = master_seed;
  m.noise_sigma = config.synthesis.noise_sigma;
  std::filesystem::create_directories(config.output_dir / "records");
  for (std::size_t i = 0; i < records.size(); ++i) {
    ManifestEntry e;
    e.file = record_filename(i, records[i].label);
    e.label = records[i].label;
    e.seed = records[i].seed;
    e.params = records[i].params;
    const auto bytes = encode_record(records[i]);
    e.checksum = hex32(crc32_of(bytes));
    const auto path = config.output_dir / e.file;
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing record " + path.string());
    m.records.push_back(std::move(e));
  }
  std::ofstream out(config.output_dir / kManifestFile);
  out << to_json(m).dump(2) << "\n";
  if (!out) throw DataError("failed writing manifest in " + config.output_dir.string());
  return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_or_dir) {
  std::filesystem::path path = manifest_or_dir;
  if (std::filesystem::is_directory(path)) path /= kManifestFile;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Dataset ds;
  try {
    ds.manifest = manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("invalid manifest " + path.string() + ": " + e.what());
  }
  ds.layout = std::make_shared<const SensorLayout>(ds.manifest.layout);
  const auto root = path.parent_path();
  std::array<std::size_t, kClassCount> seen{};
  for (const auto& e : ds.manifest.records) {
    std::ifstream rf(root / e.file, std::ios::binary);
    if (!rf) throw DataError("manifest references missing record " + e.file);
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(rf),
                                          std::istreambuf_iterator<char>()};
    if (hex32(crc32_of(bytes)) != e.checksum) throw DataError("checksum mismatch for " + e.file);
    RecordFile file = decode_record(bytes);
    if (file.label != e.label || file.seed != e.seed || file.sensors != ds.layout->sensor_count() ||
        file.samples != ds.layout->window_samples) {
      throw DataError("record " + e.file + " disagrees with its manifest entry");
    }
    EventRecord rec;
    rec.label = e.label;
    rec.params = e.params;
    rec.layout = ds.layout;
    rec.seed = e.seed;
    rec.onset_angle = onset_angle_for(e.params, e.seed);
    rec.sensors = file.sensors;
    rec.samples = file.samples;
    rec.voltages = std::move(file.voltages);
    ++seen[class_index(e.label)];
    ds.records.push_back(std::move(rec));
  }
  if (seen != ds.manifest.counts) throw DataError("manifest class counts do not match its records");
  return ds;
}

}  // namespace emte::gridgen
