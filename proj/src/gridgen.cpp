#include "emte/gridgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace emte::gridgen {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kOmega = kTwoPi * kSystemFrequencyHz;

constexpr std::array<std::string_view, kClassCount> kClassKeys = {
    "line_energization", "cap_bank_energization", "fault", "lightning",
    "high_impedance_fault"};

// Streams derived from an event seed.
constexpr std::uint64_t kEventStream = 0x4556454e;
constexpr std::uint64_t kAngleStream = 0x414e474c;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double pick(const std::vector<double>& grid, Rng& rng, const char* name) {
  if (grid.empty()) throw std::invalid_argument(std::string("empty parameter grid: ") + name);
  return grid[rng.index(grid.size())];
}

template <typename T>
void require_field(const std::optional<T>& field, const char* name, EventClass c) {
  if (!field) {
    throw std::invalid_argument(std::string("event parameters for class ") +
                                std::string(class_key(c)) + " lack " + name);
  }
}

}  // namespace

std::optional<EventClass> class_from_code(int code) {
  if (code < 1 || code > static_cast<int>(kClassCount)) return std::nullopt;
  return static_cast<EventClass>(code);
}

std::string_view class_key(EventClass c) { return kClassKeys.at(class_index(c)); }

std::optional<EventClass> class_from_key(std::string_view key) {
  for (std::size_t i = 0; i < kClassCount; ++i) {
    if (kClassKeys[i] == key) return kAllClasses[i];
  }
  return std::nullopt;
}

nlohmann::json to_json(const EventParams& p) {
  nlohmann::json j;
  j["class"] = class_code(p.event_class);
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("switching_instant", p.switching_instant);
  put("sync_delay", p.sync_delay);
  put("cap_size", p.cap_size);
  if (p.fault_type) j["fault_type"] = static_cast<int>(*p.fault_type);
  put("fault_resistance", p.fault_resistance);
  put("inception_angle", p.inception_angle);
  put("surge_current", p.surge_current);
  put("hif_ra", p.hif_ra);
  put("hif_rb", p.hif_rb);
  j["source_location"] = p.source_location;
  return j;
}

EventParams params_from_json(const nlohmann::json& j) {
  EventParams p;
  const auto c = class_from_code(j.at("class").get<int>());
  if (!c) throw std::invalid_argument("unknown event class code in params");
  p.event_class = *c;
  auto get = [&j](const char* key) -> std::optional<double> {
    if (!j.contains(key)) return std::nullopt;
    return j.at(key).get<double>();
  };
  p.switching_instant = get("switching_instant");
  p.sync_delay = get("sync_delay");
  p.cap_size = get("cap_size");
  if (j.contains("fault_type")) {
    const int ft = j.at("fault_type").get<int>();
    if (ft < 1 || ft > 3) throw std::invalid_argument("fault_type must be 1, 2 or 3");
    p.fault_type = static_cast<FaultType>(ft);
  }
  p.fault_resistance = get("fault_resistance");
  p.inception_angle = get("inception_angle");
  p.surge_current = get("surge_current");
  p.hif_ra = get("hif_ra");
  p.hif_rb = get("hif_rb");
  p.source_location = j.at("source_location").get<double>();
  return p;
}

ParamGrids ParamGrids::defaults() {
  ParamGrids g;
  for (int k = 0; k < 16; ++k) g.switching_instants.push_back(kTwoPi * k / 16.0);
  g.sync_delays = {0.0, 0.5e-3, 1.0e-3, 1.5e-3};
  g.cap_sizes = {2e-6, 3e-6, 4e-6, 6e-6, 8e-6, 12e-6, 16e-6, 24e-6};
  g.fault_resistances = {0.1, 5.0};
  g.inception_angles = {0.0, std::numbers::pi / 4.0, std::numbers::pi / 2.0};
  g.surge_currents = {30e3, 100e3};
  g.hif_resistances = {60.0, 90.0, 120.0, 180.0, 240.0, 360.0};
  for (int k = 0; k <= 10; ++k) g.source_locations.push_back(k / 10.0);
  return g;
}

EventParams sample_params(EventClass c, const ParamGrids& grids, Rng& rng) {
  EventParams p;
  p.event_class = c;
  switch (c) {
    case EventClass::LineEnergization:
      p.switching_instant = pick(grids.switching_instants, rng, "switching_instants");
      p.sync_delay = pick(grids.sync_delays, rng, "sync_delays");
      break;
    case EventClass::CapBankEnergization:
      p.switching_instant = pick(grids.switching_instants, rng, "switching_instants");
      p.cap_size = pick(grids.cap_sizes, rng, "cap_sizes");
      break;
    case EventClass::Fault:
      p.fault_type = static_cast<FaultType>(1 + rng.index(3));
      p.fault_resistance = pick(grids.fault_resistances, rng, "fault_resistances");
      p.inception_angle = pick(grids.inception_angles, rng, "inception_angles");
      break;
    case EventClass::Lightning:
      p.surge_current = pick(grids.surge_currents, rng, "surge_currents");
      break;
    case EventClass::HighImpedanceFault:
      p.hif_ra = pick(grids.hif_resistances, rng, "hif_resistances");
      p.hif_rb = pick(grids.hif_resistances, rng, "hif_resistances");
      p.inception_angle = pick(grids.inception_angles, rng, "inception_angles");
      break;
  }
  p.source_location = pick(grids.source_locations, rng, "source_locations");
  return p;
}

std::size_t window_samples_for(double sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(2.0 * sample_rate_hz / kSystemFrequencyHz));
}

void SensorLayout::validate() const {
  const std::size_t n = sensor_ids.size();
  if (n == 0) throw std::invalid_argument("layout has no sensors");
  if (positions.size() != n || delays.size() != n || attenuations.size() != n) {
    throw std::invalid_argument("layout vectors must all have one entry per sensor");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sensor_ids[i] == sensor_ids[j]) {
        throw std::invalid_argument("duplicate sensor id '" + sensor_ids[i] + "'");
      }
    }
    if (!(positions[i] >= 0.0 && positions[i] <= 1.0)) {
      throw std::invalid_argument("sensor position must lie in [0,1]");
    }
    if (!(delays[i] >= 0.0)) throw std::invalid_argument("sensor delay must be >= 0");
    if (!(attenuations[i] > 0.0 && attenuations[i] <= 1.0)) {
      throw std::invalid_argument("sensor attenuation must lie in (0,1]");
    }
  }
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (window_samples != window_samples_for(sample_rate_hz)) {
    throw std::invalid_argument("window_samples must equal two fundamental cycles (" +
                                std::to_string(window_samples_for(sample_rate_hz)) + ")");
  }
}

std::optional<std::size_t> SensorLayout::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < sensor_ids.size(); ++i) {
    if (sensor_ids[i] == id) return i;
  }
  return std::nullopt;
}

SensorLayout SensorLayout::subset(const std::vector<std::size_t>& indices) const {
  SensorLayout out;
  out.sample_rate_hz = sample_rate_hz;
  out.window_samples = window_samples;
  for (std::size_t i : indices) {
    if (i >= sensor_ids.size()) throw std::invalid_argument("sensor index out of range");
    out.sensor_ids.push_back(sensor_ids[i]);
    out.positions.push_back(positions[i]);
    out.delays.push_back(delays[i]);
    out.attenuations.push_back(attenuations[i]);
  }
  out.validate();
  return out;
}

SensorLayout make_layout(std::vector<std::string> ids, std::vector<double> positions,
                         double sample_rate_hz) {
  SensorLayout layout;
  const std::size_t n = ids.size();
  layout.sensor_ids = std::move(ids);
  layout.positions = std::move(positions);
  layout.delays.assign(n, 0.0);
  layout.attenuations.assign(n, 1.0);
  layout.sample_rate_hz = sample_rate_hz;
  layout.window_samples = window_samples_for(sample_rate_hz);
  layout.validate();
  return layout;
}

SensorLayout default_layout(std::size_t sensor_count) {
  static const std::vector<std::string> ids = {"6", "10", "4", "28", "8",
                                               "22", "21", "9", "12", "3"};
  static const std::vector<double> positions = {0.05, 0.95, 0.50, 0.28, 0.72,
                                                0.16, 0.84, 0.39, 0.61, 0.45};
  if (sensor_count == 0 || sensor_count > ids.size()) {
    throw std::invalid_argument("default layout supports 1 to 10 sensors");
  }
  return make_layout({ids.begin(), ids.begin() + static_cast<long>(sensor_count)},
                     {positions.begin(), positions.begin() + static_cast<long>(sensor_count)});
}

nlohmann::json to_json(const SensorLayout& layout) {
  return {{"sensor_ids", layout.sensor_ids},         {"positions", layout.positions},
          {"delays", layout.delays},                 {"attenuations", layout.attenuations},
          {"sample_rate_hz", layout.sample_rate_hz}, {"window_samples", layout.window_samples}};
}

SensorLayout layout_from_json(const nlohmann::json& j) {
  SensorLayout layout;
  layout.sensor_ids = j.at("sensor_ids").get<std::vector<std::string>>();
  layout.positions = j.at("positions").get<std::vector<double>>();
  layout.delays = j.at("delays").get<std::vector<double>>();
  layout.attenuations = j.at("attenuations").get<std::vector<double>>();
  layout.sample_rate_hz = j.at("sample_rate_hz").get<double>();
  layout.window_samples = j.at("window_samples").get<std::size_t>();
  layout.validate();
  return layout;
}

std::vector<double> EventRecord::sensor_phases(std::size_t sensor) const {
  const auto begin = voltages.begin() + static_cast<long>(sensor * 3 * samples);
  return {begin, begin + static_cast<long>(3 * samples)};
}

SensorPath sensor_path(const SensorLayout& layout, std::size_t sensor,
                       double source_location, const PropagationModel& model) {
  const double distance = std::abs(layout.positions.at(sensor) - source_location);
  return {layout.delays.at(sensor) + distance * model.travel_time_s,
          layout.attenuations.at(sensor) * std::exp(-distance / model.decay_length)};
}

double onset_angle_for(const EventParams& params, std::uint64_t seed) {
  switch (params.event_class) {
    case EventClass::LineEnergization:
    case EventClass::CapBankEnergization:
      return params.switching_instant.value_or(0.0);
    case EventClass::Fault:
    case EventClass::HighImpedanceFault:
      return params.inception_angle.value_or(0.0);
    case EventClass::Lightning:
      break;
  }
  Rng rng(mix_seed(seed, kAngleStream));
  return kTwoPi * rng.uniform();
}

double carrier(double onset_angle, std::size_t phase, double t) {
  return std::cos(kOmega * t + onset_angle - static_cast<double>(phase) * kTwoPi / 3.0);
}

namespace {

void check_params(const EventParams& p) {
  const EventClass c = p.event_class;
  switch (c) {
    case EventClass::LineEnergization:
      require_field(p.switching_instant, "switching_instant", c);
      require_field(p.sync_delay, "sync_delay", c);
      break;
    case EventClass::CapBankEnergization:
      require_field(p.switching_instant, "switching_instant", c);
      require_field(p.cap_size, "cap_size", c);
      if (!(*p.cap_size > 0.0)) throw std::invalid_argument("cap_size must be positive");
      break;
    case EventClass::Fault:
      require_field(p.fault_type, "fault_type", c);
      require_field(p.fault_resistance, "fault_resistance", c);
      require_field(p.inception_angle, "inception_angle", c);
      break;
    case EventClass::Lightning:
      require_field(p.surge_current, "surge_current", c);
      break;
    case EventClass::HighImpedanceFault:
      require_field(p.hif_ra, "hif_ra", c);
      require_field(p.hif_rb, "hif_rb", c);
      require_field(p.inception_angle, "inception_angle", c);
      if (!(*p.hif_ra > 0.0 && *p.hif_rb > 0.0)) {
        throw std::invalid_argument("HIF resistances must be positive");
      }
      break;
  }
  if (!(p.source_location >= 0.0 && p.source_location <= 1.0)) {
    throw std::invalid_argument("source_location must lie in [0,1]");
  }
}

// Event-level randomness shared by every recorder.
struct EventDraws {
  double ring_hz = 0.0;
  std::size_t phase = 0;
  std::array<bool, 3> faulted{};
  std::array<std::vector<double>, 3> burst;
  double arc_threshold = 0.0;
  double buildup_tau = 1.0;
};

EventDraws draw_event(const EventParams& p, const Waveshapes& w, std::size_t samples,
                      std::uint64_t seed) {
  Rng rng(mix_seed(seed, kEventStream));
  EventDraws d;
  switch (p.event_class) {
    case EventClass::LineEnergization:
      d.ring_hz = w.le_ring_hz * (1.0 + w.le_ring_jitter * rng.uniform(-1.0, 1.0));
      break;
    case EventClass::CapBankEnergization:
      d.ring_hz = w.cb_ref_hz * std::sqrt(w.cb_ref_farads / *p.cap_size);
      break;
    case EventClass::Fault: {
      const std::size_t first = rng.index(3);
      const int count = static_cast<int>(*p.fault_type);
      for (int k = 0; k < count; ++k) d.faulted[(first + static_cast<std::size_t>(k)) % 3] = true;
      for (auto& b : d.burst) {
        b.resize(samples);
        for (double& v : b) v = rng.normal();
      }
      break;
    }
    case EventClass::Lightning:
      d.phase = rng.index(3);
      break;
    case EventClass::HighImpedanceFault:
      d.phase = rng.index(3);
      d.arc_threshold = rng.uniform(w.hif_arc_min, w.hif_arc_max);
      d.buildup_tau = rng.uniform(w.hif_buildup_min, w.hif_buildup_max);
      d.burst[0].resize(samples);
      for (double& v : d.burst[0]) v = rng.normal();
      break;
  }
  return d;
}

// Transient added to phase `phase` at source-relative time u >= 0 (global
// time t) for a recorder seeing amplitude factor a.
double transient(const EventParams& p, const EventDraws& d, const Waveshapes& w,
                 double angle, std::size_t phase, double u, double t, double a,
                 double sample_rate_hz) {
  switch (p.event_class) {
    case EventClass::LineEnergization: {
      const double pole_time = static_cast<double>(phase) * *p.sync_delay;
      if (u < pole_time) return 0.0;
      const double s = u - pole_time;
      const double v_close = carrier(angle, phase, pole_time);
      return a * (-w.le_sag * carrier(angle, phase, t) -
                  w.le_ring_amplitude * v_close * std::exp(-s / w.le_ring_tau) *
                      std::cos(kTwoPi * d.ring_hz * s));
    }
    case EventClass::CapBankEnergization: {
      const double v_close = carrier(angle, phase, 0.0);
      return -a * w.cb_amplitude * v_close * std::exp(-u / w.cb_tau) *
             std::cos(kTwoPi * d.ring_hz * u);
    }
    case EventClass::Fault: {
      if (!d.faulted[phase]) return 0.0;
      const double depth = w.fault_depth / (1.0 + *p.fault_resistance / w.fault_ref_ohms);
      const auto idx = std::min(d.burst[phase].size() - 1,
                                static_cast<std::size_t>(u * sample_rate_hz));
      return a * (-depth * carrier(angle, phase, t) * (1.0 - std::exp(-u / w.fault_collapse_tau)) +
                  w.fault_burst_amplitude * std::exp(-u / w.fault_burst_tau) * d.burst[phase][idx]);
    }
    case EventClass::Lightning: {
      if (phase != d.phase) return 0.0;
      const double k = w.lightning_pu_per_30ka * (*p.surge_current / 30e3);
      return a * k * (std::exp(-u / w.lightning_tail_tau) - std::exp(-u / w.lightning_front_tau));
    }
    case EventClass::HighImpedanceFault: {
      if (phase != d.phase) return 0.0;
      const double v = carrier(angle, phase, t);
      if (std::abs(v) <= d.arc_threshold) return 0.0;
      const double r = v > 0.0 ? *p.hif_ra : *p.hif_rb;
      const double buildup = 1.0 - std::exp(-u / d.buildup_tau);
      const auto idx = std::min(d.burst[0].size() - 1, static_cast<std::size_t>(u * sample_rate_hz));
      return -a * w.hif_source_ohms * buildup * (v / r) * (1.0 + w.hif_flicker * d.burst[0][idx]);
    }
  }
  return 0.0;
}

}  // namespace

EventRecord synthesize_event(const EventParams& params,
                             std::shared_ptr<const SensorLayout> layout, std::uint64_t seed,
                             const SynthesisOptions& options) {
  if (!layout) throw std::invalid_argument("synthesize_event: null layout");
  layout->validate();
  check_params(params);
  if (!(options.noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");

  const std::size_t samples = layout->window_samples;
  const double fs = layout->sample_rate_hz;
  const double window_s = static_cast<double>(samples) / fs;
  const double worst_delay =
      *std::max_element(layout->delays.begin(), layout->delays.end()) +
      options.propagation.travel_time_s;
  if (worst_delay > 0.1 * window_s) {
    throw std::invalid_argument("layout delays exceed 10% of the window duration");
  }

  EventRecord rec;
  rec.label = params.event_class;
  rec.params = params;
  rec.layout = layout;
  rec.seed = seed;
  rec.onset_angle = onset_angle_for(params, seed);
  rec.sensors = layout->sensor_count();
  rec.samples = samples;
  rec.voltages.resize(rec.sensors * 3 * samples);

  const EventDraws draws = draw_event(params, options.shapes, samples, seed);
  for (std::size_t s = 0; s < rec.sensors; ++s) {
    const SensorPath path =
        sensor_path(*layout, s, params.source_location, options.propagation);
    // Keyed by sensor id so that any sub-layout reproduces the same noise.
    Rng noise(mix_seed(seed, fnv1a(layout->sensor_ids[s])));
    for (std::size_t ph = 0; ph < 3; ++ph) {
      float* out = rec.voltages.data() + (s * 3 + ph) * samples;
      for (std::size_t n = 0; n < samples; ++n) {
        const double t = static_cast<double>(n) / fs;
        double v = carrier(rec.onset_angle, ph, t);
        const double u = t - path.delay_s;
        if (u >= 0.0) {
          v += transient(params, draws, options.shapes, rec.onset_angle, ph, u, t,
                         path.attenuation, fs);
        }
        if (options.noise_sigma > 0.0) v += options.noise_sigma * noise.normal();
        out[n] = static_cast<float>(v);
      }
    }
  }
  return rec;
}

EventRecord select_sensors(const EventRecord& record, const std::vector<std::size_t>& indices,
                           std::shared_ptr<const SensorLayout> sub_layout) {
  EventRecord out = record;
  out.layout = std::move(sub_layout);
  out.sensors = indices.size();
  out.voltages.clear();
  out.voltages.reserve(indices.size() * 3 * record.samples);
  for (std::size_t i : indices) {
    if (i >= record.sensors) throw std::invalid_argument("sensor index out of range");
    const auto begin = record.voltages.begin() + static_cast<long>(i * 3 * record.samples);
    out.voltages.insert(out.voltages.end(), begin,
                        begin + static_cast<long>(3 * record.samples));
  }
  return out;
}

}  // namespace emte::gridgen
