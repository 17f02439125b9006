#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emte/rng.hpp"

namespace emte::gridgen {

// Integer codes are part of the record file format and reports.
enum class EventClass : std::uint8_t {
  LineEnergization = 1,
  CapBankEnergization = 2,
  Fault = 3,
  Lightning = 4,
  HighImpedanceFault = 5,
};

inline constexpr std::array<EventClass, 5> kAllClasses = {
    EventClass::LineEnergization, EventClass::CapBankEnergization, EventClass::Fault,
    EventClass::Lightning, EventClass::HighImpedanceFault};
inline constexpr std::size_t kClassCount = kAllClasses.size();

inline int class_code(EventClass c) { return static_cast<int>(c); }
/// Zero-based position used as the classifier label.
inline std::size_t class_index(EventClass c) { return static_cast<std::size_t>(c) - 1; }
inline EventClass class_from_index(std::size_t i) { return kAllClasses.at(i); }
std::optional<EventClass> class_from_code(int code);
/// snake_case key used in configs and manifests, e.g. "cap_bank_energization".
std::string_view class_key(EventClass c);
std::optional<EventClass> class_from_key(std::string_view key);

enum class FaultType : std::uint8_t { OnePhaseGround = 1, TwoPhaseGround = 2, ThreePhaseGround = 3 };

/// Event parameters. Only the fields relevant to `event_class` are set.
struct EventParams {
  EventClass event_class = EventClass::LineEnergization;
  std::optional<double> switching_instant;  // rad, classes 1 and 2
  std::optional<double> sync_delay;         // s between breaker poles, class 1
  std::optional<double> cap_size;           // F, class 2
  std::optional<FaultType> fault_type;      // class 3
  std::optional<double> fault_resistance;   // ohm, class 3
  std::optional<double> inception_angle;    // rad, classes 3 and 5
  std::optional<double> surge_current;      // A, class 4
  std::optional<double> hif_ra;             // ohm, positive half-cycle, class 5
  std::optional<double> hif_rb;             // ohm, negative half-cycle, class 5
  double source_location = 0.0;             // normalized position in [0, 1]

  bool operator==(const EventParams&) const = default;
};

nlohmann::json to_json(const EventParams& p);
EventParams params_from_json(const nlohmann::json& j);

/// Discrete parameter grids, scaled-down analogues of the original study's
/// simulation matrix.
struct ParamGrids {
  std::vector<double> switching_instants;
  std::vector<double> sync_delays;
  std::vector<double> cap_sizes;
  std::vector<double> fault_resistances;
  std::vector<double> inception_angles;
  std::vector<double> surge_currents;
  std::vector<double> hif_resistances;
  std::vector<double> source_locations;

  static ParamGrids defaults();
};

/// Draws each relevant field uniformly from its grid.
EventParams sample_params(EventClass c, const ParamGrids& grids, Rng& rng);

/// Time-synchronized recorder placement along the synthetic network.
struct SensorLayout {
  std::vector<std::string> sensor_ids;
  std::vector<double> positions;     // normalized [0, 1]
  std::vector<double> delays;        // s, fixed per-recorder offset
  std::vector<double> attenuations;  // (0, 1]
  double sample_rate_hz = 20000.0;
  std::size_t window_samples = 0;

  std::size_t sensor_count() const { return sensor_ids.size(); }
  /// Throws std::invalid_argument on any inconsistency.
  void validate() const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  SensorLayout subset(const std::vector<std::size_t>& indices) const;

  bool operator==(const SensorLayout&) const = default;
};

inline constexpr double kSystemFrequencyHz = 60.0;

/// Two fundamental cycles, rounded: 667 at 20 kHz.
std::size_t window_samples_for(double sample_rate_hz);

SensorLayout make_layout(std::vector<std::string> ids, std::vector<double> positions,
                         double sample_rate_hz = 20000.0);

/// Ten recorders named after the dominant buses of the 30-bus study, in
/// centrality order, spread over the synthetic line.
SensorLayout default_layout(std::size_t sensor_count = 10);

nlohmann::json to_json(const SensorLayout& layout);
SensorLayout layout_from_json(const nlohmann::json& j);

// Transient waveshape constants. All amplitudes are per unit of the carrier.
struct Waveshapes {
  // line energization
  double le_sag = 0.05;
  double le_ring_amplitude = 0.45;
  double le_ring_hz = 1100.0;
  double le_ring_jitter = 0.15;
  double le_ring_tau = 2.5e-3;
  // capacitor bank energization, f = cb_ref_hz * sqrt(cb_ref_farads / C)
  double cb_amplitude = 0.5;
  double cb_ref_hz = 2600.0;
  double cb_ref_farads = 4e-6;
  double cb_tau = 1.8e-3;
  // fault
  double fault_depth = 0.8;
  double fault_ref_ohms = 5.0;
  double fault_collapse_tau = 0.4e-3;
  double fault_burst_amplitude = 0.08;
  double fault_burst_tau = 1.5e-3;
  // lightning double exponential, amplitude per 30 kA
  double lightning_pu_per_30ka = 2.0;
  double lightning_tail_tau = 120e-6;
  double lightning_front_tau = 12e-6;
  // high-impedance fault
  double hif_source_ohms = 12.0;
  double hif_arc_min = 0.2;
  double hif_arc_max = 0.45;
  double hif_buildup_min = 1.5e-3;
  double hif_buildup_max = 6e-3;
  double hif_flicker = 0.35;  // relative arc-current noise while conducting
};

// Distance-based propagation from the event source to each recorder.
struct PropagationModel {
  double travel_time_s = 1e-3;  // over the full normalized span
  double decay_length = 0.6;    // attenuation = exp(-distance / decay_length)
};

struct SynthesisOptions {
  double noise_sigma = 0.002;
  Waveshapes shapes;
  PropagationModel propagation;
};

/// One labeled event: [sensors x 3 phases x samples] per-unit voltages.
struct EventRecord {
  EventClass label = EventClass::LineEnergization;
  EventParams params;
  std::shared_ptr<const SensorLayout> layout;
  std::uint64_t seed = 0;
  double onset_angle = 0.0;  // carrier phase of phase a at the event onset
  std::size_t sensors = 0;
  std::size_t samples = 0;
  std::vector<float> voltages;

  float at(std::size_t sensor, std::size_t phase, std::size_t n) const {
    return voltages[(sensor * 3 + phase) * samples + n];
  }
  /// Copy of one sensor's [3 x samples] block as doubles.
  std::vector<double> sensor_phases(std::size_t sensor) const;
};

struct SensorPath {
  double delay_s;
  double attenuation;
};

SensorPath sensor_path(const SensorLayout& layout, std::size_t sensor,
                       double source_location, const PropagationModel& model);

/// Carrier angle of phase a at t = 0; lightning has no angle parameter so its
/// angle is drawn from the event's own seed.
double onset_angle_for(const EventParams& params, std::uint64_t seed);

/// Noise-free balanced carrier: cos(w t + angle - phase * 2pi/3).
double carrier(double onset_angle, std::size_t phase, double t);

/// Pure function of (params, layout, seed, options). Throws
/// std::invalid_argument when a recorder's worst-case delay exceeds 10% of
/// the window or when params are inconsistent with their class.
EventRecord synthesize_event(const EventParams& params,
                             std::shared_ptr<const SensorLayout> layout,
                             std::uint64_t seed, const SynthesisOptions& options = {});

/// Restricts a record to a subset of its recorders.
EventRecord select_sensors(const EventRecord& record, const std::vector<std::size_t>& indices,
                           std::shared_ptr<const SensorLayout> sub_layout);

}  // namespace emte::gridgen
