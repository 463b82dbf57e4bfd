#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rcas/braking.hpp"
#include "rcas/collision.hpp"
#include "rcas/estimator.hpp"
#include "rcas/track_map.hpp"
#include "rcas/v2x.hpp"

namespace rcas {

class ScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class SimError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SlipEvent {
    double t_start = 0.0;
    double duration = 0.0;
    double speed_offset = 0.0;
    std::optional<std::uint32_t> tram;  // absent: applies to every tram
};

struct SensorConfig {
    double gnss_pos_std = 5.0;
    double gnss_speed_std = 0.5;
    double tacho_std = 0.3;
    double imu_std = 0.3;
    double gnss_period = 0.1;
    double imu_period = 0.1;
    double tacho_period = 0.5;
    std::vector<SlipEvent> slip_events;
};

enum class DriverBehavior { stationary, hold, profile };

struct DriverConfig {
    double reaction_time = 1.0;
    DriverBehavior behavior = DriverBehavior::hold;
    double target_speed = 0.0;
    std::vector<std::pair<double, double>> profile;  // (t, target speed) setpoints
};

struct TramConfig {
    std::uint32_t id = 0;
    double initial_s = 0.0;
    double initial_v = 0.0;
    double length = 15.0;
    Path path;  // initial path hypothesis; defaults to the first map segment
    BrakingParams params;
    DriverConfig driver;
};

struct ScenarioConfig {
    std::string map_file;
    std::vector<TramConfig> trams;
    SensorConfig sensors;
    ChannelConfig channel;
    RcasConfig rcas;
    KfParams kf;
    IntegrationOptions integ;
    double dt = 0.1;
    double duration = 60.0;
    std::uint64_t seed = 1;

    void validate() const;
    static ScenarioConfig from_json_text(const std::string& text,
                                         const std::filesystem::path& base_dir = {});
    static ScenarioConfig load(const std::filesystem::path& file);
};

/// Synthesized sensor readings for one tick: GNSS position/speed and IMU at
/// their native rates, tachograph on its slower grid with slip injection.
MeasurementSet synthesize_sensors(const DynState& truth, double truth_accel,
                                  const GeoPoint& truth_geo, std::uint32_t tram_id,
                                  const SensorConfig& cfg, double t, double dt,
                                  std::mt19937_64& rng, const LocalFrame& frame);

/// Pure-delay driver: scripted speed following until a warning, then full
/// service braking (notch -7) from warning time + reaction_time until
/// standstill.
class DriverModel {
  public:
    explicit DriverModel(const DriverConfig& cfg) : cfg_(cfg) {}

    void notify_warning(double now);
    int notch(double now, double current_speed, bool stopped) const;
    bool braking_commanded(double now) const;
    std::optional<double> warning_time() const { return warning_time_; }
    double reaction_time() const { return cfg_.reaction_time; }

  private:
    double target_speed(double now) const;
    DriverConfig cfg_;
    std::optional<double> warning_time_;
};

struct TramTickRow {
    double t = 0.0;
    double truth_s = 0.0, truth_v = 0.0, truth_a = 0.0;
    bool est_valid = false;
    double est_s = 0.0, est_v = 0.0, est_a = 0.0;
    bool has_gnss = false, has_tacho = false, has_imu = false;
    int cam_sent = 0, msgs_received = 0;
    bool warned = false;
    int notch = 0;
    std::optional<double> true_gap;  // front-to-rear to the nearest tram ahead
};

struct WarningEvent {
    double t;
    std::uint32_t target;
    double gap, d_br, v;
};

struct MessageRecord {
    std::uint64_t msg_id;
    std::string kind;  // "CAM" or "DENM"
    std::uint32_t sender;
    double t_sent;
    std::uint32_t receiver;
    std::string outcome;  // "delivered", "dropped", "out-of-range"
    double t_delivered;   // NaN unless delivered
};

struct TramSummary {
    std::uint32_t id = 0;
    double v_appr = 0.0;
    std::optional<double> d_w;
    double t_r_actual = 0.0;
    std::optional<double> final_gap;
    int warning_count = 0;
    std::optional<double> first_warning_t;
    std::optional<double> first_brake_t;
};

struct SimResult {
    std::vector<std::uint32_t> tram_ids;
    std::map<std::uint32_t, std::vector<TramTickRow>> rows;
    std::map<std::uint32_t, std::vector<WarningEvent>> warnings;
    std::map<std::uint32_t, std::vector<std::string>> estimator_rows;
    std::vector<MessageRecord> messages;
    std::vector<TramSummary> summary;
    std::uint64_t seed = 0;
    double max_kin_err = 0.0;  // worst per-tick |ds - integral(v dt)| / dt

    /// Deterministic rendering of every output file (per-tram logs,
    /// estimator dumps, message ledger, summary.json), keyed by file name.
    std::map<std::string, std::string> render() const;
};

SimResult run_scenario(const ScenarioConfig& cfg);

/// Writes the rendered outputs into out_dir (created if missing).
void write_outputs(const SimResult& result, const std::filesystem::path& out_dir);

}  // namespace rcas
