#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "rcas/geo.hpp"

namespace rcas {

class CodecError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kCamMagic = 0xCA;
inline constexpr std::uint8_t kDenmMagic = 0xDE;
inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kCamWireSize = 29;
inline constexpr std::size_t kDenmWireSize = 23;

enum class DriveDirection : std::uint8_t { forward = 0, backward = 1 };

/// Cooperative awareness record. Fields are stored in wire resolution so the
/// codec round-trips exactly: position 1e-7 deg, speed 0.01 m/s, heading
/// 0.1 deg clockwise from north, length 0.1 m.
struct CamMessage {
    std::uint32_t station_id = 0;
    std::uint64_t timestamp_ms = 0;
    std::int32_t lat_e7 = 0;
    std::int32_t lon_e7 = 0;
    std::uint16_t speed_cm_s = 0;
    std::uint16_t heading_deci_deg = 0;
    std::uint16_t length_deci_m = 10;
    DriveDirection drive_direction = DriveDirection::forward;

    static CamMessage make(std::uint32_t station, std::uint64_t ts_ms, const GeoPoint& pos,
                           double speed_mps, double heading_deg, double length_m,
                           DriveDirection dir = DriveDirection::forward);

    GeoPoint position() const { return {lon_e7 * 1e-7, lat_e7 * 1e-7}; }
    double speed() const { return speed_cm_s * 0.01; }
    double heading() const { return heading_deci_deg * 0.1; }
    double vehicle_length() const { return length_deci_m * 0.1; }

    bool operator==(const CamMessage&) const = default;
};

enum class DenmCause : std::uint8_t { longitudinal_collision_warning = 1 };

struct DenmMessage {
    std::uint32_t station_id = 0;
    std::uint64_t timestamp_ms = 0;
    DenmCause cause = DenmCause::longitudinal_collision_warning;
    std::int32_t lat_e7 = 0;
    std::int32_t lon_e7 = 0;

    static DenmMessage make(std::uint32_t station, std::uint64_t ts_ms, const GeoPoint& pos);
    GeoPoint position() const { return {lon_e7 * 1e-7, lat_e7 * 1e-7}; }

    bool operator==(const DenmMessage&) const = default;
};

// fixed-layout big-endian codecs; decode throws CodecError on bad magic,
// truncation or out-of-range fields
std::vector<std::uint8_t> encode_cam(const CamMessage& m);
CamMessage decode_cam(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_denm(const DenmMessage& m);
DenmMessage decode_denm(std::span<const std::uint8_t> bytes);

/// CAM generation-rate rules: at least 1 Hz, at most 10 Hz, early generation
/// on significant position/speed/heading change.
struct CamTriggerConfig {
    double min_interval = 0.1;
    double max_interval = 1.0;
    double pos_threshold = 4.0;      // m
    double speed_threshold = 0.5;    // m/s
    double heading_threshold = 4.0;  // deg
};

bool cam_due(const CamMessage& last_sent, double last_send_time, const CamMessage& current,
             double now, const CamTriggerConfig& cfg = {});

struct ChannelConfig {
    double latency_mean = 0.05;   // s
    double latency_jitter = 0.0;  // uniform in [-jitter, +jitter]
    double loss_probability = 0.0;
    double range = 500.0;  // single-hop broadcast radius [m]
    std::uint64_t seed = 0;

    void validate() const;
};

struct Delivery {
    std::uint32_t receiver = 0;
    double time = 0.0;
};

/// Simulated single-hop broadcast channel with latency, jitter and loss.
/// Owns a seeded RNG, so the delivery schedule is a deterministic function of
/// the configuration and the call sequence.
class Channel {
  public:
    explicit Channel(const ChannelConfig& cfg);

    /// Computes the delivery schedule for one broadcast and queues the
    /// payload. Out-of-range receivers are excluded; each in-range receiver
    /// independently loses the message with loss_probability.
    std::vector<Delivery> broadcast(std::span<const std::uint8_t> msg, const GeoPoint& sender_pos,
                                    std::span<const std::pair<std::uint32_t, GeoPoint>> receivers,
                                    double now, std::uint32_t sender_id = 0);

    struct Pending {
        double deliver_at;
        std::uint32_t sender;
        std::uint64_t seq;  // per-channel message counter, breaks ordering ties
        std::uint32_t receiver;
        std::vector<std::uint8_t> bytes;
    };

    /// Messages due at or before `now`, ordered by (delivery time, sender,
    /// sequence); removed from the queue.
    std::vector<Pending> collect_due(double now);

    std::uint64_t messages_sent() const { return seq_; }
    std::uint64_t messages_dropped() const { return dropped_; }

  private:
    ChannelConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<Pending> queue_;
    std::uint64_t seq_ = 0;
    std::uint64_t dropped_ = 0;
};

}  // namespace rcas
