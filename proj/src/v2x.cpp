#include "rcas/v2x.hpp"

#include <algorithm>
#include <cmath>

namespace rcas {

namespace {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

template <typename T>
void put_be(std::vector<std::uint8_t>& out, T v) {
    using U = std::make_unsigned_t<T>;
    const U u = static_cast<U>(v);
    for (int i = static_cast<int>(sizeof(T)) - 1; i >= 0; --i)
        out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xFF));
}

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }

    template <typename T>
    T be() {
        need(sizeof(T));
        using U = std::make_unsigned_t<T>;
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>((u << 8) | b_[pos_++]);
        return static_cast<T>(u);
    }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw CodecError("truncated buffer");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::uint16_t quantize_u16(double value, double scale, const char* what) {
    const double q = std::round(value / scale);
    if (q < 0 || q > 65535.0) throw CodecError(std::string("field out of range: ") + what);
    return static_cast<std::uint16_t>(q);
}

std::int32_t quantize_deg(double deg, double limit, const char* what) {
    if (deg < -limit || deg > limit) throw CodecError(std::string("field out of range: ") + what);
    return static_cast<std::int32_t>(std::llround(deg * 1e7));
}

}  // namespace

CamMessage CamMessage::make(std::uint32_t station, std::uint64_t ts_ms, const GeoPoint& pos,
                            double speed_mps, double heading_deg, double length_m,
                            DriveDirection dir) {
    CamMessage m;
    m.station_id = station;
    m.timestamp_ms = ts_ms;
    m.lat_e7 = quantize_deg(pos.lat, 90.0, "lat");
    m.lon_e7 = quantize_deg(pos.lon, 180.0, "lon");
    m.speed_cm_s = quantize_u16(std::max(0.0, speed_mps), 0.01, "speed");
    double h = std::fmod(heading_deg, 360.0);
    if (h < 0) h += 360.0;
    m.heading_deci_deg = static_cast<std::uint16_t>(std::lround(h * 10.0) % 3600);
    m.length_deci_m = quantize_u16(length_m, 0.1, "length");
    if (m.length_deci_m == 0) throw CodecError("field out of range: length must be > 0");
    m.drive_direction = dir;
    return m;
}

DenmMessage DenmMessage::make(std::uint32_t station, std::uint64_t ts_ms, const GeoPoint& pos) {
    DenmMessage m;
    m.station_id = station;
    m.timestamp_ms = ts_ms;
    m.lat_e7 = quantize_deg(pos.lat, 90.0, "lat");
    m.lon_e7 = quantize_deg(pos.lon, 180.0, "lon");
    return m;
}

std::vector<std::uint8_t> encode_cam(const CamMessage& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kCamWireSize);
    put_u8(out, kCamMagic);
    put_u8(out, kWireVersion);
    put_be<std::uint32_t>(out, m.station_id);
    put_be<std::uint64_t>(out, m.timestamp_ms);
    put_be<std::int32_t>(out, m.lat_e7);
    put_be<std::int32_t>(out, m.lon_e7);
    put_be<std::uint16_t>(out, m.speed_cm_s);
    put_be<std::uint16_t>(out, m.heading_deci_deg);
    put_be<std::uint16_t>(out, m.length_deci_m);
    put_u8(out, static_cast<std::uint8_t>(m.drive_direction));
    return out;
}

CamMessage decode_cam(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.u8() != kCamMagic) throw CodecError("wrong magic byte");
    if (r.u8() != kWireVersion) throw CodecError("unsupported version");
    CamMessage m;
    m.station_id = r.be<std::uint32_t>();
    m.timestamp_ms = r.be<std::uint64_t>();
    m.lat_e7 = r.be<std::int32_t>();
    m.lon_e7 = r.be<std::int32_t>();
    m.speed_cm_s = r.be<std::uint16_t>();
    m.heading_deci_deg = r.be<std::uint16_t>();
    m.length_deci_m = r.be<std::uint16_t>();
    const std::uint8_t dir = r.u8();
    if (std::abs(m.lat_e7) > 900000000 || std::abs(m.lon_e7) > 1800000000)
        throw CodecError("field out of range: position");
    if (m.heading_deci_deg >= 3600) throw CodecError("field out of range: heading");
    if (m.length_deci_m == 0) throw CodecError("field out of range: length");
    if (dir > 1) throw CodecError("field out of range: drive_direction");
    m.drive_direction = static_cast<DriveDirection>(dir);
    return m;
}

std::vector<std::uint8_t> encode_denm(const DenmMessage& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kDenmWireSize);
    put_u8(out, kDenmMagic);
    put_u8(out, kWireVersion);
    put_be<std::uint32_t>(out, m.station_id);
    put_be<std::uint64_t>(out, m.timestamp_ms);
    put_u8(out, static_cast<std::uint8_t>(m.cause));
    put_be<std::int32_t>(out, m.lat_e7);
    put_be<std::int32_t>(out, m.lon_e7);
    return out;
}

DenmMessage decode_denm(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.u8() != kDenmMagic) throw CodecError("wrong magic byte");
    if (r.u8() != kWireVersion) throw CodecError("unsupported version");
    DenmMessage m;
    m.station_id = r.be<std::uint32_t>();
    m.timestamp_ms = r.be<std::uint64_t>();
    const std::uint8_t cause = r.u8();
    if (cause != static_cast<std::uint8_t>(DenmCause::longitudinal_collision_warning))
        throw CodecError("field out of range: cause");
    m.cause = DenmCause::longitudinal_collision_warning;
    m.lat_e7 = r.be<std::int32_t>();
    m.lon_e7 = r.be<std::int32_t>();
    if (std::abs(m.lat_e7) > 900000000 || std::abs(m.lon_e7) > 1800000000)
        throw CodecError("field out of range: position");
    return m;
}

bool cam_due(const CamMessage& last_sent, double last_send_time, const CamMessage& current,
             double now, const CamTriggerConfig& cfg) {
    const double elapsed = now - last_send_time;
    if (elapsed < cfg.min_interval - 1e-9) return false;
    if (elapsed >= cfg.max_interval - 1e-9) return true;

    const double dpos = geo_distance(last_sent.position(), current.position());
    const double dspeed = std::abs(current.speed() - last_sent.speed());
    double dheading = std::abs(current.heading() - last_sent.heading());
    if (dheading > 180.0) dheading = 360.0 - dheading;
    return dpos > cfg.pos_threshold || dspeed > cfg.speed_threshold ||
           dheading > cfg.heading_threshold;
}

void ChannelConfig::validate() const {
    if (loss_probability < 0.0 || loss_probability > 1.0)
        throw std::invalid_argument("channel loss_probability must be in [0,1]");
    if (!(range > 0.0)) throw std::invalid_argument("channel range must be > 0");
    if (latency_mean < 0.0 || latency_jitter < 0.0)
        throw std::invalid_argument("channel latency must be >= 0");
}

Channel::Channel(const ChannelConfig& cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

std::vector<Delivery> Channel::broadcast(std::span<const std::uint8_t> msg,
                                         const GeoPoint& sender_pos,
                                         std::span<const std::pair<std::uint32_t, GeoPoint>>
                                             receivers,
                                         double now, std::uint32_t sender_id) {
    std::vector<Delivery> out;
    const std::uint64_t seq = seq_++;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (const auto& [id, pos] : receivers) {
        if (geo_distance(sender_pos, pos) > cfg_.range) continue;
        const double loss_draw = uni(rng_);
        const double jitter_draw =
            cfg_.latency_jitter > 0.0 ? (2.0 * uni(rng_) - 1.0) * cfg_.latency_jitter : 0.0;
        if (loss_draw < cfg_.loss_probability) {
            ++dropped_;
            continue;
        }
        const double at = now + std::max(0.0, cfg_.latency_mean + jitter_draw);
        out.push_back({id, at});
        queue_.push_back({at, sender_id, seq, id, {msg.begin(), msg.end()}});
    }
    return out;
}

std::vector<Channel::Pending> Channel::collect_due(double now) {
    std::vector<Pending> due;
    auto split = std::stable_partition(queue_.begin(), queue_.end(),
                                       [&](const Pending& p) { return p.deliver_at > now; });
    due.assign(std::make_move_iterator(split), std::make_move_iterator(queue_.end()));
    queue_.erase(split, queue_.end());
    std::sort(due.begin(), due.end(), [](const Pending& a, const Pending& b) {
        if (a.deliver_at != b.deliver_at) return a.deliver_at < b.deliver_at;
        if (a.sender != b.sender) return a.sender < b.sender;
        return a.seq < b.seq;
    });
    return due;
}

}  // namespace rcas
