#include "rcas/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace rcas {

namespace {

double get_or(const nlohmann::json& j, const char* key, double def) {
    return j.contains(key) ? j.at(key).get<double>() : def;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (map_file.empty()) throw ScenarioError("scenario: missing map file");
    if (trams.empty()) throw ScenarioError("scenario: no trams");
    if (!(dt > 0.0) || !(duration > 0.0))
        throw ScenarioError("scenario: dt and duration must be > 0");
    auto divides = [&](double period) {
        const double k = period / dt;
        return std::abs(k - std::round(k)) < 1e-9;
    };
    if (!divides(sensors.gnss_period) || !divides(sensors.imu_period) ||
        !divides(sensors.tacho_period))
        throw ScenarioError("scenario: dt must divide the sensor periods");
    std::vector<std::uint32_t> ids;
    for (const auto& tr : trams) {
        ids.push_back(tr.id);
        if (tr.initial_s < 0.0) throw ScenarioError("scenario: initial_s must be >= 0");
        if (tr.initial_v < 0.0) throw ScenarioError("scenario: initial_v must be >= 0");
        if (!(tr.length > 0.0)) throw ScenarioError("scenario: tram length must be > 0");
        tr.params.validate();
        if (tr.driver.reaction_time < 0.0)
            throw ScenarioError("scenario: reaction_time must be >= 0");
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ScenarioError("scenario: duplicate tram ids");
    channel.validate();
    rcas.validate();
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text,
                                              const std::filesystem::path& base_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    }
    ScenarioConfig cfg;
    try {
        const auto rel = std::filesystem::path(j.at("map").get<std::string>());
        cfg.map_file = (rel.is_absolute() || base_dir.empty()) ? rel.string()
                                                               : (base_dir / rel).string();
        cfg.dt = get_or(j, "dt", cfg.dt);
        cfg.duration = get_or(j, "duration", cfg.duration);
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();

        for (const auto& jt : j.at("trams")) {
            TramConfig tr;
            tr.id = jt.at("id").get<std::uint32_t>();
            tr.initial_s = get_or(jt, "initial_s", 0.0);
            tr.initial_v = get_or(jt, "initial_v", 0.0);
            tr.length = get_or(jt, "length", 15.0);
            if (jt.contains("path"))
                for (const auto& js : jt.at("path")) tr.path.push_back(js.get<SegmentId>());
            if (jt.contains("params_file")) {
                const auto pf = std::filesystem::path(jt.at("params_file").get<std::string>());
                tr.params = BrakingParams::load(
                    (pf.is_absolute() || base_dir.empty()) ? pf.string()
                                                           : (base_dir / pf).string());
            } else if (jt.contains("params")) {
                tr.params = BrakingParams::from_json_text(jt.at("params").dump());
            }
            if (jt.contains("driver")) {
                const auto& jd = jt.at("driver");
                tr.driver.reaction_time = get_or(jd, "reaction_time", 1.0);
                const std::string behavior = jd.value("behavior", "hold");
                if (behavior == "stationary")
                    tr.driver.behavior = DriverBehavior::stationary;
                else if (behavior == "hold")
                    tr.driver.behavior = DriverBehavior::hold;
                else if (behavior == "profile")
                    tr.driver.behavior = DriverBehavior::profile;
                else
                    throw ScenarioError("scenario: unknown driver behavior " + behavior);
                tr.driver.target_speed = get_or(jd, "target_speed", tr.initial_v);
                if (jd.contains("profile"))
                    for (const auto& jp : jd.at("profile"))
                        tr.driver.profile.emplace_back(jp.at(0).get<double>(),
                                                       jp.at(1).get<double>());
            } else {
                tr.driver.behavior =
                    tr.initial_v > 0.0 ? DriverBehavior::hold : DriverBehavior::stationary;
                tr.driver.target_speed = tr.initial_v;
            }
            cfg.trams.push_back(std::move(tr));
        }

        if (j.contains("sensors")) {
            const auto& js = j.at("sensors");
            cfg.sensors.gnss_pos_std = get_or(js, "gnss_pos_std", cfg.sensors.gnss_pos_std);
            cfg.sensors.gnss_speed_std = get_or(js, "gnss_speed_std", cfg.sensors.gnss_speed_std);
            cfg.sensors.tacho_std = get_or(js, "tacho_std", cfg.sensors.tacho_std);
            cfg.sensors.imu_std = get_or(js, "imu_std", cfg.sensors.imu_std);
            cfg.sensors.gnss_period = get_or(js, "gnss_period", cfg.sensors.gnss_period);
            cfg.sensors.imu_period = get_or(js, "imu_period", cfg.sensors.imu_period);
            cfg.sensors.tacho_period = get_or(js, "tacho_period", cfg.sensors.tacho_period);
            if (js.contains("slip_events")) {
                for (const auto& je : js.at("slip_events")) {
                    SlipEvent ev;
                    ev.t_start = je.at("t_start").get<double>();
                    ev.duration = je.at("duration").get<double>();
                    ev.speed_offset = je.at("speed_offset").get<double>();
                    if (je.contains("tram")) ev.tram = je.at("tram").get<std::uint32_t>();
                    cfg.sensors.slip_events.push_back(ev);
                }
            }
        }
        if (j.contains("channel")) {
            const auto& jc = j.at("channel");
            cfg.channel.latency_mean = get_or(jc, "latency_mean", cfg.channel.latency_mean);
            cfg.channel.latency_jitter = get_or(jc, "latency_jitter", cfg.channel.latency_jitter);
            cfg.channel.loss_probability =
                get_or(jc, "loss_probability", cfg.channel.loss_probability);
            cfg.channel.range = get_or(jc, "range", cfg.channel.range);
            if (jc.contains("seed")) cfg.channel.seed = jc.at("seed").get<std::uint64_t>();
        }
        if (j.contains("rcas")) {
            const auto& jr = j.at("rcas");
            cfg.rcas.t_r = get_or(jr, "t_r", cfg.rcas.t_r);
            cfg.rcas.d_s = get_or(jr, "d_s", cfg.rcas.d_s);
            cfg.rcas.horizon = get_or(jr, "horizon", cfg.rcas.horizon);
            cfg.rcas.step = get_or(jr, "step", cfg.rcas.step);
            cfg.rcas.stale_after = get_or(jr, "stale_after", cfg.rcas.stale_after);
            cfg.rcas.debounce = get_or(jr, "debounce", cfg.rcas.debounce);
            cfg.rcas.screen_extra = get_or(jr, "screen_extra", cfg.rcas.screen_extra);
        }
        if (j.contains("kf")) {
            const auto& jk = j.at("kf");
            cfg.kf.dt = get_or(jk, "dt", cfg.kf.dt);
            cfg.kf.q = get_or(jk, "q", cfg.kf.q);
            cfg.kf.sigma_pos = get_or(jk, "sigma_pos", cfg.kf.sigma_pos);
            cfg.kf.sigma_speed = get_or(jk, "sigma_speed", cfg.kf.sigma_speed);
            cfg.kf.sigma_accel = get_or(jk, "sigma_accel", cfg.kf.sigma_accel);
            cfg.kf.tacho_factor = get_or(jk, "tacho_factor", cfg.kf.tacho_factor);
            cfg.kf.gate_threshold = get_or(jk, "gate_threshold", cfg.kf.gate_threshold);
            cfg.kf.reset_window = static_cast<int>(get_or(jk, "reset_window", 5));
        }
        if (j.contains("integration")) {
            const auto& ji = j.at("integration");
            cfg.integ.dt_int = get_or(ji, "dt_int", cfg.integ.dt_int);
            cfg.integ.t_max = get_or(ji, "t_max", cfg.integ.t_max);
            cfg.integ.v_standstill = get_or(ji, "v_standstill", cfg.integ.v_standstill);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    }
    cfg.kf.dt = cfg.dt;
    cfg.validate();
    return cfg;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ScenarioError("cannot open scenario file: " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str(), file.parent_path());
}

MeasurementSet synthesize_sensors(const DynState& truth, double truth_accel,
                                  const GeoPoint& truth_geo, std::uint32_t tram_id,
                                  const SensorConfig& cfg, double t, double dt,
                                  std::mt19937_64& rng, const LocalFrame& frame) {
    MeasurementSet m;
    m.t = t;
    const auto on_grid = [&](double period) {
        const double k = t / period;
        return std::abs(k - std::round(k)) < dt * 1e-6 / period + 1e-9;
    };
    std::normal_distribution<double> gauss(0.0, 1.0);

    if (on_grid(cfg.gnss_period)) {
        LocalXY p = frame.to_local(truth_geo);
        p.x += gauss(rng) * cfg.gnss_pos_std;
        p.y += gauss(rng) * cfg.gnss_pos_std;
        m.gnss_pos = frame.to_geo(p);
        m.gnss_speed = std::max(0.0, truth.v_t + gauss(rng) * cfg.gnss_speed_std);
    }
    if (on_grid(cfg.tacho_period)) {
        double v = truth.v_t;
        for (const auto& ev : cfg.slip_events) {
            if (ev.tram && *ev.tram != tram_id) continue;
            if (t >= ev.t_start && t < ev.t_start + ev.duration) v += ev.speed_offset;
        }
        // a wheel-pulse tachograph reads exactly zero at standstill; while
        // turning, the reading is noisy but never the exact zero
        m.tacho_speed = v <= 1e-9 ? 0.0 : std::max(0.05, v + gauss(rng) * cfg.tacho_std);
    }
    if (on_grid(cfg.imu_period)) m.imu_accel = truth_accel + gauss(rng) * cfg.imu_std;
    return m;
}

void DriverModel::notify_warning(double now) {
    if (!warning_time_) warning_time_ = now;
}

double DriverModel::target_speed(double now) const {
    if (cfg_.behavior == DriverBehavior::stationary) return 0.0;
    if (cfg_.behavior == DriverBehavior::hold) return cfg_.target_speed;
    double v = cfg_.profile.empty() ? cfg_.target_speed : cfg_.profile.front().second;
    for (const auto& [tp, tv] : cfg_.profile)
        if (now >= tp) v = tv;
    return v;
}

bool DriverModel::braking_commanded(double now) const {
    return warning_time_ && now >= *warning_time_ + cfg_.reaction_time - 1e-9;
}

int DriverModel::notch(double now, double current_speed, bool stopped) const {
    if (braking_commanded(now)) return stopped ? 0 : -7;
    if (cfg_.behavior == DriverBehavior::stationary) return 0;
    const double target = target_speed(now);
    if (target <= 0.0) return current_speed > 0.2 ? -1 : 0;
    // bang-bang cruise around the target; notch 1 stays below the adhesion
    // peak of the traction side, higher notches would spin the wheels
    if (current_speed < target) return 1;
    if (current_speed > target + 0.5) return -1;
    return 0;
}

namespace {

struct TramRuntime {
    TramConfig cfg;
    DynState truth;
    Path truth_path;
    double truth_a = 0.0;
    bool stopped = false;
    int prev_notch = 0;
    std::mt19937_64 sensor_rng;
    std::unique_ptr<Estimator> estimator;
    std::unique_ptr<RcasAgent> agent;
    std::unique_ptr<DriverModel> driver;
    std::optional<CamMessage> last_cam;
    double last_cam_time = -1e9;
};

TrackPosition truth_position(const TramRuntime& tr) {
    return {tr.truth.s, tr.truth_path, 0.0};
}

}  // namespace

SimResult run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    TrackMap map = TrackMap::load(cfg.map_file);

    ChannelConfig chan_cfg = cfg.channel;
    if (chan_cfg.seed == 0) chan_cfg.seed = cfg.seed * 0x9E3779B97F4A7C15ull + 0xC0FFEEull;
    Channel channel(chan_cfg);

    const SegmentId default_seg = map.segment_ids().front();

    std::vector<TramRuntime> trams;
    for (const auto& tc : cfg.trams) {
        TramRuntime tr;
        tr.cfg = tc;
        tr.truth_path = tc.path;
        if (tr.truth_path.empty()) tr.truth_path = {default_seg};
        tr.truth_path = map.extend_path(tr.truth_path, tc.initial_s + 500.0).path;
        if (tc.initial_s > map.path_length(tr.truth_path))
            throw ScenarioError("scenario: initial_s beyond path length for tram " +
                                std::to_string(tc.id));
        tr.truth.s = tc.initial_s;
        tr.truth.v_t = tc.initial_v;
        tr.truth.omega_wh = tc.initial_v / tc.params.r;
        tr.truth.T_mot = 0.0;
        tr.stopped = tc.driver.behavior == DriverBehavior::stationary && tc.initial_v <= 0.0;
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xFFFFFFFFull),
                          static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(tc.id), 0x5E5E5E5Eu};
        tr.sensor_rng.seed(seq);
        tr.estimator = std::make_unique<Estimator>(map, cfg.kf, tr.truth_path);
        tr.agent = std::make_unique<RcasAgent>(tc.id, map, tc.params, cfg.rcas, cfg.integ);
        tr.driver = std::make_unique<DriverModel>(tc.driver);
        trams.push_back(std::move(tr));
    }
    std::sort(trams.begin(), trams.end(),
              [](const TramRuntime& a, const TramRuntime& b) { return a.cfg.id < b.cfg.id; });

    SimResult result;
    result.seed = cfg.seed;
    for (const auto& tr : trams) result.tram_ids.push_back(tr.cfg.id);

    std::uint64_t msg_counter = 0;
    const int n_sub = std::max(1, static_cast<int>(std::round(cfg.dt / cfg.integ.dt_int)));
    const double h = cfg.dt / n_sub;
    const auto n_ticks = static_cast<long>(std::round(cfg.duration / cfg.dt));

    auto true_gap_ahead = [&](const TramRuntime& own) -> std::optional<double> {
        std::optional<double> best;
        for (const auto& other : trams) {
            if (other.cfg.id == own.cfg.id) continue;
            const auto raw = map.path_gap(truth_position(own), truth_position(other));
            if (!raw) continue;
            const double g = *raw - other.cfg.length;
            if (!best || g < *best) best = g;
        }
        return best;
    };

    for (long k = 1; k <= n_ticks; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;

        // 1. drivers decide, plants advance
        for (auto& tr : trams) {
            const int notch = tr.driver->notch(t - cfg.dt, tr.truth.v_t, tr.stopped);
            if (notch < 0 && tr.prev_notch >= 0)
                tr.truth.T_mot = tr.cfg.params.K_t * notch;  // brakes apply developed
            tr.prev_notch = notch;

            const double v_before = tr.truth.v_t;
            if (!tr.stopped) {
                const double s_before = tr.truth.s;
                double v_quad = 0.0;
                for (int i = 0; i < n_sub; ++i) {
                    const double theta = map.slope_at(truth_position(tr));
                    tr.truth = plant_step(tr.truth, notch, theta, h, tr.cfg.params,
                                          cfg.integ.mu_clamp, nullptr, &v_quad);
                    if (!std::isfinite(tr.truth.v_t) || !std::isfinite(tr.truth.s))
                        throw SimError("numerical failure in plant of tram " +
                                       std::to_string(tr.cfg.id) + " at t=" + std::to_string(t));
                    if (tr.truth.v_t <= 0.0) {
                        tr.truth.v_t = 0.0;
                        tr.truth.omega_wh = 0.0;
                    }
                }
                result.max_kin_err = std::max(
                    result.max_kin_err, std::abs(tr.truth.s - s_before - v_quad) / cfg.dt);
                if (tr.driver->braking_commanded(t - cfg.dt) &&
                    tr.truth.v_t <= cfg.integ.v_standstill) {
                    tr.truth.v_t = 0.0;
                    tr.truth.omega_wh = 0.0;
                    tr.truth.T_mot = 0.0;
                    tr.stopped = true;
                }
            }
            tr.truth.t = t;
            tr.truth_a = (tr.truth.v_t - v_before) / cfg.dt;
            tr.truth_path = map.extend_path(tr.truth_path, tr.truth.s + 300.0).path;
        }

        // 2. sensors and estimation
        std::map<std::uint32_t, TramTickRow> rows;
        for (auto& tr : trams) {
            GeoPoint geo;
            try {
                geo = map.track_to_geo(truth_position(tr));
            } catch (const MapError& e) {
                throw SimError("tram " + std::to_string(tr.cfg.id) + " left the map: " + e.what());
            }
            MeasurementSet m = synthesize_sensors(tr.truth, tr.truth_a, geo, tr.cfg.id,
                                                  cfg.sensors, t, cfg.dt, tr.sensor_rng,
                                                  map.frame());
            tr.estimator->step(m);

            TramTickRow row;
            row.t = t;
            row.truth_s = tr.truth.s;
            row.truth_v = tr.truth.v_t;
            row.truth_a = tr.truth_a;
            row.has_gnss = m.gnss_pos.has_value();
            row.has_tacho = m.tacho_speed.has_value();
            row.has_imu = m.imu_accel.has_value();
            if (tr.estimator->initialized()) {
                const auto& st = tr.estimator->state();
                row.est_valid = true;
                row.est_s = st.x(0);
                row.est_v = st.x(1);
                row.est_a = st.x(2);
                result.estimator_rows[tr.cfg.id].push_back(kf_csv_row(st));
            }
            row.notch = tr.prev_notch;
            row.true_gap = true_gap_ahead(tr);
            rows[tr.cfg.id] = row;
        }

        // 3. deliver due messages
        for (const auto& pending : channel.collect_due(t)) {
            for (auto& tr : trams) {
                if (tr.cfg.id != pending.receiver) continue;
                rows[tr.cfg.id].msgs_received++;
                if (!pending.bytes.empty() && pending.bytes[0] == kCamMagic &&
                    tr.estimator->initialized()) {
                    const CamMessage cam = decode_cam(pending.bytes);
                    tr.agent->ingest_cam(cam, tr.estimator->state(), t);
                }
            }
        }

        // 4. CAM generation
        for (auto& tr : trams) {
            if (!tr.estimator->initialized()) continue;
            const auto& st = tr.estimator->state();
            TrackPosition est_pos = st.track_position();
            est_pos.s = std::min(est_pos.s, map.path_length(est_pos.path));
            const GeoPoint est_geo = map.track_to_geo(est_pos);
            const CamMessage cam = CamMessage::make(
                tr.cfg.id, static_cast<std::uint64_t>(std::llround(t * 1000.0)), est_geo,
                std::max(0.0, st.x(1)), map.bearing_at(est_pos), tr.cfg.length);
            if (!tr.last_cam || cam_due(*tr.last_cam, tr.last_cam_time, cam, t)) {
                std::vector<std::pair<std::uint32_t, GeoPoint>> receivers;
                for (const auto& other : trams)
                    if (other.cfg.id != tr.cfg.id)
                        receivers.emplace_back(other.cfg.id,
                                               map.track_to_geo(truth_position(other)));
                const GeoPoint sender_geo = map.track_to_geo(truth_position(tr));
                const auto bytes = encode_cam(cam);
                const auto delivered =
                    channel.broadcast(bytes, sender_geo, receivers, t, tr.cfg.id);
                const std::uint64_t msg_id = msg_counter++;
                for (const auto& [rid, rgeo] : receivers) {
                    MessageRecord rec;
                    rec.msg_id = msg_id;
                    rec.kind = "CAM";
                    rec.sender = tr.cfg.id;
                    rec.t_sent = t;
                    rec.receiver = rid;
                    rec.t_delivered = std::numeric_limits<double>::quiet_NaN();
                    if (geo_distance(sender_geo, rgeo) > chan_cfg.range) {
                        rec.outcome = "out-of-range";
                    } else {
                        auto it = std::find_if(delivered.begin(), delivered.end(),
                                               [&](const Delivery& d) { return d.receiver == rid; });
                        if (it != delivered.end()) {
                            rec.outcome = "delivered";
                            rec.t_delivered = it->time;
                        } else {
                            rec.outcome = "dropped";
                        }
                    }
                    result.messages.push_back(rec);
                }
                tr.last_cam = cam;
                tr.last_cam_time = t;
                rows[tr.cfg.id].cam_sent++;
            }
        }

        // 5. collision evaluation + DENM
        for (auto& tr : trams) {
            if (!tr.estimator->initialized()) continue;
            const auto& st = tr.estimator->state();
            TrackPosition est_pos = st.track_position();
            est_pos.s = std::min(est_pos.s, map.path_length(est_pos.path));
            const GeoPoint est_geo = map.track_to_geo(est_pos);
            const auto tick = tr.agent->tick(st, est_geo, t);
            if (tick.warning) {
                rows[tr.cfg.id].warned = true;
                result.warnings[tr.cfg.id].push_back({t, tick.warning->target_station,
                                                      tick.warning->est_gap,
                                                      tick.warning->braking_distance,
                                                      tick.warning->own_speed});
                tr.driver->notify_warning(t);
                if (tick.denm) {
                    std::vector<std::pair<std::uint32_t, GeoPoint>> receivers;
                    for (const auto& other : trams)
                        if (other.cfg.id != tr.cfg.id)
                            receivers.emplace_back(other.cfg.id,
                                                   map.track_to_geo(truth_position(other)));
                    const GeoPoint sender_geo = map.track_to_geo(truth_position(tr));
                    const auto bytes = encode_denm(*tick.denm);
                    const auto delivered =
                        channel.broadcast(bytes, sender_geo, receivers, t, tr.cfg.id);
                    const std::uint64_t msg_id = msg_counter++;
                    for (const auto& [rid, rgeo] : receivers) {
                        MessageRecord rec;
                        rec.msg_id = msg_id;
                        rec.kind = "DENM";
                        rec.sender = tr.cfg.id;
                        rec.t_sent = t;
                        rec.receiver = rid;
                        rec.t_delivered = std::numeric_limits<double>::quiet_NaN();
                        if (geo_distance(sender_geo, rgeo) > chan_cfg.range) {
                            rec.outcome = "out-of-range";
                        } else {
                            auto it = std::find_if(
                                delivered.begin(), delivered.end(),
                                [&](const Delivery& d) { return d.receiver == rid; });
                            if (it != delivered.end()) {
                                rec.outcome = "delivered";
                                rec.t_delivered = it->time;
                            } else {
                                rec.outcome = "dropped";
                            }
                        }
                        result.messages.push_back(rec);
                    }
                }
            }
        }

        for (auto& tr : trams) result.rows[tr.cfg.id].push_back(rows[tr.cfg.id]);
    }

    // summary
    for (const auto& tr : trams) {
        TramSummary ts;
        ts.id = tr.cfg.id;
        switch (tr.cfg.driver.behavior) {
            case DriverBehavior::stationary: ts.v_appr = 0.0; break;
            case DriverBehavior::hold: ts.v_appr = tr.cfg.driver.target_speed; break;
            case DriverBehavior::profile: {
                double vmax = 0.0;
                for (const auto& [tp, tv] : tr.cfg.driver.profile) vmax = std::max(vmax, tv);
                ts.v_appr = vmax;
                break;
            }
        }
        ts.t_r_actual = tr.cfg.driver.reaction_time;
        if (auto it = result.warnings.find(tr.cfg.id); it != result.warnings.end()) {
            const auto& events = it->second;
            ts.warning_count = static_cast<int>(events.size());
            if (!events.empty()) {
                ts.d_w = events.front().gap;
                ts.first_warning_t = events.front().t;
            }
        }
        const auto& rws = result.rows[tr.cfg.id];
        for (const auto& row : rws) {
            if (row.notch == -7) {
                ts.first_brake_t = row.t;
                break;
            }
        }
        if (!rws.empty()) ts.final_gap = rws.back().true_gap;
        result.summary.push_back(ts);
    }
    return result;
}

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

std::map<std::string, std::string> SimResult::render() const {
    std::map<std::string, std::string> files;

    for (const auto id : tram_ids) {
        std::ostringstream out;
        out << "t,truth_s,truth_v,truth_a,est_s,est_v,est_a,gnss,tacho,imu,sent,recv,warn,notch,"
               "true_gap\n";
        static const std::vector<WarningEvent> kNoEvents;
        const auto& rws = rows.at(id);
        const auto wit = warnings.find(id);
        const auto& events = (wit != warnings.end()) ? wit->second : kNoEvents;
        auto ev = events.begin();
        const auto ev_end = events.end();
        for (const auto& row : rws) {
            out << fmt(row.t, "%.3f") << ',' << fmt(row.truth_s) << ',' << fmt(row.truth_v) << ','
                << fmt(row.truth_a);
            if (row.est_valid)
                out << ',' << fmt(row.est_s) << ',' << fmt(row.est_v) << ',' << fmt(row.est_a);
            else
                out << ",,,";
            out << ',' << (row.has_gnss ? 1 : 0) << ',' << (row.has_tacho ? 1 : 0) << ','
                << (row.has_imu ? 1 : 0) << ',' << row.cam_sent << ',' << row.msgs_received << ','
                << (row.warned ? 1 : 0) << ',' << row.notch;
            if (row.true_gap)
                out << ',' << fmt(*row.true_gap);
            else
                out << ',';
            out << '\n';
            while (ev != ev_end && ev->t <= row.t + 1e-9) {
                out << fmt(ev->t, "%.3f") << ",WARN," << ev->target << ',' << fmt(ev->gap) << ','
                    << fmt(ev->d_br) << ',' << fmt(ev->v) << '\n';
                ++ev;
            }
        }
        files["tram" + std::to_string(id) + ".csv"] = out.str();
    }

    for (const auto& [id, lines] : estimator_rows) {
        std::ostringstream out;
        out << kf_csv_header() << '\n';
        for (const auto& line : lines) out << line << '\n';
        files["tram" + std::to_string(id) + "_estimator.csv"] = out.str();
    }

    {
        std::ostringstream out;
        out << "msg_id,kind,sender,t_sent,receiver,outcome,t_delivered\n";
        for (const auto& rec : messages) {
            out << rec.msg_id << ',' << rec.kind << ',' << rec.sender << ','
                << fmt(rec.t_sent, "%.3f") << ',' << rec.receiver << ',' << rec.outcome << ',';
            if (std::isfinite(rec.t_delivered)) out << fmt(rec.t_delivered, "%.6f");
            out << '\n';
        }
        files["messages.csv"] = out.str();
    }

    {
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["trams"] = nlohmann::ordered_json::array();
        for (const auto& ts : summary) {
            nlohmann::ordered_json jt;
            jt["id"] = ts.id;
            jt["v_appr"] = ts.v_appr;
            jt["d_w"] = ts.d_w ? nlohmann::ordered_json(*ts.d_w) : nlohmann::ordered_json(nullptr);
            jt["t_r_actual"] = ts.t_r_actual;
            jt["final_gap"] =
                ts.final_gap ? nlohmann::ordered_json(*ts.final_gap) : nlohmann::ordered_json(nullptr);
            jt["warnings"] = ts.warning_count;
            jt["first_warning_t"] = ts.first_warning_t
                                        ? nlohmann::ordered_json(*ts.first_warning_t)
                                        : nlohmann::ordered_json(nullptr);
            jt["first_brake_t"] = ts.first_brake_t ? nlohmann::ordered_json(*ts.first_brake_t)
                                                   : nlohmann::ordered_json(nullptr);
            j["trams"].push_back(jt);
        }
        files["summary.json"] = j.dump(2) + "\n";
    }
    return files;
}

void write_outputs(const SimResult& result, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    for (const auto& [name, content] : result.render()) {
        std::ofstream out(out_dir / name, std::ios::binary);
        if (!out) throw SimError("cannot write output file: " + (out_dir / name).string());
        out << content;
    }
}

}  // namespace rcas
