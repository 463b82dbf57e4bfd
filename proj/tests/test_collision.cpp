#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rcas/collision.hpp"

using namespace rcas;
using namespace testutil;

namespace {

KfState own_state(double s, double v, const Path& path = {0}) {
    KfState st;
    st.x << s, v, 0.0;
    st.path = path;
    return st;
}

CamMessage cam_at(const TrackMap& map, std::uint32_t id, double s, double v, double length,
                  double t, const Path& path = {0}) {
    const GeoPoint pos = map.track_to_geo({s, path, 0.0});
    return CamMessage::make(id, static_cast<std::uint64_t>(t * 1000), pos, v,
                            map.bearing_at({s, path, 0.0}), length);
}

}  // namespace

TEST_CASE("warning trigger condition") {
    RcasConfig cfg;  // t_r = 1, d_s = 0
    SUBCASE("measured reference row") {
        CHECK(check_warning(46.9, 13.83, 60.7, cfg));       // 60.73 >= 60.7
        CHECK_FALSE(check_warning(46.9, 13.83, 60.8, cfg)); // 60.73 < 60.8
    }
    SUBCASE("far neighbor") { CHECK_FALSE(check_warning(46.9, 13.83, 1e6, cfg)); }
    SUBCASE("inclusive boundary at all zeros") { CHECK(check_warning(0.0, 0.0, 0.0, cfg)); }
}

TEST_CASE("warning condition is monotone in its arguments") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    RcasConfig cfg;
    for (int i = 0; i < 500; ++i) {
        const double d_br = u(rng), v = u(rng) / 5.0, d_g = u(rng);
        cfg.t_r = u(rng) / 50.0;
        cfg.d_s = u(rng) / 10.0;
        const bool base = check_warning(d_br, v, d_g, cfg);
        if (base) {
            CHECK(check_warning(d_br + 1.0, v, d_g, cfg));
            CHECK(check_warning(d_br, v + 1.0, d_g, cfg));
        } else {
            CHECK_FALSE(check_warning(d_br, v, d_g + 1.0, cfg));
        }
    }
}

TEST_CASE("neighbor screening") {
    const TrackMap map = junction_map(20.0);
    const KfState own = own_state(100.0, 8.0, {0, 1});

    SUBCASE("tram ahead on the same segment is kept") {
        const auto nb = screen_neighbor(cam_at(map, 2, 160.7, 0.0, 15.0, 5.0), own, map, 500.0, 5.0);
        REQUIRE(nb.has_value());
        CHECK(nb->station_id == 2);
        CHECK(nb->gap_at_update == doctest::Approx(60.7).epsilon(1e-3));
        CHECK(nb->length == doctest::Approx(15.0));
    }
    SUBCASE("tram on a diverged sibling branch is not a conflict") {
        const KfState own_past = own_state(350.0, 8.0, {0, 1});  // past the switch on A
        const auto nb = screen_neighbor(cam_at(map, 2, 100.0, 0.0, 15.0, 5.0, {2}), own_past, map,
                                        500.0, 5.0);
        CHECK_FALSE(nb.has_value());
    }
    SUBCASE("an off-track road vehicle is ignored") {
        const GeoPoint off = map.frame().to_geo({40.0, 150.0});
        const CamMessage cam = CamMessage::make(9, 5000, off, 10.0, 0.0, 4.5);
        CHECK_FALSE(screen_neighbor(cam, own, map, 500.0, 5.0).has_value());
    }
    SUBCASE("a neighbor beyond the screening horizon is ignored") {
        const auto nb =
            screen_neighbor(cam_at(map, 2, 700.0, 0.0, 15.0, 5.0, {0, 1}), own, map, 300.0, 5.0);
        CHECK_FALSE(nb.has_value());
    }
}

TEST_CASE("gap to a screened neighbor") {
    const TrackMap map = straight_map(1000.0);
    const KfState own = own_state(100.0, 8.0);

    SUBCASE("front-to-rear convention subtracts the vehicle length") {
        const auto nb = screen_neighbor(cam_at(map, 2, 175.7, 0.0, 15.0, 5.0), own, map, 500.0, 5.0);
        REQUIRE(nb.has_value());
        const auto gap = gap_to_neighbor(own, *nb, map, 5.0);
        REQUIRE(gap.has_value());
        CHECK(gap->gap == doctest::Approx(60.7).epsilon(1e-3));
        CHECK_FALSE(gap->overlap);
    }
    SUBCASE("overlapping trams clamp to zero") {
        const auto nb = screen_neighbor(cam_at(map, 2, 110.0, 0.0, 15.0, 5.0), own, map, 500.0, 5.0);
        REQUIRE(nb.has_value());
        const auto gap = gap_to_neighbor(own, *nb, map, 5.0);
        REQUIRE(gap.has_value());
        CHECK(gap->gap == 0.0);
        CHECK(gap->overlap);
    }
    SUBCASE("stationary pair keeps a constant gap across ticks") {
        const auto nb = screen_neighbor(cam_at(map, 2, 200.0, 0.0, 15.0, 5.0), own, map, 500.0, 5.0);
        REQUIRE(nb.has_value());
        const double g1 = gap_to_neighbor(own, *nb, map, 5.0)->gap;
        const double g2 = gap_to_neighbor(own, *nb, map, 9.0)->gap;
        CHECK(g1 == doctest::Approx(g2));
    }
    SUBCASE("a receding neighbor's gap grows by constant-speed propagation") {
        const auto nb = screen_neighbor(cam_at(map, 2, 200.0, 5.0, 15.0, 5.0), own, map, 500.0, 5.0);
        REQUIRE(nb.has_value());
        const double g1 = gap_to_neighbor(own, *nb, map, 5.0)->gap;
        const double g2 = gap_to_neighbor(own, *nb, map, 7.0)->gap;
        CHECK(g2 - g1 == doctest::Approx(10.0));
    }
}

TEST_CASE("conflict prediction against the braking trajectory") {
    const BrakingParams params;
    RcasConfig cfg;
    const auto traj = simulate_braking(10.0, [](double) { return 0.0; }, params);

    SUBCASE("stationary neighbor closer than the braking distance") {
        const auto t = predict_conflict(traj, traj.total_distance * 0.6, 0.0, cfg);
        REQUIRE(t.has_value());
        CHECK(*t > 0.0);
        CHECK(*t < traj.total_time);
    }
    SUBCASE("receding neighbor faster than us never conflicts") {
        CHECK_FALSE(predict_conflict(traj, 5.0, 15.0, cfg).has_value());
    }
    SUBCASE("gap exactly equal to the stopping distance touches at the end") {
        const auto t = predict_conflict(traj, traj.total_distance, 0.0, cfg);
        REQUIRE(t.has_value());
        CHECK(*t >= traj.total_time - cfg.step - 1e-9);
    }
    SUBCASE("far neighbor is clear") {
        CHECK_FALSE(predict_conflict(traj, traj.total_distance + 1.0, 0.0, cfg).has_value());
    }
}

TEST_CASE("trigger condition and trajectory walk agree for stationary leaders") {
    // with t_r = 0 and d_s = 0 a conflict exists iff d_br >= gap
    const BrakingParams params;
    RcasConfig cfg;
    cfg.t_r = 0.0;
    cfg.d_s = 0.0;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> uv(1.0, 18.0);
    for (int i = 0; i < 100; ++i) {
        const double v = uv(rng);
        const auto traj = simulate_braking(v, [](double) { return 0.0; }, params);
        std::uniform_real_distribution<double> ug(0.5, 2.0 * traj.total_distance);
        const double gap = ug(rng);
        const bool warn = check_warning(traj.total_distance, v, gap, cfg);
        const bool conflict = predict_conflict(traj, gap, 0.0, cfg).has_value();
        REQUIRE(warn == conflict);
    }
}

TEST_CASE("rcas agent warning cycle") {
    const TrackMap map = straight_map(1500.0);
    const BrakingParams params;
    RcasConfig cfg;
    RcasAgent agent(1, map, params, cfg);
    const GeoPoint own_geo = map.track_to_geo({100.0, {0}, 0.0});

    SUBCASE("no neighbors, no output") {
        const auto tick = agent.tick(own_state(100.0, 8.0), own_geo, 1.0);
        CHECK_FALSE(tick.warning.has_value());
        CHECK_FALSE(tick.denm.has_value());
    }

    SUBCASE("approaching a stationary leader raises exactly one warning") {
        double t = 1.0;
        double s = 100.0;
        const double v = 8.0;
        int warnings = 0;
        double warn_gap = -1.0;
        agent.ingest_cam(cam_at(map, 2, 400.0, 0.0, 15.0, t), own_state(s, v), t);
        for (int k = 0; k < 400; ++k) {
            t += 0.1;
            s += v * 0.1;
            if (k % 10 == 0) agent.ingest_cam(cam_at(map, 2, 400.0, 0.0, 15.0, t), own_state(s, v), t);
            const auto tick = agent.tick(own_state(s, v), map.track_to_geo({s, {0}, 0.0}), t);
            if (tick.warning) {
                ++warnings;
                warn_gap = tick.warning->est_gap;
                CHECK(tick.denm.has_value());  // DENM accompanies the warning
                CHECK(tick.warning->target_station == 2);
                // est_gap <= d_br + d_s + v*t_r at the trigger
                CHECK(tick.warning->est_gap <=
                      tick.warning->braking_distance + cfg.d_s +
                          tick.warning->own_speed * cfg.t_r + 1e-9);
            }
            if (s > 375.0) break;
        }
        CHECK(warnings == 1);  // latched after the rising edge
        const double expect = agent.table().distance(v) + v * cfg.t_r;
        CHECK(warn_gap == doctest::Approx(expect).epsilon(0.05));
    }

    SUBCASE("latch releases after the condition clears for the debounce time") {
        double t = 1.0;
        agent.ingest_cam(cam_at(map, 2, 120.0, 0.0, 15.0, t), own_state(100.0, 8.0), t);
        auto tick = agent.tick(own_state(100.0, 8.0), own_geo, t);
        REQUIRE(tick.warning.has_value());
        // clear condition: own stopped far behind, keep the neighbor fresh
        for (int k = 1; k <= 15; ++k) {
            t += 0.1;
            agent.ingest_cam(cam_at(map, 2, 400.0, 0.0, 15.0, t), own_state(100.0, 0.0), t);
            tick = agent.tick(own_state(100.0, 0.0), own_geo, t);
            CHECK_FALSE(tick.warning.has_value());
        }
        CHECK_FALSE(agent.latched());
        // condition true again -> a new rising edge
        t += 0.1;
        agent.ingest_cam(cam_at(map, 2, 120.0, 0.0, 15.0, t), own_state(100.0, 8.0), t);
        tick = agent.tick(own_state(100.0, 8.0), own_geo, t);
        CHECK(tick.warning.has_value());
    }

    SUBCASE("two violating neighbors: the nearest wins") {
        const double t = 1.0;
        agent.ingest_cam(cam_at(map, 2, 140.0, 0.0, 15.0, t), own_state(100.0, 8.0), t);
        agent.ingest_cam(cam_at(map, 3, 125.0, 0.0, 15.0, t), own_state(100.0, 8.0), t);
        const auto tick = agent.tick(own_state(100.0, 8.0), own_geo, t);
        REQUIRE(tick.warning.has_value());
        CHECK(tick.warning->target_station == 3);
    }

    SUBCASE("stale neighbors are evicted") {
        agent.ingest_cam(cam_at(map, 2, 120.0, 0.0, 15.0, 1.0), own_state(100.0, 8.0), 1.0);
        CHECK(agent.neighbors().size() == 1);
        const auto tick = agent.tick(own_state(100.0, 8.0), own_geo, 3.5);  // age 2.5 > 2 s
        CHECK(agent.neighbors().empty());
        CHECK_FALSE(tick.warning.has_value());
    }
}

TEST_CASE("rcas config validation") {
    RcasConfig cfg;
    cfg.t_r = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.t_r = 1.0;
    cfg.step = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
