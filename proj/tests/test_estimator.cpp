#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rcas/estimator.hpp"

using namespace rcas;
using namespace testutil;

namespace {

KfState make_state(double s, double v, double a, const Path& path = {0}) {
    KfState st;
    st.x << s, v, a;
    st.P = Eigen::Matrix3d::Identity();
    st.path = path;
    return st;
}

bool symmetric_psd(const Eigen::Matrix3d& P, double tol = 1e-9) {
    if (((P - P.transpose()).cwiseAbs().maxCoeff()) > tol) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(P);
    return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace

TEST_CASE("prediction propagates the constant-acceleration model") {
    KfParams params;

    SUBCASE("constant velocity") {
        const KfState out = kf_predict(make_state(0, 10, 0), params);
        CHECK(out.x(0) == doctest::Approx(1.0));
        CHECK(out.x(1) == doctest::Approx(10.0));
        CHECK(out.x(2) == doctest::Approx(0.0));
    }
    SUBCASE("pure acceleration") {
        const KfState out = kf_predict(make_state(0, 0, 2), params);
        CHECK(out.x(0) == doctest::Approx(0.01));
        CHECK(out.x(1) == doctest::Approx(0.2));
        CHECK(out.x(2) == doctest::Approx(2.0));
    }
    SUBCASE("zero covariance turns into the process noise") {
        KfState st = make_state(0, 10, 0);
        st.P = Eigen::Matrix3d::Zero();
        const KfState out = kf_predict(st, params);
        CHECK(out.P(0, 0) == doctest::Approx(5e-7).epsilon(1e-9));  // dt^5/20
        CHECK(out.P(1, 1) == doctest::Approx(std::pow(0.1, 3) / 3.0));
        CHECK(out.P(2, 2) == doctest::Approx(0.1));
        CHECK(out.P(0, 1) == doctest::Approx(std::pow(0.1, 4) / 8.0));
    }
}

TEST_CASE("update with the full measurement vector") {
    const TrackMap map = straight_map(1000.0);
    KfParams params;
    KfState pred = make_state(0, 10, 0);

    MeasurementSet m;
    m.gnss_pos = map.track_to_geo({1.0, {0}, 0.0});  // projects to s = 1
    m.gnss_speed = 10.0;
    m.imu_accel = 0.0;

    const KfState out = kf_update(pred, m, map, params);
    // hand-computed gain with H = I, P = I, R = diag(25, 0.25, 0.1):
    // K = diag(1/26, 1/1.25, 1/1.1), innovation = [1, 0, 0]
    CHECK(out.x(0) == doctest::Approx(1.0 / 26.0).epsilon(1e-9));
    CHECK(out.x(1) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(out.x(2) == doctest::Approx(0.0));
    CHECK(symmetric_psd(out.P));
    CHECK(out.P.trace() < pred.P.trace());
}

TEST_CASE("zero innovation leaves the mean and shrinks the covariance") {
    const TrackMap map = straight_map(1000.0);
    KfParams params;
    KfState pred = make_state(500, 8, 0.2);

    MeasurementSet m;
    m.gnss_pos = map.track_to_geo({500.0, {0}, 0.0});
    m.gnss_speed = 8.0;
    m.imu_accel = 0.2;

    const KfState out = kf_update(pred, m, map, params);
    CHECK(out.x(0) == doctest::Approx(500.0).epsilon(1e-9));
    CHECK(out.x(1) == doctest::Approx(8.0));
    CHECK(out.x(2) == doctest::Approx(0.2));
    CHECK(out.P.trace() < pred.P.trace());
}

TEST_CASE("position-free update leaves s untouched for diagonal P") {
    const TrackMap map = straight_map(1000.0);
    KfParams params;
    KfState pred = make_state(500, 8, 0.0);

    MeasurementSet m;
    m.gnss_speed = 9.0;
    m.imu_accel = 0.1;

    const KfState out = kf_update(pred, m, map, params);
    CHECK(out.x(0) == doctest::Approx(500.0).epsilon(1e-12));
    CHECK(out.x(1) > 8.0);
    CHECK(out.x(2) > 0.0);
}

TEST_CASE("innovation gating") {
    const TrackMap map = straight_map(1000.0);
    KfParams params;

    SUBCASE("slipping tachograph channel is dropped") {
        // tacho variance is 4*sigma_speed = 1.0, so the gate sits at
        // 3*sqrt(1.01) = 3.015 m/s of innovation
        KfState pred = make_state(500, 10, 0);
        pred.P = 0.01 * Eigen::Matrix3d::Identity();
        MeasurementSet m;
        m.gnss_speed = 10.0;
        m.tacho_speed = 13.5;
        const KfState out = kf_update(pred, m, map, params);
        CHECK((out.flags & kFlagTachoGated) != 0);
        CHECK(out.x(1) == doctest::Approx(10.0).epsilon(1e-6));
    }
    SUBCASE("all channels rejected returns the prediction") {
        KfState pred = make_state(500, 10, 0);
        pred.P = 0.01 * Eigen::Matrix3d::Identity();
        MeasurementSet m;
        m.gnss_speed = 40.0;
        m.tacho_speed = 40.0;
        const KfState out = kf_update(pred, m, map, params);
        CHECK((out.flags & kFlagAllRejected) != 0);
        CHECK(out.x(1) == doctest::Approx(10.0));
    }
    SUBCASE("off-track position is flagged and skipped") {
        KfState pred = make_state(500, 10, 0);
        MeasurementSet m;
        m.gnss_pos = east_of(map, {0.0, 500.0}, 40.0);
        m.gnss_speed = 10.0;
        const KfState out = kf_update(pred, m, map, params);
        CHECK((out.flags & kFlagPosOffTrack) != 0);
        CHECK(out.x(0) == doctest::Approx(500.0).epsilon(1e-9));
    }
}

TEST_CASE("covariance stays symmetric PSD over 10000 random steps") {
    const TrackMap map = straight_map(5000.0, 101);
    KfParams params;
    KfState st = make_state(100, 10, 0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    double s_true = 100.0;
    for (int k = 0; k < 10000; ++k) {
        st = kf_predict(st, params);
        s_true = std::min(4900.0, s_true + 10.0 * params.dt);
        MeasurementSet m;
        if (uni(rng) < 0.9) m.gnss_pos = east_of(map, {0.0, s_true}, gauss(rng) * 5.0);
        if (uni(rng) < 0.9) m.gnss_speed = std::max(0.0, 10.0 + gauss(rng) * 0.5);
        if (k % 5 == 0) m.tacho_speed = std::max(0.0, 10.0 + gauss(rng) * 0.3);
        if (uni(rng) < 0.9) m.imu_accel = gauss(rng) * 0.3;
        if (!m.empty()) st = kf_update(st, m, map, params);
        REQUIRE(symmetric_psd(st.P));
        REQUIRE(std::isfinite(st.x(0)));
    }
}

TEST_CASE("noise-free measurements converge within 50 steps") {
    const TrackMap map = straight_map(3000.0, 61);
    KfParams params;
    Estimator est(map, params, {0});

    const double a_true = 0.3;
    double s = 50.0, v = 12.0;  // truth follows the constant-acceleration model
    for (int k = 0; k <= 50; ++k) {
        MeasurementSet m;
        m.t = 0.1 * k;
        m.gnss_pos = map.track_to_geo({s, {0}, 0.0});
        m.gnss_speed = v;
        m.imu_accel = a_true;
        if (k % 5 == 0) m.tacho_speed = v;
        est.step(m);
        if (k < 50) {
            s += v * 0.1 + 0.5 * a_true * 0.01;
            v += a_true * 0.1;
        }
    }
    REQUIRE(est.initialized());
    const auto& x = est.state().x;
    CHECK(std::abs(x(0) - s) < 0.5);
    CHECK(std::abs(x(1) - v) < 0.1);
    CHECK(std::abs(x(2) - a_true) < 0.05);
}

TEST_CASE("wheel-slip rejection keeps the speed estimate within 0.5 m/s") {
    const TrackMap map = straight_map(3000.0, 61);
    KfParams params;
    Estimator est(map, params, {0});

    std::mt19937_64 rng(1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double v_true = 10.0;
    double s = 10.0;
    double worst = 0.0;
    for (int k = 0; k <= 600; ++k) {
        MeasurementSet m;
        m.t = 0.1 * k;
        m.gnss_pos = east_of(map, {0.0, s}, gauss(rng) * 5.0);
        m.gnss_speed = std::max(0.0, v_true + gauss(rng) * 0.5);
        m.imu_accel = gauss(rng) * 0.3;
        if (k % 5 == 0) {
            double tacho = v_true + gauss(rng) * 0.3;
            // 10 consecutive tachograph samples with wheel slip
            if (k >= 200 && k < 250) tacho += 3.0;
            m.tacho_speed = std::max(0.0, tacho);
        }
        est.step(m);
        if (k > 50) worst = std::max(worst, std::abs(est.state().x(1) - v_true));
        s += v_true * 0.1;
    }
    CHECK(worst < 0.5);
}

TEST_CASE("branch selection from recent GNSS fixes") {
    const TrackMap map = junction_map(20.0);

    SUBCASE("fixes near branch B dominate") {
        KfState st = make_state(320.0, 8, 0, {0, 1});
        const double rad = 20.0 * kDegToRad;
        std::vector<GeoPoint> fixes;
        for (int i = 1; i <= 5; ++i) {
            const double d = 10.0 * i;
            fixes.push_back(map.frame().to_geo({d * std::sin(rad), 300.0 + d * std::cos(rad)}));
        }
        const KfState out = select_branch(st, fixes, map);
        CHECK(out.path == Path{0, 2});
        CHECK(out.mismatch_count == 0);
    }
    SUBCASE("fixes on the shared trunk tie and keep the hypothesis") {
        KfState st = make_state(290.0, 8, 0, {0, 1});
        std::vector<GeoPoint> fixes;
        for (int i = 0; i < 5; ++i) fixes.push_back(map.frame().to_geo({0.0, 200.0 + 10.0 * i}));
        const KfState out = select_branch(st, fixes, map);
        CHECK(out.path == Path{0, 1});
    }
    SUBCASE("empty history keeps the path and flags blind switch") {
        KfState st = make_state(320.0, 8, 0, {0, 1});
        const KfState out = select_branch(st, {}, map);
        CHECK(out.path == Path{0, 1});
        CHECK((out.flags & kFlagBlindSwitch) != 0);
    }
}

TEST_CASE("mismatch counting and filter reset") {
    const TrackMap map = junction_map(20.0);
    KfParams params;
    const double rad = 20.0 * kDegToRad;
    const auto fix_on_b = [&](double d) {
        return map.frame().to_geo({d * std::sin(rad), 300.0 + d * std::cos(rad)});
    };

    SUBCASE("five consecutive foreign fixes trigger exactly one reset") {
        KfState st = make_state(305.0, 8, 0, {0, 1});
        bool reset = false;
        int resets = 0;
        for (int i = 1; i <= 6 && !reset; ++i) {
            MeasurementSet m;
            m.gnss_pos = fix_on_b(5.0 + 0.8 * i);
            const ResetCheck rc = check_reset(st, m, map, params);
            st = rc.state;
            reset = rc.reset;
            if (rc.reset) ++resets;
            if (!rc.reset) CHECK(st.mismatch_count == i);
        }
        CHECK(resets == 1);
        CHECK(st.path == Path{0, 2});
        CHECK(st.P.isApprox(Eigen::Matrix3d::Identity()));
        CHECK(st.mismatch_count == 0);
    }
    SUBCASE("alternating fixes never accumulate") {
        KfState st = make_state(305.0, 8, 0, {0, 1});
        for (int i = 0; i < 10; ++i) {
            MeasurementSet m;
            m.gnss_pos =
                (i % 2 == 0) ? fix_on_b(8.0) : map.frame().to_geo({0.0, 308.0});  // on branch A
            const ResetCheck rc = check_reset(st, m, map, params);
            CHECK_FALSE(rc.reset);
            st = rc.state;
            CHECK(st.mismatch_count == (i % 2 == 0 ? 1 : 0));
        }
    }
    SUBCASE("agreeing fixes keep the counter at zero") {
        KfState st = make_state(305.0, 8, 0, {0, 1});
        for (int i = 1; i <= 8; ++i) {
            MeasurementSet m;
            m.gnss_pos = map.frame().to_geo({0.0, 300.0 + 2.0 * i});
            const ResetCheck rc = check_reset(st, m, map, params);
            CHECK_FALSE(rc.reset);
            st = rc.state;
            CHECK(st.mismatch_count == 0);
        }
    }
}

TEST_CASE("estimator pipeline corrects a wrong blind branch pick") {
    // the estimator extends its path across the switch before any fix exists
    // beyond it, blindly picking branch A (lowest id); the truth runs down
    // branch B, so the mismatch counter must fire exactly one reset
    const TrackMap map = junction_map(20.0);
    KfParams params;
    params.path_lookahead = 150.0;
    Estimator est(map, params, {0});

    const double rad = 20.0 * kDegToRad;
    const double v = 8.0;
    int divergence_onset_tick = -1;
    int reset_tick = -1;
    double s = 200.0;
    for (int k = 0; k <= 300; ++k) {
        MeasurementSet m;
        m.t = 0.1 * k;
        const double past = s - 300.0;
        m.gnss_pos = (past <= 0.0)
                         ? map.frame().to_geo({0.0, s})
                         : map.frame().to_geo({past * std::sin(rad), 300.0 + past * std::cos(rad)});
        if (past > 0.0 && divergence_onset_tick < 0) divergence_onset_tick = k;
        m.gnss_speed = v;
        m.imu_accel = 0.0;
        est.step(m);
        if (reset_tick < 0 && est.reset_count() == 1) reset_tick = k;
        s += v * 0.1;
    }
    REQUIRE(est.initialized());
    CHECK(est.reset_count() == 1);
    REQUIRE(reset_tick > 0);
    CHECK(reset_tick - divergence_onset_tick <= params.reset_window + 2);
    // post-reset hypothesis matches the measured branch
    const Path& path = est.state().path;
    REQUIRE(path.size() >= 2);
    CHECK(path[1] == 2);
}

TEST_CASE("estimator state stays on the track") {
    const TrackMap map = straight_map(800.0);
    KfParams params;
    Estimator est(map, params, {0});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double s = 700.0;  // close to the end of the track
    for (int k = 0; k <= 200; ++k) {
        MeasurementSet m;
        m.t = 0.1 * k;
        m.gnss_pos = east_of(map, {0.0, std::min(s, 800.0)}, gauss(rng) * 5.0);
        m.gnss_speed = 8.0;
        est.step(m);
        if (est.initialized()) {
            CHECK(est.state().x(0) >= 0.0);
            CHECK(est.state().x(0) <= map.path_length(est.state().path) + 1e-9);
            CHECK_NOTHROW(map.track_to_geo(est.state().track_position()));
        }
        s = std::min(800.0, s + 8.0 * 0.1);
    }
}

TEST_CASE("estimator csv dump format") {
    CHECK(kf_csv_header() == "t,s,v,a,P00,P11,P22,path_head,flags");
    KfState st = make_state(12.5, 3.25, -0.5, {7});
    st.t = 1.5;
    const std::string row = kf_csv_row(st);
    CHECK(row.substr(0, 6) == "1.500,");
    CHECK(row.find(",7,") != std::string::npos);
}
