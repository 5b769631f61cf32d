#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "hristrack/geometry.hpp"

using namespace hristrack;
using geometry::Position3;
using geometry::Velocity3;

namespace {

Position3 random_ue(RandomStream& rng) {
    return {0.5 + 20.0 * rng.uniform(), -10.0 + 20.0 * rng.uniform(), 10.0 * rng.uniform()};
}

}  // namespace

TEST_CASE("UE angles match the two-argument arctangent forms") {
    const Position3 p_H{0.0, 50.0, 5.0};

    CHECK(geometry::angles_from_position({10.0, 0.0, 0.0}, p_H).theta == doctest::Approx(0.0));
    CHECK(geometry::angles_from_position({5.0, 5.0, 0.0}, p_H).theta ==
          doctest::Approx(kPi / 4.0).epsilon(1e-14));

    // azimuth/elevation seen from the HRIS for a UE on the ground plane
    const auto a = geometry::angles_from_position({10.0, 25.0, 0.0}, p_H);
    CHECK(a.phi == doctest::Approx(-1.1902899496825317).epsilon(1e-14));
    CHECK(a.psi == doctest::Approx(-0.18360401027891857).epsilon(1e-14));
}

TEST_CASE("BS-HRIS link angles") {
    const auto a = geometry::bs_hris_angles({0.0, 50.0, 5.0});
    CHECK(a.theta == doctest::Approx(kPi / 2.0).epsilon(1e-14));
    CHECK(a.psi == doctest::Approx(kPi / 2.0).epsilon(1e-14));  // model equates the two
    CHECK(a.phi == doctest::Approx(0.09966865249116202).epsilon(1e-14));

    const auto on_x = geometry::bs_hris_angles({1.0, 0.0, 0.0});
    CHECK(on_x.theta == doctest::Approx(0.0));
    CHECK(on_x.phi == doctest::Approx(0.0));
    CHECK(geometry::bs_hris_angles({1.0, 1.0, 0.0}).theta ==
          doctest::Approx(kPi / 4.0).epsilon(1e-14));
}

TEST_CASE("angles are scale invariant about the origin (theta)") {
    RandomStream rng(11);
    const Position3 p_H{0.0, 50.0, 5.0};
    for (int i = 0; i < 50; ++i) {
        const Position3 p = random_ue(rng);
        const double alpha = 0.1 + 5.0 * rng.uniform();
        const Position3 ps{alpha * p.x, alpha * p.y, alpha * p.z};
        CHECK(geometry::angles_from_position(ps, p_H).theta ==
              doctest::Approx(geometry::angles_from_position(p, p_H).theta).epsilon(1e-12));
    }
}

TEST_CASE("link delays: direct norms and additive clock bias") {
    const Position3 p_u{3.0, 4.0, 0.0};
    const Position3 p_H{0.0, 50.0, 5.0};

    const auto d = geometry::link_delays(p_u, p_H);
    CHECK(d.tau_dl == doctest::Approx(1.6678204759907603e-08).epsilon(1e-14));
    CHECK(d.tau_h == doctest::Approx(1.7134551289305122e-07).epsilon(1e-14));
    CHECK(d.tau_br == doctest::Approx(1.676138834206578e-07).epsilon(1e-14));

    const auto biased = geometry::link_delays(p_u, p_H, 1e-6);
    CHECK(biased.tau_dl - d.tau_dl == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(biased.tau_h == d.tau_h);  // bias is DL-only
    CHECK(biased.tau_br == d.tau_br);
}

TEST_CASE("delay triangle inequality on random geometries") {
    RandomStream rng(12);
    const Position3 p_H{0.0, 50.0, 5.0};
    for (int i = 0; i < 100; ++i) {
        const auto d = geometry::link_delays(random_ue(rng), p_H);
        CHECK(d.tau_h >= d.tau_dl);
        CHECK(d.tau_h >= d.tau_br);
        CHECK(d.tau_h * kSpeedOfLight >= geometry::norm(p_H) - 1e-9);
    }
}

TEST_CASE("path gains: free-space magnitudes and reflection phase") {
    const double lambda = 0.015;
    const Position3 p_H{0.0, 50.0, 5.0};

    // unit BS-UE distance
    const auto g1 = geometry::path_gains({1.0, 0.0, 0.0}, p_H, lambda, 0.0);
    CHECK(g1.a_dl.real() == doctest::Approx(lambda / (4.0 * kPi)).epsilon(1e-14));
    CHECK(g1.a_dl.imag() == 0.0);

    // unit distances on both bistatic legs
    const auto g2 = geometry::path_gains({1.0, 0.0, 0.0}, {1.0, 1.0, 0.0}, lambda, 0.0);
    CHECK(g2.a_h.real() ==
          doctest::Approx(lambda * lambda / (4.0 * kPi * kPi)).epsilon(1e-14));
    CHECK(g2.a_h.imag() == doctest::Approx(0.0));

    const auto g3 = geometry::path_gains({1.0, 0.0, 0.0}, {1.0, 1.0, 0.0}, lambda, kPi);
    CHECK(g3.a_h.real() == doctest::Approx(-std::abs(g2.a_h)).epsilon(1e-12));
    CHECK(std::abs(g3.a_h) == doctest::Approx(std::abs(g2.a_h)).epsilon(1e-14));

    // |a_h| = lambda^2 / (4 pi^2 |p_u|^2 |p_H - p_u|^2) and is decreasing in
    // either distance
    const Position3 p_u{3.0, 4.0, 0.0};
    const auto g = geometry::path_gains(p_u, p_H, lambda, 1.3);
    const double d_bu = geometry::norm(p_u);
    const double d_uh = geometry::distance(p_u, p_H);
    CHECK(std::abs(g.a_h) ==
          doctest::Approx(lambda * lambda /
                          (4.0 * kPi * kPi * d_bu * d_bu * d_uh * d_uh))
              .epsilon(1e-14));
    const auto farther = geometry::path_gains({6.0, 8.0, 0.0}, p_H, lambda, 1.3);
    CHECK(std::abs(farther.a_h) < std::abs(g.a_h));
}

TEST_CASE("doppler: projections, linearity, zero velocity") {
    const Position3 p_H{0.0, 50.0, 5.0};
    const double f_c = 20e9;

    const auto still = geometry::doppler({3.0, 4.0, 0.0}, {0.0, 0.0, 0.0}, p_H, f_c);
    CHECK(still.f_d_dl == 0.0);
    CHECK(still.f_d_bistatic == 0.0);

    // UE on the x-axis moving along +x: u_BS.v = s, u_H.v = -s * x_H-component
    const Position3 p_u{10.0, 0.0, 0.0};
    const Velocity3 v{7.0, 0.0, 0.0};
    const double d_uh = geometry::distance(p_u, p_H);
    const double expected_dl = f_c / kSpeedOfLight * 7.0;
    const double expected_bi =
        f_c / kSpeedOfLight * (7.0 + (p_H.x - p_u.x) / d_uh * 7.0);
    const auto f = geometry::doppler(p_u, v, p_H, f_c);
    CHECK(f.f_d_dl == doctest::Approx(expected_dl).epsilon(1e-14));
    CHECK(f.f_d_bistatic == doctest::Approx(expected_bi).epsilon(1e-14));

    RandomStream rng(13);
    for (int i = 0; i < 50; ++i) {
        const Position3 p = random_ue(rng);
        const Velocity3 w{-5.0 + 10.0 * rng.uniform(), -5.0 + 10.0 * rng.uniform(),
                          -5.0 + 10.0 * rng.uniform()};
        // independent unit-vector oracle
        const double nb = geometry::norm(p);
        const double nh = geometry::distance(p, p_H);
        const double ubs_v = (p.x * w.x + p.y * w.y + p.z * w.z) / nb;
        const double uh_v =
            ((p_H.x - p.x) * w.x + (p_H.y - p.y) * w.y + (p_H.z - p.z) * w.z) / nh;
        const auto got = geometry::doppler(p, w, p_H, f_c);
        CHECK(got.f_d_dl ==
              doctest::Approx(f_c / kSpeedOfLight * ubs_v).epsilon(1e-12));
        CHECK(got.f_d_bistatic ==
              doctest::Approx(f_c / kSpeedOfLight * (ubs_v + uh_v)).epsilon(1e-12));

        // linear in velocity
        const double alpha = -3.0 + 6.0 * rng.uniform();
        const auto scaled =
            geometry::doppler(p, {alpha * w.x, alpha * w.y, alpha * w.z}, p_H, f_c);
        CHECK(scaled.f_d_bistatic ==
              doctest::Approx(alpha * got.f_d_bistatic).epsilon(1e-10));
    }
}

TEST_CASE("degenerate geometries are rejected") {
    const Position3 p_H{0.0, 50.0, 5.0};
    CHECK_THROWS_AS(geometry::angles_from_position({0.0, 0.0, 0.0}, p_H), DegenerateGeometry);
    CHECK_THROWS_AS(geometry::angles_from_position({1e-9, 0.0, 0.0}, p_H), DegenerateGeometry);
    CHECK_THROWS_AS(geometry::angles_from_position(p_H, p_H), DegenerateGeometry);
    CHECK_THROWS_AS(geometry::bs_hris_angles({0.0, 0.0, 0.0}), DegenerateGeometry);
    CHECK_THROWS_AS(geometry::link_delays({0.0, 0.0, 0.0}, p_H), DegenerateGeometry);
    CHECK_THROWS_AS(geometry::path_gains({3.0, 4.0, 0.0}, p_H, -1.0, 0.0), DegenerateGeometry);
    CHECK_THROWS_AS(geometry::doppler(p_H, {1.0, 0.0, 0.0}, p_H, 20e9), DegenerateGeometry);
}
