#include "hristrack/geometry.hpp"

#include <cmath>

namespace hristrack::geometry {

namespace {

constexpr double kDegenerateDist = 1e-6;  // [m]

void check_not_degenerate(const Position3& p_u, const Position3& p_H) {
    if (norm(p_u) < kDegenerateDist)
        throw DegenerateGeometry("UE position coincides with the BS (origin)");
    if (distance(p_u, p_H) < kDegenerateDist)
        throw DegenerateGeometry("UE position coincides with the HRIS");
}

}  // namespace

double norm(const Position3& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }

double distance(const Position3& a, const Position3& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

AngleSet angles_from_position(const Position3& p_u, const Position3& p_H) {
    check_not_degenerate(p_u, p_H);
    AngleSet a;
    a.theta = std::atan2(p_u.y, p_u.x);
    a.phi = std::atan2(p_u.y - p_H.y, p_u.x - p_H.x);
    const double r = std::hypot(p_H.x - p_u.x, p_H.y - p_u.y);
    a.psi = std::atan2(p_u.z - p_H.z, r);
    return a;
}

AngleSet bs_hris_angles(const Position3& p_H) {
    if (norm(p_H) < kDegenerateDist)
        throw DegenerateGeometry("HRIS position coincides with the BS (origin)");
    AngleSet a;
    a.theta = std::atan2(p_H.y, p_H.x);
    a.psi = a.theta;  // the model equates the BS->HRIS AoD azimuth and AoA elevation
    a.phi = std::atan2(p_H.z, std::hypot(p_H.x, p_H.y));
    return a;
}

LinkDelays link_delays(const Position3& p_u, const Position3& p_H, double clock_bias) {
    check_not_degenerate(p_u, p_H);
    if (!std::isfinite(clock_bias)) throw DegenerateGeometry("clock bias must be finite");
    LinkDelays d;
    const double d_bu = norm(p_u);
    const double d_uh = distance(p_u, p_H);
    d.tau_dl = d_bu / kSpeedOfLight + clock_bias;
    d.tau_h = (d_bu + d_uh) / kSpeedOfLight;
    d.tau_br = norm(p_H) / kSpeedOfLight;
    return d;
}

PathGains path_gains(const Position3& p_u, const Position3& p_H, double lambda, double omega) {
    check_not_degenerate(p_u, p_H);
    if (!(lambda > 0.0)) throw DegenerateGeometry("wavelength must be positive");
    const double d_bu2 = p_u.x * p_u.x + p_u.y * p_u.y + p_u.z * p_u.z;
    const double d_bh2 = p_H.x * p_H.x + p_H.y * p_H.y + p_H.z * p_H.z;
    const double dx = p_H.x - p_u.x, dy = p_H.y - p_u.y, dz = p_H.z - p_u.z;
    const double d_uh2 = dx * dx + dy * dy + dz * dz;
    PathGains g;
    g.a_dl = lambda / (4.0 * kPi * d_bu2);
    g.a_br = lambda / (4.0 * kPi * d_bh2);
    g.a_h = std::polar(lambda * lambda / (4.0 * kPi * kPi * d_bu2 * d_uh2), omega);
    g.omega = omega;
    return g;
}

DopplerShift doppler(const Position3& p_u, const Velocity3& v_u, const Position3& p_H, double f_c) {
    check_not_degenerate(p_u, p_H);
    const double d_bu = norm(p_u);
    const double d_uh = distance(p_u, p_H);
    // u_BS: BS->UE unit direction; u_H: UE->HRIS unit direction.
    const double ubs_v = (p_u.x * v_u.x + p_u.y * v_u.y + p_u.z * v_u.z) / d_bu;
    const double uh_v =
        ((p_H.x - p_u.x) * v_u.x + (p_H.y - p_u.y) * v_u.y + (p_H.z - p_u.z) * v_u.z) / d_uh;
    DopplerShift f;
    f.f_d_dl = f_c / kSpeedOfLight * ubs_v;
    f.f_d_bistatic = f_c / kSpeedOfLight * (ubs_v + uh_v);
    return f;
}

}  // namespace hristrack::geometry
