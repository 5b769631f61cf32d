#pragma once

#include <complex>

#include "hristrack/common.hpp"

namespace hristrack::geometry {

/// Cartesian position [m]. The BS sits at the origin; the HRIS at p_H.
struct Position3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Position3&) const = default;
};

/// Cartesian velocity [m/s].
struct Velocity3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Velocity3&) const = default;
};

/// AoD/AoA triple for one link end [rad].
///   theta: azimuth seen from the BS; phi: azimuth seen from the HRIS;
///   psi: elevation seen from the HRIS.
struct AngleSet {
    double theta = 0.0;
    double psi = 0.0;
    double phi = 0.0;
};

/// Propagation delays [s].
struct LinkDelays {
    double tau_dl = 0.0;  ///< BS->UE including the UE clock bias
    double tau_h = 0.0;   ///< bistatic BS->UE->HRIS
    double tau_br = 0.0;  ///< BS->HRIS
};

/// Complex path gains. a_dl and a_br are real positive by construction but
/// carried as complex; a_h includes the UE reflection phase omega.
struct PathGains {
    std::complex<double> a_dl{0.0, 0.0};
    std::complex<double> a_br{0.0, 0.0};
    std::complex<double> a_h{0.0, 0.0};
    double omega = 0.0;  ///< UE reflection phase [rad]
};

/// Doppler shifts [Hz] of the two observation paths.
struct DopplerShift {
    double f_d_bistatic = 0.0;  ///< BS->UE->HRIS
    double f_d_dl = 0.0;        ///< BS->UE
};

double norm(const Position3& p);
double distance(const Position3& a, const Position3& b);

/// Azimuth/elevation of the UE as seen from the BS (theta) and the HRIS
/// (phi azimuth, psi elevation). Throws DegenerateGeometry when p_u is
/// within 1e-6 m of the origin or of p_H.
AngleSet angles_from_position(const Position3& p_u, const Position3& p_H);

/// BS--HRIS link angles; the model equates the departure azimuth and the
/// arrival elevation (theta_BR = psi_BR). Throws DegenerateGeometry when
/// ||p_H|| < 1e-6 m.
AngleSet bs_hris_angles(const Position3& p_H);

/// Propagation delays of the three links; clock_bias adds to the downlink
/// delay only.
LinkDelays link_delays(const Position3& p_u, const Position3& p_H, double clock_bias = 0.0);

/// Free-space gains of the three links at wavelength lambda, with the UE
/// reflection phase omega folded into the bistatic gain.
PathGains path_gains(const Position3& p_u, const Position3& p_H, double lambda, double omega);

/// Doppler shifts from the UE velocity projected on the BS->UE and UE->HRIS
/// unit directions.
DopplerShift doppler(const Position3& p_u, const Velocity3& v_u, const Position3& p_H, double f_c);

}  // namespace hristrack::geometry
