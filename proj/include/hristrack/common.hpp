#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hristrack {

/// Speed of light in vacuum [m/s].
inline constexpr double kSpeedOfLight = 299792458.0;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// ---------------------------------------------------------------------------
// Error types. Every module throws one of these; all derive from Error so
// callers can catch the whole family at the CLI boundary.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Geometry too close to a singular configuration (coincident points).
struct DegenerateGeometry : Error {
    using Error::Error;
};

/// Matrix/vector dimensions inconsistent with the declared layout.
struct DimensionMismatch : Error {
    using Error::Error;
};

/// An entry that must lie on the complex unit circle does not.
struct UnitModulusViolation : Error {
    using Error::Error;
};

/// 1-based index outside its declared range.
struct IndexOutOfRange : Error {
    using Error::Error;
};

/// Fisher information matrix not invertible at the working precision.
struct SingularInformation : Error {
    using Error::Error;
};

/// EKF innovation covariance not invertible.
struct SingularInnovation : Error {
    using Error::Error;
};

/// Measurement vector geometrically impossible or unfittable.
struct InconsistentMeasurement : Error {
    using Error::Error;
};

/// QoS constraint set certified (or strongly indicated) infeasible.
struct InfeasibleQoS : Error {
    using Error::Error;
};

/// Scenario configuration violates a documented invariant.
struct ValidationError : Error {
    using Error::Error;
};

/// Malformed configuration file.
struct ParseError : Error {
    using Error::Error;
};

/// Output files could not be written.
struct IoError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic random stream.
//
// All stochastic draws in the project go through this wrapper instead of the
// <random> distribution objects: the distributions' output sequences are
// implementation-defined, while this mapping is pinned, so a (config, seed)
// pair reproduces byte-identical runs on any platform with IEEE doubles.
// Gaussians use Box-Muller without caching the second variate, keeping the
// number of raw draws per call fixed.
// ---------------------------------------------------------------------------

class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Derive an independent substream from (seed, tag); the tag is hashed
    /// with splitmix64 so distinct tags decorrelate even for nearby seeds.
    RandomStream(std::uint64_t seed, std::string_view tag) {
        std::uint64_t h = seed;
        for (char c : tag) h = splitmix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
        engine_.seed(splitmix(h));
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (two raw draws, no cached spare).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        // Guard the log singularity at u1 == 0.
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Circularly-symmetric complex Gaussian with E|x|^2 = variance.
    std::complex<double> cgaussian(double variance) {
        const double s = std::sqrt(variance / 2.0);
        const double re = gaussian();
        const double im = gaussian();
        return {s * re, s * im};
    }

    std::uint64_t raw() { return engine_(); }

  private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace hristrack
