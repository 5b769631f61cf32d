#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "hristrack/beamform.hpp"
#include "hristrack/channel.hpp"

using namespace hristrack;
using beamform::Combiner;
using beamform::Precoder;
using beamform::QosSpec;
using beamform::Reflection;
using channel::ArraySizes;
using channel::SubcarrierGrid;
using channel::UeChannelParams;
using geometry::Position3;

namespace {

const Position3 kHris{0.0, 12.0, 3.0};
constexpr double kSigma2 = 1e-11;

struct Scene {
    SubcarrierGrid grid;
    ArraySizes sizes;
    channel::BsHrisParams bh;
    std::vector<UeChannelParams> ues;
    channel::ChannelSet channels;
};

/// Short-range scene at 3 GHz so the aggregate-SINR targets used in these
/// tests are comfortably reachable within the power budget.
Scene make_scene(int U, int K, const ArraySizes& sizes, unsigned seed) {
    RandomStream rng(seed, "scene");
    Scene s;
    s.grid = {3e9, 120e3, K};
    s.sizes = sizes;
    s.bh = channel::make_bs_hris_params(kHris, s.grid.f_c);
    for (int u = 0; u < U; ++u) {
        const Position3 p{1.0 + 5.0 * rng.uniform(), 2.0 + 8.0 * rng.uniform(),
                          0.5 + 2.0 * rng.uniform()};
        const geometry::Velocity3 v{0.5 + rng.uniform(), 0.5 + rng.uniform(),
                                    0.2 + 0.5 * rng.uniform()};
        s.ues.push_back(
            channel::make_ue_params(p, v, kHris, s.grid.f_c, 2.0 * kPi * rng.uniform()));
    }
    s.channels = channel::assemble_channels(s.ues, s.bh, s.grid, s.sizes);
    return s;
}

arma::cx_mat random_precoder_matrix(RandomStream& rng, int n_t, int u, double scale) {
    arma::cx_mat f(n_t, u);
    for (arma::uword i = 0; i < f.n_elem; ++i) {
        f(i) = rng.cgaussian(scale);
    }
    return f;
}

double min_eigenvalue(const arma::cx_mat& m) {
    return arma::eig_sym(arma::cx_mat(0.5 * (m + m.t()))).min();
}

}  // namespace

TEST_CASE("combiner assembly follows the per-chain block structure") {
    const ArraySizes sizes{4, 3, 2};  // N_H = 6
    arma::mat phases(2, 3);
    phases << 0.1 << 0.2 << 0.3 << arma::endr << -1.0 << 2.5 << -0.7 << arma::endr;

    const Combiner c = Combiner::from_phases(phases, sizes);
    REQUIRE(c.W.n_rows == 6);
    REQUIRE(c.W.n_cols == 3);
    for (int l = 0; l < 3; ++l) {
        for (int n = 0; n < 6; ++n) {
            const std::complex<double> w = c.W(n, l);
            if (n / 2 == l) {
                CHECK(std::abs(std::abs(w) - 1.0) < 1e-9);
                CHECK(std::arg(w) == doctest::Approx(phases(n % 2, l)).epsilon(1e-12));
            } else {
                CHECK(std::abs(w) == 0.0);
            }
        }
        const arma::cx_vec chain = c.chain(l, sizes);
        REQUIRE(chain.n_elem == 2);
        CHECK(std::arg(chain(0)) == doctest::Approx(phases(0, l)).epsilon(1e-12));
        CHECK(std::arg(chain(1)) == doctest::Approx(phases(1, l)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(c.chain(3, sizes), IndexOutOfRange);
    CHECK_THROWS_AS(c.chain(-1, sizes), IndexOutOfRange);
    CHECK_THROWS_AS(Combiner::from_phases(arma::mat(3, 3, arma::fill::zeros), sizes),
                    DimensionMismatch);
}

TEST_CASE("reflection coefficients are unit modulus inside the phase box") {
    Reflection r;
    r.upsilon = {0.0, 0.4, -kPi / 2.0, kPi / 2.0};
    const arma::cx_vec phi = r.phi();
    for (arma::uword n = 0; n < phi.n_elem; ++n) {
        CHECK(std::abs(phi(n)) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(std::arg(phi(n)) == doctest::Approx(r.upsilon(n)).epsilon(1e-12));
    }
    r.upsilon = {1.7};
    CHECK_THROWS_AS(r.phi(), ValidationError);
    r.upsilon = {std::nan("")};
    CHECK_THROWS_AS(r.phi(), ValidationError);
}

TEST_CASE("qos validation rejects unusable thresholds") {
    QosSpec qos;
    qos.gamma = {2.0, 3.0};
    qos.p_max = 1.0;
    CHECK_NOTHROW(qos.validate(2));
    CHECK_THROWS_AS(qos.validate(3), DimensionMismatch);
    qos.gamma = {2.0, 0.0};
    CHECK_THROWS_AS(qos.validate(2), ValidationError);
    qos.gamma = {2.0, 3.0};
    qos.p_max = 0.0;
    CHECK_THROWS_AS(qos.validate(2), ValidationError);
    qos.p_max = std::nan("");
    CHECK_THROWS_AS(qos.validate(2), ValidationError);
}

TEST_CASE("precoder power accumulates every subcarrier column") {
    RandomStream rng(3, "pw");
    Precoder p;
    double expect = 0.0;
    for (int k = 0; k < 3; ++k) {
        p.F.push_back(random_precoder_matrix(rng, 4, 2, 0.7));
        expect += arma::accu(arma::square(arma::abs(p.F.back())));
    }
    CHECK(p.power() == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("weight matrices match their factored forms") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(2, 3, sizes, 17);
    RandomStream rng(18, "w");

    const arma::mat ph(2, 2, arma::fill::randu);
    const Combiner comb = Combiner::from_phases(0.5 * ph, sizes);
    Precoder pre;
    for (int k = 0; k < 3; ++k) {
        pre.F.push_back(random_precoder_matrix(rng, 4, 2, 0.3));
    }

    const auto B = beamform::build_b_matrices(s.ues, s.grid, sizes, comb.W);
    const auto D = beamform::build_d_matrices(s.ues, s.grid, sizes, pre);
    REQUIRE(B.size() == 3);
    REQUIRE(D.size() == 3);

    for (int k = 1; k <= 3; ++k) {
        REQUIRE(B[k - 1].size() == 8);  // 4 parameter kinds x 2 UEs
        REQUIRE(D[k - 1].size() == 8);
        for (int i = 0; i < 8; ++i) {
            const arma::cx_mat M = fim::channel_derivative(s.ues, s.grid, sizes, k, i).matrix();
            const arma::cx_mat b_ref = M.t() * comb.W * comb.W.t() * M;
            const arma::cx_mat d_ref = M * pre.F[k - 1] * pre.F[k - 1].t() * M.t();
            CAPTURE(k);
            CAPTURE(i);
            const double b_scale = std::max(1e-300, arma::abs(b_ref).max());
            const double d_scale = std::max(1e-300, arma::abs(d_ref).max());
            CHECK(arma::abs(B[k - 1][i] - b_ref).max() / b_scale < 1e-10);
            CHECK(arma::abs(D[k - 1][i] - d_ref).max() / d_scale < 1e-10);
            // Hermitian PSD by construction
            CHECK(arma::abs(B[k - 1][i] - B[k - 1][i].t()).max() <= 1e-12 * b_scale);
            CHECK(min_eigenvalue(B[k - 1][i]) >= -1e-9 * b_scale);
            CHECK(min_eigenvalue(D[k - 1][i]) >= -1e-9 * d_scale);
        }
    }

    // A silent aperture contributes no sensing information.
    const auto B0 = beamform::build_b_matrices(
        s.ues, s.grid, sizes, arma::cx_mat(4, 2, arma::fill::zeros));
    for (const auto& row : B0) {
        for (const auto& m : row) {
            CHECK(arma::abs(m).max() == 0.0);
        }
    }

    CHECK_THROWS_AS(
        beamform::build_b_matrices(s.ues, s.grid, sizes, arma::cx_mat(3, 2, arma::fill::zeros)),
        DimensionMismatch);
    Precoder bad;
    bad.F = {pre.F[0]};
    CHECK_THROWS_AS(beamform::build_d_matrices(s.ues, s.grid, sizes, bad), DimensionMismatch);
}

TEST_CASE("communication weights are rank-one downlink outer products") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(2, 3, sizes, 23);
    Reflection r;
    r.upsilon = arma::vec(4, arma::fill::value(0.2));
    const double rho = 0.4;

    const auto C = beamform::build_c_matrices(s.channels, r.phi(), rho);
    const auto h_dir = channel::effective_dl_channel(s.channels, r.phi(), rho);
    REQUIRE(C.size() == 3);
    for (size_t k = 0; k < 3; ++k) {
        REQUIRE(C[k].size() == 2);
        for (int u = 0; u < 2; ++u) {
            const arma::cx_rowvec h = h_dir[k].row(u);
            const double n2 = std::pow(arma::norm(h), 2);
            CHECK(std::real(arma::trace(C[k][u])) == doctest::Approx(n2).epsilon(1e-12));
            const arma::vec ev = arma::eig_sym(C[k][u]);
            CHECK(ev.max() == doctest::Approx(n2).epsilon(1e-10));  // rank one
            CHECK(std::abs(ev.min()) <= 1e-12 * std::max(n2, 1e-300));
            CHECK(arma::abs(arma::cx_mat(C[k][u] - h.t() * h)).max() <=
                  1e-12 * std::max(n2, 1e-300));
        }
    }
}

TEST_CASE("aggregate sinr from weight matrices matches the channel evaluation") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(3, 4, sizes, 29);
    RandomStream rng(30, "f");
    Reflection r;
    r.upsilon = arma::vec(4, arma::fill::value(-0.15));
    const double rho = 0.6;

    Precoder pre;
    for (int k = 0; k < 4; ++k) {
        pre.F.push_back(random_precoder_matrix(rng, 4, 3, 0.2));
    }
    const auto C = beamform::build_c_matrices(s.channels, r.phi(), rho);
    const auto h_dir = channel::effective_dl_channel(s.channels, r.phi(), rho);

    const arma::vec via_c = beamform::qos_sum_sinr(C, pre, kSigma2);
    const arma::vec via_h = channel::sinr_and_rate(h_dir, pre.F, kSigma2).sum_sinr;
    REQUIRE(via_c.n_elem == 3);
    CHECK(arma::abs(via_c - via_h).max() <= 1e-9 * via_h.max());

    Precoder short_pre;
    short_pre.F = {pre.F[0]};
    CHECK_THROWS_AS(beamform::qos_sum_sinr(C, short_pre, kSigma2), DimensionMismatch);
}

TEST_CASE("precoder aligns with the sensing direction when it is the channel") {
    const int n_t = 4;
    const arma::cx_vec a = channel::steer_bs(0.5, n_t);
    std::vector<std::vector<arma::cx_mat>> B = {{arma::cx_mat(a * a.t())}};
    const double g = 1e-3;
    std::vector<std::vector<arma::cx_mat>> C = {{arma::cx_mat(g * g * (a * a.t()))}};
    QosSpec qos;
    qos.gamma = {5.0};
    qos.p_max = 1.0;

    const auto sol = beamform::solve_precoder(B, C, qos, kSigma2);
    REQUIRE(sol.precoder.F.size() == 1);
    const arma::cx_vec f = sol.precoder.F[0].col(0);
    const double align = std::abs(arma::cdot(a, f)) / arma::norm(f);
    CHECK(align >= 0.99);
    CHECK(sol.qos_met);
    CHECK(sol.rank_ratio.min() >= 0.99);  // relaxation is rank one here
}

TEST_CASE("a vanishing qos threshold lets the sensing objective spend the budget") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(2, 2, sizes, 31);
    const Combiner comb =
        Combiner::from_phases(arma::mat(2, 2, arma::fill::zeros), sizes);
    const auto B = beamform::build_b_matrices(s.ues, s.grid, sizes, comb.W);
    const auto C = beamform::build_c_matrices(
        s.channels, arma::cx_vec(4, arma::fill::ones), 0.5);
    QosSpec qos;
    qos.gamma = {1e-8, 1e-8};
    qos.p_max = 0.8;

    beamform::PrecoderOptions opts;
    opts.sdp.tol = 1e-8;
    const auto sol = beamform::solve_precoder(B, C, qos, kSigma2, nullptr, opts);
    CHECK(std::abs(sol.sdp_power - qos.p_max) <= 1e-6 * qos.p_max);
    CHECK(sol.precoder.power() <= sol.sdp_power * (1.0 + 1e-9));
    CHECK(sol.qos_met);
}

TEST_CASE("a zero sensing objective still returns a qos-feasible precoder") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(1, 2, sizes, 37);
    std::vector<std::vector<arma::cx_mat>> B(2);
    for (auto& row : B) {
        row.assign(4, arma::cx_mat(4, 4, arma::fill::zeros));
    }
    const auto C = beamform::build_c_matrices(
        s.channels, arma::cx_vec(4, arma::fill::ones), 0.5);
    QosSpec qos;
    qos.gamma = {10.0};
    qos.p_max = 1.0;

    const auto sol = beamform::solve_precoder(B, C, qos, kSigma2);
    CHECK(sol.qos_met);
    CHECK(beamform::qos_sum_sinr(C, sol.precoder, kSigma2)(0) >=
          qos.gamma(0) * std::pow(10.0, -0.1 / 10.0));
    CHECK(sol.precoder.power() <= qos.p_max * (1.0 + 1e-6));
}

TEST_CASE("unreachable qos thresholds raise the infeasibility error") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(2, 2, sizes, 41);
    const Combiner comb =
        Combiner::from_phases(arma::mat(2, 2, arma::fill::zeros), sizes);
    const auto B = beamform::build_b_matrices(s.ues, s.grid, sizes, comb.W);
    const auto C = beamform::build_c_matrices(
        s.channels, arma::cx_vec(4, arma::fill::ones), 0.5);

    // Cheap necessary condition: none of the budget reaches the threshold.
    QosSpec qos;
    qos.gamma = {1e15, 1e15};
    qos.p_max = 1.0;
    CHECK_THROWS_AS(beamform::solve_precoder(B, C, qos, kSigma2), InfeasibleQoS);

    // Jointly impossible targets: two UEs sharing one channel direction both
    // demanding SINR > 1 cannot hold simultaneously (summing the two QoS
    // rows gives (1-gamma) * nonneg >= 2 gamma sigma2).  The noise floor is
    // kept within a few orders of the link gain so the contradiction sits
    // well above the solver tolerance.
    const arma::cx_vec h(4, arma::fill::value(std::complex<double>(0.1, 0.0)));
    std::vector<std::vector<arma::cx_mat>> C_same = {{arma::cx_mat(h * h.t()),
                                                      arma::cx_mat(h * h.t())}};
    std::vector<std::vector<arma::cx_mat>> B_zero = {
        {arma::cx_mat(4, 4, arma::fill::zeros)}};
    QosSpec joint;
    joint.gamma = {5.0, 5.0};
    joint.p_max = 1.0;
    CHECK_THROWS_AS(beamform::solve_precoder(B_zero, C_same, joint, 1e-3), InfeasibleQoS);
}

TEST_CASE("precoder respects the power budget and the relaxation power") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(2, 3, sizes, 43);
    const Combiner comb =
        Combiner::from_phases(arma::mat(2, 2, arma::fill::value(0.3)), sizes);
    const auto B = beamform::build_b_matrices(s.ues, s.grid, sizes, comb.W);
    const auto C = beamform::build_c_matrices(
        s.channels, arma::cx_vec(4, arma::fill::ones), 0.5);
    QosSpec qos;
    qos.gamma = {5.0, 5.0};
    qos.p_max = 1.0;

    RandomStream rng(44, "opt");
    const auto sol = beamform::solve_precoder(B, C, qos, kSigma2, &rng);
    // the relaxation trace obeys the budget to solver tolerance
    CHECK(sol.sdp_power <= qos.p_max * (1.0 + 1e-5));
    CHECK(sol.precoder.power() <= sol.sdp_power * (1.0 + 1e-9));
    CHECK(sol.precoder.power() <= qos.p_max * (1.0 + 1e-6));
    CHECK(sol.qos_met);
    REQUIRE(sol.rank_ratio.n_elem == 6);
    CHECK(sol.rank_ratio.min() > 0.0);
    CHECK(sol.rank_ratio.max() <= 1.0 + 1e-12);
    CHECK(sol.sum_sinr.n_elem == 2);

    // Warm starting from the previous relaxation reproduces the solve.
    beamform::PrecoderOptions opts;
    opts.warm_start = sol.relaxation;
    const auto again = beamform::solve_precoder(B, C, qos, kSigma2, nullptr, opts);
    CHECK(again.qos_met);
    CHECK(std::abs(again.sdp_objective - sol.sdp_objective) <=
          1e-3 * std::max(1e-300, std::abs(sol.sdp_objective)));
}

TEST_CASE("combiner tie-break and alignment behavior") {
    const ArraySizes sizes{4, 1, 3};  // single chain, N_H = 3

    SUBCASE("uniform diagonal weights give zero phases deterministically") {
        std::vector<std::vector<arma::cx_mat>> D = {
            {arma::cx_mat(3, 3, arma::fill::eye)}};
        const auto sol = beamform::solve_combiner(D, sizes);
        CHECK(!sol.randomized);
        CHECK(arma::abs(sol.combiner.phases).max() == 0.0);
        CHECK(sol.chain_objective(0) == doctest::Approx(3.0).epsilon(1e-6));

        // With an rng the loose relaxation triggers rounding; the objective
        // is constant over the phase torus, so whatever phases the rounding
        // settles on, the achieved value stays at the optimum.
        RandomStream rng(5, "cmb");
        const auto sol2 = beamform::solve_combiner(D, sizes, &rng);
        CHECK(sol2.randomized);
        CHECK(sol2.chain_objective(0) == doctest::Approx(3.0).epsilon(1e-9));
    }

    SUBCASE("rank-one weights align the chain with the factor phases") {
        RandomStream rng(7, "d");
        arma::cx_vec d(3);
        for (arma::uword n = 0; n < 3; ++n) {
            d(n) = std::polar(0.5 + rng.uniform(), 2.0 * kPi * rng.uniform() - kPi);
        }
        std::vector<std::vector<arma::cx_mat>> D = {{arma::cx_mat(d * d.t())}};
        const auto sol = beamform::solve_combiner(D, sizes);

        const double abs_sum = arma::accu(arma::abs(d));
        CHECK(sol.chain_objective(0) ==
              doctest::Approx(abs_sum * abs_sum).epsilon(1e-4));

        const arma::cx_vec w = sol.combiner.chain(0, sizes);
        std::complex<double> align{0.0, 0.0};
        for (arma::uword n = 0; n < 3; ++n) {
            align += w(n) * std::polar(1.0, -std::arg(d(n)));
        }
        CHECK(std::abs(align) >= 3.0 * (1.0 - 1e-6));
    }
}

TEST_CASE("combiner optimum matches a dense phase grid at two elements") {
    const ArraySizes sizes{4, 2, 2};
    for (unsigned seed : {11u, 12u, 13u}) {
        arma::arma_rng::set_seed(seed);
        arma::cx_mat root(2, 2, arma::fill::randn);
        // Two subcarriers and two parameter entries summed inside the solve.
        std::vector<std::vector<arma::cx_mat>> D(2);
        arma::cx_mat d_bar_top(2, 2, arma::fill::zeros);
        arma::cx_mat d_bar_bot(2, 2, arma::fill::zeros);
        for (int k = 0; k < 2; ++k) {
            for (int i = 0; i < 2; ++i) {
                arma::arma_rng::set_seed(1000 * seed + 10 * k + i);
                arma::cx_mat r(4, 4, arma::fill::randn);
                arma::cx_mat full(r * r.t());
                D[k].push_back(full);
                d_bar_top += full.submat(0, 0, 1, 1);
                d_bar_bot += full.submat(2, 2, 3, 3);
            }
        }
        const auto sol = beamform::solve_combiner(D, sizes);

        for (int l = 0; l < 2; ++l) {
            const arma::cx_mat& d_bar = l == 0 ? d_bar_top : d_bar_bot;
            double grid_best = -arma::datum::inf;
            for (int t = 0; t < 10000; ++t) {
                const double alpha = 2.0 * kPi * t / 10000.0;
                arma::cx_vec w = {1.0, std::polar(1.0, alpha)};
                grid_best = std::max(
                    grid_best, std::real(arma::as_scalar(w.t() * d_bar * w)));
            }
            CAPTURE(seed);
            CAPTURE(l);
            CHECK(std::abs(sol.chain_objective(l) - grid_best) <= 1e-3 * grid_best);
            const arma::cx_vec w = sol.combiner.chain(l, sizes);
            const double achieved = std::real(arma::as_scalar(w.t() * d_bar * w));
            CHECK(std::abs(achieved - grid_best) <= 1e-3 * grid_best);
        }
    }
}

TEST_CASE("combiner rejects malformed weight sets") {
    const ArraySizes sizes{4, 2, 2};
    CHECK_THROWS_AS(beamform::solve_combiner({}, sizes), DimensionMismatch);
    std::vector<std::vector<arma::cx_mat>> bad = {{arma::cx_mat(3, 3, arma::fill::eye)}};
    CHECK_THROWS_AS(beamform::solve_combiner(bad, sizes), DimensionMismatch);
}

TEST_CASE("reflection ascent is monotone and reaches the scalar optimum") {
    SUBCASE("monotone objective across every element update") {
        const ArraySizes sizes{4, 2, 3};
        const Scene s = make_scene(2, 3, sizes, 53);
        RandomStream rng(54, "f");
        Precoder pre;
        for (int k = 0; k < 3; ++k) {
            pre.F.push_back(random_precoder_matrix(rng, 4, 2, 0.4));
        }
        const auto sol = beamform::solve_reflection(s.channels, pre, 0.3);
        REQUIRE(sol.objective_trace.size() > 1);
        for (size_t i = 1; i < sol.objective_trace.size(); ++i) {
            CAPTURE(i);
            CHECK(sol.objective_trace[i] >= sol.objective_trace[i - 1] * (1.0 - 1e-9));
        }
        CHECK(arma::abs(sol.reflection.upsilon).max() <= kPi / 2.0 + 1e-12);
    }

    SUBCASE("single-element channels solve the phase-alignment closed form") {
        auto scalar_case = [](double offset) {
            channel::ChannelSet ch;
            ch.grid = {3e9, 120e3, 1};
            ch.sizes = {2, 1, 1};
            ch.U = 1;
            arma::cx_mat h_dl(2, 1, arma::fill::zeros);
            h_dl(0, 0) = std::polar(1.0, offset);
            ch.h_dl = {h_dl};
            arma::cx_mat h_bh(1, 2, arma::fill::zeros);
            h_bh(0, 0) = 1.0;
            ch.H_bh = {h_bh};
            ch.h_hu = {arma::cx_mat(1, 1, arma::fill::ones)};
            ch.H_h = {arma::cx_mat(1, 2, arma::fill::zeros)};
            Precoder pre;
            arma::cx_mat f(2, 1, arma::fill::zeros);
            f(0, 0) = 1.0;
            pre.F = {f};
            return beamform::solve_reflection(ch, pre, 0.0);
        };
        CHECK(std::abs(scalar_case(0.3).reflection.upsilon(0) - 0.3) <= 1e-9);
        CHECK(std::abs(scalar_case(0.0).reflection.upsilon(0)) <= 1e-12);
        // Unconstrained optima outside the box land on the better endpoint.
        CHECK(scalar_case(2.0).reflection.upsilon(0) ==
              doctest::Approx(kPi / 2.0).epsilon(1e-12));
        CHECK(scalar_case(-2.0).reflection.upsilon(0) ==
              doctest::Approx(-kPi / 2.0).epsilon(1e-12));
    }

    SUBCASE("already co-phased channels keep their objective") {
        const ArraySizes sizes{2, 1, 2};
        const Scene s = make_scene(1, 2, sizes, 59);
        RandomStream rng(60, "f");
        Precoder pre;
        for (int k = 0; k < 2; ++k) {
            pre.F.push_back(random_precoder_matrix(rng, 2, 1, 0.4));
        }
        const auto first = beamform::solve_reflection(s.channels, pre, 0.2);
        const arma::vec ups = first.reflection.upsilon;
        const auto second = beamform::solve_reflection(s.channels, pre, 0.2, &ups);
        CHECK(arma::abs(second.reflection.upsilon - ups).max() <= 1e-9);
        CHECK(second.objective_trace.back() >=
              first.objective_trace.back() * (1.0 - 1e-9));
    }

    SUBCASE("input validation") {
        const ArraySizes sizes{2, 1, 2};
        const Scene s = make_scene(1, 2, sizes, 61);
        RandomStream rng(62, "f");
        Precoder pre;
        for (int k = 0; k < 2; ++k) {
            pre.F.push_back(random_precoder_matrix(rng, 2, 1, 0.4));
        }
        CHECK_THROWS_AS(beamform::solve_reflection(s.channels, pre, 1.5), ValidationError);
        const arma::vec short_init(1, arma::fill::zeros);
        CHECK_THROWS_AS(beamform::solve_reflection(s.channels, pre, 0.2, &short_init),
                        DimensionMismatch);
        const arma::vec wild_init(2, arma::fill::value(3.0));
        CHECK_THROWS_AS(beamform::solve_reflection(s.channels, pre, 0.2, &wild_init),
                        ValidationError);
        Precoder short_pre;
        short_pre.F = {pre.F[0]};
        CHECK_THROWS_AS(beamform::solve_reflection(s.channels, short_pre, 0.2),
                        DimensionMismatch);
    }
}

TEST_CASE("alternating design meets qos and reports per-iteration metrics") {
    const ArraySizes sizes{4, 2, 2};
    const Scene s = make_scene(1, 2, sizes, 67);
    QosSpec qos;
    qos.gamma = {5.0};
    qos.p_max = 1.0;

    SUBCASE("single outer iteration plus the final re-solve") {
        RandomStream rng(68, "opt");
        beamform::AltOptSettings st;
        st.max_outer = 1;
        const auto res =
            beamform::alternating_optimize(s.ues, s.channels, 0.5, qos, kSigma2, rng, st);
        CHECK(res.report.iterations == 1);
        CHECK(res.report.surrogate.size() == 2);  // one pass + re-solve
        CHECK(res.report.sum_sinr.size() == 2);
        CHECK(res.report.power.size() == 2);
        CHECK(!res.report.converged);
    }

    SUBCASE("converged run satisfies the constraints at the output") {
        RandomStream rng(69, "opt");
        beamform::AltOptSettings st;
        st.max_outer = 12;
        const auto res =
            beamform::alternating_optimize(s.ues, s.channels, 0.5, qos, kSigma2, rng, st);
        CHECK(res.report.converged);
        CHECK(res.report.qos_met);
        CHECK(res.report.sum_sinr.back()(0) >= qos.gamma(0) * std::pow(10.0, -0.1 / 10.0));
        CHECK(res.precoder.power() <= qos.p_max * (1.0 + 1e-6));
        for (const double s_val : res.report.surrogate) {
            CHECK(std::isfinite(s_val));
            CHECK(s_val > 0.0);
        }
        // all returned hardware settings are unit modulus / in range
        const arma::cx_vec w0 = res.combiner.chain(0, sizes);
        CHECK(arma::abs(arma::abs(w0) - 1.0).max() <= 1e-9);
        CHECK(arma::abs(res.reflection.upsilon).max() <= kPi / 2.0 + 1e-12);
    }

    SUBCASE("fixed seed reproduces the design bitwise") {
        beamform::AltOptSettings st;
        st.max_outer = 4;
        RandomStream r1(70, "opt");
        RandomStream r2(70, "opt");
        const auto a =
            beamform::alternating_optimize(s.ues, s.channels, 0.5, qos, kSigma2, r1, st);
        const auto b =
            beamform::alternating_optimize(s.ues, s.channels, 0.5, qos, kSigma2, r2, st);
        for (size_t k = 0; k < a.precoder.F.size(); ++k) {
            CHECK(arma::approx_equal(a.precoder.F[k], b.precoder.F[k], "absdiff", 0.0));
        }
        CHECK(arma::approx_equal(a.combiner.phases, b.combiner.phases, "absdiff", 0.0));
        CHECK(arma::approx_equal(a.reflection.upsilon, b.reflection.upsilon, "absdiff", 0.0));
    }

    SUBCASE("configuration errors") {
        RandomStream rng(71, "opt");
        beamform::AltOptSettings st;
        st.max_outer = 0;
        CHECK_THROWS_AS(
            beamform::alternating_optimize(s.ues, s.channels, 0.5, qos, kSigma2, rng, st),
            ValidationError);
        st.max_outer = 2;
        st.prior_information = arma::mat(3, 3, arma::fill::eye);
        CHECK_THROWS_AS(
            beamform::alternating_optimize(s.ues, s.channels, 0.5, qos, kSigma2, rng, st),
            DimensionMismatch);
        st.prior_information.reset();
        st.init_upsilon = arma::vec(1, arma::fill::zeros);
        CHECK_THROWS_AS(
            beamform::alternating_optimize(s.ues, s.channels, 0.5, qos, kSigma2, rng, st),
            DimensionMismatch);
        st.init_upsilon.reset();
        CHECK_THROWS_AS(
            beamform::alternating_optimize(s.ues, s.channels, 1.5, qos, kSigma2, rng, st),
            ValidationError);

        QosSpec impossible;
        impossible.gamma = {1e15};
        impossible.p_max = 1.0;
        CHECK_THROWS_AS(beamform::alternating_optimize(s.ues, s.channels, 0.5, impossible,
                                                       kSigma2, rng, st),
                        InfeasibleQoS);
    }
}
