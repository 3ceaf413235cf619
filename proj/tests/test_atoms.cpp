#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "cfica/atoms.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cfica;
using Catch::Approx;

TEST_CASE("fast_exp_neg is accurate enough for the tolerance budget") {
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(-detail::kExpCutoff, 0.0);
    double maxrel = 0;
    for (int i = 0; i < 200000; ++i) {
        double x = u(eng);
        double rel = std::abs(detail::fast_exp_neg(x) - std::exp(x)) / std::exp(x);
        maxrel = std::max(maxrel, rel);
    }
    CHECK(maxrel < 1e-9);
    CHECK(detail::fast_exp_neg(0.0) == 1.0);
}

TEST_CASE("gaussian_inner closed forms") {
    ComplexAtomSet u, w;
    u.coef.resize(1);
    u.freq.resize(1, 2);
    w = u;

    u.coef[0] = Complex(1, 0);
    u.freq << 1.4, -0.7;
    CHECK(std::abs(gaussian_inner(u, u) - Complex(1, 0)) < 1e-15);

    u.freq << 1, 0;
    w.coef[0] = Complex(1, 0);
    w.freq << 0, 0;
    CHECK(std::real(gaussian_inner(u, w)) == Approx(std::exp(-0.5)).epsilon(1e-14));
    CHECK(std::real(gaussian_inner(u, w)) == Approx(0.6065).margin(5e-5));
}

TEST_CASE("gaussian_inner agrees with adaptive tensor quadrature") {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    // 20 nodes per axis resolve oscillations up to frequency differences of
    // about 3.6; keep atoms inside the oracle's validity range.
    std::uniform_real_distribution<double> freq(-1.8, 1.8);
    for (int rep = 0; rep < 5; ++rep) {
        ComplexAtomSet u, w;
        int A = 3 + rep, B = 2 + rep;
        u.coef.resize(A);
        u.freq.resize(A, 2);
        w.coef.resize(B);
        w.freq.resize(B, 2);
        for (int k = 0; k < A; ++k) {
            u.coef[k] = Complex(coef(eng), coef(eng));
            u.freq(k, 0) = freq(eng);
            u.freq(k, 1) = freq(eng);
        }
        for (int l = 0; l < B; ++l) {
            w.coef[l] = Complex(coef(eng), coef(eng));
            w.freq(l, 0) = freq(eng);
            w.freq(l, 1) = freq(eng);
        }
        Complex closed = gaussian_inner(u, w);
        Complex quad = oracle::gaussian_integral(2, 20, [&](const Eigen::VectorXd& s) {
            Complex uv(0, 0), wv(0, 0);
            for (int k = 0; k < A; ++k) uv += u.coef[k] * std::polar(1.0, u.freq.row(k).dot(s));
            for (int l = 0; l < B; ++l) wv += w.coef[l] * std::polar(1.0, w.freq.row(l).dot(s));
            return std::conj(uv) * wv;
        });
        CHECK(std::abs(closed - quad) < 1e-8);
    }
}

TEST_CASE("real fast path equals the complex inner product") {
    std::mt19937_64 eng(19);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::uniform_real_distribution<double> freq(-8.0, 8.0);
    MomentAtomSet u, w;
    const int A = 40, B = 37;
    u.coef.resize(A);
    u.freq.resize(A, 2);
    w.coef.resize(B);
    w.freq.resize(B, 2);
    for (int k = 0; k < A; ++k) {
        u.coef[k] = coef(eng);
        u.freq(k, 0) = freq(eng);
        u.freq(k, 1) = freq(eng);
    }
    for (int l = 0; l < B; ++l) {
        w.coef[l] = coef(eng);
        w.freq(l, 0) = freq(eng);
        w.freq(l, 1) = freq(eng);
    }
    ComplexAtomSet uc, wc;
    uc.coef = u.coef.cast<Complex>();
    uc.freq = u.freq;
    wc.coef = w.coef.cast<Complex>();
    wc.freq = w.freq;
    CHECK(gaussian_inner(u, w) ==
          Approx(std::real(gaussian_inner(uc, wc))).epsilon(1e-9).margin(1e-12));
}

TEST_CASE("exhaustive atom expansions average to q_T exactly") {
    MixingSpec spec = testutil::spec_pi4_2pi3();
    SensorPanel panel = testutil::mixed_panel(spec, 5, 7);
    MomentAtoms atoms = build_atoms(panel, spec, 0, 1);

    std::mt19937_64 eng(31);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::vector<Eigen::Vector2d> points{{0.7, -0.3}};
    for (int i = 0; i < 4; ++i) points.emplace_back(u(eng), u(eng));
    for (const auto& s : points) {
        Complex mean(0, 0);
        for (const auto& a : atoms.per_obs) mean += evaluate_atoms(a, s);
        mean /= double(panel.rows());
        CHECK(std::abs(mean - q_level(panel, spec, s)) < 1e-12);
    }

    // Psi^tau(0) = 0: the coefficients telescope.
    for (const auto& a : atoms.per_obs)
        CHECK(std::abs(evaluate_atoms(a, Eigen::Vector2d(0, 0))) < 1e-12);

    // The q expansion with exhaustive tuples reproduces q_level pointwise.
    MomentAtomSet q = build_q_atoms(panel, spec, atoms.q_tuples);
    for (const auto& s : points)
        CHECK(std::abs(evaluate_atoms(q, s) - q_level(panel, spec, s)) < 1e-12);
}

TEST_CASE("subsampled expansions are unbiased for the exhaustive one") {
    MixingSpec spec = testutil::spec_pi4_2pi3();
    SensorPanel panel = testutil::mixed_panel(spec, 5, 99);
    Eigen::Vector2d s(0.6, -0.4);

    MomentAtoms exact = build_atoms(panel, spec, 0, 1);
    Complex target(0, 0);
    for (const auto& a : exact.per_obs) target += evaluate_atoms(a, s);
    target /= double(panel.rows());

    const int seeds = 500;
    std::vector<Complex> draws(seeds);
    for (int sd = 0; sd < seeds; ++sd) {
        MomentAtoms sub = build_atoms(panel, spec, 1, 1000 + sd);
        Complex mean(0, 0);
        for (const auto& a : sub.per_obs) mean += evaluate_atoms(a, s);
        draws[sd] = mean / double(panel.rows());
    }
    Complex mc(0, 0);
    for (auto& d : draws) mc += d;
    mc /= double(seeds);
    double var_re = 0, var_im = 0;
    for (auto& d : draws) {
        var_re += std::pow(std::real(d - mc), 2);
        var_im += std::pow(std::imag(d - mc), 2);
    }
    double se_re = std::sqrt(var_re / seeds / seeds);
    double se_im = std::sqrt(var_im / seeds / seeds);
    CHECK(std::abs(std::real(mc - target)) < 3 * se_re + 1e-12);
    CHECK(std::abs(std::imag(mc - target)) < 3 * se_im + 1e-12);

    // atom counts differ between R = 1 and exhaustive
    CHECK(build_atoms(panel, spec, 1, 5).per_obs[0].size() !=
          exact.per_obs[0].size());
}

TEST_CASE("atom construction is deterministic in the seed") {
    MixingSpec spec = testutil::spec_pi4_2pi3();
    SensorPanel panel = testutil::mixed_panel(spec, 24, 5);
    MomentAtoms a = build_atoms(panel, spec, 7, 42);
    MomentAtoms b = build_atoms(panel, spec, 7, 42);
    REQUIRE(a.per_obs.size() == b.per_obs.size());
    for (std::size_t i = 0; i < a.per_obs.size(); ++i) {
        CHECK(a.per_obs[i].coef == b.per_obs[i].coef);
        CHECK(a.per_obs[i].freq == b.per_obs[i].freq);
    }
    CHECK(a.q_tuples == b.q_tuples);
    MomentAtoms c = build_atoms(panel, spec, 7, 43);
    CHECK(a.q_tuples != c.q_tuples);
}
