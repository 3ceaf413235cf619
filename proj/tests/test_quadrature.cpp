#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cfica/quadrature.hpp"
#include "oracles.hpp"

using namespace cfica;

TEST_CASE("one-dimensional rule integrates normal moments") {
    Eigen::VectorXd x, w;
    gauss_hermite_nodes(20, x, w);
    REQUIRE(x.size() == 20);
    CHECK(w.sum() == Catch::Approx(1.0).margin(1e-13));
    double m2 = 0, m4 = 0, m6 = 0;
    for (int i = 0; i < 20; ++i) {
        m2 += w[i] * x[i] * x[i];
        m4 += w[i] * std::pow(x[i], 4);
        m6 += w[i] * std::pow(x[i], 6);
    }
    CHECK(m2 == Catch::Approx(1.0).margin(1e-12));
    CHECK(m4 == Catch::Approx(3.0).margin(1e-11));
    CHECK(m6 == Catch::Approx(15.0).margin(1e-10));
}

TEST_CASE("tensor grid matches the Gaussian characteristic function") {
    QuadratureGrid grid = gauss_hermite_grid(24, 2);
    REQUIRE(grid.size() == 24 * 24);
    CHECK(grid.weights.sum() == Catch::Approx(1.0).margin(1e-12));
    // int exp(i s.v) dN(0,I) = exp(-||v||^2/2)
    Eigen::Vector2d v(0.7, -1.3);
    std::complex<double> acc(0, 0);
    for (int g = 0; g < grid.size(); ++g)
        acc += grid.weights[g] *
               std::polar(1.0, grid.points.row(g).dot(v));
    CHECK(std::abs(acc - std::exp(-0.5 * v.squaredNorm())) < 1e-10);
}

TEST_CASE("library nodes agree with the Newton-iteration oracle") {
    Eigen::VectorXd x, w;
    gauss_hermite_nodes(40, x, w);
    std::vector<double> xo, wo;
    oracle::gauss_hermite_raw(40, xo, wo);
    for (int i = 0; i < 40; ++i) {
        CHECK(x[i] == Catch::Approx(std::sqrt(2.0) * xo[i]).margin(1e-10));
        CHECK(w[i] == Catch::Approx(wo[i] / std::sqrt(M_PI)).margin(1e-12));
    }
}

TEST_CASE("degenerate request is rejected") {
    CHECK_THROWS_AS(gauss_hermite_grid(0, 2), ConfigError);
}
